//! Symmetrization of transport plans and Kantorovich potentials under finite
//! groups of weight-preserving permutations.
//!
//! Plans are averaged over the whole group (`(1/|G|) Σ g#π`), which keeps
//! both marginals and, for an invariant cost, the objective. Potentials go
//! through a four-stage pipeline:
//!
//! 1. orbit averages `Φ_j` of the input potentials,
//! 2. c-conjugates `Φ_j^c(x) = min_{t_j = x} [c̃(t) − Σ_{k≠j} Φ_k(t_k)]`,
//! 3. mixes `V_j = (Φ_j^c + (n−1) Φ_j) / n`,
//! 4. the sequential ladder `ψ_1, …, ψ_n`, each the largest function between
//!    `Φ_k` and `Φ_k^c` that stays feasible against `ψ_{<k}` and `V_{>k}`.
//!
//! All potentials here are in min form (`Σ ψ_j ≤ c̃`); Max problems are
//! negated on the way in and out. Whenever exact invariance is claimed,
//! values are computed once per orbit at its smallest index and copied to
//! the rest of the orbit, so orbit-constancy holds bit for bit.

use serde::{Deserialize, Serialize};

use crate::cost::{CostTensor, Sense};
use crate::error::{Error, Result};
use crate::group::{ActionFamily, MarginalMap, OrbitPartition, Permutation, SigmaShift};
use crate::measure::DiscreteMarginal;
use crate::par;
use crate::plan::{feasibility_violation, Plan, Potentials};

/// Largest tolerated cost deviation under an action before refusing to run.
pub const INVARIANCE_TOL: f64 = 1e-9;
/// Largest tolerated constraint violation of input potentials.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Slack allowed in ordering preconditions such as `Φ ≤ Φ^c`.
pub const ORDER_TOL: f64 = 1e-9;
const LADDER_MAX_ITER: usize = 10_000;

/// Intermediate and final potentials of [`symmetrize_dual`], all in min form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetrizationTrace {
    /// Sense of the underlying problem; use [`Self::potentials`] to get `ψ`
    /// back in that sense's convention.
    pub sense: Sense,
    pub phi: Potentials,
    pub phi_c: Potentials,
    pub v: Potentials,
    pub psi: Potentials,
    pub kdp_residual: f64,
}

impl SymmetrizationTrace {
    /// Final potentials in the problem's sense convention.
    pub fn potentials(&self) -> Potentials {
        self.psi.to_min_form(self.sense)
    }

    /// Largest violation of `Φ ≤ V ≤ Φ^c` and `Φ ≤ ψ ≤ Φ^c`.
    pub fn sandwich_violation(&self) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..self.phi.arity() {
            for i in 0..self.phi.vectors[j].len() {
                let lo = self.phi.vectors[j][i];
                let hi = self.phi_c.vectors[j][i];
                for mid in [self.v.vectors[j][i], self.psi.vectors[j][i]] {
                    worst = worst.max(lo - mid).max(mid - hi);
                }
            }
        }
        worst
    }
}

/// `(1/|G|) Σ_{g ∈ G} g#π`.
pub fn average_plan(plan: &Plan, family: &ActionFamily, marginals: &[DiscreteMarginal]) -> Result<Plan> {
    family.check_against(marginals)?;
    let scale = 1.0 / family.order() as f64;
    let shape = plan.shape().clone();
    let mut out = Plan::empty(shape.clone());
    let mut t = vec![0; shape.arity()];
    let mut image = vec![0; shape.arity()];
    for g in &family.elements {
        for (flat, mass) in plan.entries() {
            let mut f = flat;
            shape.unflatten_into(&mut f, &mut t);
            g.apply_tuple(&t, &mut image);
            out.add(shape.flatten(&image), mass * scale);
        }
    }
    Ok(out)
}

/// `(1/n) Σ_{i=1}^{n} σ^i#π` for the slot shift `σ`.
pub fn average_plan_sigma(plan: &Plan, marginals: &[DiscreteMarginal]) -> Result<Plan> {
    let sigma = SigmaShift::new(marginals)?;
    let n = sigma.n;
    let shape = plan.shape().clone();
    let mut out = Plan::empty(shape.clone());
    let mut t = vec![0; n];
    for shift in 1..=n {
        for (flat, mass) in plan.entries() {
            let mut f = flat;
            shape.unflatten_into(&mut f, &mut t);
            let image: Vec<usize> = (0..n).map(|k| t[(k + shift) % n]).collect();
            out.add(shape.flatten(&image), mass / n as f64);
        }
    }
    Ok(out)
}

/// Largest `‖g#π − π‖₁` over the group.
pub fn plan_invariance_error(plan: &Plan, family: &ActionFamily) -> f64 {
    family
        .elements
        .iter()
        .map(|g| plan.l1_distance(&plan.pushforward(|t, out| g.apply_tuple(t, out))))
        .fold(0.0, f64::max)
}

/// `‖σ#π − π‖₁`.
pub fn plan_sigma_error(plan: &Plan) -> f64 {
    let n = plan.shape().arity();
    plan.l1_distance(&plan.pushforward(|t, out| {
        for k in 0..n {
            out[k] = t[(k + 1) % n];
        }
    }))
}

fn orbit_mean(values: &[f64], orbits: &OrbitPartition) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    for orbit in &orbits.orbits {
        let mean = orbit.iter().map(|&i| values[i]).sum::<f64>() / orbit.len() as f64;
        for &i in orbit {
            out[i] = mean;
        }
    }
    out
}

/// Replaces each `φ_j` by its mean over the orbits of the group's `j`-th
/// component. Weights are constant on orbits, so `∫ φ_j dμ_j` is unchanged.
pub fn average_potentials(pot: &Potentials, family: &ActionFamily) -> Potentials {
    Potentials::new(
        pot.vectors
            .iter()
            .enumerate()
            .map(|(j, v)| orbit_mean(v, &family.orbits(j)))
            .collect(),
    )
}

fn conjugate_at(psi: &Potentials, j: usize, i: usize, cost: &CostTensor) -> f64 {
    let shape = cost.shape();
    let mut t = vec![0; shape.arity()];
    let mut best = f64::INFINITY;
    for flat in shape.slice(j, i) {
        let c = cost.normalized(flat);
        if c.is_infinite() {
            continue;
        }
        let mut f = flat;
        shape.unflatten_into(&mut f, &mut t);
        let others: f64 = t
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != j)
            .map(|(k, &x)| psi.vectors[k][x])
            .sum();
        best = best.min(c - others);
    }
    best
}

/// Conjugate evaluated at orbit representatives and copied along orbits.
fn conjugate_on_orbits(psi: &Potentials, j: usize, cost: &CostTensor, orbits: &OrbitPartition) -> Result<Vec<f64>> {
    let reps: Vec<usize> = orbits.orbits.iter().map(|o| o[0]).collect();
    let values = par::map_indices(reps.len(), |k| conjugate_at(psi, j, reps[k], cost));
    let mut out = vec![0.0; orbits.rep.len()];
    for (orbit, value) in orbits.orbits.iter().zip(values) {
        if value.is_infinite() {
            return Err(Error::UnboundedConjugate {
                marginal: j,
                index: orbit[0],
            });
        }
        for &i in orbit {
            out[i] = value;
        }
    }
    Ok(out)
}

/// `Φ_j^c(x) = min_{t: t_j = x} [c̃(t) − Σ_{k≠j} Φ_k(t_k)]` for min-form
/// potentials against the sense-normalized cost.
pub fn c_conjugate(pot: &Potentials, j: usize, cost: &CostTensor) -> Result<Vec<f64>> {
    pot.check_shape(cost.shape())?;
    conjugate_on_orbits(pot, j, cost, &OrbitPartition::singletons(cost.shape().dims()[j]))
}

fn order_violation(lo: &Potentials, hi: &Potentials) -> f64 {
    lo.vectors
        .iter()
        .zip(&hi.vectors)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y))
        .fold(0.0, f64::max)
}

/// `V_j = (Φ_j^c + (n−1) Φ_j) / n`.
pub fn mix_v(phi: &Potentials, phi_c: &Potentials) -> Result<Potentials> {
    let violation = order_violation(phi, phi_c);
    if violation > ORDER_TOL {
        return Err(Error::OrderViolated { violation });
    }
    let n = phi.arity() as f64;
    Ok(Potentials::new(
        phi.vectors
            .iter()
            .zip(&phi_c.vectors)
            .map(|(p, pc)| p.iter().zip(pc).map(|(a, c)| (c + (n - 1.0) * a) / n).collect())
            .collect(),
    ))
}

/// Largest `|ψ_j(x) − (c-conjugate of ψ_{≠j})(x)|`: zero exactly at a fixed
/// point of the conjugation.
pub fn kdp_residual(psi: &Potentials, cost: &CostTensor) -> f64 {
    (0..psi.arity())
        .map(|j| {
            let dims = cost.shape().dims()[j];
            par::map_indices(dims, |i| (psi.vectors[j][i] - conjugate_at(psi, j, i, cost)).abs())
                .into_iter()
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Sequential ladder: `ψ_k = min(Φ_k^c, conjugate of (ψ_{<k}, V_{>k}))`,
/// evaluated per orbit.
fn ladder(
    phi_c: &Potentials,
    v: &Potentials,
    cost: &CostTensor,
    orbits: &[OrbitPartition],
) -> Result<Potentials> {
    let mut current = v.clone();
    for (k, orbit) in orbits.iter().enumerate().take(current.arity()) {
        let raised = conjugate_on_orbits(&current, k, cost, orbit)?;
        current.vectors[k] = raised
            .iter()
            .zip(&phi_c.vectors[k])
            .map(|(r, c)| r.min(*c))
            .collect();
    }
    Ok(current)
}

/// Raises `V` to the maximal feasible potentials below `Φ^c`, one marginal at
/// a time in order `1, …, n`. Returns `ψ` and its kdp residual.
pub fn tighten_to_maximal(
    phi: &Potentials,
    phi_c: &Potentials,
    v: &Potentials,
    cost: &CostTensor,
) -> Result<(Potentials, f64)> {
    let violation = order_violation(phi, v).max(order_violation(v, phi_c));
    if violation > ORDER_TOL {
        return Err(Error::OrderViolated { violation });
    }
    let singles: Vec<OrbitPartition> = cost.shape().dims().iter().map(|&d| OrbitPartition::singletons(d)).collect();
    let psi = ladder(phi_c, v, cost, &singles)?;
    let residual = kdp_residual(&psi, cost);
    Ok((psi, residual))
}

fn check_generators_invariant(family: &ActionFamily, cost: &CostTensor) -> Result<()> {
    for g in &family.generators {
        let deviation = cost.deviation_under_perms(&g.perm_slices());
        if deviation > INVARIANCE_TOL {
            return Err(Error::CostNotInvariant { deviation });
        }
    }
    Ok(())
}

fn check_feasible(psi: &Potentials, cost: &CostTensor) -> Result<()> {
    let violation = feasibility_violation(psi, cost);
    if violation > FEASIBILITY_TOL {
        return Err(Error::InfeasibleInput { violation });
    }
    Ok(())
}

/// Full dual pipeline: orbit average, conjugate, mix, ladder.
///
/// `pot` is in the sense convention of `cost`. Refuses to run when the cost
/// is not invariant under every generator of `family`.
pub fn symmetrize_dual(
    pot: &Potentials,
    family: &ActionFamily,
    marginals: &[DiscreteMarginal],
    cost: &CostTensor,
) -> Result<SymmetrizationTrace> {
    pot.check_shape(cost.shape())?;
    family.check_against(marginals)?;
    check_generators_invariant(family, cost)?;
    let input = pot.to_min_form(cost.sense());
    check_feasible(&input, cost)?;

    let orbits: Vec<OrbitPartition> = (0..input.arity()).map(|j| family.orbits(j)).collect();
    let phi = average_potentials(&input, family);
    let phi_c = Potentials::new(
        (0..phi.arity())
            .map(|j| conjugate_on_orbits(&phi, j, cost, &orbits[j]))
            .collect::<Result<_>>()?,
    );
    let v = mix_v(&phi, &phi_c)?;
    let psi = ladder(&phi_c, &v, cost, &orbits)?;
    let kdp_residual = kdp_residual(&psi, cost);
    Ok(SymmetrizationTrace {
        sense: cost.sense(),
        phi,
        phi_c,
        v,
        psi,
        kdp_residual,
    })
}

fn require_identical(marginals: &[DiscreteMarginal]) -> Result<()> {
    SigmaShift::new(marginals).map(|_| ())
}

/// Tuple of `w, w∘R, …, w∘R^{n−1}`.
fn composed_tuple(w: &[f64], powers: &[Permutation]) -> Potentials {
    Potentials::new(
        powers
            .iter()
            .map(|p| (0..w.len()).map(|x| w[p.apply(x)]).collect())
            .collect(),
    )
}

/// Largest `w` with `Φ ≤ w ≤ Φ^c` and `Σ_i w(R^{i−1} x_i) ≤ c̃`, found by
/// iterating `w ← (w̄ + (n−1) w)/n` from `V`, where `w̄` is the conjugate of
/// `(w∘R, …, w∘R^{n−1})` in the first slot. Each step stays feasible and
/// shrinks `w̄ − w` by at least the factor `(n−1)/n`.
fn single_potential_ladder(
    v: &[f64],
    phi_c: &[f64],
    powers: &[Permutation],
    cost: &CostTensor,
    orbits: &OrbitPartition,
) -> Result<Vec<f64>> {
    let n = powers.len() as f64;
    let scale = v.iter().chain(phi_c).fold(1.0f64, |a, x| a.max(x.abs()));
    let mut w = v.to_vec();
    for _ in 0..LADDER_MAX_ITER {
        let tuple = composed_tuple(&w, powers);
        let bar = conjugate_on_orbits(&tuple, 0, cost, orbits)?;
        let gap = bar.iter().zip(&w).map(|(b, x)| b - x).fold(0.0, f64::max);
        if gap <= 1e-14 * scale {
            return Ok(w);
        }
        for ((x, b), c) in w.iter_mut().zip(&bar).zip(phi_c) {
            *x = ((b + (n - 1.0) * *x) / n).min(*c);
        }
    }
    Ok(w)
}

/// Potentials of the form `(ψ, ψ∘R, …, ψ∘R^{n−1})` for a map `R` of period `n`.
///
/// Requires all marginals on one support with `μ_j = (R^{n+1−j})#μ_1` and
/// `c(x_1, …, x_n) = c(R x_2, …, R x_n, R x_1)`. The dual value never drops.
pub fn cyclic_construction(
    pot: &Potentials,
    r: &MarginalMap,
    marginals: &[DiscreteMarginal],
    cost: &CostTensor,
) -> Result<Potentials> {
    pot.check_shape(cost.shape())?;
    let n = marginals.len();
    let first = &marginals[0];
    if marginals.iter().any(|m| m.points != first.points) {
        return Err(Error::HypothesisViolated("marginals must share one support".into()));
    }
    if r.perm.len() != first.len() {
        return Err(Error::DimensionMismatch("map does not act on the shared support".into()));
    }
    let period = r.perm.period();
    if !n.is_multiple_of(period) {
        return Err(Error::PeriodMismatch {
            expected: n,
            found: period,
        });
    }
    let powers: Vec<Permutation> = (0..n).map(|k| r.perm.pow(k)).collect();
    // μ_j = (R^{n+1−j})#μ_1 with 1-based j, i.e. R^{n−j} for 0-based j
    for (j, m) in marginals.iter().enumerate() {
        let push = &powers[(n - j) % n];
        if (0..first.len()).any(|i| m.weights[push.apply(i)] != first.weights[i]) {
            return Err(Error::HypothesisViolated(format!(
                "marginal {j} is not the pushforward of marginal 0"
            )));
        }
    }
    let deviation = cost.deviation_under(|t, out| {
        for k in 0..n {
            out[k] = r.perm.apply(t[(k + 1) % n]);
        }
    });
    if deviation > INVARIANCE_TOL {
        return Err(Error::HypothesisViolated(format!(
            "cost is not invariant under σ∘(R, …, R) (deviation {deviation:e})"
        )));
    }
    let input = pot.to_min_form(cost.sense());
    check_feasible(&input, cost)?;

    // Φ(x) = (1/n) Σ_{k=1}^n φ_k(R^{n−k} x), Φ_i = Φ∘R^i
    let m = first.len();
    let phi: Vec<f64> = (0..m)
        .map(|x| {
            (0..n)
                .map(|k| input.vectors[k][powers[(n - 1 - k) % n].apply(x)])
                .sum::<f64>()
                / n as f64
        })
        .collect();
    let phi1: Vec<f64> = (0..m).map(|x| phi[r.perm.apply(x)]).collect();
    let singles = OrbitPartition::singletons(m);
    let phi1_c = conjugate_on_orbits(&composed_tuple(&phi1, &powers), 0, cost, &singles)?;
    let violation = phi1.iter().zip(&phi1_c).map(|(a, b)| a - b).fold(0.0, f64::max);
    if violation > ORDER_TOL {
        return Err(Error::OrderViolated { violation });
    }
    let v: Vec<f64> = phi1_c
        .iter()
        .zip(&phi1)
        .map(|(c, p)| (c + (n as f64 - 1.0) * p) / n as f64)
        .collect();
    let w = single_potential_ladder(&v, &phi1_c, &powers, cost, &singles)?;
    Ok(composed_tuple(&w, &powers).to_min_form(cost.sense()))
}

/// One potential shared by all marginals and constant on the joint orbits of
/// pairwise commuting `generators`.
///
/// Requires identical marginals, a σ-invariant cost, and a cost invariant
/// under the simultaneous action of every generator.
pub fn commuting_family_symmetrize(
    pot: &Potentials,
    generators: &[Permutation],
    marginals: &[DiscreteMarginal],
    cost: &CostTensor,
) -> Result<Potentials> {
    pot.check_shape(cost.shape())?;
    require_identical(marginals)?;
    let n = marginals.len();
    let m = marginals[0].len();
    for g in generators {
        MarginalMap::new(g.clone(), 0, &marginals[0])?;
    }
    for (i, a) in generators.iter().enumerate() {
        if generators[i + 1..].iter().any(|b| a.compose(b) != b.compose(a)) {
            return Err(Error::NotCommuting);
        }
    }
    let sigma_dev = cost.deviation_under(|t, out| {
        for k in 0..n {
            out[k] = t[(k + 1) % n];
        }
    });
    if sigma_dev > INVARIANCE_TOL {
        return Err(Error::CostNotInvariant { deviation: sigma_dev });
    }
    for g in generators {
        let perms: Vec<&[usize]> = vec![g.as_slice(); n];
        let deviation = cost.deviation_under_perms(&perms);
        if deviation > INVARIANCE_TOL {
            return Err(Error::CostNotInvariant { deviation });
        }
    }
    let input = pot.to_min_form(cost.sense());
    check_feasible(&input, cost)?;

    // equalize through the cyclic construction with R = id
    let identity = MarginalMap {
        perm: Permutation::identity(m),
        marginal: 0,
    };
    let equal = cyclic_construction(&input.to_min_form(cost.sense()), &identity, marginals, cost)?
        .to_min_form(cost.sense());
    let mut phi = equal.vectors[0].clone();

    // average under R_1, then R_2, …
    for g in generators {
        phi = orbit_mean(&phi, &OrbitPartition::generated_by(m, [g]));
    }
    let joint = OrbitPartition::generated_by(m, generators);
    joint.replicate(&mut phi);

    let powers = vec![Permutation::identity(m); n];
    let phi_c = conjugate_on_orbits(&composed_tuple(&phi, &powers), 0, cost, &joint)?;
    let violation = phi.iter().zip(&phi_c).map(|(a, b)| a - b).fold(0.0, f64::max);
    if violation > ORDER_TOL {
        return Err(Error::OrderViolated { violation });
    }
    let v: Vec<f64> = phi_c
        .iter()
        .zip(&phi)
        .map(|(c, p)| (c + (n as f64 - 1.0) * p) / n as f64)
        .collect();
    let w = single_potential_ladder(&v, &phi_c, &powers, cost, &joint)?;
    Ok(Potentials::new(vec![w; n]).to_min_form(cost.sense()))
}
