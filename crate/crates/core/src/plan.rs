//! Couplings, dual potentials, and the report shared by both solvers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cost::{CostTensor, Sense};
use crate::error::{Error, Result};
use crate::measure::{DiscreteMarginal, ProductIndex, ProductShape};

/// A sparse nonnegative measure on the product space.
#[derive(Clone, Debug, PartialEq)]
pub struct Plan {
    shape: ProductShape,
    entries: BTreeMap<usize, f64>,
}

impl Plan {
    pub fn empty(shape: ProductShape) -> Self {
        Self {
            shape,
            entries: BTreeMap::new(),
        }
    }

    /// Builds a plan from `(tuple, mass)` pairs; repeated tuples accumulate.
    pub fn from_tuples(
        shape: ProductShape,
        tuples: impl IntoIterator<Item = (ProductIndex, f64)>,
    ) -> Result<Self> {
        let mut plan = Self::empty(shape);
        for (t, mass) in tuples {
            if !plan.shape.contains(&t) {
                return Err(Error::DimensionMismatch(format!("tuple {t:?} out of range")));
            }
            if !(mass >= 0.0) || !mass.is_finite() {
                return Err(Error::InvalidConfig(format!("mass {mass} at {t:?}")));
            }
            let flat = plan.shape.flatten(&t);
            plan.add(flat, mass);
        }
        Ok(plan)
    }

    /// Product measure `⊗ μ_j`, every cell populated.
    pub fn product(marginals: &[DiscreteMarginal]) -> Result<Self> {
        let shape = ProductShape::of(marginals)?;
        let mut plan = Self::empty(shape.clone());
        shape.cells(0, shape.size()).for_each_cell(|flat, t| {
            let mass: f64 = t.iter().zip(marginals).map(|(&i, m)| m.weights[i]).product();
            plan.entries.insert(flat, mass);
        });
        Ok(plan)
    }

    pub fn shape(&self) -> &ProductShape {
        &self.shape
    }

    pub fn add(&mut self, flat: usize, mass: f64) {
        if mass != 0.0 {
            *self.entries.entry(flat).or_insert(0.0) += mass;
        }
    }

    pub fn insert(&mut self, flat: usize, mass: f64) {
        self.entries.insert(flat, mass);
    }

    pub fn mass(&self, flat: usize) -> f64 {
        self.entries.get(&flat).copied().unwrap_or(0.0)
    }

    pub fn mass_at(&self, tuple: &[usize]) -> f64 {
        self.mass(self.shape.flatten(tuple))
    }

    /// Stored `(flat, mass)` entries in ascending flat order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries.iter().map(|(&f, &m)| (f, m))
    }

    /// Entries with mass above `threshold`, as tuples.
    pub fn support(&self, threshold: f64) -> Vec<(ProductIndex, f64)> {
        self.entries
            .iter()
            .filter(|(_, &m)| m > threshold)
            .map(|(&f, &m)| (self.shape.unflatten(f), m))
            .collect()
    }

    pub fn support_len(&self, threshold: f64) -> usize {
        self.entries.values().filter(|&&m| m > threshold).count()
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.values().sum()
    }

    /// Drops entries with mass at or below `threshold`.
    pub fn pruned(&self, threshold: f64) -> Self {
        Self {
            shape: self.shape.clone(),
            entries: self
                .entries
                .iter()
                .filter(|(_, &m)| m > threshold)
                .map(|(&f, &m)| (f, m))
                .collect(),
        }
    }

    /// Coordinate marginals of the plan.
    pub fn marginals(&self) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = self.shape.dims().iter().map(|&d| vec![0.0; d]).collect();
        let mut t = vec![0; self.shape.arity()];
        for (&flat, &m) in &self.entries {
            let mut f = flat;
            self.shape.unflatten_into(&mut f, &mut t);
            for (j, &i) in t.iter().enumerate() {
                out[j][i] += m;
            }
        }
        out
    }

    /// Max-norm distance of the plan's marginals from the targets.
    pub fn marginal_residual(&self, marginals: &[DiscreteMarginal]) -> f64 {
        self.marginals()
            .iter()
            .zip(marginals)
            .flat_map(|(got, m)| got.iter().zip(&m.weights).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max)
    }

    /// Largest L1 marginal error over the coordinates.
    pub fn marginal_l1_error(&self, marginals: &[DiscreteMarginal]) -> f64 {
        self.marginals()
            .iter()
            .zip(marginals)
            .map(|(got, m)| got.iter().zip(&m.weights).map(|(a, b)| (a - b).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `I_c(π) = Σ c(t) π(t)` in the cost's original sense. Mass on a
    /// forbidden cell makes the value infinite.
    pub fn cost(&self, cost: &CostTensor) -> f64 {
        self.entries
            .iter()
            .filter(|(_, &m)| m != 0.0)
            .map(|(&f, &m)| cost.get(f) * m)
            .sum()
    }

    /// Pushforward `g#π` under a tuple map.
    pub fn pushforward(&self, map: impl Fn(&[usize], &mut [usize])) -> Self {
        let mut out = Self::empty(self.shape.clone());
        let mut t = vec![0; self.shape.arity()];
        let mut image = vec![0; self.shape.arity()];
        for (&flat, &m) in &self.entries {
            let mut f = flat;
            self.shape.unflatten_into(&mut f, &mut t);
            map(&t, &mut image);
            out.add(self.shape.flatten(&image), m);
        }
        out
    }

    /// `Σ_t |π(t) − ρ(t)|`.
    pub fn l1_distance(&self, other: &Self) -> f64 {
        let mut total = 0.0;
        for (&f, &m) in &self.entries {
            total += (m - other.mass(f)).abs();
        }
        for (&f, &m) in &other.entries {
            if !self.entries.contains_key(&f) {
                total += m.abs();
            }
        }
        total
    }

    pub fn max_abs_difference(&self, other: &Self) -> f64 {
        let keys = self.entries.keys().chain(other.entries.keys());
        keys.map(|&f| (self.mass(f) - other.mass(f)).abs())
            .fold(0.0, f64::max)
    }
}

/// Dual potentials `(φ_1, …, φ_n)`, one vector per marginal support.
///
/// Stored in the convention of the problem's sense: for Min problems
/// `Σ φ_j ≤ c`, for Max problems `Σ φ_j ≥ c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Potentials {
    pub vectors: Vec<Vec<f64>>,
}

impl Potentials {
    pub fn new(vectors: Vec<Vec<f64>>) -> Self {
        Self { vectors }
    }

    pub fn zeros(marginals: &[DiscreteMarginal]) -> Self {
        Self {
            vectors: marginals.iter().map(|m| vec![0.0; m.len()]).collect(),
        }
    }

    pub fn arity(&self) -> usize {
        self.vectors.len()
    }

    pub fn check_shape(&self, shape: &ProductShape) -> Result<()> {
        let ok = self.vectors.len() == shape.arity()
            && self.vectors.iter().zip(shape.dims()).all(|(v, &d)| v.len() == d);
        if ok {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(
                "potentials do not match the marginal supports".into(),
            ))
        }
    }

    /// `Σ_j ∫ φ_j dμ_j`.
    pub fn dual_value(&self, marginals: &[DiscreteMarginal]) -> f64 {
        self.vectors
            .iter()
            .zip(marginals)
            .map(|(v, m)| m.integrate(v))
            .sum()
    }

    /// `Σ_j φ_j(t_j)`.
    #[inline]
    pub fn tuple_sum(&self, t: &[usize]) -> f64 {
        t.iter().zip(&self.vectors).map(|(&i, v)| v[i]).sum()
    }

    /// Multiplies every value by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            vectors: self
                .vectors
                .iter()
                .map(|v| v.iter().map(|x| s * x).collect())
                .collect(),
        }
    }

    /// Converts between the sense convention and min form (self-inverse).
    pub fn to_min_form(&self, sense: Sense) -> Self {
        match sense {
            Sense::Min => self.clone(),
            Sense::Max => self.scaled(-1.0),
        }
    }

    /// Shifts vectors `2..n` to weighted mean zero; vector 1 absorbs the sum.
    pub fn normalized(&self, marginals: &[DiscreteMarginal]) -> Self {
        let mut out = self.clone();
        let mut shift = 0.0;
        for (v, m) in out.vectors.iter_mut().zip(marginals).skip(1) {
            let mean = m.integrate(v);
            for x in v.iter_mut() {
                *x -= mean;
            }
            shift += mean;
        }
        if let Some(first) = out.vectors.first_mut() {
            for x in first.iter_mut() {
                *x += shift;
            }
        }
        out
    }

    pub fn max_abs_difference(&self, other: &Self) -> f64 {
        self.vectors
            .iter()
            .zip(&other.vectors)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// `I_c(π)` in the original sense.
    pub primal_value: f64,
    /// `Σ ∫ φ_j dμ_j` in the original sense.
    pub dual_value: f64,
    /// `|primal_value − dual_value|`.
    pub gap: f64,
    pub solver: String,
    pub iterations: usize,
}

impl SolveReport {
    pub fn new(primal_value: f64, dual_value: f64, solver: &str, iterations: usize) -> Self {
        Self {
            primal_value,
            dual_value,
            gap: (primal_value - dual_value).abs(),
            solver: solver.to_owned(),
            iterations,
        }
    }
}

/// Outcome of [`verify_certificate`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// `|I_c(π) − Σ ∫ φ_j dμ_j|`.
    pub gap: f64,
    /// `max_t (Σ ψ_j(t_j) − c̃(t))₊` over finite cells, min form.
    pub max_feasibility_violation: f64,
    /// `max_{t ∈ supp π} π(t)·(c̃(t) − Σ ψ_j(t_j))`, min form.
    pub max_slackness_violation: f64,
}

/// Checks a primal/dual pair against each other and against the cost.
pub fn verify_certificate(
    plan: &Plan,
    potentials: &Potentials,
    cost: &CostTensor,
    marginals: &[DiscreteMarginal],
) -> Result<Certificate> {
    potentials.check_shape(cost.shape())?;
    if plan.shape() != cost.shape() {
        return Err(Error::DimensionMismatch("plan and cost shapes differ".into()));
    }
    let gap = (plan.cost(cost) - potentials.dual_value(marginals)).abs();
    let psi = potentials.to_min_form(cost.sense());
    let max_feasibility_violation = feasibility_violation(&psi, cost);
    let mut max_slackness_violation = 0.0f64;
    let mut t = vec![0; cost.shape().arity()];
    for (flat, mass) in plan.entries() {
        let mut f = flat;
        cost.shape().unflatten_into(&mut f, &mut t);
        let slack = cost.normalized(flat) - psi.tuple_sum(&t);
        max_slackness_violation = max_slackness_violation.max(mass * slack);
    }
    Ok(Certificate {
        gap,
        max_feasibility_violation,
        max_slackness_violation,
    })
}

/// `max_t (Σ ψ_j(t_j) − c̃(t))₊` over finite cells for min-form potentials.
pub fn feasibility_violation(psi: &Potentials, cost: &CostTensor) -> f64 {
    let shape = cost.shape();
    crate::par::map_blocks(shape.size(), crate::par::BLOCK, |start, end| {
        let mut worst = 0.0f64;
        shape.cells(start, end).for_each_cell(|flat, t| {
            let c = cost.normalized(flat);
            if c.is_finite() {
                worst = worst.max(psi.tuple_sum(t) - c);
            }
        });
        worst
    })
    .into_iter()
    .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{materialize_tensor, CostSpec};

    fn uniform2() -> DiscreteMarginal {
        DiscreteMarginal::uniform("u", vec![vec![0.0], vec![1.0]]).unwrap()
    }

    #[test]
    fn marginals_and_cost() {
        let shape = ProductShape::new(vec![2, 2]).unwrap();
        let plan = Plan::from_tuples(shape, [(vec![0, 0], 0.5), (vec![1, 1], 0.5)]).unwrap();
        let m = [uniform2(), uniform2()];
        assert_eq!(plan.marginal_residual(&m), 0.0);
        let cost = materialize_tensor(&CostSpec::table(vec![1.0, 2.0, 3.0, 4.0], Sense::Min), &m)
            .unwrap();
        assert_eq!(plan.cost(&cost), 2.5);
    }

    #[test]
    fn zero_potentials_certificate() {
        let m = [uniform2(), uniform2()];
        let shape = ProductShape::of(&m).unwrap();
        let plan = Plan::from_tuples(shape, [(vec![0, 1], 0.5), (vec![1, 0], 0.5)]).unwrap();
        let cost = materialize_tensor(&CostSpec::table(vec![1.0, 2.0, 3.0, 4.0], Sense::Min), &m)
            .unwrap();
        let cert = verify_certificate(&plan, &Potentials::zeros(&m), &cost, &m).unwrap();
        assert_eq!(cert.max_feasibility_violation, 0.0);
        assert_eq!(cert.gap, plan.cost(&cost));
    }

    #[test]
    fn normalization_keeps_tuple_sums() {
        let m = [uniform2(), uniform2(), uniform2()];
        let p = Potentials::new(vec![vec![1.0, 2.0], vec![3.0, 5.0], vec![-1.0, 0.0]]);
        let q = p.normalized(&m);
        assert_eq!(m[1].integrate(&q.vectors[1]), 0.0);
        assert_eq!(m[2].integrate(&q.vectors[2]), 0.0);
        for t in [[0, 0, 0], [1, 0, 1], [1, 1, 1]] {
            assert!((p.tuple_sum(&t) - q.tuple_sum(&t)).abs() < 1e-15);
        }
    }

    #[test]
    fn pushforward_moves_mass() {
        let shape = ProductShape::new(vec![2, 2]).unwrap();
        let plan = Plan::from_tuples(shape, [(vec![0, 1], 1.0)]).unwrap();
        let swapped = plan.pushforward(|t, out| {
            out[0] = t[1];
            out[1] = t[0];
        });
        assert_eq!(swapped.mass_at(&[1, 0]), 1.0);
        assert_eq!(plan.l1_distance(&swapped), 2.0);
    }
}
