#![allow(dead_code)]

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mmot::cost::materialize_tensor;
use mmot::group::{generate_group, DEFAULT_GROUP_CAP};
use mmot::lp::{solve_tensor, LpOptions};
use mmot::plan::feasibility_violation;
use mmot::symmetrize::{average_plan, average_potentials, symmetrize_dual};
use mmot::{
    ActionFamily, CostSpec, CostTensor, DiscreteMarginal, Error, OrbitPartition, Permutation, Potentials,
    ProductAction, ProductShape, Sense,
};

/// Smallest mean cost over all permutations: the optimum of the uniform
/// `m × m` assignment problem, by exhaustive search.
pub fn brute_force_assignment(m: usize, cost: impl Fn(usize, usize) -> f64) -> f64 {
    fn go(row: usize, used: &mut [bool], acc: f64, best: &mut f64, cost: &dyn Fn(usize, usize) -> f64) {
        let m = used.len();
        if row == m {
            *best = best.min(acc);
            return;
        }
        for col in 0..m {
            if !used[col] {
                used[col] = true;
                go(row + 1, used, acc + cost(row, col), best, cost);
                used[col] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(0, &mut vec![false; m], 0.0, &mut best, &cost);
    best / m as f64
}

/// Marginals, a group acting on them and a cost invariant under the group.
pub struct SymmetricInstance {
    pub marginals: Vec<DiscreteMarginal>,
    pub generators: Vec<ProductAction>,
    pub family: ActionFamily,
    pub values: Vec<f64>,
    pub sense: Sense,
    pub tensor: CostTensor,
}

impl SymmetricInstance {
    pub fn shape(&self) -> ProductShape {
        self.tensor.shape().clone()
    }

    pub fn with_values(&self, values: Vec<f64>) -> CostTensor {
        materialize_tensor(&CostSpec::table(values, self.sense), &self.marginals).unwrap()
    }
}

/// A random instance whose cost takes one random value per group orbit of
/// index tuples. The group always has at least one non-identity generator.
pub fn symmetric_instance(seed: u64) -> SymmetricInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=3);
    let m = if n == 2 { rng.gen_range(2..=4) } else { rng.gen_range(2..=3) };
    let count = rng.gen_range(1..=2);
    let generators: Vec<ProductAction> = loop {
        let gens: Vec<ProductAction> = (0..count)
            .map(|_| {
                ProductAction::from_perms(
                    (0..n)
                        .map(|_| {
                            let mut p: Vec<usize> = (0..m).collect();
                            p.shuffle(&mut rng);
                            p
                        })
                        .collect(),
                )
                .unwrap()
            })
            .collect();
        if gens.iter().any(|g| !g.is_identity()) {
            break gens;
        }
    };
    let marginals: Vec<DiscreteMarginal> = (0..n)
        .map(|j| {
            let perms: Vec<&Permutation> = generators.iter().map(|g| g.perm(j)).collect();
            let orbits = OrbitPartition::generated_by(m, perms);
            let per_orbit: Vec<f64> = orbits.orbits.iter().map(|_| rng.gen_range(0.2..1.0)).collect();
            let mut weights = vec![0.0; m];
            for (orbit, w) in orbits.orbits.iter().zip(&per_orbit) {
                for &i in orbit {
                    weights[i] = *w;
                }
            }
            let total: f64 = weights.iter().sum();
            let weights = weights.iter().map(|w| w / total).collect();
            DiscreteMarginal::new(format!("mu{j}"), (0..m).map(|i| vec![i as f64]).collect(), weights).unwrap()
        })
        .collect();
    let family = generate_group(&generators, DEFAULT_GROUP_CAP).unwrap();
    let shape = ProductShape::of(&marginals).unwrap();
    let base: Vec<f64> = (0..shape.size()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut image = vec![0; n];
    let values: Vec<f64> = (0..shape.size())
        .map(|flat| {
            let t = shape.unflatten(flat);
            let rep = family
                .elements
                .iter()
                .map(|g| {
                    g.apply_tuple(&t, &mut image);
                    shape.flatten(&image)
                })
                .min()
                .unwrap();
            base[rep]
        })
        .collect();
    let sense = if rng.gen_bool(0.5) { Sense::Min } else { Sense::Max };
    let tensor = materialize_tensor(&CostSpec::table(values.clone(), sense), &marginals).unwrap();
    SymmetricInstance {
        marginals,
        generators,
        family,
        values,
        sense,
        tensor,
    }
}

fn random_potentials(seed: u64, marginals: &[DiscreteMarginal]) -> Potentials {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    Potentials::new(
        marginals
            .iter()
            .map(|m| (0..m.len()).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect(),
    )
}

/// Averaging twice is averaging once, for plans and for potentials.
pub fn averaging_idempotence(seed: u64) -> Result<(), TestCaseError> {
    let inst = symmetric_instance(seed);
    let sol = solve_tensor(&inst.marginals, &inst.tensor, &LpOptions::default()).unwrap();
    let once = average_plan(&sol.plan, &inst.family, &inst.marginals).unwrap();
    let twice = average_plan(&once, &inst.family, &inst.marginals).unwrap();
    prop_assert!(once.max_abs_difference(&twice) <= 1e-12);
    let pot = random_potentials(seed, &inst.marginals);
    let p1 = average_potentials(&pot, &inst.family);
    let p2 = average_potentials(&p1, &inst.family);
    prop_assert!(p1.max_abs_difference(&p2) <= 1e-12);
    Ok(())
}

/// Orbit averaging keeps every integral, the plan marginals and the cost of
/// the plan against an invariant cost.
pub fn integral_conservation(seed: u64) -> Result<(), TestCaseError> {
    let inst = symmetric_instance(seed);
    let pot = random_potentials(seed, &inst.marginals);
    let avg = average_potentials(&pot, &inst.family);
    for (j, m) in inst.marginals.iter().enumerate() {
        prop_assert!((m.integrate(&avg.vectors[j]) - m.integrate(&pot.vectors[j])).abs() <= 1e-12);
    }
    let sol = solve_tensor(&inst.marginals, &inst.tensor, &LpOptions::default()).unwrap();
    let plan = average_plan(&sol.plan, &inst.family, &inst.marginals).unwrap();
    prop_assert!(plan.marginal_residual(&inst.marginals) <= 1e-12);
    prop_assert!((plan.cost(&inst.tensor) - sol.plan.cost(&inst.tensor)).abs() <= 1e-12);
    Ok(())
}

/// Optimal potentials pushed down by random non-negative amounts, in the
/// problem's sense convention. They stay feasible.
fn slack_potentials(seed: u64, inst: &SymmetricInstance) -> Potentials {
    let sol = solve_tensor(&inst.marginals, &inst.tensor, &LpOptions::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.rotate_left(17));
    let mut min_form = sol.potentials.to_min_form(inst.sense);
    for v in &mut min_form.vectors {
        for x in v.iter_mut() {
            if rng.gen_bool(0.5) {
                *x -= rng.gen_range(0.0..0.5);
            }
        }
    }
    min_form.to_min_form(inst.sense)
}

/// `Φ ≤ V ≤ Φ^c` and `Φ ≤ ψ ≤ Φ^c` pointwise.
pub fn sandwich(seed: u64) -> Result<(), TestCaseError> {
    let inst = symmetric_instance(seed);
    let pot = slack_potentials(seed, &inst);
    let trace = symmetrize_dual(&pot, &inst.family, &inst.marginals, &inst.tensor).unwrap();
    prop_assert!(trace.sandwich_violation() <= 1e-12, "violation {}", trace.sandwich_violation());
    Ok(())
}

/// Feasible input gives feasible, orbit-constant output at a fixed point of
/// the conjugation, with no loss of dual value.
pub fn feasibility_preservation(seed: u64) -> Result<(), TestCaseError> {
    let inst = symmetric_instance(seed);
    let pot = slack_potentials(seed, &inst);
    let trace = symmetrize_dual(&pot, &inst.family, &inst.marginals, &inst.tensor).unwrap();
    prop_assert!(feasibility_violation(&trace.psi, &inst.tensor) <= 1e-9);
    prop_assert!(trace.kdp_residual <= 1e-9);
    let before = pot.to_min_form(inst.sense).dual_value(&inst.marginals);
    prop_assert!(trace.psi.dual_value(&inst.marginals) >= before - 1e-9);
    for j in 0..trace.psi.arity() {
        prop_assert_eq!(inst.family.orbits(j).max_spread(&trace.psi.vectors[j]), 0.0);
    }
    Ok(())
}

/// Moving the cost of one tuple with a non-trivial orbit must trip the gate.
pub fn gate_rejects_perturbation(seed: u64, delta: f64) -> Result<(), TestCaseError> {
    let inst = symmetric_instance(seed);
    let g = inst.generators.iter().find(|g| !g.is_identity()).unwrap();
    let n = inst.marginals.len();
    let j = (0..n).find(|&j| !g.perm(j).is_identity()).unwrap();
    let i = (0..inst.marginals[j].len()).find(|&i| g.perm(j).apply(i) != i).unwrap();
    let mut t = vec![0; n];
    t[j] = i;
    let mut values = inst.values.clone();
    values[inst.shape().flatten(&t)] += delta;
    let tensor = inst.with_values(values);
    let result = symmetrize_dual(&Potentials::zeros(&inst.marginals), &inst.family, &inst.marginals, &tensor);
    match result {
        Err(Error::CostNotInvariant { deviation }) => prop_assert!(deviation >= delta * (1.0 - 1e-9)),
        other => prop_assert!(false, "expected CostNotInvariant, got {:?}", other.map(|t| t.kdp_residual)),
    }
    Ok(())
}
