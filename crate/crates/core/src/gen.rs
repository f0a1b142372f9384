//! Seeded random instances.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cost::{CostSpec, Sense};
use crate::error::{Error, Result};
use crate::measure::{product_size, DiscreteMarginal, ProductShape};

#[derive(Clone, Debug, PartialEq)]
pub struct RandomInstance {
    pub marginals: Vec<DiscreteMarginal>,
    pub cost: CostSpec,
}

/// Knobs for [`random_instance`].
#[derive(Clone, Debug)]
pub struct GenOptions {
    /// Probability that a cell off the guaranteed support is forbidden.
    pub forbidden_fraction: f64,
    pub uniform_weights: bool,
    pub sense: Sense,
}

impl Default for GenOptions {
    fn default() -> Self {
        Self {
            forbidden_fraction: 0.3,
            uniform_weights: false,
            sense: Sense::Min,
        }
    }
}

fn random_weights(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..m).map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|w| w / total).collect()
}

/// Cells used by the north-west corner rule, which always yields a plan.
pub fn north_west_corner(marginals: &[DiscreteMarginal]) -> Vec<Vec<usize>> {
    let n = marginals.len();
    let mut idx = vec![0; n];
    let mut left: Vec<f64> = marginals.iter().map(|m| m.weights[0]).collect();
    let mut cells = Vec::new();
    loop {
        cells.push(idx.clone());
        let (j, &step) = left
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("at least two marginals");
        for l in left.iter_mut() {
            *l -= step;
        }
        idx[j] += 1;
        if idx[j] == marginals[j].len() {
            break;
        }
        left[j] = marginals[j].weights[idx[j]];
    }
    cells
}

/// `n` marginals with `m` points each on the line, and a random cost table
/// with some forbidden cells that never makes the problem infeasible.
pub fn random_instance(seed: u64, n: usize, m: usize, options: &GenOptions) -> Result<RandomInstance> {
    if n < 2 || m == 0 {
        return Err(Error::InvalidConfig("need at least two marginals and one point".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let marginals = (0..n)
        .map(|j| {
            let points = (0..m).map(|i| vec![i as f64]).collect();
            let weights = if options.uniform_weights {
                vec![1.0 / m as f64; m]
            } else {
                random_weights(&mut rng, m)
            };
            DiscreteMarginal::new(format!("mu{}", j + 1), points, weights)
        })
        .collect::<Result<Vec<_>>>()?;
    product_size(&marginals)?;
    let shape = ProductShape::of(&marginals)?;
    let mut values: Vec<f64> = (0..shape.size())
        .map(|_| {
            if rng.gen_bool(options.forbidden_fraction) {
                f64::INFINITY
            } else {
                rng.gen_range(-1.0..1.0)
            }
        })
        .collect();
    for cell in north_west_corner(&marginals) {
        let flat = shape.flatten(&cell);
        if values[flat].is_infinite() {
            values[flat] = rng.gen_range(-1.0..1.0);
        }
    }
    Ok(RandomInstance {
        marginals,
        cost: CostSpec::table(values, options.sense),
    })
}
