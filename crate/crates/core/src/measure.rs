//! Finite-support probability measures and indexing of their product space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Allowed deviation of a marginal's total mass from 1. Inputs are never
/// renormalized.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Largest product size that still indexes exactly through an `f64` mantissa.
pub const MAX_PRODUCT_SIZE: u64 = 1 << 53;

/// An atomic probability measure: distinct points in R^d with positive weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMarginal {
    pub label: String,
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl DiscreteMarginal {
    /// Builds and validates a marginal.
    pub fn new(label: impl Into<String>, points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        validate_marginal(Self {
            label: label.into(),
            points,
            weights,
        })
    }

    /// Uniform weights over the given points.
    pub fn uniform(label: impl Into<String>, points: Vec<Vec<f64>>) -> Result<Self> {
        let w = 1.0 / points.len().max(1) as f64;
        let weights = vec![w; points.len()];
        Self::new(label, points, weights)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    /// Weighted integral `Σ f(i) w(i)` of a function on the support.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    /// Same points and same weights, compared exactly.
    pub fn same_measure(&self, other: &Self) -> bool {
        self.points == other.points && self.weights == other.weights
    }
}

/// Checks every marginal invariant and hands the marginal back unchanged.
pub fn validate_marginal(m: DiscreteMarginal) -> Result<DiscreteMarginal> {
    let label = || m.label.clone();
    if m.weights.is_empty() {
        return Err(Error::InvalidMarginal {
            marginal: label(),
            reason: "empty support".into(),
        });
    }
    if m.points.len() != m.weights.len() {
        return Err(Error::InvalidMarginal {
            marginal: label(),
            reason: format!("{} points but {} weights", m.points.len(), m.weights.len()),
        });
    }
    for (index, &value) in m.weights.iter().enumerate() {
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::NonPositiveWeight {
                marginal: label(),
                index,
                value,
            });
        }
    }
    let sum: f64 = m.weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::WeightSumMismatch {
            marginal: label(),
            sum,
        });
    }
    let expected = m.points[0].len();
    for (index, p) in m.points.iter().enumerate() {
        if p.len() != expected {
            return Err(Error::MixedDimension {
                marginal: label(),
                index,
                expected,
                found: p.len(),
            });
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidMarginal {
                marginal: label(),
                reason: format!("point {index} has a non-finite coordinate"),
            });
        }
    }
    // sort indices by coordinates so duplicates become neighbours
    let mut order: Vec<usize> = (0..m.points.len()).collect();
    order.sort_by(|&a, &b| {
        m.points[a]
            .iter()
            .zip(&m.points[b])
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    for pair in order.windows(2) {
        // exact comparison; -0.0 == 0.0 counts as a duplicate
        if m.points[pair[0]] == m.points[pair[1]] {
            let (first, second) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
            return Err(Error::DuplicatePoint {
                marginal: label(),
                first,
                second,
            });
        }
    }
    Ok(m)
}

/// `Π |supp μ_i|`, guarded against leaving the exactly representable range.
pub fn product_size(marginals: &[DiscreteMarginal]) -> Result<u64> {
    if marginals.len() < 2 {
        return Err(Error::DimensionMismatch(format!(
            "need at least two marginals, got {}",
            marginals.len()
        )));
    }
    checked_product(marginals.iter().map(DiscreteMarginal::len))
}

fn checked_product(sizes: impl IntoIterator<Item = usize>) -> Result<u64> {
    let mut total: u64 = 1;
    for s in sizes {
        total = total.checked_mul(s as u64).ok_or(Error::Overflow)?;
        if total > MAX_PRODUCT_SIZE {
            return Err(Error::Overflow);
        }
    }
    Ok(total)
}

/// A tuple `(i_1, …, i_n)` addressing one cell of `X_1 × … × X_n`.
pub type ProductIndex = Vec<usize>;

/// Row-major layout of the product space, last marginal varying fastest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductShape {
    dims: Vec<usize>,
    strides: Vec<usize>,
    size: usize,
}

impl ProductShape {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        let size = checked_product(dims.iter().copied())? as usize;
        let mut strides = vec![1; dims.len()];
        for j in (0..dims.len().saturating_sub(1)).rev() {
            strides[j] = strides[j + 1] * dims[j + 1];
        }
        Ok(Self {
            dims,
            strides,
            size,
        })
    }

    pub fn of(marginals: &[DiscreteMarginal]) -> Result<Self> {
        product_size(marginals)?;
        Self::new(marginals.iter().map(DiscreteMarginal::len).collect())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    /// Number of marginals.
    pub fn arity(&self) -> usize {
        self.dims.len()
    }

    /// Number of cells.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn contains(&self, index: &[usize]) -> bool {
        index.len() == self.dims.len() && index.iter().zip(&self.dims).all(|(i, d)| i < d)
    }

    pub fn flatten(&self, index: &[usize]) -> usize {
        debug_assert!(self.contains(index));
        index.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn unflatten(&self, mut flat: usize) -> ProductIndex {
        let mut out = vec![0; self.dims.len()];
        self.unflatten_into(&mut flat, &mut out);
        out
    }

    pub fn unflatten_into(&self, flat: &mut usize, out: &mut [usize]) {
        for (j, s) in self.strides.iter().enumerate() {
            out[j] = *flat / s;
            *flat %= s;
        }
    }

    /// Component `j` of the flat index.
    pub fn component(&self, flat: usize, j: usize) -> usize {
        (flat / self.strides[j]) % self.dims[j]
    }

    /// Odometer over the cells `start..end`, yielding `(flat, tuple)`.
    pub fn cells(&self, start: usize, end: usize) -> Cells<'_> {
        let mut tuple = vec![0; self.dims.len()];
        if start < self.size {
            let mut f = start;
            self.unflatten_into(&mut f, &mut tuple);
        }
        Cells {
            shape: self,
            flat: start,
            end: end.min(self.size),
            tuple,
        }
    }

    /// Flat indices of every cell whose `j`-th component equals `i`, ascending.
    pub fn slice(&self, j: usize, i: usize) -> impl Iterator<Item = usize> + '_ {
        let base = i * self.strides[j];
        let others: Vec<usize> = (0..self.dims.len()).filter(|&k| k != j).collect();
        let count = self.size / self.dims[j].max(1);
        let mut odo = vec![0usize; others.len()];
        let mut offset = base;
        (0..count).map(move |step| {
            if step > 0 {
                // advance the odometer over the remaining components
                for pos in (0..others.len()).rev() {
                    let k = others[pos];
                    odo[pos] += 1;
                    offset += self.strides[k];
                    if odo[pos] < self.dims[k] {
                        break;
                    }
                    offset -= self.strides[k] * self.dims[k];
                    odo[pos] = 0;
                }
            }
            offset
        })
    }
}

/// Iterator produced by [`ProductShape::cells`].
pub struct Cells<'a> {
    shape: &'a ProductShape,
    flat: usize,
    end: usize,
    tuple: Vec<usize>,
}

impl Cells<'_> {
    /// Advances and calls `f(flat, tuple)` for every remaining cell.
    pub fn for_each_cell(mut self, mut f: impl FnMut(usize, &[usize])) {
        while self.flat < self.end {
            f(self.flat, &self.tuple);
            self.flat += 1;
            for j in (0..self.tuple.len()).rev() {
                self.tuple[j] += 1;
                if self.tuple[j] < self.shape.dims[j] {
                    break;
                }
                self.tuple[j] = 0;
            }
        }
    }
}
