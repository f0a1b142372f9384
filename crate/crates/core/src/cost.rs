//! Cost functions on the product space: determinant, Coulomb, and explicit
//! tables, with `+∞` marking forbidden cells.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{DiscreteMarginal, ProductShape};
use crate::par;

/// Upper bound on the number of cells [`materialize_tensor`] will evaluate.
pub const MATERIALIZE_LIMIT: u64 = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Min,
    Max,
}

impl Sense {
    /// +1 for Min, -1 for Max: multiplying a cost by this gives min form.
    pub fn sign(self) -> f64 {
        match self {
            Sense::Min => 1.0,
            Sense::Max => -1.0,
        }
    }
}

/// A finite real or `+∞`. NaN and `-∞` are unrepresentable.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct ExtendedReal(f64);

impl ExtendedReal {
    pub const INFINITY: Self = Self(f64::INFINITY);

    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() || value == f64::NEG_INFINITY {
            return Err(Error::InvalidCost(format!("{value} is not an extended real")));
        }
        Ok(Self(value))
    }

    pub fn finite(value: f64) -> Result<Self> {
        if value.is_finite() {
            Ok(Self(value))
        } else {
            Err(Error::InvalidCost(format!("{value} is not finite")))
        }
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum CostKind {
    /// One value per cell, row-major with the last marginal fastest.
    Table(Vec<f64>),
    /// `det(x_1, …, x_n)` with the points as matrix columns; needs `d = n`.
    Determinant,
    /// `Σ_{i≠j} 1/|x_i − x_j|` over ordered pairs; `+∞` on coincidence.
    Coulomb,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    pub kind: CostKind,
    pub sense: Sense,
}

impl CostSpec {
    pub fn table(values: Vec<f64>, sense: Sense) -> Self {
        Self {
            kind: CostKind::Table(values),
            sense,
        }
    }

    pub fn determinant() -> Self {
        Self {
            kind: CostKind::Determinant,
            sense: Sense::Max,
        }
    }

    pub fn coulomb() -> Self {
        Self {
            kind: CostKind::Coulomb,
            sense: Sense::Min,
        }
    }

    pub fn with_sense(mut self, sense: Sense) -> Self {
        self.sense = sense;
        self
    }

    /// Checks that the cost is defined on the product of `marginals`.
    pub fn check_compatible(&self, marginals: &[DiscreteMarginal]) -> Result<()> {
        let n = marginals.len();
        match &self.kind {
            CostKind::Table(values) => {
                let size = ProductShape::of(marginals)?.size();
                if values.len() != size {
                    return Err(Error::DimensionMismatch(format!(
                        "cost table has {} entries, product space has {size}",
                        values.len()
                    )));
                }
                if let Some(pos) = values
                    .iter()
                    .position(|v| v.is_nan() || *v == f64::NEG_INFINITY)
                {
                    return Err(Error::InvalidCost(format!(
                        "entry {pos} is {}",
                        values[pos]
                    )));
                }
            }
            CostKind::Determinant => {
                if let Some(m) = marginals.iter().find(|m| m.dim() != n) {
                    return Err(Error::DimensionMismatch(format!(
                        "determinant cost needs dimension {n}, marginal {} has {}",
                        m.label,
                        m.dim()
                    )));
                }
            }
            CostKind::Coulomb => {
                let d = marginals.first().map_or(0, DiscreteMarginal::dim);
                if let Some(m) = marginals.iter().find(|m| m.dim() != d) {
                    return Err(Error::DimensionMismatch(format!(
                        "marginal {} has dimension {}, expected {d}",
                        m.label,
                        m.dim()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Cost of a tuple of points. Tables have no geometry and are rejected.
    pub fn eval_points(&self, points: &[&[f64]]) -> Result<ExtendedReal> {
        match &self.kind {
            CostKind::Determinant => {
                let n = points.len();
                if let Some(p) = points.iter().find(|p| p.len() != n) {
                    return Err(Error::DimensionMismatch(format!(
                        "determinant of {n} points needs dimension {n}, got {}",
                        p.len()
                    )));
                }
                ExtendedReal::finite(determinant(points))
            }
            CostKind::Coulomb => {
                let d = points.first().map_or(0, |p| p.len());
                if points.iter().any(|p| p.len() != d) {
                    return Err(Error::DimensionMismatch("points of mixed dimension".into()));
                }
                Ok(ExtendedReal(coulomb(points)))
            }
            CostKind::Table(_) => Err(Error::InvalidCost(
                "table costs are addressed by index, not by points".into(),
            )),
        }
    }
}

/// Evaluates the cost at one cell of the product of `marginals`.
pub fn eval_cost(
    spec: &CostSpec,
    marginals: &[DiscreteMarginal],
    index: &[usize],
) -> Result<ExtendedReal> {
    if index.len() != marginals.len() || index.iter().zip(marginals).any(|(&i, m)| i >= m.len()) {
        return Err(Error::DimensionMismatch(format!(
            "index {index:?} outside the product space"
        )));
    }
    match &spec.kind {
        CostKind::Table(values) => {
            let shape = ProductShape::of(marginals)?;
            let v = values.get(shape.flatten(index)).ok_or_else(|| {
                Error::DimensionMismatch("cost table shorter than product space".into())
            })?;
            ExtendedReal::new(*v)
        }
        _ => {
            let pts: Vec<&[f64]> = index
                .iter()
                .zip(marginals)
                .map(|(&i, m)| m.points[i].as_slice())
                .collect();
            spec.eval_points(&pts)
        }
    }
}

/// Determinant of the square matrix whose columns are `cols`.
pub fn determinant(cols: &[&[f64]]) -> f64 {
    match cols.len() {
        0 => 1.0,
        1 => cols[0][0],
        2 => cols[0][0] * cols[1][1] - cols[1][0] * cols[0][1],
        3 => {
            let (a, b, c) = (cols[0], cols[1], cols[2]);
            a[0] * (b[1] * c[2] - c[1] * b[2]) - b[0] * (a[1] * c[2] - c[1] * a[2])
                + c[0] * (a[1] * b[2] - b[1] * a[2])
        }
        _ => lu_determinant(cols),
    }
}

fn lu_determinant(cols: &[&[f64]]) -> f64 {
    let n = cols.len();
    // row-major copy of the transpose; det is transpose invariant
    let mut a: Vec<f64> = cols.iter().flat_map(|c| c.iter().copied()).collect();
    let mut det = 1.0;
    for k in 0..n {
        let pivot = (k..n)
            .max_by(|&i, &j| a[i * n + k].abs().total_cmp(&a[j * n + k].abs()))
            .unwrap();
        if a[pivot * n + k] == 0.0 {
            return 0.0;
        }
        if pivot != k {
            for c in 0..n {
                a.swap(k * n + c, pivot * n + c);
            }
            det = -det;
        }
        let p = a[k * n + k];
        det *= p;
        for i in k + 1..n {
            let f = a[i * n + k] / p;
            for c in k..n {
                a[i * n + c] -= f * a[k * n + c];
            }
        }
    }
    det
}

/// Coulomb repulsion summed over ordered pairs. Pair terms are added in
/// sorted order so the result is bitwise symmetric in the points.
pub fn coulomb(points: &[&[f64]]) -> f64 {
    let mut terms = Vec::with_capacity(points.len() * points.len().saturating_sub(1) / 2);
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let r2: f64 = points[i]
                .iter()
                .zip(points[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if r2 == 0.0 {
                return f64::INFINITY;
            }
            terms.push(1.0 / r2.sqrt());
        }
    }
    terms.sort_by(f64::total_cmp);
    2.0 * terms.iter().sum::<f64>()
}

/// A cost evaluated on every cell of the product space.
#[derive(Clone, Debug, PartialEq)]
pub struct CostTensor {
    shape: ProductShape,
    values: Vec<f64>,
    sense: Sense,
}

impl CostTensor {
    pub fn from_values(shape: ProductShape, values: Vec<f64>, sense: Sense) -> Result<Self> {
        if values.len() != shape.size() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {} cells",
                values.len(),
                shape.size()
            )));
        }
        if let Some(v) = values.iter().find(|v| v.is_nan() || **v == f64::NEG_INFINITY) {
            return Err(Error::InvalidCost(format!("cell value {v}")));
        }
        Ok(Self {
            shape,
            values,
            sense,
        })
    }

    pub fn shape(&self) -> &ProductShape {
        &self.shape
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    /// Values in the original sense; `+∞` marks forbidden cells.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, flat: usize) -> f64 {
        self.values[flat]
    }

    /// Sense-normalized cost `c̃` (to be minimized). Forbidden cells stay `+∞`.
    #[inline]
    pub fn normalized(&self, flat: usize) -> f64 {
        let v = self.values[flat];
        if v.is_infinite() {
            v
        } else {
            self.sense.sign() * v
        }
    }

    pub fn is_forbidden(&self, flat: usize) -> bool {
        self.values[flat].is_infinite()
    }

    /// Max over cells of `|c(t) − c(map(t))|` with `∞ − ∞ = 0`.
    /// `map` writes the image of a tuple into its second argument.
    pub fn deviation_under<F>(&self, map: F) -> f64
    where
        F: Fn(&[usize], &mut [usize]) + Sync + Send,
    {
        let partial = par::map_blocks(self.shape.size(), par::BLOCK, |start, end| {
            let mut image = vec![0; self.shape.arity()];
            let mut worst = 0.0f64;
            self.shape.cells(start, end).for_each_cell(|flat, t| {
                map(t, &mut image);
                let a = self.values[flat];
                let b = self.values[self.shape.flatten(&image)];
                let dev = match (a.is_infinite(), b.is_infinite()) {
                    (true, true) => 0.0,
                    (false, false) => (a - b).abs(),
                    _ => f64::INFINITY,
                };
                worst = worst.max(dev);
            });
            worst
        });
        partial.into_iter().fold(0.0, f64::max)
    }

    /// Deviation under componentwise index permutations `(R_1, …, R_n)`.
    pub fn deviation_under_perms(&self, perms: &[&[usize]]) -> f64 {
        self.deviation_under(|t, out| {
            for (j, p) in perms.iter().enumerate() {
                out[j] = p[t[j]];
            }
        })
    }
}

/// Evaluates `spec` on every cell of the product of `marginals`.
pub fn materialize_tensor(spec: &CostSpec, marginals: &[DiscreteMarginal]) -> Result<CostTensor> {
    let size = crate::measure::product_size(marginals)?;
    if size > MATERIALIZE_LIMIT {
        return Err(Error::TooLarge {
            size,
            limit: MATERIALIZE_LIMIT,
        });
    }
    spec.check_compatible(marginals)?;
    let shape = ProductShape::of(marginals)?;
    let values = match &spec.kind {
        CostKind::Table(values) => values.clone(),
        _ => {
            let blocks = par::map_blocks(shape.size(), par::BLOCK, |start, end| {
                let mut out = Vec::with_capacity(end - start);
                let mut pts: Vec<&[f64]> = Vec::with_capacity(marginals.len());
                shape.cells(start, end).for_each_cell(|_, t| {
                    pts.clear();
                    pts.extend(t.iter().zip(marginals).map(|(&i, m)| m.points[i].as_slice()));
                    let v = match spec.kind {
                        CostKind::Determinant => determinant(&pts),
                        _ => coulomb(&pts),
                    };
                    out.push(v);
                });
                out
            });
            blocks.concat()
        }
    };
    CostTensor::from_values(shape, values, spec.sense)
}

/// `max_t |c(t) − c(R_1 t_1, …, R_n t_n)|` over the product space.
pub fn check_cost_invariance(
    spec: &CostSpec,
    marginals: &[DiscreteMarginal],
    action: &crate::group::ProductAction,
) -> Result<f64> {
    action.check_against(marginals)?;
    let tensor = materialize_tensor(spec, marginals)?;
    let perms = action.perm_slices();
    Ok(tensor.deviation_under_perms(&perms))
}
