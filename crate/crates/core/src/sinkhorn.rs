//! Multi-marginal entropic regularization solved by cyclic log-domain
//! Sinkhorn updates.
//!
//! The plan is parametrized as
//! `π(t) = exp((Σ_j ψ_j(t_j) − c̃(t)) / ε) · Π_j w_j(t_j)`
//! and each sweep makes marginal `j = 1, …, n` exact in turn. Per-slice
//! log-sum-exp reductions run over fixed-size blocks whose partial results
//! are merged in block order, so the output does not depend on the number of
//! worker threads.

use serde::{Deserialize, Serialize};

use crate::cost::{materialize_tensor, CostSpec, CostTensor};
use crate::error::{Error, Result};
use crate::lp;
use crate::measure::{product_size, DiscreteMarginal};
use crate::par;
use crate::plan::{Plan, Potentials, SolveReport};

/// Products larger than this are not re-solved exactly during a sweep.
pub const SWEEP_LP_LIMIT: u64 = 20_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropicConfig {
    /// Regularization strength, in cost units.
    pub epsilon: f64,
    pub max_iter: usize,
    /// Target for the largest L1 marginal error after a sweep.
    pub tol: f64,
}

impl Default for EntropicConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            max_iter: 10_000,
            tol: 1e-9,
        }
    }
}

impl EntropicConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidConfig(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct EntropicSolution {
    pub plan: Plan,
    /// In the sense convention of the cost.
    pub potentials: Potentials,
    /// `primal_value` is the transport cost of the entropic plan.
    pub report: SolveReport,
    pub converged: bool,
    /// Largest L1 marginal error of the returned plan.
    pub marginal_error: f64,
}

/// Streaming log-sum-exp accumulator.
#[derive(Clone, Copy, Debug)]
struct Lse {
    max: f64,
    sum: f64,
}

impl Lse {
    const EMPTY: Self = Self {
        max: f64::NEG_INFINITY,
        sum: 0.0,
    };

    #[inline]
    fn push(&mut self, v: f64) {
        if v > self.max {
            self.sum = self.sum * (self.max - v).exp() + 1.0;
            self.max = v;
        } else {
            self.sum += (v - self.max).exp();
        }
    }

    fn merge(self, other: Self) -> Self {
        if other.max == f64::NEG_INFINITY {
            return self;
        }
        if self.max == f64::NEG_INFINITY {
            return other;
        }
        let max = self.max.max(other.max);
        Self {
            max,
            sum: self.sum * (self.max - max).exp() + other.sum * (other.max - max).exp(),
        }
    }

    fn value(self) -> f64 {
        self.max + self.sum.ln()
    }
}

struct Workspace<'a> {
    tensor: &'a CostTensor,
    log_w: Vec<Vec<f64>>,
    eps: f64,
}

impl Workspace<'_> {
    /// `ψ_j(i) = −ε · LSE_{t_j = i} [(Σ_{k≠j} ψ_k − c̃)/ε + Σ_{k≠j} log w_k]`.
    fn update(&self, psi: &mut Potentials, j: usize) -> Result<()> {
        let shape = self.tensor.shape();
        let m = shape.dims()[j];
        let current = &*psi;
        let partials = par::map_blocks(shape.size(), par::BLOCK, |start, end| {
            let mut acc = vec![Lse::EMPTY; m];
            shape.cells(start, end).for_each_cell(|flat, t| {
                let c = self.tensor.normalized(flat);
                if c.is_finite() {
                    let mut s = -c;
                    let mut lw = 0.0;
                    for (k, &i) in t.iter().enumerate() {
                        if k != j {
                            s += current.vectors[k][i];
                            lw += self.log_w[k][i];
                        }
                    }
                    acc[t[j]].push(s / self.eps + lw);
                }
            });
            acc
        });
        let mut total = vec![Lse::EMPTY; m];
        for block in partials {
            for (a, b) in total.iter_mut().zip(block) {
                *a = a.merge(b);
            }
        }
        for (i, lse) in total.into_iter().enumerate() {
            if lse.max == f64::NEG_INFINITY {
                return Err(Error::AllCellsForbidden);
            }
            psi.vectors[j][i] = -self.eps * lse.value();
        }
        Ok(())
    }

    #[inline]
    fn log_mass(&self, psi: &Potentials, flat: usize, t: &[usize]) -> f64 {
        let c = self.tensor.normalized(flat);
        let mut s = -c;
        let mut lw = 0.0;
        for (k, &i) in t.iter().enumerate() {
            s += psi.vectors[k][i];
            lw += self.log_w[k][i];
        }
        s / self.eps + lw
    }

    /// Marginals of the current plan, blocked like [`Self::update`].
    fn plan_marginals(&self, psi: &Potentials) -> Vec<Vec<f64>> {
        let shape = self.tensor.shape();
        let partials = par::map_blocks(shape.size(), par::BLOCK, |start, end| {
            let mut acc: Vec<Vec<f64>> = shape.dims().iter().map(|&d| vec![0.0; d]).collect();
            shape.cells(start, end).for_each_cell(|flat, t| {
                if !self.tensor.is_forbidden(flat) {
                    let mass = self.log_mass(psi, flat, t).exp();
                    for (k, &i) in t.iter().enumerate() {
                        acc[k][i] += mass;
                    }
                }
            });
            acc
        });
        let mut total: Vec<Vec<f64>> = shape.dims().iter().map(|&d| vec![0.0; d]).collect();
        for block in partials {
            for (a, b) in total.iter_mut().zip(block) {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
            }
        }
        total
    }

    fn plan(&self, psi: &Potentials) -> Plan {
        let shape = self.tensor.shape();
        let blocks = par::map_blocks(shape.size(), par::BLOCK, |start, end| {
            let mut out = Vec::new();
            shape.cells(start, end).for_each_cell(|flat, t| {
                if !self.tensor.is_forbidden(flat) {
                    let mass = self.log_mass(psi, flat, t).exp();
                    if mass > 0.0 {
                        out.push((flat, mass));
                    }
                }
            });
            out
        });
        let mut plan = Plan::empty(shape.clone());
        for (flat, mass) in blocks.into_iter().flatten() {
            plan.insert(flat, mass);
        }
        plan
    }
}

/// Entropic solve of `(MK)` with the given regularization.
pub fn solve_entropic(
    marginals: &[DiscreteMarginal],
    cost: &CostSpec,
    config: &EntropicConfig,
) -> Result<EntropicSolution> {
    let tensor = materialize_tensor(cost, marginals)?;
    solve_entropic_tensor(marginals, &tensor, config)
}

pub fn solve_entropic_tensor(
    marginals: &[DiscreteMarginal],
    tensor: &CostTensor,
    config: &EntropicConfig,
) -> Result<EntropicSolution> {
    config.validate()?;
    if tensor.values().iter().all(|v| v.is_infinite()) {
        return Err(Error::AllCellsForbidden);
    }
    let ws = Workspace {
        tensor,
        log_w: marginals
            .iter()
            .map(|m| m.weights.iter().map(|w| w.ln()).collect())
            .collect(),
        eps: config.epsilon,
    };
    let n = marginals.len();
    let mut psi = Potentials::zeros(marginals);
    let mut converged = false;
    let mut error = f64::INFINITY;
    let mut sweeps = 0;
    while sweeps < config.max_iter {
        for j in 0..n {
            ws.update(&mut psi, j)?;
        }
        sweeps += 1;
        let got = ws.plan_marginals(&psi);
        error = got
            .iter()
            .zip(marginals)
            .map(|(g, m)| g.iter().zip(&m.weights).map(|(a, b)| (a - b).abs()).sum::<f64>())
            .fold(0.0, f64::max);
        if error < config.tol {
            converged = true;
            break;
        }
    }
    let plan = ws.plan(&psi);
    let potentials = psi.to_min_form(tensor.sense());
    let report = SolveReport::new(
        plan.cost(tensor),
        potentials.dual_value(marginals),
        "sinkhorn-log-domain",
        sweeps,
    );
    let solution = EntropicSolution {
        plan,
        potentials,
        report,
        converged,
        marginal_error: error,
    };
    if converged {
        Ok(solution)
    } else {
        Err(Error::NotConverged(Box::new(solution)))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepPoint {
    pub epsilon: f64,
    pub report: SolveReport,
    /// `|entropic plan cost − LP optimum|`, when the LP was run.
    pub gap_to_lp: Option<f64>,
}

/// Solves for each `ε` in a strictly decreasing sequence.
pub fn epsilon_sweep(
    marginals: &[DiscreteMarginal],
    cost: &CostSpec,
    epsilons: &[f64],
    config: &EntropicConfig,
) -> Result<Vec<SweepPoint>> {
    if epsilons.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidConfig("epsilons must be strictly decreasing".into()));
    }
    let tensor = materialize_tensor(cost, marginals)?;
    let lp_value = if product_size(marginals)? <= SWEEP_LP_LIMIT {
        Some(lp::solve_tensor(marginals, &tensor, &lp::LpOptions::default())?.report.primal_value)
    } else {
        None
    };
    epsilons
        .iter()
        .map(|&epsilon| {
            let sol = solve_entropic_tensor(marginals, &tensor, &EntropicConfig { epsilon, ..*config })?;
            Ok(SweepPoint {
                epsilon,
                gap_to_lp: lp_value.map(|v| (sol.report.primal_value - v).abs()),
                report: sol.report,
            })
        })
        .collect()
}
