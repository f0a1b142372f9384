//! JSON report files.

use serde::{Deserialize, Serialize};

use mmot::apps::TheoremReport;
use mmot::cost::materialize_tensor;
use mmot::plan::verify_certificate;
use mmot::{Certificate, Plan, Potentials, ProductIndex, ProductShape, SolveReport, SymmetrizationTrace};

use crate::problem::ProblemFile;
use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportEntry {
    pub tuple: ProductIndex,
    pub mass: f64,
}

pub fn support_entries(plan: &Plan, threshold: f64) -> Vec<SupportEntry> {
    plan.support(threshold)
        .into_iter()
        .map(|(tuple, mass)| SupportEntry { tuple, mass })
        .collect()
}

/// Before/after figures of a symmetrization run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetrizationSummary {
    pub group_order: usize,
    pub sigma: bool,
    pub equal_marginals: bool,
    pub plan_value_before: f64,
    pub plan_value_after: f64,
    pub dual_value_before: f64,
    pub dual_value_after: f64,
    /// Largest `‖g#π − π‖₁` over the group (and the slot shift, if used).
    pub plan_invariance_error: f64,
    pub kdp_residual: f64,
    /// Largest spread of a symmetrized potential on one orbit.
    pub orbit_spread: f64,
    pub plan: Vec<SupportEntry>,
    pub potentials: Potentials,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub command: String,
    /// Plan entries at or below this mass are omitted.
    pub support_threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<SolveReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    #[serde(default)]
    pub plan: Vec<SupportEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potentials: Option<Potentials>,
    /// Computed from the listed support only, so it can be reproduced.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<Certificate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symmetrization: Option<SymmetrizationSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<SymmetrizationTrace>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub theorems: Vec<TheoremReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<ProblemFile>,
}

impl ReportFile {
    pub fn new(command: &str, support_threshold: f64) -> Self {
        Self {
            command: command.to_string(),
            support_threshold,
            report: None,
            converged: None,
            plan: Vec::new(),
            potentials: None,
            certificate: None,
            symmetrization: None,
            trace: None,
            theorems: Vec::new(),
            problem: None,
        }
    }
}

/// Rebuilds plan, potentials and cost from a report and checks the
/// certificate again.
pub fn reverify(report: &ReportFile) -> Result<Certificate, CliError> {
    let problem = report
        .problem
        .as_ref()
        .ok_or_else(|| CliError::Input {
            pointer: "/problem".into(),
            message: "report does not embed its problem".into(),
        })?
        .validate()?;
    let potentials = report.potentials.as_ref().ok_or_else(|| CliError::Input {
        pointer: "/potentials".into(),
        message: "report has no potentials".into(),
    })?;
    let tensor = materialize_tensor(&problem.cost, &problem.marginals)?;
    let shape = ProductShape::of(&problem.marginals)?;
    let plan = Plan::from_tuples(shape, report.plan.iter().map(|e| (e.tuple.clone(), e.mass)))?;
    Ok(verify_certificate(&plan, potentials, &tensor, &problem.marginals)?)
}
