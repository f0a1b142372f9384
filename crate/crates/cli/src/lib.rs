//! Command-line front end: reads JSON problems, runs the solvers and the
//! symmetrization pipeline, and writes JSON reports.
//!
//! Exit codes: 0 success, 1 input error, 2 infeasible, 3 not converged,
//! 4 cost not invariant under the requested symmetry, 5 demo check failed.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod problem;
pub mod report;

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use mmot::apps::{coulomb_check, determinant_check, TheoremReport};
use mmot::cost::{materialize_tensor, CostTensor};
use mmot::gen::{random_instance, GenOptions};
use mmot::group::{generate_group, DEFAULT_GROUP_CAP};
use mmot::lp::{solve_tensor, SOLVE_LIMIT};
use mmot::plan::verify_certificate;
use mmot::sinkhorn::solve_entropic_tensor;
use mmot::symmetrize::{
    average_plan, average_plan_sigma, commuting_family_symmetrize, kdp_residual, plan_invariance_error,
    plan_sigma_error, symmetrize_dual,
};
use mmot::{ActionFamily, Error, Permutation, Plan, Potentials, SolveReport};

use problem::{Problem, ProblemFile, SolverKind};
use report::{support_entries, ReportFile, SymmetrizationSummary};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("input error at {}: {message}", if pointer.is_empty() { "/" } else { pointer })]
    Input { pointer: String, message: String },
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input { .. } | CliError::Io(_) => 1,
            CliError::Core(e) => match e {
                Error::FiniteCostInfeasible
                | Error::AllCellsForbidden
                | Error::InfeasibleInput { .. }
                | Error::UnboundedConjugate { .. } => 2,
                Error::NotConverged(_) => 3,
                Error::CostNotInvariant { .. } => 4,
                _ => 1,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mmot", version, about = "Discrete multi-marginal optimal transport")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, clap::Args)]
pub struct Flags {
    /// Overrides the solver named in the problem file.
    #[arg(long, global = true, value_enum)]
    pub solver: Option<SolverKind>,
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[arg(long, global = true)]
    pub max_iter: Option<usize>,
    /// Plan entries at or below this mass are left out of reports.
    #[arg(long, global = true, default_value_t = 1e-10)]
    pub support_threshold: f64,
    /// Write the JSON report here instead of standard output.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DemoName {
    Determinant,
    Coulomb,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a problem file.
    Solve { file: PathBuf },
    /// Solve, then symmetrize the plan and the potentials.
    Symmetrize {
        file: PathBuf,
        /// Produce one potential shared by all marginals.
        #[arg(long)]
        equal_marginals: bool,
    },
    /// Run a built-in check on radially symmetric planar instances.
    Demo {
        name: DemoName,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        radii: Vec<f64>,
        #[arg(long, default_value_t = 4)]
        m: usize,
        #[arg(long, default_value_t = 2)]
        n: usize,
    },
    /// Print a seeded random problem file.
    Gen {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 4)]
        m: usize,
    },
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli) -> Result<i32, CliError> {
    let flags = &cli.flags;
    if !(flags.support_threshold >= 0.0) {
        return Err(flag_error("--support-threshold must be non-negative"));
    }
    match &cli.command {
        Command::Solve { file } => cmd_solve(&read_problem(file)?, flags),
        Command::Symmetrize { file, equal_marginals } => cmd_symmetrize(&read_problem(file)?, *equal_marginals, flags),
        Command::Demo { name, radii, m, n } => cmd_demo(*name, radii, *m, *n, flags),
        Command::Gen { seed, n, m } => cmd_gen(*seed, *n, *m, flags),
    }
}

fn flag_error(message: &str) -> CliError {
    CliError::Input {
        pointer: String::new(),
        message: message.to_string(),
    }
}

fn read_problem(path: &PathBuf) -> Result<ProblemFile, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    ProblemFile::parse(&text)
}

fn emit<T: serde::Serialize>(value: &T, flags: &Flags) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    match &flags.out {
        Some(path) => fs::write(path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            match writeln!(out, "{text}").and_then(|_| out.flush()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Io(e.to_string())),
                _ => Ok(()),
            }
        }
    }
}

struct Solved {
    plan: Plan,
    potentials: Potentials,
    report: SolveReport,
    converged: bool,
}

fn solve(problem: &Problem, tensor: &CostTensor, flags: &Flags) -> Result<Solved, CliError> {
    match flags.solver.unwrap_or(problem.solver) {
        SolverKind::Lp => {
            let sol = solve_tensor(&problem.marginals, tensor, &Default::default())?;
            Ok(Solved {
                plan: sol.plan,
                potentials: sol.potentials,
                report: sol.report,
                converged: true,
            })
        }
        SolverKind::Sinkhorn => {
            let mut config = problem.entropic;
            config.epsilon = flags.epsilon.unwrap_or(config.epsilon);
            config.tol = flags.tol.unwrap_or(config.tol);
            config.max_iter = flags.max_iter.unwrap_or(config.max_iter);
            config.validate().map_err(|e| flag_error(&e.to_string()))?;
            let sol = match solve_entropic_tensor(&problem.marginals, tensor, &config) {
                Ok(sol) => sol,
                Err(Error::NotConverged(sol)) => *sol,
                Err(e) => return Err(e.into()),
            };
            Ok(Solved {
                plan: sol.plan,
                potentials: sol.potentials,
                report: sol.report,
                converged: sol.converged,
            })
        }
    }
}

/// Fills plan, potentials and certificate from the thresholded support.
fn solved_report(
    command: &str,
    file: &ProblemFile,
    problem: &Problem,
    tensor: &CostTensor,
    solved: &Solved,
    flags: &Flags,
) -> Result<ReportFile, CliError> {
    let threshold = flags.support_threshold;
    let mut out = ReportFile::new(command, threshold);
    let pruned = solved.plan.pruned(threshold);
    out.certificate = Some(verify_certificate(&pruned, &solved.potentials, tensor, &problem.marginals)?);
    out.report = Some(solved.report.clone());
    out.converged = Some(solved.converged);
    out.plan = support_entries(&solved.plan, threshold);
    out.potentials = Some(solved.potentials.clone());
    out.problem = Some(file.clone());
    Ok(out)
}

fn summarize(report: &SolveReport) {
    eprintln!(
        "{}: primal {:.12} dual {:.12} gap {:.3e} ({} iterations)",
        report.solver, report.primal_value, report.dual_value, report.gap, report.iterations
    );
}

fn not_converged(iterations: usize) -> i32 {
    eprintln!("error: solver did not converge within {iterations} sweeps");
    3
}

pub fn cmd_solve(file: &ProblemFile, flags: &Flags) -> Result<i32, CliError> {
    let problem = file.validate()?;
    let tensor = materialize_tensor(&problem.cost, &problem.marginals)?;
    let solved = solve(&problem, &tensor, flags)?;
    let out = solved_report("solve", file, &problem, &tensor, &solved, flags)?;
    summarize(&solved.report);
    emit(&out, flags)?;
    Ok(if solved.converged { 0 } else { not_converged(solved.report.iterations) })
}

/// Generators of a family of diagonal actions, one permutation each.
fn diagonal_generators(problem: &Problem) -> Result<Vec<Permutation>, CliError> {
    problem
        .actions
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let first = a.perm(0);
            if a.maps.iter().any(|m| &m.perm != first) {
                return Err(CliError::Input {
                    pointer: format!("/actions/{k}/maps"),
                    message: "--equal-marginals needs the same permutation on every marginal".into(),
                });
            }
            Ok(first.clone())
        })
        .collect()
}

pub fn cmd_symmetrize(file: &ProblemFile, equal_marginals: bool, flags: &Flags) -> Result<i32, CliError> {
    let problem = file.validate()?;
    let marginals = &problem.marginals;
    let tensor = materialize_tensor(&problem.cost, marginals)?;
    let family = if problem.actions.is_empty() {
        ActionFamily::trivial(marginals)
    } else {
        generate_group(&problem.actions, DEFAULT_GROUP_CAP)?
    };
    for g in &family.generators {
        let deviation = tensor.deviation_under_perms(&g.perm_slices());
        if deviation > mmot::symmetrize::INVARIANCE_TOL {
            return Err(Error::CostNotInvariant { deviation }.into());
        }
    }
    let n = marginals.len();
    if problem.sigma {
        mmot::SigmaShift::new(marginals)?;
        let deviation = tensor.deviation_under(|t, out| {
            for k in 0..n {
                out[k] = t[(k + 1) % n];
            }
        });
        if deviation > mmot::symmetrize::INVARIANCE_TOL {
            return Err(Error::CostNotInvariant { deviation }.into());
        }
    }
    let generators = if equal_marginals { Some(diagonal_generators(&problem)?) } else { None };

    let solved = solve(&problem, &tensor, flags)?;
    if !solved.converged {
        return Ok(not_converged(solved.report.iterations));
    }
    let mut out = solved_report("symmetrize", file, &problem, &tensor, &solved, flags)?;

    let mut averaged = average_plan(&solved.plan, &family, marginals)?;
    let mut invariance = plan_invariance_error(&averaged, &family);
    if problem.sigma {
        averaged = average_plan_sigma(&averaged, marginals)?;
        invariance = plan_invariance_error(&averaged, &family).max(plan_sigma_error(&averaged));
    }

    let (potentials, residual) = match &generators {
        Some(gens) => {
            let psi = commuting_family_symmetrize(&solved.potentials, gens, marginals, &tensor)?;
            let residual = kdp_residual(&psi.to_min_form(tensor.sense()), &tensor);
            (psi, residual)
        }
        None => {
            let trace = symmetrize_dual(&solved.potentials, &family, marginals, &tensor)?;
            let psi = trace.potentials();
            let residual = trace.kdp_residual;
            out.trace = Some(trace);
            (psi, residual)
        }
    };
    let orbit_spread = (0..n)
        .map(|j| family.orbits(j).max_spread(&potentials.vectors[j]))
        .fold(0.0, f64::max);
    let summary = SymmetrizationSummary {
        group_order: family.order(),
        sigma: problem.sigma,
        equal_marginals,
        plan_value_before: solved.plan.cost(&tensor),
        plan_value_after: averaged.cost(&tensor),
        dual_value_before: solved.potentials.dual_value(marginals),
        dual_value_after: potentials.dual_value(marginals),
        plan_invariance_error: invariance,
        kdp_residual: residual,
        orbit_spread,
        plan: support_entries(&averaged, flags.support_threshold),
        potentials,
    };
    summarize(&solved.report);
    eprintln!(
        "symmetrized over {} elements: plan {:.12} -> {:.12}, dual {:.12} -> {:.12}, invariance {:.3e}, kdp residual {:.3e}",
        summary.group_order,
        summary.plan_value_before,
        summary.plan_value_after,
        summary.dual_value_before,
        summary.dual_value_after,
        summary.plan_invariance_error,
        summary.kdp_residual
    );
    out.symmetrization = Some(summary);
    emit(&out, flags)?;
    Ok(0)
}

fn product_guard(points: usize, n: usize) -> Result<(), CliError> {
    let size = (points as f64).powi(n as i32);
    if size > SOLVE_LIMIT as f64 {
        return Err(flag_error(&format!(
            "product space of {points}^{n} cells exceeds the limit of {SOLVE_LIMIT}"
        )));
    }
    Ok(())
}

fn print_theorem(report: &TheoremReport) {
    eprintln!("{}: {}", report.name, if report.passed { "PASS" } else { "FAIL" });
    for (name, value) in &report.metrics {
        eprintln!("  {name} = {value}");
    }
    for line in report.details.lines() {
        eprintln!("  note: {line}");
    }
}

pub fn cmd_demo(name: DemoName, radii: &[f64], m: usize, n: usize, flags: &Flags) -> Result<i32, CliError> {
    if m == 0 {
        return Err(flag_error("--m must be at least 1"));
    }
    let report = match name {
        DemoName::Determinant => {
            if n != 2 {
                return Err(flag_error("the determinant demo supports --n 2 only"));
            }
            product_guard(radii.len() * m, 2)?;
            determinant_check(radii, m).map_err(input_or_core)?
        }
        DemoName::Coulomb => {
            if !(2..=3).contains(&n) {
                return Err(flag_error("the coulomb demo supports --n 2 or --n 3"));
            }
            product_guard(radii.len() * m, n)?;
            coulomb_check(radii, m, n).map_err(input_or_core)?
        }
    };
    print_theorem(&report);
    let passed = report.passed;
    let mut out = ReportFile::new("demo", flags.support_threshold);
    out.theorems.push(report);
    emit(&out, flags)?;
    Ok(if passed { 0 } else { 5 })
}

fn input_or_core(e: Error) -> CliError {
    match e {
        Error::InvalidConfig(message) => CliError::Input {
            pointer: String::new(),
            message,
        },
        other => other.into(),
    }
}

pub fn cmd_gen(seed: u64, n: usize, m: usize, flags: &Flags) -> Result<i32, CliError> {
    if n < 2 || m == 0 {
        return Err(flag_error("gen needs --n of at least 2 and --m of at least 1"));
    }
    product_guard(m, n)?;
    let inst = random_instance(seed, n, m, &GenOptions::default())?;
    emit(&ProblemFile::from_instance(&inst), flags)?;
    Ok(0)
}
