//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

mod common;

use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

use mmot::apps::{coulomb_check, determinant_check, RadialInstance};
use mmot::cost::{coulomb, materialize_tensor};
use mmot::gen::{random_instance, GenOptions};
use mmot::group::{generate_group, DEFAULT_GROUP_CAP};
use mmot::lp::{solve_tensor, vertex_support_bound, LpOptions};
use mmot::plan::verify_certificate;
use mmot::sinkhorn::{epsilon_sweep, solve_entropic_tensor};
use mmot::symmetrize::{average_plan, plan_invariance_error, symmetrize_dual};
use mmot::{ActionFamily, CostKind, CostSpec, CostTensor, DiscreteMarginal, EntropicConfig, ProductAction, Sense};

const PROPERTY_CASES: u32 = 256;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed < Duration::from_secs(limit_secs)
}

/// 50 seeded instances across arities, with forbidden cells.
fn strong_duality() -> Outcome {
    let start = Instant::now();
    let mut worst_gap = 0.0f64;
    let mut worst_residual = 0.0f64;
    let mut worst_feasibility = 0.0f64;
    let mut bound_ok = true;
    let mut count = 0;
    for k in 0..50u64 {
        let seed = 1000 + k;
        let (n, m) = match k % 10 {
            0..=3 => (2, 2 + (seed as usize * 7) % 19),
            4..=6 => (3, 2 + (seed as usize * 5) % 7),
            _ => (4, 2 + (seed as usize * 3) % 4),
        };
        let inst = random_instance(seed, n, m, &GenOptions::default()).unwrap();
        let tensor = materialize_tensor(&inst.cost, &inst.marginals).unwrap();
        let sol = match solve_tensor(&inst.marginals, &tensor, &LpOptions::default()) {
            Ok(sol) => sol,
            Err(e) => return outcome(false, format!("seed {seed} (n={n}, m={m}) failed: {e}")),
        };
        let cert = verify_certificate(&sol.plan, &sol.potentials, &tensor, &inst.marginals).unwrap();
        worst_gap = worst_gap.max(sol.report.gap).max(cert.gap);
        worst_feasibility = worst_feasibility.max(cert.max_feasibility_violation);
        worst_residual = worst_residual.max(sol.plan.marginal_residual(&inst.marginals));
        bound_ok &= sol.plan.support_len(0.0) <= vertex_support_bound(&inst.marginals);
        count += 1;
    }
    let elapsed = start.elapsed();
    outcome(
        worst_gap <= 1e-8 && worst_residual <= 1e-10 && worst_feasibility <= 1e-9 && bound_ok && within(elapsed, 60),
        format!(
            "{count} instances, max gap {worst_gap:.2e}, max residual {worst_residual:.2e}, \
             max dual violation {worst_feasibility:.2e}, vertex bound {}, {elapsed:.2?}",
            if bound_ok { "held" } else { "violated" }
        ),
    )
}

/// Uniform `n = 2` instances against enumeration of all permutations.
fn assignment_oracle() -> Outcome {
    let options = GenOptions {
        uniform_weights: true,
        ..GenOptions::default()
    };
    let mut worst = 0.0f64;
    let mut count = 0;
    for m in 1..=6 {
        for s in 0..5u64 {
            let inst = random_instance(7000 + 10 * m as u64 + s, 2, m, &options).unwrap();
            let CostKind::Table(values) = &inst.cost.kind else { unreachable!() };
            let oracle = common::brute_force_assignment(m, |i, j| values[i * m + j]);
            let tensor = materialize_tensor(&inst.cost, &inst.marginals).unwrap();
            let sol = solve_tensor(&inst.marginals, &tensor, &LpOptions::default()).unwrap();
            worst = worst.max((sol.report.primal_value - oracle).abs());
            count += 1;
        }
    }
    outcome(worst <= 1e-9, format!("{count} instances, max |LP - brute force| {worst:.2e}"))
}

struct Demo {
    name: String,
    marginals: Vec<DiscreteMarginal>,
    tensor: CostTensor,
    family: ActionFamily,
}

fn radial_demo(name: &str, radii: &[f64], m: usize, n: usize, spec: CostSpec) -> Demo {
    let inst = RadialInstance::new(radii, m).unwrap();
    let marginals = inst.marginals(n);
    let tensor = materialize_tensor(&spec, &marginals).unwrap();
    let family = generate_group(&[inst.action(n)], DEFAULT_GROUP_CAP).unwrap();
    Demo {
        name: name.to_string(),
        marginals,
        tensor,
        family,
    }
}

/// Uniform 2×2 with a cost depending only on the second point, and the swap
/// of the first marginal's points.
fn swap_demo() -> Demo {
    let u = DiscreteMarginal::uniform("u", vec![vec![0.0], vec![1.0]]).unwrap();
    let marginals = vec![u.clone(), u];
    let tensor = materialize_tensor(&CostSpec::table(vec![0.0, 1.0, 0.0, 1.0], Sense::Min), &marginals).unwrap();
    let swap = ProductAction::from_perms(vec![vec![1, 0], vec![0, 1]]).unwrap();
    let family = generate_group(&[swap], DEFAULT_GROUP_CAP).unwrap();
    Demo {
        name: "swap 2x2".into(),
        marginals,
        tensor,
        family,
    }
}

fn coulomb_demos() -> Vec<Demo> {
    vec![
        radial_demo("coulomb C4", &[1.0], 4, 2, CostSpec::coulomb()),
        radial_demo("coulomb C8", &[1.0], 8, 2, CostSpec::coulomb()),
        radial_demo("coulomb C3 n=3", &[1.0], 3, 3, CostSpec::coulomb()),
        swap_demo(),
    ]
}

fn all_demos() -> Vec<Demo> {
    let mut demos = coulomb_demos();
    for (radii, m) in [(&[1.0][..], 4), (&[1.0][..], 8), (&[1.0, 2.0][..], 4), (&[1.0, 2.0][..], 8)] {
        demos.push(radial_demo(
            &format!("determinant r={radii:?} m={m}"),
            radii,
            m,
            2,
            CostSpec::determinant(),
        ));
    }
    demos.push(radial_demo("coulomb two circles C4", &[1.0, 2.0], 4, 2, CostSpec::coulomb()));
    demos
}

/// Plan averaging keeps the cost and lands on a group-invariant plan.
fn plan_averaging() -> Outcome {
    let start = Instant::now();
    let mut worst_value = 0.0f64;
    let mut worst_invariance = 0.0f64;
    let mut names = Vec::new();
    for demo in coulomb_demos() {
        let sol = solve_tensor(&demo.marginals, &demo.tensor, &LpOptions::default()).unwrap();
        let avg = average_plan(&sol.plan, &demo.family, &demo.marginals).unwrap();
        worst_value = worst_value.max((avg.cost(&demo.tensor) - sol.plan.cost(&demo.tensor)).abs());
        worst_invariance = worst_invariance.max(plan_invariance_error(&avg, &demo.family));
        names.push(demo.name);
    }
    let elapsed = start.elapsed();
    outcome(
        worst_value <= 1e-9 && worst_invariance <= 1e-9 && within(elapsed, 10),
        format!(
            "{}: max |dI| {worst_value:.2e}, max |g#avg - avg|_1 {worst_invariance:.2e}, {elapsed:.2?}",
            names.join(", ")
        ),
    )
}

/// Dual symmetrization keeps the value, reaches a conjugation fixed point,
/// and is exactly constant on orbits.
fn dual_symmetrization() -> Outcome {
    let mut worst_value = 0.0f64;
    let mut worst_kdp = 0.0f64;
    let mut worst_spread = 0.0f64;
    let mut count = 0;
    for demo in all_demos() {
        let sol = solve_tensor(&demo.marginals, &demo.tensor, &LpOptions::default()).unwrap();
        let trace = match symmetrize_dual(&sol.potentials, &demo.family, &demo.marginals, &demo.tensor) {
            Ok(t) => t,
            Err(e) => return outcome(false, format!("{}: {e}", demo.name)),
        };
        let psi = trace.potentials();
        worst_value = worst_value.max((psi.dual_value(&demo.marginals) - sol.report.dual_value).abs());
        worst_kdp = worst_kdp.max(trace.kdp_residual);
        for j in 0..psi.arity() {
            worst_spread = worst_spread.max(demo.family.orbits(j).max_spread(&psi.vectors[j]));
        }
        count += 1;
    }
    outcome(
        worst_value <= 1e-8 && worst_kdp <= 1e-9 && worst_spread == 0.0,
        format!(
            "{count} demos, max value change {worst_value:.2e}, max kdp residual {worst_kdp:.2e}, \
             max orbit spread {worst_spread:e}"
        ),
    )
}

fn determinant_reproduction() -> Outcome {
    let start = Instant::now();
    let mut lines = Vec::new();
    let mut passed = true;
    for radii in [&[1.0][..], &[1.0, 2.0][..]] {
        for m in [4, 8] {
            let report = match determinant_check(radii, m) {
                Ok(r) => r,
                Err(e) => return outcome(false, format!("radii {radii:?} m={m}: {e}")),
            };
            let ok = report.passed
                && report.metrics["certificate_error"] <= 1e-8
                && report.metrics["support_pairs_not_orthogonal_basis"] == 0.0;
            passed &= ok;
            lines.push(format!("{radii:?}/m={m} value {:.12}", report.metrics["lp_value"]));
        }
    }
    let unit = determinant_check(&[1.0], 4).unwrap().metrics["lp_value"];
    passed &= (unit - 1.0).abs() <= 1e-8;
    let elapsed = start.elapsed();
    outcome(passed && within(elapsed, 5), format!("{}; {elapsed:.2?}", lines.join(", ")))
}

fn coulomb_reproduction() -> Outcome {
    let start = Instant::now();
    let inst = RadialInstance::new(&[1.0], 4).unwrap();
    let pts = &inst.marginal.points;
    let oracle = common::brute_force_assignment(4, |i, j| coulomb(&[&pts[i], &pts[j]]));
    let pair = coulomb_check(&[1.0], 4, 2).unwrap();
    let triple = coulomb_check(&[1.0], 3, 3).unwrap();
    let elapsed = start.elapsed();
    let value = pair.metrics["lp_value"];
    let passed = pair.passed
        && triple.passed
        && (value - 1.0).abs() <= 1e-9
        && (value - oracle).abs() <= 1e-9
        && triple.metrics["lp_gap"] <= 1e-8
        && within(elapsed, 10);
    outcome(
        passed,
        format!(
            "n=2 m=4 value {value:.12} (brute force {oracle}), n=3 m=3 gap {:.2e}, \
             invariance {:.2e}/{:.2e}, equality {}/{}, circle spread {}/{}; {elapsed:.2?}",
            triple.metrics["lp_gap"],
            pair.metrics["plan_invariance_error"],
            triple.metrics["plan_invariance_error"],
            pair.metrics["potential_inequality"],
            triple.metrics["potential_inequality"],
            pair.metrics["circle_spread"],
            triple.metrics["circle_spread"],
        ),
    )
}

fn entropic_consistency() -> Outcome {
    let u = DiscreteMarginal::uniform("u", vec![vec![0.0], vec![1.0]]).unwrap();
    let pair = vec![u.clone(), u];
    let spec = CostSpec::table(vec![0.0, 1.0, 1.0, 0.0], Sense::Min);
    let tensor = materialize_tensor(&spec, &pair).unwrap();
    let config = EntropicConfig {
        epsilon: 1.0,
        max_iter: 10_000,
        tol: 1e-12,
    };
    let sol = solve_entropic_tensor(&pair, &tensor, &config).unwrap();
    let e = 1f64.exp();
    let closed = 0.5 * e / (1.0 + e);
    let diag_error = (sol.plan.mass(0) - closed).abs().max((sol.plan.mass(3) - closed).abs());

    // sweep on a random instance: entropic plan costs fall toward the LP value
    let inst = random_instance(42, 3, 4, &GenOptions::default()).unwrap();
    let lp = solve_tensor(
        &inst.marginals,
        &materialize_tensor(&inst.cost, &inst.marginals).unwrap(),
        &LpOptions::default(),
    )
    .unwrap()
    .report
    .primal_value;
    let epsilons = [2.0, 1.0, 0.5, 0.2, 0.1, 0.05, 0.02];
    let sweep = epsilon_sweep(
        &inst.marginals,
        &inst.cost,
        &epsilons,
        &EntropicConfig {
            max_iter: 100_000,
            tol: 1e-11,
            ..EntropicConfig::default()
        },
    )
    .unwrap();
    let values: Vec<f64> = sweep.iter().map(|p| p.report.primal_value).collect();
    let monotone = values.windows(2).all(|w| w[1] <= w[0] + 1e-9) && values.iter().all(|&v| v >= lp - 1e-9);
    let gaps: Vec<f64> = sweep.iter().map(|p| p.gap_to_lp.unwrap()).collect();

    // symmetric instances: identical marginals and a slot-symmetric cost
    let tol = 1e-10;
    let sym_config = EntropicConfig {
        epsilon: 0.1,
        max_iter: 100_000,
        tol,
    };
    let mut worst_asym = 0.0f64;
    for (n, m, seed) in [(2, 5, 1u64), (2, 7, 2), (3, 4, 3)] {
        let base = random_instance(seed, n, m, &GenOptions {
            forbidden_fraction: 0.0,
            ..GenOptions::default()
        })
        .unwrap();
        let marginal = base.marginals[0].clone();
        let marginals = vec![marginal; n];
        let CostKind::Table(raw) = &base.cost.kind else { unreachable!() };
        let shape = mmot::ProductShape::of(&marginals).unwrap();
        let values: Vec<f64> = (0..shape.size())
            .map(|flat| {
                let mut t = shape.unflatten(flat);
                t.sort_unstable();
                raw[shape.flatten(&t)]
            })
            .collect();
        let tensor = materialize_tensor(&CostSpec::table(values, Sense::Min), &marginals).unwrap();
        let sol = solve_entropic_tensor(&marginals, &tensor, &sym_config).unwrap();
        let shifted = sol.plan.pushforward(|t, out| {
            for k in 0..n {
                out[k] = t[(k + 1) % n];
            }
        });
        worst_asym = worst_asym.max(sol.plan.max_abs_difference(&shifted));
    }

    outcome(
        diag_error <= 1e-6 && monotone && worst_asym <= 10.0 * tol,
        format!(
            "diagonal {:.9} vs {closed:.9} (error {diag_error:.2e}); sweep costs {} toward LP {lp:.6}, \
             gaps {:?}; max symmetric-plan asymmetry {worst_asym:.2e} (limit {:.0e})",
            sol.plan.mass(0),
            if monotone { "decrease" } else { "do NOT decrease" },
            gaps.iter().map(|g| format!("{g:.1e}")).collect::<Vec<_>>(),
            10.0 * tol
        ),
    )
}

fn property(name: &str, check: impl Fn(&mut TestRunner) -> Result<(), String>) -> (String, bool, String) {
    let mut runner = TestRunner::new(Config {
        cases: PROPERTY_CASES,
        failure_persistence: None,
        ..Config::default()
    });
    match check(&mut runner) {
        Ok(()) => (name.to_string(), true, format!("{PROPERTY_CASES} cases")),
        Err(e) => (name.to_string(), false, e),
    }
}

fn property_suites() -> Outcome {
    let results = [property("averaging idempotence", |r| {
            r.run(&any::<u64>(), common::averaging_idempotence).map_err(|e| e.to_string())
        }),
        property("integral conservation", |r| {
            r.run(&any::<u64>(), common::integral_conservation).map_err(|e| e.to_string())
        }),
        property("sandwich", |r| r.run(&any::<u64>(), common::sandwich).map_err(|e| e.to_string())),
        property("feasibility preservation", |r| {
            r.run(&any::<u64>(), common::feasibility_preservation).map_err(|e| e.to_string())
        }),
        property("invariance gate", |r| {
            r.run(&(any::<u64>(), 1e-6f64..1.0), |(seed, delta)| {
                common::gate_rejects_perturbation(seed, delta)
            })
            .map_err(|e| e.to_string())
        })];
    let passed = results.iter().all(|r| r.1);
    let detail = results
        .iter()
        .map(|(name, ok, d)| format!("{name}: {} ({d})", if *ok { "ok" } else { "FAILED" }))
        .collect::<Vec<_>>()
        .join("; ");
    outcome(passed, detail)
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 8] = [
        ("strong duality on 50 seeded random instances", strong_duality),
        ("LP equals assignment brute force (n=2, m<=6)", assignment_oracle),
        ("plan averaging: value kept, plan invariant", plan_averaging),
        ("dual symmetrization: value, fixed point, orbit constancy", dual_symmetrization),
        ("determinant demos: |x|^2/2 certificate and orthogonal support", determinant_reproduction),
        ("coulomb demos: value, invariance, equal radial potentials", coulomb_reproduction),
        ("entropic consistency", entropic_consistency),
        ("property suites", property_suites),
    ];
    let mut failures = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let result = run();
        if !result.passed {
            failures += 1;
        }
        println!(
            "criterion {} [{}] {name}: {}",
            k + 1,
            if result.passed { "PASS" } else { "FAIL" },
            result.detail
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
