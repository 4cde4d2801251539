//! One PASS/FAIL line per acceptance criterion. Run with
//! `cargo test --release -p narrowfd --test acceptance`; `ACCEPTANCE_ONLY=C4,C8`
//! restricts the run.
//!
//! Every criterion is a list of named checks. `EXPECTED_FAILURES` names the checks
//! known to be unattainable as stated; such a criterion is reported as an expected
//! failure only when exactly those checks fail, and the run fails if they start
//! passing or anything else fails.

use std::time::Instant;

use narrowfd::fd_ops::{central_gradient, hessian_bundle, Mat};
use narrowfd::grid::{Domain, Grid, GridFunction, Point};
use narrowfd::problems::{by_name, ControlSet, GaussCurvature, MongeAmpere, Problem, PROBLEM_NAMES};
use narrowfd::scheme::{
    audit_consistency, audit_gmonotonicity, audit_reduced_form, corrupted, FhatOperator, GmonoMode, Scheme, SchemeParams,
};
use narrowfd::solver::{default_schedule, estimate_rho, schedule_to, solve, solve_pseudo_time, Method, SolveConfig};
use narrowfd::verify::{run_convergence, run_lemma_battery, ConvergenceTable, OrderMeasure, DEFAULT_SEED};
use narrowfd::Error;

const EXPECTED_FAILURES: &[(&str, &[&str], &str)] = &[
    (
        "C3",
        &["gamma10_final_order"],
        "γ=10 order on sides 24→32 is 1.79, the reference errors themselves give 1.80 there; \
         still pre-asymptotic (1.97 on 32→48) and unchanged when the control sample is refined 4×4",
    ),
    (
        "C7",
        &["symmetrization_plain"],
        "‖σI - FB‖₂ ≤ σ is false for non-commuting F, B (e.g. F = diag(1,100), B = 11ᵀ); \
         the bound holds in the F-weighted norm, ‖σI - RBR*‖₂ ≤ σ",
    ),
];

struct Outcome {
    id: &'static str,
    checks: Vec<(&'static str, bool)>,
    detail: String,
}

impl Outcome {
    fn failed(&self) -> Vec<&'static str> {
        self.checks.iter().filter(|(_, ok)| !ok).map(|(name, _)| *name).collect()
    }
}

fn within(x: f64, lo: f64, hi: f64) -> bool {
    x >= lo && x <= hi
}

fn within_factor(got: &[f64], reference: &[f64], factor: f64) -> bool {
    got.len() == reference.len() && got.iter().zip(reference).all(|(g, r)| g / r <= factor && r / g <= factor)
}

fn orders(t: &ConvergenceTable) -> Vec<f64> {
    t.orders().into_iter().flatten().collect()
}

fn last(v: &[f64], n: usize) -> &[f64] {
    &v[v.len().saturating_sub(n)..]
}

fn final_in(v: &[f64], lo: f64, hi: f64) -> bool {
    v.last().is_some_and(|&x| within(x, lo, hi))
}

fn fmt(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(" ")
}

fn fmt_orders(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ")
}

fn all_converged(t: &ConvergenceTable) -> bool {
    t.rows.iter().all(|r| r.converged)
}

fn sides(s: &[usize]) -> Vec<[usize; 2]> {
    s.iter().map(|&n| [n, n]).collect()
}

fn continuation(name: &str, target: (f64, f64)) -> SolveConfig {
    SolveConfig { continuation: schedule_to(name, target), ..SolveConfig::default() }
}

fn linear_tables() -> Vec<Outcome> {
    let interior = [10usize, 40, 80, 120, 180, 240, 300];
    let meshes: Vec<[usize; 2]> = interior.iter().map(|&n| [n + 2, n + 2]).collect();
    let cfg = SolveConfig { method: Method::LinearDirect, ..SolveConfig::default() };
    let params = SchemeParams::new(0.0, 0.0);
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let p1 = by_name("linear1", ControlSet::default()).unwrap();
    let start = Instant::now();
    let head = single.install(|| run_convergence(p1.as_ref(), params, &meshes[..4], &cfg, OrderMeasure::Axis)).unwrap();
    let head_time = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let full = single.install(|| run_convergence(p1.as_ref(), params, &meshes, &cfg, OrderMeasure::Axis)).unwrap();
    let full_time = start.elapsed().as_secs_f64();
    let o = orders(&head);
    let c1 = Outcome {
        id: "C1",
        checks: vec![
            ("converged", all_converged(&full)),
            ("orders", last(&o, 2).iter().all(|&x| within(x, 1.85, 2.15))),
            ("errors", within_factor(&head.errors(), &[5.77e-2, 3.86e-3, 9.79e-4, 4.40e-4], 2.0)),
            ("runtime", head_time <= 30.0),
            ("runtime_full", full_time <= 600.0),
        ],
        detail: format!(
            "errors [{}] orders [{}] | to N=300 [{}] | {head_time:.1}s, full {full_time:.1}s (1 thread)",
            fmt(&head.errors()),
            fmt_orders(&o),
            fmt(&full.errors())
        ),
    };
    let p2 = by_name("linear2", ControlSet::default()).unwrap();
    let t2 = run_convergence(p2.as_ref(), params, &meshes, &cfg, OrderMeasure::Axis).unwrap();
    let o2 = orders(&t2);
    let c2 = Outcome {
        id: "C2",
        checks: vec![("converged", all_converged(&t2)), ("orders", last(&o2, 3).iter().all(|&x| within(x, 1.25, 1.55)))],
        detail: format!("errors [{}] orders [{}]", fmt(&t2.errors()), fmt_orders(&o2)),
    };
    vec![c1, c2]
}

fn hjb_tables() -> Vec<Outcome> {
    let p = by_name("hjb", ControlSet::default()).unwrap();
    let meshes = sides(&[10, 16, 24, 32]);
    let start = Instant::now();
    let tables: Vec<ConvergenceTable> = [0.0, 10.0, 1000.0]
        .iter()
        .map(|&g| run_convergence(p.as_ref(), SchemeParams::new(g, 0.0), &meshes, &continuation("hjb", (g, 0.0)), OrderMeasure::Diag).unwrap())
        .collect();
    let elapsed = start.elapsed().as_secs_f64();
    let reference = [[2.35e-2, 1.03e-2, 4.96e-3, 2.92e-3], [6.08e-1, 3.34e-1, 1.73e-1, 1.01e-1], [1.30, 1.27, 1.22, 1.15]];
    let (e0, e10, e1000) = (tables[0].errors(), tables[1].errors(), tables[2].errors());
    let (o0, o10) = (orders(&tables[0]), orders(&tables[1]));
    vec![Outcome {
        id: "C3",
        checks: vec![
            ("converged", tables.iter().all(all_converged)),
            ("gamma0_final_order", final_in(&o0, 1.6, 2.0)),
            ("gamma10_final_order", final_in(&o10, 1.8, 2.3)),
            ("gamma1000_larger", e1000.iter().zip(&e0).all(|(a, b)| a > b)),
            ("errors", tables.iter().zip(&reference).all(|(t, r)| within_factor(&t.errors(), r, 3.0))),
            ("runtime", elapsed <= 300.0),
        ],
        detail: format!(
            "g=0 [{}] ord [{}] | g=10 [{}] ord [{}] | g=1000 [{}] | {elapsed:.1}s",
            fmt(&e0),
            fmt_orders(&o0),
            fmt(&e10),
            fmt_orders(&o10),
            fmt(&e1000)
        ),
    }]
}

fn monge_tables() -> Vec<Outcome> {
    let p = MongeAmpere::new();
    let meshes = sides(&[6, 12, 24, 48]);
    let start = Instant::now();
    let run = |g: f64, s: f64| {
        run_convergence(&p, SchemeParams::new(g, s), &meshes, &continuation("monge_ampere", (g, s)), OrderMeasure::Diag).unwrap()
    };
    let (t0, t1) = (run(0.0, 0.0), run(-1.0, 1.0));
    let elapsed = start.elapsed().as_secs_f64();
    let (o0, o1) = (orders(&t0), orders(&t1));
    vec![Outcome {
        id: "C4",
        checks: vec![
            ("converged", all_converged(&t0) && all_converged(&t1)),
            ("errors", within_factor(&t0.errors(), &[1.57e-2, 3.41e-3, 7.87e-4, 1.88e-4], 2.0)),
            ("orders", last(&o0, 2).iter().all(|&x| within(x, 1.9, 2.1))),
            ("sigma1_final_order", final_in(&o1, 1.9, 2.1)),
            ("sigma1_errors", within_factor(&t1.errors(), &[1.47e-2, 3.05e-3, 7.00e-4, 1.67e-4], 2.0)),
            ("runtime", elapsed <= 180.0),
        ],
        detail: format!(
            "s=0 [{}] ord [{}] | s=1 [{}] ord [{}] | {elapsed:.1}s",
            fmt(&t0.errors()),
            fmt_orders(&o0),
            fmt(&t1.errors()),
            fmt_orders(&o1)
        ),
    }]
}

fn gauss_table() -> Vec<Outcome> {
    let p = GaussCurvature::new(0.1);
    let meshes = sides(&[6, 12, 24, 48]);
    let t = run_convergence(&p, SchemeParams::new(0.0, 0.0), &meshes, &continuation("gauss_curvature", (0.0, 0.0)), OrderMeasure::Diag)
        .unwrap();
    let o = orders(&t);
    vec![Outcome {
        id: "C5",
        checks: vec![
            ("converged", all_converged(&t)),
            ("final_order", final_in(&o, 1.9, 2.2)),
            ("errors", within_factor(&t.errors(), &[2.19e-2, 3.89e-3, 8.20e-4, 1.90e-4], 2.0)),
        ],
        detail: format!("errors [{}] ord [{}]", fmt(&t.errors()), fmt_orders(&o)),
    }]
}

fn cold_start() -> Vec<Outcome> {
    let p = MongeAmpere::new();
    let grid = Grid::new(p.domain(), [24, 24]).unwrap();
    let scheme = Scheme::new(&grid, &p, SchemeParams::new(0.0, 0.0)).unwrap();
    let cold = solve(&scheme, &SolveConfig::default()).unwrap();
    let warm = solve(&scheme, &SolveConfig { continuation: default_schedule("monge_ampere"), ..SolveConfig::default() }).unwrap();
    vec![Outcome {
        id: "C6",
        checks: vec![("cold_not_converged", !cold.report.converged), ("continuation_converged", warm.report.converged)],
        detail: format!(
            "cold converged={} ({}) | continuation converged={} residual {:.2e}",
            cold.report.converged,
            cold.report.message.unwrap_or_default(),
            warm.report.converged,
            warm.report.final_residual_linf
        ),
    }]
}

fn lemma_battery() -> Vec<Outcome> {
    let b = run_lemma_battery(DEFAULT_SEED, 100).unwrap();
    let s = &b.symmetrization;
    vec![Outcome {
        id: "C7",
        checks: vec![
            ("hessian", b.hessian.passed),
            ("spd_l", b.spd.passed),
            ("symmetrization_plain", s.plain_failures == 0),
            ("symmetrization_weighted", s.weighted_failures == 0 && s.edge_cases_passed),
            ("contraction", b.contraction.iter().all(|c| c.passed)),
            ("runtime", b.wall_time <= 60.0),
        ],
        detail: format!(
            "symmetrization plain {}/{} trials violate (worst ratio {:.3}), weighted {} | {:.1}s",
            s.plain_failures,
            s.trials * s.sizes.len(),
            s.worst_plain_ratio,
            s.weighted_failures,
            b.wall_time
        ),
    }]
}

fn converged_state(p: &dyn Problem<2>, name: &str, side: usize) -> Result<(Grid<2>, Vec<f64>), String> {
    let grid = Grid::new(p.domain(), [side, side]).unwrap();
    let scheme = Scheme::new(&grid, p, SchemeParams::new(-1.0, 1.0)).unwrap();
    let sol = solve(&scheme, &continuation(name, (-1.0, 1.0))).unwrap();
    if !sol.report.converged {
        return Err(format!("{name} side {side} did not converge: {:?}", sol.report.message));
    }
    Ok((grid, sol.u))
}

fn audits() -> Vec<Outcome> {
    let mut notes = Vec::new();
    let mut structural = true;
    let controls = ControlSet::with_counts(4, 8);
    for name in PROBLEM_NAMES {
        let p = by_name(name, controls).unwrap();
        for params in [SchemeParams::new(0.0, 0.0), SchemeParams::new(-1.0, 1.0), SchemeParams::new(10.0, 0.0)] {
            let op = FhatOperator::new(p.as_ref(), params);
            let c = audit_consistency(&op, p.as_ref(), 1000, DEFAULT_SEED, 1e-10).unwrap();
            let r = audit_reduced_form(&op, p.as_ref(), 1000, DEFAULT_SEED, 1e-12).unwrap();
            structural &= c.passed && r.passed;
            if !(c.passed && r.passed) {
                notes.push(format!("{name} {params:?}: consistency {:.2e} reduced {:.2e}", c.max_deviation, r.max_change));
            }
        }
    }
    let mut gmono = true;
    let mut worst_gmono = 0.0f64;
    let ma = MongeAmpere::new();
    let gc = GaussCurvature::new(0.1);
    for (p, name) in [(&ma as &dyn Problem<2>, "monge_ampere"), (&gc as &dyn Problem<2>, "gauss_curvature")] {
        match converged_state(p, name, 16) {
            Ok((grid, u)) => {
                let scheme = Scheme::new(&grid, p, SchemeParams::new(-1.0, 1.0)).unwrap();
                let g = audit_gmonotonicity(&scheme, &u, GmonoMode::Linearized, None).unwrap();
                gmono &= g.passed;
                worst_gmono = worst_gmono.max(g.worst_violation);
            }
            Err(e) => {
                gmono = false;
                notes.push(e);
            }
        }
    }
    let bad = corrupted::MomentOnAverage(FhatOperator::new(&ma, SchemeParams::new(-1.0, 1.0)));
    let caught_operator = !audit_consistency(&bad, &ma, 1000, DEFAULT_SEED, 1e-10).unwrap().passed;
    let (caught_concave, caught_rho) = match converged_state(&ma, "monge_ampere", 16) {
        Ok((grid, u)) => {
            let scheme = Scheme::new(&grid, &ma, SchemeParams::new(-1.0, 1.0)).unwrap();
            let concave: Vec<f64> = grid
                .interior_ids()
                .iter()
                .map(|&k| {
                    let x = grid.coords(k);
                    ma.boundary(&x) - 20.0 * (x[0] * x[0] + x[1] * x[1])
                })
                .collect();
            let concave_caught = !audit_gmonotonicity(&scheme, &concave, GmonoMode::Linearized, Some(&u)).unwrap().passed;
            let rho = 4.0 * estimate_rho(&scheme, &u).unwrap();
            let cfg = SolveConfig { method: Method::PseudoTime, rho: Some(rho), ..SolveConfig::default() };
            // started away from the fixed point so the iteration has something to amplify
            let start: Vec<f64> = u.iter().enumerate().map(|(i, v)| v + 1e-3 * ((i * 37 % 11) as f64 - 5.0)).collect();
            (concave_caught, matches!(solve_pseudo_time(&scheme, &start, &cfg), Err(Error::Diverged(_))))
        }
        Err(_) => (false, false),
    };
    vec![Outcome {
        id: "C8",
        checks: vec![
            ("consistency_and_reduced_form", structural),
            ("gmonotone_at_converged", gmono),
            ("negative_corrupted_operator", caught_operator),
            ("negative_concave_state", caught_concave),
            ("negative_oversized_rho", caught_rho),
        ],
        detail: format!("worst g-monotonicity violation {worst_gmono:.2e} {}", notes.join("; ")),
    }]
}

fn polynomial_exactness() -> Vec<Outcome> {
    let grid = Grid::new(Domain::cube(0.0, 1.0).unwrap(), [10, 10]).unwrap();
    let mut worst = 0.0f64;
    let coeffs = [(1.0, -2.0, 0.5, 3.0, -1.0, 0.25), (0.0, 0.0, 0.0, 1.0, 0.0, 0.0), (-4.0, 1.0, 2.0, 0.0, 0.0, 7.0)];
    for (a, b, c, d, e, f) in coeffs {
        let u = move |x: &Point<2>| a * x[0] * x[0] + b * x[0] * x[1] + c * x[1] * x[1] + d * x[0] + e * x[1] + f;
        let mut gf = GridFunction::sample(&grid, u);
        // ghosts recomputed from the discrete auxiliary condition with the exact Laplacian
        gf.apply_auxiliary(Some(&vec![2.0 * a + 2.0 * c; grid.mesh_len()]));
        let want = Mat::<2>::new(2.0 * a, b, b, 2.0 * c);
        for &k in grid.interior_ids() {
            let x = grid.coords(k);
            let g = central_gradient(&gf, k).unwrap();
            worst = worst.max((g[0] - (2.0 * a * x[0] + b * x[1] + d)).abs());
            worst = worst.max((g[1] - (b * x[0] + 2.0 * c * x[1] + e)).abs());
            let h = hessian_bundle(&gf, k).unwrap();
            for m in [h.dpp, h.dpm, h.dmp, h.dmm] {
                worst = worst.max((m - want).abs().max());
            }
        }
    }
    vec![Outcome { id: "C9", checks: vec![("exactness", worst <= 1e-11)], detail: format!("max deviation {worst:.2e}") }]
}

fn main() {
    let start = Instant::now();
    let runs: [(&[&str], fn() -> Vec<Outcome>); 8] = [
        (&["C1", "C2"], linear_tables),
        (&["C3"], hjb_tables),
        (&["C4"], monge_tables),
        (&["C5"], gauss_table),
        (&["C6"], cold_start),
        (&["C7"], lemma_battery),
        (&["C8"], audits),
        (&["C9"], polynomial_exactness),
    ];
    let only = std::env::var("ACCEPTANCE_ONLY").ok();
    let selected = |ids: &[&str]| only.as_deref().is_none_or(|list| list.split(',').any(|id| ids.contains(&id)));
    let mut unexpected = Vec::new();
    for (ids, run) in runs {
        if !selected(ids) {
            continue;
        }
        for o in run() {
            let failed = o.failed();
            let known = EXPECTED_FAILURES.iter().find(|(id, _, _)| *id == o.id);
            let tag = match (failed.is_empty(), known) {
                (true, None) => "PASS".to_string(),
                (false, Some((_, checks, _))) if failed == *checks => "FAIL (expected)".to_string(),
                (true, Some(_)) => "PASS (expected to fail)".to_string(),
                _ => format!("FAIL {failed:?}"),
            };
            if !(tag == "PASS" || tag == "FAIL (expected)") {
                unexpected.push(o.id);
            }
            println!("{} {tag}: {}", o.id, o.detail);
            if let Some((_, checks, why)) = known {
                println!("   known failure {checks:?}: {why}");
            }
        }
    }
    println!("acceptance finished in {:.1}s", start.elapsed().as_secs_f64());
    if !unexpected.is_empty() {
        eprintln!("unexpected outcome for {unexpected:?}");
        std::process::exit(1);
    }
}
