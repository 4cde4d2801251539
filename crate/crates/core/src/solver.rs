//! Nonlinear solvers for the scheme residual: damped Newton, explicit pseudo-time
//! stepping and `(γ, σ)` continuation, plus a direct path for affine problems.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scheme::{eval_fhat, Scheme, SchemeParams};
use crate::sparse::{conjugate_gradient, SparseLu, SparseOperator};

pub use crate::scheme::hjb_pointwise_min;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    LinearDirect,
    Newton,
    PseudoTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Damping {
    None,
    Backtracking { max_halvings: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialGuess {
    Zero,
    /// Interior unknowns in lexicographic order.
    Given(Vec<f64>),
    /// Each continuation stage starts from the previous one; the first from zero.
    PreviousStage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveConfig {
    pub method: Method,
    /// Stop when `max |F̂| ≤ newton_tol`.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub damping: Damping,
    /// Newton also stops once `max |ΔU| ≤ step_tol` and the residual has stopped contracting.
    pub step_tol: f64,
    /// Pseudo-time step; estimated from the Jacobian when absent.
    pub rho: Option<f64>,
    pub max_sweeps: usize,
    /// Consecutive non-contracting sweeps that count as divergence.
    pub divergence_window: usize,
    /// `(γ, σ)` stages; empty means the scheme's own parameters.
    pub continuation: Vec<(f64, f64)>,
    pub initial_guess: InitialGuess,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            method: Method::Newton,
            newton_tol: 1e-10,
            newton_max_iter: 100,
            damping: Damping::Backtracking { max_halvings: 30 },
            step_tol: 1e-12,
            rho: None,
            max_sweeps: 200_000,
            divergence_window: 50,
            continuation: Vec::new(),
            initial_guess: InitialGuess::PreviousStage,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.newton_tol > 0.0) {
            return Err(Error::InvalidConfig(format!("newton_tol = {} must be positive", self.newton_tol)));
        }
        if self.newton_max_iter == 0 || self.max_sweeps == 0 {
            return Err(Error::InvalidConfig("iteration limits must be positive".into()));
        }
        if let Some(r) = self.rho {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::InvalidConfig(format!("rho = {r} must be positive")));
            }
        }
        if self.divergence_window == 0 {
            return Err(Error::InvalidConfig("divergence_window must be positive".into()));
        }
        if !(self.step_tol >= 0.0) {
            return Err(Error::InvalidConfig("step_tol must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub gamma: f64,
    pub sigma: f64,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
    /// Residual recomputed from explicitly stored ghosts.
    pub recheck: f64,
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub method: Method,
    pub converged: bool,
    pub iterations: usize,
    pub final_residual_linf: f64,
    pub residual_history: Vec<f64>,
    /// Per-sweep ℓ² contraction `‖U_{k+1} - U_k‖ / ‖U_k - U_{k-1}‖` of pseudo-time stepping.
    pub contraction: Vec<f64>,
    pub rho: Option<f64>,
    pub stage_history: Vec<StageReport>,
    pub message: Option<String>,
    pub wall_time: f64,
}

impl SolveReport {
    fn new(method: Method) -> Self {
        Self {
            method,
            converged: false,
            iterations: 0,
            final_residual_linf: f64::INFINITY,
            residual_history: Vec::new(),
            contraction: Vec::new(),
            rho: None,
            stage_history: Vec::new(),
            message: None,
            wall_time: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub u: Vec<f64>,
    pub report: SolveReport,
}

fn linf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn residual_norm<const D: usize>(scheme: &Scheme<'_, D>, u: &[f64]) -> Option<f64> {
    match scheme.residual(u) {
        Ok(r) => {
            let n = r.linf();
            n.is_finite().then_some(n)
        }
        Err(_) => None,
    }
}

/// Residual recomputed through the explicit-ghost route.
pub fn recheck_residual<const D: usize>(scheme: &Scheme<'_, D>, u: &[f64]) -> Result<f64> {
    let gf = scheme.to_grid_function(u)?;
    let mut worst = 0.0f64;
    for &k in scheme.grid().interior_ids() {
        worst = worst.max(eval_fhat(&gf, scheme.params(), scheme.problem(), k)?.abs());
    }
    Ok(worst)
}

/// Solves an affine scheme in one linear solve.
pub fn solve_linear<const D: usize>(scheme: &Scheme<'_, D>) -> Result<Solution> {
    let start = Instant::now();
    if !scheme.problem().is_affine() {
        return Err(Error::NotLinear(scheme.problem().name().to_string()));
    }
    let n = scheme.num_unknowns();
    let zero = vec![0.0; n];
    let r0 = scheme.residual(&zero)?;
    let a = scheme.jacobian(&zero)?;
    let b: Vec<f64> = r0.values.iter().map(|v| -v).collect();
    let bnorm = linf(&b);
    let u = solve_system(&a, &b, bnorm)?;
    let lu_res = linf(&a.matvec(&u).iter().zip(&b).map(|(p, q)| p - q).collect::<Vec<_>>());
    let limit = 1e-10 * (1.0 + bnorm);
    if !(lu_res <= limit) {
        return Err(Error::Singular {
            reason: format!("linear residual {lu_res:.3e} exceeds {limit:.3e}"),
            condition_estimate: SparseLu::new(&a).ok().map(|lu| lu.diag_ratio()),
        });
    }
    let res = scheme.residual(&u)?.linf();
    let mut report = SolveReport::new(Method::LinearDirect);
    report.iterations = 1;
    report.residual_history = vec![r0.linf(), res];
    report.final_residual_linf = res;
    report.converged = true;
    report.wall_time = start.elapsed().as_secs_f64();
    Ok(Solution { u, report })
}

fn solve_system(a: &SparseOperator, b: &[f64], bnorm: f64) -> Result<Vec<f64>> {
    if a.is_symmetric(1e-12) {
        if let Ok(x) = conjugate_gradient(a, b, 1e-14, 20 * b.len() + 100) {
            let r = a.matvec(&x);
            let err = r.iter().zip(b).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
            if err <= 1e-11 * (1.0 + bnorm) {
                return Ok(x);
            }
        }
    }
    SparseLu::new(a)?.solve(b)
}

/// Newton on the residual with the moment weight and control lagged in the
/// Jacobian. Returns the best iterate with `converged = false` when it stalls.
pub fn solve_newton<const D: usize>(scheme: &Scheme<'_, D>, u0: &[f64], config: &SolveConfig) -> Result<Solution> {
    config.validate()?;
    let start = Instant::now();
    let mut report = SolveReport::new(Method::Newton);
    let mut u = u0.to_vec();
    let mut res = scheme.residual(&u)?;
    let mut norm = res.linf();
    if !norm.is_finite() {
        return Err(Error::Diverged("initial residual is not finite".into()));
    }
    report.residual_history.push(norm);
    let halvings = match config.damping {
        Damping::None => 0,
        Damping::Backtracking { max_halvings } => max_halvings,
    };
    loop {
        if norm <= config.newton_tol {
            report.converged = true;
            break;
        }
        if report.iterations >= config.newton_max_iter {
            report.message = Some(format!("no convergence in {} iterations", config.newton_max_iter));
            break;
        }
        let step = SparseLu::new(&scheme.jacobian(&u)?).and_then(|lu| {
            let rhs: Vec<f64> = res.values.iter().map(|v| -v).collect();
            lu.solve(&rhs)
        });
        let du = match step {
            Ok(d) => d,
            Err(e) => {
                report.message = Some(format!("Newton step failed at iteration {}: {e}", report.iterations));
                break;
            }
        };
        report.iterations += 1;
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=halvings {
            let trial: Vec<f64> = u.iter().zip(&du).map(|(a, b)| a + t * b).collect();
            match residual_norm(scheme, &trial) {
                Some(n) if n < norm || halvings == 0 => {
                    accepted = Some((trial, n));
                    break;
                }
                None if halvings == 0 => return Err(Error::Diverged("residual became non-finite".into())),
                _ => {}
            }
            t *= 0.5;
        }
        let Some((trial, n)) = accepted else {
            stalled(&mut report, scheme, &u, norm, "line search found no decrease".into())?;
            break;
        };
        let moved = t * linf(&du);
        let contracted = n <= 0.9 * norm;
        u = trial;
        norm = n;
        res = scheme.residual(&u)?;
        report.residual_history.push(norm);
        // a tiny step only ends the run once the residual has stopped contracting
        if moved <= config.step_tol && !contracted && norm > config.newton_tol {
            stalled(&mut report, scheme, &u, norm, format!("step {moved:.3e} below step_tol with residual {norm:.3e}"))?;
            break;
        }
    }
    report.final_residual_linf = norm;
    report.wall_time = start.elapsed().as_secs_f64();
    Ok(Solution { u, report })
}

/// A stalled Newton run counts as converged when its residual is already at the
/// rounding level of the residual evaluation.
fn stalled<const D: usize>(report: &mut SolveReport, scheme: &Scheme<'_, D>, u: &[f64], norm: f64, why: String) -> Result<()> {
    let floor = roundoff_floor(scheme, u)?;
    if norm <= floor {
        report.converged = true;
        report.message = Some(format!("residual {norm:.3e} at roundoff floor {floor:.3e}"));
    } else {
        report.message = Some(why);
    }
    Ok(())
}

/// Size of the rounding noise in a residual evaluation at `u`:
/// `64 ε ‖J‖∞ (1 + ‖u‖∞)`.
pub fn roundoff_floor<const D: usize>(scheme: &Scheme<'_, D>, u: &[f64]) -> Result<f64> {
    let j = scheme.jacobian(u)?;
    let row_sum = (0..j.rows()).map(|r| j.row(r).map(|(_, v)| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    Ok(64.0 * f64::EPSILON * row_sum * (1.0 + linf(u)))
}

/// Largest `|λ|` of `a` by power iteration.
pub fn spectral_radius_estimate(a: &SparseOperator, iterations: usize) -> f64 {
    let n = a.rows();
    if n == 0 {
        return 0.0;
    }
    // deterministic start with no special alignment to the grid
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919) % 13) as f64 / 13.0).collect();
    let mut lambda = 0.0;
    for _ in 0..iterations {
        let y = a.matvec(&x);
        let (ny, nx) = (l2(&y), l2(&x));
        if ny == 0.0 {
            return 0.0;
        }
        lambda = ny / nx;
        x = y.into_iter().map(|v| v / ny).collect();
    }
    lambda
}

/// Pseudo-time step `0.9 / λ` with `λ` the power-method estimate for the Jacobian at `u`.
pub fn estimate_rho<const D: usize>(scheme: &Scheme<'_, D>, u: &[f64]) -> Result<f64> {
    let lambda = spectral_radius_estimate(&scheme.jacobian(u)?, 200);
    if lambda <= 0.0 {
        return Err(Error::Singular { reason: "zero Jacobian".into(), condition_estimate: None });
    }
    Ok(0.9 / lambda)
}

/// `U ← U - ρ F̂(U)`, boundary and ghost data re-imposed by the eliminated stencil.
pub fn solve_pseudo_time<const D: usize>(scheme: &Scheme<'_, D>, u0: &[f64], config: &SolveConfig) -> Result<Solution> {
    config.validate()?;
    let start = Instant::now();
    let mut report = SolveReport::new(Method::PseudoTime);
    let rho = match config.rho {
        Some(r) => r,
        None => estimate_rho(scheme, u0)?,
    };
    report.rho = Some(rho);
    let mut u = u0.to_vec();
    let mut r = scheme.residual(&u)?.values;
    let mut norm = linf(&r);
    report.residual_history.push(norm);
    let mut last_step: Option<f64> = None;
    let mut streak = 0;
    while norm > config.newton_tol {
        if report.iterations >= config.max_sweeps {
            report.message = Some(format!("no convergence in {} sweeps", config.max_sweeps));
            break;
        }
        let step = rho * l2(&r);
        for (ui, ri) in u.iter_mut().zip(&r) {
            *ui -= rho * ri;
        }
        report.iterations += 1;
        r = match scheme.residual(&u) {
            Ok(res) if res.linf().is_finite() => res.values,
            _ => return Err(Error::Diverged(format!("residual not finite after {} sweeps; reduce rho", report.iterations))),
        };
        norm = linf(&r);
        if report.iterations % 10 == 0 || norm <= config.newton_tol {
            report.residual_history.push(norm);
        }
        if let Some(prev) = last_step {
            let ratio = if prev > 0.0 { step / prev } else { 0.0 };
            report.contraction.push(ratio);
            streak = if ratio >= 1.0 { streak + 1 } else { 0 };
            if streak >= config.divergence_window {
                return Err(Error::Diverged(format!(
                    "{streak} consecutive sweeps without contraction at rho = {rho:.3e}; reduce rho"
                )));
            }
        }
        last_step = Some(step);
        if step <= 1e-12 * l2(&u) {
            if norm > config.newton_tol {
                report.message = Some(format!("update stalled with residual {norm:.3e}"));
            }
            break;
        }
    }
    report.converged = norm <= config.newton_tol;
    report.final_residual_linf = norm;
    report.wall_time = start.elapsed().as_secs_f64();
    Ok(Solution { u, report })
}

/// Chosen solver for one fixed `(γ, σ)`.
pub fn solve_fixed<const D: usize>(scheme: &Scheme<'_, D>, u0: &[f64], config: &SolveConfig) -> Result<Solution> {
    match config.method {
        Method::LinearDirect => solve_linear(scheme),
        Method::Newton => solve_newton(scheme, u0, config),
        Method::PseudoTime => solve_pseudo_time(scheme, u0, config),
    }
}

/// Solves along `schedule`, each stage started from the previous solution.
/// The moment mode and safety flag come from `scheme`. A failed stage ends the run.
pub fn solve_continuation<const D: usize>(
    scheme: &Scheme<'_, D>,
    u0: &[f64],
    schedule: &[(f64, f64)],
    config: &SolveConfig,
) -> Result<Solution> {
    if schedule.is_empty() {
        return Err(Error::InvalidConfig("empty continuation schedule".into()));
    }
    let start = Instant::now();
    let mut u = u0.to_vec();
    let mut report = SolveReport::new(config.method);
    for &(gamma, sigma) in schedule {
        let params = SchemeParams { gamma, sigma, ..*scheme.params() };
        let stage_scheme = scheme.with_params(params)?;
        let stage_start = match (&config.initial_guess, report.stage_history.is_empty()) {
            (InitialGuess::Zero, _) => vec![0.0; u.len()],
            _ => u.clone(),
        };
        let sol = solve_fixed(&stage_scheme, &stage_start, config)?;
        let recheck = recheck_residual(&stage_scheme, &sol.u).unwrap_or(f64::INFINITY);
        report.iterations += sol.report.iterations;
        report.residual_history.extend(&sol.report.residual_history);
        report.contraction.extend(&sol.report.contraction);
        report.rho = sol.report.rho.or(report.rho);
        // a converged stage must also pass the independent recomputation
        let limit = config.newton_tol.max(1e-10 * (1.0 + linf(&sol.u))).max(2.0 * sol.report.final_residual_linf);
        let converged = sol.report.converged && recheck <= limit;
        report.stage_history.push(StageReport {
            gamma,
            sigma,
            converged,
            iterations: sol.report.iterations,
            residual: sol.report.final_residual_linf,
            recheck,
            message: sol.report.message.clone(),
        });
        report.final_residual_linf = sol.report.final_residual_linf;
        report.converged = converged;
        u = sol.u;
        if !converged {
            report.message = Some(format!(
                "stage (gamma={gamma}, sigma={sigma}) failed: {}",
                sol.report.message.unwrap_or_else(|| format!("recheck residual {recheck:.3e}"))
            ));
            break;
        }
    }
    report.wall_time = start.elapsed().as_secs_f64();
    Ok(Solution { u, report })
}

/// Top-level entry: picks the start vector and runs either the configured
/// continuation or a single solve at the scheme's parameters.
pub fn solve<const D: usize>(scheme: &Scheme<'_, D>, config: &SolveConfig) -> Result<Solution> {
    config.validate()?;
    let n = scheme.num_unknowns();
    let u0 = match &config.initial_guess {
        InitialGuess::Given(v) if v.len() != n => return Err(Error::DimensionMismatch { expected: n, got: v.len() }),
        InitialGuess::Given(v) => v.clone(),
        _ => vec![0.0; n],
    };
    if config.continuation.is_empty() {
        let mut sol = solve_fixed(scheme, &u0, config)?;
        let p = scheme.params();
        sol.report.stage_history.push(StageReport {
            gamma: p.gamma,
            sigma: p.sigma,
            converged: sol.report.converged,
            iterations: sol.report.iterations,
            residual: sol.report.final_residual_linf,
            recheck: recheck_residual(scheme, &sol.u).unwrap_or(f64::INFINITY),
            message: sol.report.message.clone(),
        });
        Ok(sol)
    } else {
        solve_continuation(scheme, &u0, &config.continuation, config)
    }
}

/// Default continuation schedule per benchmark name.
pub fn default_schedule(problem: &str) -> Vec<(f64, f64)> {
    match problem {
        "hjb" => [1000.0, 100.0, 10.0, 1.0, 0.0].iter().map(|&g| (g, 0.0)).collect(),
        "monge_ampere" | "gauss_curvature" => [1000.0, 100.0, 10.0, 1.0, 0.0].iter().map(|&s| (-s, s)).collect(),
        _ => vec![(0.0, 0.0)],
    }
}

/// The default schedule cut off after the first stage at or below `target`,
/// ending at `target` itself.
pub fn schedule_to(problem: &str, target: (f64, f64)) -> Vec<(f64, f64)> {
    let strength = |(g, s): (f64, f64)| g.abs().max(s.abs());
    let mut out: Vec<(f64, f64)> =
        default_schedule(problem).into_iter().filter(|&st| strength(st) > strength(target)).collect();
    out.push(target);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fd_ops::{Mat, Vector};
    use crate::grid::{Domain, Grid};
    use crate::problems::{ConstantCoefficient, Jet, MongeAmpere, Problem};

    fn unit_square(side: usize) -> Grid<2> {
        Grid::new(Domain::cube(0.0, 1.0).unwrap(), [side, side]).unwrap()
    }

    fn poisson_like() -> ConstantCoefficient<2> {
        ConstantCoefficient::new(Mat::<2>::new(2.0, 0.5, 0.5, 1.0), 1.0, Domain::cube(0.0, 1.0).unwrap(), |x| {
            let u = x[0].sin() * x[1].sin();
            let uxy = x[0].cos() * x[1].cos();
            Jet {
                u,
                grad: Vector::<2>::new(x[0].cos() * x[1].sin(), x[0].sin() * x[1].cos()),
                hess: Mat::<2>::new(-u, uxy, uxy, -u),
            }
        })
    }

    fn exact(grid: &Grid<2>, p: &dyn Problem<2>) -> Vec<f64> {
        grid.interior_ids().iter().map(|&k| p.exact(&grid.coords(k)).unwrap()).collect()
    }

    #[test]
    fn config_validation_and_defaults() {
        let d = SolveConfig::default();
        assert!(d.validate().is_ok());
        assert_eq!(d.newton_tol, 1e-10);
        assert_eq!(d.damping, Damping::Backtracking { max_halvings: 30 });
        assert!(SolveConfig { newton_tol: 0.0, ..Default::default() }.validate().is_err());
        assert!(SolveConfig { rho: Some(-1.0), ..Default::default() }.validate().is_err());
        let cfg = SolveConfig { continuation: vec![(1.0, 0.0)], initial_guess: InitialGuess::Given(vec![1.0]), ..d };
        let s = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<SolveConfig>(&s).unwrap(), cfg);
        let partial: SolveConfig = serde_json::from_str(r#"{"method":"pseudo_time"}"#).unwrap();
        assert_eq!(partial.method, Method::PseudoTime);
    }

    #[test]
    fn constant_boundary_gives_constant_solution() {
        let grid = unit_square(9);
        let p = ConstantCoefficient::<2>::constant_solution(Domain::cube(0.0, 1.0).unwrap(), 1.0);
        let scheme = Scheme::new(&grid, &p, SchemeParams::new(0.0, 0.0)).unwrap();
        let sol = solve_linear(&scheme).unwrap();
        assert!(sol.report.converged);
        assert!(sol.u.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn linear_and_newton_agree_on_affine_problem() {
        let grid = unit_square(12);
        let p = poisson_like();
        let scheme = Scheme::new(&grid, &p, SchemeParams::new(0.0, 0.0)).unwrap();
        let lin = solve_linear(&scheme).unwrap();
        assert!(lin.report.converged);
        let newton = solve_newton(&scheme, &vec![0.0; scheme.num_unknowns()], &SolveConfig::default()).unwrap();
        assert!(newton.report.converged);
        assert_eq!(newton.report.iterations, 1);
        assert!(linf(&lin.u.iter().zip(&newton.u).map(|(a, b)| a - b).collect::<Vec<_>>()) < 1e-10);
    }

    #[test]
    fn linear_path_rejects_nonlinear_problems() {
        let grid = unit_square(6);
        let p = MongeAmpere::new();
        let scheme = Scheme::new(&grid, &p, SchemeParams::new(0.0, 0.0)).unwrap();
        assert!(matches!(solve_linear(&scheme), Err(Error::NotLinear(_))));
    }

    #[test]
    fn newton_residuals_decrease_strictly() {
        let grid = unit_square(10);
        let p = MongeAmpere::new();
        let scheme = Scheme::new(&grid, &p, SchemeParams::new(-10.0, 10.0)).unwrap();
        let sol = solve_newton(&scheme, &vec![0.0; scheme.num_unknowns()], &SolveConfig::default()).unwrap();
        assert!(sol.report.converged, "{:?}", sol.report.message);
        assert!(sol.report.residual_history.windows(2).all(|w| w[1] < w[0]));
        assert!(sol.report.final_residual_linf <= 1e-10);
    }

    #[test]
    fn cold_start_without_moment_fails_honestly() {
        let grid = unit_square(12);
        let p = MongeAmpere::new();
        let scheme = Scheme::new(&grid, &p, SchemeParams::new(0.0, 0.0)).unwrap();
        let sol = solve_newton(&scheme, &vec![0.0; scheme.num_unknowns()], &SolveConfig::default()).unwrap();
        assert!(!sol.report.converged);
        assert!(sol.report.message.is_some());
    }

    #[test]
    fn pseudo_time_reaches_the_newton_solution() {
        let grid = unit_square(8);
        let p = MongeAmpere::new();
        let scheme = Scheme::new(&grid, &p, SchemeParams::new(-1.0, 1.0)).unwrap();
        let u0 = exact(&grid, &p);
        let newton = solve_newton(&scheme, &u0, &SolveConfig::default()).unwrap();
        assert!(newton.report.converged);
        // the ℓ² step criterion ends the sweeps around this residual level
        let cfg = SolveConfig { method: Method::PseudoTime, newton_tol: 1e-7, ..Default::default() };
        let pt = solve_pseudo_time(&scheme, &u0, &cfg).unwrap();
        assert!(pt.report.converged, "{:?}", pt.report.message);
        let last = &pt.report.contraction[pt.report.contraction.len() - 10..];
        assert!(last.iter().all(|r| *r < 1.0));
        let diff = pt.u.iter().zip(&newton.u).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(diff < 1e-7, "{diff}");
    }

    #[test]
    fn measured_contraction_matches_iteration_matrix() {
        let grid = unit_square(7);
        let p = poisson_like();
        let scheme = Scheme::new(&grid, &p, SchemeParams::new(0.0, 0.0)).unwrap();
        let n = scheme.num_unknowns();
        let j = scheme.jacobian(&vec![0.0; n]).unwrap().to_dense();
        let lmax = j.complex_eigenvalues().iter().fold(0.0f64, |m, z| m.max(z.norm()));
        let rho = 1.0 / lmax;
        let iter = nalgebra::DMatrix::<f64>::identity(n, n) - &j * rho;
        let radius = iter.complex_eigenvalues().iter().fold(0.0f64, |m, z| m.max(z.norm()));
        let cfg = SolveConfig { method: Method::PseudoTime, rho: Some(rho), newton_tol: 1e-13, ..Default::default() };
        let sol = solve_pseudo_time(&scheme, &vec![0.0; n], &cfg).unwrap();
        let measured = sol.report.contraction[150];
        assert!((measured - radius).abs() <= 0.05 * radius, "{measured} vs {radius}");
        assert!(measured < 1.0);
        // loose bound from the smallest eigenvalue
        let lmin = j.complex_eigenvalues().iter().fold(f64::INFINITY, |m, z| m.min(z.re));
        assert!(measured <= 1.0 - rho * lmin / 2.0);
    }

    #[test]
    fn oversized_step_diverges() {
        let grid = unit_square(8);
        let p = MongeAmpere::new();
        let scheme = Scheme::new(&grid, &p, SchemeParams::new(-1.0, 1.0)).unwrap();
        let u0 = exact(&grid, &p);
        let rho = estimate_rho(&scheme, &u0).unwrap() * 4.0;
        let cfg = SolveConfig { method: Method::PseudoTime, rho: Some(rho), ..Default::default() };
        assert!(matches!(solve_pseudo_time(&scheme, &u0, &cfg), Err(Error::Diverged(_))));
    }

    #[test]
    fn continuation_records_every_stage() {
        let grid = unit_square(10);
        let p = MongeAmpere::new();
        let scheme = Scheme::new(&grid, &p, SchemeParams::new(0.0, 0.0)).unwrap();
        let schedule = default_schedule("monge_ampere");
        let sol = solve_continuation(&scheme, &vec![0.0; scheme.num_unknowns()], &schedule, &SolveConfig::default()).unwrap();
        assert!(sol.report.converged, "{:?}", sol.report.message);
        assert_eq!(sol.report.stage_history.len(), 5);
        for s in &sol.report.stage_history {
            assert!(s.converged && s.recheck < 1e-9, "{s:?}");
        }
        assert!(solve_continuation(&scheme, &sol.u, &[], &SolveConfig::default()).is_err());
    }

    #[test]
    fn single_stage_schedule_equals_plain_newton() {
        let grid = unit_square(8);
        let p = MongeAmpere::new();
        let scheme = Scheme::new(&grid, &p, SchemeParams::new(-10.0, 10.0)).unwrap();
        let cfg = SolveConfig { continuation: vec![(-10.0, 10.0)], ..Default::default() };
        let a = solve(&scheme, &cfg).unwrap();
        let b = solve_newton(&scheme, &vec![0.0; scheme.num_unknowns()], &SolveConfig::default()).unwrap();
        assert_eq!(a.u, b.u);
        let g = SolveConfig { initial_guess: InitialGuess::Given(vec![0.0; 3]), ..Default::default() };
        assert!(solve(&scheme, &g).is_err());
    }

    #[test]
    fn schedules() {
        assert_eq!(default_schedule("linear1"), vec![(0.0, 0.0)]);
        assert_eq!(default_schedule("hjb")[0], (1000.0, 0.0));
        assert_eq!(default_schedule("monge_ampere")[0], (-1000.0, 1000.0));
        assert_eq!(*default_schedule("gauss_curvature").last().unwrap(), (0.0, 0.0));
        assert_eq!(schedule_to("hjb", (10.0, 0.0)), vec![(1000.0, 0.0), (100.0, 0.0), (10.0, 0.0)]);
        assert_eq!(schedule_to("hjb", (1000.0, 0.0)), vec![(1000.0, 0.0)]);
        assert_eq!(schedule_to("monge_ampere", (-1.0, 1.0)).len(), 4);
    }
}
