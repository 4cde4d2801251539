//! Command execution and artifact output.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use narrowfd::grid::{Domain, Grid, NodeClass};
use narrowfd::problems::{by_name, Problem, PROBLEM_NAMES};
use narrowfd::scheme::{audit_consistency, audit_reduced_form, FhatOperator, Scheme, SchemeParams};
use narrowfd::solver::Solution;
use narrowfd::verify::{run_convergence_with, run_lemma_battery, solve_on_grid, OrderMeasure};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Command, ConfigError, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVE: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("solve failed: {0}")]
    Solve(String),
    #[error("verification failed: {0}")]
    Verify(String),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Library(#[from] narrowfd::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => EXIT_CONFIG,
            RunError::Solve(_) => EXIT_SOLVE,
            RunError::Verify(_) => EXIT_VERIFY,
            RunError::Io { .. } => EXIT_IO,
            RunError::Library(narrowfd::Error::UnknownProblem(_) | narrowfd::Error::InvalidConfig(_)) => EXIT_CONFIG,
            RunError::Library(_) => EXIT_SOLVE,
        }
    }

    /// One-line JSON failure summary.
    pub fn summary(&self) -> String {
        let kind = match self.exit_code() {
            EXIT_CONFIG => "config",
            EXIT_SOLVE => "solve",
            EXIT_VERIFY => "verify",
            _ => "io",
        };
        json!({"status": "failed", "kind": kind, "exit_code": self.exit_code(), "message": self.to_string()}).to_string()
    }
}

/// Writes `contents` to `dir/name` through a temporary file in the same directory.
pub fn write_atomic(dir: &Path, name: &str, contents: &[u8]) -> Result<PathBuf, RunError> {
    let path = dir.join(name);
    let io = |source| RunError::Io { path: path.clone(), source };
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(&path).map_err(|e| io(e.error))?;
    Ok(path)
}

fn write_json(dir: &Path, name: &str, value: &Value) -> Result<PathBuf, RunError> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    write_atomic(dir, name, text.as_bytes())
}

fn problem_for(config: &RunConfig) -> Result<Box<dyn Problem<2>>, RunError> {
    let name = config.problem.as_deref().expect("resolved config has a problem");
    Ok(by_name(name, config.controls())?)
}

fn params(config: &RunConfig) -> SchemeParams<2> {
    let (g, s) = config.target();
    SchemeParams { allow_unsafe: config.allow_unsafe, ..SchemeParams::new(g, s) }
}

fn order_measure(config: &RunConfig) -> OrderMeasure {
    if config.is_linear() {
        OrderMeasure::Axis
    } else {
        OrderMeasure::Diag
    }
}

/// `flat_id,class,x,y,u,exact` over interior and boundary nodes.
pub fn solution_csv(grid: &Grid<2>, problem: &dyn Problem<2>, u: &[f64]) -> Result<String, RunError> {
    let scheme = Scheme::new(grid, problem, SchemeParams::new(0.0, 0.0))?;
    let gf = scheme.to_grid_function(u)?;
    let mut out = String::from("flat_id,class,x,y,u,exact\n");
    for k in 0..grid.mesh_len() {
        let class = match grid.class(k) {
            NodeClass::Interior => "interior",
            NodeClass::Boundary => "boundary",
            NodeClass::Ghost => continue,
        };
        let x = grid.coords(k);
        let exact = problem.exact(&x).map(|e| format!("{e:.9e}")).unwrap_or_default();
        let _ = writeln!(out, "{k},{class},{:.9e},{:.9e},{:.9e},{exact}", x[0], x[1], gf.values()[k]);
    }
    Ok(out)
}

fn solution_name(grid: &Grid<2>) -> String {
    let [n, m] = grid.counts();
    format!("solution_{n}x{m}.csv")
}

/// Artifacts written and the overall status of one command.
#[derive(Debug, Clone, Serialize)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub files: Vec<PathBuf>,
}

/// Runs a resolved config. Reports are written even when the command fails;
/// the error then carries the exit code.
pub fn run(config: &RunConfig) -> Result<RunOutcome, RunError> {
    let config = config.clone().resolve()?;
    if let Some(n) = config.workers {
        // a global pool can only be installed once per process; later calls keep it
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match config.command {
        Command::Solve => solve_command(&config),
        Command::Convergence => convergence_command(&config),
        Command::Verify => verify_command(&config),
        Command::DumpGrid => dump_grid_command(&config),
    }
}

fn solve_command(config: &RunConfig) -> Result<RunOutcome, RunError> {
    let problem = problem_for(config)?;
    let grid = Grid::new(problem.domain(), config.meshes()[0])?;
    let dir = &config.output;
    let result = solve_on_grid(&grid, problem.as_ref(), params(config), &config.solve_config());
    let mut files = Vec::new();
    let (status, error_linf, report, failure) = match &result {
        Ok((sol, err)) => {
            // an unconverged iterate is not written out as a solution
            if sol.report.converged {
                files.push(write_atomic(dir, &solution_name(&grid), solution_csv(&grid, problem.as_ref(), &sol.u)?.as_bytes())?);
            }
            let failure = (!sol.report.converged).then(|| sol.report.message.clone().unwrap_or_else(|| "not converged".into()));
            (if failure.is_none() { "ok" } else { "failed" }, Some(*err), Some(&sol.report), failure)
        }
        Err(e) => ("failed", None, None, Some(e.to_string())),
    };
    let value = json!({
        "status": status,
        "config": config,
        "h_axis": grid.h_axis(),
        "h_diag": grid.h_diag(),
        "error_linf": error_linf,
        "report": report,
        "failure": failure,
    });
    files.push(write_json(dir, "report.json", &value)?);
    match failure {
        Some(f) => Err(RunError::Solve(f)),
        None => Ok(RunOutcome { exit_code: EXIT_OK, files }),
    }
}

fn convergence_command(config: &RunConfig) -> Result<RunOutcome, RunError> {
    let problem = problem_for(config)?;
    let dir = config.output.clone();
    let mut solutions: Vec<([usize; 2], Vec<f64>)> = Vec::new();
    let table = run_convergence_with(
        problem.as_ref(),
        params(config),
        &config.meshes(),
        &config.solve_config(),
        order_measure(config),
        |grid: &Grid<2>, sol: &Solution| {
            if sol.report.converged {
                solutions.push((grid.counts(), sol.u.clone()));
            }
            Ok(())
        },
    )?;
    let mut files = Vec::new();
    for (counts, u) in &solutions {
        let grid = Grid::new(problem.domain(), *counts)?;
        files.push(write_atomic(&dir, &solution_name(&grid), solution_csv(&grid, problem.as_ref(), u)?.as_bytes())?);
    }
    files.push(write_atomic(&dir, "table.csv", table.to_csv().as_bytes())?);
    let failed: Vec<String> = table
        .rows
        .iter()
        .filter(|r| !r.converged)
        .map(|r| format!("{:?}: {}", r.counts, r.message.clone().unwrap_or_else(|| "not converged".into())))
        .collect();
    let value = json!({
        "status": if failed.is_empty() { "ok" } else { "failed" },
        "config": config,
        "table": table,
        "failures": failed,
    });
    files.push(write_json(&dir, "report.json", &value)?);
    if failed.is_empty() {
        Ok(RunOutcome { exit_code: EXIT_OK, files })
    } else {
        Err(RunError::Solve(failed.join("; ")))
    }
}

fn verify_command(config: &RunConfig) -> Result<RunOutcome, RunError> {
    let battery = run_lemma_battery(config.seed, config.trials)?;
    let mut audits = Vec::new();
    let names: Vec<&str> = match &config.problem {
        Some(p) => vec![p.as_str()],
        None => PROBLEM_NAMES.to_vec(),
    };
    let mut audits_passed = true;
    for name in names {
        let problem = by_name(name, config.controls())?;
        let op = FhatOperator::new(problem.as_ref(), params(config));
        let c = audit_consistency(&op, problem.as_ref(), 1000, config.seed, 1e-10)?;
        let r = audit_reduced_form(&op, problem.as_ref(), 1000, config.seed, 1e-12)?;
        audits_passed &= c.passed && r.passed;
        audits.push(json!({"consistency": c, "reduced_form": r}));
    }
    let checks = json!({
        "hessian_lemma": battery.hessian.passed,
        "spd_l": battery.spd.passed,
        "symmetrization": battery.symmetrization.passed,
        "contraction": battery.contraction.iter().all(|c| c.passed),
        "audits": audits_passed,
    });
    let passed = battery.passed() && audits_passed;
    let value = json!({
        "status": if passed { "ok" } else { "failed" },
        "config": config,
        "checks": checks,
        "battery": battery,
        "audits": audits,
    });
    let files = vec![write_json(&config.output, "report.json", &value)?];
    if passed {
        Ok(RunOutcome { exit_code: EXIT_OK, files })
    } else {
        let failed: Vec<&str> = checks
            .as_object()
            .expect("object")
            .iter()
            .filter(|(_, v)| v.as_bool() == Some(false))
            .map(|(k, _)| k.as_str())
            .collect();
        Err(RunError::Verify(format!("failed checks: {}", failed.join(", "))))
    }
}

fn dump_grid_command(config: &RunConfig) -> Result<RunOutcome, RunError> {
    let domain = match &config.problem {
        Some(_) => problem_for(config)?.domain(),
        None => Domain::cube(0.0, 1.0)?,
    };
    let grid = Grid::new(domain, config.meshes()[0])?;
    let mut buf = Vec::new();
    grid.write_csv(&mut buf).map_err(|source| RunError::Io { path: config.output.join("grid.csv"), source })?;
    let files = vec![write_atomic(&config.output, "grid.csv", &buf)?];
    Ok(RunOutcome { exit_code: EXIT_OK, files })
}
