use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use narrowfd::solver::Method;
use narrowfd_cli::config::{Command, ConfigError, RunConfig};
use narrowfd_cli::run::{run, RunError};

/// Narrow-stencil finite-difference solver for fully nonlinear elliptic Dirichlet problems.
#[derive(Debug, Parser)]
#[command(name = "narrowfd", version)]
struct Cli {
    /// Command to run; overrides the config file's `command`.
    #[arg(value_enum)]
    command: Option<Command>,
    /// JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    /// Points per side, comma separated.
    #[arg(long, value_delimiter = ',')]
    sides: Option<Vec<usize>>,
    /// Interior points per side, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "sides")]
    interior: Option<Vec<usize>>,
    #[arg(long, allow_negative_numbers = true)]
    gamma: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    sigma: Option<f64>,
    /// Stages as `gamma:sigma` pairs, comma separated, e.g. `-1000:1000,-1:1,0:0`.
    #[arg(long, allow_hyphen_values = true)]
    schedule: Option<String>,
    #[arg(long)]
    allow_unsafe: bool,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    newton_tol: Option<f64>,
    #[arg(long)]
    newton_max_iter: Option<usize>,
    #[arg(long)]
    n_phi: Option<usize>,
    #[arg(long)]
    n_rot: Option<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
}

fn invalid(key: &str, message: String) -> RunError {
    RunError::Config(ConfigError::Invalid { keys: vec![key.to_string()], messages: vec![message] })
}

fn parse_schedule(text: &str) -> Result<Vec<[f64; 2]>, RunError> {
    text.split(',')
        .map(|stage| {
            let (g, s) = stage.split_once(':').ok_or_else(|| invalid("schedule", format!("stage '{stage}' is not gamma:sigma")))?;
            let num = |v: &str| v.trim().parse::<f64>().map_err(|_| invalid("schedule", format!("'{v}' is not a number")));
            Ok([num(g)?, num(s)?])
        })
        .collect()
}

fn build_config(cli: Cli) -> Result<RunConfig, RunError> {
    let mut config = match (&cli.config, cli.command) {
        (Some(path), _) => RunConfig::from_file(path)?,
        (None, Some(command)) => RunConfig::new(command),
        (None, None) => return Err(invalid("command", "give a command or --config".into())),
    };
    if let Some(c) = cli.command {
        config.command = c;
    }
    if cli.problem.is_some() {
        config.problem = cli.problem;
    }
    if let Some(s) = cli.sides {
        config.sides = Some(s);
        config.interior = None;
    }
    if let Some(i) = cli.interior {
        config.interior = Some(i);
        config.sides = None;
    }
    let schedule_given = cli.schedule.is_some();
    if let Some(s) = &cli.schedule {
        config.schedule = Some(parse_schedule(s)?);
    }
    if cli.gamma.is_some() || cli.sigma.is_some() {
        config.gamma = cli.gamma.or(config.gamma);
        config.sigma = cli.sigma.or(config.sigma);
        if !schedule_given {
            // a new target replaces a schedule that came from the file
            config.schedule = None;
        }
    }
    config.allow_unsafe |= cli.allow_unsafe;
    if let Some(m) = cli.method {
        config.solver.method = serde_json::from_value::<Method>(serde_json::Value::String(m.clone()))
            .map_err(|_| invalid("method", format!("unknown method '{m}', expected linear_direct, newton or pseudo_time")))?;
    }
    if let Some(t) = cli.newton_tol {
        config.solver.newton_tol = t;
    }
    if let Some(n) = cli.newton_max_iter {
        config.solver.newton_max_iter = n;
    }
    if let Some(n) = cli.n_phi {
        config.n_phi = n;
    }
    if let Some(n) = cli.n_rot {
        config.n_rot = n;
    }
    if let Some(o) = cli.output {
        config.output = o;
    }
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    if cli.workers.is_some() {
        config.workers = cli.workers;
    }
    if let Some(t) = cli.trials {
        config.trials = t;
    }
    Ok(config.resolve()?)
}

fn main() -> ExitCode {
    let result = build_config(Cli::parse()).and_then(|config| run(&config));
    match result {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.summary());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
