//! Run configuration: JSON file, flag overrides, defaults and validation.

use std::path::{Path, PathBuf};

use narrowfd::problems::{ControlSet, PROBLEM_NAMES};
use narrowfd::solver::{default_schedule, schedule_to, SolveConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Solve,
    Convergence,
    Verify,
    DumpGrid,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid config ({}): {}", keys.join(", "), messages.join("; "))]
    Invalid { keys: Vec<String>, messages: Vec<String> },
}

impl ConfigError {
    fn invalid(problems: Vec<(&str, String)>) -> Self {
        let mut keys: Vec<String> = problems.iter().map(|(k, _)| k.to_string()).collect();
        keys.dedup();
        ConfigError::Invalid { keys, messages: problems.into_iter().map(|(_, m)| m).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<String>,
    /// Points per side, boundary included.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sides: Option<Vec<usize>>,
    /// Interior points per side; an alternative to `sides`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interior: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    /// `[γ, σ]` stages; the last one is the target.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub allow_unsafe: bool,
    #[serde(default = "default_n_phi")]
    pub n_phi: usize,
    #[serde(default = "default_n_rot")]
    pub n_rot: usize,
    #[serde(default)]
    pub solver: SolveConfig,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// Trials per size in the symmetrization check.
    #[serde(default = "default_trials")]
    pub trials: usize,
}

fn default_n_phi() -> usize {
    16
}
fn default_n_rot() -> usize {
    32
}
fn default_output() -> PathBuf {
    PathBuf::from("output")
}
fn default_seed() -> u64 {
    42
}
fn default_trials() -> usize {
    100
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            problem: None,
            sides: None,
            interior: None,
            gamma: None,
            sigma: None,
            schedule: None,
            allow_unsafe: false,
            n_phi: default_n_phi(),
            n_rot: default_n_rot(),
            solver: SolveConfig::default(),
            output: default_output(),
            seed: default_seed(),
            workers: None,
            trials: default_trials(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse { line: e.line(), column: e.column(), message: e.to_string() })
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn controls(&self) -> ControlSet {
        ControlSet::with_counts(self.n_phi, self.n_rot)
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.problem.as_deref(), Some("linear1" | "linear2"))
    }

    /// Mesh point counts per axis, resolved from `sides` or `interior`.
    pub fn meshes(&self) -> Vec<[usize; 2]> {
        match (&self.sides, &self.interior) {
            (Some(s), _) => s.iter().map(|&n| [n, n]).collect(),
            (None, Some(i)) => i.iter().map(|&n| [n + 2, n + 2]).collect(),
            (None, None) => Vec::new(),
        }
    }

    pub fn target(&self) -> (f64, f64) {
        (self.gamma.unwrap_or(0.0), self.sigma.unwrap_or(0.0))
    }

    /// Fills defaults that depend on the problem, then validates. Idempotent.
    pub fn resolve(mut self) -> Result<Self, ConfigError> {
        let mut bad: Vec<(&str, String)> = Vec::new();
        if let Some(name) = &self.problem {
            if !PROBLEM_NAMES.contains(&name.as_str()) {
                bad.push(("problem", format!("unknown problem '{name}', expected one of {}", PROBLEM_NAMES.join(", "))));
            }
        } else if matches!(self.command, Command::Solve | Command::Convergence) {
            bad.push(("problem", "required for this command".into()));
        }
        if self.sides.is_some() && self.interior.is_some() {
            bad.push(("sides", "give either sides or interior, not both".into()));
        }
        if !bad.is_empty() {
            return Err(ConfigError::invalid(bad));
        }
        let name = self.problem.clone();
        if self.sides.is_none() && self.interior.is_none() {
            match name.as_deref() {
                Some("linear1" | "linear2") => self.interior = Some(vec![10, 40, 80, 120]),
                Some("hjb") => self.sides = Some(vec![10, 16, 24, 32]),
                Some(_) => self.sides = Some(vec![6, 12, 24, 48]),
                None if self.command == Command::DumpGrid => self.sides = Some(vec![10]),
                None => {}
            }
        }
        if let Some(name) = name.as_deref() {
            match &self.schedule {
                Some(s) if !s.is_empty() => {
                    let [g, sg] = s[s.len() - 1];
                    if self.gamma.is_some_and(|x| x != g) || self.sigma.is_some_and(|x| x != sg) {
                        bad.push(("schedule", "last schedule stage must equal (gamma, sigma)".into()));
                    }
                    self.gamma = Some(g);
                    self.sigma = Some(sg);
                }
                Some(_) => bad.push(("schedule", "must not be empty".into())),
                None => {
                    let target = self.target();
                    let stages = if self.is_linear() {
                        vec![target]
                    } else if self.gamma.is_none() && self.sigma.is_none() {
                        default_schedule(name)
                    } else {
                        schedule_to(name, target)
                    };
                    let (g, s) = *stages.last().expect("schedules are never empty");
                    self.gamma = Some(g);
                    self.sigma = Some(s);
                    self.schedule = Some(stages.into_iter().map(|(g, s)| [g, s]).collect());
                }
            }
        }
        for &[g, s] in self.schedule.iter().flatten() {
            if !g.is_finite() || !s.is_finite() {
                bad.push(("schedule", format!("non-finite stage ({g}, {s})")));
            } else if !self.allow_unsafe && (s < 0.0 || g + s < 0.0) {
                let key = if self.schedule.as_ref().is_some_and(|v| v.len() > 1) { "schedule" } else { "sigma" };
                bad.push((key, format!("stage (gamma={g}, sigma={s}) needs sigma >= 0 and gamma + sigma >= 0 (set allow_unsafe to override)")));
            }
        }
        for [n, m] in self.meshes() {
            if n.min(m) < 3 {
                let key = if self.sides.is_some() { "sides" } else { "interior" };
                bad.push((key, format!("mesh {n}x{m} needs at least 3 points per side")));
            }
        }
        if matches!(self.command, Command::Solve | Command::Convergence | Command::DumpGrid) && self.meshes().is_empty() {
            bad.push(("sides", "at least one mesh is required".into()));
        }
        if self.n_phi == 0 {
            bad.push(("n_phi", "must be positive".into()));
        }
        if self.n_rot == 0 {
            bad.push(("n_rot", "must be positive".into()));
        }
        if self.workers == Some(0) {
            bad.push(("workers", "must be positive".into()));
        }
        if self.trials == 0 {
            bad.push(("trials", "must be positive".into()));
        }
        if let Err(e) = self.solver.validate() {
            bad.push(("solver", e.to_string()));
        }
        if self.output.as_os_str().is_empty() {
            bad.push(("output", "must not be empty".into()));
        }
        if bad.is_empty() {
            Ok(self)
        } else {
            Err(ConfigError::invalid(bad))
        }
    }

    /// Solver settings with the resolved schedule as continuation.
    pub fn solve_config(&self) -> SolveConfig {
        let mut cfg = self.solver.clone();
        if let Some(s) = &self.schedule {
            cfg.continuation = s.iter().map(|&[g, s]| (g, s)).collect();
        }
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_verify_config() {
        let c = RunConfig::from_json(r#"{"command": "verify"}"#).unwrap().resolve().unwrap();
        assert_eq!(c.seed, 42);
        assert_eq!((c.n_phi, c.n_rot), (16, 32));
        assert_eq!(c.solver.newton_tol, 1e-10);
        assert!(c.problem.is_none());
    }

    #[test]
    fn default_schedules_are_filled() {
        let c = RunConfig::from_json(r#"{"command": "convergence", "problem": "hjb"}"#).unwrap().resolve().unwrap();
        assert_eq!(c.schedule.unwrap(), vec![[1000.0, 0.0], [100.0, 0.0], [10.0, 0.0], [1.0, 0.0], [0.0, 0.0]]);
        assert_eq!(c.sides.unwrap(), vec![10, 16, 24, 32]);
        let c = RunConfig::from_json(r#"{"command": "solve", "problem": "monge_ampere", "gamma": -1, "sigma": 1}"#)
            .unwrap()
            .resolve()
            .unwrap();
        assert_eq!(c.schedule.unwrap().last(), Some(&[-1.0, 1.0]));
        let c = RunConfig::from_json(r#"{"command": "solve", "problem": "linear1"}"#).unwrap().resolve().unwrap();
        assert_eq!(c.schedule.as_deref(), Some(&[[0.0, 0.0]][..]));
        assert_eq!(c.meshes()[0], [12, 12]);
    }

    #[test]
    fn explicit_schedule_sets_target() {
        let text = r#"{"command": "convergence", "problem": "monge_ampere", "sides": [6, 12, 24, 48],
            "schedule": [[-1000, 1000], [-100, 100], [-10, 10], [-1, 1], [0, 0]]}"#;
        let c = RunConfig::from_json(text).unwrap().resolve().unwrap();
        assert_eq!(c.target(), (0.0, 0.0));
        assert_eq!(c.solve_config().continuation.len(), 5);
    }

    #[test]
    fn constraint_violations_name_keys() {
        let err = RunConfig::from_json(r#"{"command": "solve", "problem": "monge_ampere", "sigma": -1}"#)
            .unwrap()
            .resolve()
            .unwrap_err();
        let msg = err.to_string();
        assert!(matches!(&err, ConfigError::Invalid { keys, .. } if keys.iter().any(|k| k == "sigma" || k == "schedule")), "{msg}");
        assert!(msg.contains("sigma >= 0"), "{msg}");
        let err = RunConfig::from_json(r#"{"command": "solve", "problem": "nope", "n_phi": 0}"#).unwrap().resolve().unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { ref keys, .. } if keys == &["problem".to_string()]));
        let err = RunConfig::from_json(r#"{"command": "solve", "problem": "hjb", "sides": [2], "n_rot": 0}"#)
            .unwrap()
            .resolve()
            .unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { ref keys, .. } if keys.contains(&"sides".into()) && keys.contains(&"n_rot".into())));
    }

    #[test]
    fn unsafe_flag_allows_negative_sigma() {
        let c = RunConfig::from_json(r#"{"command": "solve", "problem": "linear1", "sigma": -1, "allow_unsafe": true}"#).unwrap();
        assert!(c.resolve().is_ok());
    }

    #[test]
    fn parse_errors_carry_position() {
        match RunConfig::from_json("{\n  \"command\": \"verify\",\n  \"seed\": x\n}") {
            Err(ConfigError::Parse { line, column, .. }) => {
                assert_eq!(line, 3);
                assert!(column > 0);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(RunConfig::from_json(r#"{"command": "verify", "sead": 1}"#), Err(ConfigError::Parse { .. })));
        assert!(matches!(RunConfig::from_json(r#"{"command": "fly"}"#), Err(ConfigError::Parse { .. })));
    }

    #[test]
    fn resolve_is_idempotent_and_round_trips() {
        let c = RunConfig::from_json(r#"{"command": "convergence", "problem": "gauss_curvature", "workers": 2}"#)
            .unwrap()
            .resolve()
            .unwrap();
        let again = RunConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.resolve().unwrap(), c);
    }
}
