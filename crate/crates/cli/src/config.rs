//! Flat `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use swarmkin_core::{DynamicsConfig, DynamicsKind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConfigError {
    Syntax { line: usize, text: String },
    Duplicate(String),
    Unknown(String),
    Missing(String),
    Invalid { key: String, reason: String },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Syntax { line, text } => {
                write!(f, "line {line}: expected `key = value`, got `{text}`")
            }
            ConfigError::Duplicate(k) => write!(f, "key `{k}` given twice"),
            ConfigError::Unknown(k) => write!(f, "unknown key `{k}`"),
            ConfigError::Missing(k) => write!(f, "missing required key `{k}`"),
            ConfigError::Invalid { key, reason } => {
                write!(f, "invalid value for `{key}`: {reason}")
            }
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Oracle,
    Hierarchy,
    Master,
    Compare,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Oracle => "oracle",
            Command::Hierarchy => "hierarchy",
            Command::Master => "master",
            Command::Compare => "compare",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "simulate" => Command::Simulate,
            "oracle" => Command::Oracle,
            "hierarchy" => Command::Hierarchy,
            "master" => Command::Master,
            "compare" => Command::Compare,
            _ => return None,
        })
    }
}

pub const KEYS: &[&str] = &[
    "command",
    "kind",
    "n_particles",
    "gamma",
    "gamma_prime",
    "n_runs",
    "seed",
    "bins",
    "equil_tolerance",
    "kappa_factor",
    "lambda_min",
    "max_iterations",
    "output_dir",
    "n_max",
    "level",
    "grid_points",
    "dt",
    "t_end",
    "master_points",
    "empirical",
    "reference",
];

pub const DEFAULT_RUNS: usize = 1000;
pub const DEFAULT_N_MAX: i32 = 64;
pub const DEFAULT_GRID_POINTS: usize = 256;
pub const DEFAULT_T_END: f64 = 12.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub command: Command,
    pub kind: DynamicsKind,
    pub n_particles: usize,
    pub gamma: f64,
    pub gamma_prime: Option<f64>,
    pub n_runs: usize,
    pub seed: u64,
    pub bins: usize,
    pub equil_tolerance: f64,
    pub kappa_factor: f64,
    pub lambda_min: f64,
    pub max_iterations: Option<u64>,
    pub output_dir: PathBuf,
    pub n_max: i32,
    pub level: usize,
    pub grid_points: usize,
    pub dt: Option<f64>,
    pub t_end: f64,
    pub master_points: Option<usize>,
    pub empirical: Option<PathBuf>,
    pub reference: Option<String>,
}

/// Raw `key = value` pairs, comments and blank lines removed.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: i + 1,
            text: line.to_string(),
        })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(ConfigError::Syntax {
                line: i + 1,
                text: line.to_string(),
            });
        }
        if !KEYS.contains(&k) {
            return Err(ConfigError::Unknown(k.to_string()));
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(ConfigError::Duplicate(k.to_string()));
        }
    }
    Ok(out)
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        reason: reason.into(),
    }
}

fn num<T: std::str::FromStr>(
    map: &BTreeMap<String, String>,
    key: &str,
) -> Result<Option<T>, ConfigError>
where
    T::Err: fmt::Display,
{
    map.get(key)
        .map(|v| {
            v.parse::<T>()
                .map_err(|e| invalid(key, format!("`{v}`: {e}")))
        })
        .transpose()
}

fn positive(key: &str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(invalid(key, format!("{v} must be positive and finite")))
    }
}

impl ExperimentConfig {
    /// Builds a validated config from raw pairs, filling defaults.
    pub fn from_pairs(map: &BTreeMap<String, String>) -> Result<Self, ConfigError> {
        for k in map.keys() {
            if !KEYS.contains(&k.as_str()) {
                return Err(ConfigError::Unknown(k.clone()));
            }
        }
        let command_text = map
            .get("command")
            .ok_or_else(|| ConfigError::Missing("command".into()))?;
        let command = Command::parse(command_text)
            .ok_or_else(|| invalid("command", format!("`{command_text}` is not a command")))?;

        let needs_dynamics = matches!(command, Command::Simulate | Command::Master);
        let kind = match map.get("kind") {
            Some(k) => DynamicsKind::parse(k)
                .ok_or_else(|| invalid("kind", format!("`{k}` (cl, bdg, biased_bdg)")))?,
            None if needs_dynamics => return Err(ConfigError::Missing("kind".into())),
            None => DynamicsKind::Cl,
        };
        let n_particles = match num::<usize>(map, "n_particles")? {
            Some(n) if n >= 2 => n,
            Some(n) => return Err(invalid("n_particles", format!("{n} < 2"))),
            None if needs_dynamics => return Err(ConfigError::Missing("n_particles".into())),
            None => 2,
        };
        let needs_gamma = command != Command::Compare
            || map.get("reference").map(String::as_str) == Some("m_density");
        let gamma = match num::<f64>(map, "gamma")? {
            Some(g) => positive("gamma", g)?,
            None if needs_gamma => return Err(ConfigError::Missing("gamma".into())),
            None => 0.05,
        };
        let gamma_prime = num::<f64>(map, "gamma_prime")?
            .map(|g| positive("gamma_prime", g))
            .transpose()?;
        let needs_bias = match command {
            Command::Simulate | Command::Master => kind == DynamicsKind::BiasedBdg,
            Command::Hierarchy => kind != DynamicsKind::Cl,
            _ => false,
        };
        if needs_bias && gamma_prime.is_none() {
            return Err(ConfigError::Missing("gamma_prime".into()));
        }

        let n_runs = num::<usize>(map, "n_runs")?.unwrap_or(DEFAULT_RUNS);
        if n_runs == 0 {
            return Err(invalid("n_runs", "must be at least 1"));
        }
        let bins = num::<usize>(map, "bins")?.unwrap_or(swarmkin_core::estimators::DEFAULT_BINS);
        if bins == 0 {
            return Err(invalid("bins", "must be at least 1"));
        }
        let equil_tolerance = positive(
            "equil_tolerance",
            num(map, "equil_tolerance")?.unwrap_or(DynamicsConfig::DEFAULT_TOLERANCE),
        )?;
        let kappa_factor = positive(
            "kappa_factor",
            num(map, "kappa_factor")?.unwrap_or(DynamicsConfig::DEFAULT_KAPPA_FACTOR),
        )?;
        let lambda_min: f64 = num(map, "lambda_min")?.unwrap_or(DynamicsConfig::DEFAULT_LAMBDA);
        if !(lambda_min.is_finite() && lambda_min >= 0.0) {
            return Err(invalid(
                "lambda_min",
                format!("{lambda_min} must be non-negative"),
            ));
        }
        let max_iterations = num::<u64>(map, "max_iterations")?;
        if max_iterations == Some(0) {
            return Err(invalid("max_iterations", "must be at least 1"));
        }
        let n_max = num::<i32>(map, "n_max")?.unwrap_or(DEFAULT_N_MAX);
        if n_max < 1 {
            return Err(invalid("n_max", "must be at least 1"));
        }
        let level = num::<usize>(map, "level")?.unwrap_or(2);
        if !(2..=3).contains(&level) {
            return Err(invalid("level", format!("{level} (2 or 3)")));
        }
        let grid_points = num::<usize>(map, "grid_points")?.unwrap_or(DEFAULT_GRID_POINTS);
        if grid_points < 4 || grid_points % 2 == 1 {
            return Err(invalid(
                "grid_points",
                format!("{grid_points} (even, at least 4)"),
            ));
        }
        let dt = num::<f64>(map, "dt")?
            .map(|d| positive("dt", d))
            .transpose()?;
        let t_end: f64 = num(map, "t_end")?.unwrap_or(DEFAULT_T_END);
        if !(t_end.is_finite() && t_end >= 0.0) {
            return Err(invalid("t_end", format!("{t_end} must be non-negative")));
        }
        let master_points = num::<usize>(map, "master_points")?;
        if let Some(g) = master_points {
            if g < 4 || g % 2 == 1 {
                return Err(invalid("master_points", format!("{g} (even, at least 4)")));
            }
        }
        if command == Command::Master && !(2..=3).contains(&n_particles) {
            return Err(invalid(
                "n_particles",
                format!("{n_particles} (master equations support 2 or 3)"),
            ));
        }
        let empirical = map.get("empirical").map(PathBuf::from);
        let reference = map.get("reference").cloned();
        if command == Command::Compare {
            if empirical.is_none() {
                return Err(ConfigError::Missing("empirical".into()));
            }
            if reference.is_none() {
                return Err(ConfigError::Missing("reference".into()));
            }
        }
        Ok(Self {
            command,
            kind,
            n_particles,
            gamma,
            gamma_prime,
            n_runs,
            seed: num(map, "seed")?.unwrap_or(0),
            bins,
            equil_tolerance,
            kappa_factor,
            lambda_min,
            max_iterations,
            output_dir: map
                .get("output_dir")
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("out")),
            n_max,
            level,
            grid_points,
            dt,
            t_end,
            master_points,
            empirical,
            reference,
        })
    }

    /// Every key with its effective value, in a fixed order.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let mut v = vec![
            ("command", self.command.name().to_string()),
            ("kind", self.kind.name().to_string()),
            ("n_particles", self.n_particles.to_string()),
            ("gamma", self.gamma.to_string()),
        ];
        if let Some(g) = self.gamma_prime {
            v.push(("gamma_prime", g.to_string()));
        }
        v.extend([
            ("n_runs", self.n_runs.to_string()),
            ("seed", self.seed.to_string()),
            ("bins", self.bins.to_string()),
            ("equil_tolerance", self.equil_tolerance.to_string()),
            ("kappa_factor", self.kappa_factor.to_string()),
            ("lambda_min", self.lambda_min.to_string()),
        ]);
        if let Some(m) = self.max_iterations {
            v.push(("max_iterations", m.to_string()));
        }
        v.push(("output_dir", self.output_dir.display().to_string()));
        v.extend([
            ("n_max", self.n_max.to_string()),
            ("level", self.level.to_string()),
            ("grid_points", self.grid_points.to_string()),
        ]);
        if let Some(d) = self.dt {
            v.push(("dt", d.to_string()));
        }
        v.push(("t_end", self.t_end.to_string()));
        if let Some(g) = self.master_points {
            v.push(("master_points", g.to_string()));
        }
        if let Some(p) = &self.empirical {
            v.push(("empirical", p.display().to_string()));
        }
        if let Some(r) = &self.reference {
            v.push(("reference", r.clone()));
        }
        v
    }

    pub fn to_text(&self) -> String {
        self.to_pairs()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn dynamics(&self) -> Result<DynamicsConfig, swarmkin_core::SimError> {
        let mut d = DynamicsConfig::new(self.kind, self.n_particles, self.gamma)?;
        if let Some(g) = self.gamma_prime {
            d = d.with_bias(g)?;
        }
        d.equil_tolerance = self.equil_tolerance;
        d.kappa_factor = self.kappa_factor;
        d.lambda_min = self.lambda_min;
        if let Some(m) = self.max_iterations {
            d.max_iterations = m;
        }
        Ok(d)
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    ExperimentConfig::from_pairs(&parse_pairs(text)?)
}

/// Applies `key=value` overrides on top of parsed pairs.
pub fn apply_overrides(
    map: &mut BTreeMap<String, String>,
    overrides: &[String],
) -> Result<(), ConfigError> {
    for o in overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: 0,
            text: o.clone(),
        })?;
        let k = k.trim();
        if !KEYS.contains(&k) {
            return Err(ConfigError::Unknown(k.to_string()));
        }
        map.insert(k.to_string(), v.trim().to_string());
    }
    Ok(())
}
