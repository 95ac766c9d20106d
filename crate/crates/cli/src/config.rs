//! Experiment configuration: a flat TOML file, overridden by command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use phase_core::pso::{RandomDraws, SwarmConfig};
use phase_core::{MeasurementModel, PolicyKind, Schedule};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "PHASEST_WORKERS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Exact,
    MonteCarlo,
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "exact" => Ok(Method::Exact),
            "monte-carlo" | "mc" => Ok(Method::MonteCarlo),
            _ => Err(format!(
                "unknown method `{s}` (expected exact or monte-carlo)"
            )),
        }
    }
}

/// A single stage exponent or a list of them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Stages {
    One(u32),
    Many(Vec<u32>),
}

impl Stages {
    fn into_vec(self) -> Vec<u32> {
        match self {
            Stages::One(k) => vec![k],
            Stages::Many(v) => v,
        }
    }
}

/// Every key is optional; missing keys fall back to defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub fd: Option<f64>,
    pub t2: Option<f64>,
    pub g: Option<u32>,
    pub f: Option<u32>,
    pub k: Option<Stages>,
    pub protocol: Option<PolicyKind>,
    pub protocols: Option<Vec<PolicyKind>>,
    pub policy_file: Option<PathBuf>,
    pub method: Option<Method>,
    pub trials: Option<u64>,
    pub seed: Option<u64>,
    pub validation_seed: Option<u64>,
    pub training_seed: Option<u64>,
    pub training_trials: Option<u64>,
    pub validation_trials: Option<u64>,
    pub enumeration_cap: Option<usize>,
    pub chi: Option<f64>,
    pub c_global: Option<f64>,
    pub c_local: Option<f64>,
    pub particles: Option<usize>,
    pub iterations: Option<usize>,
    pub v_max: Option<f64>,
    pub spread_tolerance: Option<f64>,
    pub draws: Option<RandomDraws>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

impl ConfigFile {
    /// Reads a config file. A metadata sidecar is also accepted, in which case its
    /// `[config]` table is used.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let parse_err = |message: String| CliError::Parse {
            path: path.to_path_buf(),
            message,
        };
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| parse_err(e.to_string()))?;
        if let (Some(toml::Value::Table(config)), true) =
            (table.remove("config"), table.contains_key("run"))
        {
            table = config;
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| parse_err(e.to_string()))
    }

    /// Fields set in `other` replace those in `self`.
    pub fn overridden_by(self, other: ConfigFile) -> ConfigFile {
        macro_rules! pick {
            ($($field:ident),*) => {
                ConfigFile { $($field: other.$field.or(self.$field)),* }
            };
        }
        pick!(
            fd,
            t2,
            g,
            f,
            k,
            protocol,
            protocols,
            policy_file,
            method,
            trials,
            seed,
            validation_seed,
            training_seed,
            training_trials,
            validation_trials,
            enumeration_cap,
            chi,
            c_global,
            c_local,
            particles,
            iterations,
            v_max,
            spread_tolerance,
            draws,
            out,
            workers
        )
    }
}

/// Fully resolved configuration. Serialized with the same keys as [`ConfigFile`], so a
/// metadata sidecar can be fed back with `--config`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub fd: f64,
    pub t2: f64,
    pub g: u32,
    pub f: u32,
    pub k: Vec<u32>,
    pub protocol: PolicyKind,
    pub protocols: Vec<PolicyKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy_file: Option<PathBuf>,
    pub method: Method,
    pub trials: u64,
    pub seed: u64,
    pub validation_seed: u64,
    pub training_seed: u64,
    pub training_trials: u64,
    pub validation_trials: u64,
    pub enumeration_cap: usize,
    pub chi: f64,
    pub c_global: f64,
    pub c_local: f64,
    pub particles: usize,
    pub iterations: usize,
    pub v_max: f64,
    pub spread_tolerance: f64,
    pub draws: RandomDraws,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub workers: usize,
}

/// SplitMix64 finalizer, used to derive a training seed distinct from the swarm seed.
fn mix(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn default_workers() -> Result<usize> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("{WORKERS_ENV}={v} is not a worker count"))),
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

impl ExperimentConfig {
    /// Applies defaults to the merged file and flag values.
    pub fn resolve(raw: ConfigFile) -> Result<Self> {
        let swarm = SwarmConfig::default();
        let seed = raw.seed.unwrap_or(1);
        let trials = raw.trials.unwrap_or(1 << 16);
        let workers = match raw.workers {
            Some(w) => w,
            None => default_workers()?,
        };
        let cfg = ExperimentConfig {
            fd: raw.fd.unwrap_or(0.85),
            t2: raw.t2.unwrap_or(1e3),
            g: raw.g.unwrap_or(6),
            f: raw.f.unwrap_or(2),
            k: raw.k.map_or_else(|| vec![3], Stages::into_vec),
            protocol: raw.protocol.unwrap_or(PolicyKind::Cappellaro),
            protocols: raw
                .protocols
                .unwrap_or_else(|| vec![PolicyKind::Nonadaptive, PolicyKind::Cappellaro]),
            policy_file: raw.policy_file,
            method: raw.method.unwrap_or(Method::MonteCarlo),
            trials,
            seed,
            validation_seed: raw.validation_seed.unwrap_or(seed.wrapping_add(1)),
            training_seed: raw.training_seed.unwrap_or_else(|| mix(seed)),
            training_trials: raw.training_trials.unwrap_or(1 << 14),
            validation_trials: raw.validation_trials.unwrap_or(trials),
            enumeration_cap: raw
                .enumeration_cap
                .unwrap_or(phase_core::eval::DEFAULT_ENUMERATION_CAP),
            chi: raw.chi.unwrap_or(swarm.chi),
            c_global: raw.c_global.unwrap_or(swarm.c_global),
            c_local: raw.c_local.unwrap_or(swarm.c_local),
            particles: raw.particles.unwrap_or(swarm.particles),
            iterations: raw.iterations.unwrap_or(swarm.max_iterations),
            v_max: raw.v_max.unwrap_or(swarm.v_max),
            spread_tolerance: raw.spread_tolerance.unwrap_or(swarm.spread_tolerance),
            draws: raw.draws.unwrap_or(swarm.draws),
            out: raw.out,
            workers,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        self.model()?;
        if self.k.is_empty() {
            return Err(CliError::Config("the stage list is empty".into()));
        }
        self.schedules()?;
        if self.workers == 0 {
            return Err(CliError::Config("worker count must be at least 1".into()));
        }
        if self.trials < 2 || self.training_trials < 2 || self.validation_trials < 2 {
            return Err(CliError::Config("trial counts must be at least 2".into()));
        }
        self.swarm().validate().map_err(CliError::invalid)?;
        Ok(())
    }

    pub fn model(&self) -> Result<MeasurementModel> {
        MeasurementModel::new(self.fd, self.t2).map_err(CliError::invalid)
    }

    /// One schedule per stage exponent, in the listed order.
    pub fn schedules(&self) -> Result<Vec<Schedule>> {
        self.k
            .iter()
            .map(|&k| Schedule::new(k, self.g, self.f).map_err(CliError::invalid))
            .collect()
    }

    pub fn swarm(&self) -> SwarmConfig {
        SwarmConfig {
            chi: self.chi,
            c_global: self.c_global,
            c_local: self.c_local,
            particles: self.particles,
            max_iterations: self.iterations,
            v_max: self.v_max,
            lower: 0.0,
            upper: 2.0 * std::f64::consts::PI,
            spread_tolerance: self.spread_tolerance,
            draws: self.draws,
        }
    }
}

/// Parses `3`, `1,2,5` or inclusive ranges such as `1..6`.
pub fn parse_stage_list(s: &str) -> std::result::Result<Vec<u32>, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let b = b.strip_prefix('=').unwrap_or(b);
            let (a, b): (u32, u32) = (
                a.parse()
                    .map_err(|_| format!("bad range start in `{part}`"))?,
                b.parse()
                    .map_err(|_| format!("bad range end in `{part}`"))?,
            );
            if a > b {
                return Err(format!("empty range `{part}`"));
            }
            out.extend(a..=b);
        } else {
            out.push(part.parse().map_err(|_| format!("bad stage `{part}`"))?);
        }
    }
    Ok(out)
}
