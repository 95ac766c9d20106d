//! Command-line interface.

use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use phase_core::PolicyKind;

use crate::config::{parse_stage_list, ConfigFile, Method, Stages};

#[derive(Debug, Parser)]
#[command(
    name = "phasest",
    version,
    about = "Adaptive phase estimation with low-visibility Ramsey detections"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Holevo variance of one protocol at each listed K.
    Evaluate(RunArgs),
    /// Optimize decision-tree or hybrid increments with a particle swarm.
    Optimize(RunArgs),
    /// V_H·N curves for several protocols plus reference limits.
    Sweep(RunArgs),
    /// Analytic limits for a list of total times N.
    Bounds(BoundsArgs),
}

/// Comma-separated stage exponents; inclusive ranges like `1..9` are allowed.
#[derive(Clone, Debug, PartialEq)]
pub struct StageList(pub Vec<u32>);

impl FromStr for StageList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        parse_stage_list(s).map(StageList)
    }
}

#[derive(Debug, Default, Args)]
pub struct RunArgs {
    /// TOML config file (flat keys; a metadata sidecar also works).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Monte Carlo master seed; also seeds the swarm.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub validation_seed: Option<u64>,
    /// Frozen seed used to score swarm candidates.
    #[arg(long)]
    pub training_seed: Option<u64>,
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long)]
    pub training_trials: Option<u64>,
    #[arg(long)]
    pub validation_trials: Option<u64>,
    /// Worker threads [default: $PHASEST_WORKERS or all cores].
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Initial visibility f_d.
    #[arg(long)]
    pub fd: Option<f64>,
    /// Coherence time in units of τ (`inf` allowed).
    #[arg(long)]
    pub t2: Option<f64>,
    #[arg(long)]
    pub g: Option<u32>,
    #[arg(long)]
    pub f: Option<u32>,
    /// Stage exponent K, or a list such as `1..9`.
    #[arg(long)]
    pub k: Option<StageList>,
    #[arg(long)]
    pub protocol: Option<PolicyKind>,
    /// Protocols for `sweep`, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub protocols: Option<Vec<PolicyKind>>,
    #[arg(long)]
    pub policy_file: Option<PathBuf>,
    /// `exact` or `monte-carlo`.
    #[arg(long)]
    pub method: Option<Method>,
    #[arg(long)]
    pub enumeration_cap: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub particles: Option<usize>,
}

impl RunArgs {
    /// Flag values as a config layer.
    pub fn overrides(&self) -> ConfigFile {
        ConfigFile {
            fd: self.fd,
            t2: self.t2,
            g: self.g,
            f: self.f,
            k: self.k.clone().map(|s| Stages::Many(s.0)),
            protocol: self.protocol,
            protocols: self.protocols.clone(),
            policy_file: self.policy_file.clone(),
            method: self.method,
            trials: self.trials,
            seed: self.seed,
            validation_seed: self.validation_seed,
            training_seed: self.training_seed,
            training_trials: self.training_trials,
            validation_trials: self.validation_trials,
            enumeration_cap: self.enumeration_cap,
            particles: self.particles,
            iterations: self.iterations,
            out: self.out.clone(),
            workers: self.workers,
            ..Default::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    /// Total times N, comma-separated.
    #[arg(long = "n", value_delimiter = ',')]
    pub totals: Vec<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
