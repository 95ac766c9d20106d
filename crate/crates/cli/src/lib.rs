//! Experiment runner for adaptive Ramsey phase estimation: configuration handling,
//! the `evaluate`, `optimize`, `sweep` and `bounds` subcommands, and result files.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::Path;

pub use error::{CliError, Result};

use cli::{Cli, Command, RunArgs};
use config::{ConfigFile, ExperimentConfig};
use output::{companion_path, emit, write_file, write_metadata};

/// Merges the config file (if any) with flag overrides.
pub fn load_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let file = match &args.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    ExperimentConfig::resolve(file.overridden_by(args.overrides()))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Bounds(args) => {
            let csv = commands::bounds_csv(&args.totals)?;
            emit(args.out.as_deref(), &csv)?;
            if let Some(out) = &args.out {
                write_metadata(
                    out,
                    "bounds",
                    1,
                    None,
                    Some(&args.totals),
                    std::slice::from_ref(out),
                )?;
            }
            Ok(())
        }
        Command::Evaluate(args) => with_config(&args, "evaluate", |cfg| {
            let record = commands::adopt_policy_file(cfg)?;
            let rows = commands::evaluate(cfg, record.as_ref())?;
            Ok(vec![(None, commands::evaluation_csv(&rows))])
        }),
        Command::Sweep(args) => with_config(&args, "sweep", |cfg| {
            Ok(vec![(None, commands::sweep(cfg)?.to_csv())])
        }),
        Command::Optimize(args) => with_config(&args, "optimize", |cfg| {
            let Some(out) = cfg.out.clone() else {
                return Err(CliError::Config(
                    "optimize needs --out for the policy file".into(),
                ));
            };
            let opt = commands::optimize_policy(cfg)?;
            Ok(vec![
                (Some(out.clone()), commands::policy_toml(&opt.record)?),
                (
                    Some(companion_path(&out, "trace.csv")),
                    commands::trace_csv(&opt.swarm.trace),
                ),
                (
                    Some(companion_path(&out, "report.csv")),
                    commands::optimization_report_csv(&opt),
                ),
            ])
        }),
    }
}

type Outputs = Vec<(Option<std::path::PathBuf>, String)>;

/// Resolves the config, runs `body` on a pool of the configured size and writes its
/// outputs. An output without a path goes to `--out`, or stdout if that is unset.
fn with_config<F>(args: &RunArgs, command: &str, body: F) -> Result<()>
where
    F: FnOnce(&mut ExperimentConfig) -> Result<Outputs> + Send,
{
    let mut cfg = load_config(args)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::Pool(e.to_string()))?;
    let outputs = pool.install(|| body(&mut cfg))?;
    let mut written = Vec::new();
    for (path, contents) in &outputs {
        match path.as_ref().or(cfg.out.as_ref()) {
            Some(p) => {
                write_file(p, contents)?;
                written.push(p.clone());
            }
            None => emit(None, contents)?,
        }
    }
    if let Some(out) = &cfg.out {
        write_metadata(
            Path::new(out),
            command,
            cfg.workers,
            Some(&cfg),
            None,
            &written,
        )?;
    }
    Ok(())
}
