//! The work behind each subcommand. Every function here is deterministic given its config.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use phase_core::eval::{
    equal_time_bound, equal_time_dynamic_range, exact_variance_with_cap, holevo_lower_bound,
    monte_carlo_variance, multi_time_dynamic_range, MonteCarloOptions, VarianceReport,
};
use phase_core::protocol::PolicyRecord;
use phase_core::pso::{optimize, SwarmResult, TraceRow};
use phase_core::{MeasurementModel, Policy, PolicyKind, Schedule};

use crate::config::{ExperimentConfig, Method};
use crate::error::{CliError, Result};

/// Objective value assigned to policies whose Monte Carlo variance is infinite.
pub const INFEASIBLE_SCORE: f64 = 1e300;

pub fn load_policy(path: &Path) -> Result<PolicyRecord> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let record: PolicyRecord = toml::from_str(&text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    record.policy().map_err(CliError::invalid)?;
    Ok(record)
}

/// If a policy file is configured, adopts its variant and schedule so that the
/// configuration echo describes what is actually run.
pub fn adopt_policy_file(cfg: &mut ExperimentConfig) -> Result<Option<PolicyRecord>> {
    let Some(path) = &cfg.policy_file else {
        return Ok(None);
    };
    let record = load_policy(path)?;
    cfg.protocol = record.variant;
    cfg.k = vec![record.k];
    cfg.g = record.g;
    cfg.f = record.f;
    Ok(Some(record))
}

fn simple_policy(kind: PolicyKind) -> Result<Policy> {
    if kind.is_parameterized() {
        return Err(CliError::Config(format!(
            "protocol {kind} needs parameters; supply them with --policy-file"
        )));
    }
    Policy::simple(kind).map_err(CliError::invalid)
}

fn run_method(
    cfg: &ExperimentConfig,
    schedule: &Schedule,
    policy: &Policy,
    model: &MeasurementModel,
) -> Result<VarianceReport> {
    let report = match cfg.method {
        Method::Exact => exact_variance_with_cap(schedule, policy, model, cfg.enumeration_cap)?,
        Method::MonteCarlo => monte_carlo_variance(
            schedule,
            policy,
            model,
            MonteCarloOptions {
                trials: cfg.trials,
                master_seed: cfg.seed,
            },
        )?,
    };
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationRow {
    pub protocol: PolicyKind,
    pub report: VarianceReport,
}

/// Evaluates the configured protocol at every listed stage exponent.
///
/// Call [`adopt_policy_file`] first when a policy file may be present.
pub fn evaluate(
    cfg: &ExperimentConfig,
    record: Option<&PolicyRecord>,
) -> Result<Vec<EvaluationRow>> {
    let model = cfg.model()?;
    let jobs: Vec<(Schedule, Policy)> = match record {
        Some(r) => vec![(
            r.schedule().map_err(CliError::invalid)?,
            r.policy().map_err(CliError::invalid)?,
        )],
        None => {
            let policy = simple_policy(cfg.protocol)?;
            cfg.schedules()?
                .into_iter()
                .map(|s| (s, policy.clone()))
                .collect()
        }
    };
    jobs.iter()
        .map(|(s, p)| {
            Ok(EvaluationRow {
                protocol: p.kind(),
                report: run_method(cfg, s, p, &model)?,
            })
        })
        .collect()
}

pub fn evaluation_csv(rows: &[EvaluationRow]) -> String {
    let mut out = format!("protocol,{}\n", VarianceReport::CSV_HEADER);
    for row in rows {
        let _ = writeln!(out, "{},{}", row.protocol, row.report.csv_row());
    }
    out
}

#[derive(Clone, Debug)]
pub struct Optimized {
    pub record: PolicyRecord,
    pub swarm: SwarmResult,
    /// Re-evaluation of the best policy with the training seed and trial count.
    pub training: VarianceReport,
    /// Evaluation of the best policy with the validation seed and trial count.
    pub validation: VarianceReport,
}

/// Searches the increments of a decision-tree or hybrid policy with the particle swarm.
///
/// Candidates are scored by Monte Carlo with `training_trials` trials under the frozen
/// `training_seed`; the swarm itself draws from `seed`.
pub fn optimize_policy(cfg: &ExperimentConfig) -> Result<Optimized> {
    let kind = cfg.protocol;
    if !kind.is_parameterized() {
        return Err(CliError::Config(format!(
            "protocol {kind} has no parameters to optimize"
        )));
    }
    let [k] = cfg.k[..] else {
        return Err(CliError::Config(
            "optimize takes a single stage exponent".into(),
        ));
    };
    let schedule = Schedule::new(k, cfg.g, cfg.f).map_err(CliError::invalid)?;
    let model = cfg.model()?;
    let training_trials = cfg.training_trials;
    let objective = |x: &[f64], seed: u64| -> f64 {
        let Ok(policy) = Policy::from_vector(kind, &schedule, x) else {
            return f64::NAN;
        };
        let options = MonteCarloOptions {
            trials: training_trials,
            master_seed: seed,
        };
        match monte_carlo_variance(&schedule, &policy, &model, options) {
            Ok(r) if r.holevo_variance.is_finite() => r.holevo_variance,
            Ok(_) => INFEASIBLE_SCORE,
            Err(_) => f64::NAN,
        }
    };
    let swarm = optimize(
        &objective,
        &cfg.swarm(),
        schedule.parameter_count(),
        cfg.seed,
        cfg.training_seed,
        cfg.validation_seed,
    )?;
    let policy = Policy::from_vector(kind, &schedule, &swarm.best_position)?;
    let score = |trials, master_seed| {
        monte_carlo_variance(
            &schedule,
            &policy,
            &model,
            MonteCarloOptions {
                trials,
                master_seed,
            },
        )
    };
    let training = score(cfg.training_trials, cfg.training_seed)?;
    let validation = score(cfg.validation_trials, cfg.validation_seed)?;
    Ok(Optimized {
        record: PolicyRecord::new(&schedule, &policy),
        swarm,
        training,
        validation,
    })
}

pub fn policy_toml(record: &PolicyRecord) -> Result<String> {
    toml::to_string(record).map_err(|e| CliError::Config(format!("cannot serialize policy: {e}")))
}

pub fn trace_csv(trace: &[TraceRow]) -> String {
    let mut out = format!("{}\n", TraceRow::CSV_HEADER);
    for row in trace {
        let _ = writeln!(out, "{}", row.csv_row());
    }
    out
}

pub fn optimization_report_csv(opt: &Optimized) -> String {
    let kind = opt.record.variant;
    format!(
        "role,protocol,{}\ntraining,{kind},{}\nvalidation,{kind},{}\n",
        VarianceReport::CSV_HEADER,
        opt.training.csv_row(),
        opt.validation.csv_row()
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub stage: u32,
    pub total_time: u64,
    /// `V_H·N` and its standard error (scaled by `N`) per protocol.
    pub curves: Vec<(f64, Option<f64>)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepTable {
    pub protocols: Vec<PolicyKind>,
    pub rows: Vec<SweepRow>,
}

/// `V_H·N` for each parameterless protocol at each stage exponent.
pub fn sweep(cfg: &ExperimentConfig) -> Result<SweepTable> {
    if cfg.protocols.is_empty() {
        return Err(CliError::Config("no protocols to sweep".into()));
    }
    let model = cfg.model()?;
    let policies = cfg
        .protocols
        .iter()
        .map(|&k| simple_policy(k))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for schedule in cfg.schedules()? {
        let n = schedule.total_time() as f64;
        let curves = policies
            .iter()
            .map(|p| {
                let r = run_method(cfg, &schedule, p, &model)?;
                Ok((r.scaled_variance(), r.std_error.map(|e| e * n)))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(SweepRow {
            stage: schedule.max_stage(),
            total_time: schedule.total_time(),
            curves,
        });
    }
    Ok(SweepTable {
        protocols: cfg.protocols.clone(),
        rows,
    })
}

impl SweepTable {
    /// Columns: `K`, `N`, then `V_H·N` and its error per protocol, then the Holevo bound
    /// times `N` and the equal-time limit times `N` (identically 1).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("K,N");
        for p in &self.protocols {
            let _ = write!(out, ",{p}_V_H_N,{p}_std_error_N");
        }
        out.push_str(",holevo_bound_N,equal_time_N\n");
        for row in &self.rows {
            let _ = write!(out, "{},{}", row.stage, row.total_time);
            for (v, e) in &row.curves {
                let e = e.map(|e| e.to_string()).unwrap_or_default();
                let _ = write!(out, ",{v},{e}");
            }
            let n = row.total_time;
            // (1/N)·N is exactly 1; computing it would only add rounding.
            let _ = writeln!(out, ",{},1", holevo_lower_bound(n) * n as f64);
        }
        out
    }
}

pub const BOUNDS_HEADER: &str =
    "N,holevo_bound,equal_time_bound,equal_time_dynamic_range,multi_time_dynamic_range";

/// Analytic limits for each total time `N ≥ 1`.
pub fn bounds_csv(totals: &[u64]) -> Result<String> {
    let mut out = format!("{BOUNDS_HEADER}\n");
    for &n in totals {
        if n == 0 {
            return Err(CliError::Config("total time N must be at least 1".into()));
        }
        let _ = writeln!(
            out,
            "{n},{},{},{},{}",
            holevo_lower_bound(n),
            equal_time_bound(n),
            equal_time_dynamic_range(n),
            multi_time_dynamic_range(n)
        );
    }
    Ok(out)
}
