//! Holevo-variance evaluation of a (schedule, policy, model) triple.
//!
//! [`exact_variance`] walks every outcome sequence and sums `P(ū)·|b_{−1}(ū)|/b_0(ū)`,
//! which is the expected sharpness of the optimal estimator. [`monte_carlo_variance`]
//! samples trials from seeded per-trial streams and uses `⟨cos(φ̂ − φ)⟩` in place of the
//! sharpness. Both are bitwise reproducible and independent of the rayon thread count.

use std::f64::consts::PI;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{MeasurementModel, Outcome};
use crate::posterior::{holevo_variance, FourierPosterior};
use crate::protocol::{sample_phase, simulate, Policy, PolicyState, Schedule, TrialPlan};
use crate::sum::CompensatedSum;

/// Largest detection count accepted by exact enumeration by default (`2^22` leaves).
pub const DEFAULT_ENUMERATION_CAP: usize = 22;

/// Branches whose probability drops below this are not expanded further.
pub const PRUNE_PROBABILITY: f64 = 1e-30;

/// Enumeration depth below which sibling branches are evaluated in parallel.
const PARALLEL_DEPTH: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceMethod {
    Exact,
    MonteCarlo,
}

impl fmt::Display for VarianceMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VarianceMethod::Exact => "exact",
            VarianceMethod::MonteCarlo => "monte_carlo",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub method: VarianceMethod,
    pub schedule: Schedule,
    pub visibility: f64,
    pub t2_over_tau: f64,
    /// Total interaction time `N` in units of τ.
    pub total_time: u64,
    pub holevo_variance: f64,
    /// Delta-method standard error (Monte Carlo only).
    pub std_error: Option<f64>,
    pub trials: Option<u64>,
    pub master_seed: Option<u64>,
    /// Expected sharpness (exact) or mean `cos(φ̂ − φ)` (Monte Carlo).
    pub sharpness: f64,
    /// Total probability of all enumerated leaves (exact only; 1 up to pruning).
    pub probability_mass: Option<f64>,
    /// Probability of branches cut by [`PRUNE_PROBABILITY`] (exact only).
    pub pruned_mass: Option<f64>,
    pub workers: usize,
}

impl VarianceReport {
    pub const CSV_HEADER: &'static str =
        "method,K,G,F,f_d,t2_over_tau,N,V_H,V_H_N,std_error,trials,master_seed";

    /// `V_H·N`.
    pub fn scaled_variance(&self) -> f64 {
        self.holevo_variance * self.total_time as f64
    }

    /// One comma-separated row matching [`CSV_HEADER`](Self::CSV_HEADER); absent fields are empty.
    pub fn csv_row(&self) -> String {
        fn opt<T: fmt::Display>(v: Option<T>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.method,
            self.schedule.max_stage(),
            self.schedule.initial(),
            self.schedule.increment(),
            self.visibility,
            self.t2_over_tau,
            self.total_time,
            self.holevo_variance,
            self.scaled_variance(),
            opt(self.std_error),
            opt(self.trials),
            opt(self.master_seed),
        )
    }

    fn base(method: VarianceMethod, schedule: &Schedule, model: &MeasurementModel) -> Self {
        VarianceReport {
            method,
            schedule: *schedule,
            visibility: model.visibility(),
            t2_over_tau: model.t2_over_tau(),
            total_time: schedule.total_time(),
            holevo_variance: f64::INFINITY,
            std_error: None,
            trials: None,
            master_seed: None,
            sharpness: 0.0,
            probability_mass: None,
            pruned_mass: None,
            workers: rayon::current_num_threads(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct Tally {
    sharpness: CompensatedSum,
    probability: CompensatedSum,
    pruned: CompensatedSum,
}

impl Tally {
    fn merge(mut self, other: &Tally) -> Tally {
        self.sharpness.merge(&other.sharpness);
        self.probability.merge(&other.probability);
        self.pruned.merge(&other.pruned);
        self
    }
}

/// Exact Holevo variance with the default enumeration cap.
pub fn exact_variance(
    schedule: &Schedule,
    policy: &Policy,
    model: &MeasurementModel,
) -> Result<VarianceReport> {
    exact_variance_with_cap(schedule, policy, model, DEFAULT_ENUMERATION_CAP)
}

/// Exact Holevo variance by enumerating all `2^{Σ M_k}` outcome sequences.
pub fn exact_variance_with_cap(
    schedule: &Schedule,
    policy: &Policy,
    model: &MeasurementModel,
    cap: usize,
) -> Result<VarianceReport> {
    let detections = schedule.detection_count();
    if detections > cap {
        return Err(Error::EnumerationCap { detections, cap });
    }
    policy.validate(schedule)?;
    let plan = TrialPlan::new(schedule, model);
    let prior = FourierPosterior::uniform_prior(plan.max_index())?;
    let tally = descend(&plan, policy, prior, PolicyState::start(schedule), 0)?;

    let sharpness = tally.sharpness.value();
    let mut report = VarianceReport::base(VarianceMethod::Exact, schedule, model);
    report.sharpness = sharpness;
    report.holevo_variance = holevo_variance(sharpness);
    report.probability_mass = Some(tally.probability.value());
    report.pruned_mass = Some(tally.pruned.value());
    Ok(report)
}

fn descend(
    plan: &TrialPlan,
    policy: &Policy,
    posterior: FourierPosterior,
    state: PolicyState,
    depth: usize,
) -> Result<Tally> {
    let Some(step) = plan.steps().get(depth) else {
        let mut tally = Tally::default();
        let p = posterior.normalization();
        tally.probability.add(p);
        tally.sharpness.add(p * posterior.sharpness());
        return Ok(tally);
    };
    let schedule = plan.schedule();
    let theta = policy.next_control_phase(schedule, &state, &posterior)?;

    let branch = |outcome: Outcome, mut post: FourierPosterior| -> Result<Tally> {
        post.observe(outcome, theta, step.stage, step.visibility)?;
        let p = post.normalization();
        if p < PRUNE_PROBABILITY {
            let mut tally = Tally::default();
            tally.pruned.add(p);
            return Ok(tally);
        }
        post.truncate(step.horizon_after);
        let mut next = state;
        next.advance(schedule, theta, outcome);
        descend(plan, policy, post, next, depth + 1)
    };

    let (plus, minus) = if depth < PARALLEL_DEPTH {
        let other = posterior.clone();
        rayon::join(
            || branch(Outcome::Plus, other),
            || branch(Outcome::Minus, posterior),
        )
    } else {
        (
            branch(Outcome::Plus, posterior.clone()),
            branch(Outcome::Minus, posterior),
        )
    };
    Ok(plus?.merge(&minus?))
}

/// Per-trial random stream: ChaCha8 keyed by the master seed, stream number = trial index.
pub fn trial_rng(master_seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonteCarloOptions {
    pub trials: u64,
    pub master_seed: u64,
}

/// Monte Carlo Holevo variance over `trials` runs with `φ ~ U(−π, π]`.
///
/// Each trial contributes `c_i = cos(φ̂_i − φ_i)`, or 0 when its final posterior has zero
/// sharpness (no estimate). `V_H = c̄^{−2} − 1` with delta-method error
/// `2·s_c / (√n · c̄³)`; `c̄ ≤ 0` yields an infinite variance.
pub fn monte_carlo_variance(
    schedule: &Schedule,
    policy: &Policy,
    model: &MeasurementModel,
    options: MonteCarloOptions,
) -> Result<VarianceReport> {
    let MonteCarloOptions {
        trials,
        master_seed,
    } = options;
    if trials < 2 {
        return Err(Error::TooFewTrials(trials));
    }
    policy.validate(schedule)?;
    let plan = TrialPlan::new(schedule, model);
    let scores = (0..trials)
        .into_par_iter()
        .map(|i| trial_score(&plan, policy, master_seed, i))
        .collect::<Result<Vec<f64>>>()?;

    let n = trials as f64;
    let mean = scores.iter().copied().collect::<CompensatedSum>().value() / n;
    let ss = scores
        .iter()
        .map(|c| (c - mean) * (c - mean))
        .collect::<CompensatedSum>()
        .value();
    let sd = (ss / (n - 1.0)).sqrt();

    let mut report = VarianceReport::base(VarianceMethod::MonteCarlo, schedule, model);
    report.trials = Some(trials);
    report.master_seed = Some(master_seed);
    report.sharpness = mean;
    if mean > 0.0 {
        report.holevo_variance = holevo_variance(mean);
        report.std_error = Some(2.0 * sd / (n.sqrt() * mean.powi(3)));
    } else {
        report.holevo_variance = f64::INFINITY;
        report.std_error = Some(f64::INFINITY);
    }
    Ok(report)
}

fn trial_score(plan: &TrialPlan, policy: &Policy, master_seed: u64, trial: u64) -> Result<f64> {
    let mut rng = trial_rng(master_seed, trial);
    let phi = sample_phase(&mut rng);
    let posterior = simulate(plan, policy, phi, &mut rng, None)?;
    if posterior.sharpness() == 0.0 {
        return Ok(0.0);
    }
    Ok((posterior.phase_estimate() - phi).cos())
}

/// Monte Carlo evaluation of one policy per `K`, with `N` taken from each schedule.
///
/// `family` builds the policy for each schedule. Every row uses the same master seed.
pub fn curve_sweep<F>(
    family: F,
    model: &MeasurementModel,
    initial: u32,
    increment: u32,
    stages: &[u32],
    options: MonteCarloOptions,
) -> Result<Vec<VarianceReport>>
where
    F: Fn(&Schedule) -> Result<Policy>,
{
    stages
        .iter()
        .map(|&k| {
            let schedule = Schedule::new(k, initial, increment)?;
            let policy = family(&schedule)?;
            monte_carlo_variance(&schedule, &policy, model, options)
        })
        .collect()
}

/// `tan²(π/(N+2))`, the minimum Holevo variance for total interaction time `N ≥ 1`.
pub fn holevo_lower_bound(total_time: u64) -> f64 {
    let t = (PI / (total_time as f64 + 2.0)).tan();
    t * t
}

/// `1/N`: the phase-variance limit when every detection uses the base time τ.
pub fn equal_time_bound(total_time: u64) -> f64 {
    1.0 / total_time as f64
}

/// Equal-time dynamic-range limit as conventionally quoted, `ΔB/B_max ≥ π/√N`.
///
/// This is `π²` times looser than converting [`equal_time_bound`] through
/// `V_H = π²(ΔB/B_max)²`, which gives `1/(π√N)`; use
/// [`dynamic_range_from_variance`](crate::model::dynamic_range_from_variance) for that form.
pub fn equal_time_dynamic_range(total_time: u64) -> f64 {
    PI / (total_time as f64).sqrt()
}

/// Approximate dynamic-range limit with multiple interaction times, `ΔB/B_max ≳ 1/N`.
pub fn multi_time_dynamic_range(total_time: u64) -> f64 {
    1.0 / total_time as f64
}
