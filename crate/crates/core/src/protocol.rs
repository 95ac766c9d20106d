//! Detection schedules, control-phase policies and single-trial execution.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{outcome_from_draw, Detection, MeasurementModel, Outcome};
use crate::posterior::FourierPosterior;
use crate::{wrap_phase, wrap_signed};

/// Stages run from `K` down to 0; stage `k` uses interaction time `2^k τ` and
/// `M_k = G + F·(K − k)` detections.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Schedule {
    max_stage: u32,
    initial: u32,
    increment: u32,
}

impl Schedule {
    /// Largest supported `K`; keeps `N` well inside `u64` and posterior sizes sane.
    pub const MAX_STAGE: u32 = 40;

    pub fn new(max_stage: u32, initial: u32, increment: u32) -> Result<Self> {
        if initial == 0 {
            return Err(Error::InvalidSchedule(
                "G must be at least 1 so every stage has a detection".into(),
            ));
        }
        if max_stage > Self::MAX_STAGE {
            return Err(Error::InvalidSchedule(format!(
                "K = {max_stage} exceeds the supported maximum {}",
                Self::MAX_STAGE
            )));
        }
        Ok(Schedule {
            max_stage,
            initial,
            increment,
        })
    }

    /// `K`.
    pub fn max_stage(&self) -> u32 {
        self.max_stage
    }

    /// `G`.
    pub fn initial(&self) -> u32 {
        self.initial
    }

    /// `F`.
    pub fn increment(&self) -> u32 {
        self.increment
    }

    /// `M_k`.
    pub fn detections_at_stage(&self, stage: u32) -> Result<usize> {
        if stage > self.max_stage {
            return Err(Error::StageOutOfRange {
                stage,
                max_stage: self.max_stage,
            });
        }
        Ok(self.m(stage))
    }

    fn m(&self, stage: u32) -> usize {
        self.initial as usize + self.increment as usize * (self.max_stage - stage) as usize
    }

    /// Stage exponents in execution order, `K, K−1, …, 0`.
    pub fn stages(&self) -> impl Iterator<Item = u32> {
        (0..=self.max_stage).rev()
    }

    /// Total interaction time in units of τ, `N = G(2^{K+1} − 1) + F(2^{K+1} − 2 − K)`.
    pub fn total_time(&self) -> u64 {
        let p = 1u64 << (self.max_stage + 1);
        self.initial as u64 * (p - 1) + self.increment as u64 * (p - 2 - self.max_stage as u64)
    }

    /// `Σ_k M_k·2^k`, evaluated term by term.
    pub fn total_time_by_sum(&self) -> u64 {
        self.stages().map(|k| self.m(k) as u64 * (1u64 << k)).sum()
    }

    /// `Σ_k M_k`.
    pub fn detection_count(&self) -> usize {
        self.stages().map(|k| self.m(k)).sum()
    }

    /// Length of a decision-tree parameter vector: one increment per detection and outcome.
    pub fn parameter_count(&self) -> usize {
        2 * self.detection_count()
    }
}

/// Policy variant, without parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Nonadaptive,
    DecisionTree,
    AdaptiveHomodyne,
    Cappellaro,
    Hybrid,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::Nonadaptive,
        PolicyKind::DecisionTree,
        PolicyKind::AdaptiveHomodyne,
        PolicyKind::Cappellaro,
        PolicyKind::Hybrid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Nonadaptive => "nonadaptive",
            PolicyKind::DecisionTree => "decision-tree",
            PolicyKind::AdaptiveHomodyne => "adaptive-homodyne",
            PolicyKind::Cappellaro => "cappellaro",
            PolicyKind::Hybrid => "hybrid",
        }
    }

    pub fn is_parameterized(self) -> bool {
        matches!(self, PolicyKind::DecisionTree | PolicyKind::Hybrid)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = PolicyKind::ALL.iter().map(|k| k.name()).collect();
                format!(
                    "unknown protocol `{s}` (expected one of {})",
                    names.join(", ")
                )
            })
    }
}

/// Rule for choosing the control phase `θ` before each detection.
///
/// Every run starts with `θ = 0`. The parameterized variants hold one phase increment
/// per (detection, outcome): after detection `j` with outcome `u`, the increment at
/// `2j + branch(u)` is added to `θ`.
#[derive(Clone, Debug, PartialEq)]
pub enum Policy {
    /// `θ = π·m / M_k` for the `m`-th detection of stage `k`.
    Nonadaptive,
    DecisionTree(Vec<f64>),
    /// `θ = arg(b_{−2^k}) + π/2` before every detection.
    AdaptiveHomodyne,
    /// `θ = ½ arg(b_{−2^{k+1}})` at the first detection of each stage `k < K`, held otherwise.
    Cappellaro,
    /// Cappellaro resets at stage boundaries, decision-tree increments within stages.
    Hybrid(Vec<f64>),
}

impl Policy {
    /// Builds a parameterless policy.
    pub fn simple(kind: PolicyKind) -> Result<Policy> {
        match kind {
            PolicyKind::Nonadaptive => Ok(Policy::Nonadaptive),
            PolicyKind::AdaptiveHomodyne => Ok(Policy::AdaptiveHomodyne),
            PolicyKind::Cappellaro => Ok(Policy::Cappellaro),
            PolicyKind::DecisionTree | PolicyKind::Hybrid => {
                Err(Error::MissingParameters(kind.name()))
            }
        }
    }

    /// Builds a parameterized policy from a flat increment vector, reducing entries into `[0, 2π)`.
    pub fn from_vector(kind: PolicyKind, schedule: &Schedule, values: &[f64]) -> Result<Policy> {
        if !kind.is_parameterized() {
            return Err(Error::NotParameterized(kind.name()));
        }
        let expected = schedule.parameter_count();
        if values.len() != expected {
            return Err(Error::ParameterLength {
                expected,
                actual: values.len(),
            });
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteParameter { index, value });
        }
        let increments = values.iter().map(|&v| wrap_phase(v)).collect();
        Ok(match kind {
            PolicyKind::DecisionTree => Policy::DecisionTree(increments),
            _ => Policy::Hybrid(increments),
        })
    }

    /// All-zero increments; the hybrid form then coincides with [`Policy::Cappellaro`].
    pub fn zero_tree(kind: PolicyKind, schedule: &Schedule) -> Result<Policy> {
        Policy::from_vector(kind, schedule, &vec![0.0; schedule.parameter_count()])
    }

    pub fn kind(&self) -> PolicyKind {
        match self {
            Policy::Nonadaptive => PolicyKind::Nonadaptive,
            Policy::DecisionTree(_) => PolicyKind::DecisionTree,
            Policy::AdaptiveHomodyne => PolicyKind::AdaptiveHomodyne,
            Policy::Cappellaro => PolicyKind::Cappellaro,
            Policy::Hybrid(_) => PolicyKind::Hybrid,
        }
    }

    /// The flat parameter vector; empty for parameterless variants.
    pub fn to_vector(&self) -> Vec<f64> {
        self.increments().map(<[f64]>::to_vec).unwrap_or_default()
    }

    fn increments(&self) -> Option<&[f64]> {
        match self {
            Policy::DecisionTree(v) | Policy::Hybrid(v) => Some(v),
            _ => None,
        }
    }

    /// Checks that the parameter vector fits the schedule.
    pub fn validate(&self, schedule: &Schedule) -> Result<()> {
        match self.increments() {
            Some(v) if v.len() != schedule.parameter_count() => Err(Error::ParameterLength {
                expected: schedule.parameter_count(),
                actual: v.len(),
            }),
            _ => Ok(()),
        }
    }

    /// Control phase for the detection described by `state`, in `[0, 2π)`.
    pub fn next_control_phase(
        &self,
        schedule: &Schedule,
        state: &PolicyState,
        posterior: &FourierPosterior,
    ) -> Result<f64> {
        if state.detection == 0 {
            return Ok(0.0);
        }
        let stage_start = state.index == 0;
        let theta = match self {
            Policy::Nonadaptive => {
                PI * state.index as f64 / schedule.detections_at_stage(state.stage)? as f64
            }
            Policy::DecisionTree(inc) => state.theta + increment(inc, state)?,
            Policy::AdaptiveHomodyne => posterior.scaled_phase_estimate(state.stage)? + PI / 2.0,
            Policy::Cappellaro => {
                if stage_start && state.stage < schedule.max_stage() {
                    0.5 * posterior.scaled_phase_estimate(state.stage + 1)?
                } else {
                    state.theta
                }
            }
            Policy::Hybrid(inc) => {
                if stage_start && state.stage < schedule.max_stage() {
                    0.5 * posterior.scaled_phase_estimate(state.stage + 1)?
                } else {
                    state.theta + increment(inc, state)?
                }
            }
        };
        Ok(wrap_phase(theta))
    }
}

fn increment(increments: &[f64], state: &PolicyState) -> Result<f64> {
    let outcome = state.last_outcome.unwrap_or(Outcome::Plus);
    let idx = 2 * (state.detection - 1) + outcome.branch();
    increments.get(idx).copied().ok_or(Error::ParameterLength {
        expected: idx + 1,
        actual: increments.len(),
    })
}

/// Position within a run, as seen by a policy before choosing `θ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolicyState {
    /// Current stage `k`.
    pub stage: u32,
    /// Detection index within the stage, `0..M_k`.
    pub index: usize,
    /// Detection index within the whole run.
    pub detection: usize,
    /// Control phase of the previous detection (0 before the first).
    pub theta: f64,
    pub last_outcome: Option<Outcome>,
}

impl PolicyState {
    pub fn start(schedule: &Schedule) -> Self {
        PolicyState {
            stage: schedule.max_stage(),
            index: 0,
            detection: 0,
            theta: 0.0,
            last_outcome: None,
        }
    }

    /// Advances past a detection made at `theta` with `outcome`.
    pub fn advance(&mut self, schedule: &Schedule, theta: f64, outcome: Outcome) {
        self.theta = theta;
        self.last_outcome = Some(outcome);
        self.detection += 1;
        self.index += 1;
        if self.index == schedule.m(self.stage) && self.stage > 0 {
            self.stage -= 1;
            self.index = 0;
        }
    }
}

/// Per-detection constants of a (schedule, model) pair, shared across trials.
#[derive(Clone, Debug)]
pub struct TrialPlan {
    schedule: Schedule,
    steps: Vec<PlanStep>,
    max_index: usize,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct PlanStep {
    pub(crate) stage: u32,
    pub(crate) visibility: f64,
    /// Highest Fourier index that can still influence `b_1` after this detection.
    pub(crate) horizon_after: usize,
}

impl TrialPlan {
    pub fn new(schedule: &Schedule, model: &MeasurementModel) -> Self {
        let stages: Vec<u32> = schedule
            .stages()
            .flat_map(|k| std::iter::repeat_n(k, schedule.m(k)))
            .collect();
        let max_index = (schedule.total_time() as usize).max(1);
        let mut remaining = 0usize;
        let mut steps: Vec<PlanStep> = stages
            .iter()
            .rev()
            .map(|&k| {
                let step = PlanStep {
                    stage: k,
                    visibility: model.decayed_visibility(k),
                    horizon_after: (remaining + 1).min(max_index),
                };
                remaining += 1 << k;
                step
            })
            .collect();
        steps.reverse();
        TrialPlan {
            schedule: *schedule,
            steps,
            max_index,
        }
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn detection_count(&self) -> usize {
        self.steps.len()
    }

    /// Posterior size used by trials: `W = N`.
    pub fn max_index(&self) -> usize {
        self.max_index
    }

    pub(crate) fn steps(&self) -> &[PlanStep] {
        &self.steps
    }
}

/// Result of one simulated measurement run.
#[derive(Clone, Debug, PartialEq)]
pub struct Trial {
    /// Final estimate `arg(b_{−1})` in `(−π, π]`.
    pub estimate: f64,
    /// Sharpness of the final posterior.
    pub sharpness: f64,
    pub record: Vec<Detection>,
}

/// Simulates one run with true phase `phi`, drawing one uniform number per detection from `rng`.
pub fn run_trial<R: Rng + ?Sized>(
    schedule: &Schedule,
    policy: &Policy,
    phi: f64,
    model: &MeasurementModel,
    rng: &mut R,
) -> Result<Trial> {
    let plan = TrialPlan::new(schedule, model);
    let mut record = Vec::with_capacity(plan.detection_count());
    let posterior = simulate(&plan, policy, phi, rng, Some(&mut record))?;
    Ok(Trial {
        estimate: posterior.phase_estimate(),
        sharpness: posterior.sharpness(),
        record,
    })
}

pub(crate) fn simulate<R: Rng + ?Sized>(
    plan: &TrialPlan,
    policy: &Policy,
    phi: f64,
    rng: &mut R,
    mut record: Option<&mut Vec<Detection>>,
) -> Result<FourierPosterior> {
    let schedule = plan.schedule();
    policy.validate(schedule)?;
    let mut posterior = FourierPosterior::uniform_prior(plan.max_index())?;
    let mut state = PolicyState::start(schedule);
    for step in plan.steps() {
        let theta = policy.next_control_phase(schedule, &state, &posterior)?;
        let scaled = (1u64 << step.stage) as f64 * phi;
        let outcome = outcome_from_draw(step.visibility, scaled, theta, rng.random::<f64>());
        posterior.observe(outcome, theta, step.stage, step.visibility)?;
        posterior.truncate(step.horizon_after);
        if let Some(r) = record.as_deref_mut() {
            r.push(Detection::new(outcome, step.stage, theta));
        }
        state.advance(schedule, theta, outcome);
    }
    Ok(posterior)
}

/// Rebuilds the full (untruncated) posterior from a detection record.
pub fn replay(
    schedule: &Schedule,
    model: &MeasurementModel,
    record: &[Detection],
) -> Result<FourierPosterior> {
    let mut posterior = FourierPosterior::uniform_prior((schedule.total_time() as usize).max(1))?;
    for d in record {
        posterior.observe(
            d.outcome,
            d.theta(),
            d.stage,
            model.decayed_visibility(d.stage),
        )?;
    }
    Ok(posterior)
}

/// Draws a true phase uniformly from `(−π, π]`.
pub fn sample_phase<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    wrap_signed(PI - 2.0 * PI * rng.random::<f64>())
}

/// Serializable form of a policy together with the schedule it was built for.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyRecord {
    pub variant: PolicyKind,
    pub k: u32,
    pub g: u32,
    pub f: u32,
    #[serde(default)]
    pub parameters: Vec<f64>,
}

impl PolicyRecord {
    pub fn new(schedule: &Schedule, policy: &Policy) -> Self {
        PolicyRecord {
            variant: policy.kind(),
            k: schedule.max_stage(),
            g: schedule.initial(),
            f: schedule.increment(),
            parameters: policy.to_vector(),
        }
    }

    pub fn schedule(&self) -> Result<Schedule> {
        Schedule::new(self.k, self.g, self.f)
    }

    pub fn policy(&self) -> Result<Policy> {
        if self.variant.is_parameterized() {
            Policy::from_vector(self.variant, &self.schedule()?, &self.parameters)
        } else if self.parameters.is_empty() {
            Policy::simple(self.variant)
        } else {
            Err(Error::NotParameterized(self.variant.name()))
        }
    }
}
