//! Constriction-factor particle swarm optimization with reflective bounds.
//!
//! Velocity update: `v' = χ[v + c_g r_g (x_g − x) + c_l r_l (x_l − x)]`, followed by
//! `x ← x + v'` and reflection at the box boundaries. The swarm is fully connected
//! (single global best). Every candidate is scored with one frozen evaluation seed so
//! that comparisons share common random numbers; the final best is re-scored with a
//! separate validation seed.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the random coefficients `r_g, r_l` are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RandomDraws {
    /// Fresh draws for every coordinate.
    PerCoordinate,
    /// One pair of draws per particle per iteration.
    PerParticle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwarmConfig {
    pub chi: f64,
    pub c_global: f64,
    pub c_local: f64,
    pub particles: usize,
    pub max_iterations: usize,
    /// Initial velocity coordinates are drawn from `[−v_max, v_max]`.
    pub v_max: f64,
    pub lower: f64,
    pub upper: f64,
    /// Stop once the largest pairwise max-norm distance between particles is below this.
    pub spread_tolerance: f64,
    pub draws: RandomDraws,
}

impl Default for SwarmConfig {
    fn default() -> Self {
        SwarmConfig {
            chi: 0.729,
            c_global: 2.05,
            c_local: 2.05,
            particles: 10,
            max_iterations: 300,
            v_max: PI,
            lower: 0.0,
            upper: 2.0 * PI,
            spread_tolerance: 1e-4,
            draws: RandomDraws::PerCoordinate,
        }
    }
}

impl SwarmConfig {
    /// Default constants over the box `[lower, upper]`, with `v_max` half its width.
    pub fn with_bounds(lower: f64, upper: f64) -> Self {
        SwarmConfig {
            v_max: 0.5 * (upper - lower),
            lower,
            upper,
            ..SwarmConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidSwarm(m));
        if !(self.chi > 0.0 && self.chi < 1.0) {
            return fail(format!("chi = {} must lie in (0, 1)", self.chi));
        }
        if !(self.c_global > 0.0 && self.c_local > 0.0) {
            return fail("acceleration weights must be positive".into());
        }
        if self.particles < 2 {
            return fail(format!("need at least 2 particles, got {}", self.particles));
        }
        if !(self.lower.is_finite() && self.upper.is_finite() && self.lower < self.upper) {
            return fail(format!("invalid bounds [{}, {}]", self.lower, self.upper));
        }
        if !(self.v_max >= 0.0 && self.v_max.is_finite()) {
            return fail(format!("invalid v_max {}", self.v_max));
        }
        Ok(())
    }
}

/// A function to minimize, evaluated deterministically for a given evaluation seed.
pub trait Objective: Sync {
    fn evaluate(&self, position: &[f64], eval_seed: u64) -> f64;
}

impl<F> Objective for F
where
    F: Fn(&[f64], u64) -> f64 + Sync,
{
    fn evaluate(&self, position: &[f64], eval_seed: u64) -> f64 {
        self(position, eval_seed)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Particle {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub best_position: Vec<f64>,
    pub best_value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Swarm {
    pub particles: Vec<Particle>,
    /// Index of the particle holding the global best.
    pub best: usize,
    rng: ChaCha8Rng,
}

impl Swarm {
    pub fn best_position(&self) -> &[f64] {
        &self.particles[self.best].best_position
    }

    pub fn best_value(&self) -> f64 {
        self.particles[self.best].best_value
    }

    /// Largest pairwise max-norm distance between current positions.
    pub fn spread(&self) -> f64 {
        let ps = &self.particles;
        let mut spread = 0.0f64;
        for (i, a) in ps.iter().enumerate() {
            for b in &ps[i + 1..] {
                for (x, y) in a.position.iter().zip(&b.position) {
                    spread = spread.max((x - y).abs());
                }
            }
        }
        spread
    }
}

/// One row of the convergence trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub best_value: f64,
    pub mean_value: f64,
    pub spread: f64,
}

impl TraceRow {
    pub const CSV_HEADER: &'static str = "iteration,best_value,mean_value,spread";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{}",
            self.iteration, self.best_value, self.mean_value, self.spread
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SwarmResult {
    pub best_position: Vec<f64>,
    /// Best value under the training seed.
    pub training_value: f64,
    /// The best position re-scored with the validation seed.
    pub validation_value: f64,
    pub trace: Vec<TraceRow>,
    /// Iterations performed after initialization.
    pub iterations: usize,
    pub converged: bool,
}

/// `χ[v + c_g r_g (x_g − x) + c_l r_l (x_l − x)]` for one coordinate.
#[inline]
pub fn velocity_update(
    cfg: &SwarmConfig,
    velocity: f64,
    position: f64,
    global_best: f64,
    local_best: f64,
    r_global: f64,
    r_local: f64,
) -> f64 {
    cfg.chi
        * (velocity
            + cfg.c_global * r_global * (global_best - position)
            + cfg.c_local * r_local * (local_best - position))
}

/// Folds a coordinate back into `[lower, upper]`, negating the velocity once per fold.
pub fn reflect(position: f64, velocity: f64, lower: f64, upper: f64) -> (f64, f64) {
    if (lower..=upper).contains(&position) {
        return (position, velocity);
    }
    let width = upper - lower;
    let offset = position - lower;
    let folds = (offset / width).floor();
    let rem = offset - folds * width;
    if folds.rem_euclid(2.0) == 0.0 {
        (lower + rem, velocity)
    } else {
        (upper - rem, -velocity)
    }
}

fn evaluate_all<O: Objective>(
    objective: &O,
    positions: &[&[f64]],
    eval_seed: u64,
) -> Result<Vec<f64>> {
    let values: Vec<f64> = positions
        .par_iter()
        .map(|x| objective.evaluate(x, eval_seed))
        .collect();
    for (x, &v) in positions.iter().zip(&values) {
        if !v.is_finite() {
            return Err(Error::NonFiniteObjective {
                value: v,
                position: x.to_vec(),
            });
        }
    }
    Ok(values)
}

/// Initializes positions uniformly in the box and velocities uniformly in `[−v_max, v_max]`,
/// then scores every particle once.
pub fn swarm_init<O: Objective>(
    objective: &O,
    cfg: &SwarmConfig,
    dimension: usize,
    seed: u64,
    eval_seed: u64,
) -> Result<Swarm> {
    cfg.validate()?;
    if dimension == 0 {
        return Err(Error::InvalidSwarm("dimension must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut raw = Vec::with_capacity(cfg.particles);
    for _ in 0..cfg.particles {
        let position: Vec<f64> = (0..dimension)
            .map(|_| cfg.lower + (cfg.upper - cfg.lower) * rng.random::<f64>())
            .collect();
        let velocity: Vec<f64> = (0..dimension)
            .map(|_| cfg.v_max * (2.0 * rng.random::<f64>() - 1.0))
            .collect();
        raw.push((position, velocity));
    }
    let positions: Vec<&[f64]> = raw.iter().map(|(x, _)| x.as_slice()).collect();
    let values = evaluate_all(objective, &positions, eval_seed)?;
    let particles: Vec<Particle> = raw
        .into_iter()
        .zip(values)
        .map(|((position, velocity), value)| Particle {
            best_position: position.clone(),
            position,
            velocity,
            best_value: value,
        })
        .collect();
    let best = argmin(particles.iter().map(|p| p.best_value));
    Ok(Swarm {
        particles,
        best,
        rng,
    })
}

fn argmin(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Advances the swarm one synchronous iteration. Returns the current-position values.
pub fn step<O: Objective>(
    swarm: &mut Swarm,
    objective: &O,
    cfg: &SwarmConfig,
    eval_seed: u64,
) -> Result<Vec<f64>> {
    let global = swarm.best_position().to_vec();
    let rng = &mut swarm.rng;
    for p in &mut swarm.particles {
        let mut pair = (rng.random::<f64>(), rng.random::<f64>());
        for (d, &g) in global.iter().enumerate() {
            if d > 0 && cfg.draws == RandomDraws::PerCoordinate {
                pair = (rng.random::<f64>(), rng.random::<f64>());
            }
            let v = velocity_update(
                cfg,
                p.velocity[d],
                p.position[d],
                g,
                p.best_position[d],
                pair.0,
                pair.1,
            );
            let (x, v) = reflect(p.position[d] + v, v, cfg.lower, cfg.upper);
            p.position[d] = x;
            p.velocity[d] = v;
        }
    }
    let positions: Vec<&[f64]> = swarm
        .particles
        .iter()
        .map(|p| p.position.as_slice())
        .collect();
    let values = evaluate_all(objective, &positions, eval_seed)?;
    for (p, &v) in swarm.particles.iter_mut().zip(&values) {
        if v < p.best_value {
            p.best_value = v;
            p.best_position.clone_from(&p.position);
        }
    }
    let best = argmin(swarm.particles.iter().map(|p| p.best_value));
    if swarm.particles[best].best_value < swarm.best_value() {
        swarm.best = best;
    }
    Ok(values)
}

/// Runs the swarm to `max_iterations` or until its spread falls below tolerance.
///
/// All candidates are scored with `training_seed`; the returned best position is then
/// re-scored with `validation_seed`.
pub fn optimize<O: Objective>(
    objective: &O,
    cfg: &SwarmConfig,
    dimension: usize,
    seed: u64,
    training_seed: u64,
    validation_seed: u64,
) -> Result<SwarmResult> {
    let mut swarm = swarm_init(objective, cfg, dimension, seed, training_seed)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let initial: Vec<f64> = swarm.particles.iter().map(|p| p.best_value).collect();
    let mut trace = vec![TraceRow {
        iteration: 0,
        best_value: swarm.best_value(),
        mean_value: mean(&initial),
        spread: swarm.spread(),
    }];
    let mut iterations = 0;
    let mut converged = trace[0].spread < cfg.spread_tolerance;
    while !converged && iterations < cfg.max_iterations {
        let values = step(&mut swarm, objective, cfg, training_seed)?;
        iterations += 1;
        let spread = swarm.spread();
        trace.push(TraceRow {
            iteration: iterations,
            best_value: swarm.best_value(),
            mean_value: mean(&values),
            spread,
        });
        converged = spread < cfg.spread_tolerance;
    }
    let best_position = swarm.best_position().to_vec();
    let validation_value = objective.evaluate(&best_position, validation_seed);
    if !validation_value.is_finite() {
        return Err(Error::NonFiniteObjective {
            value: validation_value,
            position: best_position,
        });
    }
    Ok(SwarmResult {
        training_value: swarm.best_value(),
        best_position,
        validation_value,
        trace,
        iterations,
        converged,
    })
}
