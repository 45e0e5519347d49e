use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bound::bound;
use crate::chain::{
    build_state_space, stationary_dist, truncated_aoii, ChainParams, Policy, StateDist, StateSpace, Stationary,
    StationaryOptions,
};
use crate::error::{Error, Result};

use super::descend::descend_with;
use super::{Evaluator, OptimConfig, OptimTrace, TraceRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdInit {
    /// AoII threshold: states with `f·g ≥ tau` transmit.
    pub tau: f64,
    /// Transmission probability above the threshold.
    pub p: f64,
}

/// `π(f,g) = p` if `f·g ≥ tau`, else 0. The synchronized state never transmits.
pub fn threshold_policy(tau: f64, p: f64, space: &StateSpace) -> Result<Policy> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("threshold probability must lie in [0,1], got {p}")));
    }
    let values =
        space.states().iter().enumerate().map(|(i, s)| if i > 0 && s.aoii() as f64 >= tau { p } else { 0.0 }).collect();
    Policy::new(space, values)
}

/// Starting point for the calibration run: `φ ∝ 1/(f g)` (with weight 1 on
/// the synchronized state) and `π ∝ f g`, scaled so the network load
/// `N Σ π φ` equals `target_load`, then clamped to `[0,1]`.
pub fn seed_init(space: &StateSpace, params: &ChainParams, target_load: f64) -> (Policy, StateDist) {
    let weights: Vec<f64> =
        space.states().iter().map(|s| if s.age == 0 { 1.0 } else { 1.0 / s.aoii() as f64 }).collect();
    let total: f64 = weights.iter().sum();
    let phi: Vec<f64> = weights.iter().map(|w| w / total).collect();

    let raw_load: f64 = space.states().iter().zip(&phi).map(|(s, d)| s.aoii() as f64 * d).sum();
    let scale = target_load / (params.num_sensors as f64 * raw_load);
    let pi: Vec<f64> = space.states().iter().map(|s| (scale * s.aoii() as f64).clamp(0.0, 1.0)).collect();

    (Policy::new(space, pi).expect("sized by space"), StateDist::new(space, phi).expect("sized by space"))
}

/// `tau_ref · sqrt(p_t_new / p_t_ref)`.
pub fn scale_tau(tau_ref: f64, p_t_ref: f64, p_t_new: f64) -> Result<f64> {
    for p in [p_t_ref, p_t_new] {
        if !(p > 0.0 && p < 0.5) {
            return Err(Error::invalid(format!("p_t must lie in (0, 0.5), got {p}")));
        }
    }
    Ok(tau_ref * (p_t_new / p_t_ref).sqrt())
}

fn stationary_opts(config: &OptimConfig) -> StationaryOptions {
    StationaryOptions { include_sync_state: config.model.include_sync_state, ..Default::default() }
}

fn jittered(policy: Policy, config: &OptimConfig) -> Policy {
    if config.init_jitter == 0.0 {
        return policy;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut policy = policy;
    for p in policy.values_mut().iter_mut().skip(1) {
        *p = (*p * (1.0 + config.init_jitter * rng.random_range(-1.0..1.0))).clamp(0.0, 1.0);
    }
    policy
}

/// A deployable policy taken from a descent run, with its self-consistent
/// stationary point and the bound there.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub step: usize,
    pub policy: Policy,
    pub stationary: Stationary,
    pub bound: f64,
}

fn checkpoint(evaluator: &Evaluator, step: usize, policy: Policy) -> Option<Checkpoint> {
    let config = evaluator.config();
    let stationary = stationary_dist(&policy, evaluator.params(), &stationary_opts(config)).ok()?;
    let bound = bound(&policy, &stationary.dist, evaluator.params(), &config.model).ok()?.total;
    bound.is_finite().then_some(Checkpoint { step, policy, stationary, bound })
}

/// Runs the descent in blocks of `checkpoint_every` steps and keeps the
/// deployable policy whose bound at its own stationary point is lowest,
/// counting the starting policy as step 0.
fn descend_selecting(
    evaluator: &Evaluator,
    init_pi: &Policy,
    init_phi: &StateDist,
) -> Result<(OptimTrace, Checkpoint)> {
    let config = evaluator.config();
    let block = match config.checkpoint_every {
        0 => config.max_steps,
        n => n.min(config.max_steps),
    };
    let mut best = if config.checkpoint_every > 0 { checkpoint(evaluator, 0, init_pi.finalized()) } else { None };
    let mut records = Vec::with_capacity(config.max_steps);
    let (mut pi, mut phi) = (init_pi.clone(), init_phi.clone());
    let mut done = 0;
    let trace = loop {
        let steps = block.min(config.max_steps - done);
        let mut trace = descend_with(evaluator, &pi, &phi, steps)?;
        records.extend(trace.records.drain(..).map(|r| TraceRecord { step: r.step + done, ..r }));
        done += steps;
        let finished = done >= config.max_steps || trace.converged;
        if config.checkpoint_every > 0 || finished {
            if let Some(c) = checkpoint(evaluator, done, trace.policy.clone()) {
                if best.as_ref().is_none_or(|b| c.bound < b.bound) {
                    best = Some(c);
                }
            }
        }
        if finished {
            trace.records = std::mem::take(&mut records);
            break trace;
        }
        pi = trace.raw_policy;
        phi = trace.dist;
    };
    let best = best.ok_or(Error::NotConverged { iterations: config.max_steps, residual: f64::NAN })?;
    Ok((trace, best))
}

fn calibrate(evaluator: &Evaluator) -> Result<(ThresholdInit, OptimTrace, Checkpoint)> {
    let params = evaluator.params();
    let config = evaluator.config();
    let (pi, phi) = seed_init(evaluator.space(), params, config.target_load);
    let pi = jittered(pi, config);
    let (trace, best) = descend_selecting(evaluator, &pi, &phi)?;
    let tau = truncated_aoii(evaluator.space(), &best.stationary.dist);
    let p = (5.0 / params.num_sensors as f64).min(1.0);
    Ok((ThresholdInit { tau, p }, trace, best))
}

/// Runs the descent from [`seed_init`] and takes the mean truncated AoII of
/// the selected policy (at its self-consistent stationary point) as the
/// threshold, with `p = 5/N`.
pub fn calibrate_tau(params: &ChainParams, config: &OptimConfig) -> Result<ThresholdInit> {
    let evaluator = Evaluator::new(params, config)?;
    Ok(calibrate(&evaluator)?.0)
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub threshold: ThresholdInit,
    /// Descent from the seeded initialization, used to fix the threshold.
    pub calibration: OptimTrace,
    pub calibration_pick: Checkpoint,
    /// Descent from the threshold policy.
    pub refinement: OptimTrace,
    /// Deployable policy selected from the refinement run.
    pub pick: Checkpoint,
}

impl PipelineResult {
    pub fn policy(&self) -> &Policy {
        &self.pick.policy
    }

    pub fn stationary(&self) -> &Stationary {
        &self.pick.stationary
    }
}

/// Full two-phase optimization: calibrate the threshold, start from the
/// threshold policy and its stationary distribution, descend again.
pub fn optimize_policy(params: &ChainParams, config: &OptimConfig) -> Result<PipelineResult> {
    let evaluator = Evaluator::new(params, config)?;
    let space = build_state_space(params)?;
    let (threshold, calibration, calibration_pick) = calibrate(&evaluator)?;
    let start = threshold_policy(threshold.tau, threshold.p, &space)?;
    let start_dist = stationary_dist(&start, params, &stationary_opts(config))?.dist;
    let (refinement, pick) = descend_selecting(&evaluator, &start, &start_dist)?;
    Ok(PipelineResult { threshold, calibration, calibration_pick, refinement, pick })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn threshold_boundary_transmits() {
        let space = StateSpace::new(40, 10).unwrap();
        let pi = threshold_policy(30.0, 0.2, &space).unwrap();
        assert_eq!(pi[space.index(25, 1).unwrap()], 0.0);
        assert_eq!(pi[space.index(5, 5).unwrap()], 0.0);
        assert_eq!(pi[space.index(30, 1).unwrap()], 0.2);
        assert_eq!(pi[space.index(10, 3).unwrap()], 0.2);
        let all = threshold_policy(0.0, 0.05, &space).unwrap();
        assert_eq!(all[0], 0.0);
        assert!(all.values()[1..].iter().all(|&p| p == 0.05));
        assert!(threshold_policy(1.0, 1.5, &space).is_err());
    }

    #[test]
    fn seed_init_small_instance() {
        let p = ChainParams::new(0.2, 2, 2, 4).unwrap();
        let space = build_state_space(&p).unwrap();
        let (pi, phi) = seed_init(&space, &p, 0.9);
        let z = 11.0 / 4.0;
        for (got, w) in phi.values().iter().zip([1.0, 1.0, 0.5, 0.25]) {
            assert_relative_eq!(*got, w / z, max_relative = 1e-14);
        }
        assert_relative_eq!(phi.total(), 1.0, max_relative = 1e-14);
        let load = 4.0 * pi.values().iter().zip(phi.values()).map(|(a, b)| a * b).sum::<f64>();
        assert_relative_eq!(load, 0.9, max_relative = 1e-9);
        assert_eq!(pi[0], 0.0);
    }

    #[test]
    fn tau_scaling() {
        assert_eq!(scale_tau(30.0, 0.2, 0.2).unwrap(), 30.0);
        assert_relative_eq!(scale_tau(30.0, 0.1, 0.4).unwrap(), 60.0, max_relative = 1e-14);
        let two = scale_tau(scale_tau(17.0, 0.05, 0.3).unwrap(), 0.3, 0.45).unwrap();
        assert_relative_eq!(two, scale_tau(17.0, 0.05, 0.45).unwrap(), max_relative = 1e-12);
        assert!(scale_tau(1.0, 0.5, 0.1).is_err());
    }
}
