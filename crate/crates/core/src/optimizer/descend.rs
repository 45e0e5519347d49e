use crate::chain::{ChainParams, Policy, StateDist};
use crate::error::{Error, Result};

use super::{Evaluator, OptimConfig, OptimTrace, TraceRecord};

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Normalized gradient descent on `U(π, φ)` for `config.max_steps` steps.
///
/// Each step moves `π` by exactly `alpha_pi` and `φ` by exactly `alpha_phi` in
/// Euclidean norm, unless the corresponding gradient vanishes.
pub fn descend(
    init_pi: &Policy,
    init_phi: &StateDist,
    params: &ChainParams,
    config: &OptimConfig,
) -> Result<OptimTrace> {
    let evaluator = Evaluator::new(params, config)?;
    descend_with(&evaluator, init_pi, init_phi, config.max_steps)
}

pub(crate) fn descend_with(
    evaluator: &Evaluator,
    init_pi: &Policy,
    init_phi: &StateDist,
    steps: usize,
) -> Result<OptimTrace> {
    let config = evaluator.config();
    if init_pi.values().iter().chain(init_phi.values()).any(|x| !x.is_finite()) {
        return Err(Error::invalid("initial iterate is not finite"));
    }
    let mut pi = init_pi.clone();
    let mut phi = init_phi.clone();
    let mut records = Vec::with_capacity(steps);
    let mut converged = false;

    for step in 0..steps {
        let grad = evaluator.gradient(&pi, &phi)?;
        let obj = grad.objective;
        records.push(TraceRecord {
            step,
            objective: obj.value,
            bound: obj.bound.total,
            penalties: obj.penalties,
            ell: obj.ell,
        });
        if !obj.value.is_finite() {
            return Err(Error::Diverged { step, trace: Box::new(finish(evaluator, records, pi, phi, false)?) });
        }
        let (n_pi, n_phi) = (norm(&grad.policy), norm(&grad.dist));
        if n_pi == 0.0 && n_phi == 0.0 {
            converged = true;
            break;
        }
        if n_pi > 0.0 {
            let scale = config.alpha_pi / n_pi;
            for (p, g) in pi.values_mut().iter_mut().zip(&grad.policy).skip(1) {
                *p -= scale * g;
            }
        }
        if n_phi > 0.0 {
            let scale = config.alpha_phi / n_phi;
            for (p, g) in phi.values_mut().iter_mut().zip(&grad.dist) {
                *p -= scale * g;
            }
        }
    }
    finish(evaluator, records, pi, phi, converged)
}

fn finish(
    evaluator: &Evaluator,
    records: Vec<TraceRecord>,
    pi: Policy,
    phi: StateDist,
    converged: bool,
) -> Result<OptimTrace> {
    let last = evaluator.evaluate(&pi, &phi)?;
    Ok(OptimTrace { records, policy: pi.finalized(), raw_policy: pi, dist: phi, last, converged })
}
