use crate::bound::{bound_from_success, mass, tail_slope, BoundBreakdown};
use crate::chain::{build_state_space, raw_collision_term, ChainParams, KernelTemplate, Policy, StateDist, StateSpace};
use crate::error::{Error, Result};

use super::{GradMode, OptimConfig};

/// `max(leak · x, x)`.
pub fn leaky_relu(x: f64, leak: f64) -> f64 {
    (leak * x).max(x)
}

fn leaky_relu_slope(x: f64, leak: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        leak
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Objective {
    pub value: f64,
    pub bound: BoundBreakdown,
    /// Raw constraint violations `c₁..c₄`.
    pub penalties: [f64; 4],
    /// Weighted, rectified contributions `K_i ρ(c_i − ε_i)`.
    pub penalty_terms: [f64; 4],
    pub energy_term: f64,
    /// Network load `N Σ π φ`.
    pub load: f64,
    /// Collision term after clamping to `[0,1]`.
    pub ell: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub policy: Vec<f64>,
    pub dist: Vec<f64>,
    pub objective: Objective,
}

// Intermediate values of one forward pass that the backward pass reuses.
struct Forward {
    objective: Objective,
    ell_raw: f64,
    held_total: f64,
    free: f64,
    success: Vec<f64>,
    residual: Vec<f64>,
    probes: crate::bound::BoundProbes,
    mass: f64,
}

/// Evaluates `U(π, φ)` and its gradient for a fixed instance.
#[derive(Debug, Clone)]
pub struct Evaluator {
    space: StateSpace,
    template: KernelTemplate,
    params: ChainParams,
    config: OptimConfig,
    // f·g per state
    aoii: Vec<f64>,
}

impl Evaluator {
    pub fn new(params: &ChainParams, config: &OptimConfig) -> Result<Self> {
        config.validate()?;
        let space = build_state_space(params)?;
        let template = KernelTemplate::new(&space, params);
        let aoii = space.states().iter().map(|s| s.aoii() as f64).collect();
        Ok(Evaluator { space, template, params: *params, config: config.clone(), aoii })
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn params(&self) -> &ChainParams {
        &self.params
    }

    pub fn config(&self) -> &OptimConfig {
        &self.config
    }

    fn check(&self, policy: &Policy, dist: &StateDist) -> Result<()> {
        for len in [policy.len(), dist.len()] {
            if len != self.space.len() {
                return Err(Error::LengthMismatch { expected: self.space.len(), actual: len });
            }
        }
        if policy[0] != 0.0 {
            return Err(Error::SyncStateTransmits(policy[0]));
        }
        Ok(())
    }

    fn forward(&self, pi: &[f64], phi: &[f64]) -> Forward {
        let cfg = &self.config;
        let n = self.params.num_sensors;
        let held: Vec<f64> = phi.iter().copied().map(mass).collect();
        let held_total: f64 = held.iter().sum();
        let ell_raw = if held_total > 0.0 {
            raw_collision_term(pi, &held, cfg.model.include_sync_state) / held_total
        } else {
            1.0
        };
        let ell = ell_raw.clamp(0.0, 1.0);
        let free = ell.powi(n as i32 - 1);
        let mut success: Vec<f64> = pi.iter().map(|p| p * free).collect();
        success[0] = 0.0;

        let (bound, probes) = bound_from_success(&self.space, phi, &success, cfg.model.q_floor);

        let mut next = vec![0.0; phi.len()];
        self.template.left_multiply(phi, &success, &mut next);
        let residual: Vec<f64> = next.iter().zip(phi).map(|(a, b)| a - b).collect();
        let c1 = residual.iter().map(|r| r * r).sum::<f64>();
        let c2 = pi[1..].iter().map(|&p| box_violation(p)).sum::<f64>();
        let mass: f64 = phi.iter().sum();
        let c3 = (mass - 1.0).powi(2);
        let c4 = phi.iter().map(|&p| box_violation(p)).sum::<f64>();
        let penalties = [c1, c2, c3, c4];
        let mut penalty_terms = [0.0; 4];
        for i in 0..4 {
            penalty_terms[i] = cfg.penalty_weights[i] * leaky_relu(penalties[i] - cfg.tolerances[i], cfg.leak);
        }

        let load = n as f64 * pi.iter().zip(phi).map(|(p, d)| p * d).sum::<f64>();
        let energy_term = match cfg.energy_penalty {
            Some(e) if load > e.load_cap => e.weight * (load - e.load_cap).powi(2),
            _ => 0.0,
        };
        let value = bound.total + penalty_terms.iter().sum::<f64>() + energy_term;
        Forward {
            objective: Objective { value, bound, penalties, penalty_terms, energy_term, load, ell },
            ell_raw,
            held_total,
            free,
            success,
            residual,
            probes,
            mass,
        }
    }

    pub fn evaluate(&self, policy: &Policy, dist: &StateDist) -> Result<Objective> {
        self.check(policy, dist)?;
        Ok(self.forward(policy.values(), dist.values()).objective)
    }

    /// Gradient of `U` with respect to every entry of `π` (the synchronized
    /// entry is not a variable and always gets 0) and of `φ`.
    pub fn gradient(&self, policy: &Policy, dist: &StateDist) -> Result<Gradient> {
        self.check(policy, dist)?;
        let grad = match self.config.grad_mode {
            GradMode::Analytic => self.analytic(policy.values(), dist.values()),
            GradMode::FiniteDifference => self.finite_difference(policy.values(), dist.values()),
        };
        for (i, (a, b)) in grad.policy.iter().zip(&grad.dist).enumerate() {
            if !(a.is_finite() && b.is_finite()) {
                let s = self.space.state(i);
                return Err(Error::NonFiniteGradient { age: s.age, error: s.error });
            }
        }
        Ok(grad)
    }

    fn analytic(&self, pi: &[f64], phi: &[f64]) -> Gradient {
        let cfg = &self.config;
        let fw = self.forward(pi, phi);
        let obj = fw.objective;
        let len = pi.len();
        let (f_cap, g_cap) = (self.space.max_age() as f64, self.space.max_error() as f64);
        let mut g_pi = vec![0.0; len];
        let mut g_phi = vec![0.0; len];
        let mut g_q = vec![0.0; len];

        // bound: linear in φ, depends on π only through the two probed q's
        let probes = &fw.probes;
        let corner = probes.corner_index;
        for (i, s) in self.space.states().iter().enumerate().skip(1) {
            if phi[i] <= 0.0 {
                continue;
            }
            g_phi[i] = if s.age < self.space.max_age() {
                if s.error < self.space.max_error() {
                    self.aoii[i]
                } else {
                    (s.age * s.age) as f64
                }
            } else if i == corner {
                let u = (1.0 - probes.q_corner) / probes.q_corner;
                f_cap * g_cap + u * (f_cap + g_cap + 1.0 + 2.0 * u)
            } else {
                g_cap * (f_cap + (1.0 - probes.q_min) / probes.q_min)
            };
        }
        if let Some(m) = probes.min_index {
            if !probes.min_clamped {
                g_q[m] += -g_cap * probes.sf_mass / (probes.q_min * probes.q_min);
            }
        }
        if !probes.corner_clamped {
            g_q[corner] += mass(phi[corner]) * tail_slope(f_cap, g_cap, probes.q_corner);
        }

        // c₁ = ‖φP − φ‖², P_ij = base + slope·q_i
        let w1 = 2.0 * cfg.penalty_weights[0] * leaky_relu_slope(obj.penalties[0] - cfg.tolerances[0], cfg.leak);
        let r = &fw.residual;
        for i in 0..len {
            let mut pr = 0.0;
            let mut sr = 0.0;
            for e in self.template.row(i) {
                pr += (e.base + e.slope * fw.success[i]) * r[e.target];
                sr += e.slope * r[e.target];
            }
            g_phi[i] += w1 * (pr - r[i]);
            g_q[i] += w1 * phi[i] * sr;
        }

        let w2 = 2.0 * cfg.penalty_weights[1] * leaky_relu_slope(obj.penalties[1] - cfg.tolerances[1], cfg.leak);
        for i in 1..len {
            g_pi[i] += w2 * box_slope(pi[i]);
        }
        let w3 = 2.0 * cfg.penalty_weights[2] * leaky_relu_slope(obj.penalties[2] - cfg.tolerances[2], cfg.leak);
        let w4 = 2.0 * cfg.penalty_weights[3] * leaky_relu_slope(obj.penalties[3] - cfg.tolerances[3], cfg.leak);
        for i in 0..len {
            g_phi[i] += w3 * (fw.mass - 1.0) + w4 * box_slope(phi[i]);
        }

        if let Some(e) = cfg.energy_penalty {
            if obj.load > e.load_cap {
                let w = 2.0 * e.weight * (obj.load - e.load_cap) * self.params.num_sensors as f64;
                for i in 1..len {
                    g_pi[i] += w * phi[i];
                    g_phi[i] += w * pi[i];
                }
            }
        }

        // q_i = π_i ℓ^(N−1)
        let n = self.params.num_sensors;
        let d_free = if n >= 2 { (n - 1) as f64 * obj.ell.powi(n as i32 - 2) } else { 0.0 };
        let mut g_ell = 0.0;
        for i in 1..len {
            g_pi[i] += g_q[i] * fw.free;
            g_ell += g_q[i] * pi[i] * d_free;
        }
        if (0.0..=1.0).contains(&fw.ell_raw) && g_ell != 0.0 {
            let scale = g_ell / fw.held_total;
            for i in (1..len).filter(|&i| phi[i] > 0.0) {
                g_pi[i] -= scale * phi[i];
                g_phi[i] += scale * (1.0 - pi[i] - fw.ell_raw);
            }
            if phi[0] > 0.0 {
                let silent = if cfg.model.include_sync_state { 1.0 } else { 0.0 };
                g_phi[0] += scale * (silent - fw.ell_raw);
            }
        }
        g_pi[0] = 0.0;
        Gradient { policy: g_pi, dist: g_phi, objective: obj }
    }

    /// Central differences with a step of `1e-6` relative to each entry's
    /// magnitude (floored at `1e-6` absolute).
    fn finite_difference(&self, pi: &[f64], phi: &[f64]) -> Gradient {
        let objective = self.forward(pi, phi).objective;
        let value = |p: &[f64], d: &[f64]| self.forward(p, d).objective.value;
        let step = |x: f64| 1e-6 * x.abs().max(1.0e-0);
        let mut pi_work = pi.to_vec();
        let mut g_pi = vec![0.0; pi.len()];
        for i in 1..pi.len() {
            let h = step(pi[i]);
            pi_work[i] = pi[i] + h;
            let up = value(&pi_work, phi);
            pi_work[i] = pi[i] - h;
            let down = value(&pi_work, phi);
            pi_work[i] = pi[i];
            g_pi[i] = (up - down) / (2.0 * h);
        }
        let mut phi_work = phi.to_vec();
        let mut g_phi = vec![0.0; phi.len()];
        for i in 0..phi.len() {
            let h = step(phi[i]);
            phi_work[i] = phi[i] + h;
            let up = value(pi, &phi_work);
            phi_work[i] = phi[i] - h;
            let down = value(pi, &phi_work);
            phi_work[i] = phi[i];
            g_phi[i] = (up - down) / (2.0 * h);
        }
        Gradient { policy: g_pi, dist: g_phi, objective }
    }
}

fn box_violation(x: f64) -> f64 {
    if x > 1.0 {
        (x - 1.0).powi(2)
    } else if x < 0.0 {
        x * x
    } else {
        0.0
    }
}

// d/dx of box_violation / 2
fn box_slope(x: f64) -> f64 {
    if x > 1.0 {
        x - 1.0
    } else if x < 0.0 {
        x
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{stationary_dist, StationaryOptions};
    use approx::assert_relative_eq;

    #[test]
    fn leaky_relu_examples() {
        assert_eq!(leaky_relu(5.0, 1e-6), 5.0);
        assert_eq!(leaky_relu(-1.0, 1e-6), -1e-6);
        assert_eq!(leaky_relu(0.0, 1e-6), 0.0);
    }

    fn instance() -> (ChainParams, StateSpace) {
        let p = ChainParams::new(0.25, 4, 4, 3).unwrap();
        let s = build_state_space(&p).unwrap();
        (p, s)
    }

    #[test]
    fn stationary_pair_has_no_stationarity_violation() {
        let (p, s) = instance();
        let pi = Policy::constant(&s, 0.3);
        let st = stationary_dist(&pi, &p, &StationaryOptions::default()).unwrap();
        let ev = Evaluator::new(&p, &OptimConfig::default()).unwrap();
        let obj = ev.evaluate(&pi, &st.dist).unwrap();
        assert!(obj.penalties[0] <= 1e-20);
        assert_eq!(obj.penalties[1], 0.0);
        assert!(obj.penalties[2] <= 1e-24);
        assert_eq!(obj.penalties[3], 0.0);
        // every penalty sits in the leaky branch
        let expected: f64 = (0..4)
            .map(|i| {
                1e-6 * OptimConfig::default().penalty_weights[i]
                    * (obj.penalties[i] - OptimConfig::default().tolerances[i])
            })
            .sum();
        assert_relative_eq!(obj.value, obj.bound.total + expected, max_relative = 1e-12);
    }

    #[test]
    fn out_of_box_policy_entry() {
        let (p, s) = instance();
        let mut pi = Policy::constant(&s, 0.3);
        pi.values_mut()[3] = 1.5;
        let st = StateDist::uniform(&s);
        let ev = Evaluator::new(&p, &OptimConfig::default()).unwrap();
        let obj = ev.evaluate(&pi, &st).unwrap();
        assert_relative_eq!(obj.penalties[1], 0.25, max_relative = 1e-14);
        let g = ev.gradient(&pi, &st).unwrap();
        let mut other = pi.clone();
        other.values_mut()[3] = 0.3;
        let base = ev.gradient(&other, &st).unwrap();
        // the box term adds K₂·ρ'·2·0.5 on top of the smooth part
        let smooth_shift = g.policy[3] - base.policy[3];
        assert!(smooth_shift > 0.9 * 1e11);
    }

    #[test]
    fn energy_penalty_inactive_below_cap() {
        let (p, s) = instance();
        let pi = Policy::constant(&s, 0.01);
        let st = StateDist::uniform(&s);
        let off = Evaluator::new(&p, &OptimConfig::default()).unwrap().evaluate(&pi, &st).unwrap();
        let cfg = OptimConfig { energy_penalty: Some(Default::default()), ..Default::default() };
        let on = Evaluator::new(&p, &cfg).unwrap().evaluate(&pi, &st).unwrap();
        assert!(on.load <= 0.5);
        assert_eq!(off.value, on.value);
    }

    #[test]
    fn unreachable_entry_has_zero_gradient() {
        // φ = 0 at an interior state and no active penalty: π there only
        // enters through ℓ, which φ = 0 switches off
        let (p, s) = instance();
        let pi = Policy::constant(&s, 0.3);
        let mut st = stationary_dist(&pi, &p, &StationaryOptions::default()).unwrap().dist;
        let k = s.index(2, 1).unwrap();
        st.values_mut()[k] = 0.0;
        let cfg = OptimConfig { penalty_weights: [0.0; 4], ..Default::default() };
        let ev = Evaluator::new(&p, &cfg).unwrap();
        assert_eq!(ev.gradient(&pi, &st).unwrap().policy[k], 0.0);
    }
}
