//! Truncated (age, error) Markov chain of a single sensor.
//!
//! The chain tracks the pair `(f, g)` where `f` is the age penalty (slots since
//! the process last matched the receiver's estimate) and `g` the error penalty
//! `|X - X̂|`, both capped at `max_age` / `max_error`. The rest of the network is
//! summarized by a single collision term `ℓ`, the steady-state probability that
//! no other sensor transmits.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Process and truncation parameters shared by the chain, the optimizer and
/// the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainParams {
    /// Probability of a +1 step, and separately of a -1 step, per slot.
    pub p_move: f64,
    /// Probability of staying put, always `1 - 2 * p_move`.
    pub p_stay: f64,
    pub max_age: usize,
    pub max_error: usize,
    pub num_sensors: usize,
}

impl ChainParams {
    pub fn new(p_move: f64, max_age: usize, max_error: usize, num_sensors: usize) -> Result<Self> {
        let params = ChainParams { p_move, p_stay: 1.0 - 2.0 * p_move, max_age, max_error, num_sensors };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p_move > 0.0 && self.p_move < 0.5) {
            return Err(Error::invalid(format!("p_t must lie in (0, 0.5), got {}", self.p_move)));
        }
        if self.p_stay != 1.0 - 2.0 * self.p_move {
            return Err(Error::invalid("p_r must equal 1 - 2 p_t"));
        }
        if self.max_error < 1 || self.max_age < self.max_error {
            return Err(Error::invalid(format!(
                "truncation must satisfy F >= G >= 1, got F={} G={}",
                self.max_age, self.max_error
            )));
        }
        if self.num_sensors < 1 {
            return Err(Error::invalid("N must be at least 1"));
        }
        Ok(())
    }
}

/// Options of the single-sensor model that are not part of the physical
/// parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelOptions {
    /// Count the synchronized state as silent when computing `ℓ`.
    pub include_sync_state: bool,
    /// Lower clamp on success probabilities inside the bound.
    pub q_floor: f64,
}

impl Default for ModelOptions {
    fn default() -> Self {
        ModelOptions { include_sync_state: true, q_floor: 1e-12 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct State {
    pub age: usize,
    pub error: usize,
}

impl State {
    pub const SYNC: State = State { age: 0, error: 0 };

    pub fn aoii(&self) -> usize {
        self.age * self.error
    }
}

/// Enumeration of `{(0,0)} ∪ {(f,g) : 1 ≤ f ≤ F, 1 ≤ g ≤ min(f,G)}`, row-major
/// in `f` then `g`. Index 0 is always the synchronized state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    max_age: usize,
    max_error: usize,
    states: Vec<State>,
    // layer_start[f] is the index of (f, 1) for f >= 1, and 0 for f = 0
    layer_start: Vec<usize>,
}

impl StateSpace {
    pub fn new(max_age: usize, max_error: usize) -> Result<Self> {
        if max_error < 1 || max_age < max_error {
            return Err(Error::invalid(format!("truncation must satisfy F >= G >= 1, got F={max_age} G={max_error}")));
        }
        let mut states = vec![State::SYNC];
        let mut layer_start = vec![0];
        for age in 1..=max_age {
            layer_start.push(states.len());
            for error in 1..=age.min(max_error) {
                states.push(State { age, error });
            }
        }
        Ok(StateSpace { max_age, max_error, states, layer_start })
    }

    pub fn max_age(&self) -> usize {
        self.max_age
    }

    pub fn max_error(&self) -> usize {
        self.max_error
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn state(&self, index: usize) -> State {
        self.states[index]
    }

    pub fn index(&self, age: usize, error: usize) -> Option<usize> {
        if age == 0 && error == 0 {
            return Some(0);
        }
        if age == 0 || age > self.max_age || error == 0 || error > age.min(self.max_error) {
            return None;
        }
        Some(self.layer_start[age] + error - 1)
    }

    /// Index of the truncated image `(min(f,F), min(g,G))` of an arbitrary
    /// reachable pair.
    pub fn truncated_index(&self, age: usize, error: usize) -> Option<usize> {
        self.index(age.min(self.max_age), error.min(self.max_error))
    }

    /// Index range of the states with age exactly `age`.
    pub fn layer(&self, age: usize) -> std::ops::Range<usize> {
        if age == 0 {
            return 0..1;
        }
        let start = self.layer_start[age];
        start..start + age.min(self.max_error)
    }
}

pub fn build_state_space(params: &ChainParams) -> Result<StateSpace> {
    params.validate()?;
    StateSpace::new(params.max_age, params.max_error)
}

macro_rules! state_vector {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name(Vec<f64>);

        impl $name {
            pub fn new(space: &StateSpace, values: Vec<f64>) -> Result<Self> {
                if values.len() != space.len() {
                    return Err(Error::LengthMismatch { expected: space.len(), actual: values.len() });
                }
                Ok($name(values))
            }

            pub fn zeros(space: &StateSpace) -> Self {
                $name(vec![0.0; space.len()])
            }

            pub fn values(&self) -> &[f64] {
                &self.0
            }

            pub fn values_mut(&mut self) -> &mut [f64] {
                &mut self.0
            }

            pub fn into_values(self) -> Vec<f64> {
                self.0
            }

            pub fn len(&self) -> usize {
                self.0.len()
            }

            pub fn is_empty(&self) -> bool {
                self.0.is_empty()
            }
        }

        impl std::ops::Index<usize> for $name {
            type Output = f64;
            fn index(&self, i: usize) -> &f64 {
                &self.0[i]
            }
        }
    };
}

state_vector!(
    /// Transmission probability for every state of a [`StateSpace`].
    ///
    /// Entries may leave `[0,1]` while being optimized; [`Policy::is_valid`]
    /// checks the deployable form.
    Policy
);

state_vector!(
    /// Probability vector over a [`StateSpace`].
    StateDist
);

impl Policy {
    pub fn constant(space: &StateSpace, p: f64) -> Self {
        let mut values = vec![p; space.len()];
        values[0] = 0.0;
        Policy(values)
    }

    pub fn is_valid(&self) -> bool {
        self.0[0] == 0.0 && self.0.iter().all(|p| (0.0..=1.0).contains(p))
    }

    /// Clamp into `[0,1]` and silence the synchronized state.
    pub fn finalized(&self) -> Policy {
        let mut values: Vec<f64> = self.0.iter().map(|p| p.clamp(0.0, 1.0)).collect();
        values[0] = 0.0;
        Policy(values)
    }

    pub fn validate(&self) -> Result<()> {
        if self.0[0] != 0.0 {
            return Err(Error::SyncStateTransmits(self.0[0]));
        }
        if let Some(p) = self.0.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::invalid(format!("transmission probability {p} outside [0,1]")));
        }
        Ok(())
    }
}

impl StateDist {
    pub fn point_mass(space: &StateSpace, index: usize) -> Self {
        let mut values = vec![0.0; space.len()];
        values[index] = 1.0;
        StateDist(values)
    }

    pub fn uniform(space: &StateSpace) -> Self {
        StateDist(vec![1.0 / space.len() as f64; space.len()])
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn is_valid(&self) -> bool {
        self.0.iter().all(|&p| p >= 0.0) && (self.total() - 1.0).abs() <= 1e-9
    }
}

/// Probability that a tagged sensor sees no other sensor transmitting, under
/// the steady-state approximation. Clamped to `[0,1]`.
pub fn collision_term(policy: &Policy, dist: &StateDist, include_sync_state: bool) -> Result<f64> {
    if policy.len() != dist.len() {
        return Err(Error::LengthMismatch { expected: policy.len(), actual: dist.len() });
    }
    Ok(raw_collision_term(policy.values(), dist.values(), include_sync_state).clamp(0.0, 1.0))
}

pub(crate) fn raw_collision_term(policy: &[f64], dist: &[f64], include_sync_state: bool) -> f64 {
    let silent: f64 = policy[1..].iter().zip(&dist[1..]).map(|(p, d)| d * (1.0 - p)).sum();
    if include_sync_state {
        silent + dist[0]
    } else {
        silent
    }
}

/// `q(s) = π(s) ℓ^(N-1)` for every state.
pub fn success_prob(policy: &Policy, ell: f64, params: &ChainParams) -> Vec<f64> {
    let free = ell.powi(params.num_sensors as i32 - 1);
    policy.values().iter().map(|p| p * free).collect()
}

/// One outgoing transition whose probability is affine in the source state's
/// success probability: `base + slope * q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineEntry {
    pub target: usize,
    pub base: f64,
    pub slope: f64,
}

/// The kernel with the success probabilities left symbolic. Depends only on
/// `p_t`, `F` and `G`, so the optimizer builds it once and re-evaluates it at
/// every iterate.
#[derive(Debug, Clone)]
pub struct KernelTemplate {
    row_ptr: Vec<usize>,
    entries: Vec<AffineEntry>,
}

impl KernelTemplate {
    pub fn new(space: &StateSpace, params: &ChainParams) -> Self {
        let (f_cap, g_cap) = (space.max_age(), space.max_error());
        let (pt, pr) = (params.p_move, params.p_stay);
        let idx = |f: usize, g: usize| space.index(f, g).expect("target inside state space");

        let mut row_ptr = Vec::with_capacity(space.len() + 1);
        let mut entries = Vec::with_capacity(4 * space.len());
        row_ptr.push(0);
        let mut row: Vec<AffineEntry> = Vec::with_capacity(4);
        for state in space.states() {
            row.clear();
            let (f, g) = (state.age, state.error);
            let next_f = (f + 1).min(f_cap);
            if g == 0 {
                row.push(AffineEntry { target: idx(1, 1), base: 2.0 * pt, slope: 0.0 });
                row.push(AffineEntry { target: 0, base: pr, slope: 0.0 });
            } else if g == 1 {
                row.push(AffineEntry { target: idx(next_f, 2.min(g_cap)), base: pt, slope: -pt });
                row.push(AffineEntry { target: idx(next_f, 1), base: pr, slope: -pr });
                row.push(AffineEntry { target: 0, base: pt, slope: 1.0 - pt });
            } else {
                row.push(AffineEntry { target: idx(next_f, (g + 1).min(g_cap)), base: pt, slope: -pt });
                row.push(AffineEntry { target: idx(next_f, g - 1), base: pt, slope: -pt });
                row.push(AffineEntry { target: idx(next_f, g), base: pr, slope: -pr });
                row.push(AffineEntry { target: 0, base: 0.0, slope: 1.0 });
            }
            // coinciding targets after truncation are merged
            let start = entries.len();
            for e in &row {
                match entries[start..].iter_mut().find(|x: &&mut AffineEntry| x.target == e.target) {
                    Some(x) => {
                        x.base += e.base;
                        x.slope += e.slope;
                    }
                    None => entries.push(*e),
                }
            }
            row_ptr.push(entries.len());
        }
        KernelTemplate { row_ptr, entries }
    }

    pub fn num_states(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn row(&self, source: usize) -> &[AffineEntry] {
        &self.entries[self.row_ptr[source]..self.row_ptr[source + 1]]
    }

    /// `out = φ P(q)`.
    pub fn left_multiply(&self, dist: &[f64], success: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for (i, (&mass, &q)) in dist.iter().zip(success).enumerate() {
            if mass == 0.0 {
                continue;
            }
            for e in self.row(i) {
                out[e.target] += mass * (e.base + e.slope * q);
            }
        }
    }

    pub fn instantiate(&self, success: &[f64]) -> Vec<Vec<(usize, f64)>> {
        (0..self.num_states())
            .map(|i| self.row(i).iter().map(|e| (e.target, e.base + e.slope * success[i])).collect())
            .collect()
    }
}

/// Row-sparse transition kernel of the truncated chain.
#[derive(Debug, Clone)]
pub struct TransitionKernel {
    rows: Vec<Vec<(usize, f64)>>,
    pub ell: Option<f64>,
    pub success: Vec<f64>,
}

impl TransitionKernel {
    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    pub fn row(&self, source: usize) -> &[(usize, f64)] {
        &self.rows[source]
    }

    pub fn num_states(&self) -> usize {
        self.rows.len()
    }

    pub fn left_multiply(&self, dist: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; dist.len()];
        for (row, &mass) in self.rows.iter().zip(dist) {
            for &(j, p) in row {
                out[j] += mass * p;
            }
        }
        out
    }

    /// `‖φP − φ‖₂`.
    pub fn residual(&self, dist: &[f64]) -> f64 {
        let next = self.left_multiply(dist);
        next.iter().zip(dist).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    }

    /// States reachable from `start` over nonzero entries.
    pub fn reachable_from(&self, start: usize) -> Vec<bool> {
        let mut seen = vec![false; self.rows.len()];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            for &(j, p) in &self.rows[i] {
                if p > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen
    }

    /// States from which `target` can be reached over nonzero entries.
    pub fn reaching(&self, target: usize) -> Vec<bool> {
        let mut reverse = vec![Vec::new(); self.rows.len()];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, p) in row {
                if p > 0.0 {
                    reverse[j].push(i);
                }
            }
        }
        let mut seen = vec![false; self.rows.len()];
        let mut stack = vec![target];
        seen[target] = true;
        while let Some(j) = stack.pop() {
            for &i in &reverse[j] {
                if !seen[i] {
                    seen[i] = true;
                    stack.push(i);
                }
            }
        }
        seen
    }
}

/// Transition kernel for a policy and per-state success probabilities.
pub fn build_kernel(policy: &Policy, success: &[f64], params: &ChainParams) -> Result<TransitionKernel> {
    let space = build_state_space(params)?;
    if policy.len() != space.len() {
        return Err(Error::LengthMismatch { expected: space.len(), actual: policy.len() });
    }
    if success.len() != space.len() {
        return Err(Error::LengthMismatch { expected: space.len(), actual: success.len() });
    }
    if policy[0] != 0.0 {
        return Err(Error::SyncStateTransmits(policy[0]));
    }
    if success[0] != 0.0 {
        return Err(Error::SyncStateTransmits(success[0]));
    }
    let template = KernelTemplate::new(&space, params);
    Ok(TransitionKernel { rows: template.instantiate(success), ell: None, success: success.to_vec() })
}

/// Stationary distribution of a fixed kernel on `space`.
///
/// Every transition either resets to (0,0) or moves from age layer `f` to
/// layer `min(f+1, F)`, so the balance equations are solved by sweeping the
/// layers forward from an unnormalized `φ(0,0) = 1` and solving the small
/// `G × G` system of the self-looping last layer.
pub(crate) fn solve_layered(space: &StateSpace, template: &KernelTemplate, success: &[f64]) -> Result<Vec<f64>> {
    let n = space.len();
    let f_cap = space.max_age();
    let mut mass = vec![0.0; n];
    mass[0] = 1.0;
    for age in 0..f_cap {
        for i in space.layer(age) {
            let m = mass[i];
            for e in template.row(i) {
                if e.target != 0 {
                    mass[e.target] += m * (e.base + e.slope * success[i]);
                }
            }
        }
    }
    let last = space.layer(f_cap);
    let width = last.len();
    // x (I - T) = b  <=>  (I - T)^T x^T = b^T
    let mut system = DMatrix::<f64>::identity(width, width);
    for i in last.clone() {
        for e in template.row(i) {
            if last.contains(&e.target) {
                system[(e.target - last.start, i - last.start)] -= e.base + e.slope * success[i];
            }
        }
    }
    let rhs = DVector::from_iterator(width, last.clone().map(|i| mass[i]));
    let solved =
        system.lu().solve(&rhs).ok_or_else(|| Error::invalid("last age layer has a singular balance system"))?;
    for (k, i) in last.enumerate() {
        mass[i] = solved[k];
    }
    let total: f64 = mass.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::invalid("stationary mass is not normalizable"));
    }
    mass.iter_mut().for_each(|m| *m /= total);
    Ok(mass)
}

/// Power iteration `φ ← φP` from the uniform vector.
pub fn power_iteration(kernel: &TransitionKernel, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = kernel.num_states();
    let mut dist = vec![1.0 / n as f64; n];
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let next = kernel.left_multiply(&dist);
        residual = next.iter().zip(&dist).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        dist = next;
        if residual <= tol {
            let total: f64 = dist.iter().sum();
            dist.iter_mut().for_each(|p| *p /= total);
            return Ok(dist);
        }
    }
    Err(Error::NotConverged { iterations: max_iter, residual })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryOptions {
    pub include_sync_state: bool,
    pub damping: f64,
    pub ell_tol: f64,
    pub residual_tol: f64,
    pub max_outer: usize,
}

impl Default for StationaryOptions {
    fn default() -> Self {
        StationaryOptions {
            include_sync_state: true,
            damping: 0.5,
            ell_tol: 1e-10,
            residual_tol: 1e-10,
            max_outer: 500,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Stationary {
    pub dist: StateDist,
    pub ell: f64,
    pub residual: f64,
    pub outer_iterations: usize,
}

/// Jointly self-consistent `(φ*, ℓ*)`: `φ*` is stationary for the kernel built
/// with `ℓ*`, and `ℓ*` is the collision term of `φ*`.
pub fn stationary_dist(policy: &Policy, params: &ChainParams, opts: &StationaryOptions) -> Result<Stationary> {
    let space = build_state_space(params)?;
    if policy.len() != space.len() {
        return Err(Error::LengthMismatch { expected: space.len(), actual: policy.len() });
    }
    policy.validate()?;
    let template = KernelTemplate::new(&space, params);
    let mut ell = 1.0;
    let mut last_gap = f64::INFINITY;
    let mut scratch = vec![0.0; space.len()];
    for iteration in 1..=opts.max_outer {
        let success = success_prob(policy, ell, params);
        let dist = solve_layered(&space, &template, &success)?;
        let next = raw_collision_term(policy.values(), &dist, opts.include_sync_state).clamp(0.0, 1.0);
        last_gap = (next - ell).abs();
        if last_gap <= opts.ell_tol || params.num_sensors == 1 {
            template.left_multiply(&dist, &success, &mut scratch);
            let residual = scratch.iter().zip(&dist).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            if residual > opts.residual_tol {
                return Err(Error::NotConverged { iterations: iteration, residual });
            }
            return Ok(Stationary { dist: StateDist(dist), ell: next, residual, outer_iterations: iteration });
        }
        ell = opts.damping * ell + (1.0 - opts.damping) * next;
    }
    Err(Error::NotConverged { iterations: opts.max_outer, residual: last_gap })
}

/// Expected truncated AoII `Σ f g φ(f,g)`.
pub fn truncated_aoii(space: &StateSpace, dist: &StateDist) -> f64 {
    space.states().iter().zip(dist.values()).map(|(s, p)| s.aoii() as f64 * p).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params(pt: f64, f: usize, g: usize, n: usize) -> ChainParams {
        ChainParams::new(pt, f, g, n).unwrap()
    }

    fn row_map(kernel: &TransitionKernel, space: &StateSpace, f: usize, g: usize) -> Vec<((usize, usize), f64)> {
        let mut out: Vec<_> = kernel
            .row(space.index(f, g).unwrap())
            .iter()
            .map(|&(j, p)| {
                let s = space.state(j);
                ((s.age, s.error), p)
            })
            .collect();
        out.sort_by_key(|a| a.0);
        out
    }

    #[test]
    fn state_space_sizes() {
        let s = StateSpace::new(2, 2).unwrap();
        let pairs: Vec<_> = s.states().iter().map(|s| (s.age, s.error)).collect();
        assert_eq!(pairs, vec![(0, 0), (1, 1), (2, 1), (2, 2)]);
        assert_eq!(StateSpace::new(3, 2).unwrap().len(), 6);
        assert_eq!(StateSpace::new(100, 100).unwrap().len(), 5051);
        for (i, st) in s.states().iter().enumerate() {
            assert_eq!(s.index(st.age, st.error), Some(i));
        }
        assert_eq!(s.index(1, 0), None);
        assert_eq!(s.index(1, 2), None);
    }

    #[test]
    fn params_validation() {
        assert!(ChainParams::new(0.5, 3, 3, 1).is_err());
        assert!(ChainParams::new(0.0, 3, 3, 1).is_err());
        assert!(ChainParams::new(0.2, 2, 3, 1).is_err());
        assert!(ChainParams::new(0.2, 3, 0, 1).is_err());
        assert!(ChainParams::new(0.2, 3, 3, 0).is_err());
        assert_eq!(ChainParams::new(0.2, 3, 3, 1).unwrap().p_stay, 1.0 - 0.4);
    }

    #[test]
    fn collision_term_examples() {
        let space = StateSpace::new(2, 2).unwrap();
        let dist = StateDist::uniform(&space);
        assert_eq!(collision_term(&Policy::zeros(&space), &dist, true).unwrap(), 1.0);
        assert_abs_diff_eq!(collision_term(&Policy::constant(&space, 1.0), &dist, true).unwrap(), 0.25);
        let half = Policy::constant(&space, 0.5);
        assert_abs_diff_eq!(collision_term(&half, &dist, true).unwrap(), 0.625, epsilon = 1e-15);
        assert_abs_diff_eq!(collision_term(&half, &dist, false).unwrap(), 0.375, epsilon = 1e-15);
        let other = StateSpace::new(3, 2).unwrap();
        assert!(collision_term(&half, &StateDist::uniform(&other), true).is_err());
    }

    #[test]
    fn success_prob_examples() {
        let space = StateSpace::new(3, 3).unwrap();
        let pi = Policy::constant(&space, 0.5);
        let q = success_prob(&pi, 0.3, &params(0.1, 3, 3, 1));
        assert_eq!(&q[1..], &pi.values()[1..]);
        let q = success_prob(&pi, 0.8, &params(0.1, 3, 3, 2));
        assert_abs_diff_eq!(q[1], 0.4, epsilon = 1e-15);
        let q = success_prob(&pi, 0.0, &params(0.1, 3, 3, 5));
        assert!(q.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn kernel_rows_match_transition_rules() {
        let p = params(0.25, 5, 5, 2);
        let space = build_state_space(&p).unwrap();
        let pi = Policy::constant(&space, 0.1);
        let q = success_prob(&pi, 1.0, &p);
        let k = build_kernel(&pi, &q, &p).unwrap();
        assert_eq!(row_map(&k, &space, 0, 0), vec![((0, 0), 0.5), ((1, 1), 0.5)]);
        let r = row_map(&k, &space, 2, 2);
        let expect = [((0, 0), 0.1), ((3, 1), 0.225), ((3, 2), 0.45), ((3, 3), 0.225)];
        for (got, want) in r.iter().zip(expect) {
            assert_eq!(got.0, want.0);
            assert_abs_diff_eq!(got.1, want.1, epsilon = 1e-15);
        }
        let r = row_map(&k, &space, 5, 5);
        assert_eq!(r.len(), 3);
        assert_abs_diff_eq!(r[0].1, 0.1, epsilon = 1e-15);
        assert_eq!(r[1].0, (5, 4));
        assert_abs_diff_eq!(r[2].1, 0.75 * 0.9, epsilon = 1e-15);

        let p = params(0.3, 5, 3, 2);
        let space = build_state_space(&p).unwrap();
        let pi = Policy::constant(&space, 0.2);
        let q = success_prob(&pi, 1.0, &p);
        let k = build_kernel(&pi, &q, &p).unwrap();
        let r = row_map(&k, &space, 3, 1);
        let expect = [((0, 0), 0.44), ((4, 1), 0.32), ((4, 2), 0.24)];
        for (got, want) in r.iter().zip(expect) {
            assert_eq!(got.0, want.0);
            assert_abs_diff_eq!(got.1, want.1, epsilon = 1e-15);
        }
    }

    #[test]
    fn corner_row_merges_to_two_entries() {
        // with both caps active the +1, -1 and stay moves from (F,G) go to
        // (F,G), (F,G-1), (F,G); at G = 1 all three coincide
        let p = params(0.25, 4, 1, 3);
        let space = build_state_space(&p).unwrap();
        let mut q = vec![0.1; space.len()];
        q[0] = 0.0;
        let pi = Policy::constant(&space, 0.1);
        let k = build_kernel(&pi, &q, &p).unwrap();
        let r = row_map(&k, &space, 4, 1);
        assert_eq!(r.len(), 2);
        assert_abs_diff_eq!(r[0].1, 0.25 + 0.75 * 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(r[1].1, 0.75 * 0.9, epsilon = 1e-15);
    }

    #[test]
    fn kernel_rejects_transmitting_sync_state() {
        let p = params(0.25, 3, 3, 2);
        let space = build_state_space(&p).unwrap();
        let mut pi = Policy::constant(&space, 0.2);
        pi.values_mut()[0] = 0.1;
        let q = success_prob(&pi, 1.0, &p);
        assert!(matches!(build_kernel(&pi, &q, &p), Err(Error::SyncStateTransmits(_))));
    }

    #[test]
    fn layered_solver_agrees_with_power_iteration() {
        let p = params(0.2, 7, 4, 1);
        let space = build_state_space(&p).unwrap();
        let values: Vec<f64> =
            (0..space.len()).map(|i| if i == 0 { 0.0 } else { 0.05 + 0.9 * ((i * 37) % 11) as f64 / 11.0 }).collect();
        let pi = Policy::new(&space, values).unwrap();
        let st = stationary_dist(&pi, &p, &StationaryOptions::default()).unwrap();
        let q = success_prob(&pi, 1.0, &p);
        let k = build_kernel(&pi, &q, &p).unwrap();
        let reference = power_iteration(&k, 1e-14, 1_000_000).unwrap();
        for (a, b) in st.dist.values().iter().zip(&reference) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn truncated_aoii_examples() {
        let space = StateSpace::new(2, 2).unwrap();
        assert_eq!(truncated_aoii(&space, &StateDist::point_mass(&space, 0)), 0.0);
        assert_abs_diff_eq!(truncated_aoii(&space, &StateDist::uniform(&space)), 1.75, epsilon = 1e-15);
    }
}
