//! Closed-form upper bound on the average untruncated AoII.
//!
//! The truncated chain under-reports AoII only in three places: the age-capped
//! states `(F, g < G)`, the error-capped states `(f < F, G)` and the corner
//! `(F, G)`. The bound replaces the AoII in the first class by a geometric
//! sojourn at the slowest exit rate, in the second by `f²` (the error can never
//! exceed the age), and in the corner by a geometric sojourn during which both
//! coordinates grow by one per slot.

use crate::chain::{collision_term, success_prob, ChainParams, ModelOptions, Policy, StateDist, StateSpace};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoundBreakdown {
    /// `Σ f g φ(f,g)` over `1 ≤ f < F`, `1 ≤ g < G`.
    pub interior: f64,
    /// `Σ f² φ(f,G)` over `G ≤ f < F`.
    pub sg_term: f64,
    /// Geometric sojourn bound for the age-capped states `(F, g < G)`.
    pub sf_term: f64,
    /// Geometric sojourn bound for `(F,G)`, including its `FG φ(F,G)` summand.
    pub corner_term: f64,
    pub total: f64,
    /// Set when a success probability had to be clamped to `[q_floor, 1]`.
    pub clamped: bool,
}

/// `Σ_{i≥0} q (1−q)^i (F+i)(G+i)` in closed form.
///
/// With `u = (1−q)/q` the sojourn length `i` has mean `u` and second moment
/// `u + 2u²`, giving `FG + u(F + G + 1 + 2u)`.
pub fn geometric_tail_fg(max_age: usize, max_error: usize, q: f64) -> Result<f64> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::invalid(format!("success probability must lie in (0,1], got {q}")));
    }
    Ok(tail_unchecked(max_age as f64, max_error as f64, q))
}

fn tail_unchecked(f: f64, g: f64, q: f64) -> f64 {
    let u = (1.0 - q) / q;
    f * g + u * (f + g + 1.0 + 2.0 * u)
}

/// `d tail / d q`.
pub(crate) fn tail_slope(f: f64, g: f64, q: f64) -> f64 {
    let u = (1.0 - q) / q;
    -(f + g + 1.0 + 4.0 * u) / (q * q)
}

/// Which success probabilities the bound reads, after clamping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct BoundProbes {
    /// Index of the first argmin of `q(F, g)` over `g < G`, when that class exists.
    pub min_index: Option<usize>,
    pub q_min: f64,
    pub min_clamped: bool,
    pub corner_index: usize,
    pub q_corner: f64,
    pub corner_clamped: bool,
    /// Total mass of the age-capped class `(F, g < G)`.
    pub sf_mass: f64,
}

fn clamp_q(q: f64, floor: f64) -> (f64, bool) {
    if q < floor {
        (floor, true)
    } else if q > 1.0 {
        (1.0, true)
    } else {
        (q, false)
    }
}

/// Negative entries of an optimizer iterate carry no mass in the bound. The
/// coefficients grow like `1/q²`, so letting them count would make the bound
/// unbounded below in `φ`.
pub(crate) fn mass(p: f64) -> f64 {
    p.max(0.0)
}

pub(crate) fn bound_from_success(
    space: &StateSpace,
    dist: &[f64],
    success: &[f64],
    q_floor: f64,
) -> (BoundBreakdown, BoundProbes) {
    let (f_cap, g_cap) = (space.max_age(), space.max_error());
    let mut out = BoundBreakdown::default();
    for (i, s) in space.states().iter().enumerate().skip(1) {
        if s.age < f_cap {
            if s.error < g_cap {
                out.interior += (s.age * s.error) as f64 * mass(dist[i]);
            } else {
                out.sg_term += (s.age * s.age) as f64 * mass(dist[i]);
            }
        }
    }

    let layer = space.layer(f_cap);
    let corner_index = layer.end - 1;
    let sf = layer.start..corner_index;
    let mut min_index = None;
    let mut q_min = f64::INFINITY;
    for i in sf.clone() {
        if success[i] < q_min {
            q_min = success[i];
            min_index = Some(i);
        }
    }
    let sf_mass: f64 = dist[sf].iter().copied().map(mass).sum();
    let (q_min, min_clamped) = match min_index {
        Some(_) => clamp_q(q_min, q_floor),
        None => (1.0, false),
    };
    if min_index.is_some() {
        out.sf_term = g_cap as f64 * sf_mass * (f_cap as f64 + (1.0 - q_min) / q_min);
    }

    let (q_corner, corner_clamped) = clamp_q(success[corner_index], q_floor);
    out.corner_term = mass(dist[corner_index]) * tail_unchecked(f_cap as f64, g_cap as f64, q_corner);
    out.total = out.interior + out.sg_term + out.sf_term + out.corner_term;
    out.clamped = min_clamped || corner_clamped;
    let probes = BoundProbes { min_index, q_min, min_clamped, corner_index, q_corner, corner_clamped, sf_mass };
    (out, probes)
}

/// Upper bound `J(π, φ)` on the average AoII. `φ` is used as given (negative
/// entries count as zero), so this also evaluates optimizer iterates that are
/// not exactly stationary.
pub fn bound(policy: &Policy, dist: &StateDist, params: &ChainParams, opts: &ModelOptions) -> Result<BoundBreakdown> {
    let space = crate::chain::build_state_space(params)?;
    if policy.len() != space.len() || dist.len() != space.len() {
        return Err(Error::LengthMismatch { expected: space.len(), actual: policy.len().min(dist.len()) });
    }
    let ell = collision_term(policy, dist, opts.include_sync_state)?;
    let success = success_prob(policy, ell, params);
    Ok(bound_from_success(&space, dist.values(), &success, opts.q_floor).0)
}
