//! Self-checks of the model invariants, runnable from the command line.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bound::bound;
use crate::chain::{
    build_kernel, build_state_space, stationary_dist, success_prob, truncated_aoii, ChainParams, ModelOptions, Policy,
    StateDist, StationaryOptions,
};
use crate::error::Result;
use crate::optimizer::{Evaluator, GradMode, OptimConfig};
use crate::simulator::{run, SimConfig, SimPolicy};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Largest entrywise disagreement between two gradients, relative to the
/// larger magnitude of each pair. Entries below `1e-8 · max|reference|` are
/// compared against that floor instead.
pub fn gradient_disagreement(candidate: &[f64], reference: &[f64]) -> f64 {
    let scale = reference.iter().chain(candidate).fold(0.0f64, |m, x| m.max(x.abs()));
    let floor = (1e-8 * scale).max(f64::MIN_POSITIVE);
    candidate.iter().zip(reference).map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(floor)).fold(0.0, f64::max)
}

pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

fn random_params(rng: &mut ChaCha8Rng, max_age: usize, num_sensors: usize) -> Result<ChainParams> {
    let f = rng.random_range(1..=max_age);
    let g = rng.random_range(1..=f);
    ChainParams::new(rng.random_range(0.01..0.49), f, g, num_sensors)
}

fn random_policy(rng: &mut ChaCha8Rng, len: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..len).map(|i| if i == 0 { 0.0 } else { rng.random_range(lo..hi) }).collect()
}

pub fn kernel_row_sums(seed: u64, draws: usize) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut widest = 0;
    for _ in 0..draws {
        let sensors = rng.random_range(1..50);
        let params = random_params(&mut rng, 10, sensors)?;
        let space = build_state_space(&params)?;
        let pi = Policy::new(&space, random_policy(&mut rng, space.len(), 0.0, 1.0))?;
        let kernel = build_kernel(&pi, &success_prob(&pi, rng.random(), &params), &params)?;
        for row in kernel.rows() {
            worst = worst.max((row.iter().map(|e| e.1).sum::<f64>() - 1.0).abs());
            widest = widest.max(row.len());
        }
    }
    Ok(CheckOutcome {
        name: "kernel rows are stochastic",
        passed: worst <= 1e-12 && widest <= 4,
        detail: format!("max |row sum - 1| = {worst:.2e}, max row width = {widest}"),
    })
}

pub fn bound_dominance(seed: u64, draws: usize) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    for _ in 0..draws {
        let f = rng.random_range(3..=8);
        let params = ChainParams::new(rng.random_range(0.02..0.48), f, f, rng.random_range(1..30))?;
        let space = build_state_space(&params)?;
        let pi = Policy::new(&space, random_policy(&mut rng, space.len(), 0.0, 1.0))?;
        let st = stationary_dist(&pi, &params, &StationaryOptions::default())?;
        let b = bound(&pi, &st.dist, &params, &ModelOptions::default())?;
        worst = worst.min(b.total - truncated_aoii(&space, &st.dist));
    }
    Ok(CheckOutcome {
        name: "bound dominates truncated AoII",
        passed: worst >= -1e-9,
        detail: format!("min (J - E[fg]) = {worst:.3e}"),
    })
}

pub fn gradient_check(seed: u64, points: usize) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = ChainParams::new(0.2, 5, 5, 4)?;
    let space = build_state_space(&params)?;
    let analytic = Evaluator::new(&params, &OptimConfig::default())?;
    let numeric =
        Evaluator::new(&params, &OptimConfig { grad_mode: GradMode::FiniteDifference, ..Default::default() })?;
    let mut worst = 0.0f64;
    for _ in 0..points {
        let pi = Policy::new(&space, random_policy(&mut rng, space.len(), 0.1, 0.9))?;
        let st = stationary_dist(&pi, &params, &StationaryOptions::default())?;
        let mut phi: Vec<f64> = st.dist.values().iter().map(|p| p * rng.random_range(0.8..1.2)).collect();
        let total: f64 = phi.iter().sum();
        phi.iter_mut().for_each(|p| *p /= total);
        let phi = StateDist::new(&space, phi)?;
        let a = analytic.gradient(&pi, &phi)?;
        let n = numeric.gradient(&pi, &phi)?;
        worst = worst.max(gradient_disagreement(&a.policy, &n.policy));
        worst = worst.max(gradient_disagreement(&a.dist, &n.dist));
    }
    Ok(CheckOutcome {
        name: "analytic gradient matches finite differences",
        passed: worst <= 1e-4,
        detail: format!("max relative disagreement = {worst:.2e}"),
    })
}

/// With one sensor the collision term plays no role, so the truncated chain is
/// exact except at the error cap; the simulated occupancy must match it.
pub fn single_sensor_oracle(seed: u64, slots: u64) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = ChainParams::new(0.25, 5, 5, 1)?;
    let space = build_state_space(&params)?;
    let pi = Policy::new(&space, random_policy(&mut rng, space.len(), 0.0, 1.0))?;
    let st = stationary_dist(&pi, &params, &StationaryOptions::default())?;
    let report = run(&SimConfig::new(params, SimPolicy::Table(pi), slots, seed))?;
    let tv = total_variation(&report.occupancy_dist(), st.dist.values());
    let expected = truncated_aoii(&space, &st.dist);
    let rel = (report.avg_truncated_aoii - expected).abs() / expected;
    Ok(CheckOutcome {
        name: "single-sensor simulation matches the chain",
        passed: tv <= 0.02 && rel <= 0.03,
        detail: format!("TV = {tv:.4}, truncated AoII {:.4} vs {expected:.4}", report.avg_truncated_aoii),
    })
}

pub fn run_all(seed: u64, quick: bool) -> Result<Vec<CheckOutcome>> {
    let scale = if quick { 10 } else { 1 };
    Ok(vec![
        kernel_row_sums(seed, 200 / scale)?,
        bound_dominance(seed, 100 / scale)?,
        gradient_check(seed, 20 / scale)?,
        single_sensor_oracle(seed, 1_000_000 / scale as u64)?,
    ])
}
