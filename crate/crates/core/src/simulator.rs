//! Monte Carlo simulation of `N` sensors sharing a slotted ALOHA channel.
//!
//! Slot semantics: every sensor decides whether to transmit from the state it
//! holds at the start of the slot, then its process takes one random-walk
//! step, and a lone transmitter delivers the freshly sampled value, which
//! resynchronizes it to `(0,0)` within the slot. Two or more transmitters
//! collide and nothing is delivered. Ages and errors are tracked untruncated;
//! table policies are looked up at the truncated state.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chain::{build_state_space, ChainParams, Policy, StateSpace};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SensorState {
    /// Value of the observed process.
    pub x: i64,
    /// Last value delivered to the base station.
    pub x_hat: i64,
    /// Slots since `x == x_hat` last held.
    pub age: u64,
    /// `|x − x_hat|`.
    pub error: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimPolicy {
    /// Finite `(f,g)` table over the truncated state space.
    Table(Policy),
    /// Transmit with probability `1/N` whenever there is an error.
    Pt1,
    /// Transmit with probability `E/N` whenever there is an error.
    Pte(f64),
}

pub fn benchmark_pt1(_params: &ChainParams) -> SimPolicy {
    SimPolicy::Pt1
}

#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn benchmark_pte(params: &ChainParams, load: f64) -> Result<SimPolicy> {
    if !(load >= 0.0) || load / params.num_sensors as f64 > 1.0 {
        return Err(Error::invalid(format!("PTE load {load} must lie in [0, N]")));
    }
    Ok(SimPolicy::Pte(load))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub params: ChainParams,
    pub horizon: u64,
    pub seed: u64,
    pub policy: SimPolicy,
    /// Keep the network-average AoII of every slot.
    pub record_trace: bool,
}

impl SimConfig {
    pub fn new(params: ChainParams, policy: SimPolicy, horizon: u64, seed: u64) -> Self {
        SimConfig { params, horizon, seed, policy, record_trace: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotOutcome {
    pub transmitters: usize,
    /// Sensor whose packet got through, if exactly one transmitted.
    pub delivered: Option<usize>,
}

/// All sensors plus their independent random streams.
#[derive(Debug, Clone)]
pub struct World {
    params: ChainParams,
    space: StateSpace,
    sensors: Vec<SensorState>,
    rngs: Vec<ChaCha8Rng>,
    transmit: Vec<bool>,
}

impl World {
    /// All sensors synchronized at `x = x̂ = 0`.
    pub fn new(params: &ChainParams, seed: u64) -> Result<Self> {
        Self::from_states(params, seed, vec![SensorState::default(); params.num_sensors])
    }

    pub fn from_states(params: &ChainParams, seed: u64, sensors: Vec<SensorState>) -> Result<Self> {
        let space = build_state_space(params)?;
        if sensors.len() != params.num_sensors {
            return Err(Error::LengthMismatch { expected: params.num_sensors, actual: sensors.len() });
        }
        // one stream per sensor so that N does not perturb individual sequences
        let rngs = (0..sensors.len())
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                rng
            })
            .collect();
        let transmit = vec![false; sensors.len()];
        Ok(World { params: *params, space, sensors, rngs, transmit })
    }

    pub fn sensors(&self) -> &[SensorState] {
        &self.sensors
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    fn transmit_prob(&self, policy: &SimPolicy, sensor: &SensorState) -> f64 {
        let n = self.params.num_sensors as f64;
        match policy {
            SimPolicy::Table(pi) => {
                let i = self
                    .space
                    .truncated_index(sensor.age as usize, sensor.error as usize)
                    .expect("error never exceeds age");
                pi[i]
            }
            SimPolicy::Pt1 if sensor.error > 0 => 1.0 / n,
            SimPolicy::Pte(load) if sensor.error > 0 => load / n,
            _ => 0.0,
        }
    }

    pub fn step(&mut self, policy: &SimPolicy) -> SlotOutcome {
        let (p_move, two_p_move) = (self.params.p_move, 2.0 * self.params.p_move);
        let mut transmitters = 0;
        let mut last = 0;
        for i in 0..self.sensors.len() {
            let prob = self.transmit_prob(policy, &self.sensors[i]);
            let rng = &mut self.rngs[i];
            let decide: f64 = rng.random();
            let walk: f64 = rng.random();
            let sensor = &mut self.sensors[i];
            self.transmit[i] = decide < prob;
            if self.transmit[i] {
                transmitters += 1;
                last = i;
            }
            if walk < p_move {
                sensor.x += 1;
            } else if walk < two_p_move {
                sensor.x -= 1;
            }
            sensor.error = sensor.x.abs_diff(sensor.x_hat);
            sensor.age = if sensor.error == 0 { 0 } else { sensor.age + 1 };
        }
        let delivered = (transmitters == 1).then_some(last);
        if let Some(i) = delivered {
            let sensor = &mut self.sensors[i];
            sensor.x_hat = sensor.x;
            sensor.error = 0;
            sensor.age = 0;
        }
        debug_assert!(self.sensors.iter().all(|s| s.error == s.x.abs_diff(s.x_hat) && (s.age == 0) == (s.error == 0)));
        SlotOutcome { transmitters, delivered }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub num_sensors: usize,
    pub horizon: u64,
    /// Time and network average of the untruncated `f·g`.
    pub avg_aoii: f64,
    /// Same average over the truncated `min(f,F)·min(g,G)`.
    pub avg_truncated_aoii: f64,
    /// Transmission attempts per slot, summed over the network.
    pub avg_load: f64,
    pub transmissions: u64,
    pub success_slots: u64,
    pub collision_slots: u64,
    pub idle_slots: u64,
    /// Sensor-slots spent in each truncated state, indexed like the state space.
    pub occupancy: Vec<u64>,
    /// Network-average AoII after every slot, when requested.
    pub trace: Option<Vec<f64>>,
}

impl SimReport {
    pub fn success_rate(&self) -> f64 {
        self.success_slots as f64 / self.horizon as f64
    }

    pub fn collision_rate(&self) -> f64 {
        self.collision_slots as f64 / self.horizon as f64
    }

    pub fn idle_rate(&self) -> f64 {
        self.idle_slots as f64 / self.horizon as f64
    }

    /// Empirical distribution over the truncated state space.
    pub fn occupancy_dist(&self) -> Vec<f64> {
        let total: u64 = self.occupancy.iter().sum();
        self.occupancy.iter().map(|&c| c as f64 / total as f64).collect()
    }
}

pub fn run(config: &SimConfig) -> Result<SimReport> {
    let params = &config.params;
    params.validate()?;
    if config.horizon < 1 {
        return Err(Error::invalid("horizon must be at least 1 slot"));
    }
    match &config.policy {
        SimPolicy::Table(pi) => {
            let expected = build_state_space(params)?.len();
            if pi.len() != expected {
                return Err(Error::LengthMismatch { expected, actual: pi.len() });
            }
            if pi.values().iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::invalid("table policy has entries outside [0,1]"));
            }
        }
        SimPolicy::Pte(load) => {
            benchmark_pte(params, *load)?;
        }
        SimPolicy::Pt1 => {}
    }

    let mut world = World::new(params, config.seed)?;
    let (f_cap, g_cap) = (params.max_age as u64, params.max_error as u64);
    let mut occupancy = vec![0u64; world.space().len()];
    let mut trace = config.record_trace.then(|| Vec::with_capacity(config.horizon as usize));
    let (mut aoii_sum, mut truncated_sum) = (0u128, 0u128);
    let (mut transmissions, mut success_slots, mut collision_slots, mut idle_slots) = (0u64, 0u64, 0u64, 0u64);

    for _ in 0..config.horizon {
        let outcome = world.step(&config.policy);
        transmissions += outcome.transmitters as u64;
        match outcome.transmitters {
            0 => idle_slots += 1,
            1 => success_slots += 1,
            _ => collision_slots += 1,
        }
        let mut slot_sum = 0u128;
        for s in world.sensors() {
            slot_sum += (s.age as u128) * (s.error as u128);
            let (f, g) = (s.age.min(f_cap), s.error.min(g_cap));
            truncated_sum += (f * g) as u128;
            let i = world.space().index(f as usize, g as usize).expect("error never exceeds age");
            occupancy[i] += 1;
        }
        aoii_sum += slot_sum;
        if let Some(t) = trace.as_mut() {
            t.push(slot_sum as f64 / params.num_sensors as f64);
        }
    }

    let samples = config.horizon as f64 * params.num_sensors as f64;
    Ok(SimReport {
        num_sensors: params.num_sensors,
        horizon: config.horizon,
        avg_aoii: aoii_sum as f64 / samples,
        avg_truncated_aoii: truncated_sum as f64 / samples,
        avg_load: transmissions as f64 / config.horizon as f64,
        transmissions,
        success_slots,
        collision_slots,
        idle_slots,
        occupancy,
        trace,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    /// `100 · (1 − AoII_a / AoII_b)`.
    pub reduction_percent: f64,
    pub candidate: SimReport,
    pub baseline: SimReport,
}

/// AoII reduction of `candidate` relative to `baseline`, both simulated with
/// the horizon, parameters and seed of `base`.
pub fn compare(candidate: &SimPolicy, baseline: &SimPolicy, base: &SimConfig) -> Result<Comparison> {
    let a = run(&SimConfig { policy: candidate.clone(), ..base.clone() })?;
    let b = run(&SimConfig { policy: baseline.clone(), ..base.clone() })?;
    if b.avg_aoii == 0.0 {
        return Err(Error::DegenerateBaseline);
    }
    Ok(Comparison { reduction_percent: 100.0 * (1.0 - a.avg_aoii / b.avg_aoii), candidate: a, baseline: b })
}
