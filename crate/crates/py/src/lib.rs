//! Python bindings. Policies and distributions cross the boundary as flat
//! lists indexed like `ChainParams.states()`.

use aoii::optimizer::{self, OptimConfig};
use aoii::simulator::{self, SimConfig, SimPolicy};
use aoii::{ModelOptions, Policy, StateDist, StateSpace, StationaryOptions};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: aoii::Error) -> PyErr {
    match e {
        aoii::Error::NotConverged { .. } | aoii::Error::NonFiniteGradient { .. } | aoii::Error::Diverged { .. } => {
            PyRuntimeError::new_err(e.to_string())
        }
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Per-sensor chain parameters: `p_move` (p_t), truncation `max_age` (F) and
/// `max_error` (G), and the number of sensors `num_sensors` (N).
#[pyclass(frozen, module = "aoii")]
struct ChainParams {
    inner: aoii::ChainParams,
    space: StateSpace,
}

#[pymethods]
impl ChainParams {
    #[new]
    fn new(p_move: f64, max_age: usize, max_error: usize, num_sensors: usize) -> PyResult<Self> {
        let inner = aoii::ChainParams::new(p_move, max_age, max_error, num_sensors).map_err(to_py)?;
        let space = aoii::build_state_space(&inner).map_err(to_py)?;
        Ok(ChainParams { inner, space })
    }

    #[getter]
    fn p_move(&self) -> f64 {
        self.inner.p_move
    }

    #[getter]
    fn max_age(&self) -> usize {
        self.inner.max_age
    }

    #[getter]
    fn max_error(&self) -> usize {
        self.inner.max_error
    }

    #[getter]
    fn num_sensors(&self) -> usize {
        self.inner.num_sensors
    }

    #[getter]
    fn num_states(&self) -> usize {
        self.space.len()
    }

    /// `(f, g)` of every state, in list order.
    fn states(&self) -> Vec<(usize, usize)> {
        self.space.states().iter().map(|s| (s.age, s.error)).collect()
    }

    /// Position of `(f, g)` in the state list, or `None`.
    fn index(&self, age: usize, error: usize) -> Option<usize> {
        self.space.index(age, error)
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!(
            "ChainParams(p_move={}, max_age={}, max_error={}, num_sensors={})",
            p.p_move, p.max_age, p.max_error, p.num_sensors
        )
    }
}

impl ChainParams {
    fn policy(&self, values: Vec<f64>) -> PyResult<Policy> {
        Policy::new(&self.space, values).map_err(to_py)
    }

    fn dist(&self, values: Vec<f64>) -> PyResult<StateDist> {
        StateDist::new(&self.space, values).map_err(to_py)
    }
}

#[pyclass(frozen, get_all, module = "aoii")]
struct Stationary {
    dist: Vec<f64>,
    ell: f64,
    residual: f64,
    outer_iterations: usize,
}

#[pyclass(frozen, get_all, name = "Bound", module = "aoii")]
struct BoundResult {
    interior: f64,
    sg_term: f64,
    sf_term: f64,
    corner_term: f64,
    total: f64,
    clamped: bool,
}

#[pyclass(frozen, get_all, module = "aoii")]
struct SimReport {
    horizon: u64,
    avg_aoii: f64,
    avg_truncated_aoii: f64,
    avg_load: f64,
    success_rate: f64,
    collision_rate: f64,
    idle_rate: f64,
    occupancy: Vec<f64>,
    trace: Option<Vec<f64>>,
}

/// `(phase, step, U, J, c1, c2, c3, c4, ell)`.
type TraceRow = (String, usize, f64, f64, f64, f64, f64, f64, f64);

#[pyclass(frozen, get_all, module = "aoii")]
struct OptimizeResult {
    /// Picked policy, clamped to `[0, 1]`.
    policy: Vec<f64>,
    /// Stationary distribution of `policy`.
    dist: Vec<f64>,
    /// Bound at that stationary point.
    bound: f64,
    /// Refinement step the policy was taken from.
    step: usize,
    tau: f64,
    p: f64,
    /// One row per step of both phases.
    trace: Vec<TraceRow>,
}

fn model(include_sync_state: bool, q_floor: Option<f64>) -> ModelOptions {
    let default = ModelOptions::default();
    ModelOptions { include_sync_state, q_floor: q_floor.unwrap_or(default.q_floor) }
}

/// Self-consistent stationary distribution of `policy`.
#[pyfunction]
#[pyo3(signature = (params, policy, include_sync_state = true))]
fn stationary_dist(
    py: Python<'_>,
    params: &ChainParams,
    policy: Vec<f64>,
    include_sync_state: bool,
) -> PyResult<Stationary> {
    let pi = params.policy(policy)?;
    let opts = StationaryOptions { include_sync_state, ..StationaryOptions::default() };
    let s = py.detach(|| aoii::stationary_dist(&pi, &params.inner, &opts)).map_err(to_py)?;
    Ok(Stationary {
        dist: s.dist.into_values(),
        ell: s.ell,
        residual: s.residual,
        outer_iterations: s.outer_iterations,
    })
}

/// Upper bound on the untruncated average AoII.
#[pyfunction]
#[pyo3(signature = (params, policy, dist, include_sync_state = true, q_floor = None))]
fn bound(
    params: &ChainParams,
    policy: Vec<f64>,
    dist: Vec<f64>,
    include_sync_state: bool,
    q_floor: Option<f64>,
) -> PyResult<BoundResult> {
    let b =
        aoii::bound(&params.policy(policy)?, &params.dist(dist)?, &params.inner, &model(include_sync_state, q_floor))
            .map_err(to_py)?;
    Ok(BoundResult {
        interior: b.interior,
        sg_term: b.sg_term,
        sf_term: b.sf_term,
        corner_term: b.corner_term,
        total: b.total,
        clamped: b.clamped,
    })
}

/// `Σ f·g·φ(f,g)` over the truncated state space.
#[pyfunction]
fn truncated_aoii(params: &ChainParams, dist: Vec<f64>) -> PyResult<f64> {
    Ok(aoii::truncated_aoii(&params.space, &params.dist(dist)?))
}

/// Closed form of `Σ_i q (1−q)^i (F+i)(G+i)`.
#[pyfunction]
fn geometric_tail(max_age: usize, max_error: usize, q: f64) -> PyResult<f64> {
    aoii::geometric_tail_fg(max_age, max_error, q).map_err(to_py)
}

/// Transmit with probability `p` when `f·g ≥ tau`.
#[pyfunction]
fn threshold_policy(params: &ChainParams, tau: f64, p: f64) -> PyResult<Vec<f64>> {
    Ok(optimizer::threshold_policy(tau, p, &params.space).map_err(to_py)?.into_values())
}

/// Constant-probability policy with the given load and its stationary
/// distribution, as `(policy, dist)`.
#[pyfunction]
#[pyo3(signature = (params, target_load = 1.0))]
fn seed_init(params: &ChainParams, target_load: f64) -> (Vec<f64>, Vec<f64>) {
    let (pi, phi) = optimizer::seed_init(&params.space, &params.inner, target_load);
    (pi.into_values(), phi.into_values())
}

/// Transfers a calibrated threshold to another `p_t` at the same `N`.
#[pyfunction]
fn scale_tau(tau_ref: f64, p_t_ref: f64, p_t_new: f64) -> PyResult<f64> {
    optimizer::scale_tau(tau_ref, p_t_ref, p_t_new).map_err(to_py)
}

/// Full pipeline: threshold calibration, then refinement from the threshold
/// policy. Unset arguments keep their defaults.
#[pyfunction]
#[pyo3(signature = (params, *, max_steps = None, alpha_pi = None, alpha_phi = None, checkpoint_every = None, seed = None, include_sync_state = true, q_floor = None))]
#[allow(clippy::too_many_arguments)]
fn optimize(
    py: Python<'_>,
    params: &ChainParams,
    max_steps: Option<usize>,
    alpha_pi: Option<f64>,
    alpha_phi: Option<f64>,
    checkpoint_every: Option<usize>,
    seed: Option<u64>,
    include_sync_state: bool,
    q_floor: Option<f64>,
) -> PyResult<OptimizeResult> {
    let mut config = OptimConfig { model: model(include_sync_state, q_floor), ..OptimConfig::default() };
    if let Some(v) = max_steps {
        config.max_steps = v;
    }
    if let Some(v) = alpha_pi {
        config.alpha_pi = v;
    }
    if let Some(v) = alpha_phi {
        config.alpha_phi = v;
    }
    if let Some(v) = checkpoint_every {
        config.checkpoint_every = v;
    }
    if let Some(v) = seed {
        config.seed = v;
    }
    config.validate().map_err(to_py)?;
    let r = py.detach(|| optimizer::optimize_policy(&params.inner, &config)).map_err(to_py)?;
    let mut trace = Vec::new();
    for (phase, t) in [("calibration", &r.calibration), ("refinement", &r.refinement)] {
        for rec in &t.records {
            let [c1, c2, c3, c4] = rec.penalties;
            trace.push((phase.to_string(), rec.step, rec.objective, rec.bound, c1, c2, c3, c4, rec.ell));
        }
    }
    Ok(OptimizeResult {
        policy: r.policy().values().to_vec(),
        dist: r.stationary().dist.values().to_vec(),
        bound: r.pick.bound,
        step: r.pick.step,
        tau: r.threshold.tau,
        p: r.threshold.p,
        trace,
    })
}

/// Monte Carlo run of `N` sensors. Give a `policy` list or a `benchmark`
/// name: `"pt1"` or `"pte:<E>"`.
#[pyfunction]
#[pyo3(signature = (params, policy = None, benchmark = None, horizon = 100_000, seed = 1, record_trace = false))]
fn simulate(
    py: Python<'_>,
    params: &ChainParams,
    policy: Option<Vec<f64>>,
    benchmark: Option<&str>,
    horizon: u64,
    seed: u64,
    record_trace: bool,
) -> PyResult<SimReport> {
    let policy = match (policy, benchmark) {
        (Some(values), None) => SimPolicy::Table(params.policy(values)?),
        (None, Some("pt1")) => simulator::benchmark_pt1(&params.inner),
        (None, Some(name)) => {
            let load = name
                .strip_prefix("pte:")
                .and_then(|e| e.parse::<f64>().ok())
                .ok_or_else(|| PyValueError::new_err(format!("unknown benchmark `{name}`")))?;
            simulator::benchmark_pte(&params.inner, load).map_err(to_py)?
        }
        _ => return Err(PyValueError::new_err("give exactly one of policy or benchmark")),
    };
    let mut config = SimConfig::new(params.inner, policy, horizon, seed);
    config.record_trace = record_trace;
    let r = py.detach(|| simulator::run(&config)).map_err(to_py)?;
    Ok(SimReport {
        horizon: r.horizon,
        avg_aoii: r.avg_aoii,
        avg_truncated_aoii: r.avg_truncated_aoii,
        avg_load: r.avg_load,
        success_rate: r.success_rate(),
        collision_rate: r.collision_rate(),
        idle_rate: r.idle_rate(),
        occupancy: r.occupancy_dist(),
        trace: r.trace,
    })
}

#[pymodule]
#[pyo3(name = "aoii")]
pub fn aoii_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<ChainParams>()?;
    m.add_class::<Stationary>()?;
    m.add_class::<BoundResult>()?;
    m.add_class::<SimReport>()?;
    m.add_class::<OptimizeResult>()?;
    m.add_function(wrap_pyfunction!(stationary_dist, m)?)?;
    m.add_function(wrap_pyfunction!(bound, m)?)?;
    m.add_function(wrap_pyfunction!(truncated_aoii, m)?)?;
    m.add_function(wrap_pyfunction!(geometric_tail, m)?)?;
    m.add_function(wrap_pyfunction!(threshold_policy, m)?)?;
    m.add_function(wrap_pyfunction!(seed_init, m)?)?;
    m.add_function(wrap_pyfunction!(scale_tau, m)?)?;
    m.add_function(wrap_pyfunction!(optimize, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
