use std::path::{Path, PathBuf};

use aoii::grid::{GridFile, GridKind};
use aoii::optimizer::{optimize_policy, OptimTrace, PipelineResult};
use aoii::simulator::{run, SimConfig, SimPolicy, SimReport};
use aoii::{ChainParams, Policy};
use rayon::prelude::*;

use crate::config::{Cell, ExperimentConfig};
use crate::error::CliError;
use crate::output::{csv_file, ensure_dir, num, write_text};
use crate::svg::{render, Scale};

const TRACE_HEADER: [&str; 9] = ["phase", "step", "U", "J", "c1", "c2", "c3", "c4", "ell"];

fn write_trace(path: &Path, hash: &str, phases: &[(&str, &OptimTrace)]) -> Result<(), CliError> {
    let mut w = csv_file(path, hash, &TRACE_HEADER)?;
    for (phase, trace) in phases {
        for r in &trace.records {
            let mut row = vec![phase.to_string(), r.step.to_string(), num(r.objective), num(r.bound)];
            row.extend(r.penalties.iter().map(|&c| num(c)));
            row.push(num(r.ell));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn grid_file(
    kind: GridKind,
    config: &ExperimentConfig,
    params: ChainParams,
    hash: &str,
    values: Vec<f64>,
) -> Result<GridFile, CliError> {
    Ok(GridFile::new(kind, params, config.chain.include_sync_state, hash, values)?)
}

/// Optimizes one cell. A diverged run leaves its partial trace in `dir`.
fn optimize_cell(config: &ExperimentConfig, cell: Cell, dir: &Path, hash: &str) -> Result<PipelineResult, CliError> {
    let params = config.params(cell)?;
    match optimize_policy(&params, &config.optim) {
        Ok(r) => Ok(r),
        Err(aoii::Error::Diverged { step, trace }) => {
            write_trace(&dir.join(format!("trace_{}.csv", cell.tag())), hash, &[("partial", &trace)])?;
            Err(CliError::Solver(format!("{}: objective became non-finite at step {step}", cell.tag())))
        }
        Err(e) => Err(e.into()),
    }
}

pub fn optimize(config: &ExperimentConfig) -> Result<(), CliError> {
    let dir = config.output_dir();
    ensure_dir(&dir)?;
    let hash = config.hash();
    for cell in config.cells() {
        let result = optimize_cell(config, cell, &dir, &hash)?;
        let params = config.params(cell)?;
        let policy = grid_file(GridKind::Policy, config, params, &hash, result.policy().values().to_vec())?;
        write_text(&dir.join(format!("policy_{}.csv", cell.tag())), &policy.emit())?;
        let phi = grid_file(GridKind::Distribution, config, params, &hash, result.stationary().dist.values().to_vec())?;
        write_text(&dir.join(format!("phi_{}.csv", cell.tag())), &phi.emit())?;
        write_trace(
            &dir.join(format!("trace_{}.csv", cell.tag())),
            &hash,
            &[("calibration", &result.calibration), ("refinement", &result.refinement)],
        )?;
        let last = result.refinement.records.last();
        println!(
            "{}: tau = {:.4}, p = {:.4}, picked step {} with J = {:.4} at its stationary point, final c1 = {:.3e}",
            cell.tag(),
            result.threshold.tau,
            result.threshold.p,
            result.pick.step,
            result.pick.bound,
            last.map_or(f64::NAN, |r| r.penalties[0]),
        );
    }
    println!("wrote outputs to {}", dir.display());
    Ok(())
}

pub fn read_grid(path: &Path, kind: GridKind) -> Result<GridFile, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    let file = GridFile::parse(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    if file.kind != kind {
        return Err(CliError::Validation(format!(
            "{}: expected a {kind:?} grid, found {:?}",
            path.display(),
            file.kind
        )));
    }
    Ok(file)
}

fn read_policy(path: &Path) -> Result<(ChainParams, Policy), CliError> {
    let file = read_grid(path, GridKind::Policy)?;
    let policy = Policy::new(&file.space(), file.values.clone())?;
    policy.validate().map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    Ok((file.params, policy))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Benchmark {
    Pt1,
    Pte(f64),
    PteAuto,
}

impl std::str::FromStr for Benchmark {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pt1" => Ok(Benchmark::Pt1),
            "pte:auto" => Ok(Benchmark::PteAuto),
            other => other
                .strip_prefix("pte:")
                .and_then(|e| e.parse::<f64>().ok())
                .map(Benchmark::Pte)
                .ok_or_else(|| format!("expected pt1, pte:<E> or pte:auto, got `{other}`")),
        }
    }
}

pub struct SimulateArgs {
    pub policy: Option<PathBuf>,
    pub benchmark: Option<Benchmark>,
    pub reference: Option<PathBuf>,
    pub trace: bool,
    pub output: Option<PathBuf>,
}

const SIM_HEADER: [&str; 14] = [
    "policy",
    "N",
    "p_t",
    "F",
    "G",
    "seed",
    "horizon",
    "avg_aoii",
    "avg_truncated_aoii",
    "avg_load",
    "success_rate",
    "collision_rate",
    "idle_rate",
    "pte_load",
];

fn simulate_once(
    params: ChainParams,
    policy: SimPolicy,
    horizon: u64,
    seed: u64,
    trace: bool,
) -> Result<SimReport, CliError> {
    let mut sim = SimConfig::new(params, policy, horizon, seed);
    sim.record_trace = trace;
    Ok(run(&sim)?)
}

pub fn simulate(config: &ExperimentConfig, args: &SimulateArgs) -> Result<(), CliError> {
    // (label, params, policy for a given seed's reference load)
    type Job = (String, ChainParams, Option<Policy>);
    let jobs: Vec<Job> = match (&args.policy, &args.benchmark) {
        (Some(path), None) => {
            let (params, policy) = read_policy(path)?;
            vec![("table".into(), params, Some(policy))]
        }
        (None, Some(Benchmark::PteAuto)) => {
            let path = args
                .reference
                .as_ref()
                .ok_or_else(|| CliError::Validation("pte:auto needs --reference <policy file>".into()))?;
            let (params, policy) = read_policy(path)?;
            vec![("pte:auto".into(), params, Some(policy))]
        }
        (None, Some(_)) => config
            .cells()
            .into_iter()
            .map(|c| Ok(("bench".into(), config.params(c)?, None)))
            .collect::<Result<_, CliError>>()?,
        _ => return Err(CliError::Validation("give exactly one of --policy or --benchmark".into())),
    };

    let dir = config.output_dir();
    ensure_dir(&dir)?;
    let hash = config.hash();
    let path = args.output.clone().unwrap_or_else(|| dir.join("simulate.csv"));
    let mut w = csv_file(&path, &hash, &SIM_HEADER)?;
    for (label, params, table) in jobs {
        for &seed in &config.sim.seeds {
            let (name, policy, pte_load) = match (&args.benchmark, table.clone()) {
                (None, Some(pi)) => (label.clone(), SimPolicy::Table(pi), None),
                (Some(Benchmark::Pt1), _) => ("pt1".to_string(), SimPolicy::Pt1, None),
                (Some(Benchmark::Pte(e)), _) => {
                    (format!("pte:{e}"), aoii::simulator::benchmark_pte(&params, *e)?, Some(*e))
                }
                (Some(Benchmark::PteAuto), Some(pi)) => {
                    let reference = simulate_once(params, SimPolicy::Table(pi), config.sim.horizon, seed, false)?;
                    let e = reference.avg_load;
                    ("pte:auto".to_string(), aoii::simulator::benchmark_pte(&params, e)?, Some(e))
                }
                _ => unreachable!("jobs are built to match the arguments"),
            };
            let report = simulate_once(params, policy, config.sim.horizon, seed, args.trace)?;
            w.write_record([
                name,
                params.num_sensors.to_string(),
                num(params.p_move),
                params.max_age.to_string(),
                params.max_error.to_string(),
                seed.to_string(),
                report.horizon.to_string(),
                num(report.avg_aoii),
                num(report.avg_truncated_aoii),
                num(report.avg_load),
                num(report.success_rate()),
                num(report.collision_rate()),
                num(report.idle_rate()),
                pte_load.map(num).unwrap_or_default(),
            ])?;
            if let Some(trace) = &report.trace {
                let tag = format!("N{}_pt{}_seed{seed}", params.num_sensors, params.p_move);
                let mut t = csv_file(&dir.join(format!("sim_trace_{tag}.csv")), &hash, &["slot", "avg_aoii"])?;
                for (slot, v) in trace.iter().enumerate() {
                    t.write_record([slot.to_string(), num(*v)])?;
                }
                t.flush()?;
            }
            println!(
                "N={} p_t={} seed={seed}: avg AoII {:.4}, load {:.4}",
                params.num_sensors, params.p_move, report.avg_aoii, report.avg_load
            );
        }
    }
    w.flush()?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Simulated results of one sweep cell for one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub cell: Cell,
    pub seed: u64,
    pub dual: SimReport,
    pub pt1: SimReport,
    pub pte: SimReport,
}

fn reduction(candidate: &SimReport, baseline: &SimReport) -> f64 {
    100.0 * (1.0 - candidate.avg_aoii / baseline.avg_aoii)
}

/// Loads the cached policy of `cell`, or optimizes and caches it.
fn cell_policy(
    config: &ExperimentConfig,
    cell: Cell,
    cache: &Path,
    use_cache: bool,
) -> Result<(ChainParams, Policy), CliError> {
    let key = config.cell_hash(cell);
    let path = cache.join(format!("policy_{}_{key}.csv", cell.tag()));
    if use_cache && path.exists() {
        if let Ok(file) = read_grid(&path, GridKind::Policy) {
            if file.config_hash == key {
                let policy = Policy::new(&file.space(), file.values)?;
                return Ok((file.params, policy));
            }
        }
    }
    let result = optimize_cell(config, cell, cache, &key)?;
    let params = config.params(cell)?;
    let file = grid_file(GridKind::Policy, config, params, &key, result.policy().values().to_vec())?;
    write_text(&path, &file.emit())?;
    Ok((params, result.pick.policy))
}

fn sweep_cell(config: &ExperimentConfig, cell: Cell, cache: &Path, use_cache: bool) -> Result<Vec<SweepRow>, CliError> {
    let (params, policy) = cell_policy(config, cell, cache, use_cache)?;
    let horizon = config.sim.horizon;
    let mut rows = Vec::new();
    for &seed in &config.sim.seeds {
        let dual = simulate_once(params, SimPolicy::Table(policy.clone()), horizon, seed, false)?;
        let pt1 = simulate_once(params, SimPolicy::Pt1, horizon, seed, false)?;
        let pte = simulate_once(params, aoii::simulator::benchmark_pte(&params, dual.avg_load)?, horizon, seed, false)?;
        rows.push(SweepRow { cell, seed, dual, pt1, pte });
    }
    Ok(rows)
}

pub fn sweep(config: &ExperimentConfig, use_cache: bool) -> Result<(), CliError> {
    let dir = config.output_dir();
    let cache = dir.join("cache");
    ensure_dir(&cache)?;
    let hash = config.hash();
    let cells = config.cells();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.output.workers)
        .build()
        .map_err(|e| CliError::Validation(format!("worker pool: {e}")))?;
    let results: Vec<(Cell, Result<Vec<SweepRow>, CliError>)> =
        pool.install(|| cells.par_iter().map(|&c| (c, sweep_cell(config, c, &cache, use_cache))).collect());

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (cell, result) in results {
        match result {
            Ok(r) => rows.extend(r),
            Err(e) => failures.push((cell, e.to_string())),
        }
    }
    write_sweep(&dir, &hash, &rows)?;
    if !failures.is_empty() {
        let mut w = csv_file(&dir.join("sweep_failures.csv"), &hash, &["N", "p_t", "error"])?;
        for (cell, msg) in &failures {
            eprintln!("{}: {msg}", cell.tag());
            w.write_record([cell.num_sensors.to_string(), num(cell.p_move), msg.clone()])?;
        }
        w.flush()?;
        return Err(CliError::PartialSweep { failed: failures.len(), total: cells.len() });
    }
    println!("swept {} cells into {}", cells.len(), dir.display());
    Ok(())
}

pub fn write_sweep(dir: &Path, hash: &str, rows: &[SweepRow]) -> Result<(), CliError> {
    let mut aoii = csv_file(&dir.join("fig3_aoii.csv"), hash, &["N", "p_t", "seed", "aoii"])?;
    let mut load = csv_file(&dir.join("fig4_load.csv"), hash, &["N", "p_t", "seed", "load"])?;
    let mut pt1 = csv_file(&dir.join("fig7_pt1.csv"), hash, &["N", "p_t", "seed", "pt1_aoii", "reduction_percent"])?;
    let mut pte =
        csv_file(&dir.join("fig8_pte.csv"), hash, &["N", "p_t", "seed", "pte_load", "pte_aoii", "reduction_percent"])?;
    for r in rows {
        let key = [r.cell.num_sensors.to_string(), num(r.cell.p_move), r.seed.to_string()];
        aoii.write_record(key.iter().cloned().chain([num(r.dual.avg_aoii)]))?;
        load.write_record(key.iter().cloned().chain([num(r.dual.avg_load)]))?;
        pt1.write_record(key.iter().cloned().chain([num(r.pt1.avg_aoii), num(reduction(&r.dual, &r.pt1))]))?;
        pte.write_record(key.iter().cloned().chain([
            num(r.dual.avg_load),
            num(r.pte.avg_aoii),
            num(reduction(&r.dual, &r.pte)),
        ]))?;
    }
    for w in [&mut aoii, &mut load, &mut pt1, &mut pte] {
        w.flush()?;
    }
    Ok(())
}

pub fn heatmap(input: &Path, log: bool, output: Option<&Path>) -> Result<(), CliError> {
    let text = std::fs::read_to_string(input)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", input.display())))?;
    let file = GridFile::parse(&text).map_err(|e| CliError::Validation(format!("{}: {e}", input.display())))?;
    let svg_path = output.map(Path::to_path_buf).unwrap_or_else(|| input.with_extension("svg"));
    let scale = if log { Scale::Log } else { Scale::Linear };
    write_text(&svg_path, &render(&file, scale))?;
    let csv_path = svg_path.with_extension("csv");
    let csv_path =
        if csv_path == input { svg_path.with_file_name(format!("{}_export.csv", stem(&svg_path))) } else { csv_path };
    write_text(&csv_path, &file.emit())?;
    println!("wrote {} and {}", svg_path.display(), csv_path.display());
    Ok(())
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "heatmap".into())
}

pub fn check(seed: u64, quick: bool) -> Result<(), CliError> {
    let outcomes = aoii::diagnostics::run_all(seed, quick)?;
    let mut failed = 0;
    for o in &outcomes {
        println!("{} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
        failed += usize::from(!o.passed);
    }
    if failed > 0 {
        return Err(CliError::Validation(format!("{failed} of {} checks failed", outcomes.len())));
    }
    Ok(())
}
