//! Experiment configuration: a TOML file with `[grid]`, `[chain]`, `[optim]`,
//! `[sim]` and `[output]` sections, patched by `--section.key=value` flags.

use std::path::{Path, PathBuf};

use aoii::optimizer::OptimConfig;
use aoii::{ChainParams, ModelOptions};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const OUTPUT_DIR_VAR: &str = "AOII_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub num_sensors: Vec<usize>,
    pub p_move: Vec<f64>,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { num_sensors: vec![25], p_move: vec![0.05] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainSection {
    pub max_age: usize,
    pub max_error: usize,
    pub include_sync_state: bool,
    pub q_floor: f64,
}

impl Default for ChainSection {
    fn default() -> Self {
        let model = ModelOptions::default();
        ChainSection {
            max_age: 100,
            max_error: 50,
            include_sync_state: model.include_sync_state,
            q_floor: model.q_floor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub horizon: u64,
    pub seeds: Vec<u64>,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection { horizon: 100_000, seeds: vec![1] }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    /// Falls back to `$AOII_OUTPUT_DIR`, then `out`.
    pub dir: Option<PathBuf>,
    /// Sweep worker threads; 0 uses every core.
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridSection,
    pub chain: ChainSection,
    /// `model` is taken from `[chain]` and ignored here.
    pub optim: OptimConfig,
    pub sim: SimSection,
    pub output: OutputSection,
}

/// One `(N, p_t)` point of the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub num_sensors: usize,
    pub p_move: f64,
}

impl Cell {
    pub fn tag(&self) -> String {
        format!("N{}_pt{}", self.num_sensors, self.p_move)
    }
}

impl ExperimentConfig {
    /// Reads `path` (if any), applies `overrides` and validates the result.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self, CliError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", p.display())))?;
                toml::from_str::<toml::Table>(&text)
                    .map_err(|e| CliError::Validation(format!("config {}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for (key, value) in overrides {
            apply_override(&mut table, key, value)?;
        }
        let mut config: ExperimentConfig =
            table.try_into().map_err(|e: toml::de::Error| CliError::Validation(format!("config: {e}")))?;
        config.optim.model =
            ModelOptions { include_sync_state: config.chain.include_sync_state, q_floor: config.chain.q_floor };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.grid.num_sensors.is_empty() || self.grid.p_move.is_empty() {
            return Err(CliError::Validation("grid must contain at least one N and one p_t".into()));
        }
        for cell in self.cells() {
            self.params(cell)?;
        }
        self.optim.validate()?;
        if self.sim.horizon < 1 {
            return Err(CliError::Validation("sim.horizon must be at least 1".into()));
        }
        if self.sim.seeds.is_empty() {
            return Err(CliError::Validation("sim.seeds must not be empty".into()));
        }
        Ok(())
    }

    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for &num_sensors in &self.grid.num_sensors {
            for &p_move in &self.grid.p_move {
                cells.push(Cell { num_sensors, p_move });
            }
        }
        cells
    }

    pub fn params(&self, cell: Cell) -> Result<ChainParams, CliError> {
        Ok(ChainParams::new(cell.p_move, self.chain.max_age, self.chain.max_error, cell.num_sensors)?)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output
            .dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_DIR_VAR).filter(|v| !v.is_empty()).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"))
    }

    /// Hash of everything that can change a result; the output section is
    /// excluded.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output = OutputSection::default();
        digest(&toml::to_string(&canonical).expect("config serializes"))
    }

    /// Hash of the inputs of one optimization run, used as its cache key.
    pub fn cell_hash(&self, cell: Cell) -> String {
        #[derive(Serialize)]
        struct Key<'a> {
            num_sensors: usize,
            p_move: f64,
            chain: &'a ChainSection,
            optim: &'a OptimConfig,
        }
        let key = Key { num_sensors: cell.num_sensors, p_move: cell.p_move, chain: &self.chain, optim: &self.optim };
        digest(&toml::to_string(&key).expect("cell key serializes"))
    }
}

fn digest(text: &str) -> String {
    let bytes = Sha256::digest(text.as_bytes());
    bytes[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Splits `--section.key=value` flags off the argument list. Everything else
/// is returned untouched for the argument parser.
pub fn extract_overrides(args: impl IntoIterator<Item = String>) -> (Vec<String>, Vec<(String, String)>) {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    for arg in args {
        match arg.strip_prefix("--").and_then(|a| a.split_once('=')) {
            Some((key, value)) if key.contains('.') => overrides.push((key.to_string(), value.to_string())),
            _ => rest.push(arg),
        }
    }
    (rest, overrides)
}

/// Sets a dotted key in `table`. The value is read as a TOML literal when it
/// parses as one and as a bare string otherwise.
pub fn apply_override(table: &mut toml::Table, key: &str, raw: &str) -> Result<(), CliError> {
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Validation(format!("malformed override key `{key}`")));
    }
    let (last, path) = parts.split_last().expect("split yields one part");
    let mut node = table;
    for part in path {
        let entry = node.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Validation(format!("override `{key}`: `{part}` is not a section")))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}
