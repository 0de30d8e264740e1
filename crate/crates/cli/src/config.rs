use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;
use sleepnet::experiments::{DatasetSpec, ExperimentConfig, Schedule};
use sleepnet::presets;

use crate::error::CliError;

pub const DEFAULT_DATA_ROOT: &str = "data/mnist";

/// Command-line values that override the config file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub preset: Option<String>,
    pub data_root: Option<PathBuf>,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub schedule: Option<Schedule>,
}

/// Preset, then the TOML file's keys, then flags.
///
/// The file may set `preset` and `data_root` plus any experiment field,
/// e.g. `n_trials = 5` or a `[sleep]` table with `dt = 0.001`.
pub fn resolve(file: Option<&Path>, flags: &Overrides) -> Result<ExperimentConfig, CliError> {
    let mut table = match file {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
            text.parse::<toml::Table>()
                .map_err(|e| CliError::Input(format!("invalid config {}: {e}", path.display())))?
        }
        None => toml::Table::new(),
    };
    let take_str = |t: &mut toml::Table, key: &str| -> Result<Option<String>, CliError> {
        match t.remove(key) {
            None => Ok(None),
            Some(toml::Value::String(s)) => Ok(Some(s)),
            Some(other) => Err(CliError::Input(format!("`{key}` must be a string, got {other}"))),
        }
    };
    let file_preset = take_str(&mut table, "preset")?;
    let file_root = take_str(&mut table, "data_root")?.map(PathBuf::from);
    let name = flags
        .preset
        .clone()
        .or(file_preset)
        .unwrap_or_else(|| "patches".to_string());
    let root = flags
        .data_root
        .clone()
        .or(file_root)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_ROOT));

    let base = presets::preset(&name, &root)?;
    let mut value = serde_json::to_value(&base).map_err(|e| CliError::Internal(e.to_string()))?;
    let overlay = serde_json::to_value(&table).map_err(|e| CliError::Input(e.to_string()))?;
    merge(&mut value, overlay);
    let mut cfg: ExperimentConfig = serde_json::from_value(value)
        .map_err(|e| CliError::Input(format!("invalid config: {e}")))?;

    if let DatasetSpec::Mnist { root: r, .. } = &mut cfg.dataset {
        if flags.data_root.is_some() || !table_sets_root(&table) {
            *r = root;
        }
    }
    if let Some(seed) = flags.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = flags.trials {
        cfg.n_trials = trials;
    }
    if let Some(schedule) = flags.schedule {
        cfg.schedule = schedule;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn table_sets_root(table: &toml::Table) -> bool {
    table
        .get("dataset")
        .and_then(|d| d.as_table())
        .is_some_and(|d| d.contains_key("root"))
}

/// Recursively overlays `patch` onto `base`; objects merge, anything else
/// replaces.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
