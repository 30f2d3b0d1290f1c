//! Run configuration: a TOML document holding the run name, paths, and a
//! `[train]` table mirroring the training options.
//!
//! Precedence is command line (`--set key=value`) over the seed environment
//! variable over the file over built-in defaults.

use std::fs;
use std::path::{Path, PathBuf};

use nocollapse_core::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{io_failure, CliResult, Failure};

/// Overrides `train.init_seed` and `train.batch_seed` (and the split seed of
/// `prepare`) when set.
pub const SEED_ENV: &str = "NOCOLLAPSE_SEED";

const TOP_LEVEL_KEYS: [&str; 5] = ["name", "data_dir", "checkpoint_dir", "report_dir", "train"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    /// Prepared dataset snapshot.
    pub data_dir: PathBuf,
    /// Defaults to `<report_dir>/checkpoint`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_dir: Option<PathBuf>,
    /// Defaults to `runs/<name>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report_dir: Option<PathBuf>,
    #[serde(default)]
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn report_dir(&self) -> PathBuf {
        self.report_dir.clone().unwrap_or_else(|| Path::new("runs").join(&self.name))
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.checkpoint_dir.clone().unwrap_or_else(|| self.report_dir().join("checkpoint"))
    }

    /// Reads `path`, applies the seed override and `overrides`, and
    /// validates the result.
    pub fn load(path: &Path, overrides: &[String], env_seed: Option<u64>) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
        let mut table: toml::Table = toml::from_str(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
        if let Some(seed) = env_seed {
            let seed = toml::Value::Integer(seed as i64);
            set_path(&mut table, &["train", "init_seed"], seed.clone())?;
            set_path(&mut table, &["train", "batch_seed"], seed)?;
        }
        for kv in overrides {
            apply_override(&mut table, kv)?;
        }
        let config: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
        config.train.validate()?;
        if config.name.is_empty() || config.name.contains(['/', '\\']) {
            return Err(Failure::usage(format!("run name {:?} must be non-empty and contain no path separators", config.name)));
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Reads the seed override from the environment.
pub fn env_seed() -> CliResult<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Failure::usage(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

/// Parses a right-hand side as a TOML value, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()))
}

/// Applies one `key=value` override. Dotted keys address nested tables;
/// keys that are not top-level fields refer to the `[train]` table.
pub fn apply_override(table: &mut toml::Table, kv: &str) -> CliResult<()> {
    let (key, raw) = kv
        .split_once('=')
        .ok_or_else(|| Failure::usage(format!("override {kv:?} is not of the form key=value")))?;
    let mut path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Failure::usage(format!("bad override key {key:?}")));
    }
    if !TOP_LEVEL_KEYS.contains(&path[0]) {
        path.insert(0, "train");
    }
    set_path(table, &path, parse_value(raw.trim()))
}

fn set_path(table: &mut toml::Table, path: &[&str], value: toml::Value) -> CliResult<()> {
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut cur = table;
    for p in parents {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Failure::usage(format!("cannot set {} inside non-table {p:?}", path.join("."))))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
