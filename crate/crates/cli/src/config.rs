//! Run configuration files and dotted-path overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tracklet_core::arena::TaskConfig;
use tracklet_core::marl::{ObsConfig, TrainerConfig};

use crate::CliError;

/// Environment variable naming the directory runs go to when neither
/// `--out` nor `out_dir` is given.
pub const OUT_ROOT_ENV: &str = "TRACKLET_OUT_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seeds: Vec<u64>,
    pub out_dir: Option<PathBuf>,
    pub task: TaskConfig,
    pub observation: ObsConfig,
    pub trainer: TrainerConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seeds: vec![0],
            out_dir: None,
            task: TaskConfig::default(),
            observation: ObsConfig::default(),
            trainer: TrainerConfig::default(),
        }
    }
}

impl RunConfig {
    /// Read a config file and apply `key=value` overrides in order.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
        let cfg = Self::parse(&text, overrides).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, String> {
        // parse the untouched text first so errors carry line numbers
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        if !overrides.is_empty() {
            let mut table: toml::Table = toml::from_str(text).map_err(|e| e.to_string())?;
            for ov in overrides {
                apply_override(&mut table, ov)?;
            }
            cfg = toml::Value::Table(table)
                .try_into()
                .map_err(|e: toml::de::Error| format!("after overrides: {}", e.message()))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.seeds.is_empty() {
            return Err("seeds must list at least one seed".into());
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err("seeds contain duplicates".into());
        }
        self.task.validate().map_err(|e| e.to_string())?;
        self.observation.validate(&self.task).map_err(|e| e.to_string())?;
        self.trainer.validate().map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// `--out`, then `out_dir`, then `$TRACKLET_OUT_ROOT/<name>`, then `runs/<name>`.
    pub fn resolve_out(&self, cli_out: Option<&Path>, name: &str) -> PathBuf {
        if let Some(p) = cli_out {
            return p.to_path_buf();
        }
        if let Some(p) = &self.out_dir {
            return p.clone();
        }
        match std::env::var_os(OUT_ROOT_ENV) {
            Some(root) => PathBuf::from(root).join(name),
            None => PathBuf::from("runs").join(name),
        }
    }
}

/// Set `a.b.c = value`. The value is read as a TOML literal when possible
/// and as a bare string otherwise.
pub fn apply_override(table: &mut toml::Table, ov: &str) -> Result<(), String> {
    let (key, raw) = ov.split_once('=').ok_or_else(|| format!("override {ov:?} is not key=value"))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(format!("override {ov:?} has an empty key segment"));
    }
    let raw = raw.trim();
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("key v was just parsed"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let (last, parents) = path.split_last().expect("split yields one segment");
    let mut cur = table;
    for seg in parents {
        let entry = cur.entry(seg.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| format!("override {key}: {seg} is not a table"))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
