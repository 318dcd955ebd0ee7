//! Output directory layout, atomic writes and run manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use curreg_core::hashing::hash_bytes;
use curreg_core::pipeline::StudyConfig;
use serde::Serialize;

use crate::error::CliError;

/// Write via a sibling temp file and rename, so readers never see a
/// partially written artifact.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp-{}", std::process::id()));
    fs::write(&tmp, contents).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    config_hash: String,
    master_seed: u64,
    noise_seed: u64,
    jobs: usize,
    /// Output path (relative to the output directory) → content hash.
    outputs: &'a BTreeMap<String, String>,
    reused: &'a [String],
    timings_ms: &'a BTreeMap<String, u128>,
}

/// Records outputs, cache reuse and stage timings of one command.
pub struct Run {
    pub out: PathBuf,
    command: String,
    outputs: BTreeMap<String, String>,
    reused: Vec<String>,
    timings: BTreeMap<String, u128>,
    started: Instant,
}

impl Run {
    pub fn new(out: &Path, command: &str) -> Self {
        Self {
            out: out.to_path_buf(),
            command: command.to_string(),
            outputs: BTreeMap::new(),
            reused: Vec::new(),
            timings: BTreeMap::new(),
            started: Instant::now(),
        }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    pub fn write(&mut self, rel: &str, contents: &str) -> Result<(), CliError> {
        write_atomic(&self.path(rel), contents.as_bytes())?;
        self.outputs
            .insert(rel.to_string(), hash_bytes(contents.as_bytes()));
        Ok(())
    }

    /// Record an output written elsewhere (already on disk).
    pub fn record(&mut self, rel: &str, hash: String) {
        self.outputs.insert(rel.to_string(), hash);
    }

    pub fn reused(&mut self, rel: &str) {
        self.reused.push(rel.to_string());
    }

    pub fn add_timing(&mut self, stage: &str, elapsed: std::time::Duration) {
        *self.timings.entry(stage.to_string()).or_default() += elapsed.as_millis();
    }

    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        *self.timings.entry(stage.to_string()).or_default() += t.elapsed().as_millis();
        out
    }

    /// Write `manifests/<command>.json` next to the outputs.
    pub fn finish(mut self, config: &StudyConfig) -> Result<(), CliError> {
        self.timings
            .insert("total".into(), self.started.elapsed().as_millis());
        let m = Manifest {
            command: &self.command,
            version: env!("CARGO_PKG_VERSION"),
            config_hash: config.hash(),
            master_seed: config.corpus.master_seed,
            noise_seed: config.noise_seed(),
            jobs: config.execution.jobs,
            outputs: &self.outputs,
            reused: &self.reused,
            timings_ms: &self.timings,
        };
        let text = serde_json::to_string_pretty(&m).expect("manifest serializes") + "\n";
        write_atomic(
            &self.path(&format!("manifests/{}.json", self.command)),
            text.as_bytes(),
        )
    }
}

/// Load the config file (defaults when absent) and apply `key=value`
/// overrides, then validate.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<StudyConfig, CliError> {
    let text = match path {
        Some(p) => fs::read_to_string(p).map_err(|e| {
            CliError::config("--config", format!("cannot read {}: {e}", p.display()))
        })?,
        None => String::new(),
    };
    let mut table: toml::Table = match text.parse() {
        Ok(t) => t,
        // re-parse through the typed loader for a keyed message
        Err(e) => {
            return Err(match StudyConfig::from_toml(&text) {
                Err(pe) => pe.into(),
                Ok(_) => CliError::config("--config", e.to_string()),
            })
        }
    };
    for o in overrides {
        let (key, raw) = o.split_once('=').ok_or_else(|| {
            CliError::config(o.as_str(), "override must look like section.key=value")
        })?;
        let key = key.trim();
        let value = parse_value(raw.trim());
        set_path(&mut table, key, value)?;
    }
    let merged = toml::to_string(&table).map_err(|e| CliError::config("--set", e.to_string()))?;
    Ok(StudyConfig::from_toml(&merged)?)
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), CliError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::config(key, "empty key segment"));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::config(key, format!("`{p}` is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
