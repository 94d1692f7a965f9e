//! Output directory handling: config hashes, tables, JSON records, manifests
//! and the constants cache.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use fracbubble::constants::{resolve_constants, ConstantSet};
use fracbubble::green::format_float;
use fracbubble::{Error, FracParams, Result};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

pub const CACHE_ENV: &str = "FRACBUBBLE_CACHE_DIR";
const PREAMBLE: &str = "# config_hash=";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn config_hash(cfg: &ExperimentConfig) -> String {
    sha256_hex(cfg.canonical().as_bytes())
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

pub struct Output {
    pub dir: PathBuf,
    pub hash: String,
    files: Vec<String>,
}

impl Output {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let dir = cfg.run.output.clone();
        std::fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
        Ok(Output { dir, hash: config_hash(cfg), files: Vec::new() })
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|e| io_error(&path, e))?;
        self.files.push(name.to_string());
        Ok(BufWriter::new(file))
    }

    pub fn preamble(&self) -> String {
        format!("{PREAMBLE}{}", self.hash)
    }

    /// Writes `value` with a leading `config_hash` field.
    pub fn write_json(&mut self, name: &str, value: Value) -> Result<()> {
        let mut record = serde_json::Map::new();
        record.insert("config_hash".into(), Value::String(self.hash.clone()));
        match value {
            Value::Object(map) => record.extend(map),
            other => {
                record.insert("data".into(), other);
            }
        }
        let mut out = self.create(name)?;
        serde_json::to_writer_pretty(&mut out, &Value::Object(record))?;
        writeln!(out)?;
        out.flush()?;
        Ok(())
    }

    /// Comma-separated table with the hash preamble and one header row.
    pub fn write_table(&mut self, name: &str, header: &[String], rows: &[Vec<f64>]) -> Result<()> {
        let preamble = self.preamble();
        let mut out = self.create(name)?;
        writeln!(out, "{preamble}")?;
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e.to_string()));
        w.write_record(header).map_err(csv_err)?;
        for row in rows {
            w.write_record(row.iter().map(|v| format_float(*v))).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Opens a file for a writer that adds its own preamble.
    pub fn raw(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.create(name)
    }

    pub fn write_manifest(&mut self, command: &str, cfg: &ExperimentConfig, timings: &BTreeMap<String, f64>) -> Result<()> {
        let files = self.files.clone();
        let value = json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "core_version": fracbubble::VERSION,
            "threads": rayon::current_num_threads(),
            "seed": cfg.run.seed,
            "files": files,
            "timings_seconds": timings,
            "config": serde_json::from_str::<Value>(&cfg.canonical())?,
        });
        self.write_json(&format!("{command}.manifest.json"), value)
    }
}

/// Config hashes found in the outputs of `dir`, keyed by file name.
pub fn hashes_in(dir: &Path) -> Result<BTreeMap<String, String>> {
    let mut found = BTreeMap::new();
    let Ok(entries) = std::fs::read_dir(dir) else {
        return Ok(found);
    };
    for entry in entries {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        let hash = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => {
                let text = std::fs::read_to_string(&path).map_err(|e| io_error(&path, e))?;
                serde_json::from_str::<Value>(&text)
                    .ok()
                    .and_then(|v| v.get("config_hash").and_then(|h| h.as_str()).map(String::from))
            }
            Some("csv") => {
                let file = File::open(&path).map_err(|e| io_error(&path, e))?;
                let mut first = String::new();
                BufReader::new(file).read_line(&mut first)?;
                first.trim_end().strip_prefix(PREAMBLE).map(String::from)
            }
            _ => None,
        };
        if let Some(h) = hash {
            found.insert(name, h);
        }
    }
    Ok(found)
}

/// Constants for `params`, read from the cache directory when one is set and
/// holds a matching record, resolved (and stored) otherwise.
pub fn constants(params: &FracParams, tol: f64) -> Result<ConstantSet> {
    let Some(dir) = std::env::var_os(CACHE_ENV).map(PathBuf::from) else {
        return resolve_constants(params, tol);
    };
    let key = sha256_hex(format!("constants|n={}|s={:.17e}|tol={:.17e}", params.n, params.s, tol).as_bytes());
    let path = dir.join(format!("constants-{}.json", &key[..16]));
    if let Ok(text) = std::fs::read_to_string(&path) {
        if let Ok(c) = serde_json::from_str::<ConstantSet>(&text) {
            if c.ensure_matches(params).is_ok() && c.tol == tol {
                return Ok(c);
            }
        }
    }
    let c = resolve_constants(params, tol)?;
    std::fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
    std::fs::write(&path, serde_json::to_string(&c)?).map_err(|e| io_error(&path, e))?;
    Ok(c)
}
