use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use crate::commands::Outcome;
use crate::config::Config;

pub const SCHEMA_VERSION: u32 = 1;

pub fn json(command: &str, cfg: &Config, seed: u64, o: &Outcome) -> String {
    let config: Map<String, Value> = cfg.entries().iter().map(|(k, v)| (k.clone(), Value::String(v.clone()))).collect();
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "seed": seed,
        "config": config,
        "verdict": o.status.label(),
        "result": o.result,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("json");
    s.push('\n');
    s
}

pub fn csv(o: &Outcome) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&o.header).expect("in-memory write");
    for row in &o.rows {
        w.write_record(row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

/// Write through a temporary file in `dir` and rename into place.
pub fn write_atomic(dir: &Path, name: &str, body: &str) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let target = dir.join(name);
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(body.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(&target).map_err(|e| e.error)?;
    Ok(target)
}
