//! Output directory writer: every file is tagged with the config hash and
//! listed in `manifest.json` next to `resolved_config.toml`.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use hypee::data::write_atomic;

use crate::config::RunConfig;
use crate::error::CliError;

pub struct OutputDir {
    dir: PathBuf,
    hash: String,
    resolved: String,
    files: Vec<Value>,
}

impl OutputDir {
    pub fn create(dir: &Path, cfg: &RunConfig) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("cannot create output directory {}: {e}", dir.display())))?;
        Ok(OutputDir {
            dir: dir.to_path_buf(),
            hash: cfg.hash(),
            resolved: cfg.resolved_toml(),
            files: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Lists a file written by other means.
    pub fn register(&mut self, name: &str, kind: &str) {
        self.files.push(json!({ "file": name, "kind": kind, "config_hash": self.hash }));
    }

    fn write(&mut self, name: &str, kind: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        write_atomic(&path, bytes)?;
        self.register(name, kind);
        Ok(path)
    }

    /// Object with a `config_hash` field added at the top level.
    pub fn json(&mut self, name: &str, value: &impl Serialize) -> Result<String, CliError> {
        let mut v = serde_json::to_value(value)?;
        match &mut v {
            Value::Object(map) => {
                map.insert("config_hash".into(), Value::String(self.hash.clone()));
            }
            other => v = json!({ "config_hash": self.hash, "value": other.take() }),
        }
        let text = serde_json::to_string_pretty(&v)? + "\n";
        self.write(name, "json", text.as_bytes())?;
        Ok(text)
    }

    /// One JSON object per line, each carrying `config_hash`.
    pub fn jsonl(&mut self, name: &str, rows: &[Value]) -> Result<(), CliError> {
        let mut text = String::new();
        for row in rows {
            let mut row = row.clone();
            if let Value::Object(map) = &mut row {
                map.insert("config_hash".into(), Value::String(self.hash.clone()));
            }
            text.push_str(&serde_json::to_string(&row)?);
            text.push('\n');
        }
        self.write(name, "jsonl", text.as_bytes())?;
        Ok(())
    }

    /// Header-first CSV with a trailing `config_hash` column.
    pub fn csv(&mut self, name: &str, text: &str) -> Result<String, CliError> {
        let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
        let mut writer = csv::Writer::from_writer(Vec::new());
        for (i, record) in reader.records().enumerate() {
            let mut record = record?;
            record.push_field(if i == 0 { "config_hash" } else { &self.hash });
            writer.write_record(&record)?;
        }
        let bytes = writer.into_inner().map_err(|e| CliError::Data(e.to_string()))?;
        self.write(name, "csv", &bytes)?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn file(&mut self, name: &str, kind: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        self.write(name, kind, bytes)
    }

    /// Writes `resolved_config.toml` and `manifest.json`.
    pub fn finish(mut self, command: &str) -> Result<(), CliError> {
        let resolved = std::mem::take(&mut self.resolved);
        write_atomic(&self.dir.join("resolved_config.toml"), resolved.as_bytes())?;
        let manifest = json!({
            "command": command,
            "config_hash": self.hash,
            "resolved_config": "resolved_config.toml",
            "files": self.files,
        });
        write_atomic(&self.dir.join("manifest.json"), (serde_json::to_string_pretty(&manifest)? + "\n").as_bytes())?;
        Ok(())
    }
}
