//! Run headers: every file the CLI writes starts with (or embeds) a `_meta`
//! object naming the tool version, the command and the SHA-256 of each input.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ccl_core::embedstore::{meta_path, read_store, vec_path, EmbeddingStore};
use ccl_core::io::{atomic_write, sha256_hex};
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::CliError;

#[derive(Debug)]
pub struct Run {
    command: &'static str,
    seed: Option<u64>,
    config: Value,
    inputs: BTreeMap<String, String>,
}

impl Run {
    /// `config` is echoed into every header so a run can be repeated.
    pub fn new<C: Serialize>(command: &'static str, config: &C) -> Self {
        Run {
            command,
            seed: None,
            config: serde_json::to_value(config).expect("config serializes"),
            inputs: BTreeMap::new(),
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    /// Read an input file and record its hash under `role`.
    pub fn read(&mut self, role: &str, path: &Path) -> Result<String, CliError> {
        let raw = fs::read(path).map_err(|e| CliError::from(e).context(format!("{role} file {}", path.display())))?;
        self.inputs.insert(role.to_string(), sha256_hex(&raw));
        String::from_utf8(raw).map_err(|_| CliError::malformed(format!("{role} file {} is not UTF-8", path.display())))
    }

    /// Load a store; its hash covers both the meta and vector files.
    pub fn store(&mut self, base: &Path) -> Result<EmbeddingStore, CliError> {
        let ctx = || format!("store {}", base.display());
        let (store, _) = read_store(base).map_err(|e| CliError::from(e).context(ctx()))?;
        let mut both = fs::read(meta_path(base))?;
        both.extend(fs::read(vec_path(base))?);
        self.inputs.insert("store".to_string(), sha256_hex(&both));
        Ok(store)
    }

    pub fn header(&self) -> Value {
        let mut meta = json!({
            "tool": "ccl",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "config": self.config,
            "inputs": self.inputs,
        });
        if let Some(s) = self.seed {
            meta["seed"] = json!(s);
        }
        meta
    }

    /// `{"_meta": ...}` as a single JSONL line, newline included.
    pub fn header_line(&self) -> String {
        json!({ "_meta": self.header() }).to_string() + "\n"
    }

    /// Write a report document atomically.
    pub fn write_report<R: Serialize>(&self, path: &Path, kind: &str, report: &R) -> Result<(), CliError> {
        let doc = json!({
            "_meta": self.header(),
            "kind": kind,
            "config": self.config,
            "report": report,
        });
        let mut text = serde_json::to_string_pretty(&doc).expect("report serializes");
        text.push('\n');
        write(path, text.as_bytes())
    }
}

pub fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    atomic_write(path, bytes).map_err(|e| CliError::from(e).context(format!("writing {}", path.display())))
}
