//! `manifest.json`: what ran, with which inputs, producing which files.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: PathBuf,
    pub bytes: u64,
}

impl FileEntry {
    pub fn of(path: &Path) -> Self {
        let bytes = std::fs::metadata(path).map(|m| m.len()).unwrap_or(0);
        FileEntry {
            path: path.to_path_buf(),
            bytes,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Arguments after the program name, replayable verbatim.
    pub argv: Vec<String>,
    pub version: String,
    pub config: serde_json::Value,
    pub seeds: serde_json::Value,
    pub inputs: Vec<FileEntry>,
    pub outputs: Vec<FileEntry>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub status: String,
}

pub fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

impl RunManifest {
    pub fn new(command: &str, argv: &[String]) -> Self {
        RunManifest {
            command: command.to_string(),
            argv: argv.to_vec(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: serde_json::Value::Null,
            seeds: serde_json::json!({}),
            inputs: Vec::new(),
            outputs: Vec::new(),
            started_unix_ms: now_ms(),
            finished_unix_ms: 0,
            status: "ok".into(),
        }
    }

    pub fn input(&mut self, p: &Path) {
        self.inputs.push(FileEntry::of(p));
    }

    pub fn output(&mut self, p: &Path) {
        self.outputs.push(FileEntry::of(p));
    }

    pub fn write(mut self, dir: &Path) -> std::io::Result<PathBuf> {
        self.finished_unix_ms = now_ms();
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&self).map_err(std::io::Error::other)?;
        std::fs::write(&path, text)?;
        Ok(path)
    }

    pub fn read(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

/// `argv` with the `--out` value replaced.
pub fn with_out(argv: &[String], out: &Path) -> Vec<String> {
    let out_s = out.display().to_string();
    let mut res = Vec::with_capacity(argv.len() + 2);
    let mut replaced = false;
    let mut i = 0;
    while i < argv.len() {
        let a = &argv[i];
        if a == "--out" {
            res.push(a.clone());
            res.push(out_s.clone());
            i += 2;
            replaced = true;
            continue;
        }
        if a.starts_with("--out=") {
            res.push(format!("--out={out_s}"));
            replaced = true;
        } else {
            res.push(a.clone());
        }
        i += 1;
    }
    if !replaced {
        res.push("--out".into());
        res.push(out_s);
    }
    res
}
