//! Per-run output directories, CSV/JSON writers and the manifest.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Shortest decimal that round-trips to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputEntry {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug)]
pub struct RunDir {
    path: PathBuf,
    outputs: Vec<OutputEntry>,
}

impl RunDir {
    /// Creates `<root>/run-<hash>-<unix seconds>`, adding a counter suffix
    /// when that name is taken.
    pub fn create(root: &Path, hash: &str) -> io::Result<Self> {
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        fs::create_dir_all(root)?;
        let base = format!("run-{hash}-{secs}");
        let mut path = root.join(&base);
        let mut k = 1;
        loop {
            match fs::create_dir(&path) {
                Ok(()) => break,
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                    path = root.join(format!("{base}-{k}"));
                    k += 1;
                }
                Err(e) => return Err(e),
            }
        }
        Ok(RunDir { path, outputs: Vec::new() })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn outputs(&self) -> &[OutputEntry] {
        &self.outputs
    }

    fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> io::Result<()> {
        fs::write(self.path.join(name), bytes)?;
        self.outputs.push(OutputEntry { file: name.to_string(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 });
        Ok(())
    }

    /// Comma-separated, LF-terminated.
    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> io::Result<()> {
        let mut text = header.join(",");
        text.push('\n');
        for row in rows {
            text.push_str(&row.join(","));
            text.push('\n');
        }
        self.write_bytes(name, text.as_bytes())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> io::Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    /// Writes `manifest.json`; it is not listed among its own outputs.
    pub fn write_manifest<T: Serialize>(&self, manifest: &T) -> io::Result<()> {
        let mut text = serde_json::to_string_pretty(manifest).map_err(io::Error::other)?;
        text.push('\n');
        fs::write(self.path.join("manifest.json"), text)
    }
}
