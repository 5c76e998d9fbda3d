//! Output directories: CSV tables, JSON summaries and the manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

/// Only environment input: overrides the configured output directory.
pub const OUT_ENV: &str = "WSDIAG_OUT";

pub const MANIFEST: &str = "manifest.json";
pub const SUMMARY: &str = "summary.json";
pub const CONFIG_ECHO: &str = "config.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub threads: Option<usize>,
    /// File name to SHA-256, every file of the directory except the manifest.
    pub files: BTreeMap<String, String>,
}

/// What every command leaves in `summary.json` besides its own fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub command: String,
    pub verdict: String,
    pub positive: bool,
    pub exit_code: i32,
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub struct OutputDir {
    root: PathBuf,
    files: BTreeMap<String, String>,
}

impl OutputDir {
    /// The directory itself is created on the first write.
    pub fn create(root: &Path) -> Result<OutputDir> {
        Ok(OutputDir {
            root: root.to_path_buf(),
            files: BTreeMap::new(),
        })
    }

    /// Creates the directory and returns it.
    pub fn path(&self) -> &Path {
        let _ = fs::create_dir_all(&self.root);
        &self.root
    }

    /// Registers a file written by someone else (field files, sidecars).
    pub fn register(&mut self, path: &Path) -> Result<()> {
        let rel = path
            .strip_prefix(&self.root)
            .map_err(|_| CliError::Output(format!("{} is outside {}", path.display(), self.root.display())))?;
        let name = rel.to_string_lossy().replace('\\', "/");
        self.files.insert(name, hex_digest(&fs::read(path)?));
        Ok(())
    }

    /// Registers `path` and its sidecar, plus any field files referenced by the sidecar.
    pub fn register_field(&mut self, path: &Path) -> Result<()> {
        self.register(path)?;
        let side = wsdiag_core::fieldio::sidecar_path(path);
        if side.exists() {
            self.register(&side)?;
            if let Some(sc) = wsdiag_core::fieldio::read_sidecar(path)? {
                if let Some(p) = sc.pressure_file {
                    let pp = path.parent().unwrap_or(Path::new(".")).join(p);
                    self.register(&pp)?;
                    let ps = wsdiag_core::fieldio::sidecar_path(&pp);
                    if ps.exists() {
                        self.register(&ps)?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let p = self.root.join(name);
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(&p, bytes)?;
        self.files.insert(name.to_string(), hex_digest(bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write_bytes(name, s.as_bytes())
    }

    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Output(e.to_string()))?;
        self.write_bytes(name, &bytes)
    }

    /// Writes the config echo and the manifest; call last.
    pub fn finish(mut self, command: &str, cfg: &RunConfig, seeds: &[u64]) -> Result<PathBuf> {
        let echo = cfg.canonical();
        self.write_bytes(CONFIG_ECHO, echo.as_bytes())?;
        let mut seeds = seeds.to_vec();
        seeds.sort_unstable();
        seeds.dedup();
        let manifest = Manifest {
            tool: "wsdiag".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_hash: hex_digest(echo.as_bytes()),
            seeds,
            threads: cfg.threads,
            files: std::mem::take(&mut self.files),
        };
        let mut s = serde_json::to_string_pretty(&manifest)?;
        s.push('\n');
        fs::write(self.root.join(MANIFEST), s)?;
        Ok(self.root)
    }
}

/// Shortest round-trip decimal form.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:e}")
    }
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let p = dir.join(MANIFEST);
    let text = fs::read_to_string(&p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
    Ok(serde_json::from_str(&text)?)
}
