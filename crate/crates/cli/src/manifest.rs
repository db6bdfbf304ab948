//! Run manifests and manifest-stamped output files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Serialize)]
pub struct Stage {
    pub name: String,
    pub seconds: f64,
}

/// Provenance record written once per command invocation. Wall times live
/// here rather than in the CSVs so reruns give byte-identical tables.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_sha256: String,
    pub presets: BTreeMap<String, String>,
    pub seeds: BTreeMap<String, u64>,
    pub stages: Vec<Stage>,
    /// Paths relative to the output directory.
    pub outputs: Vec<String>,
}

/// Output directory plus the manifest that will describe it.
pub struct Run {
    pub dir: PathBuf,
    pub manifest: RunManifest,
}

impl Run {
    pub fn new(dir: &Path, command: &str, config_sha256: &str) -> CliResult<Self> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest: RunManifest {
                tool: env!("CARGO_PKG_NAME").into(),
                version: env!("CARGO_PKG_VERSION").into(),
                command: command.into(),
                config_sha256: config_sha256.into(),
                presets: BTreeMap::new(),
                seeds: BTreeMap::new(),
                stages: Vec::new(),
                outputs: Vec::new(),
            },
        })
    }

    pub fn manifest_name(&self) -> String {
        format!("manifest-{}.toml", self.manifest.command)
    }

    pub fn preset(&mut self, key: &str, value: impl Into<String>) {
        self.manifest.presets.insert(key.into(), value.into());
    }

    pub fn seed(&mut self, key: &str, value: u64) {
        self.manifest.seeds.insert(key.into(), value);
    }

    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.manifest.stages.push(Stage { name: name.into(), seconds: t.elapsed().as_secs_f64() });
        out
    }

    fn register(&mut self, rel: &str) -> CliResult<PathBuf> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        if !self.manifest.outputs.iter().any(|o| o == rel) {
            self.manifest.outputs.push(rel.into());
        }
        Ok(path)
    }

    pub fn write_text(&mut self, rel: &str, text: &str) -> CliResult<PathBuf> {
        let path = self.register(rel)?;
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    /// CSV with a leading `#` line naming the producing manifest.
    pub fn write_csv(&mut self, rel: &str, header: &[&str], rows: &[Vec<String>]) -> CliResult<PathBuf> {
        let stamp = format!("# manifest={} config_sha256={}\n", self.manifest_name(), self.manifest.config_sha256);
        let mut w = csv::Writer::from_writer(stamp.into_bytes());
        let err = |e: csv::Error| CliError::Config(format!("{rel}: {e}"));
        w.write_record(header).map_err(err)?;
        for r in rows {
            w.write_record(r).map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Config(format!("{rel}: {e}")))?;
        let text = String::from_utf8(bytes).expect("csv output is utf-8");
        self.write_text(rel, &text)
    }

    pub fn finish(self) -> CliResult<PathBuf> {
        let path = self.dir.join(self.manifest_name());
        let text = toml::to_string(&self.manifest).map_err(|e| CliError::Config(e.to_string()))?;
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

/// Reads a manifest-stamped CSV into header and rows.
pub fn read_csv(path: &Path) -> CliResult<(Vec<String>, Vec<Vec<String>>)> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let header = r.headers().map_err(|e| CliError::Config(e.to_string()))?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec.map_err(|e| CliError::Config(e.to_string()))?.iter().map(String::from).collect());
    }
    Ok((header, rows))
}

/// Fixed-precision formatting for values reported in thousands.
pub fn k(x: f64) -> String {
    format!("{:.6}", x / 1e3)
}

pub fn sci(x: f64) -> String {
    format!("{x:.6e}")
}
