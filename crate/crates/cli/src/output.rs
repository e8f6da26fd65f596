//! Bit-stable run artifacts: CSV tables with 17 significant digits and the
//! JSON manifest that makes a run reproducible.

use crate::config::Config;
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Format a float with 17 significant digits — enough to round-trip f64
/// exactly, so identical runs produce identical bytes.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        CsvTable { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "CSV row width");
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let mut out = String::new();
        out.push_str(&self.header.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        std::fs::write(path, out)
    }
}

#[derive(Serialize)]
pub struct Manifest {
    pub experiment: String,
    pub passed: bool,
    pub config_hash: String,
    pub version: String,
    pub thread_budget: Option<String>,
    pub outputs: Vec<String>,
    pub config: std::collections::BTreeMap<String, String>,
}

pub struct RunDir {
    pub dir: PathBuf,
    pub outputs: Vec<String>,
}

impl RunDir {
    pub fn create(dir: &Path) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(RunDir { dir: dir.to_path_buf(), outputs: Vec::new() })
    }

    pub fn write_csv(&mut self, name: &str, table: &CsvTable) -> std::io::Result<()> {
        table.write(&self.dir.join(name))?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    /// Emit manifest.json plus the resolved flat config, which both re-run
    /// the experiment byte-identically via `--config`.
    pub fn finalize(
        mut self,
        experiment: &str,
        config: &Config,
        passed: bool,
    ) -> std::io::Result<()> {
        let resolved = config.to_flat_text();
        std::fs::write(self.dir.join("resolved.cfg"), &resolved)?;
        self.outputs.push("resolved.cfg".to_string());
        let manifest = Manifest {
            experiment: experiment.to_string(),
            passed,
            config_hash: config.hash(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            thread_budget: std::env::var("NLS_GIBBS_THREADS").ok(),
            outputs: self.outputs.clone(),
            config: config.entries.clone(),
        };
        let mut file = std::fs::File::create(self.dir.join("manifest.json"))?;
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        file.write_all(text.as_bytes())?;
        file.write_all(b"\n")
    }
}
