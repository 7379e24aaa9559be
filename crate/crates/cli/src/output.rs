//! Artifact writers. Every float goes through [`fmt_f64`] so that the
//! files round-trip exactly and are byte-identical across runs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use linhop_core::stats::TestReport;
use linhop_core::PathSet;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::CliError;

/// Shortest decimal string that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else if v.is_finite() {
        format!("{v:e}")
    } else {
        // NaN and infinities as Python's float() spells them
        format!("{v}").to_lowercase()
    }
}

pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn csv(&self, name: &str, header: &[&str]) -> Result<CsvTable, CliError> {
        let path = self.path(name);
        let mut writer = csv::Writer::from_path(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        writer.write_record(header).map_err(|e| CliError::Io(e.to_string()))?;
        Ok(CsvTable { writer, width: header.len() })
    }

    pub fn write_manifest(&self, command: &str, config: &ExperimentConfig) -> Result<(), CliError> {
        #[derive(Serialize)]
        struct Manifest<'a> {
            tool: &'static str,
            version: &'static str,
            command: &'a str,
            created_unix: u64,
            config: &'a ExperimentConfig,
            limit: linhop_core::LimitParams,
        }
        let created_unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        let manifest = Manifest {
            tool: "linhop",
            version: env!("CARGO_PKG_VERSION"),
            command,
            created_unix,
            config,
            limit: config.limit_params(),
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
        let path = self.path("manifest.json");
        fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))
    }

    pub fn write_reports(&self, reports: &[TestReport]) -> Result<(), CliError> {
        let path = self.path("reports.jsonl");
        let mut file = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
        for r in reports {
            writeln!(file, "{}", r.to_json_line()).map_err(|e| io_err(&path, e))?;
        }
        Ok(())
    }

    /// `trajectories.csv` with columns `replica, coord, time, value`.
    pub fn write_paths(&self, paths: &PathSet) -> Result<(), CliError> {
        let mut table = self.csv("trajectories.csv", &["replica", "coord", "time", "value"])?;
        for (r, c, t, v) in paths.rows() {
            table.row(&[r.to_string(), c.to_string(), fmt_f64(t), fmt_f64(v)])?;
        }
        table.finish()
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub struct CsvTable {
    writer: csv::Writer<fs::File>,
    width: usize,
}

impl CsvTable {
    pub fn row(&mut self, fields: &[String]) -> Result<(), CliError> {
        debug_assert_eq!(fields.len(), self.width);
        self.writer.write_record(fields).map_err(|e| CliError::Io(e.to_string()))
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.writer.flush().map_err(|e| CliError::Io(e.to_string()))
    }
}
