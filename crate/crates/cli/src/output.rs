use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::Serialize;

use crate::CliError;

/// Writes `<dir>/<stem>.json` and sibling artifacts.
pub struct Output {
    dir: PathBuf,
    stem: String,
    pub csv: bool,
}

impl Output {
    pub fn new(dir: &Path, stem: String, csv: bool) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|source| CliError::io(dir, source))?;
        Ok(Output {
            dir: dir.to_path_buf(),
            stem,
            csv,
        })
    }

    fn path(&self, suffix: &str) -> PathBuf {
        self.dir.join(format!("{}{suffix}", self.stem))
    }

    pub fn write(&self, suffix: &str, contents: &str) -> Result<PathBuf, CliError> {
        let path = self.path(suffix);
        fs::write(&path, contents).map_err(|source| CliError::io(&path, source))?;
        log::info!("wrote {}", path.display());
        Ok(path)
    }

    pub fn json<T: Serialize>(&self, suffix: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::Usage(format!("cannot encode output: {e}")))?;
        text.push('\n');
        self.write(suffix, &text)
    }

    pub fn payload<T: Serialize>(&self, value: &T) -> Result<PathBuf, CliError> {
        self.json(".json", value)
    }

    /// Writes `<stem>.csv` when CSV output was requested.
    pub fn table(&self, contents: &str) -> Result<Option<PathBuf>, CliError> {
        if self.csv {
            self.write(".csv", contents).map(Some)
        } else {
            Ok(None)
        }
    }
}

pub fn matrix_csv(m: &Array2<f64>) -> String {
    let mut out = String::new();
    for row in m.rows() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn vector_csv(v: &Array1<f64>) -> String {
    let mut out = String::new();
    for x in v {
        let _ = writeln!(out, "{x}");
    }
    out
}
