//! Run directories: data files, `summary.json` and `manifest.json`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::spec::ExperimentSpec;

/// One pass/fail line of a summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// The measured quantity (NaN serializes as `null`).
    pub value: f64,
    /// Human-readable limit, e.g. `"<= 1e-8"`.
    pub limit: String,
}

impl Check {
    pub fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            passed: value <= limit,
            value,
            limit: format!("<= {limit:e}"),
        }
    }

    pub fn at_least(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            passed: value >= limit,
            value,
            limit: format!(">= {limit:e}"),
        }
    }

    pub fn within(name: &str, value: f64, lo: f64, hi: f64) -> Self {
        Self {
            name: name.into(),
            passed: value >= lo && value <= hi,
            value,
            limit: format!("in [{lo}, {hi}]"),
        }
    }

    pub fn holds(name: &str, passed: bool, value: f64, limit: &str) -> Self {
        Self {
            name: name.into(),
            passed,
            value,
            limit: limit.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub kind: String,
    pub seed: Option<u64>,
    pub passed: bool,
    pub checks: Vec<Check>,
    /// Experiment-specific results (tables, fitted slopes).
    pub results: serde_json::Value,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: String,
    pub seed: Option<u64>,
    pub config: ExperimentSpec,
    pub versions: Versions,
    pub threads: usize,
    pub wall_time_s: f64,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Versions {
    pub rootflow_core: String,
    pub rootflow_lab: String,
}

impl Versions {
    pub fn current() -> Self {
        Self {
            rootflow_core: rootflow_core::VERSION.into(),
            rootflow_lab: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

/// An output directory that only writes beneath its root.
#[derive(Debug)]
pub struct RunDir {
    root: PathBuf,
    files: Vec<String>,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|source| LabError::Io {
            path: root.display().to_string(),
            source,
        })?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    /// Writes `name` (a plain file name) through a buffered writer.
    pub fn write<F>(&mut self, name: &str, body: F) -> Result<()>
    where
        F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
    {
        if name.contains(['/', '\\']) || name.starts_with('.') {
            return Err(LabError::Config(format!("output name {name:?} must be a plain file name")));
        }
        let path = self.root.join(name);
        let io_err = |source| LabError::Io {
            path: path.display().to_string(),
            source,
        };
        let file = File::create(&path).map_err(io_err)?;
        let mut w = BufWriter::new(file);
        body(&mut w).and_then(|_| w.flush()).map_err(io_err)?;
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)
        })
    }
}
