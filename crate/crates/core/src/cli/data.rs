use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::CliError;
use crate::sparse::{read_libsvm_file, CsrMatrix};

/// Directory searched for dataset files given by relative path.
pub const DATA_DIR_ENV: &str = "CABCD_DATA_DIR";

const SIGMA_MIN_TABLE: &str = include_str!("../../data/sigma_min.toml");

/// A loaded problem: `x` is `d x n` (features by data points).
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub x: CsrMatrix,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, x: CsrMatrix, y: Vec<f64>) -> Result<Self, CliError> {
        if x.n_cols() != y.len() {
            return Err(CliError::Dataset(format!(
                "{} data points but {} labels",
                x.n_cols(),
                y.len()
            )));
        }
        Ok(Dataset {
            name: name.into(),
            x,
            y,
        })
    }

    pub fn d(&self) -> usize {
        self.x.n_rows()
    }

    pub fn n(&self) -> usize {
        self.x.n_cols()
    }
}

/// `path` itself if it exists, else `path` under `$CABCD_DATA_DIR`.
pub fn resolve_dataset_path(path: &Path) -> Result<PathBuf, CliError> {
    if path.exists() {
        return Ok(path.to_path_buf());
    }
    if path.is_relative() {
        if let Some(dir) = std::env::var_os(DATA_DIR_ENV) {
            let candidate = Path::new(&dir).join(path);
            if candidate.exists() {
                return Ok(candidate);
            }
        }
    }
    Err(CliError::Dataset(format!(
        "{} not found (also looked under ${DATA_DIR_ENV})",
        path.display()
    )))
}

/// Reads a LIBSVM file into the feature-major `d x n` form.
pub fn load_dataset(path: &Path, features: Option<usize>) -> Result<Dataset, CliError> {
    let resolved = resolve_dataset_path(path)?;
    let (x, labels) = read_libsvm_file(&resolved, features)?;
    Dataset::new(dataset_name(&resolved), x, labels)
}

/// File name up to the first dot: `news20.binary.bz2` is `news20`.
pub fn dataset_name(path: &Path) -> String {
    let file = path
        .file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_default();
    file.split('.').next().unwrap_or_default().to_string()
}

/// The shipped smallest-singular-value table, keyed by dataset name.
pub fn sigma_min_table() -> BTreeMap<String, f64> {
    toml::from_str(SIGMA_MIN_TABLE).expect("shipped sigma_min table parses")
}

pub fn sigma_min(name: &str) -> Option<f64> {
    sigma_min_table().get(name).copied()
}
