//! `run.json` metadata and decomposition output directories.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dictlearn::Decomposition;
use crate::error::{Error, Result};
use crate::io::{read_matrix, write_matrix};

pub const MAPS_FILE: &str = "maps.tcdm";
pub const ATOMS_FILE: &str = "atoms.tcdm";
pub const RUN_FILE: &str = "run.json";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub command_line: Vec<String>,
    pub config: serde_json::Value,
    pub versions: BTreeMap<String, String>,
    pub seeds: Vec<u64>,
    pub elapsed_ms: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub results: serde_json::Value,
}

impl RunMetadata {
    pub fn new(command_line: Vec<String>, config: serde_json::Value) -> Self {
        let mut versions = BTreeMap::new();
        versions.insert("tcdl-core".to_owned(), env!("CARGO_PKG_VERSION").to_owned());
        Self {
            command_line,
            config,
            versions,
            ..Default::default()
        }
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        fs::write(path, s)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}

/// Summary of a fit as recorded in `run.json`.
pub fn decomposition_results(d: &Decomposition) -> serde_json::Value {
    serde_json::json!({
        "objective_value": d.objective_value,
        "lambda": d.lambda,
        "k": d.k(),
        "rows": d.temporal_atoms.nrows(),
        "p": d.spatial_maps.nrows(),
        "dead_atoms": d.report.dead_atoms,
        "dead_atom_events": d.report.dead_atom_events,
        "lasso_nonconverged": d.report.lasso_nonconverged,
        "init_singular": d.report.init_singular,
        "pruned_init_columns": d.report.pruned_init_columns,
        "epoch_objectives": d.report.epoch_objectives,
        "row_partition": d.row_partition,
    })
}

/// Writes `maps.tcdm`, `atoms.tcdm` and `run.json` into `dir`.
pub fn write_decomposition_dir(dir: impl AsRef<Path>, d: &Decomposition, meta: &RunMetadata) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    write_matrix(&d.spatial_maps, dir.join(MAPS_FILE))?;
    write_matrix(&d.temporal_atoms, dir.join(ATOMS_FILE))?;
    let mut meta = meta.clone();
    meta.results = decomposition_results(d);
    meta.warnings.extend(d.report.warnings.iter().cloned());
    meta.write(dir.join(RUN_FILE))
}

/// Resolves a run argument to its maps file: a directory holding
/// `maps.tcdm`, or a `.tcdm` file directly.
pub fn maps_path(run: impl AsRef<Path>) -> PathBuf {
    let run = run.as_ref();
    if run.is_dir() {
        run.join(MAPS_FILE)
    } else {
        run.to_path_buf()
    }
}

pub fn read_maps(run: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = maps_path(run);
    if !path.exists() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{} not found", path.display()),
        )));
    }
    read_matrix(path)
}
