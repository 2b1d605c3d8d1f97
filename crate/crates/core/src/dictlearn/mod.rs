//! Online dictionary learning over voxel time series.
//!
//! Minimizes `‖X − U Vᵀ‖_F² + λ‖V‖₁` subject to `‖U_j‖₂ ≤ 1` by streaming
//! the columns of `X` in a seeded random order: each batch is sparse-coded
//! against the current dictionary, the surrogate statistics are accumulated
//! and one block-coordinate cycle updates the dictionary. Final maps come
//! from a Lasso solve of every column against the last dictionary.

mod dictionary;
mod init;
mod lasso;

pub use dictionary::{dictionary_update, minimize_surrogate, surrogate_value, DlState, DEAD_ATOM_EPS};
pub use init::{init_temporal_atoms, InitOutcome};
pub use lasso::{kkt_violation, lasso_code, lasso_gram, lasso_objective, LassoOutcome};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{gaussian, l1};
use crate::rng::RngSpec;

pub const DEFAULT_BATCH_SIZE: usize = 32;
pub const DEFAULT_LASSO_TOL: f64 = 1e-8;
pub const DEFAULT_LASSO_MAX_ITER: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DlConfig {
    pub k: usize,
    pub lambda: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lasso_tol: f64,
    pub lasso_max_iter: usize,
    pub dict_update_tol: f64,
    pub rng: RngSpec,
    /// p × k initial maps; random unit-norm atoms when absent.
    #[serde(skip)]
    pub init_maps: Option<DMatrix<f64>>,
    /// Evaluate the full objective after initialization and each epoch.
    pub track_objective: bool,
}

impl DlConfig {
    pub fn new(k: usize, lambda: f64, rng: RngSpec) -> Self {
        Self {
            k,
            lambda,
            batch_size: DEFAULT_BATCH_SIZE,
            epochs: 1,
            lasso_tol: DEFAULT_LASSO_TOL,
            lasso_max_iter: DEFAULT_LASSO_MAX_ITER,
            dict_update_tol: 1e-10,
            rng,
            init_maps: None,
            track_objective: false,
        }
    }

    fn validate(&self, rows: usize, p: usize) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Usage("k must be >= 1".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Usage(format!("lambda = {} must be finite and >= 0", self.lambda)));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.lasso_max_iter == 0 {
            return Err(Error::Usage("batch_size, epochs and lasso_max_iter must be >= 1".into()));
        }
        if !(self.lasso_tol > 0.0) {
            return Err(Error::Usage("lasso_tol must be > 0".into()));
        }
        if rows < self.k {
            return Err(Error::dim(format!(
                "total_rows = {rows} < k = {}; the data cannot carry k atoms",
                self.k
            )));
        }
        if let Some(v) = &self.init_maps {
            if v.shape() != (p, self.k) {
                return Err(Error::dim(format!(
                    "initial maps are {}x{}, expected p x k = {p}x{}",
                    v.nrows(),
                    v.ncols(),
                    self.k
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Atom count after pruning zero initial maps.
    pub effective_k: usize,
    pub pruned_init_columns: Vec<usize>,
    pub init_singular: bool,
    /// Number of (atom, batch) updates skipped because `A_jj < ε`.
    pub dead_atom_events: usize,
    /// Map columns that are exactly zero in the result.
    pub dead_atoms: usize,
    pub lasso_nonconverged: usize,
    pub batches: usize,
    /// Full objective after initialization, then after each epoch.
    pub epoch_objectives: Vec<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    /// rows × k, row blocks follow `row_partition`.
    pub temporal_atoms: DMatrix<f64>,
    /// p × k.
    pub spatial_maps: DMatrix<f64>,
    pub lambda: f64,
    pub objective_value: f64,
    pub row_partition: Vec<(String, usize)>,
    pub report: FitReport,
}

/// `‖X − U Vᵀ‖_F² + λ‖V‖₁`, accumulated over column blocks.
pub fn objective(x: &DMatrix<f64>, atoms: &DMatrix<f64>, maps: &DMatrix<f64>, lambda: f64) -> f64 {
    const BLOCK: usize = 256;
    let p = x.ncols();
    let mut loss = 0.0;
    let mut start = 0;
    while start < p {
        let w = BLOCK.min(p - start);
        let mut r = x.columns(start, w).into_owned();
        r.gemm(-1.0, atoms, &maps.rows(start, w).transpose(), 1.0);
        loss += r.norm_squared();
        start += w;
    }
    loss + lambda * l1(maps)
}

impl Decomposition {
    pub fn k(&self) -> usize {
        self.spatial_maps.ncols()
    }

    /// Recomputes the objective from the stored factors.
    pub fn recompute_objective(&self, x: &DMatrix<f64>) -> f64 {
        objective(x, &self.temporal_atoms, &self.spatial_maps, self.lambda)
    }
}

struct MapsOutcome {
    maps: DMatrix<f64>,
    nonconverged: usize,
}

/// Lasso of every column of `x` against `atoms`; returns p × k maps.
fn solve_maps(x: &DMatrix<f64>, atoms: &DMatrix<f64>, cfg: &DlConfig) -> MapsOutcome {
    let k = atoms.ncols();
    let gram = atoms.tr_mul(atoms);
    let c = atoms.tr_mul(x);
    let mut codes = DMatrix::zeros(k, x.ncols());
    let mut nonconverged = 0;
    for (cj, mut vj) in c.column_iter().zip(codes.column_iter_mut()) {
        let cj: Vec<f64> = cj.iter().copied().collect();
        let (ok, _) = lasso_gram(&gram, &cj, cfg.lambda, cfg.lasso_tol, cfg.lasso_max_iter, vj.as_mut_slice());
        if !ok {
            nonconverged += 1;
        }
    }
    MapsOutcome {
        maps: codes.transpose(),
        nonconverged,
    }
}

/// Objective of the best maps for a fixed dictionary.
fn dictionary_objective(x: &DMatrix<f64>, atoms: &DMatrix<f64>, cfg: &DlConfig) -> f64 {
    let m = solve_maps(x, atoms, cfg);
    objective(x, atoms, &m.maps, cfg.lambda)
}

fn random_atoms(rows: usize, k: usize, rng: &RngSpec) -> DMatrix<f64> {
    let mut u = gaussian(rows, k, &mut rng.derive("init").rng());
    for mut c in u.column_iter_mut() {
        let n = c.norm();
        if n > 0.0 {
            c /= n;
        }
    }
    u
}

/// Fits a decomposition of the concatenated dataset.
pub fn fit(ds: &Dataset, cfg: &DlConfig) -> Result<Decomposition> {
    let partition = ds
        .records()
        .iter()
        .map(|r| (r.record_id().to_owned(), r.n_samples()))
        .collect();
    fit_matrix(&ds.concatenate(), partition, cfg)
}

/// Fits a reduced dataset; identical to [`fit`] with the reduced-rank
/// precondition spelled out.
pub fn fit_reduced(ds_r: &Dataset, cfg: &DlConfig) -> Result<Decomposition> {
    let rows = ds_r.total_rows();
    if rows < cfg.k {
        return Err(Error::dim(format!(
            "reduced data has m*t = {rows} rows < k = {}; it cannot be of rank k",
            cfg.k
        )));
    }
    fit(ds_r, cfg)
}

/// Core solver on an explicit rows × p matrix.
pub fn fit_matrix(x: &DMatrix<f64>, row_partition: Vec<(String, usize)>, cfg: &DlConfig) -> Result<Decomposition> {
    let (rows, p) = x.shape();
    cfg.validate(rows, p)?;
    let mut report = FitReport::default();

    let atoms = match &cfg.init_maps {
        Some(v) => {
            let init = init_temporal_atoms(x, v)?;
            report.pruned_init_columns = (0..v.ncols()).filter(|j| !init.kept_columns.contains(j)).collect();
            report.init_singular = init.singular;
            if init.singular {
                report
                    .warnings
                    .push("initial maps are collinear; min-norm least squares used".into());
            }
            init.atoms
        }
        None => random_atoms(rows, cfg.k, &cfg.rng),
    };
    let k = atoms.ncols();
    report.effective_k = k;
    if cfg.track_objective {
        report.epoch_objectives.push(dictionary_objective(x, &atoms, cfg));
    }

    let mut state = DlState::new(atoms);
    let mut order: Vec<usize> = (0..p).collect();
    let mut cj = vec![0.0; k];
    let mut batch_index = 0usize;
    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut cfg.rng.derive(&format!("order/epoch{epoch}")).rng());
        for chunk in order.chunks(cfg.batch_size) {
            let cols = x.select_columns(chunk);
            let u = &state.dictionary;
            let gram = u.tr_mul(u);
            let c = u.tr_mul(&cols);
            let mut codes = DMatrix::zeros(k, chunk.len());
            for (ccol, mut vcol) in c.column_iter().zip(codes.column_iter_mut()) {
                cj.copy_from_slice(ccol.as_slice());
                let (ok, _) = lasso_gram(&gram, &cj, cfg.lambda, cfg.lasso_tol, cfg.lasso_max_iter, vcol.as_mut_slice());
                if !ok {
                    report.lasso_nonconverged += 1;
                }
            }
            state.accumulate(&cols, &codes);
            state.update();
            if state.dictionary.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite dictionary entry after batch {batch_index} (epoch {epoch})"
                )));
            }
            batch_index += 1;
        }
        let (asym, min_eig) = state.check_statistics();
        let scale = state.a.amax().max(1.0);
        if asym > 1e-9 * scale || min_eig < -1e-9 * scale {
            return Err(Error::Numerical(format!(
                "surrogate statistics lost symmetry/PSD at epoch {epoch} (asym {asym:e}, min eig {min_eig:e})"
            )));
        }
        if cfg.track_objective {
            report.epoch_objectives.push(dictionary_objective(x, &state.dictionary, cfg));
        }
    }
    report.batches = batch_index;
    report.dead_atom_events = state.dead_atom_events;
    if report.lasso_nonconverged > 0 {
        report.warnings.push(format!(
            "{} streaming lasso problems hit lasso_max_iter",
            report.lasso_nonconverged
        ));
    }

    let atoms = state.dictionary;
    let maps = solve_maps(x, &atoms, cfg);
    if maps.nonconverged > 0 {
        report.lasso_nonconverged += maps.nonconverged;
        report
            .warnings
            .push(format!("{} final lasso problems hit lasso_max_iter", maps.nonconverged));
    }
    let maps = maps.maps;
    report.dead_atoms = maps.column_iter().filter(|c| c.iter().all(|&v| v == 0.0)).count();
    let objective_value = objective(x, &atoms, &maps, cfg.lambda);
    Ok(Decomposition {
        temporal_atoms: atoms,
        spatial_maps: maps,
        lambda: cfg.lambda,
        objective_value,
        row_partition,
        report,
    })
}
