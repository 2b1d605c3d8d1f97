//! `experiment.json` schema.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dictlearn::{DEFAULT_BATCH_SIZE, DEFAULT_LASSO_MAX_ITER, DEFAULT_LASSO_TOL};
use crate::error::{Error, Result};
use crate::reduction::{ReducedSize, ReductionMethod, DEFAULT_OVERSAMPLE, DEFAULT_POWER_ITERS};

/// A full experiment.
///
/// ```json
/// {
///   "dataset": "ds.tcdl",
///   "k": 5,
///   "reference": { "lambda_ref": 0.5, "n_runs_ref": 40, "seeds": [0, 1, ...] },
///   "baseline":  { "n_runs": 10, "seeds": [100, 101, ...] },
///   "candidates": [
///     { "method": "rf", "alpha": 0.25, "lambda_grid": [0.3, 0.5], "n_runs": 10, "seeds": [200, ...] }
///   ],
///   "l": 10,
///   "l_values": [1, 2, 5, 10],
///   "output": "results/"
/// }
/// ```
///
/// Optional fields: `init_maps` (a `.tcdm` file, p × k, used to initialize
/// every fit), `dl` (solver settings), `reduction` (range-finder settings
/// and seed) and `write_runs` (`"none"`, `"best"` or `"all"`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub dataset: PathBuf,
    pub k: usize,
    pub reference: ReferenceSpec,
    pub baseline: ArmRuns,
    #[serde(default)]
    pub candidates: Vec<CandidateSpec>,
    /// Runs per side for the tradeoff `d_l`.
    pub l: usize,
    #[serde(default)]
    pub l_values: Vec<usize>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub init_maps: Option<PathBuf>,
    #[serde(default)]
    pub dl: DlSettings,
    #[serde(default)]
    pub reduction: ReductionSettings,
    #[serde(default)]
    pub write_runs: WriteRuns,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSpec {
    pub lambda_ref: f64,
    pub n_runs_ref: usize,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmRuns {
    pub n_runs: usize,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateSpec {
    pub method: ReductionMethod,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub m: Option<usize>,
    /// Defaults to a log grid around `lambda_ref · m / n`.
    #[serde(default)]
    pub lambda_grid: Option<Vec<f64>>,
    pub n_runs: usize,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DlSettings {
    pub batch_size: usize,
    pub epochs: usize,
    pub lasso_tol: f64,
    pub lasso_max_iter: usize,
}

impl Default for DlSettings {
    fn default() -> Self {
        Self {
            batch_size: DEFAULT_BATCH_SIZE,
            epochs: 1,
            lasso_tol: DEFAULT_LASSO_TOL,
            lasso_max_iter: DEFAULT_LASSO_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReductionSettings {
    pub oversample: usize,
    pub power_iters: usize,
    pub seed: u64,
}

impl Default for ReductionSettings {
    fn default() -> Self {
        Self {
            oversample: DEFAULT_OVERSAMPLE,
            power_iters: DEFAULT_POWER_ITERS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WriteRuns {
    None,
    #[default]
    Best,
    All,
}

impl CandidateSpec {
    pub fn size(&self) -> Result<ReducedSize> {
        match (self.alpha, self.m) {
            (Some(a), None) => Ok(ReducedSize::Ratio(a)),
            (None, Some(m)) => Ok(ReducedSize::Rows(m)),
            _ => Err(Error::Usage(format!(
                "candidate {:?}: set exactly one of alpha / m",
                self.method
            ))),
        }
    }

    /// Stable label used in CSVs and run directories.
    pub fn label(&self) -> String {
        match (self.alpha, self.m) {
            (Some(a), _) => format!("{}_alpha{}", self.method.short_name(), a),
            (_, Some(m)) => format!("{}_m{}", self.method.short_name(), m),
            _ => self.method.short_name().to_owned(),
        }
    }
}

/// `center · 10^(i/7)` for `i ∈ [−7, 7]`.
pub fn default_lambda_grid(center: f64) -> Vec<f64> {
    (-7i32..=7).map(|i| center * 10f64.powf(i as f64 / 7.0)).collect()
}

fn check_arm(name: &str, n_runs: usize, seeds: &[u64]) -> Result<()> {
    if n_runs == 0 {
        return Err(Error::Usage(format!("{name}: n_runs must be >= 1")));
    }
    if seeds.len() < n_runs {
        return Err(Error::Usage(format!(
            "{name}: n_runs = {n_runs} but only {} seeds given",
            seeds.len()
        )));
    }
    let uniq: BTreeSet<_> = seeds[..n_runs].iter().collect();
    if uniq.len() != n_runs {
        return Err(Error::Usage(format!("{name}: seeds must be distinct")));
    }
    Ok(())
}

impl ExperimentSpec {
    /// Reads a spec; relative paths resolve against the spec's directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut spec: ExperimentSpec = serde_json::from_slice(&fs::read(path)?)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut spec.dataset);
        if let Some(p) = spec.init_maps.as_mut() {
            resolve(p);
        }
        if let Some(p) = spec.output.as_mut() {
            resolve(p);
        }
        Ok(spec)
    }

    pub fn reference_seeds(&self) -> &[u64] {
        &self.reference.seeds[..self.reference.n_runs_ref.min(self.reference.seeds.len())]
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Usage("k must be >= 1".into()));
        }
        if !(self.reference.lambda_ref >= 0.0) {
            return Err(Error::Usage("lambda_ref must be >= 0".into()));
        }
        check_arm("reference", self.reference.n_runs_ref, &self.reference.seeds)?;
        check_arm("baseline", self.baseline.n_runs, &self.baseline.seeds)?;
        if self.l == 0 {
            return Err(Error::Usage("l must be >= 1".into()));
        }
        let need = |name: &str, have: usize, l: usize| -> Result<()> {
            if have < l {
                return Err(Error::Usage(format!("{name} has {have} runs, l = {l} needs {} more", l - have)));
            }
            Ok(())
        };
        need("reference", self.reference.n_runs_ref, self.l)?;
        need("baseline", self.baseline.n_runs, self.l)?;
        let reference: BTreeSet<u64> = self.reference_seeds().iter().copied().collect();
        let overlap = |name: &str, seeds: &[u64]| -> Result<()> {
            if let Some(s) = seeds.iter().find(|s| reference.contains(s)) {
                return Err(Error::Usage(format!(
                    "{name} reuses reference seed {s}; reference and candidate runs must be disjoint"
                )));
            }
            Ok(())
        };
        overlap("baseline", &self.baseline.seeds[..self.baseline.n_runs])?;
        for c in &self.candidates {
            let label = c.label();
            c.size()?;
            check_arm(&label, c.n_runs, &c.seeds)?;
            need(&label, c.n_runs, self.l)?;
            overlap(&label, &c.seeds[..c.n_runs])?;
            if let Some(g) = &c.lambda_grid {
                if g.is_empty() || g.iter().any(|l| !(*l >= 0.0)) {
                    return Err(Error::Usage(format!("{label}: lambda_grid must be nonempty and >= 0")));
                }
            }
        }
        if self.l_values.contains(&0) {
            return Err(Error::Usage("l_values must be >= 1".into()));
        }
        Ok(())
    }
}
