//! Per-record compression of the time dimension.
//!
//! Each record `X^s` (n_s × p) is replaced by `m` rows that summarize it:
//! the exact top-`m` left singular subspace, a randomized range-finder
//! approximation of it, or an evenly strided subsample of time points.
//! Applied per record, the reduced dataset concatenates to `P̂·X` with
//! block-diagonal `P̂`.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cputime::timed;
use crate::data::{Dataset, RecordMatrix};
use crate::error::{Error, Result};
use crate::linalg::{fro_sq, gaussian, orthonormalize};
use crate::rng::RngSpec;

pub const DEFAULT_OVERSAMPLE: usize = 10;
pub const DEFAULT_POWER_ITERS: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReductionMethod {
    #[serde(alias = "svd")]
    ExactSvd,
    #[serde(alias = "rf")]
    RangeFinder,
    #[serde(alias = "ss")]
    Subsample,
}

impl ReductionMethod {
    pub fn short_name(self) -> &'static str {
        match self {
            ReductionMethod::ExactSvd => "svd",
            ReductionMethod::RangeFinder => "rf",
            ReductionMethod::Subsample => "ss",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "svd" | "exact_svd" => Some(ReductionMethod::ExactSvd),
            "rf" | "range_finder" => Some(ReductionMethod::RangeFinder),
            "ss" | "subsample" => Some(ReductionMethod::Subsample),
            _ => None,
        }
    }
}

/// Target size of a reduction: a fixed row count or a ratio of `n_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReducedSize {
    Rows(usize),
    Ratio(f64),
}

impl ReducedSize {
    /// `m` for a record with `n_s` samples. Ratios round to nearest, min 1.
    pub fn rows_for(self, n_s: usize) -> Result<usize> {
        let m = match self {
            ReducedSize::Rows(m) => m,
            ReducedSize::Ratio(alpha) => {
                if !(alpha > 0.0 && alpha <= 1.0) {
                    return Err(Error::Usage(format!("alpha = {alpha} must lie in (0, 1]")));
                }
                ((alpha * n_s as f64).round() as usize).max(1)
            }
        };
        if m == 0 || m > n_s {
            return Err(Error::dim(format!("m = {m} must satisfy 1 <= m <= n_s = {n_s}")));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionPlan {
    pub method: ReductionMethod,
    pub size: ReducedSize,
    pub oversample: usize,
    pub power_iters: usize,
    pub rng: RngSpec,
}

impl ReductionPlan {
    pub fn new(method: ReductionMethod, size: ReducedSize, rng: RngSpec) -> Self {
        Self {
            method,
            size,
            oversample: DEFAULT_OVERSAMPLE,
            power_iters: DEFAULT_POWER_ITERS,
            rng,
        }
    }

    /// Stream for one record; depends only on the plan and the record id.
    pub fn record_rng(&self, record_id: &str) -> RngSpec {
        self.rng.derive(&format!("record:{record_id}"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReductionResult {
    /// n_s × m with orthonormal columns; absent for subsampling.
    pub basis: Option<DMatrix<f64>>,
    /// m × p.
    pub reduced: DMatrix<f64>,
    pub residual_fro: f64,
    pub method: ReductionMethod,
    pub m: usize,
    /// Row indices kept by subsampling.
    pub indices: Option<Vec<usize>>,
}

fn check_finite(rec: &RecordMatrix) -> Result<()> {
    // RecordMatrix checks this too; reductions can be called on hand-built records.
    if rec.data().iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Data(format!("record {} has non-finite entries", rec.record_id())))
    }
}

/// Basis from the top-`m` left singular vectors (Eckart-Young optimum).
pub fn reduce_exact_svd(rec: &RecordMatrix, m: usize) -> Result<ReductionResult> {
    let x = rec.data();
    let n = x.nrows();
    if m == 0 || m > n {
        return Err(Error::dim(format!("m = {m} must satisfy 1 <= m <= n_s = {n}")));
    }
    check_finite(rec)?;
    let svd = x.clone().svd(true, false);
    let u = svd.u.expect("u requested");
    let basis = if u.ncols() >= m {
        u.columns(0, m).into_owned()
    } else {
        // Wide-looking storage can return fewer than n columns when p < n.
        complete_basis(u, m)
    };
    let reduced = basis.transpose() * x;
    let sv = &svd.singular_values;
    let residual_fro = sv.iter().skip(m).map(|s| s * s).sum::<f64>().sqrt();
    Ok(ReductionResult {
        basis: Some(basis),
        reduced,
        residual_fro,
        method: ReductionMethod::ExactSvd,
        m,
        indices: None,
    })
}

/// Extends an orthonormal `n × r` set to `n × m` columns (r < m <= n)
/// with directions from the orthogonal complement.
fn complete_basis(u: DMatrix<f64>, m: usize) -> DMatrix<f64> {
    let n = u.nrows();
    let r = u.ncols();
    let complement = DMatrix::<f64>::identity(n, n) - &u * u.transpose();
    let comp = complement.svd(true, false).u.expect("u requested");
    let mut out = DMatrix::zeros(n, m);
    out.columns_mut(0, r).copy_from(&u);
    out.columns_mut(r, m - r).copy_from(&comp.columns(0, m - r));
    out
}

/// Fixed-size randomized range finder with power iterations.
///
/// Draws a Gaussian test matrix of `m + oversample` columns, runs
/// `power_iters` rounds of `Xᵀ`/`X` products with re-orthonormalization,
/// then keeps the `m` dominant directions from an SVD of `QᵀX`. The
/// residual `‖X − P̂P̂ᵀX‖_F` is computed exactly.
pub fn reduce_range_finder(rec: &RecordMatrix, plan: &ReductionPlan) -> Result<ReductionResult> {
    let x = rec.data();
    let n = x.nrows();
    let m = plan.size.rows_for(n)?;
    let l = m + plan.oversample;
    if l > n {
        return Err(Error::dim(format!(
            "m + oversample = {m} + {} = {l} exceeds n_s = {n}",
            plan.oversample
        )));
    }
    check_finite(rec)?;
    let mut rng = plan.rng.rng();
    let omega = gaussian(x.ncols(), l, &mut rng);
    let mut q = orthonormalize(x * omega);
    for _ in 0..plan.power_iters {
        let z = x.tr_mul(&q);
        // With p < m + oversample the p × l factor cannot have orthonormal columns.
        let z = if z.nrows() >= z.ncols() { orthonormalize(z) } else { z };
        q = orthonormalize(x * z);
    }
    let b = q.tr_mul(x);
    let svd = b.svd(true, false);
    let ub = svd.u.expect("u requested");
    let basis = if ub.ncols() >= m {
        &q * ub.columns(0, m)
    } else {
        complete_basis(&q * ub, m)
    };
    let reduced = basis.tr_mul(x);
    let residual_fro = fro_sq(&(x - &basis * &reduced)).sqrt();
    Ok(ReductionResult {
        basis: Some(basis),
        reduced,
        residual_fro,
        method: ReductionMethod::RangeFinder,
        m,
        indices: None,
    })
}

/// Row indices `offset + i·stride`, `stride = ⌊n/m⌋`, offset drawn uniformly
/// from `[0, n − (m−1)·stride)`.
pub fn subsample_indices(n: usize, m: usize, rng: &mut impl Rng) -> Vec<usize> {
    let stride = n / m;
    let span = n - (m - 1) * stride;
    let offset = if span > 1 { rng.random_range(0..span) } else { 0 };
    (0..m).map(|i| offset + i * stride).collect()
}

/// Keeps `m` evenly strided time points.
///
/// The residual reconstructs `X` by least-squares projection onto the row
/// span of the kept rows; it is reported for diagnostics only.
pub fn reduce_subsample(rec: &RecordMatrix, plan: &ReductionPlan) -> Result<ReductionResult> {
    let x = rec.data();
    let n = x.nrows();
    let m = plan.size.rows_for(n)?;
    let mut rng = plan.rng.rng();
    let indices = subsample_indices(n, m, &mut rng);
    reduce_subsample_at(rec, &indices)
}

pub(crate) fn reduce_subsample_at(rec: &RecordMatrix, indices: &[usize]) -> Result<ReductionResult> {
    let x = rec.data();
    let m = indices.len();
    let reduced = x.select_rows(indices);
    let residual_fro = row_span_residual(x, &reduced);
    Ok(ReductionResult {
        basis: None,
        reduced,
        residual_fro,
        method: ReductionMethod::Subsample,
        m,
        indices: Some(indices.to_vec()),
    })
}

/// `‖X − X·W·Wᵀ‖_F` where `W` spans the row space of `rows`.
fn row_span_residual(x: &DMatrix<f64>, rows: &DMatrix<f64>) -> f64 {
    let svd = rows.transpose().svd(true, false);
    let w = svd.u.expect("u requested");
    let s = &svd.singular_values;
    let smax = s.iter().cloned().fold(0.0, f64::max);
    let tol = smax * (rows.nrows().max(rows.ncols()) as f64) * f64::EPSILON;
    let keep: Vec<usize> = (0..s.len()).filter(|&i| s[i] > tol).collect();
    if keep.is_empty() {
        return fro_sq(x).sqrt();
    }
    let w = w.select_columns(&keep);
    let proj = (x * &w) * w.transpose();
    fro_sq(&(x - proj)).sqrt()
}

pub fn reduce_record(rec: &RecordMatrix, plan: &ReductionPlan) -> Result<ReductionResult> {
    match plan.method {
        ReductionMethod::ExactSvd => reduce_exact_svd(rec, plan.size.rows_for(rec.n_samples())?),
        ReductionMethod::RangeFinder => reduce_range_finder(rec, plan),
        ReductionMethod::Subsample => reduce_subsample(rec, plan),
    }
}

/// Per-record timing attached to a dataset reduction.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordReduction {
    pub record_id: String,
    pub result: ReductionResult,
    pub elapsed_ms: f64,
    /// CPU time of the worker thread that reduced this record.
    pub cpu_ms: f64,
}

/// Reduces every record independently, in parallel, with per-record streams
/// derived from the plan and the record id.
pub fn reduce_dataset(ds: &Dataset, plan: &ReductionPlan) -> Result<(Dataset, Vec<RecordReduction>)> {
    let results: Vec<Result<RecordReduction>> = ds
        .records()
        .par_iter()
        .map(|rec| {
            let mut p = plan.clone();
            p.rng = plan.record_rng(rec.record_id());
            let t0 = Instant::now();
            let (result, cpu_ms) = timed(|| reduce_record(rec, &p));
            let result = result.map_err(|e| Error::Record {
                record_id: rec.record_id().to_owned(),
                source: Box::new(e),
            })?;
            Ok(RecordReduction {
                record_id: rec.record_id().to_owned(),
                result,
                elapsed_ms: t0.elapsed().as_secs_f64() * 1e3,
                cpu_ms,
            })
        })
        .collect();
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;
    let records = results
        .iter()
        .map(|r| RecordMatrix::new(r.record_id.clone(), r.result.reduced.clone()))
        .collect::<Result<Vec<_>>>()?;
    Ok((Dataset::new(records)?, results))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::gram_defect;
    use nalgebra::SymmetricEigen;

    fn rec(m: DMatrix<f64>) -> RecordMatrix {
        RecordMatrix::new("r", m).unwrap()
    }

    fn random_matrix(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
        gaussian(n, p, &mut RngSpec::new(seed, "test-matrix").rng())
    }

    fn low_rank(n: usize, p: usize, r: usize, seed: u64) -> DMatrix<f64> {
        let mut g = RngSpec::new(seed, "low-rank").rng();
        gaussian(n, r, &mut g) * gaussian(r, p, &mut g)
    }

    /// Tail energy from the eigenvalues of X·Xᵀ, independent of the SVD path.
    fn eig_tail(x: &DMatrix<f64>, m: usize) -> f64 {
        let mut ev: Vec<f64> = SymmetricEigen::new(x * x.transpose()).eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
        ev.iter().skip(m).map(|v| v.max(0.0)).sum::<f64>().sqrt()
    }

    fn plan(method: ReductionMethod, m: usize, seed: u64) -> ReductionPlan {
        ReductionPlan::new(method, ReducedSize::Rows(m), RngSpec::new(seed, "plan"))
    }

    #[test]
    fn exact_svd_recovers_rank_two() {
        let x = low_rank(30, 40, 2, 1);
        let r = reduce_exact_svd(&rec(x), 2).unwrap();
        assert!(r.residual_fro <= 1e-10, "{}", r.residual_fro);
        assert_eq!(r.reduced.nrows(), 2);
        assert!(gram_defect(r.basis.as_ref().unwrap()) <= 1e-10);
    }

    #[test]
    fn exact_svd_full_rank_is_lossless() {
        let x = random_matrix(12, 30, 2);
        let r = reduce_exact_svd(&rec(x.clone()), 12).unwrap();
        assert_eq!(r.residual_fro, 0.0);
        let b = r.basis.unwrap();
        assert!(((&b * &r.reduced) - &x).norm() <= 1e-10 * x.norm());
    }

    #[test]
    fn exact_svd_tail_matches_independent_eigendecomposition() {
        let x = random_matrix(50, 200, 3);
        let r = reduce_exact_svd(&rec(x.clone()), 10).unwrap();
        let oracle = eig_tail(&x, 10);
        assert!((r.residual_fro - oracle).abs() <= 1e-8 * oracle, "{} vs {}", r.residual_fro, oracle);
        // and it equals the directly computed projection residual
        let b = r.basis.unwrap();
        let direct = (&x - &b * b.tr_mul(&x)).norm();
        assert!((direct - oracle).abs() <= 1e-8 * oracle);
    }

    #[test]
    fn exact_svd_handles_more_samples_than_voxels() {
        let x = random_matrix(20, 5, 4);
        let r = reduce_exact_svd(&rec(x.clone()), 8).unwrap();
        let b = r.basis.as_ref().unwrap();
        assert_eq!(b.shape(), (20, 8));
        assert!(gram_defect(b) <= 1e-10);
        assert!(r.residual_fro <= 1e-10);
    }

    #[test]
    fn exact_svd_rejects_bad_m() {
        let r = rec(random_matrix(5, 6, 5));
        assert!(matches!(reduce_exact_svd(&r, 0), Err(Error::Dimension(_))));
        assert!(matches!(reduce_exact_svd(&r, 6), Err(Error::Dimension(_))));
    }

    #[test]
    fn range_finder_is_exact_on_rank_m() {
        let x = low_rank(60, 300, 5, 6);
        let norm = x.norm();
        for seed in 0..5 {
            let r = reduce_range_finder(&rec(x.clone()), &plan(ReductionMethod::RangeFinder, 5, seed)).unwrap();
            assert!(r.residual_fro <= 1e-8 * norm, "seed {seed}: {}", r.residual_fro);
            assert!(gram_defect(r.basis.as_ref().unwrap()) <= 1e-10);
        }
    }

    #[test]
    fn range_finder_is_deterministic() {
        let x = random_matrix(40, 80, 7);
        let p = plan(ReductionMethod::RangeFinder, 6, 99);
        let a = reduce_range_finder(&rec(x.clone()), &p).unwrap();
        let b = reduce_range_finder(&rec(x), &p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn range_finder_rejects_oversized_sketch() {
        let x = random_matrix(12, 30, 8);
        let err = reduce_range_finder(&rec(x), &plan(ReductionMethod::RangeFinder, 5, 0)).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }

    #[test]
    fn subsample_stride_and_identity() {
        let x = random_matrix(10, 4, 9);
        let r = reduce_subsample_at(&rec(x.clone()), &[0, 2, 4, 6, 8]).unwrap();
        assert_eq!(r.reduced, x.select_rows(&[0, 2, 4, 6, 8]));
        for seed in 0..20 {
            let idx = subsample_indices(10, 5, &mut RngSpec::new(seed, "ss").rng());
            let diffs: Vec<_> = idx.windows(2).map(|w| w[1] - w[0]).collect();
            assert!(diffs.iter().all(|&d| d == 2));
            assert!(idx[0] <= 1 && *idx.last().unwrap() < 10);
        }
        let full = reduce_subsample(&rec(x.clone()), &plan(ReductionMethod::Subsample, 10, 3)).unwrap();
        assert_eq!(full.reduced, x);
        assert!(full.residual_fro <= 1e-10 * x.norm());
        assert!(full.basis.is_none());
    }

    #[test]
    fn subsampling_aliases_high_frequency_record() {
        // Each voxel carries the same sinusoid with its own phase, so the
        // record has rank 2. With 4 cycles sampled every 25 of 100 steps,
        // every kept row is identical and one direction is lost.
        let n = 100;
        let p = 64;
        let f = 4.0;
        let x = DMatrix::from_fn(n, p, |t, j| {
            let phase = j as f64 * 0.37;
            (2.0 * std::f64::consts::PI * f * t as f64 / n as f64 + phase).sin()
        });
        let mut p_rf = plan(ReductionMethod::RangeFinder, 4, 1);
        p_rf.oversample = 4;
        for seed in 0..10 {
            let p_ss = plan(ReductionMethod::Subsample, 4, seed);
            let ss = reduce_subsample(&rec(x.clone()), &p_ss).unwrap();
            let rf = reduce_range_finder(&rec(x.clone()), &p_rf).unwrap();
            assert!(rf.residual_fro <= 1e-8 * x.norm());
            assert!(ss.residual_fro > 0.3 * x.norm(), "seed {seed}: {}", ss.residual_fro);
            assert!(ss.residual_fro > rf.residual_fro);
        }
    }

    #[test]
    fn alpha_resolves_to_rows() {
        assert_eq!(ReducedSize::Ratio(0.025).rows_for(400).unwrap(), 10);
        assert_eq!(ReducedSize::Ratio(0.001).rows_for(100).unwrap(), 1);
        assert_eq!(ReducedSize::Ratio(1.0).rows_for(7).unwrap(), 7);
        assert!(ReducedSize::Ratio(0.0).rows_for(7).is_err());
        assert!(ReducedSize::Rows(8).rows_for(7).is_err());
    }

    fn two_record_ds(n: usize) -> Dataset {
        Dataset::new(vec![
            RecordMatrix::new("a", random_matrix(n, 30, 10)).unwrap(),
            RecordMatrix::new("b", random_matrix(n, 30, 11)).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn dataset_reduction_shapes() {
        let ds = two_record_ds(20);
        let mut p = plan(ReductionMethod::RangeFinder, 3, 0);
        p.oversample = 5;
        let (red, rep) = reduce_dataset(&ds, &p).unwrap();
        assert_eq!(red.total_rows(), 6);
        assert_eq!(rep.len(), 2);
        assert_eq!(red.records()[1].record_id(), "b");
    }

    #[test]
    fn dataset_reduction_is_order_independent() {
        let ds = two_record_ds(25);
        let swapped = Dataset::new(ds.records().iter().rev().cloned().collect()).unwrap();
        for method in [ReductionMethod::RangeFinder, ReductionMethod::Subsample, ReductionMethod::ExactSvd] {
            let p = plan(method, 4, 5);
            let (a, _) = reduce_dataset(&ds, &p).unwrap();
            let (b, _) = reduce_dataset(&swapped, &p).unwrap();
            assert_eq!(a.records()[0], b.records()[1]);
            assert_eq!(a.records()[1], b.records()[0]);
        }
    }

    #[test]
    fn dataset_failure_names_record() {
        let ds = Dataset::new(vec![
            RecordMatrix::new("ok", random_matrix(20, 5, 1)).unwrap(),
            RecordMatrix::new("short", random_matrix(3, 5, 2)).unwrap(),
        ])
        .unwrap();
        let err = reduce_dataset(&ds, &plan(ReductionMethod::ExactSvd, 4, 0)).unwrap_err();
        assert!(err.to_string().contains("short"), "{err}");
        assert!(matches!(err.root(), Error::Dimension(_)));
    }

    #[test]
    fn exact_svd_residual_non_increasing_in_m() {
        let x = random_matrix(30, 60, 12);
        let mut prev = f64::INFINITY;
        for m in 1..=30 {
            let r = reduce_exact_svd(&rec(x.clone()), m).unwrap().residual_fro;
            assert!(r <= prev + 1e-12);
            prev = r;
        }
    }
}
