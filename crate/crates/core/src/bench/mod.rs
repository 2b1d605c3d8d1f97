//! Experiment orchestration: reference runs, λ matching against them,
//! time/accuracy tradeoff points and `d_l` stabilization curves.
//!
//! Every run is a pure function of its seed, so results (and the CSVs
//! derived from them) do not depend on the worker count or scheduling.
//! CPU times are the only nondeterministic outputs; they are reported in
//! `run.json` and never in a CSV.

mod csvout;
mod spec;

pub use csvout::{write_lambda_search_csv, write_stabilization_csv, write_tradeoff_csv};
pub use spec::{
    default_lambda_grid, ArmRuns, CandidateSpec, DlSettings, ExperimentSpec, ReductionSettings, ReferenceSpec,
    WriteRuns,
};

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::correspondence::{d_l, Correspondence, MapSet};
use crate::cputime::timed;
use crate::data::Dataset;
use crate::dictlearn::{fit, Decomposition, DlConfig};
use crate::error::{Error, Result};
use crate::io::{read_dataset, read_matrix};
use crate::metadata::{write_decomposition_dir, RunMetadata};
use crate::reduction::{reduce_dataset, ReductionMethod, ReductionPlan};
use crate::rng::RngSpec;

pub const BASELINE_ARM: &str = "baseline";

/// One fit and its CPU cost.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub seed: u64,
    pub lambda: f64,
    pub decomposition: Decomposition,
    pub cpu_ms: f64,
}

impl RunRecord {
    pub fn map_set(&self) -> MapSet {
        MapSet::from_run(self.decomposition.spatial_maps.clone(), &format!("seed{}", self.seed))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradeoffPoint {
    pub arm: String,
    pub method: String,
    pub alpha: f64,
    pub m: usize,
    pub lambda_best: f64,
    pub d_l_value: f64,
    pub d_l_dispersion: Option<f64>,
    pub cpu_time_reduce_ms: f64,
    pub cpu_time_dl_ms: f64,
    /// `(λ, d_l)` for every λ tried.
    pub lambda_search: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct TradeoffOutcome {
    /// The self-correspondence baseline `d_l(X, X)`.
    pub baseline: TradeoffPoint,
    pub baseline_runs: Vec<RunRecord>,
    pub points: Vec<TradeoffPoint>,
    /// Runs at `lambda_best`, aligned with `points`.
    pub best_runs: Vec<Vec<RunRecord>>,
    /// `(label, message)` for candidates that failed.
    pub failures: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilizationRow {
    pub arm: String,
    pub method: String,
    pub alpha: f64,
    pub lambda: f64,
    pub l: usize,
    pub d_l: f64,
    pub dispersion: Option<f64>,
}

/// A loaded experiment bound to a worker pool.
pub struct Bench {
    spec: ExperimentSpec,
    dataset: Dataset,
    init_maps: Option<DMatrix<f64>>,
    pool: rayon::ThreadPool,
}

fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = v.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

fn map_sets(runs: &[RunRecord]) -> Vec<MapSet> {
    runs.iter().map(RunRecord::map_set).collect()
}

impl Bench {
    pub fn new(spec: ExperimentSpec, workers: usize) -> Result<Self> {
        spec.validate()?;
        let dataset = read_dataset(&spec.dataset)?;
        Self::with_dataset(spec, dataset, workers)
    }

    /// Uses an in-memory dataset; `spec.dataset` is only echoed.
    pub fn with_dataset(spec: ExperimentSpec, dataset: Dataset, workers: usize) -> Result<Self> {
        spec.validate()?;
        let init_maps = match &spec.init_maps {
            Some(p) => {
                let v = read_matrix(p)?;
                if v.shape() != (dataset.p(), spec.k) {
                    return Err(Error::dim(format!(
                        "init maps are {}x{}, expected p x k = {}x{}",
                        v.nrows(),
                        v.ncols(),
                        dataset.p(),
                        spec.k
                    )));
                }
                Some(v)
            }
            None => None,
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| Error::Usage(format!("cannot start {workers} workers: {e}")))?;
        Ok(Self {
            spec,
            dataset,
            init_maps,
            pool,
        })
    }

    pub fn spec(&self) -> &ExperimentSpec {
        &self.spec
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    fn config(&self, lambda: f64, seed: u64) -> DlConfig {
        let s = &self.spec.dl;
        let mut cfg = DlConfig::new(self.spec.k, lambda, RngSpec::new(seed, "dl"));
        cfg.batch_size = s.batch_size;
        cfg.epochs = s.epochs;
        cfg.lasso_tol = s.lasso_tol;
        cfg.lasso_max_iter = s.lasso_max_iter;
        cfg.init_maps = self.init_maps.clone();
        cfg
    }

    /// Fits `ds` once per seed, concurrently; results keep seed order.
    pub fn fit_runs(&self, ds: &Dataset, lambda: f64, seeds: &[u64]) -> Result<Vec<RunRecord>> {
        self.pool.install(|| {
            seeds
                .par_iter()
                .map(|&seed| {
                    let cfg = self.config(lambda, seed);
                    let (d, cpu_ms) = timed(|| fit(ds, &cfg));
                    Ok(RunRecord {
                        seed,
                        lambda,
                        decomposition: d?,
                        cpu_ms,
                    })
                })
                .collect()
        })
    }

    /// `n_runs_ref` fits of the raw data at `lambda_ref`.
    pub fn run_reference(&self) -> Result<Vec<RunRecord>> {
        self.fit_runs(&self.dataset, self.spec.reference.lambda_ref, self.spec.reference_seeds())
    }

    fn correspondence(&self, reference: &[MapSet], runs: &[RunRecord], l: usize) -> Result<Correspondence> {
        d_l(reference, &map_sets(&runs[..l]))
    }

    /// Self-baseline plus one tradeoff point per candidate.
    pub fn run_tradeoff(&self, reference: &[RunRecord]) -> Result<TradeoffOutcome> {
        if reference.len() < self.spec.l {
            return Err(Error::Usage(format!(
                "tradeoff needs {} reference runs, have {}",
                self.spec.l,
                reference.len()
            )));
        }
        let ref_sets = map_sets(reference);
        let l = self.spec.l;
        let lambda_ref = self.spec.reference.lambda_ref;
        let n_s = self.dataset.records()[0].n_samples();

        let baseline_runs = self.fit_runs(&self.dataset, lambda_ref, &self.spec.baseline.seeds[..self.spec.baseline.n_runs])?;
        let c = self.correspondence(&ref_sets, &baseline_runs, l)?;
        let baseline = TradeoffPoint {
            arm: BASELINE_ARM.into(),
            method: "none".into(),
            alpha: 1.0,
            m: n_s,
            lambda_best: lambda_ref,
            d_l_value: c.value,
            d_l_dispersion: c.dispersion,
            cpu_time_reduce_ms: 0.0,
            cpu_time_dl_ms: mean(baseline_runs.iter().map(|r| r.cpu_ms)),
            lambda_search: vec![(lambda_ref, c.value)],
        };

        let mut points = Vec::new();
        let mut best_runs = Vec::new();
        let mut failures = Vec::new();
        for cand in &self.spec.candidates {
            match self.candidate_point(cand, &ref_sets) {
                Ok((point, runs)) => {
                    points.push(point);
                    best_runs.push(runs);
                }
                Err(e) => failures.push((cand.label(), e.to_string())),
            }
        }
        Ok(TradeoffOutcome {
            baseline,
            baseline_runs,
            points,
            best_runs,
            failures,
        })
    }

    /// Reduces, searches the λ grid and returns the best point with its runs.
    pub fn evaluate_candidate(&self, cand: &CandidateSpec, reference: &[RunRecord]) -> Result<(TradeoffPoint, Vec<RunRecord>)> {
        self.candidate_point(cand, &map_sets(reference))
    }

    fn candidate_point(&self, cand: &CandidateSpec, ref_sets: &[MapSet]) -> Result<(TradeoffPoint, Vec<RunRecord>)> {
        let l = self.spec.l;
        let r = &self.spec.reduction;
        let mut plan = ReductionPlan::new(cand.method, cand.size()?, RngSpec::new(r.seed, "reduce"));
        plan.oversample = r.oversample;
        plan.power_iters = r.power_iters;
        let ((reduced, reports), _) = {
            let (res, ms) = timed(|| reduce_dataset(&self.dataset, &plan));
            (res?, ms)
        };
        let cpu_time_reduce_ms: f64 = reports.iter().map(|r| r.cpu_ms).sum();
        let m = reports[0].result.m;
        let alpha = mean(
            reports
                .iter()
                .zip(self.dataset.records())
                .map(|(r, rec)| r.result.m as f64 / rec.n_samples() as f64),
        );
        let grid = cand
            .lambda_grid
            .clone()
            .unwrap_or_else(|| default_lambda_grid(self.spec.reference.lambda_ref * alpha));
        let seeds = &cand.seeds[..cand.n_runs];
        let mut best: Option<(f64, Correspondence, Vec<RunRecord>)> = None;
        let mut search = Vec::with_capacity(grid.len());
        for &lambda in &grid {
            let runs = self.fit_runs(&reduced, lambda, seeds)?;
            let c = self.correspondence(ref_sets, &runs, l)?;
            search.push((lambda, c.value));
            if best.as_ref().is_none_or(|(_, b, _)| c.value > b.value) {
                best = Some((lambda, c, runs));
            }
        }
        let (lambda_best, c, runs) = best.expect("nonempty grid");
        let point = TradeoffPoint {
            arm: cand.label(),
            method: cand.method.short_name().into(),
            alpha,
            m,
            lambda_best,
            d_l_value: c.value,
            d_l_dispersion: c.dispersion,
            cpu_time_reduce_ms,
            cpu_time_dl_ms: mean(runs.iter().map(|r| r.cpu_ms)),
            lambda_search: search,
        };
        Ok((point, runs))
    }

    /// `d_l` for every `l` in `l_values`, for the baseline and each
    /// candidate at its best λ.
    pub fn run_stabilization(&self, reference: &[RunRecord], tradeoff: &TradeoffOutcome) -> Result<Vec<StabilizationRow>> {
        let ref_sets = map_sets(reference);
        let mut arms: Vec<(&TradeoffPoint, &[RunRecord])> = vec![(&tradeoff.baseline, &tradeoff.baseline_runs)];
        arms.extend(tradeoff.points.iter().zip(tradeoff.best_runs.iter().map(Vec::as_slice)));
        let mut rows = Vec::new();
        for &l in &self.spec.l_values {
            if ref_sets.len() < l {
                return Err(Error::Usage(format!(
                    "stabilization at l = {l} needs {l} reference runs, have {} (short by {})",
                    ref_sets.len(),
                    l - ref_sets.len()
                )));
            }
            for (point, runs) in &arms {
                if runs.len() < l {
                    return Err(Error::Usage(format!(
                        "stabilization at l = {l}: arm {} has {} runs (short by {})",
                        point.arm,
                        runs.len(),
                        l - runs.len()
                    )));
                }
                let c = d_l(&ref_sets, &map_sets(&runs[..l]))?;
                rows.push(StabilizationRow {
                    arm: point.arm.clone(),
                    method: point.method.clone(),
                    alpha: point.alpha,
                    lambda: point.lambda_best,
                    l,
                    d_l: c.value,
                    dispersion: c.dispersion,
                });
            }
        }
        Ok(rows)
    }
}

/// Everything an experiment produced.
pub struct ExperimentOutcome {
    pub reference: Vec<RunRecord>,
    pub tradeoff: TradeoffOutcome,
    pub stabilization: Vec<StabilizationRow>,
}

fn write_runs(dir: &Path, runs: &[RunRecord], bench: &Bench) -> Result<()> {
    for r in runs {
        let cfg = bench.config(r.lambda, r.seed);
        let mut meta = RunMetadata::new(vec![], serde_json::to_value(&cfg)?);
        meta.seeds.push(r.seed);
        meta.elapsed_ms.insert("fit_cpu".into(), r.cpu_ms);
        write_decomposition_dir(dir.join(format!("seed{}", r.seed)), &r.decomposition, &meta)?;
    }
    Ok(())
}

/// Runs reference, tradeoff and stabilization and writes `tradeoff.csv`,
/// `lambda_search.csv`, `stabilization.csv`, `run.json` (which carries the
/// CPU times) and the `runs/` tree into `out`.
pub fn run_experiment(bench: &Bench, out: impl AsRef<Path>, command_line: Vec<String>) -> Result<ExperimentOutcome> {
    let out = out.as_ref();
    let (reference, ref_ms) = timed(|| bench.run_reference());
    let reference = reference?;
    let (tradeoff, trade_ms) = timed(|| bench.run_tradeoff(&reference));
    let tradeoff = tradeoff?;
    let (stabilization, stab_ms) = timed(|| bench.run_stabilization(&reference, &tradeoff));
    let stabilization = stabilization?;

    fs::create_dir_all(out)?;
    let mut all_points = vec![tradeoff.baseline.clone()];
    all_points.extend(tradeoff.points.iter().cloned());
    write_tradeoff_csv(out.join("tradeoff.csv"), &all_points, bench.spec.l)?;
    write_lambda_search_csv(out.join("lambda_search.csv"), &all_points)?;
    write_stabilization_csv(out.join("stabilization.csv"), &stabilization)?;

    if bench.spec.write_runs != WriteRuns::None {
        let runs = out.join("runs");
        write_runs(&runs.join("reference"), &reference, bench)?;
        write_runs(&runs.join(BASELINE_ARM), &tradeoff.baseline_runs, bench)?;
        for (p, rs) in tradeoff.points.iter().zip(&tradeoff.best_runs) {
            write_runs(&runs.join(&p.arm), rs, bench)?;
        }
    }

    let mut meta = RunMetadata::new(command_line, serde_json::to_value(&bench.spec)?);
    meta.seeds = bench.spec.reference_seeds().to_vec();
    meta.elapsed_ms.insert("reference_cpu".into(), ref_ms);
    meta.elapsed_ms.insert("tradeoff_cpu".into(), trade_ms);
    meta.elapsed_ms.insert("stabilization_cpu".into(), stab_ms);
    for (label, msg) in &tradeoff.failures {
        meta.warnings.push(format!("candidate {label} failed: {msg}"));
    }
    meta.results = serde_json::to_value(&all_points)?;
    meta.write(out.join("run.json"))?;
    Ok(ExperimentOutcome {
        reference,
        tradeoff,
        stabilization,
    })
}

/// Method label for a reduction, `"none"` for the raw data.
pub fn method_label(method: Option<ReductionMethod>) -> &'static str {
    method.map_or("none", ReductionMethod::short_name)
}
