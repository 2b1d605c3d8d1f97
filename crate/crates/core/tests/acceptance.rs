//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::Rng;
use rand_distr::StandardNormal;

use tcdl_core::bench::{
    run_experiment, ArmRuns, Bench, CandidateSpec, DlSettings, ExperimentSpec, ReductionSettings, ReferenceSpec,
    RunRecord, WriteRuns,
};
use tcdl_core::correspondence::{d, match_maps, MapSet};
use tcdl_core::dictlearn::{fit, lasso_code, lasso_objective, DlConfig};
use tcdl_core::reduction::{
    reduce_dataset, reduce_exact_svd, reduce_range_finder, ReducedSize, ReductionMethod, ReductionPlan,
};
use tcdl_core::synth::{generate, GroundTruth, SynthConfig};
use tcdl_core::{Dataset, RecordMatrix, RngSpec};

// Golden recovery configuration, tuned once on a λ / batch grid and frozen.
const GOLDEN_LAMBDA: f64 = 0.5;
const GOLDEN_BATCH: usize = 64;
const GOLDEN_EPOCHS: usize = 10;

struct Outcome {
    pass: bool,
    detail: String,
}

fn gaussian(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn golden_dl(k: usize, seed: u64) -> DlConfig {
    let mut cfg = DlConfig::new(k, GOLDEN_LAMBDA, RngSpec::new(seed, "dl"));
    cfg.batch_size = GOLDEN_BATCH;
    cfg.epochs = GOLDEN_EPOCHS;
    cfg
}

fn golden_settings() -> DlSettings {
    DlSettings {
        batch_size: GOLDEN_BATCH,
        epochs: GOLDEN_EPOCHS,
        ..DlSettings::default()
    }
}

fn recovery_data(n_s: usize, seed: u64) -> (Dataset, GroundTruth) {
    let mut cfg = SynthConfig::new(2000, 5, 8, n_s, RngSpec::new(seed, "synth"));
    cfg.noise_sigma = 0.1;
    generate(&cfg).unwrap()
}

fn seeds(start: u64, n: usize) -> Vec<u64> {
    (start..start + n as u64).collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

// ---------------------------------------------------------------- 1

fn abs_cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).abs()
    }
}

/// Best total weight over injective maps rows → cols (rows ≤ cols).
fn brute_force(w: &[Vec<f64>]) -> f64 {
    fn go(w: &[Vec<f64>], row: usize, used: &mut Vec<bool>) -> f64 {
        if row == w.len() {
            return 0.0;
        }
        let mut best = f64::NEG_INFINITY;
        for c in 0..used.len() {
            if !used[c] {
                used[c] = true;
                best = best.max(w[row][c] + go(w, row + 1, used));
                used[c] = false;
            }
        }
        best
    }
    go(w, 0, &mut vec![false; w[0].len()])
}

fn criterion_assignment() -> Outcome {
    let mut rng = RngSpec::new(1, "acceptance/assignment").rng();
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let q0 = rng.random_range(1..=6);
        let q = rng.random_range(1..=6);
        let p = 12;
        let mut a = gaussian(p, q0, &mut rng);
        let b = gaussian(p, q, &mut rng);
        if rng.random_bool(0.2) {
            a.column_mut(0).fill(0.0);
        }
        let cols = |m: &DMatrix<f64>| -> Vec<Vec<f64>> { m.column_iter().map(|c| c.iter().copied().collect()).collect() };
        let (ca, cb) = (cols(&a), cols(&b));
        let w: Vec<Vec<f64>> = if q0 <= q {
            ca.iter().map(|x| cb.iter().map(|y| abs_cos(x, y)).collect()).collect()
        } else {
            cb.iter().map(|y| ca.iter().map(|x| abs_cos(x, y)).collect()).collect()
        };
        let oracle = brute_force(&w) / q0.min(q) as f64;
        let got = match_maps(&MapSet::single(a), &MapSet::single(b)).unwrap().mean_corr;
        worst = worst.max((got - oracle).abs());
    }
    Outcome {
        pass: worst <= 1e-12,
        detail: format!("max |hungarian - brute force| = {worst:.2e} over 200 instances"),
    }
}

// ---------------------------------------------------------------- 2

/// Subgradient descent with diminishing steps; returns the best objective.
fn subgradient_oracle(x: &DVector<f64>, u: &DMatrix<f64>, lambda: f64) -> f64 {
    let k = u.ncols();
    let lip = 2.0 * u.tr_mul(u).symmetric_eigenvalues().max();
    let f = |v: &DVector<f64>| (x - u * v).norm_squared() + lambda * v.lp_norm(1);
    let mut v = DVector::zeros(k);
    let mut best = f(&v);
    for t in 0..20_000 {
        let mut g = -2.0 * u.tr_mul(&(x - u * &v));
        for j in 0..k {
            g[j] += lambda * v[j].signum() * (v[j] != 0.0) as u8 as f64;
        }
        v -= g / (lip * (1.0 + t as f64).sqrt());
        best = best.min(f(&v));
    }
    best
}

fn criterion_lasso() -> Outcome {
    let mut rng = RngSpec::new(2, "acceptance/lasso").rng();
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..100 {
        let u = gaussian(20, 5, &mut rng);
        let x = DVector::from_fn(20, |_, _| rng.sample(StandardNormal));
        let lambda = rng.random_range(0.01..=1.0);
        let ours = lasso_code(x.as_view(), &u, lambda, 1e-10, 10_000);
        let f = lasso_objective(x.as_view(), &u, &ours.code, lambda);
        worst = worst.max(f - subgradient_oracle(&x, &u, lambda));
    }
    Outcome {
        pass: worst <= 1e-6,
        detail: format!("max (ours - oracle) objective = {worst:.2e}"),
    }
}

// ---------------------------------------------------------------- 3

fn criterion_range_finder() -> Outcome {
    let (n, p) = (100, 2000);
    let mut ratios: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut svd_err = 0.0f64;
    for seed in 0..20 {
        let mut rng = RngSpec::new(seed, "acceptance/spectrum").rng();
        let a = gaussian(n, n, &mut rng).qr().q();
        let b = gaussian(p, n, &mut rng).qr().q();
        let sigma: Vec<f64> = (0..n).map(|i| 2f64.powi(-(i as i32))).collect();
        let x = &a * DMatrix::from_diagonal(&DVector::from_vec(sigma.clone())) * b.transpose();
        let rec = RecordMatrix::new("r", x).unwrap();
        for m in [5, 10, 20] {
            let tail = sigma[m..].iter().map(|s| s * s).sum::<f64>().sqrt();
            let exact = reduce_exact_svd(&rec, m).unwrap().residual_fro;
            svd_err = svd_err.max((exact - tail).abs() / tail);
            let plan = ReductionPlan::new(ReductionMethod::RangeFinder, ReducedSize::Rows(m), RngSpec::new(seed, "rf"));
            let rf = reduce_range_finder(&rec, &plan).unwrap().residual_fro;
            ratios.entry(m).or_default().push(rf / exact);
        }
    }
    let medians: Vec<(usize, f64)> = ratios.into_iter().map(|(m, r)| (m, median(r))).collect();
    Outcome {
        pass: medians.iter().all(|(_, r)| *r <= 1.5) && svd_err < 1e-6,
        detail: format!("median rf/svd residual {medians:?}; svd vs analytic tail rel err {svd_err:.1e}"),
    }
}

// ---------------------------------------------------------------- 4

fn planted(rows: usize, p: usize, k: usize, noise: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = RngSpec::new(seed, "acceptance/planted").rng();
    let u = gaussian(rows, k, &mut rng);
    let v = DMatrix::from_fn(p, k, |i, j| if i % k == j { 1.0 + (i % 7) as f64 * 0.2 } else { 0.0 });
    &u * v.transpose() + gaussian(rows, p, &mut rng) * noise
}

fn criterion_properties() -> Outcome {
    let mut runner = TestRunner::new(Config {
        cases: 24,
        failure_persistence: None,
        ..Config::default()
    });
    let mut failures = Vec::new();

    let r = runner.run(&(1usize..8, 2usize..40, any::<u64>()), |(q, p, seed)| {
        let a = gaussian(p, q, &mut RngSpec::new(seed, "a").rng());
        let v = d(&MapSet::single(a.clone()), &MapSet::single(a)).unwrap();
        prop_assert!((v - 1.0).abs() <= 1e-12, "d(A, A) = {v}");
        Ok(())
    });
    if let Err(e) = r {
        failures.push(format!("d(A,A): {e}"));
    }

    let r = runner.run(&(1usize..6, 20usize..60, 10usize..50, any::<u64>()), |(m, n, p, seed)| {
        let mut rng = RngSpec::new(seed, "lowrank").rng();
        let x = gaussian(n, m, &mut rng) * gaussian(m, p, &mut rng);
        let scale = x.norm();
        let rec = RecordMatrix::new("r", x).unwrap();
        let svd = reduce_exact_svd(&rec, m).unwrap().residual_fro;
        let mut plan = ReductionPlan::new(ReductionMethod::RangeFinder, ReducedSize::Rows(m), RngSpec::new(seed, "rf"));
        plan.oversample = 5;
        let rf = reduce_range_finder(&rec, &plan).unwrap().residual_fro;
        prop_assert!(svd <= 1e-10 * scale, "svd residual {svd}");
        prop_assert!(rf <= 1e-10 * scale, "rf residual {rf}");
        Ok(())
    });
    if let Err(e) = r {
        failures.push(format!("rank-m exactness: {e}"));
    }

    let r = runner.run(
        &(2usize..5, 0.001f64..1.0, 1usize..4, any::<u64>()),
        |(k, lambda, epochs, seed)| {
            let x = planted(30, 120, k, 0.05, seed);
            let mut cfg = DlConfig::new(k, lambda, RngSpec::new(seed, "dl"));
            cfg.batch_size = 16;
            cfg.epochs = epochs;
            cfg.track_objective = true;
            let dec = tcdl_core::dictlearn::fit_matrix(&x, vec![("x".into(), 30)], &cfg).unwrap();
            for (j, c) in dec.temporal_atoms.column_iter().enumerate() {
                prop_assert!(c.norm() <= 1.0 + 1e-10, "atom {j} norm {}", c.norm());
            }
            let obj = &dec.report.epoch_objectives;
            for w in obj.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-6), "objective rose {} -> {} ({obj:?})", w[0], w[1]);
            }
            Ok(())
        },
    );
    if let Err(e) = r {
        failures.push(format!("fit invariants: {e}"));
    }

    Outcome {
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            "d(A,A)=1, rank-m exactness (svd, rf), atom norms, epoch objective descent".into()
        } else {
            failures.join("; ")
        },
    }
}

// ---------------------------------------------------------------- 5

fn criterion_recovery() -> Outcome {
    let values: Vec<f64> = (0..10)
        .map(|seed| {
            let (ds, gt) = recovery_data(100, seed);
            let dec = fit(&ds, &golden_dl(5, seed)).unwrap();
            d(&MapSet::single(gt.true_maps), &MapSet::single(dec.spatial_maps)).unwrap()
        })
        .collect();
    let ok = values.iter().filter(|&&v| v >= 0.9).count();
    Outcome {
        pass: ok >= 9,
        detail: format!(
            "{ok}/10 seeds with d >= 0.9 at lambda {GOLDEN_LAMBDA}; d = {:?}",
            values.iter().map(|v| (v * 1000.0).round() / 1000.0).collect::<Vec<_>>()
        ),
    }
}

// ---------------------------------------------------------------- 6

fn experiment(k: usize, l: usize, n_ref: usize, n_base: usize, candidates: Vec<CandidateSpec>) -> ExperimentSpec {
    ExperimentSpec {
        dataset: "in-memory".into(),
        k,
        reference: ReferenceSpec {
            lambda_ref: GOLDEN_LAMBDA,
            n_runs_ref: n_ref,
            seeds: seeds(1000, n_ref),
        },
        baseline: ArmRuns {
            n_runs: n_base,
            seeds: seeds(2000, n_base),
        },
        candidates,
        l,
        l_values: vec![],
        output: None,
        init_maps: None,
        dl: golden_settings(),
        reduction: ReductionSettings::default(),
        write_runs: WriteRuns::None,
    }
}

fn candidate(method: ReductionMethod, size: ReducedSize, grid: &[f64], n_runs: usize, first_seed: u64) -> CandidateSpec {
    let (alpha, m) = match size {
        ReducedSize::Ratio(a) => (Some(a), None),
        ReducedSize::Rows(m) => (None, Some(m)),
    };
    CandidateSpec {
        method,
        alpha,
        m,
        lambda_grid: Some(grid.to_vec()),
        n_runs,
        seeds: seeds(first_seed, n_runs),
    }
}

fn criterion_compressed_comparable() -> Outcome {
    let (ds, _) = recovery_data(100, 0);
    let cand = candidate(
        ReductionMethod::RangeFinder,
        ReducedSize::Ratio(0.25),
        &[0.125, 0.25, 0.35, 0.5, 0.7],
        10,
        3000,
    );
    let spec = experiment(5, 10, 40, 10, vec![cand]);
    let bench = Bench::with_dataset(spec, ds, 1).unwrap();
    let reference = bench.run_reference().unwrap();
    let t = bench.run_tradeoff(&reference).unwrap();
    let base = &t.baseline;
    let Some(point) = t.points.first() else {
        return Outcome {
            pass: false,
            detail: format!("candidate failed: {:?}", t.failures),
        };
    };
    let disp = base.d_l_dispersion.unwrap_or(0.0);
    Outcome {
        pass: point.d_l_value >= base.d_l_value - disp,
        detail: format!(
            "d_l(X, X_r) = {:.4} at lambda {} vs d_l(X, X) = {:.4} +/- {:.4}",
            point.d_l_value, point.lambda_best, base.d_l_value, disp
        ),
    }
}

// ---------------------------------------------------------------- 7

fn criterion_rf_beats_subsampling() -> Outcome {
    // Loadings live in the upper half of the band, k = 5 atoms, m = 1 row per
    // record: the smallest size for which total rows (m·t = 8) still reach k.
    let n_s = 100;
    let mut cfg = SynthConfig::new(2000, 5, 8, n_s, RngSpec::new(7, "synth"));
    cfg.noise_sigma = 0.1;
    cfg.loading_freq_range = (n_s as f64 / 4.0, n_s as f64 / 2.0 - 1.0);
    let (ds, _) = generate(&cfg).unwrap();
    let m = 1;
    let l = 5;
    let grid = [0.05, 0.1, 0.2, 0.5];
    let base = experiment(5, l, l, l, vec![]);
    let bench = Bench::with_dataset(base.clone(), ds.clone(), 1).unwrap();
    let reference = bench.run_reference().unwrap();
    let mut per_method: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for group in 0..5u64 {
        for method in [ReductionMethod::RangeFinder, ReductionMethod::Subsample] {
            let mut spec = base.clone();
            spec.reduction.seed = 100 + group;
            let bench = Bench::with_dataset(spec, ds.clone(), 1).unwrap();
            let cand = candidate(method, ReducedSize::Rows(m), &grid, l, 5000 + 100 * group);
            let (point, _) = bench.evaluate_candidate(&cand, &reference).unwrap();
            per_method.entry(method.short_name()).or_default().push(point.d_l_value);
        }
    }
    let rf = median(per_method["rf"].clone());
    let ss = median(per_method["ss"].clone());
    Outcome {
        pass: rf > ss,
        detail: format!("m = {m}: median d_l rf = {rf:.4}, ss = {ss:.4} over 5 seed groups"),
    }
}

// ---------------------------------------------------------------- 8

fn mean_cpu(runs: &[RunRecord]) -> f64 {
    runs.iter().map(|r| r.cpu_ms).sum::<f64>() / runs.len() as f64
}

fn criterion_scaling() -> Outcome {
    let (ds, _) = recovery_data(400, 0);
    let spec = experiment(5, 1, 1, 1, vec![]);
    let bench = Bench::with_dataset(spec, ds.clone(), 1).unwrap();
    let plan = ReductionPlan::new(ReductionMethod::RangeFinder, ReducedSize::Ratio(0.1), RngSpec::new(0, "reduce"));
    let (reduced, _) = reduce_dataset(&ds, &plan).unwrap();
    let full = mean_cpu(&bench.fit_runs(&ds, GOLDEN_LAMBDA, &[1, 2, 3]).unwrap());
    let small = mean_cpu(&bench.fit_runs(&reduced, GOLDEN_LAMBDA, &[1, 2, 3]).unwrap());
    Outcome {
        pass: small <= 0.25 * full,
        detail: format!(
            "cpu_time_dl alpha=0.1: {small:.1} ms, alpha=1.0: {full:.1} ms (ratio {:.3})",
            small / full
        ),
    }
}

// ---------------------------------------------------------------- 9

fn csv_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "csv") {
            out.insert(path.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&path).unwrap());
        }
    }
    out
}

fn criterion_determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = SynthConfig::new(300, 3, 3, 40, RngSpec::new(9, "synth"));
    cfg.noise_sigma = 0.1;
    let (ds, _) = generate(&cfg).unwrap();
    let mut spec = experiment(
        3,
        2,
        4,
        2,
        vec![
            candidate(ReductionMethod::RangeFinder, ReducedSize::Ratio(0.5), &[0.2, 0.5], 2, 300),
            candidate(ReductionMethod::Subsample, ReducedSize::Ratio(0.5), &[0.2, 0.5], 2, 400),
            candidate(ReductionMethod::ExactSvd, ReducedSize::Rows(10), &[0.5], 2, 500),
        ],
    );
    spec.l_values = vec![1, 2];
    spec.write_runs = WriteRuns::Best;
    let run = |workers: usize, out: &Path| {
        let bench = Bench::with_dataset(spec.clone(), ds.clone(), workers).unwrap();
        run_experiment(&bench, out, vec![]).unwrap();
        csv_files(out)
    };
    let a = run(1, &tmp.path().join("a"));
    let b = run(3, &tmp.path().join("b"));
    let runs_equal = ["reference/seed1000", "rf_alpha0.5/seed300"].iter().all(|r| {
        let f = |x: &str| fs::read(tmp.path().join(x).join("runs").join(r).join("maps.tcdm")).unwrap();
        f("a") == f("b")
    });
    Outcome {
        pass: !a.is_empty() && a == b && runs_equal,
        detail: format!("{} CSVs compared ({:?}); map files equal: {runs_equal}", a.len(), a.keys().collect::<Vec<_>>()),
    }
}

fn main() {
    let criteria: [(&str, Duration, fn() -> Outcome); 9] = [
        ("1 assignment oracle", Duration::from_secs(5), criterion_assignment),
        ("2 lasso oracle", Duration::from_secs(30), criterion_lasso),
        ("3 range finder vs svd", Duration::from_secs(60), criterion_range_finder),
        ("4 exactness properties", Duration::from_secs(60), criterion_properties),
        ("5 recovery", Duration::from_secs(300), criterion_recovery),
        ("6 compressed maps comparable", Duration::from_secs(900), criterion_compressed_comparable),
        ("7 range finder beats subsampling", Duration::from_secs(900), criterion_rf_beats_subsampling),
        ("8 dl time scales with alpha", Duration::from_secs(600), criterion_scaling),
        ("9 bench determinism", Duration::from_secs(600), criterion_determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, budget, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let t0 = Instant::now();
        let out = run();
        let elapsed = t0.elapsed();
        let pass = out.pass && elapsed < budget;
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {name}: {} ({:.1} s, budget {} s) {}",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs(),
            out.detail
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
