//! `tcdl`: synthesize, reduce, decompose, compare and benchmark.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use tcdl_core::bench::{run_experiment, Bench, ExperimentSpec};
use tcdl_core::correspondence::{d_l, MapSet};
use tcdl_core::cputime::timed;
use tcdl_core::dictlearn::{fit, DlConfig, DEFAULT_BATCH_SIZE};
use tcdl_core::io::{read_dataset, read_matrix, write_dataset, write_matrix};
use tcdl_core::metadata::{read_maps, write_decomposition_dir, RunMetadata};
use tcdl_core::reduction::{reduce_dataset, ReducedSize, ReductionMethod, ReductionPlan};
use tcdl_core::synth::{generate, SynthConfig};
use tcdl_core::{Error, Result, RngSpec};

#[derive(Parser)]
#[command(name = "tcdl", version, about = "Time-compressed sparse dictionary learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with known maps and loadings.
    Synth(SynthArgs),
    /// Compress every record along time.
    Reduce(ReduceArgs),
    /// Learn temporal atoms and sparse spatial maps.
    Decompose(DecomposeArgs),
    /// Correspondence between reference and candidate decompositions.
    Compare(CompareArgs),
    /// Run an experiment spec.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    p: usize,
    #[arg(long)]
    k: usize,
    /// Number of records.
    #[arg(long)]
    t: usize,
    /// Samples per record.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0.05)]
    sparsity: f64,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Loading frequency band in cycles per record, `LO:HI`.
    #[arg(long, value_parser = parse_band)]
    freq: Option<(f64, f64)>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
    /// Directory for the true maps and loadings.
    #[arg(long)]
    truth: PathBuf,
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("size").required(true).args(["m", "alpha"])))]
struct ReduceArgs {
    #[arg(long)]
    input: PathBuf,
    /// svd, rf or ss.
    #[arg(long, value_parser = parse_method)]
    method: ReductionMethod,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, default_value_t = 10)]
    oversample: usize,
    #[arg(long, default_value_t = 1)]
    power_iters: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    report: PathBuf,
    #[arg(long, env = "TCDL_WORKERS")]
    workers: Option<usize>,
}

#[derive(Args)]
struct DecomposeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    lambda: f64,
    /// Initial p × k maps.
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_BATCH_SIZE)]
    batch_size: usize,
    #[arg(long, default_value_t = 1)]
    epochs: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// Comma-separated decomposition directories or maps files.
    #[arg(long, value_delimiter = ',', required = true)]
    reference: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', required = true)]
    candidate: Vec<PathBuf>,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, env = "TCDL_WORKERS")]
    workers: Option<usize>,
    #[arg(long)]
    output: PathBuf,
}

fn parse_band(s: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(':').ok_or("expected LO:HI")?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("LO: {e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("HI: {e}"))?;
    if !(lo <= hi) {
        return Err(format!("LO = {lo} exceeds HI = {hi}"));
    }
    Ok((lo, hi))
}

fn parse_method(s: &str) -> std::result::Result<ReductionMethod, String> {
    ReductionMethod::parse(s).ok_or_else(|| format!("unknown method {s:?}; expected svd, rf or ss"))
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Usage(_) => 1,
        Error::Numerical(_) => 3,
        _ => 2,
    }
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".run.json");
    PathBuf::from(s)
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn argv() -> Vec<String> {
    std::env::args().collect()
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut cfg = SynthConfig::new(a.p, a.k, a.t, a.n, RngSpec::new(a.seed, "synth"));
    cfg.sparsity = a.sparsity;
    cfg.noise_sigma = a.noise;
    if let Some(band) = a.freq {
        cfg.loading_freq_range = band;
    }
    let ((ds, truth), ms) = {
        let (r, ms) = timed(|| generate(&cfg));
        (r?, ms)
    };

    let mut meta = RunMetadata::new(argv(), serde_json::to_value(&cfg)?);
    meta.seeds.push(a.seed);
    meta.elapsed_ms.insert("generate_cpu".into(), ms);

    ensure_parent(&a.output)?;
    write_dataset(&ds, &a.output)?;
    fs::create_dir_all(&a.truth)?;
    write_matrix(&truth.true_maps, a.truth.join("maps.tcdm"))?;
    for (rec, u) in ds.records().iter().zip(&truth.true_loadings) {
        write_matrix(u, a.truth.join(format!("loadings_{}.tcdm", rec.record_id())))?;
    }
    meta.write(a.truth.join("run.json"))?;
    meta.write(sidecar(&a.output))
}

fn reduce(a: ReduceArgs) -> Result<()> {
    let size = match (a.m, a.alpha) {
        (Some(m), None) => ReducedSize::Rows(m),
        (None, Some(alpha)) => ReducedSize::Ratio(alpha),
        _ => return Err(Error::Usage("give exactly one of --m / --alpha".into())),
    };
    let ds = read_dataset(&a.input)?;
    let mut plan = ReductionPlan::new(a.method, size, RngSpec::new(a.seed, "reduce"));
    plan.oversample = a.oversample;
    plan.power_iters = a.power_iters;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.workers.unwrap_or_else(default_workers).max(1))
        .build()
        .map_err(|e| Error::Usage(format!("cannot start workers: {e}")))?;
    let t0 = Instant::now();
    let (reduced, reports) = pool.install(|| reduce_dataset(&ds, &plan))?;
    let total_ms = t0.elapsed().as_secs_f64() * 1e3;

    let mut csv = String::from("record_id,method,m,residual_fro,elapsed_ms\n");
    for r in &reports {
        csv.push_str(&format!(
            "{},{},{},{},{:.3}\n",
            r.record_id,
            r.result.method.short_name(),
            r.result.m,
            r.result.residual_fro,
            r.elapsed_ms
        ));
    }
    let mut meta = RunMetadata::new(argv(), serde_json::to_value(&plan)?);
    meta.seeds.push(a.seed);
    meta.elapsed_ms.insert("reduce_wall".into(), total_ms);
    meta.elapsed_ms
        .insert("reduce_cpu".into(), reports.iter().map(|r| r.cpu_ms).sum());

    ensure_parent(&a.output)?;
    ensure_parent(&a.report)?;
    write_dataset(&reduced, &a.output)?;
    fs::write(&a.report, csv)?;
    meta.write(sidecar(&a.output))
}

fn decompose(a: DecomposeArgs) -> Result<()> {
    let ds = read_dataset(&a.input)?;
    let mut cfg = DlConfig::new(a.k, a.lambda, RngSpec::new(a.seed, "dl"));
    cfg.batch_size = a.batch_size;
    cfg.epochs = a.epochs;
    if let Some(init) = &a.init {
        cfg.init_maps = Some(read_matrix(init)?);
    }
    let (d, ms) = timed(|| fit(&ds, &cfg));
    let d = d?;
    let mut config = serde_json::to_value(&cfg)?;
    if let Some(init) = &a.init {
        config["init_maps"] = serde_json::Value::String(init.display().to_string());
    }
    let mut meta = RunMetadata::new(argv(), config);
    meta.seeds.push(a.seed);
    meta.elapsed_ms.insert("fit_cpu".into(), ms);
    write_decomposition_dir(&a.output, &d, &meta)
}

fn load_runs(paths: &[PathBuf]) -> Result<Vec<MapSet>> {
    paths
        .iter()
        .map(|p| Ok(MapSet::from_run(read_maps(p)?, &p.display().to_string())))
        .collect()
}

fn compare(a: CompareArgs) -> Result<()> {
    let reference = load_runs(&a.reference)?;
    let candidate = load_runs(&a.candidate)?;
    for (name, runs) in [("reference", &reference), ("candidate", &candidate)] {
        if let Some(r) = runs.iter().find(|r| r.p() != runs[0].p()) {
            return Err(Error::Dimension(format!(
                "{name} runs have p = {} and p = {}",
                runs[0].p(),
                r.p()
            )));
        }
    }
    let (pr, pc) = (reference[0].p(), candidate[0].p());
    if pr != pc {
        return Err(Error::Dimension(format!(
            "reference maps have p = {pr} voxels but candidate maps have p = {pc}"
        )));
    }
    let c = d_l(&reference, &candidate)?;

    let mut csv = String::from("row_type,pair_i,pair_j,corr,dispersion\n");
    for p in &c.matching.pairs {
        csv.push_str(&format!("pair,{},{},{},\n", p.i, p.j, p.corr));
    }
    let disp = c.dispersion.map(|v| v.to_string()).unwrap_or_default();
    csv.push_str(&format!("summary,,,{},{}\n", c.value, disp));

    let mut meta = RunMetadata::new(
        argv(),
        serde_json::json!({
            "reference": a.reference,
            "candidate": a.candidate,
            "l": candidate.len(),
        }),
    );
    meta.results = serde_json::json!({
        "d_l": c.value,
        "dispersion": c.dispersion,
        "group_values": c.group_values,
    });
    ensure_parent(&a.output)?;
    fs::write(&a.output, csv)?;
    meta.write(sidecar(&a.output))
}

fn bench(a: BenchArgs) -> Result<()> {
    let spec = ExperimentSpec::from_file(&a.spec)?;
    let bench = Bench::new(spec, a.workers.unwrap_or_else(default_workers))?;
    let outcome = run_experiment(&bench, &a.output, argv())?;
    for (label, msg) in &outcome.tradeoff.failures {
        eprintln!("warning: candidate {label} failed: {msg}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Reduce(a) => reduce(a),
        Command::Decompose(a) => decompose(a),
        Command::Compare(a) => compare(a),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tcdl: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
