use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use kpn_entropy::bench::{self, ExperimentKind, ExperimentPlan, RampFamily, ResultRow};
use kpn_entropy::distributions::DistributionSpec;
use kpn_entropy::epmgp::EpConfig;
use kpn_entropy::estimators::diagnostics::{run_diagnostics, DiagnosticsOptions};
use kpn_entropy::estimators::{estimate_kl, estimate_kpn, EntropyReport, EstimatorConfig};
use kpn_entropy::knn::SampleSet;
use kpn_entropy::par::Execution;

/// Nearest-neighbour differential entropy estimation (KL and kpN).
#[derive(Debug, Parser)]
#[command(name = "entropy-kpn", version)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "ENTROPY_KPN_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate the entropy of samples read from a CSV file.
    Estimate(EstimateArgs),
    /// kpN parameter grid over N, k and p/N for the three reference distributions.
    BenchGrid(GridArgs),
    /// KL vs kpN over dimension for ramped Gaussian, Gamma and Beta products.
    BenchDims(DimsArgs),
    /// KL vs kpN on a Gaussian supported near a line, per observation count and noise.
    BenchManifold(ManifoldArgs),
    /// Self-checks of the estimator ingredients.
    Diagnostics(DiagnosticsArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Kl,
    Kpn,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
enum Format {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FamilyArg {
    Gaussian,
    Gamma,
    Beta,
}

impl FamilyArg {
    fn name(self) -> &'static str {
        match self {
            FamilyArg::Gaussian => "gaussian",
            FamilyArg::Gamma => "gamma",
            FamilyArg::Beta => "beta",
        }
    }
}

impl From<FamilyArg> for RampFamily {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Gaussian => RampFamily::Gaussian,
            FamilyArg::Gamma => RampFamily::Gamma,
            FamilyArg::Beta => RampFamily::Beta,
        }
    }
}

#[derive(Debug, Args)]
struct EstimateArgs {
    /// CSV with one sample per row; a non-numeric first row is taken as a header.
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "kpn")]
    method: MethodArg,
    #[arg(short, default_value_t = 4)]
    k: usize,
    /// Local Gaussian sample size (default: 2% of N, at least max(k, d+2)).
    #[arg(short)]
    p: Option<usize>,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    /// Write the report here instead of stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CommonBench {
    /// Base seed; ensemble member j uses seed + j.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 50)]
    ensembles: usize,
    /// Results CSV (default: stdout).
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Per-member estimates CSV.
    #[arg(long)]
    raw_out: Option<PathBuf>,
    /// Fill the wall_time_s column (output is then no longer reproducible byte for byte).
    #[arg(long)]
    timing: bool,
    /// Run a plan from a JSON file instead of the plan flags.
    #[arg(long, conflicts_with = "seed")]
    plan: Option<PathBuf>,
    /// Write the plan as JSON before running it.
    #[arg(long)]
    plan_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GridArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [1000, 2000, 4000, 8000, 16000, 32000])]
    n: Vec<usize>,
    #[arg(long, short, value_delimiter = ',', default_values_t = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10])]
    k: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.01, 0.02, 0.05, 0.1])]
    p_frac: Vec<f64>,
    /// Subset of the reference distributions (2-D normal, 3-D Gamma, 4-D Beta).
    #[arg(long, value_enum, value_delimiter = ',')]
    family: Vec<FamilyArg>,
    #[command(flatten)]
    common: CommonBench,
}

#[derive(Debug, Args)]
struct DimsArgs {
    #[arg(long, value_enum, value_delimiter = ',', default_values = ["gaussian", "gamma", "beta"])]
    family: Vec<FamilyArg>,
    #[arg(long, value_delimiter = ',', default_values_t = [4, 8, 16, 40, 80])]
    dims: Vec<usize>,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(short, long, default_value_t = 4)]
    k: usize,
    #[arg(long, default_value_t = 0.02)]
    p_frac: f64,
    #[command(flatten)]
    common: CommonBench,
}

#[derive(Debug, Args)]
struct ManifoldArgs {
    /// Noise variances σ².
    #[arg(long, value_delimiter = ',', default_values_t = [1e-1, 1e-3])]
    noise: Vec<f64>,
    /// Observation counts m (joint dimension m + 1).
    #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 3, 4, 5, 6, 7, 8, 9])]
    observations: Vec<usize>,
    #[arg(long, default_value_t = 5000)]
    n: usize,
    #[arg(short, long, default_value_t = 4)]
    k: usize,
    #[arg(long, default_value_t = 0.02)]
    p_frac: f64,
    #[command(flatten)]
    common: CommonBench,
}

#[derive(Debug, Args)]
struct DiagnosticsArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Replicates for the digamma identity check.
    #[arg(long, default_value_t = 500)]
    replicates: usize,
    /// EP convergence tolerance.
    #[arg(long, default_value_t = EpConfig::default().tol)]
    ep_tol: f64,
    #[arg(long, default_value_t = EpConfig::default().max_sweeps)]
    ep_max_sweeps: usize,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// Ok(false) means the command ran but reported failures.
fn run(cli: Cli) -> Result<bool> {
    let execution = configure_threads(cli.threads)?;
    match cli.command {
        Command::Estimate(a) => cmd_estimate(a, execution),
        Command::BenchGrid(a) => {
            let plan = match &a.common.plan {
                Some(path) => read_plan(path, ExperimentKind::Grid)?,
                None => {
                    let mut specs = DistributionSpec::grid_study_set();
                    if !a.family.is_empty() {
                        let keep: Vec<&str> = a.family.iter().map(|f| f.name()).collect();
                        specs.retain(|s| keep.contains(&s.family_name()));
                    }
                    ExperimentPlan::grid(specs, a.n, a.k, a.p_frac, a.common.ensembles, require_seed(&a.common)?)
                }
            };
            cmd_bench(plan, &a.common, execution)
        }
        Command::BenchDims(a) => {
            let plan = match &a.common.plan {
                Some(path) => read_plan(path, ExperimentKind::DimSweep)?,
                None => {
                    let families: Vec<RampFamily> = a.family.iter().map(|&f| f.into()).collect();
                    let seed = require_seed(&a.common)?;
                    ExperimentPlan::dim_sweep(&families, &a.dims, a.n, a.k, a.p_frac, a.common.ensembles, seed)
                }
            };
            cmd_bench(plan, &a.common, execution)
        }
        Command::BenchManifold(a) => {
            let plan = match &a.common.plan {
                Some(path) => read_plan(path, ExperimentKind::Manifold)?,
                None => {
                    let seed = require_seed(&a.common)?;
                    ExperimentPlan::manifold(&a.observations, &a.noise, a.n, a.k, a.p_frac, a.common.ensembles, seed)
                }
            };
            cmd_bench(plan, &a.common, execution)
        }
        Command::Diagnostics(a) => cmd_diagnostics(a, execution),
    }
}

fn configure_threads(threads: Option<usize>) -> Result<Execution> {
    match threads {
        Some(0) => bail!("--threads must be at least 1"),
        Some(1) => Ok(Execution::Sequential),
        #[cfg(feature = "parallel")]
        Some(t) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build_global()
                .context("configuring the worker pool")?;
            Ok(Execution::Parallel)
        }
        #[cfg(not(feature = "parallel"))]
        Some(_) => Ok(Execution::Sequential),
        None => Ok(Execution::default()),
    }
}

fn require_seed(c: &CommonBench) -> Result<u64> {
    c.seed.context("--seed is required for benchmark runs")
}

fn read_plan(path: &Path, kind: ExperimentKind) -> Result<ExperimentPlan> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading plan {}", path.display()))?;
    let plan: ExperimentPlan = serde_json::from_str(&text).with_context(|| format!("parsing plan {}", path.display()))?;
    if plan.kind != kind {
        bail!("plan {} is a {} plan, expected {}", path.display(), plan.kind.as_str(), kind.as_str());
    }
    Ok(plan)
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    })
}

/// Reads a numeric CSV; a first row with any non-numeric cell is a header.
fn read_samples(path: &Path) -> Result<SampleSet> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut data = Vec::new();
    let mut width = None;
    for (idx, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("reading {}", path.display()))?;
        let line = record.position().map_or(idx as u64 + 1, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        let row = match parsed {
            Ok(row) => row,
            Err(_) if idx == 0 => continue,
            Err(_) => {
                let bad = record.iter().find(|c| c.parse::<f64>().is_err()).unwrap_or_default();
                bail!("{}:{line}: non-numeric value {bad:?}", path.display());
            }
        };
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                bail!("{}:{line}: expected {w} columns, found {}", path.display(), row.len())
            }
            _ => {}
        }
        if let Some(v) = row.iter().find(|v| !v.is_finite()) {
            bail!("{}:{line}: non-finite value {v}", path.display());
        }
        data.extend(row);
    }
    let d = width.with_context(|| format!("{} contains no samples", path.display()))?;
    Ok(SampleSet::from_flat(d, data)?)
}

fn cmd_estimate(a: EstimateArgs, execution: Execution) -> Result<bool> {
    let s = read_samples(&a.input)?;
    let report = match a.method {
        MethodArg::Kl => {
            if a.k == 0 || a.k >= s.n() {
                bail!("usage: need 1 ≤ k ≤ N−1 (k={}, N={})", a.k, s.n());
            }
            estimate_kl(&s, a.k)?
        }
        MethodArg::Kpn => {
            let p = a.p.unwrap_or_else(|| bench::neighbor_count(0.02, s.n(), a.k, s.d()));
            let cfg = EstimatorConfig::new(a.k, p).with_execution(execution);
            cfg.validate(s.n()).context("usage")?;
            estimate_kpn(&s, &cfg)?
        }
    };
    let mut out = open_output(a.output.as_deref())?;
    match a.format {
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?,
        Format::Text => write_report_text(&mut out, &report)?,
    }
    out.flush()?;
    Ok(true)
}

fn write_report_text(out: &mut dyn Write, r: &EntropyReport) -> io::Result<()> {
    writeln!(out, "method: {}", r.method.as_str())?;
    writeln!(out, "estimate: {}", r.estimate)?;
    writeln!(out, "term_psi: {}", r.term_psi)?;
    writeln!(out, "mean_log_volume: {}", r.mean_log_volume)?;
    writeln!(out, "mean_neg_log_g: {}", r.mean_neg_log_g)?;
    writeln!(out, "mean_log_mass: {}", r.mean_log_mass)?;
    writeln!(out, "n: {}", r.n)?;
    writeln!(out, "d: {}", r.d)?;
    writeln!(out, "k: {}", r.k)?;
    if let Some(p) = r.p {
        writeln!(out, "p: {p}")?;
    }
    writeln!(out, "ep_nonconverged: {}", r.ep_nonconverged)
}

fn cmd_bench(mut plan: ExperimentPlan, c: &CommonBench, execution: Execution) -> Result<bool> {
    plan.record_timing |= c.timing;
    plan.execution = execution;
    plan.validate().context("usage")?;
    if let Some(path) = &c.plan_out {
        std::fs::write(path, serde_json::to_string_pretty(&plan)?).with_context(|| format!("writing {}", path.display()))?;
    }
    let rows: Vec<ResultRow> = bench::run(&plan)?;
    let out = open_output(c.out.as_deref())?;
    bench::write_results_csv(&rows, out)?;
    if let Some(path) = &c.raw_out {
        let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        bench::write_raw_csv(&rows, plan.base_seed, BufWriter::new(f))?;
    }
    let failures: Vec<&ResultRow> = rows.iter().filter(|r| r.failed()).collect();
    for r in &failures {
        eprintln!("failed: {}: {}", r.experiment, r.error.as_deref().unwrap_or(""));
    }
    Ok(failures.is_empty())
}

fn cmd_diagnostics(a: DiagnosticsArgs, execution: Execution) -> Result<bool> {
    if a.replicates < 2 {
        bail!("usage: --replicates must be at least 2");
    }
    let opts = DiagnosticsOptions {
        ep: EpConfig {
            tol: a.ep_tol,
            max_sweeps: a.ep_max_sweeps,
            ..EpConfig::default()
        },
        seed: a.seed,
        identity_replicates: a.replicates,
        execution,
    };
    let checks = run_diagnostics(&opts)?;
    let all_passed = checks.iter().all(|c| c.passed);
    let mut out = io::stdout().lock();
    match a.format {
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&checks)?)?,
        Format::Text => {
            for c in &checks {
                writeln!(out, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
            }
        }
    }
    Ok(all_passed)
}
