//! Command-line front end: `estimate`, `simulate`, `benchmark`, `stability`.
//!
//! Exit codes: 0 success, 2 usage or parse error, 3 data invariant
//! violation, 4 numerical failure.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array2;
use serde::Serialize;

use crate::benchmark::{
    run_benchmark, BenchEstimator, BenchmarkResults, BenchmarkSpec, Structure, METRICS,
};
use crate::compdata::{close_counts, CompositionMatrix, CountMatrix, DEFAULT_ZERO_REPLACEMENT};
use crate::error::{Error, Result};
use crate::simgen::{basis_to_composition, build_omega0, sample_case, SimulationCase};
use crate::stability::{bootstrap_stability, extract_edges, BootstrapOptions, Edge, Resampling};
use crate::tuning::{estimate, EstimatorConfig, EstimatorKind};

pub const THREADS_ENV: &str = "RCEC_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "rcec",
    version,
    about = "Robust sparse covariance estimation for compositional data"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Random seed for cross-validation folds, simulation and bootstrap.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Thresholding rule: soft | alasso:<eta> | scad:<a>.
    #[arg(long, global = true)]
    rule: Option<String>,
    /// Cross-validation folds.
    #[arg(long, global = true)]
    folds: Option<usize>,
    /// Number of lambda grid values.
    #[arg(long = "grid-size", global = true)]
    grid_size: Option<usize>,
    /// Block-count constant L in M = ceil((2 + L) ln p).
    #[arg(long = "L", global = true)]
    block_constant: Option<f64>,
    /// Explicit median-of-means block count (overrides L).
    #[arg(long, global = true)]
    blocks: Option<usize>,
    /// rcec | coat.
    #[arg(long, global = true)]
    estimator: Option<String>,
    /// Treat input values as raw counts (zero replacement + closure).
    #[arg(long, global = true)]
    counts: bool,
    /// Value substituted for zero counts.
    #[arg(long = "zero-replacement", global = true)]
    zero_replacement: Option<f64>,
    /// Skip the positive-definiteness restriction of the lambda grid.
    #[arg(long = "no-pd", global = true)]
    no_pd: bool,
    /// Threshold diagonal entries as well.
    #[arg(long = "threshold-diagonal", global = true)]
    threshold_diagonal: bool,
    /// Flat `key = value` estimator configuration; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate a sparse basis covariance from a CSV of samples.
    Estimate {
        input: PathBuf,
        #[arg(long = "out-dir", short = 'o')]
        out_dir: PathBuf,
    },
    /// Generate a synthetic composition CSV and a metadata sidecar.
    Simulate {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
        case: u8,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 50)]
        p: usize,
        #[arg(long, short = 'o')]
        out: PathBuf,
    },
    /// Monte Carlo loss and support-recovery tables.
    Benchmark {
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4",
              value_parser = clap::value_parser!(u8).range(1..=4))]
        cases: Vec<u8>,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long = "p", value_delimiter = ',', default_value = "50,100,200")]
        p_list: Vec<usize>,
        #[arg(long, default_value_t = 200)]
        replications: usize,
        #[arg(long, value_delimiter = ',', default_value = "rcec,coat,oracle")]
        estimators: Vec<String>,
        #[arg(long, value_enum, default_value_t = StructureArg::TwoBlock)]
        structure: StructureArg,
        #[arg(long = "out-dir", short = 'o')]
        out_dir: PathBuf,
    },
    /// Bootstrap stability of the estimated network.
    Stability {
        input: PathBuf,
        /// Bootstrap replicates.
        #[arg(long = "replicates", short = 'B', default_value_t = crate::stability::DEFAULT_REPLICATES)]
        replicates: usize,
        /// Keep edges seen in at least this many replicates.
        #[arg(long, default_value_t = crate::stability::DEFAULT_RETAIN)]
        retain: usize,
        /// Reuse the full-data lambda in every replicate.
        #[arg(long = "reuse-lambda")]
        reuse_lambda: bool,
        /// Use the unresampled data as every replicate.
        #[arg(long = "self-replicate", hide = true)]
        self_replicate: bool,
        #[arg(long, short = 'o')]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StructureArg {
    TwoBlock,
    Diagonal,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Diagnostics go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let pool = match thread_pool() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    match pool.install(|| dispatch(cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let k: usize = v.trim().parse().ok().filter(|k| *k > 0).ok_or_else(|| {
            Error::invalid(format!(
                "{THREADS_ENV} must be a positive integer, got `{v}`"
            ))
        })?;
        builder = builder.num_threads(k);
    }
    builder
        .build()
        .map_err(|e| Error::Numerical(format!("cannot start worker threads: {e}")))
}

fn dispatch(cli: Cli) -> Result<()> {
    let config = build_config(&cli.global)?;
    match cli.command {
        Command::Estimate { input, out_dir } => {
            cmd_estimate(&input, &out_dir, &cli.global, &config)
        }
        Command::Simulate { case, n, p, out } => cmd_simulate(case, n, p, config.seed, &out),
        Command::Benchmark {
            cases,
            n,
            p_list,
            replications,
            estimators,
            structure,
            out_dir,
        } => {
            let estimators = estimators
                .iter()
                .map(|s| s.parse())
                .collect::<Result<Vec<BenchEstimator>>>()?;
            let spec = BenchmarkSpec {
                cases,
                n,
                p_list,
                replications,
                estimators,
                seed: config.seed,
                structure: match structure {
                    StructureArg::TwoBlock => Structure::TwoBlock,
                    StructureArg::Diagonal => Structure::Diagonal,
                },
                config,
            };
            cmd_benchmark(&spec, &out_dir)
        }
        Command::Stability {
            input,
            replicates,
            retain,
            reuse_lambda,
            self_replicate,
            out,
        } => {
            let options = BootstrapOptions {
                replicates,
                retain_threshold: retain,
                seed: config.seed,
                reuse_lambda,
                resampling: if self_replicate {
                    Resampling::Identity
                } else {
                    Resampling::WithReplacement
                },
            };
            cmd_stability(&input, &out, &cli.global, &config, &options)
        }
    }
}

fn build_config(g: &GlobalArgs) -> Result<EstimatorConfig> {
    let mut c = EstimatorConfig::default();
    if let Some(path) = &g.config {
        c = c.merge_kv_str(&fs::read_to_string(path)?)?;
    }
    if let Some(s) = g.seed {
        c.seed = s;
    }
    if let Some(r) = &g.rule {
        c.rule = r.parse()?;
    }
    if let Some(v) = g.folds {
        c.folds = v;
    }
    if let Some(v) = g.grid_size {
        c.grid_size = v;
    }
    if let Some(v) = g.block_constant {
        c.block_constant = v;
    }
    if let Some(v) = g.blocks {
        c.block_count = Some(v);
    }
    if let Some(e) = &g.estimator {
        c.kind = e.parse::<EstimatorKind>()?;
    }
    if g.no_pd {
        c.enforce_pd = false;
    }
    if g.threshold_diagonal {
        c.threshold_diagonal = true;
    }
    c.validate()?;
    Ok(c)
}

/// A labeled numeric table read from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub values: Array2<f64>,
}

/// Reads a comma-separated file with a header row of column names and one
/// numeric record per row.
pub fn read_table(path: &Path) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(e, path))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(e, path))?
        .iter()
        .map(str::to_string)
        .collect();
    let p = header.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(e, path))?;
        let line = record.position().map_or(0, |pos| pos.line() as usize);
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                column: col + 1,
                message: format!("`{field}` is not a number ({})", path.display()),
            })?;
            data.push(v);
        }
        rows += 1;
    }
    let values = Array2::from_shape_vec((rows, p), data)
        .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    Ok(Table { header, values })
}

fn csv_error(e: csv::Error, path: &Path) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::Parse {
            line,
            column: 1,
            message: format!("{kind:?} ({})", path.display()),
        },
    }
}

fn read_composition(input: &Path, g: &GlobalArgs) -> Result<(Vec<String>, CompositionMatrix)> {
    let table = read_table(input)?;
    let x = if g.counts {
        let counts = CountMatrix::new(table.values)?;
        close_counts(
            &counts,
            g.zero_replacement.unwrap_or(DEFAULT_ZERO_REPLACEMENT),
        )?
    } else {
        CompositionMatrix::new(table.values)?
    };
    Ok((table.header, x))
}

/// Six significant digits, for human-facing reports.
pub fn sig6(x: f64) -> f64 {
    if x.is_finite() {
        format!("{x:.5e}").parse().unwrap_or(x)
    } else {
        x
    }
}

#[derive(Serialize)]
struct EdgeOut<'a> {
    i: usize,
    j: usize,
    taxon_i: &'a str,
    taxon_j: &'a str,
    sign: i8,
    weight: f64,
    correlation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    occurrences: Option<usize>,
}

fn edge_out<'a>(e: &Edge, taxa: &'a [String], occurrences: Option<usize>) -> EdgeOut<'a> {
    EdgeOut {
        i: e.i,
        j: e.j,
        taxon_i: &taxa[e.i],
        taxon_j: &taxa[e.j],
        sign: e.sign,
        weight: e.weight,
        correlation: e.correlation.is_finite().then_some(e.correlation),
        occurrences,
    }
}

#[derive(Serialize)]
struct ConfigOut {
    estimator: String,
    rule: String,
    folds: usize,
    grid_size: usize,
    block_constant: f64,
    enforce_pd: bool,
    threshold_diagonal: bool,
    seed: u64,
}

impl From<&EstimatorConfig> for ConfigOut {
    fn from(c: &EstimatorConfig) -> Self {
        Self {
            estimator: c.kind.to_string(),
            rule: c.rule.to_string(),
            folds: c.folds,
            grid_size: c.grid_size,
            block_constant: c.block_constant,
            enforce_pd: c.enforce_pd,
            threshold_diagonal: c.threshold_diagonal,
            seed: c.seed,
        }
    }
}

#[derive(Serialize)]
struct EstimateReport {
    estimator: String,
    n: usize,
    p: usize,
    block_count: usize,
    lambda_star: f64,
    lambda_pd: Option<f64>,
    min_eigenvalue: f64,
    edges: usize,
    cv_curve: Vec<[f64; 2]>,
    config: ConfigOut,
    warnings: Vec<String>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::invalid(e.to_string()))?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

fn cmd_estimate(
    input: &Path,
    out_dir: &Path,
    g: &GlobalArgs,
    config: &EstimatorConfig,
) -> Result<()> {
    let (taxa, x) = read_composition(input, g)?;
    let result = estimate(&x, config)?;
    fs::create_dir_all(out_dir)?;

    let p = x.p();
    let mut csv = String::from("taxon");
    for t in &taxa {
        write!(csv, ",{t}").unwrap();
    }
    csv.push('\n');
    for (i, t) in taxa.iter().enumerate() {
        csv.push_str(t);
        for j in 0..p {
            write!(csv, ",{}", result.omega_hat.get(i, j)).unwrap();
        }
        csv.push('\n');
    }
    fs::write(out_dir.join("covariance.csv"), csv)?;

    let edges = extract_edges(&result.omega_hat);
    let positives = edges.edges.iter().filter(|e| e.sign > 0).count();
    write_json(
        &out_dir.join("edges.json"),
        &serde_json::json!({
            "edges": edges.edges.iter().map(|e| edge_out(e, &taxa, None)).collect::<Vec<_>>(),
            "positives": positives,
            "negatives": edges.len() - positives,
        }),
    )?;

    let report = EstimateReport {
        estimator: config.kind.to_string(),
        n: x.n(),
        p,
        block_count: result.block_count,
        lambda_star: sig6(result.lambda_star),
        lambda_pd: result.lambda_pd.map(sig6),
        min_eigenvalue: sig6(result.min_eigenvalue),
        edges: edges.len(),
        cv_curve: result
            .cv_curve
            .iter()
            .map(|&(l, e)| [sig6(l), sig6(e)])
            .collect(),
        config: config.into(),
        warnings: result.warnings.clone(),
    };
    write_json(&out_dir.join("report.json"), &report)?;
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn cmd_simulate(case: u8, n: usize, p: usize, seed: u64, out: &Path) -> Result<()> {
    let sim = SimulationCase::numbered(case)?;
    let omega0 = build_omega0(p)?;
    let y = sample_case(sim, &omega0, n, seed)?;
    let x = basis_to_composition(&y)?;
    let mut csv = (1..=p)
        .map(|j| format!("t{j}"))
        .collect::<Vec<_>>()
        .join(",");
    csv.push('\n');
    for row in x.values().rows() {
        let line = row
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",");
        csv.push_str(&line);
        csv.push('\n');
    }
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(out, csv)?;
    write_json(
        &sidecar_path(out),
        &serde_json::json!({
            "case": case,
            "distribution": sim.name(),
            "n": n,
            "p": p,
            "seed": seed,
            "structure": "two-block",
            "rng": "chacha20",
        }),
    )
}

/// `<out>.meta.json`.
pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn cmd_benchmark(spec: &BenchmarkSpec, out_dir: &Path) -> Result<()> {
    let results = run_benchmark(spec)?;
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("results.csv"), results_csv(&results))?;
    fs::write(out_dir.join("results.md"), results_markdown(spec, &results))?;
    fs::write(out_dir.join("replications.csv"), replications_csv(&results))?;
    Ok(())
}

fn results_csv(r: &BenchmarkResults) -> String {
    let mut s = String::from("case,p,estimator,metric,mean,sd,replications,seed\n");
    for row in &r.summary {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            row.case,
            row.p,
            row.estimator,
            row.metric,
            sig6(row.mean),
            sig6(row.sd),
            row.replications,
            row.seed
        )
        .unwrap();
    }
    s
}

fn replications_csv(r: &BenchmarkResults) -> String {
    let mut s = String::from(
        "case,p,estimator,replication,l1,spectral,frobenius,tpr,fpr,sign_consistent,lambda_star\n",
    );
    for x in &r.records {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            x.case,
            x.p,
            x.estimator,
            x.replication,
            sig6(x.l1),
            sig6(x.spectral),
            sig6(x.frobenius),
            sig6(x.tpr),
            sig6(x.fpr),
            x.sign_consistent as u8,
            sig6(x.lambda_star)
        )
        .unwrap();
    }
    s
}

fn results_markdown(spec: &BenchmarkSpec, r: &BenchmarkResults) -> String {
    let panels = [
        ("l1", "Matrix L1 norm loss"),
        ("spectral", "Spectral norm loss"),
        ("frobenius", "Frobenius norm loss"),
        ("tpr", "True positive rate"),
        ("fpr", "False positive rate"),
    ];
    debug_assert!(panels.iter().all(|(m, _)| METRICS.contains(m)));
    let mut s = String::new();
    for &case in &spec.cases {
        writeln!(
            s,
            "## Case {case}\n\nn = {}, {} replications, seed {}. Entries are mean (standard deviation across replications).\n",
            spec.n, spec.replications, spec.seed
        )
        .unwrap();
        write!(s, "| p |").unwrap();
        for e in &spec.estimators {
            write!(s, " {e} |").unwrap();
        }
        s.push('\n');
        s.push_str("|---|");
        s.push_str(&"---|".repeat(spec.estimators.len()));
        s.push('\n');
        for (metric, title) in panels {
            writeln!(s, "| **{title}** |{}", " |".repeat(spec.estimators.len())).unwrap();
            for &p in &spec.p_list {
                write!(s, "| {p} |").unwrap();
                for &e in &spec.estimators {
                    let row = r
                        .summary
                        .iter()
                        .find(|x| {
                            x.case == case && x.p == p && x.estimator == e && x.metric == metric
                        })
                        .expect("summary row");
                    write!(s, " {:.3} ({:.3}) |", row.mean, row.sd).unwrap();
                }
                s.push('\n');
            }
        }
        s.push('\n');
    }
    if !r.degenerate_tpr.is_empty() {
        s.push_str("Note: the true covariance has no off-diagonal support in these cells, so the true positive rate is degenerate and reported as 1:\n\n");
        for (c, p, e) in &r.degenerate_tpr {
            writeln!(s, "- case {c}, p = {p}, {e}").unwrap();
        }
    }
    s
}

#[derive(Serialize)]
struct StabilityOut<'a> {
    estimator: String,
    replicates: usize,
    retain_threshold: usize,
    seed: u64,
    reuse_lambda: bool,
    baseline_lambda: f64,
    stability: f64,
    positives: usize,
    negatives: usize,
    sign_agreement: f64,
    edges: Vec<EdgeOut<'a>>,
    baseline_edges: Vec<EdgeOut<'a>>,
}

fn cmd_stability(
    input: &Path,
    out: &Path,
    g: &GlobalArgs,
    config: &EstimatorConfig,
    options: &BootstrapOptions,
) -> Result<()> {
    let (taxa, x) = read_composition(input, g)?;
    let report = bootstrap_stability(&x, config, options)?;
    let body = StabilityOut {
        estimator: config.kind.to_string(),
        replicates: report.replicates,
        retain_threshold: report.retain_threshold,
        seed: options.seed,
        reuse_lambda: options.reuse_lambda,
        baseline_lambda: sig6(report.baseline_lambda),
        stability: sig6(report.stability),
        positives: report.positives,
        negatives: report.negatives,
        sign_agreement: sig6(report.sign_agreement),
        edges: report
            .stable
            .edges
            .iter()
            .map(|e| edge_out(e, &taxa, Some(report.stable.occurrences(e.i, e.j))))
            .collect(),
        baseline_edges: report
            .baseline
            .edges
            .iter()
            .map(|e| edge_out(e, &taxa, Some(report.baseline.occurrences(e.i, e.j))))
            .collect(),
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_json(out, &body)
}
