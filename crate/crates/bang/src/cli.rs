//! Command-line surface: discover structure from CSV data, simulate synthetic
//! datasets, run benchmark sweeps, and run oracle identifiability suites.
//!
//! Exit codes: 0 ok, 2 input error (unreadable files, bad flags), 3
//! precondition error (data shape, degenerate columns, unsupported oracle).

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algo::{run_bang, Backend, BangOutcome, DiscoveryConfig, ORACLE_ZERO_TOL};
use crate::eltest::{TestKind, EL_DEFAULT_MAX_ITERS};
use crate::graph::{confounded_collider, example_bap, pruning_example, GraphJson, MixedGraph};
use crate::moments::MomentOracle;
use crate::sem::{draw_parameters, ErrorFamily};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_PRECONDITION: i32 = 3;

/// Failures carry the exit code they map to.
pub enum CliError {
    /// Unreadable or malformed input, invalid flag combinations (exit 2).
    Input(anyhow::Error),
    /// Well-formed input that violates a command precondition (exit 3).
    Precondition(anyhow::Error),
}

fn input(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Input(e.into())
}

fn precondition(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Precondition(e.into())
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(name = "bang", about = "Causal discovery under latent confounding from non-Gaussian data", version)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate a mixed graph from a CSV data matrix
    Discover(DiscoverArgs),
    /// Generate synthetic data from a known or random model
    Simulate(SimulateArgs),
    /// Monte-Carlo sweep: random models, sampled data, recovery scoring
    Benchmark(BenchmarkArgs),
    /// Exact-moment identifiability runs with invariant checks
    OracleSuite(OracleSuiteArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestChoice {
    /// Empirical-likelihood test against a chi-square reference
    El,
    /// Fixed acceptance band on the raw cross-moment statistics
    Threshold,
}

/// Flags shared by every subcommand. All optional so that config-file values
/// show through; precedence is flags > config file > defaults.
#[derive(Args, Debug, Clone)]
struct SharedFlags {
    /// Moment order K (3 or 4); default is the error family's natural order
    #[arg(long)]
    k: Option<u32>,
    /// Significance level for the empirical-likelihood test
    #[arg(long)]
    alpha: Option<f64>,
    /// Acceptance band width for the threshold test
    #[arg(long)]
    eta: Option<f64>,
    /// Independence test backend
    #[arg(long, value_enum)]
    test: Option<TestChoice>,
    /// Cap J on the size of candidate parent subsets
    #[arg(long = "max-degree")]
    max_degree: Option<usize>,
    /// RNG seed; replicates use per-replicate streams of this seed
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for replicate parallelism (default: all cores)
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also test reversed moments E(gamma_v^{K-1} gamma_c) when certifying
    #[arg(long)]
    symmetric: bool,
    /// Read and write graph files with 1-based vertex labels
    #[arg(long)]
    one_indexed: bool,
    /// JSON config file; explicit flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
}

/// The fully resolved run configuration, echoed into every output directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EffectiveConfig {
    pub k: Option<u32>,
    pub alpha: f64,
    pub eta: f64,
    pub test: TestChoice,
    pub max_degree: Option<usize>,
    pub seed: u64,
    pub workers: Option<usize>,
    pub out: PathBuf,
    pub symmetric: bool,
    pub one_indexed: bool,
}

impl Default for EffectiveConfig {
    fn default() -> Self {
        EffectiveConfig {
            k: None,
            alpha: 0.001,
            eta: 0.05,
            test: TestChoice::El,
            max_degree: None,
            seed: 0,
            workers: None,
            out: PathBuf::from("."),
            symmetric: false,
            one_indexed: false,
        }
    }
}

impl EffectiveConfig {
    fn resolve(flags: &SharedFlags) -> CliResult<Self> {
        let mut cfg = match &flags.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))
                    .map_err(input)?;
                serde_json::from_str(&text)
                    .with_context(|| format!("parsing config {}", path.display()))
                    .map_err(input)?
            }
            None => EffectiveConfig::default(),
        };
        if let Some(k) = flags.k {
            cfg.k = Some(k);
        }
        if let Some(a) = flags.alpha {
            cfg.alpha = a;
        }
        if let Some(e) = flags.eta {
            cfg.eta = e;
        }
        if let Some(t) = flags.test {
            cfg.test = t;
        }
        if flags.max_degree.is_some() {
            cfg.max_degree = flags.max_degree;
        }
        if let Some(s) = flags.seed {
            cfg.seed = s;
        }
        if flags.workers.is_some() {
            cfg.workers = flags.workers;
        }
        if let Some(out) = &flags.out {
            cfg.out = out.clone();
        }
        if flags.symmetric {
            cfg.symmetric = true;
        }
        if flags.one_indexed {
            cfg.one_indexed = true;
        }
        if let Some(k) = cfg.k {
            if !matches!(k, 3 | 4) {
                return Err(input(anyhow!("--k must be 3 or 4, got {k}")));
            }
        }
        if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
            return Err(input(anyhow!("--alpha must lie in (0,1)")));
        }
        if cfg.eta <= 0.0 {
            return Err(input(anyhow!("--eta must be positive")));
        }
        Ok(cfg)
    }

    fn test_kind(&self) -> TestKind {
        match self.test {
            TestChoice::El => TestKind::EmpiricalLikelihood {
                alpha: self.alpha,
                max_iters: EL_DEFAULT_MAX_ITERS,
            },
            TestChoice::Threshold => TestKind::Threshold { eta: self.eta },
        }
    }

    fn discovery(&self, k: u32, test: TestKind) -> DiscoveryConfig {
        DiscoveryConfig {
            k,
            test,
            max_subset: self.max_degree,
            certify_with_pahat: true,
            symmetric_certify: self.symmetric,
        }
    }
}

/// Named graph presets exposed on the command line.
#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NamedGraph {
    /// 4-vertex chain with three confounded pairs
    Example,
    /// 5-vertex tree where naive certification over-reaches
    Pruning,
    /// confounded collider on 3 vertices
    Collider,
}

impl NamedGraph {
    pub fn graph(self) -> MixedGraph {
        match self {
            NamedGraph::Example => example_bap(),
            NamedGraph::Pruning => pruning_example(),
            NamedGraph::Collider => confounded_collider(),
        }
    }
}

/// Sparsity presets on p = 6 vertices: (directed, bidirected) edge counts.
#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Sparse,
    Medium,
    Dense,
}

impl Preset {
    pub fn dims(self) -> (usize, usize, usize) {
        match self {
            Preset::Sparse => (6, 3, 3),
            Preset::Medium => (6, 5, 5),
            Preset::Dense => (6, 8, 7),
        }
    }
}

/// One benchmark sweep: graph shape, data-generating family, test settings.
#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkSetting {
    pub id: String,
    pub p: usize,
    pub d: usize,
    pub b: usize,
    pub ancestral: bool,
    pub family: ErrorFamily,
    pub signed: bool,
    pub n_grid: Vec<usize>,
    pub reps: usize,
    pub k: u32,
    pub alpha: f64,
    pub eta: f64,
    pub test: TestChoice,
    pub symmetric: bool,
    pub seed: u64,
}

/// One scored replicate at one sample size.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub setting: String,
    pub replicate: usize,
    pub n: usize,
    pub exact: bool,
    pub pairwise_correct: usize,
    pub pairwise_total: usize,
    pub test_count: usize,
    pub runtime_ms: f64,
}

#[derive(Args)]
struct DiscoverArgs {
    /// Input CSV: header row, one column per variable
    input: PathBuf,
    #[command(flatten)]
    shared: SharedFlags,
}

#[derive(Args)]
struct SimulateArgs {
    /// Graph JSON file to simulate from
    #[arg(long, conflicts_with_all = ["p", "named"])]
    graph: Option<PathBuf>,
    /// Named graph preset
    #[arg(long, value_enum, conflicts_with = "p")]
    named: Option<NamedGraph>,
    /// Vertex count for a random graph (requires --d and --b)
    #[arg(long, requires_all = ["d", "b"])]
    p: Option<usize>,
    /// Directed edge count for a random graph
    #[arg(long)]
    d: Option<usize>,
    /// Bidirected edge count for a random graph
    #[arg(long)]
    b: Option<usize>,
    /// Restrict random graphs to be ancestral
    #[arg(long)]
    ancestral: bool,
    #[arg(long, value_enum, default_value_t = ErrorFamily::Gamma)]
    family: ErrorFamily,
    /// Number of observations
    #[arg(long, default_value_t = 5000)]
    n: usize,
    /// Draw edge weights positive only instead of sign-symmetric
    #[arg(long)]
    positive: bool,
    /// Randomly permute vertex labels before drawing parameters
    #[arg(long)]
    shuffle_labels: bool,
    #[command(flatten)]
    shared: SharedFlags,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[arg(long, value_enum, conflicts_with = "p")]
    preset: Option<Preset>,
    #[arg(long, requires_all = ["d", "b"])]
    p: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    b: Option<usize>,
    #[arg(long)]
    ancestral: bool,
    #[arg(long, value_enum, default_value_t = ErrorFamily::Gamma)]
    family: ErrorFamily,
    /// Replicate count
    #[arg(long, default_value_t = 200)]
    reps: usize,
    /// Comma-separated sample sizes
    #[arg(long, value_delimiter = ',', default_values_t = vec![5000usize, 25000, 100000])]
    n_grid: Vec<usize>,
    /// Positive-only edge weights
    #[arg(long)]
    positive: bool,
    #[command(flatten)]
    shared: SharedFlags,
}

#[derive(Args)]
struct OracleSuiteArgs {
    #[arg(long, value_enum, conflicts_with_all = ["p", "fixed_graph"])]
    preset: Option<Preset>,
    /// Run every replicate on this named graph instead of random graphs
    #[arg(long, value_enum)]
    fixed_graph: Option<NamedGraph>,
    #[arg(long, requires_all = ["d", "b"])]
    p: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    b: Option<usize>,
    #[arg(long)]
    ancestral: bool,
    #[arg(long, value_enum, default_value_t = ErrorFamily::Gamma)]
    family: ErrorFamily,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    /// Positive-only edge weights
    #[arg(long)]
    positive: bool,
    #[command(flatten)]
    shared: SharedFlags,
}

/// Parses arguments from the process environment, runs the command, and
/// returns the exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(CliError::Input(e)) => {
            eprintln!("error: {e:#}");
            EXIT_INPUT
        }
        Err(CliError::Precondition(e)) => {
            eprintln!("error: {e:#}");
            EXIT_PRECONDITION
        }
    }
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Discover(args) => cmd_discover(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Benchmark(args) => cmd_benchmark(args),
        Command::OracleSuite(args) => cmd_oracle_suite(args),
    }
}

fn ensure_out(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(input)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, text + "\n")
        .with_context(|| format!("writing {}", path.display()))
        .map_err(input)
}

fn echo_config(cfg: &EffectiveConfig, extra: serde_json::Value) -> CliResult<()> {
    let mut doc = serde_json::to_value(cfg).expect("config serializes");
    if let (Some(map), serde_json::Value::Object(add)) = (doc.as_object_mut(), extra) {
        map.extend(add);
    }
    write_json(&cfg.out.join("config.json"), &doc)
}

/// Reads a headered CSV into an n x p matrix; any ragged or non-numeric row
/// is an input error.
fn read_csv_matrix(path: &Path) -> CliResult<(Vec<String>, DMatrix<f64>)> {
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("opening {}", path.display()))
        .map_err(input)?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(input)?
        .iter()
        .map(str::to_owned)
        .collect();
    let p = headers.len();
    let mut rows: Vec<f64> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(input)?;
        if record.len() != p {
            return Err(input(anyhow!(
                "row {} has {} fields, expected {}",
                i + 2,
                record.len(),
                p
            )));
        }
        for field in record.iter() {
            let x: f64 = field
                .trim()
                .parse()
                .with_context(|| format!("row {}: non-numeric field {field:?}", i + 2))
                .map_err(input)?;
            rows.push(x);
        }
    }
    let n = rows.len() / p.max(1);
    Ok((headers, DMatrix::from_row_slice(n, p, &rows)))
}

fn write_csv_matrix(path: &Path, y: &DMatrix<f64>) -> CliResult<()> {
    let mut writer = csv::Writer::from_path(path)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(input)?;
    let p = y.ncols();
    writer
        .write_record((0..p).map(|j| format!("y{j}")))
        .map_err(input)?;
    for i in 0..y.nrows() {
        writer
            .write_record((0..p).map(|j| format!("{}", y[(i, j)])))
            .map_err(input)?;
    }
    writer.flush().map_err(input)?;
    Ok(())
}

fn write_audit(path: &Path, outcome: &BangOutcome) -> CliResult<()> {
    let mut lines = String::new();
    for rec in &outcome.audit {
        lines.push_str(&serde_json::to_string(rec).expect("audit serializes"));
        lines.push('\n');
    }
    fs::write(path, lines)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(input)
}

fn thread_pool(workers: Option<usize>) -> CliResult<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        builder = builder.num_threads(w);
    }
    builder.build().map_err(|e| input(anyhow!(e)))
}

fn cmd_discover(args: DiscoverArgs) -> CliResult<()> {
    let cfg = EffectiveConfig::resolve(&args.shared)?;
    let (headers, y) = read_csv_matrix(&args.input)?;
    let (n, p) = y.shape();
    if p == 0 || n <= p {
        return Err(precondition(anyhow!(
            "need more observations than variables, got n={n}, p={p}"
        )));
    }
    for (j, header) in headers.iter().enumerate() {
        let col = y.column(j);
        let mean = col.mean();
        if col.iter().all(|&x| (x - mean).abs() < 1e-12 * (1.0 + mean.abs())) {
            return Err(precondition(anyhow!(
                "column {header} is constant; degenerate data"
            )));
        }
    }
    let k = cfg.k.unwrap_or(3);
    let backend = Backend::from_data(&y);
    let outcome = run_bang(&backend, &cfg.discovery(k, cfg.test_kind()));
    ensure_out(&cfg.out)?;
    write_json(&cfg.out.join("graph.json"), &outcome.graph.to_json(cfg.one_indexed))?;
    fs::write(cfg.out.join("graph.dot"), outcome.graph.to_dot(cfg.one_indexed))
        .map_err(input)?;
    write_audit(&cfg.out.join("audit.jsonl"), &outcome)?;
    echo_config(
        &cfg,
        serde_json::json!({"command": "discover", "input": args.input, "n": n, "p": p}),
    )?;
    println!(
        "discovered {} directed and {} bidirected edges in {} tests",
        outcome.graph.num_directed(),
        outcome.graph.num_bidirected(),
        outcome.state.test_count
    );
    Ok(())
}

fn load_graph(path: &Path, one_indexed: bool) -> CliResult<MixedGraph> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(input)?;
    let mut json: GraphJson = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(input)?;
    if one_indexed {
        json.one_indexed = true;
    }
    MixedGraph::from_json(&json)
        .with_context(|| format!("invalid graph in {}", path.display()))
        .map_err(input)
}

fn cmd_simulate(args: SimulateArgs) -> CliResult<()> {
    let cfg = EffectiveConfig::resolve(&args.shared)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut graph = if let Some(path) = &args.graph {
        load_graph(path, cfg.one_indexed)?
    } else if let Some(named) = args.named {
        named.graph()
    } else if let Some(p) = args.p {
        MixedGraph::random_bap(p, args.d.unwrap(), args.b.unwrap(), args.ancestral, &mut rng)
    } else {
        return Err(input(anyhow!(
            "specify a graph via --graph, --named, or --p/--d/--b"
        )));
    };
    if args.shuffle_labels {
        let mut perm: Vec<usize> = (0..graph.p()).collect();
        perm.shuffle(&mut rng);
        graph = graph.relabel(&perm).expect("permutation is valid");
    }
    let params = draw_parameters(&graph, !args.positive, &mut rng);
    let y = params
        .sample_data(args.family, args.n, &mut rng)
        .map_err(|e| precondition(anyhow!(e)))?;
    ensure_out(&cfg.out)?;
    write_csv_matrix(&cfg.out.join("data.csv"), &y)?;
    write_json(&cfg.out.join("truth.json"), &graph.to_json(cfg.one_indexed))?;
    write_json(
        &cfg.out.join("params.json"),
        &params.to_json(cfg.one_indexed, Some(args.family)),
    )?;
    echo_config(
        &cfg,
        serde_json::json!({
            "command": "simulate",
            "family": args.family,
            "n": args.n,
            "positive": args.positive,
            "shuffle_labels": args.shuffle_labels,
        }),
    )?;
    println!(
        "wrote {} observations on {} variables to {}",
        args.n,
        graph.p(),
        cfg.out.join("data.csv").display()
    );
    Ok(())
}

fn shape_from(
    preset: Option<Preset>,
    p: Option<usize>,
    d: Option<usize>,
    b: Option<usize>,
) -> CliResult<(usize, usize, usize)> {
    match (preset, p) {
        (Some(preset), _) => Ok(preset.dims()),
        (None, Some(p)) => Ok((p, d.unwrap(), b.unwrap())),
        (None, None) => Err(input(anyhow!("specify --preset or --p/--d/--b"))),
    }
}

/// Per-sample-size recovery summary, recomputable from the record rows.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct NSummary {
    pub n: usize,
    pub reps: usize,
    pub exact_rate: f64,
    pub mean_pairwise_correct: f64,
    pub mean_test_count: f64,
}

/// Groups records by sample size, order-stable by n.
pub fn summarize(records: &[BenchmarkRecord]) -> Vec<NSummary> {
    let ns: BTreeSet<usize> = records.iter().map(|r| r.n).collect();
    ns.into_iter()
        .map(|n| {
            let rows: Vec<&BenchmarkRecord> = records.iter().filter(|r| r.n == n).collect();
            let reps = rows.len();
            let exact = rows.iter().filter(|r| r.exact).count();
            NSummary {
                n,
                reps,
                exact_rate: exact as f64 / reps as f64,
                mean_pairwise_correct: rows.iter().map(|r| r.pairwise_correct as f64).sum::<f64>()
                    / reps as f64,
                mean_test_count: rows.iter().map(|r| r.test_count as f64).sum::<f64>()
                    / reps as f64,
            }
        })
        .collect()
}

/// One full benchmark replicate: fresh relabeled graph and parameters, then
/// a sampled run at every grid size.
pub fn benchmark_replicate(setting: &BenchmarkSetting, replicate: usize) -> Vec<BenchmarkRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(setting.seed);
    rng.set_stream(replicate as u64 + 1);
    let mut graph =
        MixedGraph::random_bap(setting.p, setting.d, setting.b, setting.ancestral, &mut rng);
    let mut perm: Vec<usize> = (0..setting.p).collect();
    perm.shuffle(&mut rng);
    graph = graph.relabel(&perm).expect("permutation is valid");
    let params = draw_parameters(&graph, setting.signed, &mut rng);
    let test = match setting.test {
        TestChoice::El => TestKind::EmpiricalLikelihood {
            alpha: setting.alpha,
            max_iters: EL_DEFAULT_MAX_ITERS,
        },
        TestChoice::Threshold => TestKind::Threshold { eta: setting.eta },
    };
    let config = DiscoveryConfig {
        k: setting.k,
        test,
        max_subset: None,
        certify_with_pahat: true,
        symmetric_certify: setting.symmetric,
    };
    setting
        .n_grid
        .iter()
        .map(|&n| {
            let y = params
                .sample_data(setting.family, n, &mut rng)
                .expect("drawn parameters sample cleanly");
            let start = Instant::now();
            let backend = Backend::from_data(&y);
            let outcome = run_bang(&backend, &config);
            let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
            let score = outcome.graph.score_against(&graph).expect("same p");
            BenchmarkRecord {
                setting: setting.id.clone(),
                replicate,
                n,
                exact: score.exact,
                pairwise_correct: score.pairwise_correct,
                pairwise_total: score.pairwise_total,
                test_count: outcome.state.test_count,
                runtime_ms,
            }
        })
        .collect()
}

fn cmd_benchmark(args: BenchmarkArgs) -> CliResult<()> {
    let cfg = EffectiveConfig::resolve(&args.shared)?;
    let (p, d, b) = shape_from(args.preset, args.p, args.d, args.b)?;
    let setting = BenchmarkSetting {
        id: match args.preset {
            Some(preset) => format!("{preset:?}").to_lowercase(),
            None => format!("p{p}d{d}b{b}"),
        },
        p,
        d,
        b,
        ancestral: args.ancestral,
        family: args.family,
        signed: !args.positive,
        n_grid: args.n_grid.clone(),
        reps: args.reps,
        k: cfg.k.unwrap_or_else(|| args.family.default_k()),
        alpha: cfg.alpha,
        eta: cfg.eta,
        test: cfg.test,
        symmetric: cfg.symmetric,
        seed: cfg.seed,
    };
    let pool = thread_pool(cfg.workers)?;
    let records: Vec<BenchmarkRecord> = pool.install(|| {
        (0..setting.reps)
            .into_par_iter()
            .flat_map_iter(|r| benchmark_replicate(&setting, r))
            .collect()
    });
    let summary = summarize(&records);
    ensure_out(&cfg.out)?;
    let results_path = cfg.out.join("results.csv");
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(&results_path)
        .map_err(input)?;
    writer
        .write_record([
            "setting",
            "replicate",
            "n",
            "exact",
            "pairwise_correct",
            "pairwise_total",
            "test_count",
            "runtime_ms",
        ])
        .map_err(input)?;
    for rec in &records {
        writer.serialize(rec).map_err(input)?;
    }
    writer.flush().map_err(input)?;
    write_json(
        &cfg.out.join("summary.json"),
        &serde_json::json!({"setting": setting, "per_n": summary}),
    )?;
    echo_config(&cfg, serde_json::json!({"command": "benchmark", "setting": setting}))?;
    for s in &summary {
        println!(
            "n={:>7}  exact {:>5.3}  pairwise {:>5.2}/{}  tests {:>7.1}",
            s.n,
            s.exact_rate,
            s.mean_pairwise_correct,
            p * (p - 1) / 2,
            s.mean_test_count
        );
    }
    Ok(())
}

/// One oracle replicate; returns exact-recovery flag and test count.
pub fn oracle_replicate(
    graph_shape: Option<(usize, usize, usize, bool)>,
    fixed: Option<&MixedGraph>,
    family: ErrorFamily,
    signed: bool,
    config: &DiscoveryConfig,
    seed: u64,
    replicate: usize,
) -> Result<(bool, usize), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64 + 1);
    let graph = match (fixed, graph_shape) {
        (Some(g), _) => g.clone(),
        (None, Some((p, d, b, ancestral))) => MixedGraph::random_bap(p, d, b, ancestral, &mut rng),
        (None, None) => return Err("no graph source".into()),
    };
    let params = draw_parameters(&graph, signed, &mut rng);
    let oracle = MomentOracle::new(&params, family).map_err(|e| e.to_string())?;
    let sigma = params.implied_covariance().map_err(|e| e.to_string())?;
    let backend = Backend::from_oracle(&oracle, sigma);
    let outcome = run_bang(&backend, config);
    Ok((outcome.graph == graph, outcome.state.test_count))
}

fn cmd_oracle_suite(args: OracleSuiteArgs) -> CliResult<()> {
    let cfg = EffectiveConfig::resolve(&args.shared)?;
    if matches!(args.family, ErrorFamily::Lognormal) {
        return Err(precondition(anyhow!(
            "no exact moment oracle for the lognormal family; use sampled data instead"
        )));
    }
    let fixed = args.fixed_graph.map(NamedGraph::graph);
    let shape = if fixed.is_some() {
        None
    } else {
        Some(shape_from(args.preset, args.p, args.d, args.b).map(|(p, d, b)| (p, d, b, args.ancestral))?)
    };
    let k = cfg.k.unwrap_or_else(|| args.family.default_k());
    let tol = args.shared.eta.map_or(ORACLE_ZERO_TOL, |e| e / 2.0);
    let config = DiscoveryConfig {
        k,
        test: TestKind::ExactZero { tol },
        max_subset: cfg.max_degree,
        certify_with_pahat: true,
        symmetric_certify: cfg.symmetric,
    };
    let pool = thread_pool(cfg.workers)?;
    let results: Vec<Result<(bool, usize), String>> = pool.install(|| {
        (0..args.reps)
            .into_par_iter()
            .map(|r| {
                oracle_replicate(
                    shape,
                    fixed.as_ref(),
                    args.family,
                    !args.positive,
                    &config,
                    cfg.seed,
                    r,
                )
            })
            .collect()
    });
    let mut exact = 0usize;
    let mut failing: Vec<usize> = Vec::new();
    let mut max_tests = 0usize;
    let mut total_tests = 0usize;
    for (r, res) in results.iter().enumerate() {
        match res {
            Ok((recovered, tests)) => {
                if *recovered {
                    exact += 1;
                } else {
                    failing.push(r);
                }
                max_tests = max_tests.max(*tests);
                total_tests += tests;
            }
            Err(_) => failing.push(r),
        }
    }
    let rate = if args.reps == 0 {
        1.0
    } else {
        exact as f64 / args.reps as f64
    };
    ensure_out(&cfg.out)?;
    write_json(
        &cfg.out.join("report.json"),
        &serde_json::json!({
            "family": args.family,
            "k": k,
            "tolerance": tol,
            "max_degree": cfg.max_degree,
            "reps": args.reps,
            "exact_recoveries": exact,
            "recovery_rate": rate,
            "failing_replicates": failing,
            "max_test_count": max_tests,
            "mean_test_count": if args.reps == 0 { 0.0 } else { total_tests as f64 / args.reps as f64 },
        }),
    )?;
    echo_config(&cfg, serde_json::json!({"command": "oracle-suite"}))?;
    println!(
        "oracle recovery {exact}/{} ({rate:.4}); max tests {max_tests}",
        args.reps
    );
    if !failing.is_empty() {
        println!("failing replicates: {failing:?}");
    }
    Ok(())
}
