//! Command-line front end. Exit codes: 0 success, 1 runtime or data error,
//! 2 usage error.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::Error;
use crate::genomics::{
    evaluate_imputation, preprocess_pair, select_panel_kmeans, synthetic_pair, ExpressionMatrix,
    FixtureConfig, KMeansOptions, DEFAULT_MIN_CELLS,
};
use crate::io;
use crate::ols::{fit_ols, Dataset};
use crate::shrinkage::{BoxOptions, Rule, ShrinkagePredictor};
use crate::simulation::{replication_rng, run_scenario, ScenarioConfig, Structure};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "coolish",
    version,
    about = "Coordinate-wise optimal linear shrinkage for multi-outcome regression"
)]
pub struct Cli {
    /// Worker threads (defaults to all cores). Results do not depend on it.
    #[arg(long, global = true, env = "COOLISH_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one simulation scenario and write per-replication losses.
    Simulate(SimulateArgs),
    /// Fit on training matrices and predict the test rows.
    FitPredict(FitPredictArgs),
    /// Select K-means probe panels from an expression matrix.
    Panel(PanelArgs),
    /// Evaluate panel-based imputation across datasets.
    Impute(ImputeArgs),
    /// Write a synthetic pair of expression count matrices.
    Fixture(FixtureArgs),
}

fn parse_rho(s: &str) -> Result<f64, String> {
    let rho: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if (0.0..1.0).contains(&rho) {
        Ok(rho)
    } else {
        Err(format!("rho must lie in [0, 1), got {rho}"))
    }
}

fn parse_bound(s: &str) -> Result<f64, String> {
    let m: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if m > 0.0 && m.is_finite() {
        Ok(m)
    } else {
        Err(format!("box bound must be positive, got {m}"))
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 10)]
    pub p: usize,
    #[arg(long, default_value_t = 1000)]
    pub q: usize,
    #[arg(long, default_value_t = 0.0, value_parser = parse_rho)]
    pub rho: f64,
    #[arg(long, default_value = "dense")]
    pub structure: Structure,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long, default_value_t = 100)]
    pub n_train: usize,
    #[arg(long, default_value_t = 50)]
    pub n_test: usize,
    #[arg(long = "M", visible_alias = "m", default_value_t = 1e6, value_parser = parse_bound)]
    pub m: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub noise_scale: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleArg {
    Ols,
    Unconstrained,
    Constrained,
}

impl RuleArg {
    fn rule(self, m: f64) -> Rule {
        match self {
            RuleArg::Ols => Rule::Ols,
            RuleArg::Unconstrained => Rule::Unconstrained,
            RuleArg::Constrained => Rule::Constrained(BoxOptions::with_bound(m)),
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitPredictArgs {
    #[arg(long)]
    pub train_x: PathBuf,
    #[arg(long)]
    pub train_y: PathBuf,
    #[arg(long)]
    pub test_x: PathBuf,
    #[arg(long, value_enum, default_value = "constrained")]
    pub rule: RuleArg,
    #[arg(long = "M", visible_alias = "m", default_value_t = 1e6, value_parser = parse_bound)]
    pub m: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PanelArgs {
    /// Training expression CSV (cells x genes, gene ids in the first row).
    #[arg(long)]
    pub train: PathBuf,
    /// Second dataset; genes must pass the detection filter in both.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Panel size; repeat for several sizes.
    #[arg(long = "k", required = true)]
    pub k: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_MIN_CELLS)]
    pub min_cells: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Exchange the roles of --train and --test.
    #[arg(long)]
    pub swap: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ImputeArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long = "k", required = true)]
    pub k: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_MIN_CELLS)]
    pub min_cells: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub swap: bool,
    /// Drop the intercept column from the panel design.
    #[arg(long)]
    pub no_intercept: bool,
    #[arg(long = "rule", value_enum, default_values = ["ols", "unconstrained", "constrained"])]
    pub rules: Vec<RuleArg>,
    #[arg(long = "M", visible_alias = "m", default_value_t = 1e6, value_parser = parse_bound)]
    pub m: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FixtureArgs {
    #[arg(long, default_value_t = 400)]
    pub genes: usize,
    #[arg(long, default_value_t = 360)]
    pub cells_a: usize,
    #[arg(long, default_value_t = 380)]
    pub cells_b: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_a: PathBuf,
    #[arg(long)]
    pub out_b: PathBuf,
}

/// Failure of a command, mapped onto an exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }
}

type CmdResult = Result<(), CliError>;

#[derive(Debug, Serialize)]
struct RunManifest<'a, C: Serialize> {
    command: &'a str,
    argv: Vec<String>,
    config: &'a C,
    seed: u64,
    tool_version: &'static str,
    threads: usize,
    started_unix: f64,
    finished_unix: f64,
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// Path of the manifest written next to an output file.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(OsString::from).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

struct Context {
    argv: Vec<String>,
    threads: usize,
    started: f64,
}

impl Context {
    fn write_manifest<C: Serialize>(&self, command: &str, out: &Path, config: &C, seed: u64) -> CmdResult {
        let manifest = RunManifest {
            command,
            argv: self.argv.clone(),
            config,
            seed,
            tool_version: env!("CARGO_PKG_VERSION"),
            threads: self.threads,
            started_unix: self.started,
            finished_unix: unix_now(),
        };
        let file = create(&manifest_path(out))?;
        serde_json::to_writer_pretty(file, &manifest).map_err(Error::from)?;
        Ok(())
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", path.display())))
}

fn simulate(ctx: &Context, args: &SimulateArgs) -> CmdResult {
    let cfg = ScenarioConfig {
        n_train: args.n_train,
        n_test: args.n_test,
        p: args.p,
        q: args.q,
        rho: args.rho,
        structure: args.structure,
        n_replications: args.reps,
        m: args.m,
        seed: args.seed,
        noise_scale: args.noise_scale,
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let report = run_scenario(&cfg)?;
    let mut out = create(&args.out)?;
    report.write_csv(&mut out, true)?;
    out.flush().map_err(Error::from)?;
    ctx.write_manifest("simulate", &args.out, args, args.seed)
}

fn fit_predict(ctx: &Context, args: &FitPredictArgs) -> CmdResult {
    let train_x = io::read_matrix(&args.train_x)?;
    let train_y = io::read_table(&args.train_y, io::Header::Auto)?;
    let test_x = io::read_matrix(&args.test_x)?;
    if train_x.nrows() != train_y.values.nrows() {
        return Err(CliError::Runtime(format!(
            "shape mismatch: train-x has {} rows but train-y has {}",
            train_x.nrows(),
            train_y.values.nrows()
        )));
    }
    if test_x.ncols() != train_x.ncols() {
        return Err(CliError::Runtime(format!(
            "shape mismatch: test-x has {} columns but train-x has {}",
            test_x.ncols(),
            train_x.ncols()
        )));
    }
    let data =
        Dataset::new(train_x, train_y.values).map_err(|e| CliError::Runtime(format!("train-x: {e}")))?;
    let fit = fit_ols(&data).map_err(|e| CliError::Runtime(format!("train-x: {e}")))?;
    let predictor = ShrinkagePredictor::new(&fit);
    let predictions = predictor
        .predict_batch(&test_x, &args.rule.rule(args.m))
        .map_err(|e| CliError::Runtime(format!("test-x: {e}")))?;
    let mut out = create(&args.out)?;
    io::write_matrix(&mut out, train_y.header.as_deref(), &predictions)?;
    out.flush().map_err(Error::from)?;
    ctx.write_manifest("fit-predict", &args.out, args, args.seed)
}

fn read_expression(path: &Path) -> Result<ExpressionMatrix, CliError> {
    ExpressionMatrix::read_csv(path).map_err(CliError::from)
}

fn ordered(a: PathBuf, b: PathBuf, swap: bool) -> (PathBuf, PathBuf) {
    if swap {
        (b, a)
    } else {
        (a, b)
    }
}

fn check_panel_sizes(ks: &[usize], genes: usize, strict: bool) -> CmdResult {
    for &k in ks {
        let too_big = if strict { k >= genes } else { k > genes };
        if k == 0 || too_big {
            return Err(CliError::Usage(format!(
                "--k {k} is invalid: {} genes remain after filtering",
                genes
            )));
        }
    }
    Ok(())
}

fn panel(ctx: &Context, args: &PanelArgs) -> CmdResult {
    let (train_path, test_path) = match (&args.test, args.swap) {
        (Some(test), swap) => {
            let (a, b) = ordered(args.train.clone(), test.clone(), swap);
            (a, Some(b))
        }
        (None, true) => return Err(CliError::Usage("--swap requires --test".into())),
        (None, false) => (args.train.clone(), None),
    };
    let train_raw = read_expression(&train_path)?;
    let other_raw = match &test_path {
        Some(p) => read_expression(p)?,
        None => train_raw.clone(),
    };
    let (train, _) = preprocess_pair(&train_raw, &other_raw, args.min_cells)?;
    check_panel_sizes(&args.k, train.n_genes(), false)?;

    let mut out = csv::Writer::from_writer(create(&args.out)?);
    out.write_record(["K", "cluster", "gene_index", "gene_id"])
        .map_err(Error::from)?;
    for &k in &args.k {
        let mut rng = replication_rng(args.seed, k);
        let sel = select_panel_kmeans(&train, k, &KMeansOptions::default(), &mut rng)?;
        for (cluster, &gene) in sel.panel_indices.iter().enumerate() {
            out.write_record([
                k.to_string(),
                cluster.to_string(),
                gene.to_string(),
                train.gene_ids()[gene].clone(),
            ])
            .map_err(Error::from)?;
        }
    }
    out.flush().map_err(Error::from)?;
    ctx.write_manifest("panel", &args.out, args, args.seed)
}

fn impute(ctx: &Context, args: &ImputeArgs) -> CmdResult {
    let (train_path, test_path) = ordered(args.train.clone(), args.test.clone(), args.swap);
    let train_raw = read_expression(&train_path)?;
    let test_raw = read_expression(&test_path)?;
    let (train, test) = preprocess_pair(&train_raw, &test_raw, args.min_cells)?;
    check_panel_sizes(&args.k, train.n_genes(), true)?;
    let rules: Vec<Rule> = args.rules.iter().map(|r| r.rule(args.m)).collect();

    let mut out = csv::Writer::from_writer(create(&args.out)?);
    out.write_record(["rule", "K", "mse", "seconds"])
        .map_err(Error::from)?;
    for &k in &args.k {
        let mut rng = replication_rng(args.seed, k);
        let sel = select_panel_kmeans(&train, k, &KMeansOptions::default(), &mut rng)?;
        let results = match evaluate_imputation(&train, &test, &sel, &rules, !args.no_intercept) {
            Ok(results) => results,
            Err(e) => {
                eprintln!("K = {k}: {e}");
                rules
                    .iter()
                    .map(|r| crate::genomics::ImputationResult {
                        rule: r.name(),
                        k,
                        mse: None,
                        seconds: 0.0,
                        error: Some(e.to_string()),
                    })
                    .collect()
            }
        };
        for r in results {
            if let Some(msg) = &r.error {
                eprintln!("K = {k}, rule {}: {msg}", r.rule);
            }
            let mse = r.mse.map_or_else(|| "NaN".to_string(), |v| v.to_string());
            out.write_record([
                r.rule.to_string(),
                k.to_string(),
                mse,
                format!("{:.6}", r.seconds),
            ])
            .map_err(Error::from)?;
        }
    }
    out.flush().map_err(Error::from)?;
    ctx.write_manifest("impute", &args.out, args, args.seed)
}

fn fixture(ctx: &Context, args: &FixtureArgs) -> CmdResult {
    let cfg = FixtureConfig {
        genes: args.genes,
        cells_a: args.cells_a,
        cells_b: args.cells_b,
        seed: args.seed,
        ..FixtureConfig::default()
    };
    let (a, b) = synthetic_pair(&cfg).map_err(|e| CliError::Usage(e.to_string()))?;
    for (m, path) in [(&a, &args.out_a), (&b, &args.out_b)] {
        let mut out = create(path)?;
        io::write_matrix(&mut out, Some(m.gene_ids()), m.values())?;
        out.flush().map_err(Error::from)?;
    }
    ctx.write_manifest("fixture", &args.out_a, args, args.seed)
}

fn dispatch(ctx: &Context, command: &Command) -> CmdResult {
    match command {
        Command::Simulate(a) => simulate(ctx, a),
        Command::FitPredict(a) => fit_predict(ctx, a),
        Command::Panel(a) => panel(ctx, a),
        Command::Impute(a) => impute(ctx, a),
        Command::Fixture(a) => fixture(ctx, a),
    }
}

/// Parse `argv` (including the program name), run the command and return the
/// process exit code. Diagnostics go to standard error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let threads = match cli.threads {
        Some(0) => {
            eprintln!("error: --threads must be at least 1");
            return EXIT_USAGE;
        }
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return EXIT_RUNTIME;
        }
    };
    let ctx = Context {
        argv: argv.iter().map(|a| a.to_string_lossy().into_owned()).collect(),
        threads,
        started: unix_now(),
    };
    match pool.install(|| dispatch(&ctx, &cli.command)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}
