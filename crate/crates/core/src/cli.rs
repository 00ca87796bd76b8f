//! Command-line front end. Exit codes: 0 success, 1 bad arguments or input,
//! 2 analysis failure.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::dataset::{generate_synthetic, parse_dataset, parse_schema, to_json_bytes, Dataset, DatasetFormat, SyntheticSpec};
use crate::pipeline::{AnalysisConfig, AnalysisSnapshot, Engine, LayoutChoice, PipelineError, TauSpec};
use crate::service::{AppState, ServiceConfig, DEFAULT_MAX_BODY_BYTES};
use crate::similarity::SimilarityMode;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_ANALYSIS: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "depthscope", version, about = "Band-depth analysis of heterogeneous datasets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Analyze a dataset at one τ and write the snapshot JSON.
    Analyze(AnalyzeArgs),
    /// Analyze at several τ quantiles, reusing one inclusion matrix.
    Sweep(SweepArgs),
    /// Write a seeded synthetic dataset.
    Gen(GenArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Dataset JSON, or CSV together with --schema.
    #[arg(long)]
    pub input: PathBuf,
    /// Sidecar schema for CSV input.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Band budget; plans above it are sampled.
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long, env = "DEPTHSCOPE_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Fixed cluster count; the eigengap suggestion is used otherwise.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_enum, default_value_t = SimilarityArg::Hamming)]
    pub similarity: SimilarityArg,
    /// Use a 2D point or curve attribute for positions instead of the force layout.
    #[arg(long, value_name = "ATTRIBUTE")]
    pub geospatial: Option<String>,
    /// Inclusion matrices are cached here across runs.
    #[arg(long, env = "DEPTHSCOPE_CACHE_DIR")]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SimilarityArg {
    Hamming,
    Jaccard,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Absolute band-size threshold (nonnegative, or "inf").
    #[arg(long, conflicts_with = "tau_quantile", allow_hyphen_values = true)]
    pub tau: Option<String>,
    /// Threshold as a quantile of the band sizes.
    #[arg(long, allow_hyphen_values = true)]
    pub tau_quantile: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the similarity matrix, in heatmap order, as CSV.
    #[arg(long)]
    pub similarity_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Comma-separated band-size quantiles.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub quantiles: Vec<f64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GenSpec {
    Unimodal,
    Bimodal,
    Curves,
    Mixed,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    pub spec: GenSpec,
    #[arg(long)]
    pub n: usize,
    #[arg(long, env = "DEPTHSCOPE_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// 0 binds an ephemeral port.
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, env = "DEPTHSCOPE_CACHE_DIR")]
    pub data_dir: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MAX_BODY_BYTES)]
    pub max_body_bytes: usize,
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long, env = "DEPTHSCOPE_SEED", default_value_t = 0)]
    pub seed: u64,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let code = match e {
            PipelineError::Config(_) => EXIT_INPUT,
            _ => EXIT_ANALYSIS,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Analyze(a) => cmd_analyze(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Gen(a) => cmd_gen(a),
        Command::Serve(a) => cmd_serve(a),
    }
}

fn load_dataset(input: &InputArgs) -> Result<Dataset, CliError> {
    let bytes = fs::read(&input.input).map_err(|e| CliError::input(format!("{}: {e}", input.input.display())))?;
    let format = match &input.schema {
        Some(path) => {
            let raw = fs::read(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
            let schema = parse_schema(&raw).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
            DatasetFormat::CsvWithSchema(schema)
        }
        None if input.input.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")) => {
            return Err(CliError::input(format!("{}: CSV input needs --schema", input.input.display())));
        }
        None => DatasetFormat::JsonV1,
    };
    parse_dataset(&bytes, format).map_err(|e| CliError::input(format!("{}: {e}", input.input.display())))
}

fn base_config(input: &InputArgs) -> AnalysisConfig {
    AnalysisConfig {
        budget: input.budget,
        seed: input.seed,
        k: input.k,
        layout: match &input.geospatial {
            Some(a) => LayoutChoice::Geospatial { attribute: a.clone() },
            None => LayoutChoice::ForceDirected,
        },
        similarity: match input.similarity {
            SimilarityArg::Hamming => SimilarityMode::Hamming,
            SimilarityArg::Jaccard => SimilarityMode::Jaccard,
        },
        ..AnalysisConfig::default()
    }
}

fn engine_for(input: &InputArgs) -> Engine {
    match &input.cache_dir {
        Some(dir) => Engine::with_cache_dir(dir),
        None => Engine::new(),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::input(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn validate_k(k: Option<usize>, dataset: &Dataset) -> Result<(), CliError> {
    match k {
        Some(k) if k == 0 || k > dataset.len() => Err(CliError::input(format!(
            "k must lie in [1, {}], got {k}",
            dataset.len()
        ))),
        _ => Ok(()),
    }
}

/// `n=… bands=… tau=… k=… outliers=… ms: stage=…`
pub fn summary_line(s: &AnalysisSnapshot) -> String {
    let tau = if s.tau.is_finite() { format!("{:.6e}", s.tau) } else { "inf".into() };
    let timings: Vec<String> = s.timings_ms.iter().map(|(n, t)| format!("{n}={t:.1}")).collect();
    format!(
        "n={} bands={} unmasked={} tau={} k={} suggestedK={} outliers={} ms: {}",
        s.n,
        s.band_count,
        s.unmasked_band_count,
        tau,
        s.cluster_count(),
        s.spectral.suggested_k,
        s.outliers.count(),
        timings.join(" ")
    )
}

pub fn cmd_analyze(args: AnalyzeArgs) -> Result<(), CliError> {
    let tau = match (&args.tau, args.tau_quantile) {
        (Some(t), _) => t.parse::<TauSpec>().map_err(|e| CliError::input(e.to_string()))?,
        (None, Some(q)) => TauSpec::quantile(q).map_err(|e| CliError::input(e.to_string()))?,
        (None, None) => TauSpec::Infinite,
    };
    let dataset = load_dataset(&args.input)?;
    validate_k(args.input.k, &dataset)?;
    let config = AnalysisConfig {
        tau,
        ..base_config(&args.input)
    };
    let snapshot = engine_for(&args.input).analyze(Arc::new(dataset), &config)?;
    write_file(&args.out, &snapshot.to_json_bytes())?;
    if let Some(path) = &args.similarity_csv {
        write_file(path, snapshot.similarity.to_csv(Some(&snapshot.spectral.order)).as_bytes())?;
    }
    println!("{}", summary_line(&snapshot));
    Ok(())
}

pub fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    if args.quantiles.is_empty() {
        return Err(CliError::input("--quantiles needs at least one value"));
    }
    for &q in &args.quantiles {
        TauSpec::quantile(q).map_err(|e| CliError::input(e.to_string()))?;
    }
    let dataset = load_dataset(&args.input)?;
    validate_k(args.input.k, &dataset)?;
    let config = base_config(&args.input);
    let rows = engine_for(&args.input).sweep(Arc::new(dataset), &config, &args.quantiles)?;
    fs::create_dir_all(&args.out_dir).map_err(|e| CliError::input(format!("{}: {e}", args.out_dir.display())))?;

    let mut table = Vec::new();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let _ = writeln!(out, "{:>10} {:>14} {:>11} {:>9} {:>9}", "quantile", "tau", "suggestedK", "clusters", "spearman");
    for (q, row) in args.quantiles.iter().zip(&rows) {
        let s = &row.snapshot;
        write_file(&args.out_dir.join(format!("snapshot-q{q}.json")), &s.to_json_bytes())?;
        let _ = writeln!(
            out,
            "{:>10} {:>14.6e} {:>11} {:>9} {:>9.4}",
            q,
            s.tau,
            s.spectral.suggested_k,
            s.cluster_count(),
            row.spearman_vs_unrestricted
        );
        table.push(serde_json::json!({
            "quantile": q,
            "tau": crate::pipeline::tau_json(s.tau),
            "suggestedK": s.spectral.suggested_k,
            "clusters": s.cluster_count(),
            "spearmanVsUnrestricted": row.spearman_vs_unrestricted,
        }));
    }
    let summary = serde_json::to_vec_pretty(&serde_json::json!({ "rows": table })).expect("serializes");
    write_file(&args.out_dir.join("sweep.json"), &summary)
}

pub fn cmd_gen(args: GenArgs) -> Result<(), CliError> {
    if args.n == 0 {
        return Err(CliError::input("n must be positive"));
    }
    let spec = match args.spec {
        GenSpec::Unimodal => SyntheticSpec::unimodal(args.n),
        GenSpec::Bimodal => SyntheticSpec::bimodal(args.n),
        GenSpec::Curves => SyntheticSpec::CurveEnsemble {
            n: args.n,
            time_points: 60,
            modes: 2,
        },
        GenSpec::Mixed => SyntheticSpec::Mixed {
            n: args.n,
            categorical: 4,
            scalar: 2,
            functions: 0,
            points2d: 0,
            modes: 2,
        },
    };
    let dataset = generate_synthetic(&spec, args.seed).map_err(|e| CliError::input(e.to_string()))?;
    write_file(&args.out, &to_json_bytes(&dataset))?;
    println!("wrote {} rows to {}", dataset.len(), args.out.display());
    Ok(())
}

pub fn cmd_serve(args: ServeArgs) -> Result<(), CliError> {
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::input(e.to_string()))?;
    runtime.block_on(async {
        let addr = format!("{}:{}", args.host, args.port);
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| CliError::input(format!("cannot bind {addr}: {e}")))?;
        let local = listener.local_addr().map_err(|e| CliError::input(e.to_string()))?;
        let state = AppState::new(ServiceConfig {
            data_dir: args.data_dir,
            max_body_bytes: args.max_body_bytes,
            budget: args.budget,
            seed: args.seed,
        })
        .map_err(|e| CliError::input(format!("data dir: {e}")))?;
        println!("listening on http://{local}");
        let _ = std::io::stdout().flush();
        crate::service::serve(listener, state)
            .await
            .map_err(|e| CliError {
                code: EXIT_ANALYSIS,
                message: e.to_string(),
            })
    })
}
