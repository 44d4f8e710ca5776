//! Command-line front end for the contamination-detection pipeline.
//!
//! Config precedence: flags > `LEAKSCAN_*` environment variables > `--config`
//! file > built-in defaults. The effective config is written into the output
//! directory for provenance.
//!
//! Exit codes: 0 success, 1 config error, 2 partial failure, 3 missing
//! upstream artifact.

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use leakscan_core::pipeline::{
    build_engine, rescan, run_pipeline, BenchmarkSource, PipelineError, ProviderKind, RunConfig,
    Stage, StageStatus,
};
use leakscan_core::Split;

#[derive(Parser)]
#[command(
    name = "leakscan",
    version,
    about = "Benchmark contamination detection pipeline"
)]
struct Cli {
    /// JSON config file; flags and LEAKSCAN_* env vars override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct Overrides {
    /// Benchmark source as name:split:path (repeatable).
    #[arg(long = "benchmark", value_name = "NAME:SPLIT:PATH", global = true)]
    benchmarks: Vec<String>,
    /// Search backend: mock (offline fixture corpus) or live.
    #[arg(long, global = true)]
    provider: Option<String>,
    /// Fixture corpus for the mock provider (jsonl).
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    #[arg(long, global = true)]
    search_endpoint: Option<String>,
    /// Name of the environment variable holding the search API key.
    #[arg(long, global = true)]
    api_key_env: Option<String>,
    #[arg(long, global = true)]
    cdx_endpoint: Option<String>,
    /// Crawl snapshot interval, e.g. 2017-01..2020-52.
    #[arg(long, global = true)]
    crawl_range: Option<String>,
    /// Contamination threshold on penalized recall.
    #[arg(long, global = true)]
    threshold: Option<f64>,
    /// Order-penalty weight.
    #[arg(long, global = true)]
    gamma: Option<f64>,
    /// Fragmentation exponent.
    #[arg(long, global = true)]
    beta: Option<f64>,
    /// Window size as a multiple of query length.
    #[arg(long, global = true)]
    window_factor: Option<usize>,
    /// Window stride in tokens; defaults to max(1, |query|/4).
    #[arg(long, global = true)]
    stride: Option<usize>,
    #[arg(long, global = true)]
    beam_width: Option<usize>,
    /// Search hits considered per query.
    #[arg(long, global = true)]
    top_k: Option<usize>,
    /// Smallest recall bucket that is reported.
    #[arg(long, global = true)]
    min_group: Option<usize>,
    #[arg(long, global = true)]
    bucket_width: Option<f64>,
    /// Queries longer than this many characters are skipped.
    #[arg(long, global = true)]
    query_length_cap: Option<usize>,
    /// Provider requests per second.
    #[arg(long, global = true)]
    rate_limit: Option<f64>,
    #[arg(long, global = true)]
    max_retries: Option<u32>,
    #[arg(long, global = true)]
    fetch_max_bytes: Option<usize>,
    /// Primary evaluation language tag (pages in other languages are skipped).
    #[arg(long, global = true)]
    language: Option<String>,
    /// Fetch pages even when crawl-absent.
    #[arg(long, global = true)]
    allow_crawl_absent_fetch: bool,
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Model prediction file (jsonl) for split analytics.
    #[arg(long, global = true)]
    predictions: Option<PathBuf>,
    /// Blocklist file, one URL per line.
    #[arg(long, global = true)]
    blocklist: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Read benchmark files, verbalize queries, write the skip ledger.
    Ingest,
    /// Search, verify crawl presence, fetch and extract pages.
    Discover,
    /// Score queries against fetched pages.
    Match,
    /// Combine evidence into per-item contamination verdicts.
    Classify,
    /// Produce contamination statistics and optional split analytics.
    Report,
    /// Run every stage in order.
    All,
    /// Re-check crawl presence under another range and compare rates.
    Rescan {
        /// Alternate crawl range, e.g. 2023-01..2023-52.
        #[arg(long)]
        alt_range: String,
    },
}

fn parse_benchmark_spec(spec: &str) -> Result<BenchmarkSource> {
    let mut parts = spec.splitn(3, ':');
    let (name, split, path) = match (parts.next(), parts.next(), parts.next()) {
        (Some(n), Some(s), Some(p)) if !n.is_empty() && !p.is_empty() => (n, s, p),
        _ => bail!("bad --benchmark {spec:?}; expected NAME:SPLIT:PATH"),
    };
    Ok(BenchmarkSource {
        name: name.to_string(),
        split: Split::from_str(split).map_err(|e| anyhow!(e))?,
        path: PathBuf::from(path),
    })
}

fn parse_provider(value: &str) -> Result<ProviderKind> {
    match value {
        "mock" => Ok(ProviderKind::Mock),
        "live" => Ok(ProviderKind::Live),
        other => bail!("unknown provider {other:?}; expected mock or live"),
    }
}

fn env_var(name: &str) -> Option<String> {
    std::env::var(name).ok().filter(|v| !v.is_empty())
}

fn env_parse<T: FromStr>(name: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    match env_var(name) {
        Some(raw) => raw
            .parse::<T>()
            .map(Some)
            .map_err(|e| anyhow!("bad {name}={raw:?}: {e}")),
        None => Ok(None),
    }
}

fn apply_env(cfg: &mut RunConfig) -> Result<()> {
    if let Some(specs) = env_var("LEAKSCAN_BENCHMARKS") {
        cfg.benchmarks = specs
            .split(';')
            .filter(|s| !s.trim().is_empty())
            .map(parse_benchmark_spec)
            .collect::<Result<Vec<_>>>()?;
    }
    if let Some(p) = env_var("LEAKSCAN_PROVIDER") {
        cfg.provider = parse_provider(&p)?;
    }
    if let Some(v) = env_var("LEAKSCAN_CORPUS") {
        cfg.corpus = Some(PathBuf::from(v));
    }
    if let Some(v) = env_var("LEAKSCAN_SEARCH_ENDPOINT") {
        cfg.search_endpoint = Some(v);
    }
    if let Some(v) = env_var("LEAKSCAN_API_KEY_ENV") {
        cfg.api_key_env = Some(v);
    }
    if let Some(v) = env_var("LEAKSCAN_CDX_ENDPOINT") {
        cfg.cdx_endpoint = Some(v);
    }
    if let Some(v) = env_var("LEAKSCAN_CRAWL_RANGE") {
        cfg.crawl_range = v;
    }
    if let Some(v) = env_parse::<f64>("LEAKSCAN_THRESHOLD")? {
        cfg.threshold = v;
    }
    if let Some(v) = env_parse::<f64>("LEAKSCAN_GAMMA")? {
        cfg.gamma = v;
    }
    if let Some(v) = env_parse::<f64>("LEAKSCAN_BETA")? {
        cfg.beta = v;
    }
    if let Some(v) = env_parse::<usize>("LEAKSCAN_WINDOW_FACTOR")? {
        cfg.window_factor = v;
    }
    if let Some(v) = env_parse::<usize>("LEAKSCAN_STRIDE")? {
        cfg.stride = Some(v);
    }
    if let Some(v) = env_parse::<usize>("LEAKSCAN_BEAM_WIDTH")? {
        cfg.beam_width = v;
    }
    if let Some(v) = env_parse::<usize>("LEAKSCAN_TOP_K")? {
        cfg.top_k = v;
    }
    if let Some(v) = env_parse::<usize>("LEAKSCAN_MIN_GROUP")? {
        cfg.min_group = v;
    }
    if let Some(v) = env_parse::<f64>("LEAKSCAN_BUCKET_WIDTH")? {
        cfg.bucket_width = v;
    }
    if let Some(v) = env_parse::<usize>("LEAKSCAN_QUERY_LENGTH_CAP")? {
        cfg.query_length_cap = v;
    }
    if let Some(v) = env_parse::<f64>("LEAKSCAN_RATE_LIMIT")? {
        cfg.rate_limit_per_sec = v;
    }
    if let Some(v) = env_parse::<u32>("LEAKSCAN_MAX_RETRIES")? {
        cfg.max_retries = v;
    }
    if let Some(v) = env_parse::<usize>("LEAKSCAN_FETCH_MAX_BYTES")? {
        cfg.fetch_max_bytes = v;
    }
    if let Some(v) = env_var("LEAKSCAN_LANGUAGE") {
        cfg.primary_language = v;
    }
    if let Some(v) = env_var("LEAKSCAN_CACHE_DIR") {
        cfg.cache_dir = PathBuf::from(v);
    }
    if let Some(v) = env_var("LEAKSCAN_OUTPUT_DIR") {
        cfg.output_dir = PathBuf::from(v);
    }
    if let Some(v) = env_var("LEAKSCAN_PREDICTIONS") {
        cfg.predictions = Some(PathBuf::from(v));
    }
    if let Some(v) = env_var("LEAKSCAN_BLOCKLIST") {
        cfg.blocklist = Some(PathBuf::from(v));
    }
    Ok(())
}

fn apply_overrides(cfg: &mut RunConfig, o: &Overrides) -> Result<()> {
    if !o.benchmarks.is_empty() {
        cfg.benchmarks = o
            .benchmarks
            .iter()
            .map(|s| parse_benchmark_spec(s))
            .collect::<Result<Vec<_>>>()?;
    }
    if let Some(p) = &o.provider {
        cfg.provider = parse_provider(p)?;
    }
    if let Some(v) = &o.corpus {
        cfg.corpus = Some(v.clone());
    }
    if let Some(v) = &o.search_endpoint {
        cfg.search_endpoint = Some(v.clone());
    }
    if let Some(v) = &o.api_key_env {
        cfg.api_key_env = Some(v.clone());
    }
    if let Some(v) = &o.cdx_endpoint {
        cfg.cdx_endpoint = Some(v.clone());
    }
    if let Some(v) = &o.crawl_range {
        cfg.crawl_range = v.clone();
    }
    if let Some(v) = o.threshold {
        cfg.threshold = v;
    }
    if let Some(v) = o.gamma {
        cfg.gamma = v;
    }
    if let Some(v) = o.beta {
        cfg.beta = v;
    }
    if let Some(v) = o.window_factor {
        cfg.window_factor = v;
    }
    if let Some(v) = o.stride {
        cfg.stride = Some(v);
    }
    if let Some(v) = o.beam_width {
        cfg.beam_width = v;
    }
    if let Some(v) = o.top_k {
        cfg.top_k = v;
    }
    if let Some(v) = o.min_group {
        cfg.min_group = v;
    }
    if let Some(v) = o.bucket_width {
        cfg.bucket_width = v;
    }
    if let Some(v) = o.query_length_cap {
        cfg.query_length_cap = v;
    }
    if let Some(v) = o.rate_limit {
        cfg.rate_limit_per_sec = v;
    }
    if let Some(v) = o.max_retries {
        cfg.max_retries = v;
    }
    if let Some(v) = o.fetch_max_bytes {
        cfg.fetch_max_bytes = v;
    }
    if let Some(v) = &o.language {
        cfg.primary_language = v.clone();
    }
    if o.allow_crawl_absent_fetch {
        cfg.allow_crawl_absent_fetch = true;
    }
    if let Some(v) = &o.cache_dir {
        cfg.cache_dir = v.clone();
    }
    if let Some(v) = &o.output_dir {
        cfg.output_dir = v.clone();
    }
    if let Some(v) = &o.predictions {
        cfg.predictions = Some(v.clone());
    }
    if let Some(v) = &o.blocklist {
        cfg.blocklist = Some(v.clone());
    }
    Ok(())
}

fn build_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        cfg = serde_json::from_str(&text)
            .with_context(|| format!("parsing config file {}", path.display()))?;
    }
    apply_env(&mut cfg)?;
    apply_overrides(&mut cfg, &cli.overrides)?;
    Ok(cfg)
}

const EXIT_CONFIG: u8 = 1;
const EXIT_PARTIAL: u8 = 2;
const EXIT_MISSING_UPSTREAM: u8 = 3;

fn exit_for(err: &PipelineError) -> u8 {
    match err {
        PipelineError::Config(_) => EXIT_CONFIG,
        PipelineError::MissingUpstream { .. } => EXIT_MISSING_UPSTREAM,
        PipelineError::Io { .. } | PipelineError::Provider(_) => EXIT_PARTIAL,
    }
}

fn run(cli: &Cli) -> Result<u8> {
    let config = build_config(cli)?;

    if let Command::Rescan { alt_range } = &cli.command {
        return match rescan(&config, alt_range) {
            Ok(report) => {
                print!("{}", leakscan_core::report::rescan_table(&report));
                Ok(0)
            }
            Err(e) => {
                eprintln!("error: {e}");
                Ok(exit_for(&e))
            }
        };
    }

    let stages: Vec<Stage> = match &cli.command {
        Command::Ingest => vec![Stage::Ingest],
        Command::Discover => vec![Stage::Discover],
        Command::Match => vec![Stage::Match],
        Command::Classify => vec![Stage::Classify],
        Command::Report => vec![Stage::Report],
        Command::All => Stage::ALL.to_vec(),
        Command::Rescan { .. } => unreachable!("handled above"),
    };

    if let Err(e) = config.validate() {
        eprintln!("error: {e}");
        return Ok(exit_for(&e));
    }
    let engine = match build_engine(&config) {
        Ok(engine) => engine,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(exit_for(&e));
        }
    };
    match run_pipeline(&config, &engine, &stages) {
        Ok(summary) => {
            for (stage, status) in &summary.stages {
                match status {
                    StageStatus::Completed => eprintln!("stage {stage}: completed"),
                    StageStatus::UpToDate => eprintln!("stage {stage}: up-to-date (skipped)"),
                }
            }
            if stages.contains(&Stage::Report) {
                let report_path = config.output_dir.join("report.txt");
                if let Ok(table) = std::fs::read_to_string(&report_path) {
                    print!("{table}");
                }
            }
            if summary.partial {
                eprintln!("completed with partial failures; see the run ledgers");
                Ok(EXIT_PARTIAL)
            } else {
                Ok(0)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            Ok(exit_for(&e))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version are not errors
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(EXIT_CONFIG);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}
