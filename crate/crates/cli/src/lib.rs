//! The `tmr` command line.
//!
//! Exit status is 0 on success, 1 on a usage error and 2 when the input data
//! or a provider fails.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use tmr_core::bench::{bench_retrieval, bench_timing, synthetic_index, synthetic_query, Timing};
use tmr_core::embed::{embed_batch, embed_one, DEFAULT_BATCH_SIZE, DEFAULT_DIM};
use tmr_core::lexical::lexical_top_k;
use tmr_core::meteor::MeteorParams;
use tmr_core::sidecar::SidecarProvider;
use tmr_core::sts::{evaluate_sts, load_sts, StsFormat, StsMethod, StsReport};
use tmr_core::tm_eval::{build_eval_rows, mean_sts_per_bucket, partition_and_average, PartitionSpec, StsPairing};
use tmr_core::unit::{load_units_with, unescape, LanguagePair, UnitFormat};
use tmr_core::{
    DeterministicEmbedder, EmbeddingProvider, Error, Gazetteer, MatchMethod, Normalizer,
    TranslationMemoryStore, VectorIndex,
};

pub const SIDECAR_ENV: &str = "TMR_SIDECAR_CMD";

#[derive(Debug, Parser)]
#[command(name = "tmr", version, about = "Translation-memory retrieval and evaluation")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    pub threads: Option<u16>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load translation units into a store file.
    Ingest(IngestArgs),
    /// Retrieve the best matches for one segment.
    Query(QueryArgs),
    /// Correlate similarity scores with human STS judgements.
    EvalSts(EvalStsArgs),
    /// Compare lexical and embedding retrieval per fuzzy-score bucket.
    EvalTm(EvalTmArgs),
    /// Time memory embedding, query embedding and retrieval.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProviderKind {
    Deterministic,
    Sidecar,
}

#[derive(Debug, Clone, Args)]
pub struct ProviderArgs {
    #[arg(long, value_enum, default_value_t = ProviderKind::Deterministic)]
    pub provider: ProviderKind,
    /// Command that starts the sidecar; TMR_SIDECAR_CMD takes precedence.
    #[arg(long)]
    pub sidecar_cmd: Option<String>,
    /// Dimension of the deterministic embedder.
    #[arg(long, default_value_t = DEFAULT_DIM, value_parser = positive)]
    pub dim: usize,
    #[arg(long, default_value_t = DEFAULT_BATCH_SIZE, value_parser = positive)]
    pub batch_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FileFormat {
    Tsv,
    Jsonl,
}

impl From<FileFormat> for UnitFormat {
    fn from(f: FileFormat) -> Self {
        match f {
            FileFormat::Tsv => UnitFormat::Tsv,
            FileFormat::Jsonl => UnitFormat::Jsonl,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct IngestArgs {
    /// TSV (`source<TAB>target`) or JSONL units.
    #[arg(long)]
    pub input: PathBuf,
    /// Defaults to the input file extension.
    #[arg(long, value_enum)]
    pub format: Option<FileFormat>,
    #[arg(long)]
    pub db: PathBuf,
    /// Embed every source segment and store the vectors.
    #[arg(long)]
    pub embed: bool,
    #[arg(long, default_value = "en")]
    pub source_lang: String,
    #[arg(long, default_value = "es")]
    pub target_lang: String,
    #[command(flatten)]
    pub provider: ProviderArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum QueryMethod {
    Lexical,
    Embed,
}

#[derive(Debug, Clone, Args)]
pub struct QueryArgs {
    #[arg(long)]
    pub db: PathBuf,
    #[arg(long)]
    pub text: String,
    #[arg(long, value_enum, default_value_t = QueryMethod::Lexical)]
    pub method: QueryMethod,
    #[arg(long, default_value_t = 1, value_parser = positive)]
    pub k: usize,
    #[command(flatten)]
    pub provider: ProviderArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StsMethodArg {
    Edit,
    Embed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DatasetFormat {
    Sick,
    Tsv3,
}

#[derive(Debug, Clone, Args)]
pub struct EvalStsArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Defaults to `sick` for files whose first line starts with `pair_ID`,
    /// `tsv3` otherwise.
    #[arg(long, value_enum)]
    pub dataset_format: Option<DatasetFormat>,
    #[arg(long, value_enum)]
    pub method: StsMethodArg,
    #[command(flatten)]
    pub provider: ProviderArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Json,
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PairingArg {
    QuerySource,
    ReferenceTarget,
}

#[derive(Debug, Clone, Args)]
pub struct EvalTmArgs {
    /// Translation memory as a units file.
    #[arg(long, required_unless_present = "db", conflicts_with = "db")]
    pub tm: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub tm_format: Option<FileFormat>,
    /// Translation memory as a store file.
    #[arg(long)]
    pub db: Option<PathBuf>,
    /// Incoming segments, one per line.
    #[arg(long)]
    pub input: PathBuf,
    /// Reference translations, one per line, aligned with `--input`.
    #[arg(long)]
    pub refs: PathBuf,
    /// Replace numbers, dates and entities with placeholders before scoring.
    #[arg(long)]
    pub normalize: bool,
    /// Entity list (`surface<TAB>PER|LOC|ORG`) used by `--normalize`.
    #[arg(long, requires = "normalize")]
    pub gazetteer: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Json)]
    pub format: ReportFormat,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Comma-separated bucket edges from 0 to 1.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0])]
    pub edges: Vec<f64>,
    /// Also report the mean embedding similarity per bucket.
    #[arg(long)]
    pub mean_sts: bool,
    #[arg(long, value_enum, default_value_t = PairingArg::QuerySource)]
    pub sts_pairing: PairingArg,
    #[command(flatten)]
    pub provider: ProviderArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BenchMode {
    /// All three steps with the selected provider.
    Full,
    /// Retrieval only, over random vectors.
    Retrieval,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[arg(long, value_parser = positive)]
    pub n: usize,
    #[arg(long, default_value_t = 5, value_parser = positive)]
    pub reps: usize,
    #[arg(long, value_enum, default_value_t = BenchMode::Full)]
    pub mode: BenchMode,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[command(flatten)]
    pub provider: ProviderArgs,
}

fn positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(n) => Ok(n),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e)
    }
}

type CliResult<T> = Result<T, CliError>;

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    0
                }
                _ => {
                    let _ = write!(err, "{text}");
                    1
                }
            };
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        builder = builder.num_threads(n as usize);
    }
    let pool = match builder.build() {
        Ok(pool) => pool,
        Err(e) => {
            let _ = writeln!(err, "error: cannot start worker threads: {e}");
            return 2;
        }
    };
    let mut buf = Vec::new();
    let result = pool.install(|| dispatch(&cli.command, &mut buf));
    let _ = out.write_all(&buf);
    let _ = out.flush();
    match result {
        Ok(()) => 0,
        Err(CliError::Usage(message)) => {
            let _ = writeln!(err, "error: {message}");
            1
        }
        Err(CliError::Data(e)) => {
            let _ = writeln!(err, "error: {e}");
            2
        }
    }
}

fn dispatch(command: &Command, out: &mut Vec<u8>) -> CliResult<()> {
    match command {
        Command::Ingest(args) => ingest(args, out),
        Command::Query(args) => query(args, out),
        Command::EvalSts(args) => eval_sts(args, out),
        Command::EvalTm(args) => eval_tm(args, out),
        Command::Bench(args) => bench(args, out),
    }
}

fn sidecar_command(args: &ProviderArgs) -> Option<String> {
    std::env::var(SIDECAR_ENV)
        .ok()
        .filter(|c| !c.trim().is_empty())
        .or_else(|| args.sidecar_cmd.clone())
}

/// Builds the provider. `dim` overrides `--dim` for the deterministic
/// embedder (used to match an existing store).
fn provider(args: &ProviderArgs, dim: Option<usize>) -> CliResult<Box<dyn EmbeddingProvider>> {
    match args.provider {
        ProviderKind::Deterministic => Ok(Box::new(DeterministicEmbedder::with_batch_size(
            dim.unwrap_or(args.dim),
            args.batch_size,
        ))),
        ProviderKind::Sidecar => {
            let cmd = sidecar_command(args).ok_or_else(|| {
                CliError::Usage(format!("--provider sidecar needs --sidecar-cmd or {SIDECAR_ENV}"))
            })?;
            let p = SidecarProvider::spawn_with_batch_size(&cmd, args.batch_size)?;
            if let Some(d) = dim {
                if p.spec().dim != d {
                    return Err(Error::Dimension { expected: d, got: p.spec().dim }.into());
                }
            }
            Ok(Box::new(p))
        }
    }
}

fn json_line<T: Serialize>(out: &mut Vec<u8>, value: &T) {
    serde_json::to_writer(&mut *out, value).expect("serializable output");
    out.push(b'\n');
}

fn embed_store(store: &mut TranslationMemoryStore, provider: &dyn EmbeddingProvider) -> CliResult<()> {
    let sources: Vec<String> = store.units().map(|u| u.source_text.clone()).collect();
    if sources.is_empty() {
        return Ok(());
    }
    let ids: Vec<u64> = store.units().map(|u| u.id).collect();
    let vectors = embed_batch(provider, &sources)?;
    for (id, v) in ids.into_iter().zip(vectors) {
        store.set_vector(id, v)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct IngestSummary<'a> {
    db: &'a Path,
    units: usize,
    dim: usize,
    embedded: bool,
}

fn ingest(args: &IngestArgs, out: &mut Vec<u8>) -> CliResult<()> {
    let langs = LanguagePair::new(&args.source_lang, &args.target_lang);
    let format = args.format.map_or_else(|| UnitFormat::from_path(&args.input), UnitFormat::from);
    let units = load_units_with(&args.input, format, &langs)?;
    let (dim, provider) = if args.embed {
        let p = provider(&args.provider, None)?;
        (p.spec().dim, Some(p))
    } else {
        (args.provider.dim, None)
    };
    let mut store = TranslationMemoryStore::from_units(units, dim, langs)?;
    if let Some(p) = provider {
        embed_store(&mut store, p.as_ref())?;
    }
    store.save(&args.db)?;
    json_line(
        out,
        &IngestSummary {
            db: &args.db,
            units: store.len(),
            dim,
            embedded: args.embed,
        },
    );
    Ok(())
}

#[derive(Serialize)]
struct QueryHit<'a> {
    rank: usize,
    id: u64,
    score: f64,
    method: MatchMethod,
    source: &'a str,
    target: &'a str,
}

fn query(args: &QueryArgs, out: &mut Vec<u8>) -> CliResult<()> {
    let store = TranslationMemoryStore::open(&args.db)?;
    match args.method {
        QueryMethod::Lexical => {
            for (rank, m) in lexical_top_k(&args.text, &store, args.k)?.iter().enumerate() {
                json_line(
                    out,
                    &QueryHit {
                        rank: rank + 1,
                        id: m.unit.id,
                        score: m.score,
                        method: m.method,
                        source: &m.unit.source_text,
                        target: &m.unit.target_text,
                    },
                );
            }
        }
        QueryMethod::Embed => {
            if store.is_empty() {
                return Err(Error::EmptyMemory.into());
            }
            if !store.has_all_vectors() {
                return Err(CliError::Usage(format!(
                    "{} has no vectors; ingest with --embed",
                    args.db.display()
                )));
            }
            let index = VectorIndex::from_store(&store)?;
            let p = provider(&args.provider, Some(store.dim()))?;
            let q = embed_one(p.as_ref(), &args.text)?;
            for (rank, n) in index.get_nearest(&q, args.k)?.iter().enumerate() {
                let unit = &store.get(n.id).expect("indexed from this store").unit;
                json_line(
                    out,
                    &QueryHit {
                        rank: rank + 1,
                        id: n.id,
                        score: n.similarity,
                        method: MatchMethod::Embedding,
                        source: &unit.source_text,
                        target: &unit.target_text,
                    },
                );
            }
        }
    }
    Ok(())
}

fn sniff_sts_format(path: &Path) -> CliResult<StsFormat> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
    Ok(if text.starts_with("pair_ID") { StsFormat::Sick } else { StsFormat::Tsv3 })
}

fn eval_sts(args: &EvalStsArgs, out: &mut Vec<u8>) -> CliResult<()> {
    let format = match args.dataset_format {
        Some(DatasetFormat::Sick) => StsFormat::Sick,
        Some(DatasetFormat::Tsv3) => StsFormat::Tsv3,
        None => sniff_sts_format(&args.dataset)?,
    };
    let pairs = load_sts(&args.dataset, format)?;
    let embedder;
    let method = match args.method {
        StsMethodArg::Edit => StsMethod::EditMinmax,
        StsMethodArg::Embed => {
            embedder = provider(&args.provider, None)?;
            StsMethod::EmbedCosine(embedder.as_ref())
        }
    };
    let metrics = evaluate_sts(&pairs, method)?;
    json_line(out, &StsReport::new(&method, metrics, pairs.len()));
    Ok(())
}

/// One segment per line; the usual `\t`, `\n`, `\\` escapes apply.
fn read_lines(path: &Path) -> CliResult<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
    let mut lines: Vec<&str> = text.split('\n').collect();
    if lines.last() == Some(&"") {
        lines.pop();
    }
    Ok(lines
        .into_iter()
        .map(|l| unescape(l.strip_suffix('\r').unwrap_or(l)).trim().to_string())
        .collect())
}

fn load_tm(args: &EvalTmArgs, p: &mut Option<Box<dyn EmbeddingProvider>>) -> CliResult<TranslationMemoryStore> {
    if let Some(db) = &args.db {
        let mut store = TranslationMemoryStore::open(db)?;
        let fresh = provider(&args.provider, Some(store.dim()))?;
        if !store.has_all_vectors() {
            embed_store(&mut store, fresh.as_ref())?;
        }
        *p = Some(fresh);
        return Ok(store);
    }
    let path = args.tm.as_ref().expect("clap requires --tm or --db");
    let format = args.tm_format.map_or_else(|| UnitFormat::from_path(path), UnitFormat::from);
    let langs = LanguagePair::default();
    let units = load_units_with(path, format, &langs)?;
    let fresh = provider(&args.provider, None)?;
    let mut store = TranslationMemoryStore::from_units(units, fresh.spec().dim, langs)?;
    embed_store(&mut store, fresh.as_ref())?;
    *p = Some(fresh);
    Ok(store)
}

fn eval_tm(args: &EvalTmArgs, out: &mut Vec<u8>) -> CliResult<()> {
    let spec = PartitionSpec::new(args.edges.clone()).map_err(|e| CliError::Usage(e.to_string()))?;
    let queries = read_lines(&args.input)?;
    let refs = read_lines(&args.refs)?;
    if queries.len() != refs.len() {
        return Err(Error::Argument(format!(
            "{} input segments but {} references",
            queries.len(),
            refs.len()
        ))
        .into());
    }
    let normalizer = if args.normalize {
        Some(match &args.gazetteer {
            Some(path) => Normalizer::with_gazetteer(Gazetteer::load(path)?),
            None => Normalizer::default(),
        })
    } else {
        None
    };
    let mut p = None;
    let store = load_tm(args, &mut p)?;
    let p = p.expect("provider built with the store");
    let index = VectorIndex::from_store(&store)?;
    let params = MeteorParams::default();
    let inputs: Vec<(String, String)> = queries.into_iter().zip(refs).collect();
    let rows = build_eval_rows(&inputs, &store, &index, p.as_ref(), &params)?;
    let report = partition_and_average(&rows, &spec, normalizer.as_ref(), &params)?;
    let sts = if args.mean_sts {
        let pairing = match args.sts_pairing {
            PairingArg::QuerySource => StsPairing::QueryVsSource,
            PairingArg::ReferenceTarget => StsPairing::ReferenceVsTarget,
        };
        Some(mean_sts_per_bucket(&rows, &spec, p.as_ref(), pairing)?)
    } else {
        None
    };

    let mut text = String::new();
    match args.format {
        ReportFormat::Json => {
            text.push_str(&report.to_json());
            text.push('\n');
            if let Some(s) = &sts {
                text.push_str(&s.to_json());
                text.push('\n');
            }
        }
        ReportFormat::Table => {
            text.push_str(&report.to_table());
            if let Some(s) = &sts {
                text.push('\n');
                text.push_str(&s.to_table());
            }
        }
    }
    match &args.report {
        Some(path) => fs::write(path, text).map_err(|e| Error::Io { path: path.clone(), source: e })?,
        None => out.extend_from_slice(text.as_bytes()),
    }
    Ok(())
}

#[derive(Serialize)]
struct RetrievalReport {
    n: usize,
    dim: usize,
    repetitions: usize,
    retrieve_single_query: Timing,
}

fn bench(args: &BenchArgs, out: &mut Vec<u8>) -> CliResult<()> {
    match args.mode {
        BenchMode::Full => {
            let p = provider(&args.provider, None)?;
            let report = bench_timing(args.n, p.as_ref(), args.reps)?;
            json_line(out, &report);
        }
        BenchMode::Retrieval => {
            let dim = args.provider.dim;
            let index = synthetic_index(args.n, dim, args.seed)?;
            let query = synthetic_query(dim, args.seed);
            let timing = bench_retrieval(&index, &query, args.reps)?;
            json_line(
                out,
                &RetrievalReport {
                    n: args.n,
                    dim,
                    repetitions: args.reps,
                    retrieve_single_query: timing,
                },
            );
        }
    }
    Ok(())
}
