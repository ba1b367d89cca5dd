//! Command-line driver. `dispatch` is the whole program minus process setup,
//! so it can be called in-process.
//!
//! Settings resolve as flag, then `NFRGEN_*` environment variable, then the
//! `--config` JSON file, then the built-in default.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, OnceLock};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analysis::{self, Dataset, ExportFormat};
use crate::corpus::{
    self, parse_requirements, reference_srs_documents, FrSubset, InputFormat, RequirementKind, RequirementRecord,
    SelectionStrategy,
};
use crate::error::{Error, Result};
use crate::eval_service::api::{self, ApiState};
use crate::eval_service::{AssignRequest, EvalService, Evaluator, SampleRequest, Task};
use crate::generation::{self, GenerationOptions, GenerationRun};
use crate::llm_gateway::{GatewayConfig, MockTransport, SystemClock, VirtualClock};
use crate::prompting::{PromptTemplate, Technique};
use crate::quality_model::RelatednessMap;
use crate::util;

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_IO: i32 = 4;
pub const EXIT_TRANSPORT: i32 = 5;
pub const EXIT_CONFLICT: i32 = 6;

const EXIT_HELP: &str = "\
Exit codes:
  0  success
  1  other failure
  2  usage error (unknown flag, missing argument)
  3  validation error (bad input data, unknown attribute, capacity, integrity)
  4  I/O or storage error
  5  transport error (LLM provider unreachable, timeout, credentials)
  6  conflict (output exists, use --force; frozen evaluation; authorization)

Environment:
  NFRGEN_CONFIG, NFRGEN_OUTPUT, NFRGEN_STORE, NFRGEN_SEED, NFRGEN_MODELS,
  NFRGEN_RELATEDNESS, NFRGEN_PORT, NFRGEN_ADMIN_TOKEN, NFRGEN_LOG";

pub fn exit_code(e: &Error) -> i32 {
    match e.code() {
        "validation" | "unknown_attribute" | "invalid_argument" | "parse" | "capacity" | "integrity"
        | "format_version" | "json" | "csv" | "not_found" => EXIT_VALIDATION,
        "io" | "storage" => EXIT_IO,
        "timeout" | "credential" | "transport" => EXIT_TRANSPORT,
        "conflict" | "unauthorized" => EXIT_CONFLICT,
        _ => EXIT_OTHER,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputMode {
    Text,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "nfrgen", version, about = "Generate, evaluate and analyze ISO/IEC 25010 NFRs", after_help = EXIT_HELP)]
pub struct Cli {
    /// Output format for results and errors.
    #[arg(long, global = true, value_enum, env = "NFRGEN_OUTPUT")]
    pub output: Option<OutputMode>,
    /// JSON file with default settings.
    #[arg(long, global = true, env = "NFRGEN_CONFIG")]
    pub config: Option<PathBuf>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a labeled requirements file and report FR/NFR counts.
    Ingest(IngestArgs),
    /// Select the FR subset used for generation.
    Select(SelectArgs),
    /// Generate NFRs for every FR with every configured model.
    Generate(GenerateArgs),
    /// Draw a stratified evaluation sample into the store.
    Sample(SampleArgs),
    /// Assign evaluators to both tasks and issue tokens.
    Assign(AssignArgs),
    /// Run the evaluation API (and web UI assets when given).
    Serve(ServeArgs),
    /// Compute the metrics report.
    Analyze(AnalyzeArgs),
    /// Export the evaluation dataset and report.
    Export(ExportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Tsv,
    Csv,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// TSV or CSV with text and label columns.
    #[arg(long)]
    pub input: PathBuf,
    /// Overrides the extension-based guess.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Write the parsed records as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fail on the first rejected row.
    #[arg(long)]
    pub strict: bool,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Uniform,
    Stratified,
    Explicit,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Requirements file (TSV/CSV) or records JSON from `ingest`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 34)]
    pub count: usize,
    #[arg(long, value_enum, default_value = "uniform")]
    pub strategy: StrategyArg,
    /// Comma-separated ids for the explicit strategy.
    #[arg(long, value_delimiter = ',')]
    pub ids: Vec<String>,
    #[arg(long, env = "NFRGEN_SEED")]
    pub seed: Option<u64>,
    /// Keep only FRs from documents written in or after this year.
    #[arg(long)]
    pub min_year: Option<i32>,
    #[arg(long)]
    pub max_year: Option<i32>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// FR subset JSON from `select`, or a TSV/CSV whose FR rows are used as is.
    #[arg(long)]
    pub frs: Option<PathBuf>,
    /// Gateway config JSON (providers and models). Defaults to the eight
    /// reference models.
    #[arg(long, env = "NFRGEN_MODELS")]
    pub models: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Answer from a deterministic mock provider instead of the network.
    #[arg(long)]
    pub mock: bool,
    /// NFRs per FR from the mock provider.
    #[arg(long, default_value_t = 5)]
    pub mock_nfrs: usize,
    /// Continue an interrupted run in --out.
    #[arg(long)]
    pub resume: bool,
    #[arg(long)]
    pub force: bool,
    /// FRs per request.
    #[arg(long, default_value_t = 1)]
    pub batch_size: usize,
    /// Comma-separated prompt techniques (snake_case); default all ten.
    #[arg(long, value_delimiter = ',')]
    pub techniques: Vec<String>,
    /// Re-ask once when a reply has no parsable block.
    #[arg(long)]
    pub reprompt: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Scoring,
    Selection,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Scoring => Task::Scoring,
            TaskArg::Selection => Task::AttributeSelection,
        }
    }
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long, env = "NFRGEN_STORE")]
    pub store: Option<PathBuf>,
    /// Generation run to add to the pool first.
    #[arg(long)]
    pub run: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub task: TaskArg,
    #[arg(long)]
    pub n: usize,
    #[arg(long, env = "NFRGEN_SEED")]
    pub seed: Option<u64>,
    /// Restrict the sample to these FR ids (comma-separated).
    #[arg(long, value_delimiter = ',')]
    pub fr_ids: Vec<String>,
    /// Replace an existing sample (only before any record is stored).
    #[arg(long)]
    pub replace: bool,
    /// Also write the sample as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct AssignArgs {
    #[arg(long, env = "NFRGEN_STORE")]
    pub store: Option<PathBuf>,
    /// JSON array of {evaluator_id, display_name, years_experience, role_title}.
    #[arg(long)]
    pub evaluators: PathBuf,
    /// FRs per evaluator and task.
    #[arg(long = "per-fr", alias = "frs-per-evaluator", default_value_t = 3)]
    pub per_fr: usize,
    #[arg(long, env = "NFRGEN_SEED")]
    pub seed: Option<u64>,
    /// Write assignments with tokens as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "NFRGEN_STORE")]
    pub store: Option<PathBuf>,
    #[arg(long)]
    pub host: Option<String>,
    #[arg(long, env = "NFRGEN_PORT")]
    pub port: Option<u16>,
    /// Directory of built web UI assets.
    #[arg(long)]
    pub assets: Option<PathBuf>,
    #[arg(long, env = "NFRGEN_ADMIN_TOKEN", hide_env_values = true)]
    pub admin_token: Option<String>,
    #[arg(long, env = "NFRGEN_RELATEDNESS")]
    pub relatedness: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub run: Option<PathBuf>,
    #[arg(long, env = "NFRGEN_STORE")]
    pub store: Option<PathBuf>,
    /// Exported dataset directory instead of run + store.
    #[arg(long, conflicts_with_all = ["run", "store"])]
    pub dataset: Option<PathBuf>,
    #[arg(long, env = "NFRGEN_RELATEDNESS")]
    pub relatedness: Option<PathBuf>,
    /// Write the report as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportFormatArg {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long, env = "NFRGEN_STORE")]
    pub store: Option<PathBuf>,
    #[arg(long)]
    pub run: Option<PathBuf>,
    #[arg(long, conflicts_with_all = ["run", "store"])]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: ExportFormatArg,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, env = "NFRGEN_RELATEDNESS")]
    pub relatedness: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

/// Defaults read from `--config`. Relative paths resolve against the file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub output: Option<OutputMode>,
    pub store: Option<PathBuf>,
    pub seed: Option<u64>,
    pub models: Option<PathBuf>,
    pub relatedness: Option<PathBuf>,
    pub host: Option<String>,
    pub port: Option<u16>,
    pub assets: Option<PathBuf>,
    pub admin_token: Option<String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: FileConfig = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.store, &mut cfg.models, &mut cfg.relatedness, &mut cfg.assets]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

/// What a command reports: a JSON value plus its text rendering.
struct Outcome {
    result: Value,
    text: String,
}

/// Parses `argv` and runs the command, writing results to `out` and
/// diagnostics to `err`. Returns the process exit code.
pub fn dispatch<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    init_logging(cli.verbose);
    let config = match &cli.config {
        Some(p) => FileConfig::load(p),
        None => Ok(FileConfig::default()),
    };
    let mode = cli
        .output
        .or(config.as_ref().ok().and_then(|c| c.output))
        .unwrap_or(OutputMode::Text);
    let name = command_name(&cli.command);
    let outcome = config.and_then(|cfg| run_command(cli.command, &cfg));
    match outcome {
        Ok(o) => {
            let _ = match mode {
                OutputMode::Json => writeln!(
                    out,
                    "{}",
                    serde_json::to_string_pretty(&json!({"ok": true, "command": name, "result": o.result}))
                        .expect("json value")
                ),
                OutputMode::Text => write!(out, "{}", o.text),
            };
            EXIT_OK
        }
        Err(e) => {
            let code = exit_code(&e);
            let _ = match mode {
                OutputMode::Json => writeln!(
                    out,
                    "{}",
                    serde_json::to_string_pretty(&json!({
                        "ok": false,
                        "command": name,
                        "error": {"code": e.code(), "message": e.to_string()},
                        "exit_code": code,
                    }))
                    .expect("json value")
                ),
                OutputMode::Text => writeln!(err, "error: {e}"),
            };
            code
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_env("NFRGEN_LOG")
        .format_timestamp(None)
        .try_init();
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Ingest(_) => "ingest",
        Command::Select(_) => "select",
        Command::Generate(_) => "generate",
        Command::Sample(_) => "sample",
        Command::Assign(_) => "assign",
        Command::Serve(_) => "serve",
        Command::Analyze(_) => "analyze",
        Command::Export(_) => "export",
    }
}

fn run_command(command: Command, cfg: &FileConfig) -> Result<Outcome> {
    match command {
        Command::Ingest(a) => ingest(a),
        Command::Select(a) => select(a, cfg),
        Command::Generate(a) => generate(a, cfg),
        Command::Sample(a) => sample(a, cfg),
        Command::Assign(a) => assign(a, cfg),
        Command::Serve(a) => serve(a, cfg),
        Command::Analyze(a) => analyze(a, cfg),
        Command::Export(a) => export(a, cfg),
    }
}

/// Writes `bytes` unless `path` already holds different content; identical
/// content is left alone so reruns are no-ops.
fn write_output(path: &Path, bytes: &[u8], force: bool) -> Result<()> {
    if path.exists() {
        let current = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        if current == bytes {
            return Ok(());
        }
        if !force {
            return Err(Error::Conflict(format!("{} exists, use --force", path.display())));
        }
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    util::write_atomic(path, bytes)
}

fn to_pretty<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

fn require_store(flag: Option<PathBuf>, cfg: &FileConfig) -> Result<PathBuf> {
    flag.or_else(|| cfg.store.clone())
        .ok_or_else(|| Error::InvalidArgument("no store given (use --store, NFRGEN_STORE or the config file)".into()))
}

fn relatedness(flag: Option<PathBuf>, cfg: &FileConfig) -> Result<RelatednessMap> {
    match flag.or_else(|| cfg.relatedness.clone()) {
        Some(p) => RelatednessMap::load(&p),
        None => Ok(RelatednessMap::default()),
    }
}

fn read_records(path: &Path, format: Option<FormatArg>) -> Result<corpus::ParseOutcome> {
    let is_json = path.extension().and_then(|e| e.to_str()) == Some("json");
    if is_json && format.is_none() {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let records: Vec<RequirementRecord> = serde_json::from_str(&text)?;
        return Ok(corpus::ParseOutcome {
            total_rows: records.len(),
            records,
            ..Default::default()
        });
    }
    let format = match format {
        Some(FormatArg::Tsv) => InputFormat::Tsv,
        Some(FormatArg::Csv) => InputFormat::Csv,
        None => InputFormat::from_path(path),
    };
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_requirements(file, format)
}

fn ingest(a: IngestArgs) -> Result<Outcome> {
    let parsed = read_records(&a.input, a.format)?;
    let (fr, nfr) = (
        parsed.count(RequirementKind::Functional),
        parsed.count(RequirementKind::NonFunctional),
    );
    let rejected = parsed.rejected.clone();
    let warnings = parsed.warnings.len();
    let records = if a.strict {
        parsed.into_strict()?
    } else {
        parsed.records
    };
    if let Some(out) = &a.out {
        write_output(out, &to_pretty(&records), a.force)?;
    }
    let mut text = format!(
        "{} records: {fr} FR, {nfr} NFR, {} rejected\n",
        records.len(),
        rejected.len()
    );
    for r in rejected.iter().take(10) {
        text.push_str(&format!("  row {}: {}\n", r.row, r.message));
    }
    Ok(Outcome {
        result: json!({
            "records": records.len(),
            "fr": fr,
            "nfr": nfr,
            "rejected": rejected,
            "duplicate_warnings": warnings,
            "out": a.out,
        }),
        text,
    })
}

fn year_of(r: &RequirementRecord, docs: &[corpus::SrsDocument]) -> Option<i32> {
    r.year.or_else(|| {
        let doc = r.source_doc.as_deref()?;
        docs.iter().find(|d| d.name.eq_ignore_ascii_case(doc)).map(|d| d.year)
    })
}

fn select(a: SelectArgs, cfg: &FileConfig) -> Result<Outcome> {
    let mut records = read_records(&a.input, None)?.into_strict()?;
    if a.min_year.is_some() || a.max_year.is_some() {
        let (lo, hi) = (a.min_year.unwrap_or(i32::MIN), a.max_year.unwrap_or(i32::MAX));
        if lo > hi {
            return Err(Error::InvalidArgument(format!("min year {lo} is after max year {hi}")));
        }
        let docs = reference_srs_documents();
        records.retain(|r| year_of(r, &docs).is_some_and(|y| (lo..=hi).contains(&y)));
    }
    let strategy = match a.strategy {
        StrategyArg::Uniform => SelectionStrategy::UniformRandom,
        StrategyArg::Stratified => SelectionStrategy::PerDocumentStratified,
        StrategyArg::Explicit => SelectionStrategy::ExplicitList(a.ids.clone()),
    };
    let count = if a.strategy == StrategyArg::Explicit {
        a.ids.len()
    } else {
        a.count
    };
    let seed = a.seed.or(cfg.seed).unwrap_or(0);
    let subset = corpus::select_fr_subset(&records, count, strategy, seed)?;
    write_output(&a.out, subset.to_json().as_bytes(), a.force)?;
    let docs = corpus::per_document_counts(&subset);
    Ok(Outcome {
        text: format!("selected {} FRs into {}\n", subset.len(), a.out.display()),
        result: json!({
            "count": subset.len(),
            "seed": seed,
            "ids": subset.ids().collect::<Vec<_>>(),
            "per_document": docs,
            "out": a.out,
        }),
    })
}

fn load_subset(path: &Path) -> Result<FrSubset> {
    if path.extension().and_then(|e| e.to_str()) == Some("json") {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if let Ok(subset) = FrSubset::from_json(&text) {
            return Ok(subset);
        }
    }
    let records: Vec<RequirementRecord> = read_records(path, None)?
        .into_strict()?
        .into_iter()
        .filter(|r| r.kind == RequirementKind::Functional)
        .collect();
    FrSubset::from_records(records)
}

fn techniques(names: &[String]) -> Result<BTreeSet<Technique>> {
    if names.is_empty() {
        return Ok(Technique::all());
    }
    names
        .iter()
        .map(|n| {
            serde_json::from_value::<Technique>(Value::String(n.trim().to_string()))
                .map_err(|_| Error::InvalidArgument(format!("unknown technique {n:?}")))
        })
        .collect()
}

/// Set on ctrl-c so in-flight work can stop cleanly. One listener per process.
fn interrupt_flag() -> Arc<AtomicBool> {
    static FLAG: OnceLock<Arc<AtomicBool>> = OnceLock::new();
    FLAG.get_or_init(|| {
        let flag = Arc::new(AtomicBool::new(false));
        listen_for_interrupt(flag.clone());
        flag
    })
    .clone()
}

fn listen_for_interrupt(f: Arc<AtomicBool>) {
    std::thread::spawn(move || {
        let Ok(rt) = tokio::runtime::Builder::new_current_thread().enable_all().build() else {
            return;
        };
        rt.block_on(async {
            if tokio::signal::ctrl_c().await.is_ok() {
                log::warn!("interrupt received; finishing in-flight requests");
                f.store(true, Ordering::SeqCst);
            }
        });
    });
}

fn run_summary(run: &GenerationRun, out: &Path) -> Outcome {
    let statuses: serde_json::Map<String, Value> = run
        .models
        .iter()
        .map(|m| {
            (
                m.model_id.clone(),
                json!({
                    "status": run.statuses.get(&m.model_id),
                    "nfrs": run.counts.get(&m.model_id).copied().unwrap_or(0),
                }),
            )
        })
        .collect();
    let mut text = format!("{} in {}: {} NFRs\n", run.run_id, out.display(), run.total_nfrs());
    for m in &run.models {
        text.push_str(&format!(
            "  {:<40} {:>5}  {}\n",
            m.model_id,
            run.counts.get(&m.model_id).copied().unwrap_or(0),
            run.statuses.get(&m.model_id).map_or("pending", |s| s.as_str())
        ));
    }
    Outcome {
        result: json!({
            "run_id": run.run_id,
            "out": out,
            "frs": run.subset.len(),
            "total_nfrs": run.total_nfrs(),
            "models": statuses,
            "artifacts": generation::artifact_paths(out, run),
        }),
        text,
    }
}

fn generate(a: GenerateArgs, cfg: &FileConfig) -> Result<Outcome> {
    let options = GenerationOptions {
        batch_size: a.batch_size,
        reprompt_on_parse_failure: a.reprompt,
        force: a.force,
        interrupt: Some(interrupt_flag()),
        ..GenerationOptions::default()
    };
    let gateway_cfg = match a.models.clone().or_else(|| cfg.models.clone()) {
        Some(p) => GatewayConfig::load(&p)?,
        None => GatewayConfig::reference(),
    };
    let gateway = if a.mock {
        let mock = Arc::new(MockTransport::valid(a.mock_nfrs));
        gateway_cfg.mock_gateway(mock, Arc::new(VirtualClock::new()))
    } else {
        gateway_cfg
            .http_gateway(Arc::new(SystemClock::default()))
            .map_err(Error::Gateway)?
    };
    let run = if a.resume {
        generation::resume_run(&a.out, &gateway, &options)?
    } else {
        let frs = a
            .frs
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("--frs is required unless --resume is given".into()))?;
        let subset = load_subset(frs)?;
        let template = PromptTemplate {
            techniques: techniques(&a.techniques)?,
            ..PromptTemplate::default()
        };
        generation::run_generation(&subset, &gateway_cfg.models, &template, &a.out, &gateway, &options)?
    };
    Ok(run_summary(&run, &a.out))
}

fn sample(a: SampleArgs, cfg: &FileConfig) -> Result<Outcome> {
    let svc = EvalService::open(&require_store(a.store, cfg)?)?;
    if let Some(run) = &a.run {
        svc.import_run(&generation::load_run(run)?)?;
    }
    let s = svc.create_sample(&SampleRequest {
        task: a.task.into(),
        target_count: a.n,
        seed: a.seed.or(cfg.seed).unwrap_or(0),
        fr_ids: (!a.fr_ids.is_empty()).then_some(a.fr_ids),
        replace: a.replace,
    })?;
    if let Some(out) = &a.out {
        write_output(out, &to_pretty(&s), a.force)?;
    }
    let mut text = format!("{} ({}): {} NFRs\n", s.sample_id, s.task, s.members.len());
    for (m, c) in &s.strata {
        text.push_str(&format!("  {m:<40} {c:>4}\n"));
    }
    Ok(Outcome {
        result: json!({
            "sample_id": s.sample_id,
            "task": s.task,
            "size": s.members.len(),
            "strata": s.strata,
            "seed": s.seed,
        }),
        text,
    })
}

fn assign(a: AssignArgs, cfg: &FileConfig) -> Result<Outcome> {
    let svc = EvalService::open(&require_store(a.store, cfg)?)?;
    let text = std::fs::read_to_string(&a.evaluators).map_err(|e| Error::io(&a.evaluators, e))?;
    let evaluators: Vec<Evaluator> = serde_json::from_str(&text)?;
    let issued = svc.assign_evaluators(&AssignRequest {
        evaluators,
        frs_per_evaluator: a.per_fr,
        seed: a.seed.or(cfg.seed).unwrap_or(0),
    })?;
    if let Some(out) = &a.out {
        write_output(out, &to_pretty(&issued), a.force)?;
    }
    let mut text = String::new();
    for i in &issued {
        text.push_str(&format!(
            "{:<8} {:<20} FRs {:<24} NFRs {:>3}  token {}\n",
            i.assignment.evaluator_id,
            i.assignment.task,
            i.assignment.fr_ids.join(","),
            i.assignment.nfr_ids.len(),
            i.token
        ));
    }
    let rows: Vec<Value> = issued
        .iter()
        .map(|i| {
            json!({
                "evaluator_id": i.assignment.evaluator_id,
                "task": i.assignment.task,
                "fr_ids": i.assignment.fr_ids,
                "nfr_count": i.assignment.nfr_ids.len(),
                "token": i.token,
            })
        })
        .collect();
    Ok(Outcome {
        result: json!({"assignments": rows}),
        text,
    })
}

fn serve(a: ServeArgs, cfg: &FileConfig) -> Result<Outcome> {
    let svc = EvalService::open(&require_store(a.store, cfg)?)?;
    let host = a
        .host
        .or_else(|| cfg.host.clone())
        .unwrap_or_else(|| "127.0.0.1".into());
    let port = a.port.or(cfg.port).unwrap_or(8080);
    let addr: SocketAddr = format!("{host}:{port}")
        .parse()
        .map_err(|e| Error::InvalidArgument(format!("bad address {host}:{port}: {e}")))?;
    let state = Arc::new(ApiState {
        service: Arc::new(svc),
        admin_token: a.admin_token.or_else(|| cfg.admin_token.clone()),
        relatedness: relatedness(a.relatedness, cfg)?,
    });
    let assets = a.assets.or_else(|| cfg.assets.clone());
    let rt = tokio::runtime::Runtime::new().map_err(|e| Error::io("<runtime>", e))?;
    rt.block_on(api::serve(state, addr, assets))
        .map_err(|e| Error::io(format!("{addr}"), e))?;
    Ok(Outcome {
        result: json!({"stopped": true, "addr": addr.to_string()}),
        text: "server stopped\n".into(),
    })
}

/// Dataset from an export directory, or from the store with the run's NFRs
/// merged in.
fn gather(dataset: Option<PathBuf>, run: Option<PathBuf>, store: Option<PathBuf>, cfg: &FileConfig) -> Result<Dataset> {
    if let Some(dir) = dataset {
        return Dataset::load(&dir);
    }
    let mut ds = match store.or_else(|| cfg.store.clone()) {
        Some(p) => {
            if !p.exists() {
                return Err(Error::io(
                    &p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "store not found"),
                ));
            }
            EvalService::open(&p)?.dataset()?
        }
        None if run.is_some() => Dataset::default(),
        None => return Err(Error::InvalidArgument("give --dataset, or --store and/or --run".into())),
    };
    if let Some(dir) = run {
        let loaded = generation::load_run(&dir)?;
        for fr in &loaded.run.subset.members {
            match ds.frs.iter().find(|f| f.id == fr.id) {
                Some(f) if f != fr => {
                    return Err(Error::Integrity(format!("FR {} differs between run and store", fr.id)))
                }
                Some(_) => {}
                None => ds.frs.push(fr.clone()),
            }
        }
        for n in loaded.artifacts.iter().flat_map(|a| &a.entries) {
            match ds.nfrs.iter().find(|x| x.nfr_id == n.nfr_id) {
                Some(x) if x != n => {
                    return Err(Error::Integrity(format!(
                        "NFR {} differs between run and store",
                        n.nfr_id
                    )))
                }
                Some(_) => {}
                None => ds.nfrs.push(n.clone()),
            }
        }
    }
    Ok(ds)
}

fn analyze(a: AnalyzeArgs, cfg: &FileConfig) -> Result<Outcome> {
    let map = relatedness(a.relatedness, cfg)?;
    let ds = gather(a.dataset, a.run, a.store, cfg)?;
    let report = analysis::analyze(&ds, &map)?;
    if let Some(path) = &a.report {
        write_output(path, &to_pretty(&report), a.force)?;
    }
    Ok(Outcome {
        result: serde_json::to_value(&report)?,
        text: analysis::render_text(&report),
    })
}

fn export(a: ExportArgs, cfg: &FileConfig) -> Result<Outcome> {
    let map = relatedness(a.relatedness, cfg)?;
    let ds = gather(a.dataset, a.run, a.store, cfg)?;
    let report = analysis::analyze(&ds, &map)?;
    let occupied = std::fs::read_dir(&a.out)
        .map(|mut d| d.next().is_some())
        .unwrap_or(false);
    if occupied && !a.force {
        return Err(Error::Conflict(format!("{} exists, use --force", a.out.display())));
    }
    let format = match a.format {
        ExportFormatArg::Json => ExportFormat::Json,
        ExportFormatArg::Csv => ExportFormat::Csv,
    };
    ds.export(&a.out, format, Some(&report))?;
    let mut files: Vec<String> = std::fs::read_dir(&a.out)
        .map_err(|e| Error::io(&a.out, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    files.sort();
    Ok(Outcome {
        text: format!("exported {} files to {}\n", files.len(), a.out.display()),
        result: json!({
            "out": a.out,
            "format": format,
            "files": files,
            "scores": ds.scores.len(),
            "selections": ds.selections.len(),
        }),
    })
}
