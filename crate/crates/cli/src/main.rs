//! `consilium`: run review pipelines, score runs, build reports, serve the
//! adjudication API.

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use consilium_api::ApiConfig;
use consilium_core::case::{load_case, load_gold, load_lexicon, ConflictLexicon, DocumentError, PatientCase};
use consilium_core::gateway::{
    read_transcript, ChatBackend, Gateway, GatewayError, HttpBackend, HttpConfig, RecordingSession, ReplayBackend,
    ScriptedBackend,
};
use consilium_core::roles::TemplateSet;
use consilium_core::store::{
    radar_from_store, render_csv, render_table, report_table, ClassificationSubmission, Corpus, RatingsSubmission,
    RunStatus, RunStore, StoreError,
};
use consilium_core::workflow::{run_pipeline, PipelineKind, RunConfig, WorkflowError};

/// Exit code for a replayed run whose requests no longer match its transcript.
const EXIT_DRIFT: u8 = 3;

#[derive(Parser)]
#[command(name = "consilium", version, about = "Conflict-driven GP/MDT medication review")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a pipeline on one case (or every corpus case) and store the run.
    Run(RunArgs),
    /// Merge classifications into a run and compute its metrics.
    Eval(EvalArgs),
    /// Record Likert ratings and consensus scores for a run.
    Rate(RateArgs),
    /// Build the per-case metric table or the radar export.
    Report(ReportArgs),
    /// List stored runs with their status.
    List(ListArgs),
    /// Serve the adjudication API.
    Serve(ServeArgs),
}

#[derive(Args)]
#[command(group(ArgGroup::new("backend").required(true).args(["endpoint", "replay", "scripted"])))]
#[command(group(ArgGroup::new("target").required(true).args(["case", "all_cases"])))]
struct RunArgs {
    /// Corpus case id, or path to a case.json.
    #[arg(long)]
    case: Option<String>,
    /// Run every case in the corpus.
    #[arg(long, conflicts_with = "replay")]
    all_cases: bool,
    #[arg(long, default_value = "corpus")]
    corpus: PathBuf,
    /// Gold standard checked against the case; defaults to the corpus file.
    #[arg(long)]
    gold: Option<PathBuf>,
    /// Conflict lexicon; defaults to the corpus file or a sibling lexicon.json.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long, value_parser = parse_pipeline)]
    pipeline: PipelineKind,
    /// Model id sent to the endpoint. Taken from the transcript when replaying.
    #[arg(long)]
    model: Option<String>,
    /// OpenAI-compatible endpoint; the credential comes from CONSILIUM_API_KEY.
    #[arg(long)]
    endpoint: Option<String>,
    /// Re-execute against a recorded transcript.
    #[arg(long)]
    replay: Option<PathBuf>,
    /// Scripted replies: a file, or a directory of `<run_id>.json` / `<case_id>.json`.
    #[arg(long)]
    scripted: Option<PathBuf>,
    /// Runs directory.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    #[arg(long, conflicts_with = "all_cases")]
    run_id: Option<String>,
    /// Directory of prompt templates overriding the built-in ones.
    #[arg(long)]
    templates: Option<PathBuf>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    max_rounds: Option<u32>,
}

fn parse_pipeline(s: &str) -> Result<PipelineKind, String> {
    s.parse()
}

#[derive(Args)]
struct EvalArgs {
    /// Run id, or path to a run directory.
    #[arg(long)]
    run: String,
    #[arg(long, default_value = "runs")]
    runs_dir: PathBuf,
    /// Classification file: a list, `{classifications, goal_counts, count_overrides}`,
    /// or a full classifications.json. Without it the stored file is re-scored.
    #[arg(long)]
    classifications: Option<PathBuf>,
    #[arg(long, default_value = "corpus")]
    corpus: PathBuf,
    /// Adjudicator recorded for entries that name none.
    #[arg(long, default_value = "")]
    adjudicator: String,
    /// Count unclassified gold actions as omissions and report provisionally.
    #[arg(long)]
    allow_partial: bool,
    /// Print the full metrics document instead of a summary.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct RateArgs {
    /// Run id, or path to a run directory.
    #[arg(long)]
    run: String,
    #[arg(long, default_value = "runs")]
    runs_dir: PathBuf,
    /// Ratings file: a list of `{rater, dimension, score}`, or
    /// `{ratings, consensus}`. Without it the current summary is printed.
    #[arg(long)]
    ratings: Option<PathBuf>,
    /// Adjudicator recorded for consensus scores.
    #[arg(long, default_value = "")]
    adjudicator: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Table,
    Csv,
    RadarJson,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long, default_value = "runs")]
    runs_dir: PathBuf,
    #[arg(long, value_enum, default_value = "table")]
    format: ReportFormat,
    /// Write to a file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ListArgs {
    #[arg(long, default_value = "runs")]
    runs_dir: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    bind: IpAddr,
    #[arg(long, default_value = "runs")]
    runs_dir: PathBuf,
    #[arg(long, default_value = "corpus")]
    corpus: PathBuf,
    #[arg(long)]
    read_only: bool,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Document(#[from] DocumentError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Workflow(#[from] WorkflowError),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{0}")]
    Other(String),
}

impl CliError {
    fn is_drift(&self) -> bool {
        matches!(
            self,
            CliError::Workflow(WorkflowError::Gateway { source: GatewayError::ReplayMiss { .. }, .. })
                | CliError::Gateway(GatewayError::ReplayMiss { .. })
        )
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Rate(args) => cmd_rate(args),
        Command::Report(args) => cmd_report(args),
        Command::List(args) => cmd_list(args),
        Command::Serve(args) => cmd_serve(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

struct LoadedCase {
    case: PatientCase,
    lexicon: ConflictLexicon,
}

fn load_target(args: &RunArgs, case_arg: &str) -> Result<LoadedCase, CliError> {
    let as_path = Path::new(case_arg);
    if as_path.is_file() {
        let mut case = load_case(as_path)?;
        let sibling = |name: &str| as_path.parent().map(|d| d.join(name)).filter(|p| p.is_file());
        let lexicon_path = args
            .lexicon
            .clone()
            .or_else(|| sibling("lexicon.json"))
            .ok_or_else(|| CliError::Usage(format!("no --lexicon given and no lexicon.json next to {case_arg}")))?;
        let lexicon = load_lexicon(&lexicon_path)?;
        check_case_id(&lexicon_path, &lexicon.case_id, &case.case_id)?;
        if let Some(gold_path) = args.gold.clone().or_else(|| sibling("gold.json")) {
            let gold = load_gold(&gold_path)?;
            check_case_id(&gold_path, &gold.case_id, &case.case_id)?;
        }
        case.canonicalize(&lexicon);
        return Ok(LoadedCase { case, lexicon });
    }
    let corpus = Corpus::open(&args.corpus)?;
    let (case, lexicon) = match &args.lexicon {
        None => {
            let bundle = corpus.load(case_arg)?;
            (bundle.case, bundle.lexicon)
        }
        Some(path) => {
            let mut case = load_case(corpus.case_path(case_arg)?)?;
            let lexicon = load_lexicon(path)?;
            check_case_id(path, &lexicon.case_id, &case.case_id)?;
            case.canonicalize(&lexicon);
            (case, lexicon)
        }
    };
    if let Some(path) = &args.gold {
        let gold = load_gold(path)?;
        check_case_id(path, &gold.case_id, &case.case_id)?;
    }
    Ok(LoadedCase { case, lexicon })
}

fn check_case_id(path: &Path, found: &str, expected: &str) -> Result<(), CliError> {
    if found != expected {
        return Err(
            DocumentError::invariant(path, format!("case_id `{found}` does not match case `{expected}`")).into()
        );
    }
    Ok(())
}

/// Keeps the characters allowed in run ids.
fn slug(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '-' }).collect()
}

fn cmd_run(args: RunArgs) -> Result<ExitCode, CliError> {
    let store = RunStore::open(&args.out)?;
    let templates = match &args.templates {
        Some(dir) => TemplateSet::from_dir(dir).map_err(|e| CliError::Other(format!("{}: {e}", dir.display())))?,
        None => TemplateSet::builtin(),
    };
    let case_ids = if args.all_cases {
        Corpus::open(&args.corpus)?.case_ids()?
    } else {
        vec![args.case.clone().expect("clap requires --case or --all-cases")]
    };

    let mut failures = 0;
    let mut drift = false;
    for case_arg in &case_ids {
        match run_one(&args, &store, &templates, case_arg) {
            Ok(dir) => println!("{}", dir.display()),
            Err(e) => {
                eprintln!("error: {case_arg}: {e}");
                if e.is_drift() {
                    drift = true;
                    if let Some(path) = &args.replay {
                        eprint!("{}", drift_report(path, &e));
                    }
                }
                failures += 1;
            }
        }
    }
    Ok(match (failures, drift) {
        (0, _) => ExitCode::SUCCESS,
        (_, true) => ExitCode::from(EXIT_DRIFT),
        _ => ExitCode::FAILURE,
    })
}

fn run_one(args: &RunArgs, store: &RunStore, templates: &TemplateSet, case_arg: &str) -> Result<PathBuf, CliError> {
    let LoadedCase { case, lexicon } = load_target(args, case_arg)?;

    let mut recorded_run_id = None;
    let mut recorded_model = None;
    if let Some(path) = &args.replay {
        let (header, entries) = read_transcript(path)?;
        recorded_run_id = Some(header.run_id);
        recorded_model = entries.first().map(|e| e.request.model_id.clone());
    }
    let model = args
        .model
        .clone()
        .or(recorded_model)
        .ok_or_else(|| CliError::Usage("--model is required unless replaying".into()))?;
    let run_id = match (&args.run_id, recorded_run_id) {
        (Some(id), _) => id.clone(),
        (None, Some(id)) => id,
        (None, None) => format!("{}-{}-{}", case.case_id, args.pipeline.short(), slug(&model)),
    };

    let backend: Box<dyn ChatBackend> = if let Some(endpoint) = &args.endpoint {
        Box::new(HttpBackend::new(HttpConfig::from_env(Some(endpoint.clone()))?)?)
    } else if let Some(path) = &args.replay {
        Box::new(ReplayBackend::from_transcript(path)?)
    } else {
        let path = args.scripted.as_ref().expect("clap requires one backend");
        Box::new(ScriptedBackend::from_file(&script_path(path, &run_id, &case.case_id)?)?)
    };

    let mut config = RunConfig::new(args.pipeline, model);
    if let Some(t) = args.temperature {
        config.sampling.temperature = t;
    }
    if let Some(r) = args.max_rounds {
        config.forum.max_rounds = r;
    }

    let staged = store.begin(&run_id)?;
    let session = RecordingSession::create(staged.transcript_path(), &run_id)?;
    let mut gateway = Gateway::new(backend.as_ref()).with_recording(session);
    let outcome = run_pipeline(&run_id, &case, &lexicon, &config, templates, &mut gateway);
    gateway.finish()?;
    let record = outcome?;
    for warning in &record.warnings {
        eprintln!("warning: {run_id}: {}", warning.message);
    }
    Ok(staged.commit(&record)?)
}

fn script_path(path: &Path, run_id: &str, case_id: &str) -> Result<PathBuf, CliError> {
    if !path.is_dir() {
        return Ok(path.to_path_buf());
    }
    [run_id, case_id]
        .iter()
        .map(|name| path.join(format!("{name}.json")))
        .find(|p| p.is_file())
        .ok_or_else(|| CliError::Usage(format!("no {run_id}.json or {case_id}.json in {}", path.display())))
}

/// What the transcript holds for the tag whose request no longer matches.
fn drift_report(transcript: &Path, error: &CliError) -> String {
    let (tag, digest) = match error {
        CliError::Workflow(WorkflowError::Gateway {
            source: GatewayError::ReplayMiss { request_tag, digest }, ..
        })
        | CliError::Gateway(GatewayError::ReplayMiss { request_tag, digest }) => (request_tag, digest),
        _ => return String::new(),
    };
    let mut out = format!("drift report for {}\n  request `{tag}` now has digest {digest}\n", transcript.display());
    match read_transcript(transcript) {
        Ok((_, entries)) => {
            let same_tag: Vec<_> = entries.iter().filter(|e| &e.request.request_tag == tag).collect();
            if same_tag.is_empty() {
                out.push_str("  the transcript has no exchange with this tag\n");
            }
            for e in same_tag {
                out.push_str(&format!("  recorded digest {} (sequence {})\n", e.request_digest, e.sequence));
            }
            out.push_str(&format!("  recorded exchanges: {}\n", entries.len()));
        }
        Err(e) => out.push_str(&format!("  transcript unreadable: {e}\n")),
    }
    out
}

fn read_submission(path: &Path) -> Result<ClassificationSubmission, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.into(), source })?;
    serde_json::from_str(&text).map_err(|source| CliError::Json { path: path.into(), source })
}

fn read_ratings(path: &Path) -> Result<RatingsSubmission, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.into(), source })?;
    serde_json::from_str(&text).map_err(|source| CliError::Json { path: path.into(), source })
}

fn resolve_run(run: &str, runs_dir: &Path) -> Result<(RunStore, String), CliError> {
    let as_path = Path::new(run);
    if as_path.join(consilium_core::store::RUN_FILE).is_file() {
        let canonical = as_path.canonicalize().map_err(|source| CliError::Io { path: as_path.into(), source })?;
        let id = canonical.file_name().and_then(|n| n.to_str()).map(str::to_string);
        let parent = canonical.parent().map(Path::to_path_buf);
        if let (Some(id), Some(parent)) = (id, parent) {
            return Ok((RunStore::open(parent)?, id));
        }
    }
    Ok((RunStore::open(runs_dir)?, run.to_string()))
}

fn cmd_eval(args: EvalArgs) -> Result<ExitCode, CliError> {
    let (store, run_id) = resolve_run(&args.run, &args.runs_dir)?;
    let corpus = Corpus::open(&args.corpus)?;
    let report = match &args.classifications {
        Some(path) => {
            let submission = read_submission(path)?;
            store.submit_classifications(&run_id, &corpus, submission, &args.adjudicator, args.allow_partial)?
        }
        None => store.evaluate_run(&run_id, &corpus, args.allow_partial)?,
    };
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report).map_err(|e| CliError::Other(e.to_string()))?);
        return Ok(ExitCode::SUCCESS);
    }
    let mut lines = vec![
        format!("run                     {}", report.run_id),
        format!("correctness             {}", report.correctness),
        format!("completeness            {}", report.completeness),
        format!("ddi ratio               {}", report.ddi_ratio),
        format!("contraindication ratio  {}", report.contraindication_ratio),
        format!("medication ratio        {}", report.medication_ratio),
        format!("met-goal ratio          {}", report.met_goal_ratio.map_or("-".into(), |r| r.to_string())),
    ];
    if let Some(p) = report.preferred_included {
        lines.push(format!("preferred set included  {}", if p { "yes" } else { "no" }));
    }
    if report.provisional {
        lines.push(format!("provisional; unclassified: {}", report.unclassified.join(", ")));
    } else {
        lines.push(format!("wrote {}", store.file(&run_id, consilium_core::store::METRICS_FILE).display()));
    }
    println!("{}", lines.join("\n"));
    Ok(ExitCode::SUCCESS)
}

fn cmd_rate(args: RateArgs) -> Result<ExitCode, CliError> {
    let (store, run_id) = resolve_run(&args.run, &args.runs_dir)?;
    let outcome = match &args.ratings {
        Some(path) => store.submit_ratings(&run_id, read_ratings(path)?, &args.adjudicator)?,
        None => store.ratings_outcome(&run_id)?,
    };
    for s in &outcome.summaries {
        let consensus = s.consensus_score.map_or(String::new(), |c| format!("  consensus {c}"));
        println!("{:<16}{:.2} \u{b1} {:.2} (n={}){consensus}", s.dimension.as_str(), s.mean, s.std, s.n);
    }
    if !outcome.pending_consensus.is_empty() {
        let dims: Vec<&str> = outcome.pending_consensus.iter().map(|d| d.as_str()).collect();
        println!("consensus needed: {}", dims.join(", "));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_report(args: ReportArgs) -> Result<ExitCode, CliError> {
    let store = RunStore::open(&args.runs_dir)?;
    let text = match args.format {
        ReportFormat::Table => render_table(&report_table(&store)?),
        ReportFormat::Csv => render_csv(&report_table(&store)?).map_err(|e| CliError::Other(e.to_string()))?,
        ReportFormat::RadarJson => {
            let doc = radar_from_store(&store)?;
            let mut text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Other(e.to_string()))?;
            text.push('\n');
            text
        }
    };
    match &args.out {
        Some(path) => std::fs::write(path, text).map_err(|source| CliError::Io { path: path.clone(), source })?,
        None => print!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_list(args: ListArgs) -> Result<ExitCode, CliError> {
    let store = RunStore::open(&args.runs_dir)?;
    let runs = store.list_runs()?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&runs).map_err(|e| CliError::Other(e.to_string()))?);
        return Ok(ExitCode::SUCCESS);
    }
    for run in runs {
        let status = serde_json::to_value(run.status).ok().and_then(|v| v.as_str().map(str::to_string));
        let mut line = format!("{:<40} {:<10}", run.run_id, status.unwrap_or_default());
        if run.status == RunStatus::Invalid {
            line.push_str(run.problem.as_deref().unwrap_or(""));
        } else {
            line.push_str(&format!(
                " {:<8} {:<14} {}",
                run.case_id.unwrap_or_default(),
                run.pipeline.map(PipelineKind::as_str).unwrap_or(""),
                run.model_id.unwrap_or_default()
            ));
        }
        println!("{}", line.trim_end());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_serve(args: ServeArgs) -> Result<ExitCode, CliError> {
    let config = ApiConfig { runs_dir: args.runs_dir, corpus_dir: args.corpus, read_only: args.read_only };
    let addr = SocketAddr::new(args.bind, args.port);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Other(e.to_string()))?;
    runtime.block_on(consilium_api::serve(config, addr)).map_err(|e| CliError::Other(e.to_string()))?;
    Ok(ExitCode::SUCCESS)
}
