//! `veritriple` command-line interface.
//!
//! Subcommands: `augment` (validate a corpus), `eval` (pass@k over a
//! benchmark), `audit` (original-design pass rate of a corpus sample),
//! `stats` (corpus length statistics), `replay` (re-simulate a triples
//! file). Exit codes: 0 success, 1 user error, 2 environment error
//! (missing toolchain, unreachable endpoint).

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use veritriple::audit::audit_corpus;
use veritriple::config::{ConfigError, Settings};
use veritriple::dataset::{self, DatasetError};
use veritriple::eval::{self, EvalError, EvalMode};
use veritriple::manifest::RunManifest;
use veritriple::refine::{self, LoopConfig, OutputPaths, PipelineError};
use veritriple::sim::SimError;
use veritriple::teacher::{self, HttpTeacher, Teacher, TeacherError};

#[derive(Parser)]
#[command(name = "veritriple", version, about, propagate_version = true)]
struct Cli {
    /// Flat key = value config file; flags override it, environment
    /// variables (VERITRIPLE_*) override flags.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a corpus of (spec, design) pairs into passing triples.
    Augment(AugmentArgs),
    /// Evaluate candidate completions against a benchmark with pass@k.
    Eval(EvalArgs),
    /// Measure how many original designs pass freshly generated tests.
    Audit(AuditArgs),
    /// Print corpus length statistics for a triples file.
    Stats(StatsArgs),
    /// Re-simulate every triple in a file and report the re-pass rate.
    Replay(ReplayArgs),
}

/// Overrides for the layered settings; unset flags fall through to the
/// config file and the built-in defaults.
#[derive(Args, Default)]
struct SettingsFlags {
    /// Compile command template ({design_file} {test_file} {out_file}).
    #[arg(long, value_name = "CMD")]
    compile_cmd: Option<String>,
    /// Simulation command template ({out_file}).
    #[arg(long, value_name = "CMD")]
    run_cmd: Option<String>,
    /// Simulation wall-clock limit in seconds.
    #[arg(long, value_name = "SECS")]
    sim_timeout: Option<f64>,
    /// Root directory for per-run simulation workspaces.
    #[arg(long, value_name = "DIR")]
    workspace_root: Option<PathBuf>,
    /// Keep simulation workspaces for inspection.
    #[arg(long)]
    keep_workspaces: bool,
    /// Comma-separated output substrings that mark a failing run.
    #[arg(long, value_name = "LIST")]
    failure_patterns: Option<String>,
    /// Maximum teacher attempts per example.
    #[arg(long, value_name = "N")]
    max_attempts: Option<u32>,
    /// Examples (or samples) processed in parallel.
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
    /// Chat-completions endpoint URL.
    #[arg(long, value_name = "URL")]
    endpoint: Option<String>,
    /// Teacher model name.
    #[arg(long, value_name = "NAME")]
    model: Option<String>,
    /// Teacher sampling temperature.
    #[arg(long, value_name = "T")]
    temperature: Option<f64>,
    /// Teacher reply token cap.
    #[arg(long, value_name = "N")]
    max_reply_tokens: Option<u32>,
    /// Teacher request timeout in seconds.
    #[arg(long, value_name = "SECS")]
    request_timeout: Option<f64>,
    /// Retries after a transient teacher failure.
    #[arg(long, value_name = "N")]
    max_retries: Option<u32>,
    /// Base seconds for exponential retry backoff.
    #[arg(long, value_name = "SECS")]
    retry_backoff: Option<f64>,
    /// In-flight teacher request bound.
    #[arg(long, value_name = "N")]
    max_concurrent_requests: Option<usize>,
}

impl SettingsFlags {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        let mut out: Vec<(&'static str, String)> = Vec::new();
        let mut push = |key: &'static str, value: Option<String>| {
            if let Some(value) = value {
                out.push((key, value));
            }
        };
        push("compile-cmd", self.compile_cmd.clone());
        push("run-cmd", self.run_cmd.clone());
        push("sim-timeout", self.sim_timeout.map(|v| v.to_string()));
        push(
            "workspace-root",
            self.workspace_root
                .as_ref()
                .map(|p| p.display().to_string()),
        );
        push(
            "keep-workspaces",
            self.keep_workspaces.then(|| "true".to_string()),
        );
        push("failure-patterns", self.failure_patterns.clone());
        push("max-attempts", self.max_attempts.map(|v| v.to_string()));
        push("workers", self.workers.map(|v| v.to_string()));
        push("endpoint", self.endpoint.clone());
        push("model", self.model.clone());
        push("temperature", self.temperature.map(|v| v.to_string()));
        push(
            "max-reply-tokens",
            self.max_reply_tokens.map(|v| v.to_string()),
        );
        push(
            "request-timeout",
            self.request_timeout.map(|v| v.to_string()),
        );
        push("max-retries", self.max_retries.map(|v| v.to_string()));
        push("retry-backoff", self.retry_backoff.map(|v| v.to_string()));
        push(
            "max-concurrent-requests",
            self.max_concurrent_requests.map(|v| v.to_string()),
        );
        out
    }
}

#[derive(Args)]
struct AugmentArgs {
    /// Input corpus JSONL of {"id", "spec", "design"}.
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    /// Output triples JSONL.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Output rejects JSONL.
    #[arg(long, value_name = "FILE")]
    rejects: PathBuf,
    /// Skip ids already present in either output file.
    #[arg(long)]
    resume: bool,
    /// Use a scripted teacher (JSONL of {"id","attempt","reply"}) instead
    /// of the live endpoint.
    #[arg(long, value_name = "FILE")]
    mock_script: Option<PathBuf>,
    /// Require teacher replies to be a bare JSON object.
    #[arg(long)]
    strict_parse: bool,
    /// Manifest path (default: <out>.manifest.json).
    #[arg(long, value_name = "FILE")]
    manifest: Option<PathBuf>,
    #[command(flatten)]
    settings: SettingsFlags,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Functional,
    Syntax,
}

#[derive(Args)]
struct EvalArgs {
    /// Benchmark directory (one subdirectory per problem).
    #[arg(long, value_name = "DIR")]
    bench: PathBuf,
    /// Completions JSONL of {"problem_id", "samples": [...]}.
    #[arg(long, value_name = "FILE")]
    completions: PathBuf,
    /// k values for pass@k.
    #[arg(
        long,
        value_name = "K",
        value_delimiter = ',',
        default_value = "1,5,10"
    )]
    k: Vec<u32>,
    /// Evaluation mode.
    #[arg(long, value_enum, default_value_t = ModeArg::Functional)]
    mode: ModeArg,
    /// Report JSON path.
    #[arg(long, value_name = "FILE")]
    report: PathBuf,
    /// Manifest path (default: <report>.manifest.json).
    #[arg(long, value_name = "FILE")]
    manifest: Option<PathBuf>,
    #[command(flatten)]
    settings: SettingsFlags,
}

#[derive(Args)]
struct AuditArgs {
    /// Input corpus JSONL of {"id", "spec", "design"}.
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    /// Number of examples to sample without replacement.
    #[arg(long, value_name = "N")]
    sample: usize,
    /// Sampling seed.
    #[arg(long, value_name = "SEED")]
    seed: u64,
    /// Report JSON path.
    #[arg(long, value_name = "FILE")]
    report: PathBuf,
    /// Per-example records JSONL (default: <report>.records.jsonl).
    #[arg(long, value_name = "FILE")]
    records: Option<PathBuf>,
    /// Use a scripted teacher instead of the live endpoint.
    #[arg(long, value_name = "FILE")]
    mock_script: Option<PathBuf>,
    /// Require teacher replies to be a bare JSON object.
    #[arg(long)]
    strict_parse: bool,
    /// Manifest path (default: <report>.manifest.json).
    #[arg(long, value_name = "FILE")]
    manifest: Option<PathBuf>,
    #[command(flatten)]
    settings: SettingsFlags,
}

#[derive(Args)]
struct StatsArgs {
    /// Triples JSONL to summarize.
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    /// Print JSON instead of the table.
    #[arg(long)]
    json: bool,
    /// Manifest path (off unless given; stats writes no other files).
    #[arg(long, value_name = "FILE")]
    manifest: Option<PathBuf>,
    #[command(flatten)]
    settings: SettingsFlags,
}

#[derive(Args)]
struct ReplayArgs {
    /// Triples JSONL to re-simulate.
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    /// Manifest path (default: <in>.replay.manifest.json).
    #[arg(long, value_name = "FILE")]
    manifest: Option<PathBuf>,
    #[command(flatten)]
    settings: SettingsFlags,
}

/// User mistakes exit 1; broken environments exit 2.
enum AppError {
    User(String),
    Env(String),
}

impl From<ConfigError> for AppError {
    fn from(e: ConfigError) -> Self {
        AppError::User(e.to_string())
    }
}

impl From<DatasetError> for AppError {
    fn from(e: DatasetError) -> Self {
        AppError::User(e.to_string())
    }
}

impl From<SimError> for AppError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::ToolchainMissing { .. } | SimError::WorkspaceIo { .. } => {
                AppError::Env(e.to_string())
            }
            other => AppError::User(other.to_string()),
        }
    }
}

impl From<TeacherError> for AppError {
    fn from(e: TeacherError) -> Self {
        match e {
            TeacherError::TransientExhausted { .. } | TeacherError::AuthFailure(_) => {
                AppError::Env(e.to_string())
            }
            other => AppError::User(other.to_string()),
        }
    }
}

impl From<PipelineError> for AppError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Sim(e) => e.into(),
            PipelineError::Teacher(e) => e.into(),
            PipelineError::Dataset(e) => e.into(),
            other => AppError::User(other.to_string()),
        }
    }
}

impl From<EvalError> for AppError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Sim(e) => e.into(),
            other => AppError::User(other.to_string()),
        }
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Env(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let kind = e.kind();
            let _ = e.print();
            return if matches!(kind, ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(AppError::User(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
        Err(AppError::Env(message)) => {
            eprintln!("environment error: {message}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, AppError> {
    let config = cli.config.as_deref();
    match cli.command {
        Command::Augment(args) => run_augment(config, args),
        Command::Eval(args) => run_eval(config, args),
        Command::Audit(args) => run_audit(config, args),
        Command::Stats(args) => run_stats(config, args),
        Command::Replay(args) => run_replay(config, args),
    }
}

fn resolve(config: Option<&Path>, flags: &SettingsFlags) -> Result<Settings, AppError> {
    let pairs = flags.pairs();
    let borrowed: Vec<(&str, String)> = pairs.iter().map(|(k, v)| (*k, v.clone())).collect();
    Ok(Settings::resolve(config, &borrowed)?)
}

fn make_teacher(
    settings: &Settings,
    mock_script: Option<&Path>,
) -> Result<Box<dyn Teacher>, AppError> {
    match mock_script {
        Some(path) => Ok(Box::new(
            teacher::load_script(path).map_err(AppError::from)?,
        )),
        None => Ok(Box::new(HttpTeacher::new(settings.teacher())?)),
    }
}

fn loop_config(settings: &Settings, resume: bool, strict_parse: bool) -> LoopConfig {
    LoopConfig {
        max_attempts: settings.max_attempts,
        workers: settings.workers,
        resume,
        strict_parse,
    }
}

fn manifest_path(explicit: Option<&Path>, default_for: &Path, suffix: &str) -> PathBuf {
    explicit.map(Path::to_path_buf).unwrap_or_else(|| {
        let mut name = default_for.as_os_str().to_owned();
        name.push(suffix);
        PathBuf::from(name)
    })
}

fn run_augment(config: Option<&Path>, args: AugmentArgs) -> Result<ExitCode, AppError> {
    let started = Instant::now();
    let settings = resolve(config, &args.settings)?;
    let pairs = dataset::load_pairs(&args.input)?;
    let teacher = make_teacher(&settings, args.mock_script.as_deref())?;
    let loop_cfg = loop_config(&settings, args.resume, args.strict_parse);
    let out = OutputPaths {
        triples: args.out.clone(),
        rejects: args.rejects.clone(),
    };
    let summary = refine::augment_corpus(
        &pairs,
        teacher.as_ref(),
        &settings.toolchain(),
        &loop_cfg,
        &out,
    )?;
    println!(
        "validated {} rejected {} aborted {} skipped {}",
        summary.validated, summary.rejected, summary.aborted, summary.skipped
    );
    // individual aborts are resumable, but a run where nothing got past the
    // teacher is an endpoint problem
    if summary.aborted > 0 && summary.validated == 0 && summary.rejected == 0 {
        return Err(AppError::Env(format!(
            "teacher endpoint unreachable: all {} processed examples aborted",
            summary.aborted
        )));
    }

    let mut manifest = RunManifest::new(
        "augment",
        serde_json::json!({
            "in": args.input,
            "out": args.out,
            "rejects": args.rejects,
            "resume": args.resume,
            "mock_script": args.mock_script,
            "strict_parse": args.strict_parse,
        }),
        settings,
    );
    manifest.count("input", pairs.len() as u64);
    manifest.count("validated", summary.validated as u64);
    manifest.count("rejected", summary.rejected as u64);
    manifest.count("aborted", summary.aborted as u64);
    manifest.count("skipped", summary.skipped as u64);
    manifest.wall_time_secs = started.elapsed().as_secs_f64();
    manifest.write(&manifest_path(
        args.manifest.as_deref(),
        &args.out,
        ".manifest.json",
    ))?;
    Ok(ExitCode::SUCCESS)
}

fn run_eval(config: Option<&Path>, args: EvalArgs) -> Result<ExitCode, AppError> {
    let started = Instant::now();
    let settings = resolve(config, &args.settings)?;
    let mode = match args.mode {
        ModeArg::Functional => EvalMode::Functional,
        ModeArg::Syntax => EvalMode::Syntax,
    };
    let problems = eval::load_benchmark(&args.bench)?;
    let completions = eval::load_completion_sets(&args.completions)?;
    let report = eval::evaluate_benchmark(
        &problems,
        &completions,
        &settings.toolchain(),
        &args.k,
        mode,
        settings.workers,
    )?;
    for (metric, curve) in &report.pass_at_k {
        for (k, value) in curve {
            println!("pass@{k} ({metric}): {value:.6}");
        }
    }
    let mut body = serde_json::to_string_pretty(&report).expect("report serializes");
    body.push('\n');
    std::fs::write(&args.report, body)?;

    let mut manifest = RunManifest::new(
        "eval",
        serde_json::json!({
            "bench": args.bench,
            "completions": args.completions,
            "k": args.k,
            "mode": mode,
            "report": args.report,
        }),
        settings,
    );
    manifest.count("problems", report.problems.len() as u64);
    manifest.count("n", u64::from(report.n));
    manifest.wall_time_secs = started.elapsed().as_secs_f64();
    manifest.write(&manifest_path(
        args.manifest.as_deref(),
        &args.report,
        ".manifest.json",
    ))?;
    Ok(ExitCode::SUCCESS)
}

fn run_audit(config: Option<&Path>, args: AuditArgs) -> Result<ExitCode, AppError> {
    let started = Instant::now();
    let settings = resolve(config, &args.settings)?;
    let pairs = dataset::load_pairs(&args.input)?;
    if args.sample > pairs.len() {
        return Err(AppError::User(format!(
            "sample size {} exceeds corpus size {}",
            args.sample,
            pairs.len()
        )));
    }
    let teacher = make_teacher(&settings, args.mock_script.as_deref())?;
    let loop_cfg = loop_config(&settings, false, args.strict_parse);
    let records_path = args
        .records
        .clone()
        .unwrap_or_else(|| manifest_path(None, &args.report, ".records.jsonl"));
    let report = audit_corpus(
        &pairs,
        args.sample,
        args.seed,
        teacher.as_ref(),
        &settings.toolchain(),
        &loop_cfg,
        Some(&records_path),
    )?;
    println!(
        "sampled {} passed {} rate {:.4} (validated-only rate {:.4}, {} aborted)",
        report.sampled, report.passed, report.rate, report.rate_validated_only, report.aborted
    );
    if report.aborted > 0 && report.evaluated == 0 {
        return Err(AppError::Env(format!(
            "teacher endpoint unreachable: all {} sampled examples aborted",
            report.aborted
        )));
    }
    let mut body = serde_json::to_string_pretty(&report).expect("report serializes");
    body.push('\n');
    std::fs::write(&args.report, body)?;

    let mut manifest = RunManifest::new(
        "audit",
        serde_json::json!({
            "in": args.input,
            "sample": args.sample,
            "seed": args.seed,
            "report": args.report,
            "records": records_path,
            "mock_script": args.mock_script,
            "strict_parse": args.strict_parse,
        }),
        settings,
    );
    manifest.count("sampled", report.sampled as u64);
    manifest.count("passed", report.passed as u64);
    manifest.count("aborted", report.aborted as u64);
    manifest.wall_time_secs = started.elapsed().as_secs_f64();
    manifest.write(&manifest_path(
        args.manifest.as_deref(),
        &args.report,
        ".manifest.json",
    ))?;
    Ok(ExitCode::SUCCESS)
}

fn run_stats(config: Option<&Path>, args: StatsArgs) -> Result<ExitCode, AppError> {
    let started = Instant::now();
    let settings = resolve(config, &args.settings)?;
    let triples = dataset::load_triples(&args.input)?;
    #[cfg(feature = "parallel")]
    let stats = if settings.workers > 1 {
        dataset::par_compute_stats(&triples)
    } else {
        dataset::compute_stats(&triples)
    };
    #[cfg(not(feature = "parallel"))]
    let stats = dataset::compute_stats(&triples);
    if args.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&stats).expect("stats serialize")
        );
    } else {
        print!("{}", stats.render());
    }
    if let Some(path) = args.manifest {
        let mut manifest = RunManifest::new(
            "stats",
            serde_json::json!({"in": args.input, "json": args.json}),
            settings,
        );
        manifest.count("count", stats.count);
        manifest.wall_time_secs = started.elapsed().as_secs_f64();
        manifest.write(&path)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn run_replay(config: Option<&Path>, args: ReplayArgs) -> Result<ExitCode, AppError> {
    let started = Instant::now();
    let settings = resolve(config, &args.settings)?;
    let triples = dataset::load_triples(&args.input)?;
    let report = refine::replay_triples(&triples, &settings.toolchain(), settings.workers)?;
    let percent = if report.total == 0 {
        100.0
    } else {
        100.0 * report.passed as f64 / report.total as f64
    };
    println!(
        "re-pass: {}/{} ({percent:.1}%)",
        report.passed, report.total
    );
    for failure in &report.failures {
        eprintln!("  {} failed replay: {:?}", failure.id, failure.status);
    }

    let mut manifest = RunManifest::new("replay", serde_json::json!({"in": args.input}), settings);
    manifest.count("total", report.total as u64);
    manifest.count("passed", report.passed as u64);
    manifest.wall_time_secs = started.elapsed().as_secs_f64();
    manifest.write(&manifest_path(
        args.manifest.as_deref(),
        &args.input,
        ".replay.manifest.json",
    ))?;
    if report.all_passed() {
        Ok(ExitCode::SUCCESS)
    } else {
        Err(AppError::User(format!(
            "{} of {} triples failed to re-pass",
            report.total - report.passed,
            report.total
        )))
    }
}
