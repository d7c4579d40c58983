//! Command-line front end for the grading pipeline.
//!
//! Subcommands: `refine` (generate/refine marking schemes), `grade` (run a
//! corpus), `report` (student feedback + performance summary), `compare`
//! (human-vs-automated agreement), `survey` (full survey analysis).
//!
//! Exit codes: 0 success, 2 usage error, 3 auth/transport failure,
//! 4 data error.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use autograde::engine::{grade_corpus, refine_assignment, EngineError, GradingRunConfig};
use autograde::io::{self, read_grade_records, CorpusPaths, IoError};
use autograde::llm::{HttpProvider, LlmClient, LlmError, MockProvider, ProviderConfig};
use autograde::model::HypothesisConfig;
use autograde::report::{
    build_performance_summary, render_performance_summary, render_student_feedback,
};
use autograde::stats::{
    agreement_histogram_tsv, analyze_survey, compare_graders, render_agreement,
    render_survey_tables, survey_tsv, StatError,
};

const EXIT_USAGE: i32 = 2;
const EXIT_TRANSPORT: i32 = 3;
const EXIT_DATA: i32 = 4;

#[derive(Parser)]
#[command(name = "autograde", version, about = "Batch LLM grading pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate or refine marking schemes for every question, writing an
    /// updated assignment file for human review.
    Refine {
        /// Assignment definition (JSON).
        #[arg(long)]
        assignment: PathBuf,
        /// Where to write the updated assignment.
        #[arg(long)]
        out: PathBuf,
        /// Print the refinement prompts and exit without calling anything.
        #[arg(long)]
        dry_run: bool,
        #[command(flatten)]
        provider: ProviderArgs,
    },
    /// Grade a submission corpus, appending records to the output file.
    Grade {
        #[arg(long)]
        assignment: PathBuf,
        #[arg(long)]
        submissions: PathBuf,
        /// Grade-record output (JSON lines, append-safe).
        #[arg(long)]
        out: PathBuf,
        /// Skip (student, question) pairs already present in the output.
        #[arg(long)]
        resume: bool,
        /// Generate schemes for questions that lack one before grading.
        #[arg(long)]
        refine_schemes: bool,
        /// Re-asks permitted per pair on malformed replies.
        #[arg(long, default_value_t = 2)]
        max_parse_retries: u32,
        #[command(flatten)]
        provider: ProviderArgs,
    },
    /// Render per-student feedback documents and the performance summary.
    Report {
        #[arg(long)]
        grades: PathBuf,
        #[arg(long)]
        assignment: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Also summarize common issues per question via the model.
        #[arg(long)]
        summarize: bool,
        #[command(flatten)]
        provider: ProviderArgs,
    },
    /// Agreement analysis between a human grade file and an automated one.
    Compare {
        #[arg(long)]
        human: PathBuf,
        #[arg(long)]
        aag: PathBuf,
        /// Write plot-ready histogram columns (TSV) here.
        #[arg(long)]
        histograms: Option<PathBuf>,
    },
    /// Survey analysis: per-item tests, preference test, weak/strong
    /// comparison, group means.
    Survey {
        survey_file: PathBuf,
        /// Significance level.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Write the delimited analysis table here.
        #[arg(long)]
        tsv: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ProviderArgs {
    /// Use the deterministic offline mock provider.
    #[arg(long)]
    mock: bool,
    /// Model identifier sent to the provider.
    #[arg(long)]
    model: Option<String>,
    /// Sampling temperature.
    #[arg(long)]
    temperature: Option<f64>,
    /// Chat-completion endpoint URL.
    #[arg(long)]
    endpoint: Option<String>,
    /// Maximum concurrent requests.
    #[arg(long)]
    max_concurrency: Option<usize>,
    /// Retries for transient failures.
    #[arg(long)]
    max_retries: Option<u32>,
    /// Per-request timeout in seconds.
    #[arg(long)]
    timeout_secs: Option<u64>,
    /// Environment variable holding the API credential.
    #[arg(long)]
    credential_env: Option<String>,
    /// JSON config file; flags override its fields.
    #[arg(long)]
    provider_config: Option<PathBuf>,
}

struct CliError {
    message: String,
    code: i32,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            code: EXIT_USAGE,
        }
    }

    fn data(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            code: EXIT_DATA,
        }
    }

    fn transport(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            code: EXIT_TRANSPORT,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        // Pointing at a file that does not exist is a usage error; files
        // that exist but do not parse are data errors.
        if let IoError::File { source, .. } = &e {
            if source.kind() == std::io::ErrorKind::NotFound {
                return CliError::usage(e.to_string());
            }
        }
        CliError::data(e.to_string())
    }
}

impl From<StatError> for CliError {
    fn from(e: StatError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<LlmError> for CliError {
    fn from(e: LlmError) -> Self {
        CliError::transport(e.to_string())
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Llm(inner) => inner.into(),
            EngineError::Io(inner) => inner.into(),
            EngineError::MissingSchemes(_) => CliError::usage(e.to_string()),
            other => CliError::data(other.to_string()),
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {}", e.message);
        std::process::exit(e.code);
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Refine {
            assignment,
            out,
            dry_run,
            provider,
        } => cmd_refine(&assignment, &out, dry_run, &provider),
        Command::Grade {
            assignment,
            submissions,
            out,
            resume,
            refine_schemes,
            max_parse_retries,
            provider,
        } => cmd_grade(
            &assignment,
            &submissions,
            &out,
            resume,
            refine_schemes,
            max_parse_retries,
            &provider,
        ),
        Command::Report {
            grades,
            assignment,
            out_dir,
            summarize,
            provider,
        } => cmd_report(&grades, &assignment, &out_dir, summarize, &provider),
        Command::Compare {
            human,
            aag,
            histograms,
        } => cmd_compare(&human, &aag, histograms.as_deref()),
        Command::Survey {
            survey_file,
            alpha,
            tsv,
        } => cmd_survey(&survey_file, alpha, tsv.as_deref()),
    }
}

/// serde view of the optional provider config file.
#[derive(serde::Deserialize, Default)]
#[serde(default)]
struct ProviderFile {
    endpoint: Option<String>,
    model_id: Option<String>,
    temperature: Option<f64>,
    max_retries: Option<u32>,
    timeout_secs: Option<u64>,
    max_concurrency: Option<usize>,
    credential_env: Option<String>,
}

fn build_client(args: &ProviderArgs) -> Result<LlmClient, CliError> {
    let mut config = ProviderConfig::default();

    if let Some(path) = &args.provider_config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        let file: ProviderFile = serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        if let Some(v) = file.endpoint {
            config.endpoint = v;
        }
        if let Some(v) = file.model_id {
            config.model_id = v;
        }
        if let Some(v) = file.temperature {
            config.temperature = v;
        }
        if let Some(v) = file.max_retries {
            config.max_retries = v;
        }
        if let Some(v) = file.timeout_secs {
            config.timeout = Duration::from_secs(v);
        }
        if let Some(v) = file.max_concurrency {
            config.max_concurrency = v.max(1);
        }
        if let Some(v) = file.credential_env {
            config.credential_env = v;
        }
    }

    if args.mock && args.model.is_none() {
        config.model_id = "mock".into();
    }
    if let Some(v) = &args.model {
        config.model_id = v.clone();
    }
    if let Some(v) = args.temperature {
        config.temperature = v;
    }
    if let Some(v) = &args.endpoint {
        config.endpoint = v.clone();
    }
    if let Some(v) = args.max_concurrency {
        config.max_concurrency = v.max(1);
    }
    if let Some(v) = args.max_retries {
        config.max_retries = v;
    }
    if let Some(v) = args.timeout_secs {
        config.timeout = Duration::from_secs(v);
    }
    if let Some(v) = &args.credential_env {
        config.credential_env = v.clone();
    }

    if args.mock {
        return Ok(LlmClient::new(
            Arc::new(MockProvider::new(HashMap::new())),
            config,
        ));
    }
    // Fail fast on a missing credential rather than mid-corpus.
    if std::env::var(&config.credential_env).is_err() {
        return Err(CliError::transport(format!(
            "authentication failed: credential environment variable {} is not set (use --mock for offline runs)",
            config.credential_env
        )));
    }
    if config.endpoint.is_empty() {
        return Err(CliError::usage(
            "no endpoint configured; pass --endpoint or a --provider-config file",
        ));
    }
    Ok(LlmClient::new(Arc::new(HttpProvider), config))
}

fn cmd_refine(
    assignment_path: &Path,
    out: &Path,
    dry_run: bool,
    provider: &ProviderArgs,
) -> Result<(), CliError> {
    let assignment = io::parse_assignment(assignment_path)?;

    if dry_run {
        for question in &assignment.questions {
            let prompt = autograde::prompt::build_refinement_prompt(
                question,
                assignment.scheme(&question.id),
                assignment
                    .reference_solutions
                    .get(&question.id)
                    .map(String::as_str),
            );
            println!("--- refinement prompt for {} ---", question.id);
            print!("{}", prompt.transcript());
        }
        return Ok(());
    }

    let client = build_client(provider)?;
    let (updated, warnings) = refine_assignment(&assignment, &client, 2)?;
    for warning in &warnings {
        eprintln!("warning: {warning}");
    }
    io::write_assignment(&updated, out)?;
    println!(
        "wrote {} ({} schemes, flagged for human review)",
        out.display(),
        updated.schemes.len()
    );
    Ok(())
}

fn cmd_grade(
    assignment_path: &Path,
    submissions_path: &Path,
    out: &Path,
    resume: bool,
    refine_schemes: bool,
    max_parse_retries: u32,
    provider: &ProviderArgs,
) -> Result<(), CliError> {
    let paths = CorpusPaths {
        assignment_file: Some(assignment_path.to_path_buf()),
        submissions_file: Some(submissions_path.to_path_buf()),
        grades_out: Some(out.to_path_buf()),
        ..CorpusPaths::default()
    };
    let (assignment_path, submissions_path, out) =
        paths.require_grading().map_err(CliError::usage)?;

    let assignment = io::parse_assignment(assignment_path)?;
    let submissions = io::parse_submissions(submissions_path, &assignment)?;
    if submissions.is_empty() {
        eprintln!("warning: submissions file is empty; nothing to grade");
    }

    let client = build_client(provider)?;
    let run_config = GradingRunConfig {
        refine_schemes,
        max_parse_retries,
        resume,
    };
    let report = grade_corpus(&submissions, &assignment, &client, &run_config, out)?;

    let rendered = report.render();
    print!("{rendered}");
    let report_path = report_path_for(out);
    std::fs::write(&report_path, &rendered)
        .map_err(|e| CliError::data(format!("{}: {e}", report_path.display())))?;
    println!("records: {}", out.display());
    println!("report:  {}", report_path.display());
    Ok(())
}

fn report_path_for(grades: &Path) -> PathBuf {
    let mut name = grades.file_name().unwrap_or_default().to_os_string();
    name.push(".report.txt");
    grades.with_file_name(name)
}

fn cmd_report(
    grades: &Path,
    assignment_path: &Path,
    out_dir: &Path,
    summarize: bool,
    provider: &ProviderArgs,
) -> Result<(), CliError> {
    let assignment = io::parse_assignment(assignment_path)?;
    let outcome = read_grade_records(grades)?;
    for (line, detail) in &outcome.malformed {
        eprintln!(
            "warning: {}: malformed record at line {line}: {detail}",
            grades.display()
        );
    }
    if outcome.records.is_empty() {
        eprintln!("warning: no grade records in {}", grades.display());
    }
    let unknown: Vec<&str> = outcome
        .records
        .iter()
        .filter(|r| assignment.question(&r.question_id).is_none())
        .map(|r| r.question_id.as_str())
        .collect();
    if !unknown.is_empty() {
        eprintln!(
            "warning: {} records reference questions not in the assignment",
            unknown.len()
        );
    }

    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::data(format!("{}: {e}", out_dir.display())))?;

    let client = if summarize {
        Some(build_client(provider)?)
    } else {
        None
    };

    // One feedback document per student.
    let mut students: Vec<&str> = outcome
        .records
        .iter()
        .map(|r| r.student_id.as_str())
        .collect();
    students.sort_unstable();
    students.dedup();
    let mut written = Vec::new();
    for student in students {
        let records: Vec<autograde::model::GradeRecord> = outcome
            .records
            .iter()
            .filter(|r| r.student_id == student)
            .cloned()
            .collect();
        let doc = render_student_feedback(&records, &assignment);
        let path = out_dir.join(format!("{student}.feedback.txt"));
        std::fs::write(&path, doc)
            .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        written.push(path);
    }

    let (summary, warnings) =
        build_performance_summary(&outcome.records, &assignment, client.as_ref(), summarize);
    for warning in &warnings {
        eprintln!("warning: {warning}");
    }
    let summary_path = out_dir.join(format!("{}.summary.txt", assignment.id));
    std::fs::write(&summary_path, render_performance_summary(&summary))
        .map_err(|e| CliError::data(format!("{}: {e}", summary_path.display())))?;
    written.push(summary_path);

    for path in &written {
        println!("{}", path.display());
    }
    Ok(())
}

fn cmd_compare(human: &Path, aag: &Path, histograms: Option<&Path>) -> Result<(), CliError> {
    let human_outcome = read_grade_records(human)?;
    let aag_outcome = read_grade_records(aag)?;
    for (source, outcome) in [(human, &human_outcome), (aag, &aag_outcome)] {
        for (line, detail) in &outcome.malformed {
            eprintln!(
                "warning: {}: malformed record at line {line}: {detail}",
                source.display()
            );
        }
    }

    let report = compare_graders(&human_outcome.records, &aag_outcome.records)?;
    print!("{}", render_agreement(&report));
    if let Some(path) = histograms {
        std::fs::write(path, agreement_histogram_tsv(&report))
            .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        println!("histograms: {}", path.display());
    }
    Ok(())
}

fn cmd_survey(survey_file: &Path, alpha: f64, tsv: Option<&Path>) -> Result<(), CliError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CliError::usage(format!(
            "--alpha must lie strictly between 0 and 1, got {alpha}"
        )));
    }
    let responses = io::parse_survey(survey_file)?;
    let config = HypothesisConfig {
        alpha,
        ..HypothesisConfig::default()
    };
    let analysis = analyze_survey(&responses, &config)?;
    print!("{}", render_survey_tables(&analysis));
    if let Some(path) = tsv {
        std::fs::write(path, survey_tsv(&analysis))
            .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        println!("tsv: {}", path.display());
    }
    Ok(())
}
