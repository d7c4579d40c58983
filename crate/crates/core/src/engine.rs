//! Orchestration: refine marking schemes, grade submissions against the
//! assignment, parse model replies into validated records, and run whole
//! corpora with bounded parallelism and crash-safe resume.

use std::collections::HashSet;
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Mutex};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use thiserror::Error;

use crate::io::{Assignment, GradeLog, IoError};
use crate::llm::{LlmClient, LlmError};
use crate::model::{
    validate_marking_scheme, Feedback, GradeRecord, Grader, MarkingScheme, Outcome, Question,
    Submission,
};
use crate::prompt::{build_evaluation_prompt, build_refinement_prompt, PromptBundle, PromptError};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(
        "could not generate a valid scheme for question `{question_id}` after {attempts} attempts"
    )]
    SchemeGenerationFailed { question_id: String, attempts: u32 },
    #[error("questions without marking schemes (refine first or pass a refine flag): {0}")]
    MissingSchemes(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

/// Knobs for a grading run.
#[derive(Debug, Clone)]
pub struct GradingRunConfig {
    /// Generate schemes for questions that lack one before grading.
    pub refine_schemes: bool,
    /// How many times to re-ask after a malformed evaluation reply.
    pub max_parse_retries: u32,
    /// Skip (student, question) pairs already present in the output file.
    pub resume: bool,
}

impl Default for GradingRunConfig {
    fn default() -> Self {
        Self {
            refine_schemes: false,
            max_parse_retries: 2,
            resume: false,
        }
    }
}

// ---------------------------------------------------------------------------
// evaluation-reply parsing
// ---------------------------------------------------------------------------

#[derive(Debug, Error, PartialEq)]
pub enum EvalParseError {
    #[error("no parseable score line")]
    NoScore,
    #[error("score {0} outside 0..=10")]
    ScoreOutOfRange(i64),
    #[error("none of the feedback sections (ERRORS/WHY/IMPROVE) are present")]
    NoSections,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedEvaluation {
    pub score: u8,
    pub feedback: Feedback,
    pub warnings: Vec<String>,
}

/// Extracts the first `SCORE: k/10` line (case and internal spacing are
/// tolerated) and the three headed sections. Bullet markers and numbering
/// are stripped from list sections; a literal "none" item is dropped.
pub fn parse_llm_evaluation(reply: &str) -> Result<ParsedEvaluation, EvalParseError> {
    let mut score: Option<u8> = None;
    for line in reply.lines() {
        match parse_score_line(line) {
            Some(Ok(k)) => {
                score = Some(k);
                break;
            }
            Some(Err(out_of_range)) => return Err(EvalParseError::ScoreOutOfRange(out_of_range)),
            None => {}
        }
    }
    let score = score.ok_or(EvalParseError::NoScore)?;

    #[derive(Clone, Copy, PartialEq)]
    enum Section {
        Errors,
        Why,
        Improve,
    }
    let mut current: Option<Section> = None;
    let mut errors_lines: Vec<String> = Vec::new();
    let mut why_lines: Vec<String> = Vec::new();
    let mut improve_lines: Vec<String> = Vec::new();
    let mut seen = [false; 3];

    for line in reply.lines() {
        let stripped = strip_markup(line);
        let upper = stripped.to_ascii_uppercase();
        let header = [
            ("ERRORS", Section::Errors),
            ("WHY", Section::Why),
            ("IMPROVE", Section::Improve),
        ]
        .iter()
        .find_map(|(name, section)| {
            let rest = upper.strip_prefix(name)?;
            let rest = rest.trim_start();
            rest.starts_with(':').then_some((*section, rest))
        });
        if let Some((section, _)) = header {
            current = Some(section);
            seen[section as usize] = true;
            // Anything after the colon on the header line is body text.
            if let Some(idx) = stripped.find(':') {
                let tail = stripped[idx + 1..].trim();
                if !tail.is_empty() {
                    push_body(
                        section,
                        tail,
                        &mut errors_lines,
                        &mut why_lines,
                        &mut improve_lines,
                    );
                }
            }
            continue;
        }
        if parse_score_line(line).is_some() {
            current = None;
            continue;
        }
        if let Some(section) = current {
            let body = stripped.trim();
            if !body.is_empty() {
                push_body(
                    section,
                    body,
                    &mut errors_lines,
                    &mut why_lines,
                    &mut improve_lines,
                );
            }
        }
    }

    fn push_body(
        section: Section,
        text: &str,
        errors: &mut Vec<String>,
        why: &mut Vec<String>,
        improve: &mut Vec<String>,
    ) {
        match section {
            Section::Errors => errors.push(text.to_string()),
            Section::Why => why.push(text.to_string()),
            Section::Improve => improve.push(text.to_string()),
        }
    }

    if !seen.iter().any(|s| *s) {
        return Err(EvalParseError::NoSections);
    }

    let mut warnings = Vec::new();
    if seen[Section::Why as usize] && !seen[Section::Improve as usize] {
        warnings.push("reply has WHY but no IMPROVE section; suggestions left empty".into());
    }

    let feedback = Feedback {
        errors_identified: list_items(&errors_lines),
        explanation: why_lines.join("\n").trim().to_string(),
        suggestions: list_items(&improve_lines),
    };
    if feedback.is_empty() {
        // Headers present but nothing said: treat as contentless.
        return Err(EvalParseError::NoSections);
    }

    Ok(ParsedEvaluation {
        score,
        feedback,
        warnings,
    })
}

/// Some(Ok(k)) for a valid score line, Some(Err(raw)) for an out-of-range
/// one, None when the line is not a score line at all.
fn parse_score_line(line: &str) -> Option<Result<u8, i64>> {
    let stripped = strip_markup(line);
    let upper = stripped.to_ascii_uppercase();
    let rest = upper.strip_prefix("SCORE")?;
    let rest = rest.trim_start();
    let rest = rest.strip_prefix(':')?;
    let rest = rest.trim_start();

    let negative = rest.starts_with('-');
    let digits: String = rest
        .trim_start_matches('-')
        .chars()
        .take_while(|c| c.is_ascii_digit())
        .collect();
    if digits.is_empty() {
        return None;
    }
    let mut value: i64 = digits.parse().ok()?;
    if negative {
        value = -value;
    }
    if (0..=10).contains(&value) {
        Some(Ok(value as u8))
    } else {
        Some(Err(value))
    }
}

fn strip_markup(line: &str) -> &str {
    line.trim()
        .trim_start_matches(['#', '*', '>', ' '])
        .trim_end_matches('*')
        .trim()
}

/// Strips bullet markers / numbering and drops empty or "none" items.
fn list_items(lines: &[String]) -> Vec<String> {
    lines
        .iter()
        .map(|l| {
            let item = l.trim_start_matches(['-', '*', '•', ' ']).trim();
            let item = match item.split_once(['.', ')']) {
                Some((prefix, rest))
                    if !prefix.is_empty()
                        && prefix.chars().all(|c| c.is_ascii_digit())
                        && (rest.is_empty() || rest.starts_with(char::is_whitespace)) =>
                {
                    rest.trim()
                }
                _ => item,
            };
            item.to_string()
        })
        .filter(|item| {
            !item.is_empty() && !matches!(item.to_ascii_lowercase().as_str(), "none" | "n/a")
        })
        .collect()
}

// ---------------------------------------------------------------------------
// scheme refinement
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct RefineOutcome {
    pub scheme: MarkingScheme,
    /// True when the model never produced a valid scheme and the draft was
    /// returned unchanged.
    pub fell_back: bool,
    pub warnings: Vec<String>,
}

/// Asks the model to generate (no draft) or refine (draft present) the
/// scheme for one question, re-asking on malformed replies. After
/// `max_parse_retries` re-asks the draft is returned unchanged with a
/// warning; with no draft to fall back on this is an error.
pub fn refine_scheme(
    question: &Question,
    draft: Option<&MarkingScheme>,
    client: &LlmClient,
    max_parse_retries: u32,
) -> Result<RefineOutcome, EngineError> {
    let reference = None; // callers with a reference solution use refine_scheme_with
    refine_scheme_with(question, draft, reference, client, max_parse_retries)
}

pub fn refine_scheme_with(
    question: &Question,
    draft: Option<&MarkingScheme>,
    reference_solution: Option<&str>,
    client: &LlmClient,
    max_parse_retries: u32,
) -> Result<RefineOutcome, EngineError> {
    let base = build_refinement_prompt(question, draft, reference_solution);
    let mut warnings = Vec::new();
    let attempts = max_parse_retries + 1;
    for attempt in 0..attempts {
        let prompt = if attempt == 0 {
            base.clone()
        } else {
            base.with_appended_user(&format!(
                "Reminder (attempt {}): your previous reply was not a valid scheme. \
                 Reply with only the JSON object, criteria maxima summing to exactly {}.",
                attempt + 1,
                question.scale_max
            ))
        };
        let exchange = match client.chat_complete(&prompt) {
            Ok(exchange) => exchange,
            Err(e) if e.is_auth() => return Err(e.into()),
            Err(e) => {
                warnings.push(format!("transport failure while refining: {e}"));
                break;
            }
        };
        if let Some(mut scheme) = parse_scheme_reply(&exchange.response, &question.id) {
            scheme.refined = true;
            let report = validate_marking_scheme(&scheme, question);
            if report.pass {
                return Ok(RefineOutcome {
                    scheme,
                    fell_back: false,
                    warnings,
                });
            }
            warnings.push(format!(
                "attempt {}: scheme rejected ({})",
                attempt + 1,
                report.reasons.join("; ")
            ));
        } else {
            warnings.push(format!(
                "attempt {}: reply had no parseable scheme",
                attempt + 1
            ));
        }
    }

    match draft {
        Some(draft) => {
            warnings.push(format!(
                "keeping the draft scheme for `{}` unchanged",
                question.id
            ));
            Ok(RefineOutcome {
                scheme: draft.clone(),
                fell_back: true,
                warnings,
            })
        }
        None => Err(EngineError::SchemeGenerationFailed {
            question_id: question.id.clone(),
            attempts,
        }),
    }
}

/// Pulls the first parseable `{"criteria": [...]}` object out of a reply,
/// tolerating code fences and surrounding prose.
fn parse_scheme_reply(reply: &str, question_id: &str) -> Option<MarkingScheme> {
    let text = reply.trim();
    for (start, _) in text.char_indices().filter(|(_, c)| *c == '{') {
        let mut stream = serde_json::Deserializer::from_str(&text[start..])
            .into_iter::<crate::io::SchemeEntry>();
        if let Some(Ok(entry)) = stream.next() {
            return Some(entry.into_scheme(question_id));
        }
    }
    None
}

/// Refines every question of the assignment: generate mode where the scheme
/// is absent, refine mode where a draft exists. Returns the updated
/// assignment and accumulated warnings.
pub fn refine_assignment(
    assignment: &Assignment,
    client: &LlmClient,
    max_parse_retries: u32,
) -> Result<(Assignment, Vec<String>), EngineError> {
    let mut updated = assignment.clone();
    let mut warnings = Vec::new();
    for question in &assignment.questions {
        let outcome = refine_scheme_with(
            question,
            assignment.scheme(&question.id),
            assignment
                .reference_solutions
                .get(&question.id)
                .map(String::as_str),
            client,
            max_parse_retries,
        )?;
        warnings.extend(outcome.warnings);
        updated.schemes.insert(question.id.clone(), outcome.scheme);
    }
    Ok((updated, warnings))
}

// ---------------------------------------------------------------------------
// grading
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct PairFailure {
    pub student_id: String,
    pub question_id: String,
    pub error: String,
}

#[derive(Debug, Default)]
pub struct SubmissionOutcome {
    pub records: Vec<GradeRecord>,
    /// Transport-level failures: no record written, so a resumed run
    /// retries them.
    pub failures: Vec<PairFailure>,
}

fn now_epoch_secs() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Distinct nonempty backgrounds along the chain, in order.
fn chain_background(chain: &[(&Question, &str)]) -> String {
    let mut seen = Vec::new();
    for (question, _) in chain {
        let bg = question.background.trim();
        if !bg.is_empty() && !seen.contains(&bg) {
            seen.push(bg);
        }
    }
    seen.join("\n\n")
}

/// Grades one submission: one record per question, in assignment order.
/// The evaluation prompt for each question replays its `depends_on`
/// predecessors (question and the student's answer) before the question
/// itself. Malformed replies are re-asked with a format reminder up to
/// `max_parse_retries`; a still-unparseable pair yields a skipped record.
/// Non-auth transport failures are contained per question.
pub fn grade_submission(
    submission: &Submission,
    assignment: &Assignment,
    client: &LlmClient,
    run_config: &GradingRunConfig,
) -> Result<SubmissionOutcome, EngineError> {
    grade_submission_inner(
        submission,
        assignment,
        client,
        run_config,
        &HashSet::new(),
        None,
    )
}

fn grade_submission_inner(
    submission: &Submission,
    assignment: &Assignment,
    client: &LlmClient,
    run_config: &GradingRunConfig,
    already_done: &HashSet<(String, String)>,
    abort: Option<&AtomicBool>,
) -> Result<SubmissionOutcome, EngineError> {
    let mut outcome = SubmissionOutcome::default();
    for question in &assignment.questions {
        if let Some(flag) = abort {
            if flag.load(Ordering::SeqCst) {
                return Ok(outcome);
            }
        }
        let key = (submission.student_id.clone(), question.id.clone());
        if already_done.contains(&key) {
            continue;
        }
        let Some(scheme) = assignment.scheme(&question.id) else {
            outcome.failures.push(PairFailure {
                student_id: submission.student_id.clone(),
                question_id: question.id.clone(),
                error: "no marking scheme".into(),
            });
            continue;
        };

        let mut chain: Vec<(&Question, &str)> = Vec::with_capacity(question.depends_on.len() + 1);
        for dep in &question.depends_on {
            let dep_question = assignment
                .question(dep)
                .expect("dependencies validated at parse time");
            chain.push((dep_question, submission.answer(dep)));
        }
        chain.push((question, submission.answer(&question.id)));

        let base_prompt = build_evaluation_prompt(
            &assignment.course,
            &chain_background(&chain),
            &chain,
            scheme,
            assignment
                .reference_solutions
                .get(&question.id)
                .map(String::as_str),
        )?;

        match grade_pair(&base_prompt, client, run_config.max_parse_retries) {
            Ok((outcome_kind, fingerprint)) => {
                outcome.records.push(GradeRecord {
                    student_id: submission.student_id.clone(),
                    question_id: question.id.clone(),
                    outcome: outcome_kind,
                    grader: Grader::Aag,
                    model_id: client.config().model_id.clone(),
                    prompt_fingerprint: fingerprint,
                    timestamp: now_epoch_secs(),
                });
            }
            Err(e) if e.is_auth() => return Err(e.into()),
            Err(e) => {
                outcome.failures.push(PairFailure {
                    student_id: submission.student_id.clone(),
                    question_id: question.id.clone(),
                    error: e.to_string(),
                });
            }
        }
    }
    Ok(outcome)
}

/// One (student, question) pair: send, parse, re-ask on malformed output,
/// and after the re-ask budget produce a skipped outcome instead of a
/// fabricated score. Returns the outcome and the fingerprint of the prompt
/// that actually produced it.
fn grade_pair(
    base_prompt: &PromptBundle,
    client: &LlmClient,
    max_parse_retries: u32,
) -> Result<(Outcome, String), LlmError> {
    let mut last_parse_error = None;
    let attempts = max_parse_retries + 1;
    let mut fingerprint = base_prompt.fingerprint.clone();
    for attempt in 0..attempts {
        let prompt = if attempt == 0 {
            base_prompt.clone()
        } else {
            base_prompt.with_appended_user(&format!(
                "Reminder (attempt {}): reply in exactly the required format:\n\
                 SCORE: <k>/10\nERRORS:\n- ...\nWHY:\n...\nIMPROVE:\n- ...",
                attempt + 1
            ))
        };
        fingerprint = prompt.fingerprint.clone();
        let exchange = client.chat_complete(&prompt)?;
        match parse_llm_evaluation(&exchange.response) {
            Ok(parsed) => {
                return Ok((
                    Outcome::Scored {
                        score: parsed.score,
                        feedback: parsed.feedback,
                    },
                    fingerprint,
                ));
            }
            Err(e) => last_parse_error = Some(e),
        }
    }
    let reason = format!(
        "unparseable after {attempts} attempts: {}",
        last_parse_error.expect("at least one attempt ran")
    );
    Ok((Outcome::Skipped { reason }, fingerprint))
}

/// Summary of a corpus run.
#[derive(Debug)]
pub struct RunReport {
    pub total_pairs: usize,
    pub already_present: usize,
    pub graded: usize,
    pub skipped: usize,
    pub failed: usize,
    pub failures: Vec<PairFailure>,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub elapsed: Duration,
    pub warnings: Vec<String>,
}

impl RunReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str("Grading run report\n");
        out.push_str(&format!("  pairs total:      {}\n", self.total_pairs));
        out.push_str(&format!("  already present:  {}\n", self.already_present));
        out.push_str(&format!("  graded:           {}\n", self.graded));
        out.push_str(&format!("  skipped:          {}\n", self.skipped));
        out.push_str(&format!("  failed:           {}\n", self.failed));
        out.push_str(&format!(
            "  tokens:           {} prompt, {} completion\n",
            self.prompt_tokens, self.completion_tokens
        ));
        out.push_str(&format!(
            "  elapsed:          {:.2}s\n",
            self.elapsed.as_secs_f64()
        ));
        for warning in &self.warnings {
            out.push_str(&format!("  warning: {warning}\n"));
        }
        for failure in &self.failures {
            out.push_str(&format!(
                "  failed pair: ({}, {}): {}\n",
                failure.student_id, failure.question_id, failure.error
            ));
        }
        out
    }
}

/// Grades every (student, question) pair of the corpus, appending records
/// to `out_path` as they are produced. Submissions are distributed across
/// workers (the client's gate still bounds in-flight requests); within a
/// submission, questions run sequentially so chains see their context.
/// With `resume`, pairs already recorded in the output file are not
/// re-attempted. Fatal errors are an unwritable output and authentication
/// failure; everything else is contained and counted.
pub fn grade_corpus(
    submissions: &[Submission],
    assignment: &Assignment,
    client: &LlmClient,
    run_config: &GradingRunConfig,
    out_path: &Path,
) -> Result<RunReport, EngineError> {
    let started = Instant::now();
    let mut warnings = Vec::new();

    let prepared;
    let assignment = if assignment.needs_refinement().is_empty() {
        assignment
    } else if run_config.refine_schemes {
        let (updated, refine_warnings) =
            refine_assignment_missing_only(assignment, client, run_config.max_parse_retries)?;
        warnings.extend(refine_warnings);
        prepared = updated;
        &prepared
    } else {
        return Err(EngineError::MissingSchemes(
            assignment.needs_refinement().join(", "),
        ));
    };

    let mut already_done: HashSet<(String, String)> = HashSet::new();
    let mut already_present = 0;
    let log = if run_config.resume && out_path.exists() {
        let existing = crate::io::read_grade_records(out_path)?;
        for (line, detail) in &existing.malformed {
            warnings.push(format!("resume: malformed record at line {line}: {detail}"));
        }
        already_present = existing.records.len();
        for record in existing.records {
            already_done.insert((record.student_id, record.question_id));
        }
        GradeLog::open_append(out_path)?
    } else {
        GradeLog::create(out_path)?
    };

    let usage_before = client.usage();
    let total_pairs = submissions.len() * assignment.questions.len();

    let (sender, receiver) = mpsc::channel::<GradeRecord>();
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let failures: Mutex<Vec<PairFailure>> = Mutex::new(Vec::new());
    let auth_error: Mutex<Option<EngineError>> = Mutex::new(None);
    let write_error: Mutex<Option<IoError>> = Mutex::new(None);

    let workers = client
        .config()
        .max_concurrency
        .min(submissions.len())
        .max(1);

    let (graded, skipped) = std::thread::scope(|scope| {
        let writer = {
            let abort = &abort;
            let write_error = &write_error;
            let mut log = log;
            scope.spawn(move || {
                let mut graded = 0usize;
                let mut skipped = 0usize;
                for record in receiver {
                    if record.is_skipped() {
                        skipped += 1;
                    } else {
                        graded += 1;
                    }
                    if let Err(e) = log.append(&record) {
                        *write_error.lock().unwrap() = Some(e);
                        abort.store(true, Ordering::SeqCst);
                        break;
                    }
                }
                (graded, skipped)
            })
        };

        for _ in 0..workers {
            let sender = sender.clone();
            let next = &next;
            let abort = &abort;
            let failures = &failures;
            let auth_error = &auth_error;
            let already_done = &already_done;
            scope.spawn(move || loop {
                if abort.load(Ordering::SeqCst) {
                    break;
                }
                let index = next.fetch_add(1, Ordering::SeqCst);
                let Some(submission) = submissions.get(index) else {
                    break;
                };
                match grade_submission_inner(
                    submission,
                    assignment,
                    client,
                    run_config,
                    already_done,
                    Some(abort),
                ) {
                    Ok(outcome) => {
                        failures.lock().unwrap().extend(outcome.failures);
                        for record in outcome.records {
                            if sender.send(record).is_err() {
                                break;
                            }
                        }
                    }
                    Err(e) => {
                        auth_error.lock().unwrap().get_or_insert(e);
                        abort.store(true, Ordering::SeqCst);
                        break;
                    }
                }
            });
        }
        drop(sender);
        writer.join().expect("writer thread")
    });

    if let Some(e) = write_error.into_inner().unwrap() {
        return Err(e.into());
    }
    if let Some(e) = auth_error.into_inner().unwrap() {
        return Err(e);
    }

    let failures = failures.into_inner().unwrap();
    let usage_after = client.usage();
    Ok(RunReport {
        total_pairs,
        already_present,
        graded,
        skipped,
        failed: failures.len(),
        failures,
        prompt_tokens: usage_after.0 - usage_before.0,
        completion_tokens: usage_after.1 - usage_before.1,
        elapsed: started.elapsed(),
        warnings,
    })
}

/// Refines only the questions with no scheme at all (the minimum needed to
/// make grading possible).
fn refine_assignment_missing_only(
    assignment: &Assignment,
    client: &LlmClient,
    max_parse_retries: u32,
) -> Result<(Assignment, Vec<String>), EngineError> {
    let mut updated = assignment.clone();
    let mut warnings = Vec::new();
    let missing: Vec<String> = assignment
        .needs_refinement()
        .iter()
        .map(|s| s.to_string())
        .collect();
    for question_id in missing {
        let question = assignment
            .question(&question_id)
            .expect("id from this assignment");
        let outcome = refine_scheme_with(
            question,
            None,
            assignment
                .reference_solutions
                .get(&question_id)
                .map(String::as_str),
            client,
            max_parse_retries,
        )?;
        warnings.extend(outcome.warnings);
        updated.schemes.insert(question_id, outcome.scheme);
    }
    Ok((updated, warnings))
}
