//! Deterministic construction of the three prompt kinds: marking-scheme
//! refinement, submission evaluation, and common-issue summarization.
//!
//! Wording lives in versioned template files under `templates/` (compiled in
//! with `include_str!`) and is pinned by golden-file tests: identical inputs
//! must produce byte-identical messages and therefore identical
//! fingerprints across releases.

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{Feedback, MarkingScheme, Question};

const EVAL_SYSTEM: &str = include_str!("../templates/eval_system.txt");
const EVAL_USER: &str = include_str!("../templates/eval_user.txt");
const REFINE_SYSTEM: &str = include_str!("../templates/refine_system.txt");
const REFINE_USER: &str = include_str!("../templates/refine_user.txt");
const SUMMARY_SYSTEM: &str = include_str!("../templates/summary_system.txt");
const SUMMARY_USER: &str = include_str!("../templates/summary_user.txt");

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("evaluation prompt needs a nonempty question/answer chain")]
    EmptyChain,
    #[error("scheme is for question `{scheme}` but the chain ends at `{last}`")]
    SchemeMismatch { scheme: String, last: String },
    #[error("issue summary needs at least one feedback item")]
    EmptyCorpus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PromptKind {
    Refine,
    Evaluate,
    Summarize,
}

/// An ordered message list plus the content hash of the exact transcript.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptBundle {
    pub kind: PromptKind,
    pub messages: Vec<Message>,
    /// Lowercase hex SHA-256 over `role 0x1f content 0x1e` per message.
    pub fingerprint: String,
}

impl PromptBundle {
    fn new(kind: PromptKind, messages: Vec<Message>) -> Self {
        let fingerprint = fingerprint_messages(&messages);
        Self {
            kind,
            messages,
            fingerprint,
        }
    }

    /// Full transcript text, for --dry-run printing and tests.
    pub fn transcript(&self) -> String {
        let mut out = String::new();
        for m in &self.messages {
            out.push_str(&format!("[{}]\n{}\n", m.role.as_str(), m.content));
        }
        out
    }

    /// A copy with one extra user message appended (the re-ask path after a
    /// malformed reply). The fingerprint is recomputed, so the record of a
    /// re-asked pair carries the hash of the prompt actually sent.
    pub fn with_appended_user(&self, content: &str) -> Self {
        let mut messages = self.messages.clone();
        messages.push(Message {
            role: Role::User,
            content: content.to_string(),
        });
        Self::new(self.kind, messages)
    }
}

fn fingerprint_messages(messages: &[Message]) -> String {
    let mut hasher = Sha256::new();
    for m in messages {
        hasher.update(m.role.as_str().as_bytes());
        hasher.update([0x1f]);
        hasher.update(m.content.as_bytes());
        hasher.update([0x1e]);
    }
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

/// Fills `{name}` placeholders. Only `[a-z_]+` between braces is treated as
/// a placeholder; anything else (JSON braces in the templates) passes
/// through. Substituted values are inserted literally, never re-scanned.
fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let bytes = template.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            if let Some(end) = template[i + 1..].find(['}', '{', '\n']) {
                let end = i + 1 + end;
                if bytes[end] == b'}' {
                    let name = &template[i + 1..end];
                    if !name.is_empty() && name.bytes().all(|b| b.is_ascii_lowercase() || b == b'_')
                    {
                        let value = vars
                            .iter()
                            .find(|(k, _)| *k == name)
                            .unwrap_or_else(|| panic!("template placeholder `{name}` unbound"));
                        out.push_str(value.1);
                        i = end + 1;
                        continue;
                    }
                }
            }
        }
        let ch = template[i..].chars().next().unwrap();
        out.push(ch);
        i += ch.len_utf8();
    }
    out
}

/// Human-readable scheme rendering used inside evaluation prompts.
fn render_scheme(scheme: &MarkingScheme) -> String {
    let mut out = String::new();
    for criterion in &scheme.criteria {
        let alts = criterion
            .alternatives
            .iter()
            .map(|a| {
                let unit = if a.marks == 1 { "mark" } else { "marks" };
                format!("award {} {unit} if {}", a.marks, a.condition)
            })
            .collect::<Vec<_>>()
            .join("; or ");
        if criterion.description.is_empty() {
            out.push_str(&format!("- {alts}\n"));
        } else {
            out.push_str(&format!("- {}: {alts}\n", criterion.description));
        }
    }
    out
}

/// The scheme as the JSON object the refinement reply must produce.
fn scheme_json(scheme: &MarkingScheme) -> String {
    #[derive(Serialize)]
    struct SchemeBody<'a> {
        criteria: &'a [crate::model::Criterion],
    }
    serde_json::to_string_pretty(&SchemeBody {
        criteria: &scheme.criteria,
    })
    .expect("scheme serializes")
}

/// Builds the submission-evaluation prompt: course context, background,
/// the whole question/answer chain in order, the scheme for the final
/// question, the reference solution when available, and the focus, scale,
/// and output-format instructions.
///
/// The chain must be ordered so every question's dependencies precede it;
/// the scheme must belong to the chain's final question.
pub fn build_evaluation_prompt(
    course: &str,
    background: &str,
    qa_chain: &[(&Question, &str)],
    scheme: &MarkingScheme,
    reference_solution: Option<&str>,
) -> Result<PromptBundle, PromptError> {
    let Some((last_question, _)) = qa_chain.last() else {
        return Err(PromptError::EmptyChain);
    };
    if scheme.question_id != last_question.id {
        return Err(PromptError::SchemeMismatch {
            scheme: scheme.question_id.clone(),
            last: last_question.id.clone(),
        });
    }

    let mut chain_text = String::new();
    for (question, answer) in qa_chain {
        chain_text.push_str(&format!(
            "Question {}: {}\nStudent answer: {}\n\n",
            question.id, question.text, answer
        ));
    }

    let reference_block = match reference_solution {
        Some(text) => format!("Reference solution:\n{text}\n\n"),
        None => String::new(),
    };

    let system = render(EVAL_SYSTEM, &[("course", course)]);
    let user = render(
        EVAL_USER,
        &[
            ("background", background),
            ("qa_chain", &chain_text),
            ("scheme", render_scheme(scheme).trim_end()),
            ("reference_block", &reference_block),
            ("focus_id", &last_question.id),
        ],
    );

    Ok(PromptBundle::new(
        PromptKind::Evaluate,
        vec![
            Message {
                role: Role::System,
                content: system,
            },
            Message {
                role: Role::User,
                content: user,
            },
        ],
    ))
}

/// Builds the scheme generation/refinement prompt. With a draft the model
/// is asked to refine it (the draft is embedded verbatim in its JSON form);
/// without one it is asked to write a scheme from scratch.
pub fn build_refinement_prompt(
    question: &Question,
    draft_scheme: Option<&MarkingScheme>,
    reference_solution: Option<&str>,
) -> PromptBundle {
    let task_line = match draft_scheme {
        Some(_) => "Refine the draft marking scheme below so it grades the question consistently.",
        None => "Write a marking scheme for the question below.",
    };
    let draft_block = match draft_scheme {
        Some(scheme) => format!(
            "Draft scheme to refine (keep its intent, tighten its wording and marks):\n{}\n\n",
            scheme_json(scheme)
        ),
        None => String::new(),
    };
    let reference_block = match reference_solution {
        Some(text) => format!("Reference solution:\n{text}\n\n"),
        None => String::new(),
    };
    let scale = question.scale_max.to_string();

    let user = render(
        REFINE_USER,
        &[
            ("task_line", task_line),
            ("background", &question.background),
            ("question_text", &question.text),
            ("draft_block", &draft_block),
            ("reference_block", &reference_block),
            ("scale_max", &scale),
        ],
    );

    PromptBundle::new(
        PromptKind::Refine,
        vec![
            Message {
                role: Role::System,
                content: REFINE_SYSTEM.to_string(),
            },
            Message {
                role: Role::User,
                content: user,
            },
        ],
    )
}

/// Character budget for issue-summary prompts. Items beyond the total cap
/// are dropped newest-last (oldest retained), and each item is truncated to
/// the per-item cap.
#[derive(Debug, Clone, Copy)]
pub struct SummaryBudget {
    pub per_item_chars: usize,
    pub total_chars: usize,
}

impl Default for SummaryBudget {
    fn default() -> Self {
        Self {
            per_item_chars: 400,
            total_chars: 24_000,
        }
    }
}

fn truncate_chars(text: &str, max: usize) -> String {
    match text.char_indices().nth(max) {
        Some((idx, _)) => format!("{}...", &text[..idx]),
        None => text.to_string(),
    }
}

/// Builds the common-issue summarization prompt over the feedback produced
/// for one question.
pub fn build_issue_summary_prompt(
    question: &Question,
    feedback_corpus: &[Feedback],
) -> Result<PromptBundle, PromptError> {
    build_issue_summary_prompt_with(question, feedback_corpus, SummaryBudget::default())
}

pub fn build_issue_summary_prompt_with(
    question: &Question,
    feedback_corpus: &[Feedback],
    budget: SummaryBudget,
) -> Result<PromptBundle, PromptError> {
    if feedback_corpus.is_empty() {
        return Err(PromptError::EmptyCorpus);
    }

    let mut items = String::new();
    let mut used = 0;
    for (i, feedback) in feedback_corpus.iter().enumerate() {
        let mut line = format!("note {}: ", i + 1);
        if !feedback.errors_identified.is_empty() {
            line.push_str(&format!(
                "errors: {}. ",
                feedback.errors_identified.join("; ")
            ));
        }
        if !feedback.explanation.trim().is_empty() {
            line.push_str(&format!("why: {}. ", feedback.explanation.trim()));
        }
        if !feedback.suggestions.is_empty() {
            line.push_str(&format!("improve: {}.", feedback.suggestions.join("; ")));
        }
        let line = truncate_chars(line.trim_end(), budget.per_item_chars);
        if used + line.chars().count() > budget.total_chars {
            items.push_str(&format!(
                "(+{} more notes omitted for length)\n",
                feedback_corpus.len() - i
            ));
            break;
        }
        used += line.chars().count();
        items.push_str(&line);
        items.push('\n');
    }

    let count = feedback_corpus.len().to_string();
    let user = render(
        SUMMARY_USER,
        &[
            ("count", &count),
            ("question_id", &question.id),
            ("question_text", &question.text),
            ("items", items.trim_end()),
        ],
    );

    Ok(PromptBundle::new(
        PromptKind::Summarize,
        vec![
            Message {
                role: Role::System,
                content: SUMMARY_SYSTEM.to_string(),
            },
            Message {
                role: Role::User,
                content: user,
            },
        ],
    ))
}
