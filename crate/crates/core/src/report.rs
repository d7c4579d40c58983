//! Human-facing documents: per-student feedback and the teacher performance
//! summary (overview, per-question breakdown, LLM-summarized common
//! issues). Rendering is deterministic and total; golden-file tests pin the
//! layout.

use std::collections::BTreeMap;

use crate::io::Assignment;
use crate::llm::LlmClient;
use crate::model::{GradeRecord, Outcome, SCALE_MAX};
use crate::prompt::build_issue_summary_prompt;

pub const HISTOGRAM_BINS: usize = (SCALE_MAX as usize) + 1;

#[derive(Debug, Clone, PartialEq)]
pub struct QuestionStats {
    pub question_id: String,
    pub graded: usize,
    pub skipped: usize,
    pub mean: Option<f64>,
    pub median: Option<f64>,
    pub std_dev: Option<f64>,
    pub histogram: [u64; HISTOGRAM_BINS],
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceSummary {
    pub assignment_id: String,
    /// Distinct students with at least one record.
    pub submission_count: usize,
    pub per_question: Vec<QuestionStats>,
    /// question id -> ranked issue bullets (empty when summarization was
    /// not requested or failed).
    pub common_issues: BTreeMap<String, Vec<String>>,
}

/// Renders one student's feedback document: per question, the score out of
/// 10, the errors identified, why the answer loses marks, and how to
/// improve, in assignment order. Skipped pairs are marked, never given an
/// invented score.
pub fn render_student_feedback(records: &[GradeRecord], assignment: &Assignment) -> String {
    let student = records
        .first()
        .map(|r| r.student_id.as_str())
        .unwrap_or("(unknown)");
    let mut out = String::new();
    out.push_str(&format!(
        "Feedback for {student} on assignment {}\n",
        assignment.id
    ));
    out.push_str(&"=".repeat(60));
    out.push('\n');
    if records.is_empty() {
        out.push_str("\nNo grading records.\n");
        return out;
    }

    for question in &assignment.questions {
        let Some(record) = records.iter().find(|r| r.question_id == question.id) else {
            continue;
        };
        out.push('\n');
        match &record.outcome {
            Outcome::Scored { score, feedback } => {
                out.push_str(&format!(
                    "Question {}: score {score}/{}\n",
                    question.id, question.scale_max
                ));
                out.push_str("  Errors identified:\n");
                if feedback.errors_identified.is_empty() {
                    out.push_str("    (none)\n");
                } else {
                    for item in &feedback.errors_identified {
                        out.push_str(&format!("    - {item}\n"));
                    }
                }
                if !feedback.explanation.is_empty() {
                    out.push_str("  Why:\n");
                    for line in feedback.explanation.lines() {
                        out.push_str(&format!("    {line}\n"));
                    }
                }
                if !feedback.suggestions.is_empty() {
                    out.push_str("  How to improve:\n");
                    for item in &feedback.suggestions {
                        out.push_str(&format!("    - {item}\n"));
                    }
                }
            }
            Outcome::Skipped { reason } => {
                out.push_str(&format!(
                    "Question {}: not auto-graded ({reason})\n",
                    question.id
                ));
            }
        }
    }
    out
}

fn question_stats(question_id: &str, records: &[&GradeRecord]) -> QuestionStats {
    let mut scores: Vec<f64> = Vec::new();
    let mut histogram = [0u64; HISTOGRAM_BINS];
    let mut skipped = 0usize;
    for record in records {
        match record.score() {
            Some(score) => {
                scores.push(f64::from(score));
                histogram[score as usize] += 1;
            }
            None => skipped += 1,
        }
    }

    let (mean, median, std_dev) = if scores.is_empty() {
        (None, None, None)
    } else {
        let n = scores.len() as f64;
        // Welford's single pass for mean and variance.
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for (i, &score) in scores.iter().enumerate() {
            let delta = score - mean;
            mean += delta / (i as f64 + 1.0);
            m2 += delta * (score - mean);
        }
        let std_dev = (m2 / n).sqrt(); // population form
        let mut sorted = scores.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("scores are finite"));
        let median = crate::model::median_sorted(&sorted);
        (Some(mean), Some(median), Some(std_dev))
    };

    QuestionStats {
        question_id: question_id.to_string(),
        graded: scores.len(),
        skipped,
        mean,
        median,
        std_dev,
        histogram,
    }
}

/// Computes per-question statistics over the records and, when `summarize`
/// is set, asks the model for a ranked common-issue list per question. LLM
/// failures degrade to an empty issue list with a warning; the statistics
/// are always produced.
pub fn build_performance_summary(
    records: &[GradeRecord],
    assignment: &Assignment,
    client: Option<&LlmClient>,
    summarize: bool,
) -> (PerformanceSummary, Vec<String>) {
    let mut warnings = Vec::new();

    let mut students: Vec<&str> = records.iter().map(|r| r.student_id.as_str()).collect();
    students.sort_unstable();
    students.dedup();

    let mut per_question = Vec::new();
    let mut common_issues = BTreeMap::new();
    for question in &assignment.questions {
        let question_records: Vec<&GradeRecord> = records
            .iter()
            .filter(|r| r.question_id == question.id)
            .collect();
        per_question.push(question_stats(&question.id, &question_records));

        if !summarize {
            continue;
        }
        let Some(client) = client else {
            warnings.push("summarization requested but no client supplied".into());
            continue;
        };
        // Stable corpus order keeps the summary prompt deterministic.
        let mut scored: Vec<&GradeRecord> = question_records
            .iter()
            .copied()
            .filter(|r| !r.is_skipped())
            .collect();
        scored.sort_by(|a, b| a.student_id.cmp(&b.student_id));
        let corpus: Vec<crate::model::Feedback> = scored
            .iter()
            .filter_map(|r| match &r.outcome {
                Outcome::Scored { feedback, .. } => Some(feedback.clone()),
                Outcome::Skipped { .. } => None,
            })
            .collect();
        if corpus.is_empty() {
            warnings.push(format!(
                "question `{}`: no feedback to summarize",
                question.id
            ));
            continue;
        }
        match build_issue_summary_prompt(question, &corpus) {
            Ok(prompt) => match client.chat_complete(&prompt) {
                Ok(exchange) => {
                    let issues = parse_issue_bullets(&exchange.response);
                    if issues.is_empty() {
                        warnings.push(format!(
                            "question `{}`: summary reply had no bullets",
                            question.id
                        ));
                    } else {
                        common_issues.insert(question.id.clone(), issues);
                    }
                }
                Err(e) => warnings.push(format!(
                    "question `{}`: summarization failed: {e}",
                    question.id
                )),
            },
            Err(e) => warnings.push(format!("question `{}`: {e}", question.id)),
        }
    }

    (
        PerformanceSummary {
            assignment_id: assignment.id.clone(),
            submission_count: students.len(),
            per_question,
            common_issues,
        },
        warnings,
    )
}

/// Ranked bullets out of a summary reply: numbered or dashed lines, one
/// issue each.
fn parse_issue_bullets(reply: &str) -> Vec<String> {
    reply
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .filter_map(|line| {
            let stripped = line.trim_start_matches(['-', '*', '•']).trim_start();
            let stripped = match stripped.split_once(['.', ')']) {
                Some((prefix, rest))
                    if !prefix.is_empty() && prefix.chars().all(|c| c.is_ascii_digit()) =>
                {
                    rest.trim()
                }
                _ if stripped != line => stripped,
                _ => return None,
            };
            (!stripped.is_empty()).then(|| stripped.to_string())
        })
        .collect()
}

/// Renders the performance summary: section A (assignment overview),
/// section B (per-question breakdown), section C (common issues, only when
/// present).
pub fn render_performance_summary(summary: &PerformanceSummary) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "Performance summary: assignment {}\n\n",
        summary.assignment_id
    ));

    let total_graded: usize = summary.per_question.iter().map(|q| q.graded).sum();
    let total_skipped: usize = summary.per_question.iter().map(|q| q.skipped).sum();
    out.push_str("Section A: overview\n");
    if summary.submission_count == 0 {
        out.push_str("  zero submissions recorded\n");
    } else {
        out.push_str(&format!("  submissions: {}\n", summary.submission_count));
    }
    out.push_str(&format!("  questions: {}\n", summary.per_question.len()));
    out.push_str(&format!(
        "  records: {total_graded} graded, {total_skipped} skipped\n"
    ));
    let overall_mean: Option<f64> = {
        let graded: Vec<(f64, usize)> = summary
            .per_question
            .iter()
            .filter_map(|q| q.mean.map(|m| (m, q.graded)))
            .collect();
        let weight: usize = graded.iter().map(|(_, n)| n).sum();
        (weight > 0).then(|| graded.iter().map(|(m, n)| m * *n as f64).sum::<f64>() / weight as f64)
    };
    if let Some(mean) = overall_mean {
        out.push_str(&format!("  overall mean score: {mean:.2}\n"));
    }

    out.push_str("\nSection B: per-question breakdown\n");
    for stats in &summary.per_question {
        out.push_str(&format!(
            "  Question {}: graded {}, skipped {}\n",
            stats.question_id, stats.graded, stats.skipped
        ));
        if let (Some(mean), Some(median), Some(std_dev)) = (stats.mean, stats.median, stats.std_dev)
        {
            out.push_str(&format!(
                "    mean {mean:.2}  median {median:.1}  std {std_dev:.2}\n"
            ));
            out.push_str("    histogram 0..10:");
            for count in stats.histogram {
                out.push_str(&format!(" {count}"));
            }
            out.push('\n');
        } else {
            out.push_str("    no graded records\n");
        }
    }

    if !summary.common_issues.is_empty() {
        out.push_str("\nSection C: common issues\n");
        for (question_id, issues) in &summary.common_issues {
            out.push_str(&format!("  Question {question_id}:\n"));
            for (rank, issue) in issues.iter().enumerate() {
                out.push_str(&format!("    {}. {issue}\n", rank + 1));
            }
        }
    }
    out
}
