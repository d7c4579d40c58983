//! Domain types shared across the pipeline, plus pure validation and
//! cohort-splitting logic.
//!
//! Everything here is an immutable value object after construction; all
//! operations are pure functions.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Marks available on every question. The grading scale is 1..=10 in the
/// prompt, but parsers accept 0 to tolerate a grader awarding zero to an
/// empty answer.
pub const SCALE_MAX: u8 = 10;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("question `{0}`: {1}")]
    InvalidQuestion(String, String),
    #[error("grade record for ({student}, {question}): {reason}")]
    InvalidRecord {
        student: String,
        question: String,
        reason: String,
    },
    #[error("student `{0}` has a non-finite assignment score")]
    NonFiniteScore(String),
}

/// One assignment question. `depends_on` lists earlier questions whose
/// Q&A must be replayed as context when this one is graded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    #[serde(default)]
    pub background: String,
    pub text: String,
    #[serde(default)]
    pub depends_on: Vec<String>,
    #[serde(default = "default_scale_max")]
    pub scale_max: u8,
}

fn default_scale_max() -> u8 {
    SCALE_MAX
}

impl Question {
    /// Checks the question's own invariants. Referential checks against the
    /// rest of the assignment (ids defined earlier, no dangling references)
    /// live in the assignment parser, which sees the whole list.
    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |msg: String| Err(ModelError::InvalidQuestion(self.id.clone(), msg));
        if self.id.is_empty() {
            return Err(ModelError::InvalidQuestion(
                "<unnamed>".into(),
                "question id must be nonempty".into(),
            ));
        }
        if self.scale_max != SCALE_MAX {
            return fail(format!(
                "scale_max must be {SCALE_MAX}, got {}",
                self.scale_max
            ));
        }
        if self.depends_on.iter().any(|d| d == &self.id) {
            return fail("depends_on must not reference the question itself".into());
        }
        let mut seen = BTreeSet::new();
        for dep in &self.depends_on {
            if !seen.insert(dep) {
                return fail(format!("duplicate dependency `{dep}`"));
            }
        }
        Ok(())
    }
}

/// One way of earning marks under a criterion. Alternatives within a
/// criterion are mutually exclusive; the criterion's worth is the maximum
/// over its alternatives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkAlternative {
    pub marks: u8,
    pub condition: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Criterion {
    #[serde(default)]
    pub description: String,
    pub alternatives: Vec<MarkAlternative>,
}

impl Criterion {
    /// Maximum marks achievable under this criterion.
    pub fn max_marks(&self) -> u32 {
        self.alternatives
            .iter()
            .map(|a| u32::from(a.marks))
            .max()
            .unwrap_or(0)
    }
}

/// The marking scheme for one question. `refined` is true once the scheme
/// has been produced or edited by the refinement pass.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkingScheme {
    pub question_id: String,
    pub criteria: Vec<Criterion>,
    #[serde(default)]
    pub refined: bool,
}

impl MarkingScheme {
    /// Maximum achievable total: sum over criteria of max(alternative marks).
    pub fn max_total(&self) -> u32 {
        self.criteria.iter().map(Criterion::max_marks).sum()
    }
}

/// Result of checking a scheme against its question.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemeReport {
    pub pass: bool,
    pub max_total: u32,
    pub reasons: Vec<String>,
}

/// Validates a marking scheme against its question: criteria must be
/// well-formed and the maxima must sum to the question's scale.
///
/// The caller guarantees `scheme.question_id == question.id`; a mismatch is
/// reported as a failure reason rather than a panic.
pub fn validate_marking_scheme(scheme: &MarkingScheme, question: &Question) -> SchemeReport {
    let mut reasons = Vec::new();
    if scheme.question_id != question.id {
        reasons.push(format!(
            "scheme is for question `{}`, not `{}`",
            scheme.question_id, question.id
        ));
    }
    if scheme.criteria.is_empty() {
        reasons.push("no criteria".into());
    }
    for (i, criterion) in scheme.criteria.iter().enumerate() {
        if criterion.alternatives.is_empty() {
            reasons.push(format!("criterion {} has no alternatives", i + 1));
        }
        for alt in &criterion.alternatives {
            if alt.marks > question.scale_max {
                reasons.push(format!(
                    "criterion {} awards {} marks, above the {}-mark scale",
                    i + 1,
                    alt.marks,
                    question.scale_max
                ));
            }
        }
    }
    let max_total = scheme.max_total();
    if reasons.is_empty() && max_total != u32::from(question.scale_max) {
        reasons.push(format!(
            "criterion maxima sum to {max_total}, expected {}",
            question.scale_max
        ));
    }
    SchemeReport {
        pass: reasons.is_empty(),
        max_total,
        reasons,
    }
}

/// One student's submission: answers keyed by question id. An unanswered
/// question maps to the empty string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Submission {
    pub student_id: String,
    #[serde(default)]
    pub answers: BTreeMap<String, String>,
}

impl Submission {
    pub fn answer(&self, question_id: &str) -> &str {
        self.answers
            .get(question_id)
            .map(String::as_str)
            .unwrap_or("")
    }
}

/// Structured feedback attached to a scored answer.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feedback {
    pub errors_identified: Vec<String>,
    pub explanation: String,
    pub suggestions: Vec<String>,
}

impl Feedback {
    /// True when every section is empty. A record must never carry a
    /// contentless feedback block; the grader either says what was wrong or
    /// states explicitly that nothing was.
    pub fn is_empty(&self) -> bool {
        self.errors_identified.is_empty()
            && self.explanation.trim().is_empty()
            && self.suggestions.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grader {
    /// Automated assignment grader (an LLM behind a prompt).
    Aag,
    Human,
}

/// Outcome of one grading attempt. A pair the grader could not produce a
/// parseable evaluation for is recorded as `Skipped`, never as an invented
/// score.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Scored { score: u8, feedback: Feedback },
    Skipped { reason: String },
}

/// Per (student, question) grading result, from either grader kind.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradeRecord {
    pub student_id: String,
    pub question_id: String,
    pub outcome: Outcome,
    pub grader: Grader,
    /// Empty for human graders.
    #[serde(default)]
    pub model_id: String,
    /// Content hash of the exact prompt sent; empty for human graders.
    #[serde(default)]
    pub prompt_fingerprint: String,
    /// Unix epoch seconds. Excluded from determinism comparisons.
    #[serde(default)]
    pub timestamp: u64,
}

impl GradeRecord {
    pub fn score(&self) -> Option<u8> {
        match &self.outcome {
            Outcome::Scored { score, .. } => Some(*score),
            Outcome::Skipped { .. } => None,
        }
    }

    pub fn is_skipped(&self) -> bool {
        matches!(self.outcome, Outcome::Skipped { .. })
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |reason: String| {
            Err(ModelError::InvalidRecord {
                student: self.student_id.clone(),
                question: self.question_id.clone(),
                reason,
            })
        };
        if self.student_id.is_empty() || self.question_id.is_empty() {
            return fail("student_id and question_id must be nonempty".into());
        }
        if let Outcome::Scored { score, feedback } = &self.outcome {
            if *score > SCALE_MAX {
                return fail(format!("score {score} outside 0..={SCALE_MAX}"));
            }
            if self.grader == Grader::Aag && feedback.is_empty() {
                return fail("scored AAG record carries empty feedback".into());
            }
        }
        if self.grader == Grader::Aag
            && (self.model_id.is_empty() || self.prompt_fingerprint.is_empty())
        {
            return fail("AAG record must carry model_id and prompt_fingerprint".into());
        }
        Ok(())
    }
}

/// Student's choice on the grading-preference item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraderChoice {
    Ta,
    Aag,
}

/// Number of Likert items (Q1..Q9) on the survey.
pub const LIKERT_ITEMS: usize = 9;

/// One survey response. Likert cells may be missing; per-item sample sizes
/// therefore differ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyResponse {
    pub student_id: String,
    /// Q1..Q9, each in 1..=5 when present.
    pub likert: [Option<u8>; LIKERT_ITEMS],
    pub q10_choice: Option<GraderChoice>,
    /// Assignment total used for the weak/strong split.
    pub assignment_score: f64,
}

/// Significance level and null-hypothesis reference points for the survey
/// analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HypothesisConfig {
    pub alpha: f64,
    /// Reference median for the signed-rank test (neutral Likert midpoint).
    pub mu0: f64,
    /// Reference proportion for the binomial test.
    pub p0: f64,
}

impl Default for HypothesisConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            mu0: 3.0,
            p0: 0.5,
        }
    }
}

/// Which group a student tied with the median boundary falls into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundaryRule {
    /// Scores equal to the median go to the weak group. Reproduces unequal
    /// group sizes when scores tie at the boundary.
    #[default]
    WeakIfEqual,
    StrongIfEqual,
}

/// Partition of survey respondents into bottom/top performers.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSplit {
    pub weak: BTreeSet<String>,
    pub strong: BTreeSet<String>,
    /// The median assignment score used as the boundary.
    pub boundary: f64,
    /// True when every score was identical, forcing a degenerate split.
    pub degenerate: bool,
}

/// Splits respondents into weak (bottom 50%) and strong (top 50%) groups by
/// assignment score. Default rule sends boundary ties to the weak group.
pub fn assign_performance_groups(responses: &[SurveyResponse]) -> Result<GroupSplit, ModelError> {
    assign_performance_groups_with(responses, BoundaryRule::WeakIfEqual)
}

pub fn assign_performance_groups_with(
    responses: &[SurveyResponse],
    rule: BoundaryRule,
) -> Result<GroupSplit, ModelError> {
    if responses.is_empty() {
        return Err(ModelError::EmptyInput("no survey responses to split"));
    }
    if let Some(bad) = responses.iter().find(|r| !r.assignment_score.is_finite()) {
        return Err(ModelError::NonFiniteScore(bad.student_id.clone()));
    }
    let mut scores: Vec<f64> = responses.iter().map(|r| r.assignment_score).collect();
    scores.sort_by(|a, b| a.partial_cmp(b).expect("finite scores compare"));
    let boundary = median_sorted(&scores);

    let mut weak = BTreeSet::new();
    let mut strong = BTreeSet::new();
    for response in responses {
        let goes_weak = match rule {
            BoundaryRule::WeakIfEqual => response.assignment_score <= boundary,
            BoundaryRule::StrongIfEqual => response.assignment_score < boundary,
        };
        if goes_weak {
            weak.insert(response.student_id.clone());
        } else {
            strong.insert(response.student_id.clone());
        }
    }
    let degenerate = weak.is_empty() || strong.is_empty();
    Ok(GroupSplit {
        weak,
        strong,
        boundary,
        degenerate,
    })
}

/// Median of a sorted slice: central value, or the mean of the two central
/// values for an even count.
pub(crate) fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    debug_assert!(n > 0);
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn question(id: &str) -> Question {
        Question {
            id: id.into(),
            background: String::new(),
            text: format!("question {id}"),
            depends_on: vec![],
            scale_max: SCALE_MAX,
        }
    }

    fn criterion(marks: &[u8]) -> Criterion {
        Criterion {
            description: String::new(),
            alternatives: marks
                .iter()
                .map(|&m| MarkAlternative {
                    marks: m,
                    condition: format!("condition worth {m}"),
                })
                .collect(),
        }
    }

    fn scheme(question_id: &str, criterion_maxima: &[&[u8]]) -> MarkingScheme {
        MarkingScheme {
            question_id: question_id.into(),
            criteria: criterion_maxima
                .iter()
                .map(|alts| criterion(alts))
                .collect(),
            refined: false,
        }
    }

    #[test]
    fn sampling_rubric_shape_validates() {
        // Criterion maxima 3,1,2,1,2,1 with one two-alternative criterion.
        let s = scheme("q1", &[&[3, 2], &[1], &[2], &[1], &[2], &[1]]);
        let report = validate_marking_scheme(&s, &question("q1"));
        assert!(report.pass, "reasons: {:?}", report.reasons);
        assert_eq!(report.max_total, 10);
    }

    #[test]
    fn empty_criteria_fails_with_reason() {
        let s = scheme("q1", &[]);
        let report = validate_marking_scheme(&s, &question("q1"));
        assert!(!report.pass);
        assert_eq!(report.max_total, 0);
        assert!(report.reasons.iter().any(|r| r.contains("no criteria")));
    }

    #[test]
    fn sum_mismatch_fails() {
        let s = scheme("q1", &[&[3], &[3], &[3]]);
        let report = validate_marking_scheme(&s, &question("q1"));
        assert!(!report.pass);
        assert_eq!(report.max_total, 9);
        assert!(report.reasons.iter().any(|r| r.contains("sum to 9")));
    }

    #[test]
    fn overscale_marks_reported() {
        let s = scheme("q1", &[&[11]]);
        let report = validate_marking_scheme(&s, &question("q1"));
        assert!(!report.pass);
        assert!(report
            .reasons
            .iter()
            .any(|r| r.contains("above the 10-mark scale")));
    }

    #[test]
    fn scheme_question_mismatch_reported() {
        let s = scheme("q2", &[&[10]]);
        let report = validate_marking_scheme(&s, &question("q1"));
        assert!(!report.pass);
    }

    #[test]
    fn question_rejects_self_dependency_and_duplicates() {
        let mut q = question("a");
        q.depends_on = vec!["a".into()];
        assert!(q.validate().is_err());
        q.depends_on = vec!["b".into(), "b".into()];
        assert!(q.validate().is_err());
        q.depends_on = vec!["b".into(), "c".into()];
        assert!(q.validate().is_ok());
    }

    fn response(id: &str, score: f64) -> SurveyResponse {
        SurveyResponse {
            student_id: id.into(),
            likert: [None; LIKERT_ITEMS],
            q10_choice: None,
            assignment_score: score,
        }
    }

    #[test]
    fn split_unambiguous() {
        let rs: Vec<_> = [10.0, 20.0, 30.0, 40.0]
            .iter()
            .enumerate()
            .map(|(i, &s)| response(&format!("s{i}"), s))
            .collect();
        let split = assign_performance_groups(&rs).unwrap();
        assert_eq!(split.weak.len(), 2);
        assert_eq!(split.strong.len(), 2);
        assert!(split.weak.contains("s0") && split.weak.contains("s1"));
        assert!(!split.degenerate);
        assert_eq!(split.boundary, 25.0);
    }

    #[test]
    fn split_with_boundary_ties_is_unequal() {
        // 54 scores of 60, 50 of 80: median 60, ties go weak -> 54/50.
        let mut rs = Vec::new();
        for i in 0..54 {
            rs.push(response(&format!("w{i}"), 60.0));
        }
        for i in 0..50 {
            rs.push(response(&format!("t{i}"), 80.0));
        }
        let split = assign_performance_groups(&rs).unwrap();
        assert_eq!(split.weak.len(), 54);
        assert_eq!(split.strong.len(), 50);
    }

    #[test]
    fn split_all_equal_is_degenerate() {
        let rs: Vec<_> = (0..5).map(|i| response(&format!("s{i}"), 7.0)).collect();
        let split = assign_performance_groups(&rs).unwrap();
        assert_eq!(split.weak.len(), 5);
        assert!(split.strong.is_empty());
        assert!(split.degenerate);
    }

    #[test]
    fn split_empty_is_error() {
        assert!(assign_performance_groups(&[]).is_err());
    }

    #[test]
    fn split_rejects_non_finite_scores() {
        let rs = vec![response("s0", 1.0), response("s1", f64::NAN)];
        assert_eq!(
            assign_performance_groups(&rs).unwrap_err(),
            ModelError::NonFiniteScore("s1".into())
        );
    }

    #[test]
    fn split_partition_and_ordering_hold() {
        // Deterministic pseudo-random scores; postconditions must hold for all.
        let mut state: u64 = 0x9e3779b97f4a7c15;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        for n in 1..60usize {
            let rs: Vec<_> = (0..n)
                .map(|i| response(&format!("s{i}"), (next() % 100) as f64))
                .collect();
            let split = assign_performance_groups(&rs).unwrap();
            assert_eq!(split.weak.len() + split.strong.len(), n);
            let score_of = |id: &String| {
                rs.iter()
                    .find(|r| &r.student_id == id)
                    .unwrap()
                    .assignment_score
            };
            let weak_max = split.weak.iter().map(score_of).fold(f64::MIN, f64::max);
            let strong_min = split.strong.iter().map(score_of).fold(f64::MAX, f64::min);
            if !split.weak.is_empty() && !split.strong.is_empty() {
                assert!(weak_max <= strong_min, "n={n}: {weak_max} > {strong_min}");
            }
        }
    }

    #[test]
    fn grade_record_invariants() {
        let rec = GradeRecord {
            student_id: "s1".into(),
            question_id: "q1".into(),
            outcome: Outcome::Scored {
                score: 7,
                feedback: Feedback {
                    errors_identified: vec!["missed the edge case".into()],
                    explanation: "the argument skips the boundary".into(),
                    suggestions: vec!["treat the boundary explicitly".into()],
                },
            },
            grader: Grader::Aag,
            model_id: "mock".into(),
            prompt_fingerprint: "abc".into(),
            timestamp: 0,
        };
        assert!(rec.validate().is_ok());

        let mut bad = rec.clone();
        bad.prompt_fingerprint.clear();
        assert!(bad.validate().is_err());

        let mut out_of_range = rec.clone();
        out_of_range.outcome = Outcome::Scored {
            score: 11,
            feedback: Feedback::default(),
        };
        assert!(out_of_range.validate().is_err());

        let human = GradeRecord {
            grader: Grader::Human,
            model_id: String::new(),
            prompt_fingerprint: String::new(),
            outcome: Outcome::Scored {
                score: 9,
                feedback: Feedback::default(),
            },
            ..rec
        };
        assert!(human.validate().is_ok());
    }
}
