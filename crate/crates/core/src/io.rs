//! On-disk artifacts: assignment definitions, submission sets, append-safe
//! grade-record logs, and survey CSVs.
//!
//! Assignments, submissions, and grade records are JSON (one object per
//! line for grade records, so a crashed run leaves a readable prefix).
//! Surveys are comma-delimited text with the header
//! `student_id,q1,...,q9,q10,score`. All files are UTF-8; unknown JSON
//! fields are ignored for forward compatibility. See docs/FORMATS.md for the
//! full schemas.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    validate_marking_scheme, Criterion, GradeRecord, GraderChoice, MarkingScheme, Question,
    Submission, SurveyResponse, LIKERT_ITEMS,
};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: syntax error: {detail}")]
    Syntax { path: PathBuf, detail: String },
    #[error("{path}: {detail}")]
    Semantic { path: PathBuf, detail: String },
    #[error("{path}: scheme for question `{question_id}` is invalid: {reasons}")]
    InvalidScheme {
        path: PathBuf,
        question_id: String,
        reasons: String,
    },
    #[error("invalid grade record: {0}")]
    InvalidRecord(#[from] crate::model::ModelError),
}

impl IoError {
    fn file(path: &Path, source: std::io::Error) -> Self {
        IoError::File {
            path: path.to_path_buf(),
            source,
        }
    }

    fn syntax(path: &Path, detail: impl Into<String>) -> Self {
        IoError::Syntax {
            path: path.to_path_buf(),
            detail: detail.into(),
        }
    }

    fn semantic(path: &Path, detail: impl Into<String>) -> Self {
        IoError::Semantic {
            path: path.to_path_buf(),
            detail: detail.into(),
        }
    }
}

/// Filesystem inputs/outputs for a pipeline run.
#[derive(Debug, Clone, Default)]
pub struct CorpusPaths {
    pub assignment_file: Option<PathBuf>,
    pub submissions_file: Option<PathBuf>,
    pub grades_out: Option<PathBuf>,
    pub human_grades_file: Option<PathBuf>,
    pub survey_file: Option<PathBuf>,
}

impl CorpusPaths {
    /// Grading runs need the assignment, the submissions, and somewhere to
    /// write records.
    pub fn require_grading(&self) -> Result<(&Path, &Path, &Path), String> {
        match (
            &self.assignment_file,
            &self.submissions_file,
            &self.grades_out,
        ) {
            (Some(a), Some(s), Some(g)) => Ok((a, s, g)),
            (None, _, _) => Err("assignment file is required".into()),
            (_, None, _) => Err("submissions file is required".into()),
            (_, _, None) => Err("grades output path is required".into()),
        }
    }
}

/// A parsed assignment: ordered questions plus whatever schemes and
/// reference solutions the file supplied.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub id: String,
    pub course: String,
    pub questions: Vec<Question>,
    pub schemes: BTreeMap<String, MarkingScheme>,
    pub reference_solutions: BTreeMap<String, String>,
}

impl Assignment {
    pub fn question(&self, id: &str) -> Option<&Question> {
        self.questions.iter().find(|q| q.id == id)
    }

    pub fn scheme(&self, question_id: &str) -> Option<&MarkingScheme> {
        self.schemes.get(question_id)
    }

    /// Questions whose scheme slot is empty and therefore need the
    /// refinement pass before grading.
    pub fn needs_refinement(&self) -> Vec<&str> {
        self.questions
            .iter()
            .filter(|q| !self.schemes.contains_key(&q.id))
            .map(|q| q.id.as_str())
            .collect()
    }
}

// ---------------------------------------------------------------------------
// file-schema structs (what serde sees)
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct AssignmentFile {
    id: String,
    #[serde(default)]
    course: String,
    questions: Vec<QuestionEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct QuestionEntry {
    id: String,
    #[serde(default)]
    background: String,
    text: String,
    #[serde(default)]
    depends_on: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scheme: Option<SchemeEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reference_solution: Option<String>,
}

/// Scheme as stored inside an assignment file: the owning question is
/// implied by nesting.
#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct SchemeEntry {
    pub(crate) criteria: Vec<Criterion>,
    #[serde(default)]
    pub(crate) refined: bool,
}

impl SchemeEntry {
    pub(crate) fn into_scheme(self, question_id: &str) -> MarkingScheme {
        MarkingScheme {
            question_id: question_id.to_string(),
            criteria: self.criteria,
            refined: self.refined,
        }
    }
}

// ---------------------------------------------------------------------------
// assignments
// ---------------------------------------------------------------------------

pub fn parse_assignment(path: &Path) -> Result<Assignment, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::file(path, e))?;
    parse_assignment_str(&text, path)
}

fn parse_assignment_str(text: &str, path: &Path) -> Result<Assignment, IoError> {
    let file: AssignmentFile =
        serde_json::from_str(text).map_err(|e| IoError::syntax(path, e.to_string()))?;
    if file.id.is_empty() {
        return Err(IoError::semantic(path, "assignment id must be nonempty"));
    }
    if file.questions.is_empty() {
        return Err(IoError::semantic(path, "assignment defines no questions"));
    }

    let mut questions = Vec::with_capacity(file.questions.len());
    let mut schemes = BTreeMap::new();
    let mut reference_solutions = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for entry in file.questions {
        let question = Question {
            id: entry.id,
            background: entry.background,
            text: entry.text,
            depends_on: entry.depends_on,
            scale_max: crate::model::SCALE_MAX,
        };
        question
            .validate()
            .map_err(|e| IoError::semantic(path, e.to_string()))?;
        if !seen.insert(question.id.clone()) {
            return Err(IoError::semantic(
                path,
                format!("duplicate question id `{}`", question.id),
            ));
        }
        for dep in &question.depends_on {
            if !seen.contains(dep) {
                return Err(IoError::semantic(
                    path,
                    format!(
                        "question `{}` depends on `{dep}`, which is not defined earlier",
                        question.id
                    ),
                ));
            }
        }
        if let Some(scheme_entry) = entry.scheme {
            let scheme = scheme_entry.into_scheme(&question.id);
            let report = validate_marking_scheme(&scheme, &question);
            if !report.pass {
                return Err(IoError::InvalidScheme {
                    path: path.to_path_buf(),
                    question_id: question.id.clone(),
                    reasons: report.reasons.join("; "),
                });
            }
            schemes.insert(question.id.clone(), scheme);
        }
        if let Some(reference) = entry.reference_solution {
            reference_solutions.insert(question.id.clone(), reference);
        }
        questions.push(question);
    }

    Ok(Assignment {
        id: file.id,
        course: file.course,
        questions,
        schemes,
        reference_solutions,
    })
}

pub fn write_assignment(assignment: &Assignment, path: &Path) -> Result<(), IoError> {
    let file = AssignmentFile {
        id: assignment.id.clone(),
        course: assignment.course.clone(),
        questions: assignment
            .questions
            .iter()
            .map(|q| QuestionEntry {
                id: q.id.clone(),
                background: q.background.clone(),
                text: q.text.clone(),
                depends_on: q.depends_on.clone(),
                scheme: assignment.schemes.get(&q.id).map(|s| SchemeEntry {
                    criteria: s.criteria.clone(),
                    refined: s.refined,
                }),
                reference_solution: assignment.reference_solutions.get(&q.id).cloned(),
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&file).expect("assignment serializes");
    std::fs::write(path, json + "\n").map_err(|e| IoError::file(path, e))
}

// ---------------------------------------------------------------------------
// submissions
// ---------------------------------------------------------------------------

pub fn parse_submissions(path: &Path, assignment: &Assignment) -> Result<Vec<Submission>, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::file(path, e))?;
    let submissions: Vec<Submission> =
        serde_json::from_str(&text).map_err(|e| IoError::syntax(path, e.to_string()))?;

    let mut seen = BTreeSet::new();
    for submission in &submissions {
        if submission.student_id.is_empty() {
            return Err(IoError::semantic(path, "submission with empty student_id"));
        }
        if !seen.insert(submission.student_id.clone()) {
            return Err(IoError::semantic(
                path,
                format!("duplicate student_id `{}`", submission.student_id),
            ));
        }
        for question_id in submission.answers.keys() {
            if assignment.question(question_id).is_none() {
                return Err(IoError::semantic(
                    path,
                    format!(
                        "student `{}` answers unknown question `{question_id}`",
                        submission.student_id
                    ),
                ));
            }
        }
    }
    Ok(submissions)
}

pub fn write_submissions(submissions: &[Submission], path: &Path) -> Result<(), IoError> {
    let json = serde_json::to_string_pretty(submissions).expect("submissions serialize");
    std::fs::write(path, json + "\n").map_err(|e| IoError::file(path, e))
}

// ---------------------------------------------------------------------------
// grade records (JSON lines, append-safe)
// ---------------------------------------------------------------------------

/// Read outcome: well-formed records plus (line number, error) for every
/// malformed line encountered.
#[derive(Debug, Default)]
pub struct GradeReadOutcome {
    pub records: Vec<GradeRecord>,
    pub malformed: Vec<(usize, String)>,
}

pub fn read_grade_records(path: &Path) -> Result<GradeReadOutcome, IoError> {
    let file = File::open(path).map_err(|e| IoError::file(path, e))?;
    let reader = BufReader::new(file);
    let mut outcome = GradeReadOutcome::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| IoError::file(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<GradeRecord>(&line) {
            Ok(record) => outcome.records.push(record),
            Err(e) => outcome.malformed.push((idx + 1, e.to_string())),
        }
    }
    Ok(outcome)
}

pub fn write_grade_records(records: &[GradeRecord], path: &Path) -> Result<(), IoError> {
    let mut log = GradeLog::create(path)?;
    for record in records {
        log.append(record)?;
    }
    Ok(())
}

/// Single-writer append log for grade records. Each record is flushed as
/// one line, so an interrupted run leaves a parseable prefix.
pub struct GradeLog {
    file: File,
    path: PathBuf,
}

impl GradeLog {
    pub fn create(path: &Path) -> Result<Self, IoError> {
        let file = File::create(path).map_err(|e| IoError::file(path, e))?;
        Ok(Self {
            file,
            path: path.to_path_buf(),
        })
    }

    pub fn open_append(path: &Path) -> Result<Self, IoError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| IoError::file(path, e))?;
        Ok(Self {
            file,
            path: path.to_path_buf(),
        })
    }

    pub fn append(&mut self, record: &GradeRecord) -> Result<(), IoError> {
        record.validate()?;
        let line = serde_json::to_string(record).expect("record serializes");
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.write_all(b"\n"))
            .and_then(|_| self.file.flush())
            .map_err(|e| IoError::file(&self.path, e))
    }
}

/// Canonical form for determinism comparisons: timestamps zeroed, records
/// sorted by (student, question), one JSON object per line. Two runs over
/// the same corpus and config must produce byte-identical dumps.
pub fn canonical_grade_dump(records: &[GradeRecord]) -> String {
    let mut canon: Vec<GradeRecord> = records
        .iter()
        .map(|r| GradeRecord {
            timestamp: 0,
            ..r.clone()
        })
        .collect();
    canon.sort_by(|a, b| (&a.student_id, &a.question_id).cmp(&(&b.student_id, &b.question_id)));
    let mut out = String::new();
    for record in &canon {
        out.push_str(&serde_json::to_string(record).expect("record serializes"));
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// survey CSV
// ---------------------------------------------------------------------------

const SURVEY_HEADER: [&str; 12] = [
    "student_id",
    "q1",
    "q2",
    "q3",
    "q4",
    "q5",
    "q6",
    "q7",
    "q8",
    "q9",
    "q10",
    "score",
];

pub fn parse_survey(path: &Path) -> Result<Vec<SurveyResponse>, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::file(path, e))?;
    parse_survey_str(&text, path)
}

fn parse_survey_str(text: &str, path: &Path) -> Result<Vec<SurveyResponse>, IoError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| IoError::syntax(path, "empty file; expected a header row"))?;
    let header_fields: Vec<String> = header
        .split(',')
        .map(|f| f.trim().to_ascii_lowercase())
        .collect();
    if header_fields != SURVEY_HEADER {
        return Err(IoError::syntax(
            path,
            format!("unexpected header; expected `{}`", SURVEY_HEADER.join(",")),
        ));
    }

    let mut responses = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, line) in lines {
        let row = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != SURVEY_HEADER.len() {
            return Err(IoError::syntax(
                path,
                format!(
                    "row {row}: expected {} fields, got {}",
                    SURVEY_HEADER.len(),
                    fields.len()
                ),
            ));
        }
        let student_id = fields[0].to_string();
        if student_id.is_empty() {
            return Err(IoError::semantic(
                path,
                format!("row {row}: empty student_id"),
            ));
        }
        if !seen.insert(student_id.clone()) {
            return Err(IoError::semantic(
                path,
                format!("row {row}: duplicate student_id `{student_id}`"),
            ));
        }

        let mut likert = [None; LIKERT_ITEMS];
        for (i, slot) in likert.iter_mut().enumerate() {
            let cell = fields[i + 1];
            if cell.is_empty() {
                continue;
            }
            let value: u8 = cell.parse().map_err(|_| {
                IoError::syntax(
                    path,
                    format!("row {row}: q{} is not an integer: `{cell}`", i + 1),
                )
            })?;
            if !(1..=5).contains(&value) {
                return Err(IoError::semantic(
                    path,
                    format!("row {row}: q{} value {value} outside 1..=5", i + 1),
                ));
            }
            *slot = Some(value);
        }

        let q10_cell = fields[10];
        let q10_choice = if q10_cell.is_empty() {
            None
        } else {
            match q10_cell.to_ascii_uppercase().as_str() {
                "TA" => Some(GraderChoice::Ta),
                "AAG" => Some(GraderChoice::Aag),
                other => {
                    return Err(IoError::semantic(
                        path,
                        format!("row {row}: q10 must be TA, AAG, or blank; got `{other}`"),
                    ))
                }
            }
        };

        let score_cell = fields[11];
        let assignment_score: f64 = score_cell.parse().map_err(|_| {
            IoError::syntax(
                path,
                format!("row {row}: score is not a number: `{score_cell}`"),
            )
        })?;
        if !assignment_score.is_finite() {
            return Err(IoError::semantic(
                path,
                format!("row {row}: score must be finite"),
            ));
        }

        responses.push(SurveyResponse {
            student_id,
            likert,
            q10_choice,
            assignment_score,
        });
    }
    Ok(responses)
}
