//! Human-vs-automated grading agreement: per-question correlation, score
//! histograms, and a discrepancy list for qualitative review.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::model::{GradeRecord, SCALE_MAX};

use super::{pearson_r, StatError, StatTestResult};

/// Aligned (human, automated) score pairs for one question, joined on
/// student id. Records without a score (skipped pairs) are excluded before
/// the join; keys present on only one side are reported, not dropped
/// silently.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedScores {
    pub question_id: String,
    /// (student_id, human score, automated score), sorted by student.
    pub pairs: Vec<(String, u8, u8)>,
    pub unmatched_human: Vec<String>,
    pub unmatched_aag: Vec<String>,
}

impl PairedScores {
    fn join(question_id: &str, human: &BTreeMap<String, u8>, aag: &BTreeMap<String, u8>) -> Self {
        let mut pairs = Vec::new();
        let mut unmatched_human = Vec::new();
        let mut unmatched_aag = Vec::new();
        for (student, &h) in human {
            match aag.get(student) {
                Some(&a) => pairs.push((student.clone(), h, a)),
                None => unmatched_human.push(student.clone()),
            }
        }
        for student in aag.keys() {
            if !human.contains_key(student) {
                unmatched_aag.push(student.clone());
            }
        }
        Self {
            question_id: question_id.to_string(),
            pairs,
            unmatched_human,
            unmatched_aag,
        }
    }

    pub fn human(&self) -> Vec<f64> {
        self.pairs.iter().map(|(_, h, _)| f64::from(*h)).collect()
    }

    pub fn aag(&self) -> Vec<f64> {
        self.pairs.iter().map(|(_, _, a)| f64::from(*a)).collect()
    }

    /// Pearson correlation between the two aligned score lists.
    pub fn pearson(&self) -> Result<StatTestResult, StatError> {
        pearson_r(&self.human(), &self.aag())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Discrepancy {
    pub student_id: String,
    pub human: u8,
    pub aag: u8,
    /// aag - human.
    pub delta: i16,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuestionAgreement {
    pub question_id: String,
    pub n: usize,
    /// None when either side is constant (correlation undefined).
    pub pearson: Option<f64>,
    pub pearson_note: Option<String>,
    pub human_hist: [u64; (SCALE_MAX as usize) + 1],
    pub aag_hist: [u64; (SCALE_MAX as usize) + 1],
    pub exact_agreement: usize,
    /// Pairs with |delta| >= 2.
    pub large_discrepancies: usize,
    /// Sorted by |delta| descending, then student id.
    pub discrepancies: Vec<Discrepancy>,
    pub unmatched_human: Vec<String>,
    pub unmatched_aag: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementReport {
    pub questions: Vec<QuestionAgreement>,
}

/// Scored records only, keyed question -> student -> score.
fn scores_by_question(records: &[GradeRecord]) -> BTreeMap<String, BTreeMap<String, u8>> {
    let mut map: BTreeMap<String, BTreeMap<String, u8>> = BTreeMap::new();
    for r in records {
        if let Some(score) = r.score() {
            map.entry(r.question_id.clone())
                .or_default()
                .insert(r.student_id.clone(), score);
        }
    }
    map
}

/// Joins two grade sets on (student, question) and reports per-question
/// agreement. Errors only when the sets share no keys at all.
pub fn compare_graders(
    human: &[GradeRecord],
    aag: &[GradeRecord],
) -> Result<AgreementReport, StatError> {
    let human_scores = scores_by_question(human);
    let aag_scores = scores_by_question(aag);

    let mut question_ids: Vec<&String> = human_scores.keys().chain(aag_scores.keys()).collect();
    question_ids.sort();
    question_ids.dedup();

    let empty = BTreeMap::new();
    let mut questions = Vec::new();
    for qid in question_ids {
        let joined = PairedScores::join(
            qid,
            human_scores.get(qid).unwrap_or(&empty),
            aag_scores.get(qid).unwrap_or(&empty),
        );
        if joined.pairs.is_empty() {
            continue;
        }
        questions.push(question_agreement(joined));
    }

    if questions.is_empty() {
        return Err(StatError::NoOverlap);
    }
    Ok(AgreementReport { questions })
}

fn question_agreement(joined: PairedScores) -> QuestionAgreement {
    let mut human_hist = [0u64; (SCALE_MAX as usize) + 1];
    let mut aag_hist = [0u64; (SCALE_MAX as usize) + 1];
    let mut exact_agreement = 0;
    let mut discrepancies = Vec::new();
    for (student, h, a) in &joined.pairs {
        human_hist[*h as usize] += 1;
        aag_hist[*a as usize] += 1;
        let delta = i16::from(*a) - i16::from(*h);
        if delta == 0 {
            exact_agreement += 1;
        } else {
            discrepancies.push(Discrepancy {
                student_id: student.clone(),
                human: *h,
                aag: *a,
                delta,
            });
        }
    }
    discrepancies.sort_by(|a, b| {
        b.delta
            .abs()
            .cmp(&a.delta.abs())
            .then_with(|| a.student_id.cmp(&b.student_id))
    });
    let large_discrepancies = discrepancies.iter().filter(|d| d.delta.abs() >= 2).count();

    let (pearson, pearson_note) = match joined.pearson() {
        Ok(r) => (Some(r.statistic), None),
        Err(e) => (None, Some(e.to_string())),
    };

    QuestionAgreement {
        question_id: joined.question_id,
        n: joined.pairs.len(),
        pearson,
        pearson_note,
        human_hist,
        aag_hist,
        exact_agreement,
        large_discrepancies,
        discrepancies,
        unmatched_human: joined.unmatched_human,
        unmatched_aag: joined.unmatched_aag,
    }
}

/// Human-readable agreement report.
pub fn render_agreement(report: &AgreementReport) -> String {
    let mut out = String::from("Grader agreement report\n");
    for q in &report.questions {
        out.push_str(&format!(
            "\nQuestion {} ({} joined pairs)\n",
            q.question_id, q.n
        ));
        match q.pearson {
            Some(r) => out.push_str(&format!("  pearson r: {r:.4}\n")),
            None => out.push_str(&format!(
                "  pearson r: undefined ({})\n",
                q.pearson_note.as_deref().unwrap_or("n/a")
            )),
        }
        out.push_str(&format!(
            "  exact agreement: {} / {}   |delta| >= 2: {}\n",
            q.exact_agreement, q.n, q.large_discrepancies
        ));
        out.push_str("  score      ");
        for s in 0..=SCALE_MAX {
            out.push_str(&format!("{s:>5}"));
        }
        out.push_str("\n  human      ");
        for c in q.human_hist {
            out.push_str(&format!("{c:>5}"));
        }
        out.push_str("\n  automated  ");
        for c in q.aag_hist {
            out.push_str(&format!("{c:>5}"));
        }
        out.push('\n');
        if !q.discrepancies.is_empty() {
            out.push_str("  largest discrepancies (automated - human):\n");
            for d in q.discrepancies.iter().take(10) {
                out.push_str(&format!(
                    "    {:<12} human {:>2}  automated {:>2}  delta {:+}\n",
                    d.student_id, d.human, d.aag, d.delta
                ));
            }
        }
        if !q.unmatched_human.is_empty() || !q.unmatched_aag.is_empty() {
            out.push_str(&format!(
                "  unmatched keys: {} human-only, {} automated-only\n",
                q.unmatched_human.len(),
                q.unmatched_aag.len()
            ));
        }
    }
    out
}

/// Plot-ready columns: question, score, human count, automated count.
pub fn agreement_histogram_tsv(report: &AgreementReport) -> String {
    let mut out = String::from("question\tscore\thuman\taag\n");
    for q in &report.questions {
        for s in 0..=(SCALE_MAX as usize) {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                q.question_id, s, q.human_hist[s], q.aag_hist[s]
            ));
        }
    }
    out
}
