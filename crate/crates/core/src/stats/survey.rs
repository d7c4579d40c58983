//! End-to-end survey analysis: per-item signed-rank tests, the binomial
//! preference test, the weak/strong split, per-item group comparisons, group
//! mean ratings, and response histograms — rendered both as human-readable
//! tables and as a delimited (TSV) table for downstream plotting.

use serde::Serialize;

use crate::model::{
    assign_performance_groups, GraderChoice, GroupSplit, HypothesisConfig, SurveyResponse,
    LIKERT_ITEMS,
};

use super::{
    binomial_test_one_sided, mann_whitney_u, wilcoxon_signed_rank, Alternative, StatError,
    StatTestResult,
};

/// A test that either ran or could not run on the data available.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum TestOutcome {
    Result(StatTestResult),
    InsufficientData(String),
}

impl TestOutcome {
    pub fn result(&self) -> Option<&StatTestResult> {
        match self {
            TestOutcome::Result(r) => Some(r),
            TestOutcome::InsufficientData(_) => None,
        }
    }

    fn from_stat(r: Result<StatTestResult, StatError>) -> Result<Self, StatError> {
        match r {
            Ok(res) => Ok(TestOutcome::Result(res)),
            Err(
                e @ (StatError::AllZeroDifferences
                | StatError::TooFewSamples { .. }
                | StatError::EmptyGroup(_)
                | StatError::ConstantInput(_)),
            ) => Ok(TestOutcome::InsufficientData(e.to_string())),
            Err(e) => Err(e),
        }
    }
}

/// Signed-rank analysis of one Likert item.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ItemAnalysis {
    pub item: String,
    /// Responses present for this item (missing cells excluded).
    pub available_n: usize,
    pub test: TestOutcome,
}

/// Binomial analysis of the grading-preference item.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChoiceAnalysis {
    pub aag_choices: usize,
    pub ta_choices: usize,
    pub available_n: usize,
    pub test: TestOutcome,
}

/// Weak-vs-strong comparison of one item.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupComparison {
    pub item: String,
    pub n_weak: usize,
    pub n_strong: usize,
    pub test: TestOutcome,
}

/// Mean rating of one item within each group (the preference item reports
/// the within-group AAG share).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupMeans {
    pub item: String,
    pub weak_mean: Option<f64>,
    pub strong_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurveyAnalysis {
    pub config: HypothesisConfig,
    pub total_responses: usize,
    /// Q1..Q9 signed-rank tests against mu0.
    pub items: Vec<ItemAnalysis>,
    pub q10: ChoiceAnalysis,
    pub split: GroupSplit,
    /// Q1..Q10 weak-vs-strong rank-sum tests (Q10 encoded 1 = AAG, 0 = TA).
    pub comparisons: Vec<GroupComparison>,
    pub group_means: Vec<GroupMeans>,
    /// Q1..Q9 response counts over the 1..=5 scale, for plotting.
    pub histograms: Vec<[u64; 5]>,
}

fn item_label(index: usize) -> String {
    format!("Q{}", index + 1)
}

/// Runs the full analysis: signed-rank per Likert item, the binomial
/// preference test, the performance split, and per-item group comparisons.
pub fn analyze_survey(
    responses: &[SurveyResponse],
    config: &HypothesisConfig,
) -> Result<SurveyAnalysis, StatError> {
    if responses.is_empty() {
        return Err(StatError::TooFewSamples { need: 1, got: 0 });
    }

    let mut items = Vec::with_capacity(LIKERT_ITEMS);
    let mut histograms = Vec::with_capacity(LIKERT_ITEMS);
    for i in 0..LIKERT_ITEMS {
        let values: Vec<f64> = responses
            .iter()
            .filter_map(|r| r.likert[i])
            .map(f64::from)
            .collect();
        let mut hist = [0u64; 5];
        for v in &values {
            hist[(*v as usize) - 1] += 1;
        }
        histograms.push(hist);
        let test = if values.is_empty() {
            TestOutcome::InsufficientData("no responses for this item".into())
        } else {
            TestOutcome::from_stat(wilcoxon_signed_rank(
                &values,
                config.mu0,
                Alternative::Greater,
            ))?
        };
        items.push(ItemAnalysis {
            item: item_label(i),
            available_n: values.len(),
            test,
        });
    }

    let aag_choices = responses
        .iter()
        .filter(|r| r.q10_choice == Some(GraderChoice::Aag))
        .count();
    let ta_choices = responses
        .iter()
        .filter(|r| r.q10_choice == Some(GraderChoice::Ta))
        .count();
    let q10_n = aag_choices + ta_choices;
    let q10_test = if q10_n == 0 {
        TestOutcome::InsufficientData("no preference responses".into())
    } else {
        TestOutcome::from_stat(binomial_test_one_sided(
            aag_choices as u64,
            q10_n as u64,
            config.p0,
            Alternative::Greater,
        ))?
    };
    let q10 = ChoiceAnalysis {
        aag_choices,
        ta_choices,
        available_n: q10_n,
        test: q10_test,
    };

    let split = assign_performance_groups(responses)
        .map_err(|_| StatError::TooFewSamples { need: 1, got: 0 })?;

    // Per-item values for each group; Q10 encoded 1/0.
    let group_values = |weak: bool, item: usize| -> Vec<f64> {
        responses
            .iter()
            .filter(|r| {
                if weak {
                    split.weak.contains(&r.student_id)
                } else {
                    split.strong.contains(&r.student_id)
                }
            })
            .filter_map(|r| {
                if item < LIKERT_ITEMS {
                    r.likert[item].map(f64::from)
                } else {
                    r.q10_choice.map(|c| match c {
                        GraderChoice::Aag => 1.0,
                        GraderChoice::Ta => 0.0,
                    })
                }
            })
            .collect()
    };

    let mut comparisons = Vec::with_capacity(LIKERT_ITEMS + 1);
    let mut group_means = Vec::with_capacity(LIKERT_ITEMS + 1);
    for item in 0..=LIKERT_ITEMS {
        let weak_values = group_values(true, item);
        let strong_values = group_values(false, item);
        let label = item_label(item);

        let mean = |vs: &[f64]| {
            if vs.is_empty() {
                None
            } else {
                Some(vs.iter().sum::<f64>() / vs.len() as f64)
            }
        };
        group_means.push(GroupMeans {
            item: label.clone(),
            weak_mean: mean(&weak_values),
            strong_mean: mean(&strong_values),
        });

        let test = if weak_values.is_empty() || strong_values.is_empty() {
            TestOutcome::InsufficientData("one group has no responses".into())
        } else {
            TestOutcome::from_stat(mann_whitney_u(
                &weak_values,
                &strong_values,
                Alternative::Greater,
            ))?
        };
        comparisons.push(GroupComparison {
            item: label,
            n_weak: weak_values.len(),
            n_strong: strong_values.len(),
            test,
        });
    }

    Ok(SurveyAnalysis {
        config: *config,
        total_responses: responses.len(),
        items,
        q10,
        split,
        comparisons,
        group_means,
        histograms,
    })
}

fn format_p(p: f64) -> String {
    if p < 1e-4 {
        "<0.0001".into()
    } else {
        format!("{p:.4}")
    }
}

fn verdict(p: f64, alpha: f64, gloss: &str) -> String {
    if p < alpha {
        format!("significant ({gloss})")
    } else {
        "not significant".into()
    }
}

/// Human-readable rendering: the per-item test table, the group-comparison
/// table, the group-mean block, and the response histograms.
pub fn render_survey_tables(analysis: &SurveyAnalysis) -> String {
    let alpha = analysis.config.alpha;
    let mut out = String::new();

    out.push_str(&format!(
        "Survey analysis ({} responses)\n\n",
        analysis.total_responses
    ));
    out.push_str(&format!(
        "Per-item tests (signed-rank vs median {}, binomial vs proportion {})\n",
        analysis.config.mu0, analysis.config.p0
    ));
    out.push_str(&format!(
        "{:<10}{:>12}{:>10}{:>8}  interpretation (alpha={alpha})\n",
        "question", "statistic", "p-value", "n"
    ));
    for item in &analysis.items {
        match &item.test {
            TestOutcome::Result(r) => {
                let p = r.p_value.unwrap_or(f64::NAN);
                out.push_str(&format!(
                    "{:<10}{:>12.1}{:>10}{:>8}  {}\n",
                    item.item,
                    r.statistic,
                    format_p(p),
                    item.available_n,
                    verdict(p, alpha, &format!("greater than {}", analysis.config.mu0)),
                ));
            }
            TestOutcome::InsufficientData(reason) => {
                out.push_str(&format!(
                    "{:<10}{:>12}{:>10}{:>8}  insufficient data ({reason})\n",
                    item.item, "-", "-", item.available_n
                ));
            }
        }
    }
    match &analysis.q10.test {
        TestOutcome::Result(r) => {
            let p = r.p_value.unwrap_or(f64::NAN);
            out.push_str(&format!(
                "{:<10}{:>12.4}{:>10}{:>8}  {}\n",
                "Q10",
                r.statistic,
                format_p(p),
                analysis.q10.available_n,
                verdict(p, alpha, &format!("greater than {}", analysis.config.p0)),
            ));
        }
        TestOutcome::InsufficientData(reason) => {
            out.push_str(&format!(
                "{:<10}{:>12}{:>10}{:>8}  insufficient data ({reason})\n",
                "Q10", "-", "-", analysis.q10.available_n
            ));
        }
    }

    out.push_str(&format!(
        "\nGroup comparison: weak (n={}, score <= {}) vs strong (n={}), alternative: weak > strong\n",
        analysis.split.weak.len(),
        analysis.split.boundary,
        analysis.split.strong.len()
    ));
    if analysis.split.degenerate {
        out.push_str("warning: every assignment score is identical; the split is degenerate\n");
    }
    out.push_str(&format!(
        "{:<10}{:>12}{:>10}{:>8}{:>8}  interpretation (alpha={alpha})\n",
        "question", "U", "p-value", "n1", "n2"
    ));
    for cmp in &analysis.comparisons {
        match &cmp.test {
            TestOutcome::Result(r) => {
                let p = r.p_value.unwrap_or(f64::NAN);
                out.push_str(&format!(
                    "{:<10}{:>12.1}{:>10}{:>8}{:>8}  {}\n",
                    cmp.item,
                    r.statistic,
                    format_p(p),
                    cmp.n_weak,
                    cmp.n_strong,
                    verdict(p, alpha, "weak > strong"),
                ));
            }
            TestOutcome::InsufficientData(reason) => {
                out.push_str(&format!(
                    "{:<10}{:>12}{:>10}{:>8}{:>8}  insufficient data ({reason})\n",
                    cmp.item, "-", "-", cmp.n_weak, cmp.n_strong
                ));
            }
        }
    }

    out.push_str("\nMean ratings by group (Q10 = within-group AAG share)\n");
    out.push_str(&format!("{:<10}{:>10}{:>10}\n", "item", "weak", "strong"));
    for gm in &analysis.group_means {
        let fmt = |m: Option<f64>| m.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
        out.push_str(&format!(
            "{:<10}{:>10}{:>10}\n",
            gm.item,
            fmt(gm.weak_mean),
            fmt(gm.strong_mean)
        ));
    }

    out.push_str("\nResponse distributions (counts per rating 1..5)\n");
    out.push_str(&format!(
        "{:<10}{:>6}{:>6}{:>6}{:>6}{:>6}\n",
        "item", "1", "2", "3", "4", "5"
    ));
    for (i, hist) in analysis.histograms.iter().enumerate() {
        out.push_str(&format!(
            "{:<10}{:>6}{:>6}{:>6}{:>6}{:>6}\n",
            item_label(i),
            hist[0],
            hist[1],
            hist[2],
            hist[3],
            hist[4]
        ));
    }
    out
}

/// Delimited rendering: one row per test plus the group-mean and histogram
/// rows, tab-separated, suitable for external plotting.
pub fn survey_tsv(analysis: &SurveyAnalysis) -> String {
    let mut out = String::from("section\titem\tstatistic\tp_value\tn1\tn2\texact\tsignificant\n");
    let alpha = analysis.config.alpha;
    let mut push_test =
        |section: &str, item: &str, n1: usize, n2: Option<usize>, test: &TestOutcome| match test {
            TestOutcome::Result(r) => {
                let p = r.p_value.unwrap_or(f64::NAN);
                out.push_str(&format!(
                    "{section}\t{item}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                    r.statistic,
                    p,
                    n1,
                    n2.map(|v| v.to_string()).unwrap_or_default(),
                    r.exact,
                    p < alpha
                ));
            }
            TestOutcome::InsufficientData(_) => {
                out.push_str(&format!(
                    "{section}\t{item}\t\t\t{}\t{}\t\tinsufficient\n",
                    n1,
                    n2.map(|v| v.to_string()).unwrap_or_default()
                ));
            }
        };

    for item in &analysis.items {
        push_test(
            "signed_rank",
            &item.item,
            item.available_n,
            None,
            &item.test,
        );
    }
    push_test(
        "binomial",
        "Q10",
        analysis.q10.available_n,
        None,
        &analysis.q10.test,
    );
    for cmp in &analysis.comparisons {
        push_test(
            "mann_whitney",
            &cmp.item,
            cmp.n_weak,
            Some(cmp.n_strong),
            &cmp.test,
        );
    }
    for gm in &analysis.group_means {
        out.push_str(&format!(
            "group_mean\t{}\t{}\t{}\t\t\t\t\n",
            gm.item,
            gm.weak_mean.map(|v| v.to_string()).unwrap_or_default(),
            gm.strong_mean.map(|v| v.to_string()).unwrap_or_default()
        ));
    }
    for (i, hist) in analysis.histograms.iter().enumerate() {
        for (rating, count) in hist.iter().enumerate() {
            out.push_str(&format!(
                "histogram\t{}:{}\t{}\t\t\t\t\t\n",
                item_label(i),
                rating + 1,
                count
            ));
        }
    }
    out
}
