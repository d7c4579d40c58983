//! Statistics kernel: grader-agreement analysis and the nonparametric
//! survey tests (one-sample signed-rank, one-sided binomial, two-sample
//! rank-sum), implemented from scratch.
//!
//! Exact p-values are computed from the full null distribution of the
//! statistic (all 2^m sign assignments, all C(n1+n2, n1) labelings) via a
//! count-distribution convolution; the normal approximations use
//! tie-corrected variances and a continuity correction. Both paths can be
//! forced through [`Method`].

mod agreement;
mod binomial;
mod mann_whitney;
mod normal;
mod pearson;
mod ranks;
mod survey;
mod wilcoxon;

pub use agreement::{
    agreement_histogram_tsv, compare_graders, render_agreement, AgreementReport, Discrepancy,
    PairedScores, QuestionAgreement,
};
pub use binomial::binomial_test_one_sided;
pub use mann_whitney::{mann_whitney_u, mann_whitney_u_with};
pub use normal::standard_normal_cdf;
pub use pearson::pearson_r;
pub use survey::{
    analyze_survey, render_survey_tables, survey_tsv, ChoiceAnalysis, GroupComparison, GroupMeans,
    ItemAnalysis, SurveyAnalysis, TestOutcome,
};
pub use wilcoxon::{wilcoxon_signed_rank, wilcoxon_signed_rank_with};

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

/// Largest nonzero-difference count for which the signed-rank test uses the
/// exact null distribution by default.
pub const WILCOXON_EXACT_MAX: usize = 25;
/// Largest pooled sample size for which the rank-sum test uses the exact
/// null distribution by default.
pub const MANN_WHITNEY_EXACT_MAX: usize = 14;
/// Hard cap on forced-exact computation (keeps counts within u128 and the
/// convolution sub-second).
pub const EXACT_HARD_CAP: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum StatError {
    #[error("need at least {need} observations, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("input lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("non-finite value in input")]
    NonFinite,
    #[error("{0} input has zero variance")]
    ConstantInput(&'static str),
    #[error("every value equals the reference median; no nonzero differences remain")]
    AllZeroDifferences,
    #[error("group {0} is empty")]
    EmptyGroup(&'static str),
    #[error("successes ({successes}) exceed trials ({n})")]
    SuccessesExceedTrials { successes: u64, n: u64 },
    #[error("reference proportion must lie strictly between 0 and 1, got {0}")]
    InvalidProportion(f64),
    #[error("exact computation infeasible for size {size} (cap {cap})")]
    ExactInfeasible { size: usize, cap: usize },
    #[error("no overlapping (student, question) keys between the two grade sets")]
    NoOverlap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TestMethod {
    Pearson,
    WilcoxonSignedRank,
    BinomialOneSided,
    MannWhitneyU,
}

/// Direction of the one-sided alternative hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Alternative {
    /// First sample (or single sample vs reference) stochastically greater.
    Greater,
    Less,
}

/// How the p-value is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    /// Exact when the sample is small enough, normal approximation otherwise.
    #[default]
    Auto,
    Exact,
    Approx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SampleSize {
    One(usize),
    Two(usize, usize),
}

/// Outcome of a hypothesis test or correlation computation.
///
/// `statistic` follows each test's documented convention (W+ for the
/// signed-rank test, U1 for the rank-sum test, successes/n for the binomial
/// test, r for Pearson). `detail` exposes the companion quantities (W-, U2,
/// rank sums, z, mid-p, ...) so results can be matched against reports that
/// used a different convention.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatTestResult {
    pub method: TestMethod,
    pub statistic: f64,
    pub p_value: Option<f64>,
    pub n: SampleSize,
    pub alternative: String,
    pub exact: bool,
    pub detail: BTreeMap<String, f64>,
}

impl StatTestResult {
    pub fn significant_at(&self, alpha: f64) -> Option<bool> {
        self.p_value.map(|p| p < alpha)
    }
}

pub(crate) fn ensure_finite(values: &[f64]) -> Result<(), StatError> {
    if values.iter().any(|v| !v.is_finite()) {
        Err(StatError::NonFinite)
    } else {
        Ok(())
    }
}
