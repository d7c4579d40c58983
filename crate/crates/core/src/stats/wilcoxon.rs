//! One-sample Wilcoxon signed-rank test against a reference median.
//!
//! Convention: the reported statistic is W+, the sum of ranks of positive
//! differences. W-, min(W+, W-) and the nonzero count m are exposed in the
//! detail map so results can be matched under any convention.

use std::collections::BTreeMap;

use super::normal::standard_normal_cdf;
use super::ranks::{average_ranks, doubled, tie_correction_sum};
use super::{
    ensure_finite, Alternative, Method, SampleSize, StatError, StatTestResult, TestMethod,
    EXACT_HARD_CAP, WILCOXON_EXACT_MAX,
};

/// Signed-rank test with the default method selection (exact null
/// distribution for m <= 25 nonzero differences, tie-corrected normal
/// approximation with continuity correction above).
///
/// # Examples
///
/// ```
/// use autograde::stats::{wilcoxon_signed_rank, Alternative};
///
/// // All five differences positive: W+ = 15, p = 1/32 over the 2^5
/// // sign assignments.
/// let r = wilcoxon_signed_rank(&[4.0, 5.0, 4.0, 5.0, 5.0], 3.0, Alternative::Greater).unwrap();
/// assert_eq!(r.statistic, 15.0);
/// assert!((r.p_value.unwrap() - 0.03125).abs() < 1e-12);
/// ```
pub fn wilcoxon_signed_rank(
    values: &[f64],
    mu0: f64,
    alternative: Alternative,
) -> Result<StatTestResult, StatError> {
    wilcoxon_signed_rank_with(values, mu0, alternative, Method::Auto)
}

pub fn wilcoxon_signed_rank_with(
    values: &[f64],
    mu0: f64,
    alternative: Alternative,
    method: Method,
) -> Result<StatTestResult, StatError> {
    if values.is_empty() {
        return Err(StatError::TooFewSamples { need: 1, got: 0 });
    }
    ensure_finite(values)?;
    if !mu0.is_finite() {
        return Err(StatError::NonFinite);
    }

    // Zero differences carry no sign information and are discarded.
    let diffs: Vec<f64> = values
        .iter()
        .map(|v| v - mu0)
        .filter(|d| *d != 0.0)
        .collect();
    let m = diffs.len();
    if m == 0 {
        return Err(StatError::AllZeroDifferences);
    }

    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let (ranks, tie_sizes) = average_ranks(&abs);
    let w_plus: f64 = ranks
        .iter()
        .zip(&diffs)
        .filter(|(_, d)| **d > 0.0)
        .map(|(r, _)| *r)
        .sum();
    let total = m as f64 * (m as f64 + 1.0) / 2.0;
    let w_minus = total - w_plus;

    let use_exact = match method {
        Method::Auto => m <= WILCOXON_EXACT_MAX,
        Method::Exact => {
            if m > EXACT_HARD_CAP {
                return Err(StatError::ExactInfeasible {
                    size: m,
                    cap: EXACT_HARD_CAP,
                });
            }
            true
        }
        Method::Approx => false,
    };

    let mut detail = BTreeMap::new();
    detail.insert("w_plus".into(), w_plus);
    detail.insert("w_minus".into(), w_minus);
    detail.insert("w_min".into(), w_plus.min(w_minus));
    detail.insert("m_nonzero".into(), m as f64);
    detail.insert("zeros_dropped".into(), (values.len() - m) as f64);

    let p = if use_exact {
        let (p, p_mid) = exact_tail(&ranks, w_plus, alternative);
        detail.insert("p_mid".into(), p_mid);
        p
    } else {
        let mean = total / 2.0;
        let var = m as f64 * (m as f64 + 1.0) * (2.0 * m as f64 + 1.0) / 24.0
            - tie_correction_sum(&tie_sizes) / 48.0;
        let sd = var.sqrt();
        let z = match alternative {
            Alternative::Greater => (w_plus - 0.5 - mean) / sd,
            Alternative::Less => (w_plus + 0.5 - mean) / sd,
        };
        detail.insert("mean".into(), mean);
        detail.insert("var".into(), var);
        detail.insert("z".into(), z);
        match alternative {
            Alternative::Greater => 1.0 - standard_normal_cdf(z),
            Alternative::Less => standard_normal_cdf(z),
        }
    };

    Ok(StatTestResult {
        method: TestMethod::WilcoxonSignedRank,
        statistic: w_plus,
        p_value: Some(p.clamp(0.0, 1.0)),
        n: SampleSize::One(values.len()),
        alternative: match alternative {
            Alternative::Greater => format!("median > {mu0}"),
            Alternative::Less => format!("median < {mu0}"),
        },
        exact: use_exact,
        detail,
    })
}

/// Exact tail probability of W+ over all 2^m sign assignments, computed by
/// convolving the count distribution of doubled-rank subset sums. Returns
/// (tail p, mid-p).
fn exact_tail(ranks: &[f64], w_obs: f64, alternative: Alternative) -> (f64, f64) {
    let doubled_ranks: Vec<u64> = ranks.iter().map(|&r| doubled(r)).collect();
    let total: usize = doubled_ranks.iter().sum::<u64>() as usize;

    // counts[s] = number of subsets of the ranks (the positive-difference
    // sets) whose doubled sum is s.
    let mut counts = vec![0u128; total + 1];
    counts[0] = 1;
    for &r in &doubled_ranks {
        let r = r as usize;
        for s in (r..=total).rev() {
            counts[s] += counts[s - r];
        }
    }

    let assignments = 2f64.powi(ranks.len() as i32);
    let w2 = doubled(w_obs) as usize;
    let ge: u128 = counts[w2..].iter().sum();
    let le: u128 = counts[..=w2].iter().sum();
    let eq = counts[w2];

    let (tail, more_extreme) = match alternative {
        Alternative::Greater => (ge, ge - eq),
        Alternative::Less => (le, le - eq),
    };
    let p = tail as f64 / assignments;
    let p_mid = (more_extreme as f64 + eq as f64 / 2.0) / assignments;
    (p, p_mid)
}
