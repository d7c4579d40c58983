//! One-sided exact binomial test, evaluated in log space.

use std::collections::BTreeMap;

use super::{Alternative, SampleSize, StatError, StatTestResult, TestMethod};

/// Tail probability of Binomial(n, p0) at `successes`, one-sided.
///
/// For `Greater`, p = sum_{k=successes}^{n} C(n,k) p0^k (1-p0)^{n-k}; for
/// `Less` the lower tail. Terms are accumulated in log space so deep tails
/// (e.g. 93 of 104 at p0 = 0.5) neither underflow nor lose the leading term.
///
/// # Examples
///
/// ```
/// use autograde::stats::{binomial_test_one_sided, Alternative};
///
/// let r = binomial_test_one_sided(5, 10, 0.5, Alternative::Greater).unwrap();
/// assert!((r.p_value.unwrap() - 638.0 / 1024.0).abs() < 1e-12);
/// ```
pub fn binomial_test_one_sided(
    successes: u64,
    n: u64,
    p0: f64,
    alternative: Alternative,
) -> Result<StatTestResult, StatError> {
    if successes > n {
        return Err(StatError::SuccessesExceedTrials { successes, n });
    }
    if n == 0 {
        return Err(StatError::TooFewSamples { need: 1, got: 0 });
    }
    if !(p0 > 0.0 && p0 < 1.0) {
        return Err(StatError::InvalidProportion(p0));
    }

    let range: Vec<u64> = match alternative {
        Alternative::Greater => (successes..=n).collect(),
        Alternative::Less => (0..=successes).collect(),
    };
    // The full tail is the whole distribution: exactly 1.
    let p = if range.len() as u64 == n + 1 {
        1.0
    } else {
        log_space_tail(&range, n, p0)
    };

    let mut detail = BTreeMap::new();
    detail.insert("successes".into(), successes as f64);
    detail.insert("trials".into(), n as f64);
    detail.insert("p0".into(), p0);
    Ok(StatTestResult {
        method: TestMethod::BinomialOneSided,
        statistic: successes as f64 / n as f64,
        p_value: Some(p),
        n: SampleSize::One(n as usize),
        alternative: match alternative {
            Alternative::Greater => format!("proportion > {p0}"),
            Alternative::Less => format!("proportion < {p0}"),
        },
        exact: true,
        detail,
    })
}

fn log_space_tail(ks: &[u64], n: u64, p0: f64) -> f64 {
    let ln_p = p0.ln();
    let ln_q = (1.0 - p0).ln();
    let log_terms: Vec<f64> = ks
        .iter()
        .map(|&k| ln_choose(n, k) + k as f64 * ln_p + (n - k) as f64 * ln_q)
        .collect();
    let max = log_terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return 0.0;
    }
    let sum: f64 = log_terms.iter().map(|&lt| (lt - max).exp()).sum();
    ((max + sum.ln()).exp()).clamp(0.0, 1.0)
}

/// ln C(n, k) as a sum of logs over the shorter factor run.
fn ln_choose(n: u64, k: u64) -> f64 {
    let k = k.min(n - k);
    let mut acc = 0.0;
    for i in 1..=k {
        acc += ((n - k + i) as f64).ln() - (i as f64).ln();
    }
    acc
}
