//! Two-sample Mann-Whitney U test.
//!
//! Convention: the reported statistic is U1 = R1 - n1(n1+1)/2 where R1 is
//! group 1's rank sum in the pooled midranked sample. U2, R1 and the mid-p
//! variant live in the detail map. The exact path conditions on the observed
//! (possibly tied) pooled ranks and enumerates all C(n1+n2, n1) labelings.

use std::collections::BTreeMap;

use super::normal::standard_normal_cdf;
use super::ranks::{average_ranks, doubled, tie_correction_sum};
use super::{
    ensure_finite, Alternative, Method, SampleSize, StatError, StatTestResult, TestMethod,
    EXACT_HARD_CAP, MANN_WHITNEY_EXACT_MAX,
};

/// Rank-sum test with the default method selection (exact for pooled size
/// <= 14, tie-corrected normal approximation with continuity correction
/// above).
///
/// # Examples
///
/// ```
/// use autograde::stats::{mann_whitney_u, Alternative};
///
/// // Complete separation: U1 = n1*n2 = 9, p = 1/C(6,3) = 0.05.
/// let r = mann_whitney_u(&[4.0, 5.0, 6.0], &[1.0, 2.0, 3.0], Alternative::Greater).unwrap();
/// assert_eq!(r.statistic, 9.0);
/// assert!((r.p_value.unwrap() - 0.05).abs() < 1e-12);
/// ```
pub fn mann_whitney_u(
    group1: &[f64],
    group2: &[f64],
    alternative: Alternative,
) -> Result<StatTestResult, StatError> {
    mann_whitney_u_with(group1, group2, alternative, Method::Auto)
}

pub fn mann_whitney_u_with(
    group1: &[f64],
    group2: &[f64],
    alternative: Alternative,
    method: Method,
) -> Result<StatTestResult, StatError> {
    if group1.is_empty() {
        return Err(StatError::EmptyGroup("1"));
    }
    if group2.is_empty() {
        return Err(StatError::EmptyGroup("2"));
    }
    ensure_finite(group1)?;
    ensure_finite(group2)?;

    let n1 = group1.len();
    let n2 = group2.len();
    let n = n1 + n2;

    let pooled: Vec<f64> = group1.iter().chain(group2).copied().collect();
    let (ranks, tie_sizes) = average_ranks(&pooled);
    let r1: f64 = ranks[..n1].iter().sum();
    let u1 = r1 - n1 as f64 * (n1 as f64 + 1.0) / 2.0;
    let u2 = n1 as f64 * n2 as f64 - u1;
    debug_assert!(u1 >= -1e-9 && u1 <= n1 as f64 * n2 as f64 + 1e-9);

    let use_exact = match method {
        Method::Auto => n <= MANN_WHITNEY_EXACT_MAX,
        Method::Exact => {
            if n > EXACT_HARD_CAP {
                return Err(StatError::ExactInfeasible {
                    size: n,
                    cap: EXACT_HARD_CAP,
                });
            }
            true
        }
        Method::Approx => false,
    };

    let mut detail = BTreeMap::new();
    detail.insert("u1".into(), u1);
    detail.insert("u2".into(), u2);
    detail.insert("r1".into(), r1);

    let p = if use_exact {
        let (p, p_mid) = exact_tail(&ranks, n1, u1, alternative);
        detail.insert("p_mid".into(), p_mid);
        p
    } else {
        let nf1 = n1 as f64;
        let nf2 = n2 as f64;
        let nf = n as f64;
        let mean = nf1 * nf2 / 2.0;
        let correction = tie_correction_sum(&tie_sizes) / (nf * (nf - 1.0));
        let var = nf1 * nf2 / 12.0 * ((nf + 1.0) - correction);
        detail.insert("mean".into(), mean);
        detail.insert("var".into(), var);
        if var <= 0.0 {
            // Every pooled value tied: U is a point mass at its mean.
            1.0
        } else {
            let sd = var.sqrt();
            let z = match alternative {
                Alternative::Greater => (u1 - 0.5 - mean) / sd,
                Alternative::Less => (u1 + 0.5 - mean) / sd,
            };
            detail.insert("z".into(), z);
            match alternative {
                Alternative::Greater => 1.0 - standard_normal_cdf(z),
                Alternative::Less => standard_normal_cdf(z),
            }
        }
    };

    Ok(StatTestResult {
        method: TestMethod::MannWhitneyU,
        statistic: u1,
        p_value: Some(p.clamp(0.0, 1.0)),
        n: SampleSize::Two(n1, n2),
        alternative: match alternative {
            Alternative::Greater => "group 1 > group 2".into(),
            Alternative::Less => "group 1 < group 2".into(),
        },
        exact: use_exact,
        detail,
    })
}

/// Exact tail of U1 over all C(n, n1) labelings of the observed pooled
/// ranks: counts[k][s] accumulates the number of k-subsets with doubled rank
/// sum s. Returns (tail p, mid-p).
fn exact_tail(ranks: &[f64], n1: usize, u_obs: f64, alternative: Alternative) -> (f64, f64) {
    let doubled_ranks: Vec<u64> = ranks.iter().map(|&r| doubled(r)).collect();
    let total: usize = doubled_ranks.iter().sum::<u64>() as usize;

    let mut counts = vec![vec![0u128; total + 1]; n1 + 1];
    counts[0][0] = 1;
    for &r in &doubled_ranks {
        let r = r as usize;
        for k in (1..=n1).rev() {
            for s in (r..=total).rev() {
                let add = counts[k - 1][s - r];
                if add != 0 {
                    counts[k][s] += add;
                }
            }
        }
    }

    let labelings: u128 = counts[n1].iter().sum();
    // Doubled U = doubled rank sum - n1(n1+1).
    let offset = n1 as u64 * (n1 as u64 + 1);
    let threshold = doubled(u_obs) + offset;

    let mut ge: u128 = 0;
    let mut le: u128 = 0;
    let mut eq: u128 = 0;
    for (s, &count) in counts[n1].iter().enumerate() {
        let s = s as u64;
        if s >= threshold {
            ge += count;
        }
        if s <= threshold {
            le += count;
        }
        if s == threshold {
            eq += count;
        }
    }

    let (tail, more_extreme) = match alternative {
        Alternative::Greater => (ge, ge - eq),
        Alternative::Less => (le, le - eq),
    };
    let p = tail as f64 / labelings as f64;
    let p_mid = (more_extreme as f64 + eq as f64 / 2.0) / labelings as f64;
    (p, p_mid)
}
