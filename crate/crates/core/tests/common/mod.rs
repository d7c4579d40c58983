//! Shared test oracles: brute-force reference implementations the kernel is
//! checked against. These deliberately take different routes from the
//! library code (counting midranks instead of sort-based ranking, literal
//! bitmask enumeration instead of count convolution, pmf recurrences
//! instead of log-space sums, raw-moment Pearson instead of mean-subtracted).

#![allow(dead_code)]

/// SplitMix64: tiny deterministic generator for reproducible random cases.
pub struct Rng(pub u64);

impl Rng {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    pub fn below(&mut self, bound: u64) -> u64 {
        self.next_u64() % bound
    }

    pub fn f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }
}

/// Midranks by counting: rank_i = 1 + #{j: a_j < a_i} + (#{j: a_j = a_i} - 1)/2.
pub fn counting_ranks(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .map(|&v| {
            let below = values.iter().filter(|&&w| w < v).count() as f64;
            let equal = values.iter().filter(|&&w| w == v).count() as f64;
            1.0 + below + (equal - 1.0) / 2.0
        })
        .collect()
}

/// Exact one-sided (greater) signed-rank test by enumerating all 2^m sign
/// assignments. Returns (W+, p) or None when every difference is zero.
/// Rank sums are exact in f64 (multiples of 1/2), so comparisons are exact.
pub fn wilcoxon_oracle(values: &[f64], mu0: f64) -> Option<(f64, f64)> {
    let diffs: Vec<f64> = values
        .iter()
        .map(|v| v - mu0)
        .filter(|d| *d != 0.0)
        .collect();
    let m = diffs.len();
    if m == 0 {
        return None;
    }
    assert!(m < 24, "oracle is for small instances");
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = counting_ranks(&abs);
    let w_plus: f64 = ranks
        .iter()
        .zip(&diffs)
        .filter(|(_, d)| **d > 0.0)
        .map(|(r, _)| *r)
        .sum();

    let total = 1u64 << m;
    let mut at_least = 0u64;
    for mask in 0..total {
        let w: f64 = (0..m)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| ranks[i])
            .sum();
        if w >= w_plus {
            at_least += 1;
        }
    }
    Some((w_plus, at_least as f64 / total as f64))
}

/// Exact one-sided (group1 greater) rank-sum test by enumerating every
/// C(n1+n2, n1) labeling of the pooled ranks. Returns (U1, p).
pub fn mwu_oracle(group1: &[f64], group2: &[f64]) -> (f64, f64) {
    let n1 = group1.len();
    let n = n1 + group2.len();
    assert!(n < 24, "oracle is for small instances");
    let pooled: Vec<f64> = group1.iter().chain(group2).copied().collect();
    let ranks = counting_ranks(&pooled);
    let offset = (n1 * (n1 + 1)) as f64 / 2.0;
    let r1: f64 = ranks[..n1].iter().sum();
    let u_obs = r1 - offset;

    let mut labelings = 0u64;
    let mut at_least = 0u64;
    for mask in 0u64..(1 << n) {
        if mask.count_ones() as usize != n1 {
            continue;
        }
        labelings += 1;
        let r: f64 = (0..n)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| ranks[i])
            .sum();
        if r - offset >= u_obs {
            at_least += 1;
        }
    }
    (u_obs, at_least as f64 / labelings as f64)
}

/// Upper-tail binomial probability via the pmf recurrence
/// pmf(k+1) = pmf(k) * (n-k)/(k+1) * p/(1-p).
pub fn binomial_oracle_greater(successes: u64, n: u64, p0: f64) -> f64 {
    let q = 1.0 - p0;
    let mut pmf = q.powi(n as i32);
    let mut tail = if successes == 0 { pmf } else { 0.0 };
    for k in 0..n {
        pmf *= (n - k) as f64 / (k + 1) as f64 * (p0 / q);
        if k + 1 >= successes {
            tail += pmf;
        }
    }
    tail.min(1.0)
}

/// Pearson r by the raw-moment formula.
pub fn pearson_oracle(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let syy: f64 = y.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}
