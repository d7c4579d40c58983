//! Midrank assignment shared by the rank-based tests.

/// Ranks `values` 1..=n with tied values receiving the average of the ranks
/// they span. Returns the rank of each input position plus the size of every
/// tie group (singletons included), in rank order, for variance corrections.
pub(crate) fn average_ranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));

    let mut ranks = vec![0.0; n];
    let mut tie_sizes = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j averaged over the run.
        let rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = rank;
        }
        tie_sizes.push(j - i);
        i = j;
    }
    (ranks, tie_sizes)
}

/// Sum of t^3 - t over tie groups, the shared numerator of the tie
/// corrections.
pub(crate) fn tie_correction_sum(tie_sizes: &[usize]) -> f64 {
    tie_sizes
        .iter()
        .map(|&t| {
            let t = t as f64;
            t * t * t - t
        })
        .sum()
}

/// Doubles a midrank into an exact integer (midranks are multiples of 1/2).
pub(crate) fn doubled(rank: f64) -> u64 {
    let d = rank * 2.0;
    debug_assert!(d.fract() == 0.0 && d >= 0.0);
    d as u64
}
