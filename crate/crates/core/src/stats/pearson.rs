//! Pearson product-moment correlation.

use std::collections::BTreeMap;

use super::{ensure_finite, SampleSize, StatError, StatTestResult, TestMethod};

/// Correlation between two aligned samples, computed with the two-pass
/// mean-subtracted formula (numerically stable for the score ranges here).
///
/// No p-value is attached; the result carries r as the statistic.
///
/// # Examples
///
/// ```
/// use autograde::stats::pearson_r;
///
/// let r = pearson_r(&[1.0, 2.0, 3.0, 4.0], &[2.0, 4.0, 4.0, 8.0]).unwrap();
/// assert!((r.statistic - 9.0 / 95.0_f64.sqrt()).abs() < 1e-12);
/// ```
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<StatTestResult, StatError> {
    if x.len() != y.len() {
        return Err(StatError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(StatError::TooFewSamples {
            need: 2,
            got: x.len(),
        });
    }
    ensure_finite(x)?;
    ensure_finite(y)?;

    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;

    let mut cross = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        let dx = xi - mean_x;
        let dy = yi - mean_y;
        cross += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == 0.0 {
        return Err(StatError::ConstantInput("first"));
    }
    if var_y == 0.0 {
        return Err(StatError::ConstantInput("second"));
    }

    let r = (cross / (var_x.sqrt() * var_y.sqrt())).clamp(-1.0, 1.0);

    let mut detail = BTreeMap::new();
    detail.insert("mean_x".into(), mean_x);
    detail.insert("mean_y".into(), mean_y);
    Ok(StatTestResult {
        method: TestMethod::Pearson,
        statistic: r,
        p_value: None,
        n: SampleSize::One(x.len()),
        alternative: "none (coefficient only)".into(),
        exact: true,
        detail,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_is_one() {
        let r = pearson_r(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((r.statistic - 1.0).abs() < 1e-15);
    }

    #[test]
    fn reversal_is_minus_one() {
        let r = pearson_r(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap();
        assert!((r.statistic + 1.0).abs() < 1e-15);
    }

    #[test]
    fn hand_computed_example() {
        // x=(1,2,3,4), y=(2,4,4,8): cross=9, var_x=5, var_y=19,
        // r = 9/sqrt(95).
        let r = pearson_r(&[1.0, 2.0, 3.0, 4.0], &[2.0, 4.0, 4.0, 8.0]).unwrap();
        let expected = 9.0 / 95.0_f64.sqrt();
        assert!((r.statistic - expected).abs() < 1e-15);
        assert!((r.statistic - 0.9234).abs() < 5e-5);
    }

    #[test]
    fn constant_input_rejected() {
        assert_eq!(
            pearson_r(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap_err(),
            StatError::ConstantInput("first")
        );
        assert_eq!(
            pearson_r(&[1.0, 2.0, 3.0], &[4.0, 4.0, 4.0]).unwrap_err(),
            StatError::ConstantInput("second")
        );
    }

    #[test]
    fn short_and_mismatched_inputs_rejected() {
        assert!(matches!(
            pearson_r(&[1.0], &[2.0]),
            Err(StatError::TooFewSamples { .. })
        ));
        assert!(matches!(
            pearson_r(&[1.0, 2.0], &[2.0]),
            Err(StatError::LengthMismatch(2, 1))
        ));
    }
}
