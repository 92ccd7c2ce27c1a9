//! Small numerical utilities: stable log-domain reductions and
//! order-independent summation.

/// Computes `log(sum(exp(x_i)))` by factoring out the maximum.
///
/// Returns negative infinity for an empty slice or when every entry is
/// negative infinity.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = values.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Pairwise (cascade) summation. Error grows like O(log n) instead of O(n),
/// and the result does not depend on how callers chunk their work.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
        }
    }
}

/// Mean and (unbiased) standard error of the mean, via pairwise sums.
pub fn mean_and_std_error(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    assert!(n >= 1, "mean of an empty sample");
    let mean = pairwise_sum(values) / n as f64;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let sq: Vec<f64> = values.iter().map(|&v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn log_sum_exp_basic() {
        let v = [0.0_f64.ln(), 1.0_f64.ln(), 2.0_f64.ln()];
        assert_abs_diff_eq!(log_sum_exp(&v), 3.0_f64.ln(), epsilon = 1e-14);
    }

    #[test]
    fn log_sum_exp_all_neg_inf() {
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 4]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn log_sum_exp_large_offsets() {
        let v = [1000.0, 1000.0];
        assert_abs_diff_eq!(log_sum_exp(&v), 1000.0 + 2.0_f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn pairwise_matches_exact_on_small_input() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_abs_diff_eq!(pairwise_sum(&v), 15.0, epsilon = 0.0);
    }

    #[test]
    fn mean_and_se() {
        let v = [1.0, 2.0, 3.0, 4.0];
        let (m, se) = mean_and_std_error(&v);
        assert_abs_diff_eq!(m, 2.5, epsilon = 1e-15);
        // sample variance 5/3, se = sqrt(5/12)
        assert_abs_diff_eq!(se, (5.0_f64 / 12.0).sqrt(), epsilon = 1e-15);
    }
}
