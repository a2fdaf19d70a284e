//! Log-domain arithmetic.

use crate::error::NumericError;

/// Natural-log score. `-inf` encodes an impossible configuration; never NaN.
pub type LogScore = f64;

/// `log(exp(a) + exp(b))`.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `log(sum(exp(values)))`, shifted by the maximum. Empty input gives `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

/// `log(1 - exp(-x))` for `x >= 0`, switching formulas at `ln 2`.
#[inline]
pub fn log1mexp(x: f64) -> f64 {
    if x <= std::f64::consts::LN_2 {
        (-(-x).exp_m1()).ln()
    } else {
        (-(-x).exp()).ln_1p()
    }
}

/// Inverse of [`log_add_exp`] in its first argument: the `a` with
/// `log_add_exp(a, b) == c`.
///
/// `c` may undershoot `b` by a small relative tolerance (rounding in the
/// aggregate); such inputs, and `c == b`, give `-inf`.
pub fn log_minus_exp(c: f64, b: f64) -> Result<f64, NumericError> {
    if b == f64::NEG_INFINITY {
        return Ok(c);
    }
    let diff = c - b;
    let tol = 1e-9 * c.abs().max(1.0);
    if diff < -tol || diff.is_nan() {
        return Err(NumericError::NegativeDifference { c, b });
    }
    if diff <= 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(c + log1mexp(diff))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn lse_examples() {
        assert_relative_eq!(log_sum_exp(&[0.0, 0.0]), 2f64.ln(), epsilon = 1e-15);
        assert_eq!(log_sum_exp(&[-3.5]), -3.5);
        assert_relative_eq!(
            log_sum_exp(&[-1000.0; 3]),
            -1000.0 + 3f64.ln(),
            epsilon = 1e-12
        );
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, 2.0]), 2.0);
        assert_relative_eq!(
            log_add_exp(1000.0, 1000.0),
            1000.0 + 2f64.ln(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn lme_examples() {
        assert!(log_minus_exp(2f64.ln(), 0.0).unwrap().abs() < 1e-15);
        assert_eq!(log_minus_exp(3.0, f64::NEG_INFINITY).unwrap(), 3.0);
        assert_eq!(log_minus_exp(3.0, 3.0).unwrap(), f64::NEG_INFINITY);
        assert_eq!(log_minus_exp(3.0, 3.0 + 1e-12).unwrap(), f64::NEG_INFINITY);
        assert!(log_minus_exp(3.0, 3.1).is_err());
        assert_eq!(
            log_minus_exp(f64::NEG_INFINITY, f64::NEG_INFINITY).unwrap(),
            f64::NEG_INFINITY
        );
    }

    proptest! {
        #[test]
        fn lme_inverts_lse(a in -30.0f64..30.0, b in -30.0f64..30.0) {
            let c = log_sum_exp(&[a, b]);
            let back = log_minus_exp(c, b).unwrap();
            if a >= b {
                prop_assert!((back - a).abs() <= 1e-10, "a={a} b={b} back={back}");
            }
            // Error measured against the aggregate it was recovered from.
            let lin = ((back - c).exp() - (a - c).exp()).abs();
            prop_assert!(lin <= 1e-10, "a={a} b={b} back={back}");
        }

        #[test]
        fn lse_shift_and_permutation(xs in proptest::collection::vec(-50.0f64..50.0, 1..12), shift in -100.0f64..100.0) {
            let base = log_sum_exp(&xs);
            let shifted: Vec<f64> = xs.iter().map(|x| x + shift).collect();
            prop_assert!((log_sum_exp(&shifted) - (base + shift)).abs() <= 1e-12 * (1.0 + base.abs() + shift.abs()));
            let mut rev = xs.clone();
            rev.reverse();
            prop_assert!((log_sum_exp(&rev) - base).abs() <= 1e-12 * (1.0 + base.abs()));
        }
    }
}
