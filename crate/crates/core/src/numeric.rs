//! Numerically stable scalar kernels shared by the preference models and losses.

use crate::error::{Error, Result};

/// `log Σ exp(v)` with max-shifting.
///
/// Fails on an empty slice or when every entry is `-∞`.
pub fn logsumexp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::domain("logsumexp of an empty sequence"));
    }
    let lse = logsumexp_iter(values.iter().copied());
    if lse == f64::NEG_INFINITY {
        return Err(Error::domain("logsumexp with every entry -inf"));
    }
    Ok(lse)
}

/// Infallible variant used internally: empty or all `-∞` input yields `-∞`.
pub(crate) fn logsumexp_iter<I>(values: I) -> f64
where
    I: Iterator<Item = f64> + Clone,
{
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// `log(e^a + e^b)`; `-∞` is the identity.
pub(crate) fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `log σ(z) = -log(1 + e^{-z})`, branching on the sign of `z`.
pub fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Log-softmax of a parameter row.
pub fn log_softmax(values: &[f64]) -> Vec<f64> {
    let lse = logsumexp_iter(values.iter().copied());
    values.iter().map(|v| v - lse).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn logsumexp_examples() {
        assert!((logsumexp(&[0.0, 0.0]).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!((logsumexp(&[1000.0, 1000.0]).unwrap() - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(logsumexp(&[f64::NEG_INFINITY, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn logsumexp_errors() {
        assert!(matches!(logsumexp(&[]), Err(Error::Domain(_))));
        assert!(matches!(
            logsumexp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn logsumexp_huge_magnitudes() {
        let v = logsumexp(&[1e300, 1e300 - 1.0]).unwrap();
        assert!(v.is_finite());
        assert_eq!(logsumexp(&[-1e300, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn log_sigmoid_examples() {
        assert!((log_sigmoid(0.0) + 2f64.ln()).abs() < 1e-15);
        assert_eq!(log_sigmoid(f64::INFINITY), 0.0);
        assert_eq!(log_sigmoid(f64::NEG_INFINITY), f64::NEG_INFINITY);
        // -log(1 + e^{-1})
        assert!((log_sigmoid(1.0) - (-0.313_261_687_518_222_86)).abs() < 1e-15);
        assert!((log_sigmoid(-800.0) + 800.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn logsumexp_shift(v in proptest::collection::vec(-50.0f64..50.0, 1..12), c in -100.0f64..100.0) {
            let base = logsumexp(&v).unwrap();
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            prop_assert!((logsumexp(&shifted).unwrap() - (base + c)).abs() <= 1e-12 * (1.0 + base.abs() + c.abs()));
        }

        #[test]
        fn log_sigmoid_odd_identity(z in -40.0f64..40.0) {
            prop_assert!((log_sigmoid(z) - log_sigmoid(-z) - z).abs() <= 1e-12);
        }

        #[test]
        fn sigmoid_matches_log_sigmoid(z in -30.0f64..30.0) {
            prop_assert!((sigmoid(z).ln() - log_sigmoid(z)).abs() <= 1e-12);
        }
    }
}
