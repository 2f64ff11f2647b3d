//! Probability models over rankings of rewarded candidates.
//!
//! Rewards are given in the order of the ranking under consideration:
//! `rewards[0]` belongs to the item ranked first. Everything is evaluated
//! in log space and exponentiated at the boundary, so lists of twenty
//! candidates with widely spread rewards do not underflow.

use itertools::Itertools;

use crate::error::{Error, Result};
use crate::numeric::logsumexp_iter;

/// Longest tail the brute-force oracle will enumerate (8! = 40320 orders).
pub const BRUTEFORCE_MAX_TAIL: usize = 8;

fn check_rewards(rewards: &[f64]) -> Result<()> {
    if rewards.len() < 2 {
        return Err(Error::domain(format!(
            "ranking needs at least 2 rewards, got {}",
            rewards.len()
        )));
    }
    if rewards.iter().any(|r| !r.is_finite()) {
        return Err(Error::domain("rewards must be finite"));
    }
    Ok(())
}

fn check_k(k: usize, m: usize) -> Result<()> {
    if k == 0 || k > m {
        return Err(Error::domain(format!("K = {k} outside 1..={m}")));
    }
    Ok(())
}

/// Bradley-Terry probability that the first item beats the second.
pub fn bt_prob(r1: f64, r2: f64) -> f64 {
    crate::numeric::sigmoid(r1 - r2)
}

/// `log Π_{i<K} exp(r_i) / Σ_{j≥i} exp(r_j)`.
pub fn korder_log_prob(rewards: &[f64], k: usize) -> Result<f64> {
    check_rewards(rewards)?;
    check_k(k, rewards.len())?;
    Ok(korder_log_prob_unchecked(rewards, k))
}

pub(crate) fn korder_log_prob_unchecked(rewards: &[f64], k: usize) -> f64 {
    // Suffix log-sum-exps computed right to left.
    let m = rewards.len();
    let mut suffix = vec![f64::NEG_INFINITY; m + 1];
    for i in (0..m).rev() {
        let (a, b) = (suffix[i + 1], rewards[i]);
        suffix[i] = logsumexp_iter([a, b].into_iter());
    }
    (0..k.min(m)).map(|i| rewards[i] - suffix[i]).sum()
}

/// Probability of the top-K prefix under the K-order Plackett-Luce model.
pub fn korder_prob(rewards: &[f64], k: usize) -> Result<f64> {
    korder_log_prob(rewards, k).map(f64::exp)
}

/// Probability of the full order under the list-wise Plackett-Luce model.
pub fn pl_full_prob(rewards: &[f64]) -> Result<f64> {
    korder_prob(rewards, rewards.len())
}

/// Probability that the first item beats all others at once (single positive
/// against a set of negatives).
pub fn top1_vs_rest_prob(rewards: &[f64]) -> Result<f64> {
    check_rewards(rewards)?;
    let lse = logsumexp_iter(rewards.iter().copied());
    Ok((rewards[0] - lse).exp())
}

/// Marginalizes the full Plackett-Luce model over every ordering of the tail.
///
/// Enumerates `(M-K)!` permutations and multiplies softmax ratios directly,
/// without touching the log-space code path used by [`korder_prob`], so the
/// two can be compared as independent routes.
pub fn korder_prob_bruteforce(rewards: &[f64], k: usize) -> Result<f64> {
    check_rewards(rewards)?;
    check_k(k, rewards.len())?;
    let tail = &rewards[k..];
    if tail.len() > BRUTEFORCE_MAX_TAIL {
        return Err(Error::Resource(format!(
            "tail of {} items exceeds the enumeration cap of {BRUTEFORCE_MAX_TAIL}",
            tail.len()
        )));
    }
    // Shift for overflow safety; the model is shift invariant.
    let max = rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let head: Vec<f64> = rewards[..k].iter().map(|r| (r - max).exp()).collect();
    let tail: Vec<f64> = tail.iter().map(|r| (r - max).exp()).collect();

    let mut total = 0.0;
    for perm in (0..tail.len()).permutations(tail.len()) {
        let weights: Vec<f64> = head
            .iter()
            .copied()
            .chain(perm.iter().map(|&p| tail[p]))
            .collect();
        total += direct_pl_product(&weights);
    }
    Ok(total)
}

fn direct_pl_product(weights: &[f64]) -> f64 {
    let mut p = 1.0;
    for i in 0..weights.len().saturating_sub(1) {
        let denom: f64 = weights[i..].iter().sum();
        p *= weights[i] / denom;
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Frozen from the independent scalar oracle (product of softmax terms).
    const PL_2100: f64 = 0.175_800_824_533_261_54;
    const K2_2100: f64 = 0.351_601_649_066_523_1;

    #[test]
    fn bt_examples() {
        assert_eq!(bt_prob(0.0, 0.0), 0.5);
        assert!((bt_prob(4f64.ln(), 0.0) - 0.8).abs() < 1e-15);
        assert!((bt_prob(1.3, -0.2) - bt_prob(11.3, 9.8)).abs() < 1e-15);
    }

    #[test]
    fn pl_examples() {
        assert!((pl_full_prob(&[0.5, 0.5, 0.5]).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        assert!((pl_full_prob(&[4f64.ln(), 0.0]).unwrap() - 0.8).abs() < 1e-15);
        assert!((pl_full_prob(&[2.0, 1.0, 0.0, 0.0]).unwrap() - PL_2100).abs() < 1e-12);
    }

    #[test]
    fn korder_examples() {
        assert!((korder_prob(&[0.0, 0.0, 0.0], 2).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        assert!((korder_prob(&[2.0, 1.0, 0.0, 0.0], 2).unwrap() - K2_2100).abs() < 1e-12);
        let r = [0.3, -1.2, 2.2, 0.7];
        assert!((korder_prob(&r, 4).unwrap() - pl_full_prob(&r).unwrap()).abs() < 1e-15);
        assert!(matches!(korder_prob(&r, 0), Err(Error::Domain(_))));
        assert!(matches!(korder_prob(&r, 5), Err(Error::Domain(_))));
    }

    #[test]
    fn bruteforce_examples() {
        let bf = korder_prob_bruteforce(&[2.0, 1.0, 0.0, 0.0], 2).unwrap();
        assert!((bf - 2.0 * PL_2100).abs() < 1e-12);
        let r = [0.1, 0.9, -0.4];
        assert!((korder_prob_bruteforce(&r, 3).unwrap() - pl_full_prob(&r).unwrap()).abs() < 1e-15);
        assert!((korder_prob_bruteforce(&[1.0; 4], 1).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn bruteforce_refuses_long_tails() {
        let r = vec![0.0; 10];
        assert!(matches!(korder_prob_bruteforce(&r, 1), Err(Error::Resource(_))));
        assert!(korder_prob_bruteforce(&r, 2).is_ok());
    }

    #[test]
    fn ladder_of_special_cases() {
        let r = [0.4, -0.3, 1.1, 0.0, -2.0];
        let k1 = korder_prob(&r, 1).unwrap();
        assert!((k1 - top1_vs_rest_prob(&r).unwrap()).abs() < 1e-15);
        let pair = [0.9, -0.6];
        assert!((korder_prob(&pair, 1).unwrap() - bt_prob(0.9, -0.6)).abs() < 1e-15);
        assert!((korder_prob(&r, 5).unwrap() - korder_prob(&r, 4).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn full_orderings_sum_to_one() {
        for m in 2..=5 {
            let r: Vec<f64> = (0..m).map(|i| (i as f64 * 0.77).sin() * 2.0).collect();
            let total: f64 = (0..m)
                .permutations(m)
                .map(|p| {
                    let rr: Vec<f64> = p.iter().map(|&i| r[i]).collect();
                    pl_full_prob(&rr).unwrap()
                })
                .sum();
            assert!((total - 1.0).abs() <= 1e-9, "M={m}: {total}");
        }
    }

    proptest! {
        #[test]
        fn shift_invariance(r in proptest::collection::vec(-5.0f64..5.0, 2..9), c in -50.0f64..50.0, kf in 0.0f64..1.0) {
            let k = 1 + ((r.len() - 1) as f64 * kf) as usize;
            let shifted: Vec<f64> = r.iter().map(|x| x + c).collect();
            let a = korder_prob(&r, k).unwrap();
            let b = korder_prob(&shifted, k).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
        }

        #[test]
        fn closed_form_matches_enumeration(r in proptest::collection::vec(-3.0f64..3.0, 2..7), kf in 0.0f64..1.0) {
            let k = 1 + ((r.len() - 1) as f64 * kf) as usize;
            let a = korder_prob(&r, k).unwrap();
            let b = korder_prob_bruteforce(&r, k).unwrap();
            prop_assert!((a - b).abs() <= 1e-10);
        }
    }
}
