//! Query-adaptive K from reference logits, label re-ranking of the top-K set,
//! and logit-swap noise for robustness studies.

use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::Seed;
use crate::types::{Dataset, PreferenceSample, RankingInstance, Split};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TauMode {
    /// `tau_value` is the logit threshold itself.
    Absolute,
    /// `tau_value` is a quantile of all training-split reference logits.
    Quantile,
}

impl std::str::FromStr for TauMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "absolute" => Ok(TauMode::Absolute),
            "quantile" => Ok(TauMode::Quantile),
            other => Err(Error::config(format!("unknown tau mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptiveKConfig {
    pub tau_mode: TauMode,
    pub tau_value: f64,
    pub k_min: usize,
    /// Upper clamp; `None` means the instance's candidate count.
    pub k_max: Option<usize>,
    /// Bypass the threshold and use the same K for every instance.
    pub fixed_k: Option<usize>,
}

impl Default for AdaptiveKConfig {
    fn default() -> Self {
        AdaptiveKConfig {
            tau_mode: TauMode::Quantile,
            tau_value: 0.9,
            k_min: 1,
            k_max: None,
            fixed_k: None,
        }
    }
}

impl AdaptiveKConfig {
    pub fn absolute(tau: f64) -> Self {
        AdaptiveKConfig {
            tau_mode: TauMode::Absolute,
            tau_value: tau,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau_mode == TauMode::Quantile && !(self.tau_value > 0.0 && self.tau_value < 1.0) {
            return Err(Error::config(format!(
                "quantile tau must lie strictly inside (0, 1), got {}",
                self.tau_value
            )));
        }
        if !self.tau_value.is_finite() {
            return Err(Error::config("tau must be finite"));
        }
        if self.k_min == 0 {
            return Err(Error::config("k_min must be at least 1"));
        }
        if let Some(k_max) = self.k_max {
            if k_max < self.k_min {
                return Err(Error::config(format!("k_max {k_max} < k_min {}", self.k_min)));
            }
        }
        if self.fixed_k == Some(0) {
            return Err(Error::config("fixed K must be at least 1"));
        }
        Ok(())
    }

    /// Freezes the threshold. In quantile mode it is computed once over every
    /// reference logit of the training split.
    pub fn selector(&self, dataset: &Dataset) -> Result<KSelector> {
        self.validate()?;
        let tau = match self.tau_mode {
            TauMode::Absolute => self.tau_value,
            TauMode::Quantile => {
                let mut pool: Vec<f64> = dataset
                    .split(Split::Train)
                    .filter_map(|i| i.ref_logits.as_deref())
                    .flatten()
                    .copied()
                    .collect();
                if pool.is_empty() {
                    return Err(Error::data(
                        "quantile threshold needs reference logits on the training split",
                    ));
                }
                quantile(&mut pool, self.tau_value)
            }
        };
        Ok(KSelector {
            tau,
            k_min: self.k_min,
            k_max: self.k_max,
            fixed_k: self.fixed_k,
        })
    }
}

/// Linear-interpolation quantile.
fn quantile(values: &mut [f64], q: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let h = (values.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    values[lo] + (h - lo as f64) * (values[hi] - values[lo])
}

/// A frozen threshold and clamp range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KSelector {
    pub tau: f64,
    pub k_min: usize,
    pub k_max: Option<usize>,
    pub fixed_k: Option<usize>,
}

impl KSelector {
    pub fn absolute(tau: f64) -> Self {
        KSelector {
            tau,
            k_min: 1,
            k_max: None,
            fixed_k: None,
        }
    }

    pub fn fixed(k: usize) -> Self {
        KSelector {
            tau: f64::INFINITY,
            k_min: 1,
            k_max: None,
            fixed_k: Some(k),
        }
    }
}

/// Number of logits strictly above the threshold, clamped into `[k_min, k_max]`
/// (and never above the candidate count).
pub fn compute_k(ref_logits: &[f64], selector: &KSelector) -> usize {
    let m = ref_logits.len();
    let raw = match selector.fixed_k {
        Some(k) => k,
        None => ref_logits.iter().filter(|&&l| l > selector.tau).count(),
    };
    let hi = selector.k_max.unwrap_or(m).min(m);
    let lo = selector.k_min.min(hi);
    raw.clamp(lo, hi)
}

/// Label-descending, then logit-descending, then index-ascending.
fn relevance_order<'a>(labels: &'a [u8], logits: &'a [f64]) -> impl Fn(&usize, &usize) -> Ordering + 'a {
    move |&a, &b| {
        labels[b]
            .cmp(&labels[a])
            .then_with(|| logits[b].total_cmp(&logits[a]))
            .then_with(|| a.cmp(&b))
    }
}

/// Takes the K highest-logit candidates and re-ranks them by ground-truth label.
///
/// The tail is stored in the same label/logit/index order so that full-order
/// objectives see a deterministic ranking.
pub fn build_preference_sample(
    instance: &RankingInstance,
    selector: &KSelector,
) -> Result<PreferenceSample> {
    let logits = instance.ref_logits.as_deref().ok_or_else(|| {
        Error::data(format!(
            "instance `{}` has no reference logits",
            instance.instance_id
        ))
    })?;
    build_preference_sample_from(instance, logits, selector)
}

/// As [`build_preference_sample`] with explicit logits (e.g. noise-injected ones).
pub fn build_preference_sample_from(
    instance: &RankingInstance,
    logits: &[f64],
    selector: &KSelector,
) -> Result<PreferenceSample> {
    let m = instance.len();
    if logits.len() != m {
        return Err(Error::data(format!(
            "instance `{}`: {} logits for {m} candidates",
            instance.instance_id,
            logits.len()
        )));
    }
    let k = compute_k(logits, selector);
    let mut by_logit: Vec<usize> = (0..m).collect();
    by_logit.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then_with(|| a.cmp(&b)));
    let (head, tail) = by_logit.split_at(k);
    let order = relevance_order(&instance.labels, logits);
    let mut head = head.to_vec();
    head.sort_by(&order);
    let mut tail = tail.to_vec();
    tail.sort_by(&order);
    PreferenceSample::new(instance.instance_id.clone(), head, tail)
}

/// Applies `n_swaps` uniformly random transpositions of two distinct positions.
pub fn inject_logit_noise(ref_logits: &[f64], n_swaps: usize, seed: Seed) -> Vec<f64> {
    let mut out = ref_logits.to_vec();
    let m = out.len();
    if m < 2 {
        return out;
    }
    let mut rng = seed.rng(0);
    for _ in 0..n_swaps {
        let i = rng.random_range(0..m);
        let mut j = rng.random_range(0..m - 1);
        if j >= i {
            j += 1;
        }
        out.swap(i, j);
    }
    out
}

/// Derives one preference sample per instance of `split` (all splits when `None`),
/// optionally swapping logits first. Each instance gets its own noise stream.
pub fn derive_samples(
    dataset: &Dataset,
    selector: &KSelector,
    n_swaps: usize,
    seed: Seed,
    split: Option<Split>,
) -> Result<Vec<PreferenceSample>> {
    dataset
        .instances
        .iter()
        .enumerate()
        .filter(|(_, inst)| split.is_none_or(|s| inst.split == s))
        .map(|(idx, inst)| {
            let logits = inst.ref_logits.as_deref().ok_or_else(|| {
                Error::data(format!("instance `{}` has no reference logits", inst.instance_id))
            })?;
            if n_swaps == 0 {
                build_preference_sample_from(inst, logits, selector)
            } else {
                let noisy = inject_logit_noise(logits, n_swaps, seed.derive(idx as u64));
                build_preference_sample_from(inst, &noisy, selector)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn inst(logits: Vec<f64>, labels: Vec<u8>) -> RankingInstance {
        let m = logits.len();
        let mut i = RankingInstance::new(
            "q",
            (0..m).map(|c| format!("c{c}")).collect(),
            labels,
            Split::Train,
        );
        i.ref_logits = Some(logits);
        i
    }

    #[test]
    fn compute_k_examples() {
        let s = KSelector::absolute(24.0);
        assert_eq!(compute_k(&[30.0, 25.5, 24.1, 12.0], &s), 3);
        assert_eq!(compute_k(&[1.0, 2.0, 3.0], &s), 1);
        assert_eq!(compute_k(&[25.1, 24.3, 23.0, 10.2], &s), 2);
        let clamp = KSelector { k_max: Some(2), ..s };
        assert_eq!(compute_k(&[30.0, 25.5, 24.1, 12.0], &clamp), 2);
        assert_eq!(compute_k(&[0.0, 0.0], &KSelector::fixed(10)), 2);
        // strictly greater
        assert_eq!(compute_k(&[24.0, 30.0], &s), 1);
    }

    #[test]
    fn head_is_label_reranked() {
        // candidates 3, 1, 7 are the top-3 by logit with labels 0, 2, 1
        let mut logits = vec![0.0; 8];
        let mut labels = vec![0u8; 8];
        logits[3] = 30.0;
        logits[1] = 25.0;
        logits[7] = 24.5;
        labels[1] = 2;
        labels[7] = 1;
        let s = build_preference_sample(&inst(logits, labels), &KSelector::absolute(24.0)).unwrap();
        assert_eq!(s.head, vec![1, 7, 3]);
        assert_eq!(s.kappa, 3);
        assert_eq!(s.tail.len(), 5);
    }

    #[test]
    fn single_relevant_item_leads() {
        let s = build_preference_sample(
            &inst(vec![9.0, 8.0, 7.0, 1.0], vec![0, 0, 1, 0]),
            &KSelector::absolute(5.0),
        )
        .unwrap();
        assert_eq!(s.head[0], 2);
    }

    #[test]
    fn equal_labels_keep_logit_order() {
        let s = build_preference_sample(
            &inst(vec![1.0, 9.0, 7.0, 8.0], vec![2, 2, 2, 2]),
            &KSelector::absolute(5.0),
        )
        .unwrap();
        assert_eq!(s.head, vec![1, 3, 2]);
    }

    #[test]
    fn missing_logits_is_a_data_error() {
        let mut i = inst(vec![0.0, 1.0], vec![0, 1]);
        i.ref_logits = None;
        assert!(matches!(
            build_preference_sample(&i, &KSelector::absolute(0.0)),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn noise_examples() {
        let l = vec![3.0, 1.0, 4.0, 1.5, 9.0];
        assert_eq!(inject_logit_noise(&l, 0, Seed(1)), l);
        assert_eq!(inject_logit_noise(&l, 3, Seed(1)), inject_logit_noise(&l, 3, Seed(1)));
        let mut a = inject_logit_noise(&l, 4, Seed(2));
        let mut b = l.clone();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        assert_eq!(a, b);
    }

    #[test]
    fn quantile_selector_uses_train_split_only() {
        let mut a = inst(vec![0.0, 1.0, 2.0, 3.0, 4.0], vec![0; 5]);
        a.instance_id = "a".into();
        let mut b = inst(vec![100.0, 200.0], vec![0; 2]);
        b.instance_id = "b".into();
        b.split = Split::Test;
        let ds = Dataset::new(vec![a, b]);
        let cfg = AdaptiveKConfig { tau_value: 0.5, ..Default::default() };
        assert_eq!(cfg.selector(&ds).unwrap().tau, 2.0);
        let bad = AdaptiveKConfig { tau_value: 1.0, ..Default::default() };
        assert!(bad.selector(&ds).is_err());
    }

    proptest! {
        #[test]
        fn k_is_a_count(l in proptest::collection::vec(-5.0f64..5.0, 2..20), swaps in 0usize..6, seed in any::<u64>()) {
            let s = KSelector::absolute(0.5);
            let noisy = inject_logit_noise(&l, swaps, Seed(seed));
            prop_assert_eq!(compute_k(&l, &s), compute_k(&noisy, &s));
        }

        #[test]
        fn head_holds_top_logits(l in proptest::collection::vec(-5.0f64..5.0, 2..15), labels in proptest::collection::vec(0u8..4, 15)) {
            let m = l.len();
            let i = inst(l.clone(), labels[..m].to_vec());
            let s = build_preference_sample(&i, &KSelector::absolute(0.0)).unwrap();
            let min_head = s.head.iter().map(|&h| l[h]).fold(f64::INFINITY, f64::min);
            prop_assert!(s.tail.iter().all(|&t| l[t] <= min_head));
            prop_assert!(s.head.windows(2).all(|w| i.labels[w[0]] >= i.labels[w[1]]));
        }
    }
}
