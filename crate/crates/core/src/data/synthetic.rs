use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::split_sizes;
use crate::error::{Error, Result};
use crate::seed::Seed;
use crate::theory::GroundTruthPL;
use crate::types::{Dataset, RankingInstance, Split};

/// Standard-normal 0.5 / 0.75 / 0.9 quantiles.
const DEFAULT_CUT_Z: [f64; 3] = [0.0, 0.674_489_750_196_081_7, 1.281_551_565_544_600_4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_queries: usize,
    pub m_candidates: usize,
    /// Standard deviation of the ground-truth scores.
    pub score_scale: f64,
    /// Score cutpoints for grades 1, 2, 3. Defaults to the 0.5/0.75/0.9
    /// quantiles of the score distribution.
    pub label_thresholds: Option<[f64; 3]>,
    /// Noise added to scores to form the reference logits.
    pub sigma_ref: f64,
    /// Catalog size; each query draws its candidates from it without replacement.
    pub n_items: usize,
    /// Fraction of score variance explained by a per-item effect shared across
    /// queries. Zero makes every query independent.
    pub item_share: f64,
    pub seed: Seed,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_queries: 500,
            m_candidates: 20,
            score_scale: 1.0,
            label_thresholds: None,
            sigma_ref: 0.5,
            n_items: 200,
            item_share: 0.5,
            seed: Seed(0),
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_queries == 0 {
            return Err(Error::config("n_queries must be at least 1"));
        }
        if self.m_candidates < 2 {
            return Err(Error::config("m_candidates must be at least 2"));
        }
        if self.n_items < self.m_candidates {
            return Err(Error::config(format!(
                "catalog of {} items cannot fill {} candidates",
                self.n_items, self.m_candidates
            )));
        }
        if !(self.score_scale >= 0.0 && self.score_scale.is_finite()) {
            return Err(Error::config("score_scale must be a non-negative finite number"));
        }
        if !(self.sigma_ref >= 0.0 && self.sigma_ref.is_finite()) {
            return Err(Error::config("sigma_ref must be a non-negative finite number"));
        }
        if !(0.0..=1.0).contains(&self.item_share) {
            return Err(Error::config("item_share must lie in [0, 1]"));
        }
        if let Some(t) = self.label_thresholds {
            if !(t[0] < t[1] && t[1] < t[2]) {
                return Err(Error::config("label thresholds must be strictly increasing"));
            }
        }
        Ok(())
    }

    pub fn cutpoints(&self) -> [f64; 3] {
        self.label_thresholds
            .unwrap_or(DEFAULT_CUT_Z.map(|z| z * self.score_scale))
    }
}

/// Grade = number of cutpoints the score strictly exceeds.
pub fn grade(score: f64, cutpoints: &[f64; 3]) -> u8 {
    cutpoints.iter().filter(|&&c| score > c).count() as u8
}

/// Generates queries with Plackett-Luce ground-truth scores, graded labels and
/// noisy reference logits. Splits are assigned 8:1:1 in query order.
///
/// Scores are `scale·(√ρ·q_item + √(1-ρ)·ε)` with standard-normal item effects
/// `q_item` and per-query noise `ε`, so each score is marginally
/// `Normal(0, scale²)`.
pub fn gen_synthetic(config: &SyntheticConfig) -> Result<Dataset> {
    config.validate()?;
    let mut item_rng = config.seed.rng(0);
    let item_effect: Vec<f64> = (0..config.n_items)
        .map(|_| item_rng.sample(StandardNormal))
        .collect();
    let cut = config.cutpoints();
    let (n_train, n_valid, _) = split_sizes(config.n_queries);
    let w_item = config.item_share.sqrt();
    let w_query = (1.0 - config.item_share).sqrt();
    let ref_noise = Normal::new(0.0, config.sigma_ref).expect("sigma_ref validated");

    let instances = (0..config.n_queries)
        .into_par_iter()
        .map(|q| {
            let mut rng = config.seed.rng(q as u64 + 1);
            let items = index::sample(&mut rng, config.n_items, config.m_candidates).into_vec();
            let scores: Vec<f64> = items
                .iter()
                .map(|&it| {
                    let eps: f64 = rng.sample(StandardNormal);
                    config.score_scale * (w_item * item_effect[it] + w_query * eps)
                })
                .collect();
            let ref_logits: Vec<f64> = scores.iter().map(|s| s + ref_noise.sample(&mut rng)).collect();
            let split = if q < n_train {
                Split::Train
            } else if q < n_train + n_valid {
                Split::Valid
            } else {
                Split::Test
            };
            let mut inst = RankingInstance::new(
                format!("q{q:05}"),
                items.iter().map(|it| format!("item{it:05}")).collect(),
                scores.iter().map(|&s| grade(s, &cut)).collect(),
                split,
            );
            inst.ref_logits = Some(ref_logits);
            inst.scores = Some(scores);
            inst
        })
        .collect();
    Ok(Dataset::new(instances))
}

pub fn ground_truth(instance: &RankingInstance) -> Option<GroundTruthPL> {
    instance.scores.clone().map(GroundTruthPL::new)
}

/// Sequential Plackett-Luce sampling without replacement.
pub fn sample_pl_ranking(scores: &GroundTruthPL, seed: Seed) -> Vec<usize> {
    sample_pl_ranking_with(scores, &mut seed.rng(0))
}

pub fn sample_pl_ranking_with<R: Rng>(scores: &GroundTruthPL, rng: &mut R) -> Vec<usize> {
    let mut remaining: Vec<usize> = (0..scores.scores.len()).collect();
    let mut out = Vec::with_capacity(remaining.len());
    while remaining.len() > 1 {
        let max = remaining
            .iter()
            .map(|&i| scores.scores[i])
            .fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = remaining.iter().map(|&i| (scores.scores[i] - max).exp()).collect();
        let total: f64 = weights.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut pick = remaining.len() - 1;
        for (pos, w) in weights.iter().enumerate() {
            if u < *w {
                pick = pos;
                break;
            }
            u -= w;
        }
        out.push(remaining.remove(pick));
    }
    out.extend(remaining);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_scale_gives_flat_labels() {
        let ds = gen_synthetic(&SyntheticConfig {
            n_queries: 5,
            score_scale: 0.0,
            ..Default::default()
        })
        .unwrap();
        for inst in &ds.instances {
            assert!(inst.labels.iter().all(|&l| l == inst.labels[0]));
            let a = crate::theory::alpha_from_scores(&ground_truth(inst).unwrap()).unwrap();
            let m = a.len();
            for (i, x) in a.alphas().iter().enumerate() {
                assert!((x - 1.0 / (m - i) as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn deterministic_and_valid() {
        let cfg = SyntheticConfig { n_queries: 30, ..Default::default() };
        let a = gen_synthetic(&cfg).unwrap();
        assert_eq!(a, gen_synthetic(&cfg).unwrap());
        for inst in &a.instances {
            inst.validate().unwrap();
            assert_eq!(inst.len(), 20);
        }
        let other = gen_synthetic(&SyntheticConfig { seed: Seed(1), ..cfg }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn hundred_queries_split_80_10_10() {
        let ds = gen_synthetic(&SyntheticConfig { n_queries: 100, ..Default::default() }).unwrap();
        assert_eq!(ds.split_counts(), [80, 10, 10]);
    }

    #[test]
    fn config_checks() {
        assert!(SyntheticConfig { label_thresholds: Some([0.0, 0.0, 1.0]), ..Default::default() }
            .validate()
            .is_err());
        assert!(SyntheticConfig { n_items: 5, ..Default::default() }.validate().is_err());
        assert!(SyntheticConfig { m_candidates: 1, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn grades_follow_cutpoints() {
        let c = [0.0, 1.0, 2.0];
        assert_eq!(grade(-0.5, &c), 0);
        assert_eq!(grade(0.0, &c), 0);
        assert_eq!(grade(0.5, &c), 1);
        assert_eq!(grade(2.5, &c), 3);
    }

    #[test]
    fn pl_sample_is_permutation_and_saturates() {
        let s = GroundTruthPL::new(vec![0.1, 500.0, -2.0, 0.0]);
        for seed in 0..20 {
            let p = sample_pl_ranking(&s, Seed(seed));
            assert_eq!(p[0], 1);
            let mut q = p.clone();
            q.sort_unstable();
            assert_eq!(q, vec![0, 1, 2, 3]);
        }
        assert_eq!(sample_pl_ranking(&s, Seed(3)), sample_pl_ranking(&s, Seed(3)));
    }
}
