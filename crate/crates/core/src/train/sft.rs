//! Supervised fine-tuning of the reference policy on top-labeled candidates.

use serde::{Deserialize, Serialize};

use super::params::{ParamSharing, TiedParams};
use crate::error::{Error, Result};
use crate::numeric::log_softmax;
use crate::policy::PolicyTable;
use crate::types::{Dataset, Split};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SftInit {
    /// Start from the dataset's reference logits (zero where absent).
    #[default]
    RefLogits,
    Zeros,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SftConfig {
    /// Full-batch gradient-ascent steps.
    pub epochs: usize,
    pub lr: f64,
    pub param_sharing: ParamSharing,
    pub init: SftInit,
}

impl Default for SftConfig {
    fn default() -> Self {
        SftConfig {
            epochs: 20,
            lr: 0.5,
            param_sharing: ParamSharing::Item,
            init: SftInit::RefLogits,
        }
    }
}

impl SftConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::config("sft lr must be a non-negative finite number"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SftOutcome {
    pub policy: PolicyTable,
    /// Mean negative log-likelihood of the targets before each epoch and after the last.
    pub losses: Vec<f64>,
}

/// Maximizes the mean log-probability of each training instance's
/// top-labeled candidate by full-batch gradient ascent. The returned table
/// covers every instance of the dataset.
pub fn sft(dataset: &Dataset, config: &SftConfig) -> Result<SftOutcome> {
    config.validate()?;
    let init = match config.init {
        SftInit::RefLogits => PolicyTable::from_ref_logits(dataset),
        SftInit::Zeros => PolicyTable::uniform(dataset),
    };
    let mut params = TiedParams::new(dataset, &init, config.param_sharing)?;
    let train: Vec<(usize, usize)> = dataset
        .instances
        .iter()
        .enumerate()
        .filter(|(_, i)| i.split == Split::Train)
        .map(|(n, i)| (n, i.top_labeled()))
        .collect();
    let mut losses = Vec::with_capacity(config.epochs + 1);
    if train.is_empty() {
        return Ok(SftOutcome { policy: params.to_table(), losses });
    }
    let scale = 1.0 / train.len() as f64;
    let mut grad = vec![0.0; params.n_params()];
    for epoch in 0..=config.epochs {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut nll = 0.0;
        for &(n, target) in &train {
            let lp = log_softmax(&params.row(n));
            nll -= lp[target];
            // ∂(-log p_t)/∂u = p - e_t
            let mut g: Vec<f64> = lp.iter().map(|l| l.exp()).collect();
            g[target] -= 1.0;
            params.scatter(n, &g, scale, &mut grad);
        }
        losses.push(nll * scale);
        if epoch == config.epochs {
            break;
        }
        for (t, g) in params.theta.iter_mut().zip(&grad) {
            *t -= config.lr * g;
        }
    }
    Ok(SftOutcome { policy: params.to_table(), losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic::{gen_synthetic, SyntheticConfig};
    use crate::eval::rank_by_scores;

    fn tiny() -> Dataset {
        gen_synthetic(&SyntheticConfig {
            n_queries: 40,
            m_candidates: 6,
            n_items: 30,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn converged_target_is_argmax() {
        let ds = tiny();
        let cfg = SftConfig {
            epochs: 300,
            lr: 5.0,
            param_sharing: ParamSharing::Instance,
            init: SftInit::Zeros,
        };
        let out = sft(&ds, &cfg).unwrap();
        let train: Vec<_> = ds.split(Split::Train).collect();
        let hits = train
            .iter()
            .filter(|i| rank_by_scores(out.policy.params(&i.instance_id).unwrap())[0] == i.top_labeled())
            .count();
        assert!(hits as f64 >= 0.99 * train.len() as f64);
    }

    #[test]
    fn zero_lr_leaves_parameters() {
        let ds = tiny();
        let out = sft(&ds, &SftConfig { lr: 0.0, ..Default::default() }).unwrap();
        assert_eq!(out.policy, PolicyTable::from_ref_logits(&ds));
    }

    #[test]
    fn loss_is_monotone() {
        let ds = tiny();
        for sharing in [ParamSharing::Item, ParamSharing::Instance] {
            let out = sft(&ds, &SftConfig { epochs: 50, lr: 0.5, param_sharing: sharing, init: SftInit::Zeros }).unwrap();
            for w in out.losses.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{sharing}: {w:?}");
            }
        }
    }
}
