//! Preference-alignment objectives with exact gradients.
//!
//! Every loss is a per-sample minimization objective. Gradients are returned
//! with respect to the pre-softmax parameters `u` of the trained policy and are
//! indexed by candidate position in the instance. Since all losses depend only
//! on differences of log-probabilities, the gradients always sum to zero.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{log_add_exp, log_sigmoid, log_softmax, sigmoid};
use crate::policy::PolicyTable;
use crate::types::{PreferenceSample, RankingInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Kto,
    Dpo,
    Simpo,
    Cdpo,
    Sdpo,
    DpoPl,
    KpoCut,
    Kpo,
}

impl LossKind {
    pub const ALL: [LossKind; 8] = [
        LossKind::Kto,
        LossKind::Dpo,
        LossKind::Simpo,
        LossKind::Cdpo,
        LossKind::Sdpo,
        LossKind::DpoPl,
        LossKind::KpoCut,
        LossKind::Kpo,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::Kto => "kto",
            LossKind::Dpo => "dpo",
            LossKind::Simpo => "simpo",
            LossKind::Cdpo => "cdpo",
            LossKind::Sdpo => "sdpo",
            LossKind::DpoPl => "dpo_pl",
            LossKind::KpoCut => "kpo_cut",
            LossKind::Kpo => "kpo",
        }
    }

    /// Losses trained on a winner/loser pair drawn from the sample.
    pub fn is_pairwise(self) -> bool {
        matches!(self, LossKind::Dpo | LossKind::Simpo | LossKind::Cdpo | LossKind::Kto)
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown loss kind `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KtoZ0Mode {
    #[default]
    Zero,
    BatchEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub beta: f64,
    /// Label-flip rate of conservative DPO.
    pub epsilon: f64,
    /// SimPO target margin.
    pub gamma: f64,
    pub lambda_desirable: f64,
    pub lambda_undesirable: f64,
    pub lambda_y: f64,
    pub kto_z0_mode: KtoZ0Mode,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            beta: 1.0,
            epsilon: 0.1,
            gamma: 0.0,
            lambda_desirable: 1.0,
            lambda_undesirable: 1.0,
            lambda_y: 1.0,
            kto_z0_mode: KtoZ0Mode::Zero,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::config(format!("beta must be positive, got {}", self.beta)));
        }
        if !(0.0..0.5).contains(&self.epsilon) {
            return Err(Error::config(format!("epsilon must lie in [0, 0.5), got {}", self.epsilon)));
        }
        if self.gamma < 0.0 {
            return Err(Error::config("gamma must be non-negative"));
        }
        if [self.lambda_desirable, self.lambda_undesirable, self.lambda_y]
            .iter()
            .any(|&l| l <= 0.0)
        {
            return Err(Error::config("KTO lambdas must be positive"));
        }
        Ok(())
    }
}

/// Per-candidate rewards `β·log(π_θ/π_ref)` of one instance, in candidate order.
///
/// The partition term `β·log Z(x)` is not represented: every objective here
/// depends on reward differences only. The policy log-probabilities are kept
/// alongside because the gradient with respect to `u` passes through the
/// policy softmax (and SimPO uses them directly).
#[derive(Debug, Clone, PartialEq)]
pub struct RewardVector {
    pub rewards: Vec<f64>,
    pub beta: f64,
    pub policy_log_probs: Vec<f64>,
}

impl RewardVector {
    /// Rewards realized by a policy with parameters `u = r/β` against a uniform
    /// reference; equal to `rewards` up to a per-instance constant.
    pub fn from_rewards(rewards: Vec<f64>, beta: f64) -> Self {
        let scaled: Vec<f64> = rewards.iter().map(|r| r / beta).collect();
        RewardVector {
            policy_log_probs: log_softmax(&scaled),
            rewards,
            beta,
        }
    }

    pub fn from_log_probs(policy_log_probs: Vec<f64>, ref_log_probs: &[f64], beta: f64) -> Self {
        let rewards = policy_log_probs
            .iter()
            .zip(ref_log_probs)
            .map(|(p, q)| beta * (p - q))
            .collect();
        RewardVector {
            rewards,
            beta,
            policy_log_probs,
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Log-ratio `log π_θ/π_ref` without the β scale.
    pub fn log_ratio(&self, idx: usize) -> f64 {
        self.rewards[idx] / self.beta
    }
}

pub fn compute_rewards(
    policy: &PolicyTable,
    reference: &PolicyTable,
    instance: &RankingInstance,
    beta: f64,
) -> Result<RewardVector> {
    let pol = policy.log_probs(instance)?;
    let reff = reference.log_probs(instance)?;
    Ok(RewardVector::from_log_probs(pol, &reff, beta))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossValueGrad {
    pub value: f64,
    /// `∂loss/∂u_i` for each candidate `i` of the instance.
    pub grad: Vec<f64>,
}

/// Maps `∂L/∂log π_θ` through the softmax Jacobian to `∂L/∂u`.
fn chain_log_probs(d_logp: Vec<f64>, policy_log_probs: &[f64]) -> Vec<f64> {
    let total: f64 = d_logp.iter().sum();
    d_logp
        .iter()
        .zip(policy_log_probs)
        .map(|(g, lp)| g - lp.exp() * total)
        .collect()
}

/// A loss value with the intermediates its gradient needs.
///
/// Splitting evaluation from differentiation lets the trainer time the loss
/// and its backward pass separately.
#[derive(Debug, Clone, PartialEq)]
pub struct LossForward {
    pub value: f64,
    tape: Tape,
}

#[derive(Debug, Clone, PartialEq)]
enum Tape {
    /// Positions in `order`, with `inner[i] = suffix[i] - r[order[i]]` and
    /// `suffix[i] = log Σ_{p>i} exp(r[order[p]])` for each term `i`.
    Listwise {
        order: Vec<usize>,
        inner: Vec<f64>,
        suffix: Vec<f64>,
    },
    Margin {
        winner: usize,
        loser: usize,
        margin: f64,
        eps: f64,
    },
    Simpo {
        winner: usize,
        loser: usize,
        z: f64,
        sw: f64,
        sl: f64,
    },
    Kto {
        points: Vec<KtoPoint>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct KtoPoint {
    candidate: usize,
    /// `λ·β` with the sign of `∂v/∂r_θ`.
    slope: f64,
    s: f64,
    weight: f64,
}

impl LossForward {
    /// `∂loss/∂u` for the rewards the forward pass was computed on.
    pub fn backward(&self, rewards: &RewardVector) -> Vec<f64> {
        let m = rewards.len();
        let (d, wrt_rewards) = match &self.tape {
            Tape::Listwise { order, inner, suffix } => {
                (listwise_backward(&rewards.rewards, order, inner, suffix), true)
            }
            Tape::Margin { winner, loser, margin, eps } => {
                let dm = -(1.0 - eps) * sigmoid(-margin) + eps * sigmoid(*margin);
                let mut d = vec![0.0; m];
                d[*winner] = dm;
                d[*loser] = -dm;
                (d, true)
            }
            Tape::Simpo { winner, loser, z, sw, sl } => {
                let dz = -sigmoid(-z);
                let mut d = vec![0.0; m];
                d[*winner] = dz * sw;
                d[*loser] = -dz * sl;
                (d, false)
            }
            Tape::Kto { points } => {
                let mut d = vec![0.0; m];
                for p in points {
                    // loss = λ_y - v, r_θ = log π_θ - log π_ref
                    d[p.candidate] -= p.weight * p.slope * p.s * (1.0 - p.s);
                }
                (d, false)
            }
        };
        let d_logp = if wrt_rewards {
            d.into_iter().map(|g| g * rewards.beta).collect()
        } else {
            d
        };
        chain_log_probs(d_logp, &rewards.policy_log_probs)
    }

    pub fn value_grad(self, rewards: &RewardVector) -> LossValueGrad {
        let grad = self.backward(rewards);
        LossValueGrad {
            value: self.value,
            grad,
        }
    }
}

fn check_alignment(rewards: &RewardVector, sample: &PreferenceSample) -> Result<()> {
    sample.validate()?;
    if sample.m() != rewards.len() {
        return Err(Error::domain(format!(
            "sample `{}` covers {} candidates but {} rewards were given",
            sample.instance_id,
            sample.m(),
            rewards.len()
        )));
    }
    Ok(())
}

/// `-Σ_{i<terms} log σ(-log Σ_{i<p<len} exp(r_p - r_i))` over the positions of
/// `order`, in one backward sweep of suffix log-sum-exps.
fn listwise_forward(r: &[f64], order: &[usize], terms: usize) -> LossForward {
    let len = order.len();
    let terms = terms.min(len.saturating_sub(1));
    let mut suffix = vec![0.0; terms];
    // streaming log-sum-exp: running max and the sum scaled by it
    let (mut max, mut sum) = (f64::NEG_INFINITY, 0.0);
    for p in (1..len).rev() {
        let v = r[order[p]];
        if v > max {
            sum = sum * (max - v).exp() + 1.0;
            max = v;
        } else {
            sum += (v - max).exp();
        }
        if p <= terms {
            suffix[p - 1] = max + sum.ln();
        }
    }
    let mut value = 0.0;
    let inner: Vec<f64> = (0..terms)
        .map(|i| {
            let x = suffix[i] - r[order[i]];
            value -= log_sigmoid(-x);
            x
        })
        .collect();
    LossForward {
        value,
        tape: Tape::Listwise {
            order: order.to_vec(),
            inner,
            suffix,
        },
    }
}

/// `∂/∂r` of the listwise loss, candidate-indexed.
///
/// Term `i` contributes `σ(inner_i)·exp(r_p - suffix_i)` to every later position
/// `p` and `-σ(inner_i)` to its own; the later-position sums are carried as a
/// running log-sum so the sweep stays linear in the list length.
fn listwise_backward(r: &[f64], order: &[usize], inner: &[f64], suffix: &[f64]) -> Vec<f64> {
    let mut d_r = vec![0.0; r.len()];
    let mut carry = f64::NEG_INFINITY;
    for p in 0..order.len() {
        if p > 0 {
            d_r[order[p]] += (r[order[p]] + carry).exp();
        }
        if p < inner.len() {
            d_r[order[p]] -= sigmoid(inner[p]);
            carry = log_add_exp(carry, log_sigmoid(inner[p]) - suffix[p]);
        }
    }
    d_r
}

fn kpo_forward(rewards: &RewardVector, sample: &PreferenceSample, k: usize) -> Result<LossForward> {
    check_alignment(rewards, sample)?;
    let m = sample.m();
    if k == 0 || k > m {
        return Err(Error::domain(format!("K = {k} outside 1..={m}")));
    }
    let order: Vec<usize> = sample.order().collect();
    Ok(listwise_forward(&rewards.rewards, &order, k))
}

/// K-order preference loss for a sample whose head length is its K.
pub fn kpo_loss(rewards: &RewardVector, sample: &PreferenceSample) -> Result<LossValueGrad> {
    kpo_loss_with_k(rewards, sample, sample.kappa)
}

/// K-order loss with `k` overriding the sample's own K. Positions past the
/// head follow the stored tail order.
pub fn kpo_loss_with_k(
    rewards: &RewardVector,
    sample: &PreferenceSample,
    k: usize,
) -> Result<LossValueGrad> {
    Ok(kpo_forward(rewards, sample, k)?.value_grad(rewards))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ListwiseKind {
    /// Single positive against all others (K forced to 1).
    Sdpo,
    /// Full order (K forced to M).
    DpoPl,
    /// Ordering within the head only; the tail is discarded.
    KpoCut,
}

fn listwise_baseline_forward(
    kind: ListwiseKind,
    rewards: &RewardVector,
    sample: &PreferenceSample,
) -> Result<LossForward> {
    check_alignment(rewards, sample)?;
    match kind {
        ListwiseKind::Sdpo => kpo_forward(rewards, sample, 1),
        ListwiseKind::DpoPl => kpo_forward(rewards, sample, sample.m()),
        ListwiseKind::KpoCut => {
            let k = sample.kappa;
            if k < 2 {
                return Err(Error::domain(format!(
                    "kpo_cut needs K >= 2 (sample `{}` has K = {k}): empty objective",
                    sample.instance_id
                )));
            }
            Ok(listwise_forward(&rewards.rewards, &sample.head, k - 1))
        }
    }
}

pub fn listwise_baseline_loss(
    kind: ListwiseKind,
    rewards: &RewardVector,
    sample: &PreferenceSample,
) -> Result<LossValueGrad> {
    Ok(listwise_baseline_forward(kind, rewards, sample)?.value_grad(rewards))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairwiseKind {
    Dpo,
    Simpo,
    Cdpo,
}

fn pairwise_forward(
    kind: PairwiseKind,
    rewards: &RewardVector,
    winner: usize,
    loser: usize,
    lengths: (f64, f64),
    config: &LossConfig,
) -> Result<LossForward> {
    let m = rewards.len();
    if winner >= m || loser >= m || winner == loser {
        return Err(Error::domain(format!(
            "winner {winner} and loser {loser} must be distinct candidates of 0..{m}"
        )));
    }
    Ok(match kind {
        PairwiseKind::Dpo | PairwiseKind::Cdpo => {
            let eps = if kind == PairwiseKind::Dpo { 0.0 } else { config.epsilon };
            let margin = rewards.rewards[winner] - rewards.rewards[loser];
            LossForward {
                value: -(1.0 - eps) * log_sigmoid(margin) - eps * log_sigmoid(-margin),
                tape: Tape::Margin { winner, loser, margin, eps },
            }
        }
        PairwiseKind::Simpo => {
            let lp = &rewards.policy_log_probs;
            let (sw, sl) = (config.beta / lengths.0, config.beta / lengths.1);
            let z = sw * lp[winner] - sl * lp[loser] - config.gamma;
            LossForward {
                value: -log_sigmoid(z),
                tape: Tape::Simpo { winner, loser, z, sw, sl },
            }
        }
    })
}

/// Pairwise objectives on a designated winner and loser.
///
/// `lengths` are the candidate lengths `|y_w|, |y_l|` used by SimPO.
pub fn pairwise_loss(
    kind: PairwiseKind,
    rewards: &RewardVector,
    winner: usize,
    loser: usize,
    lengths: (f64, f64),
    config: &LossConfig,
) -> Result<LossValueGrad> {
    Ok(pairwise_forward(kind, rewards, winner, loser, lengths, config)?.value_grad(rewards))
}

fn kto_point(
    rewards: &RewardVector,
    candidate: usize,
    desirable: bool,
    z0: f64,
    config: &LossConfig,
    weight: f64,
) -> Result<(f64, KtoPoint)> {
    let m = rewards.len();
    if candidate >= m {
        return Err(Error::domain(format!("candidate {candidate} outside 0..{m}")));
    }
    let beta = config.beta;
    let r_theta = rewards.log_ratio(candidate);
    let (lambda, s, slope) = if desirable {
        let s = sigmoid(beta * (r_theta - z0));
        (config.lambda_desirable, s, config.lambda_desirable * beta)
    } else {
        let s = sigmoid(beta * (z0 - r_theta));
        (config.lambda_undesirable, s, -config.lambda_undesirable * beta)
    };
    let value = config.lambda_y - lambda * s;
    Ok((value, KtoPoint { candidate, slope, s, weight }))
}

/// Point-wise KTO loss `λ_y - v(x, y)` for one tagged candidate.
///
/// `z0` is the reference point; it is treated as a constant (no gradient).
pub fn kto_loss(
    rewards: &RewardVector,
    candidate: usize,
    desirable: bool,
    z0: f64,
    config: &LossConfig,
) -> Result<LossValueGrad> {
    let (value, point) = kto_point(rewards, candidate, desirable, z0, config, 1.0)?;
    let fwd = LossForward {
        value,
        tape: Tape::Kto { points: vec![point] },
    };
    Ok(fwd.value_grad(rewards))
}

/// Batch estimate of the KTO reference point.
///
/// Each batch element `b` is paired with the candidate position designated
/// for element `b+1` (cyclically), giving mismatched `(x, y')` pairs; the
/// estimate is the mean log-ratio over those pairs, clamped at zero.
pub fn kto_z0(mode: KtoZ0Mode, batch: &[(&RewardVector, usize)]) -> Result<f64> {
    match mode {
        KtoZ0Mode::Zero => Ok(0.0),
        KtoZ0Mode::BatchEstimate => {
            if batch.len() < 2 {
                return Err(Error::config(
                    "KTO batch_estimate needs at least two samples per batch",
                ));
            }
            let n = batch.len();
            let mean = (0..n)
                .map(|b| {
                    let (rv, _) = batch[b];
                    let other = batch[(b + 1) % n].1 % rv.len();
                    rv.log_ratio(other)
                })
                .sum::<f64>()
                / n as f64;
            Ok(mean.max(0.0))
        }
    }
}

/// Inputs beyond the rewards that some objectives need.
#[derive(Debug, Clone, Copy)]
pub struct PairContext {
    /// Loser for pairwise objectives and the undesirable point for KTO.
    pub loser: usize,
    pub kto_z0: f64,
}

/// Evaluates any objective on one preference sample, keeping what its
/// gradient needs.
///
/// Pairwise objectives use `head[0]` as the winner and `ctx.loser` as the
/// loser; KTO averages the desirable winner and undesirable loser points.
/// `kpo_cut` on a K = 1 sample is an empty objective and yields `None`.
pub fn sample_forward(
    kind: LossKind,
    rewards: &RewardVector,
    sample: &PreferenceSample,
    instance: &RankingInstance,
    ctx: PairContext,
    config: &LossConfig,
) -> Result<Option<LossForward>> {
    let winner = sample.head[0];
    let lengths = (instance.length_of(winner), instance.length_of(ctx.loser));
    let pair = |k| pairwise_forward(k, rewards, winner, ctx.loser, lengths, config);
    let out = match kind {
        LossKind::Kpo => kpo_forward(rewards, sample, sample.kappa)?,
        LossKind::Sdpo => listwise_baseline_forward(ListwiseKind::Sdpo, rewards, sample)?,
        LossKind::DpoPl => listwise_baseline_forward(ListwiseKind::DpoPl, rewards, sample)?,
        LossKind::KpoCut => {
            if sample.kappa < 2 {
                return Ok(None);
            }
            listwise_baseline_forward(ListwiseKind::KpoCut, rewards, sample)?
        }
        LossKind::Dpo => pair(PairwiseKind::Dpo)?,
        LossKind::Cdpo => pair(PairwiseKind::Cdpo)?,
        LossKind::Simpo => pair(PairwiseKind::Simpo)?,
        LossKind::Kto => {
            let (good, p) = kto_point(rewards, winner, true, ctx.kto_z0, config, 0.5)?;
            let (bad, q) = kto_point(rewards, ctx.loser, false, ctx.kto_z0, config, 0.5)?;
            LossForward {
                value: 0.5 * (good + bad),
                tape: Tape::Kto { points: vec![p, q] },
            }
        }
    };
    Ok(Some(out))
}

/// [`sample_forward`] followed by its backward pass.
pub fn sample_objective(
    kind: LossKind,
    rewards: &RewardVector,
    sample: &PreferenceSample,
    instance: &RankingInstance,
    ctx: PairContext,
    config: &LossConfig,
) -> Result<Option<LossValueGrad>> {
    Ok(sample_forward(kind, rewards, sample, instance, ctx, config)?.map(|f| f.value_grad(rewards)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Split;
    use proptest::prelude::*;

    // Independent scalar evaluations of the closed forms.
    const KPO_K1: f64 = 0.407_605_964_444_380_3; // -log σ(-log(e^-1 + e^-2))
    const NEG_LOG_SIG_1: f64 = 0.313_261_687_518_222_86; // -log σ(1)
    const KPO_K2: f64 = KPO_K1 + NEG_LOG_SIG_1;
    const SIMPO_EX: f64 = 0.201_413_277_982_752_4; // -log σ(1.5)

    fn rv(r: &[f64]) -> RewardVector {
        RewardVector::from_rewards(r.to_vec(), 1.0)
    }

    fn ident(m: usize, k: usize) -> PreferenceSample {
        PreferenceSample::identity("q", m, k).unwrap()
    }

    #[test]
    fn reward_examples() {
        let inst = RankingInstance::new("q", vec!["a".into(), "b".into(), "c".into()], vec![0; 3], Split::Train);
        let mut p = PolicyTable::new();
        p.insert("q", vec![0.3, -1.0, 2.0]);
        let same = compute_rewards(&p, &p, &inst, 1.0).unwrap();
        assert!(same.rewards.iter().all(|&r| r == 0.0));

        // π_θ(a) = 0.5, π_ref(a) = 0.25
        let mut pol = PolicyTable::new();
        pol.insert("q", vec![2f64.ln(), 0.0, 0.0]);
        let mut reff = PolicyTable::new();
        reff.insert("q", vec![0.0, 2f64.ln(), 0.0]);
        let r = compute_rewards(&pol, &reff, &inst, 2.0).unwrap();
        assert!((r.rewards[0] - 2.0 * 2f64.ln()).abs() < 1e-12);
        let r1 = compute_rewards(&pol, &reff, &inst, 1.0).unwrap();
        for (a, b) in r.rewards.iter().zip(&r1.rewards) {
            assert!((a - 2.0 * b).abs() < 1e-12);
        }
    }

    #[test]
    fn kpo_examples() {
        let r = rv(&[1.0, 0.0, -1.0]);
        assert!((kpo_loss(&r, &ident(3, 1)).unwrap().value - KPO_K1).abs() < 1e-12);
        assert!((kpo_loss(&rv(&[0.0, 0.0]), &ident(2, 1)).unwrap().value - 2f64.ln()).abs() < 1e-15);
        assert!((kpo_loss(&r, &ident(3, 2)).unwrap().value - KPO_K2).abs() < 1e-12);
        assert!((kpo_loss(&r, &ident(3, 3)).unwrap().value - KPO_K2).abs() < 1e-12);
    }

    #[test]
    fn kpo_respects_sample_order() {
        // rewards in candidate order; head = [2, 0], tail = [1]
        let r = rv(&[0.0, -1.0, 1.0]);
        let s = PreferenceSample::new("q", vec![2, 0], vec![1]).unwrap();
        assert!((kpo_loss(&r, &s).unwrap().value - KPO_K2).abs() < 1e-12);
    }

    #[test]
    fn listwise_examples() {
        let r = rv(&[1.0, 0.0, -1.0]);
        let s = ident(3, 2);
        let sdpo = listwise_baseline_loss(ListwiseKind::Sdpo, &r, &s).unwrap().value;
        assert!((sdpo - KPO_K1).abs() < 1e-12);
        let pl = listwise_baseline_loss(ListwiseKind::DpoPl, &r, &s).unwrap().value;
        assert!((pl - KPO_K2).abs() < 1e-12);
        let cut = listwise_baseline_loss(ListwiseKind::KpoCut, &r, &s).unwrap().value;
        assert!((cut - NEG_LOG_SIG_1).abs() < 1e-12);
        assert!(matches!(
            listwise_baseline_loss(ListwiseKind::KpoCut, &r, &ident(3, 1)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn pairwise_examples() {
        let cfg = LossConfig::default();
        let r = rv(&[1.0, 0.0]);
        let dpo = pairwise_loss(PairwiseKind::Dpo, &r, 0, 1, (1.0, 1.0), &cfg).unwrap();
        assert!((dpo.value - NEG_LOG_SIG_1).abs() < 1e-12);

        let cfg0 = LossConfig { epsilon: 0.0, ..cfg.clone() };
        let r = rv(&[0.2, -1.7, 0.4]);
        let a = pairwise_loss(PairwiseKind::Dpo, &r, 2, 1, (1.0, 1.0), &cfg0).unwrap();
        let b = pairwise_loss(PairwiseKind::Cdpo, &r, 2, 1, (1.0, 1.0), &cfg0).unwrap();
        assert_eq!(a, b);

        let scfg = LossConfig { beta: 2.0, gamma: 0.5, ..cfg };
        let simpo_in = RewardVector {
            rewards: vec![0.0, 0.0],
            beta: 2.0,
            policy_log_probs: vec![-0.5, -1.5],
        };
        let s = pairwise_loss(PairwiseKind::Simpo, &simpo_in, 0, 1, (1.0, 1.0), &scfg).unwrap();
        assert!((s.value - SIMPO_EX).abs() < 1e-12);
        assert!(pairwise_loss(PairwiseKind::Dpo, &r, 1, 1, (1.0, 1.0), &cfg0).is_err());
    }

    #[test]
    fn kto_examples() {
        let cfg = LossConfig::default();
        let r = rv(&[0.0, 0.0]);
        let l = kto_loss(&r, 0, true, r.log_ratio(0), &cfg).unwrap();
        assert!((l.value - 0.5).abs() < 1e-15);
        let big = rv(&[800.0, 0.0]);
        assert!((kto_loss(&big, 0, true, 0.0, &cfg).unwrap().value - 0.0).abs() < 1e-12);
        assert!((kto_loss(&big, 0, false, 0.0, &cfg).unwrap().value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kto_z0_modes() {
        let a = rv(&[1.0, 0.0]);
        let b = rv(&[3.0, -1.0]);
        assert_eq!(kto_z0(KtoZ0Mode::Zero, &[(&a, 0)]).unwrap(), 0.0);
        assert!(matches!(kto_z0(KtoZ0Mode::BatchEstimate, &[(&a, 0)]), Err(Error::Config(_))));
        // a pairs with b's index 1 (log-ratio 0), b pairs with a's index 0 (3)
        let z = kto_z0(KtoZ0Mode::BatchEstimate, &[(&a, 0), (&b, 1)]).unwrap();
        assert!((z - 1.5).abs() < 1e-15);
        let neg = rv(&[-2.0, -3.0]);
        assert_eq!(kto_z0(KtoZ0Mode::BatchEstimate, &[(&neg, 0), (&neg, 1)]).unwrap(), 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(LossConfig::default().validate().is_ok());
        assert!(LossConfig { beta: 0.0, ..Default::default() }.validate().is_err());
        assert!(LossConfig { epsilon: 0.5, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn loss_kind_names_round_trip() {
        for k in LossKind::ALL {
            assert_eq!(k.as_str().parse::<LossKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{}\"", k.as_str()));
        }
        assert!("ipo".parse::<LossKind>().is_err());
    }

    /// Direct quadratic evaluation of the listwise loss and its reward gradient.
    fn listwise_direct(r: &[f64], order: &[usize], terms: usize) -> (f64, Vec<f64>) {
        let mut value = 0.0;
        let mut d = vec![0.0; r.len()];
        for i in 0..terms.min(order.len() - 1) {
            let ri = r[order[i]];
            let rest = &order[i + 1..];
            let inner = crate::numeric::logsumexp_iter(rest.iter().map(|&j| r[j] - ri));
            value -= log_sigmoid(-inner);
            let s = sigmoid(inner);
            for &j in rest {
                d[j] += s * (r[j] - ri - inner).exp();
            }
            d[order[i]] -= s;
        }
        (value, d)
    }

    proptest! {
        #[test]
        fn linear_sweep_matches_direct(r in proptest::collection::vec(-30.0f64..30.0, 2..12), kf in 0.0f64..1.0) {
            let m = r.len();
            let k = 1 + ((m - 1) as f64 * kf) as usize;
            let order: Vec<usize> = (0..m).rev().collect();
            let fwd = listwise_forward(&r, &order, k);
            let (value, d) = listwise_direct(&r, &order, k);
            prop_assert!((fwd.value - value).abs() <= 1e-12 * value.abs().max(1.0));
            let Tape::Listwise { order, inner, suffix } = &fwd.tape else { unreachable!() };
            let got = listwise_backward(&r, order, inner, suffix);
            for (a, b) in got.iter().zip(&d) {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
            }
        }

        #[test]
        fn monotone_in_top_reward(r in proptest::collection::vec(-3.0f64..3.0, 2..8), bump in 0.01f64..2.0, kf in 0.0f64..1.0) {
            let m = r.len();
            let k = 1 + ((m - 1) as f64 * kf) as usize;
            let s = ident(m, k);
            let base = kpo_loss(&rv(&r), &s).unwrap().value;
            let mut r2 = r.clone();
            r2[0] += bump;
            prop_assert!(kpo_loss(&rv(&r2), &s).unwrap().value < base);
        }

        #[test]
        fn non_decreasing_in_k(r in proptest::collection::vec(-3.0f64..3.0, 2..9)) {
            let m = r.len();
            let s = ident(m, m);
            let mut prev = 0.0;
            for k in 1..=m {
                let v = kpo_loss_with_k(&rv(&r), &s, k).unwrap().value;
                prop_assert!(v >= prev - 1e-15);
                prev = v;
            }
        }

        #[test]
        fn reward_constant_cancels(r in proptest::collection::vec(-3.0f64..3.0, 3..8), c in -20.0f64..20.0) {
            let m = r.len();
            let s = ident(m, 2);
            let shifted: Vec<f64> = r.iter().map(|x| x + c).collect();
            let a = kpo_loss(&rv(&r), &s).unwrap().value;
            let b = kpo_loss(&rv(&shifted), &s).unwrap().value;
            prop_assert!((a - b).abs() <= 1e-12);
            let cfg = LossConfig::default();
            let a = pairwise_loss(PairwiseKind::Cdpo, &rv(&r), 0, 1, (1.0, 1.0), &cfg).unwrap().value;
            let b = pairwise_loss(PairwiseKind::Cdpo, &rv(&shifted), 0, 1, (1.0, 1.0), &cfg).unwrap().value;
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}
