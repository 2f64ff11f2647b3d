//! Optimal top-K ranking accuracy of the K-order objective and of the
//! single-positive baseline, given ground-truth Plackett-Luce ranking
//! probabilities.
//!
//! Positions are zero-based throughout: `alphas[i]` is the probability that
//! the item ranked `i` in ground-truth order beats every item after it.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{log_softmax, logsumexp_iter};
use crate::policy::PolicyTable;
use crate::types::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Kpo,
    Sdpo,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Kpo => "kpo",
            Method::Sdpo => "sdpo",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kpo" => Ok(Method::Kpo),
            "sdpo" => Ok(Method::Sdpo),
            other => Err(Error::config(format!("unknown method `{other}`"))),
        }
    }
}

/// Sequential ranking probabilities along the ground-truth order.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaProfile {
    alphas: Vec<f64>,
    /// Set when the profile was derived from scores; direct profiles are
    /// accepted without a consistency check.
    pl_derived: bool,
}

impl AlphaProfile {
    pub fn new(alphas: Vec<f64>) -> Result<Self> {
        let m = alphas.len();
        if m < 2 {
            return Err(Error::domain("alpha profile needs at least 2 positions"));
        }
        if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && **a <= 1.0)) {
            return Err(Error::domain(format!("alpha {a} outside (0, 1]")));
        }
        if (alphas[m - 1] - 1.0).abs() > 1e-12 {
            return Err(Error::domain("the last alpha must be 1"));
        }
        Ok(AlphaProfile {
            alphas,
            pl_derived: false,
        })
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    pub fn is_pl_derived(&self) -> bool {
        self.pl_derived
    }
}

/// Ground-truth scores, one per candidate in candidate order.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthPL {
    pub scores: Vec<f64>,
}

impl GroundTruthPL {
    pub fn new(scores: Vec<f64>) -> Self {
        GroundTruthPL { scores }
    }

    /// Candidates by descending score, ties to the lower index.
    pub fn order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.scores.len()).collect();
        idx.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]).then(a.cmp(&b)));
        idx
    }
}

/// `α_i = exp(s_i) / Σ_{n≥i} exp(s_n)` along the ground-truth order.
pub fn alpha_from_scores(scores: &GroundTruthPL) -> Result<AlphaProfile> {
    alpha_along(&scores.scores, &scores.order())
}

/// Alphas for an explicit ranking of the candidates.
pub fn alpha_along(scores: &[f64], order: &[usize]) -> Result<AlphaProfile> {
    let m = order.len();
    if m < 2 || scores.len() != m {
        return Err(Error::domain("need at least 2 scores and a full ordering of them"));
    }
    let ranked: Vec<f64> = order.iter().map(|&i| scores[i]).collect();
    let mut alphas = vec![1.0; m];
    let mut suffix = f64::NEG_INFINITY;
    for i in (0..m).rev() {
        suffix = logsumexp_iter([suffix, ranked[i]].into_iter());
        alphas[i] = (ranked[i] - suffix).exp();
    }
    alphas[m - 1] = 1.0;
    Ok(AlphaProfile {
        alphas,
        pl_derived: true,
    })
}

/// `log(w_l / w_k)` for positions `l < k`.
pub fn log_w_ratio(alpha: &AlphaProfile, beta: f64, l: usize, k: usize, method: Method) -> Result<f64> {
    let a = alpha.alphas();
    if !(l < k && k < a.len()) {
        return Err(Error::domain(format!(
            "positions must satisfy l < k < {}, got l = {l}, k = {k}",
            a.len()
        )));
    }
    if beta.is_nan() || beta <= 0.0 {
        return Err(Error::domain("beta must be positive"));
    }
    if method == Method::Sdpo && l != 0 {
        return Ok(0.0);
    }
    let mut log_tail = 0.0;
    for (i, &ai) in a.iter().enumerate().take(k).skip(l) {
        if ai >= 1.0 {
            return Err(Error::domain(format!(
                "alpha at position {i} equals 1 before the last position; the ratio is undefined"
            )));
        }
        log_tail += (-ai).ln_1p();
    }
    Ok((a[l].ln() - a[k].ln() - log_tail) / beta)
}

/// `w_l / w_k = (α_l/α_k)^{1/β} · Π_{i=l}^{k-1} (1-α_i)^{-1/β}`; for the
/// single-positive method the ratio is 1 whenever `l` is not the top position.
pub fn w_ratio(alpha: &AlphaProfile, beta: f64, l: usize, k: usize, method: Method) -> Result<f64> {
    log_w_ratio(alpha, beta, l, k, method).map(f64::exp)
}

/// Log-probabilities of `π* ∝ π_ref · exp(s/β)` for one instance.
pub fn optimal_log_probs(ref_log_probs: &[f64], scores: &[f64], beta: f64) -> Vec<f64> {
    let u: Vec<f64> = ref_log_probs
        .iter()
        .zip(scores)
        .map(|(r, s)| r + s / beta)
        .collect();
    log_softmax(&u)
}

/// The optimal policy for every instance that carries ground-truth scores.
pub fn optimal_policy(reference: &PolicyTable, dataset: &Dataset, beta: f64) -> Result<PolicyTable> {
    let mut out = PolicyTable::new();
    for inst in &dataset.instances {
        let Some(scores) = &inst.scores else { continue };
        let lp = reference.log_probs(inst)?;
        out.insert(inst.instance_id.clone(), optimal_log_probs(&lp, scores, beta));
    }
    Ok(out)
}

/// One element of an aggregated-preference dataset.
#[derive(Debug, Clone)]
pub struct TheoryInstance {
    pub alpha: AlphaProfile,
    /// Candidate index at each ground-truth position.
    pub order: Vec<usize>,
    /// `log π_ref` in candidate order.
    pub ref_log_probs: Vec<f64>,
    pub k: usize,
}

impl TheoryInstance {
    pub fn from_scores(scores: &GroundTruthPL, ref_log_probs: Vec<f64>, k: usize) -> Result<Self> {
        let order = scores.order();
        let alpha = alpha_along(&scores.scores, &order)?;
        Self::new(alpha, order, ref_log_probs, k)
    }

    pub fn new(alpha: AlphaProfile, order: Vec<usize>, ref_log_probs: Vec<f64>, k: usize) -> Result<Self> {
        let m = alpha.len();
        if order.len() != m || ref_log_probs.len() != m {
            return Err(Error::domain("alpha, order and reference must have the same length"));
        }
        if k == 0 || k > m {
            return Err(Error::domain(format!("K = {k} outside 1..={m}")));
        }
        Ok(TheoryInstance {
            alpha,
            order,
            ref_log_probs,
            k,
        })
    }

    /// Whether the optimal policy ranks the top-K correctly: every pair
    /// `l < K`, `k > l` must satisfy `w_l π_ref(y_l) / (w_k π_ref(y_k)) > 1`
    /// strictly.
    pub fn is_correct(&self, beta: f64, method: Method) -> Result<bool> {
        let m = self.order.len();
        for l in 0..self.k {
            for k in l + 1..m {
                let margin = log_w_ratio(&self.alpha, beta, l, k, method)?
                    + self.ref_log_probs[self.order[l]]
                    - self.ref_log_probs[self.order[k]];
                if margin <= 0.0 {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }
}

/// Dataset mean of the per-instance top-K correctness indicator.
pub fn optimal_accuracy(instances: &[TheoryInstance], beta: f64, method: Method) -> Result<f64> {
    if instances.is_empty() {
        return Ok(0.0);
    }
    let hits: Vec<bool> = instances
        .par_iter()
        .map(|inst| inst.is_correct(beta, method))
        .collect::<Result<_>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / instances.len() as f64)
}
