//! Ranking under a policy, HR@k and NDCG@k.

use std::io::Write;

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::PolicyTable;
use crate::types::{Dataset, RankingInstance, Split};

pub const HR_CUTOFFS: [usize; 3] = [1, 5, 10];
pub const NDCG_CUTOFFS: [usize; 2] = [5, 10];

/// Candidate indices by policy log-probability, highest first; ties go to the
/// lower index.
pub fn rank_candidates(policy: &PolicyTable, instance: &RankingInstance) -> Result<Vec<usize>> {
    let lp = policy.log_probs(instance)?;
    Ok(rank_by_scores(&lp))
}

pub fn rank_by_scores(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

/// The unique top-labeled candidate, or a metric error when the maximum label
/// is shared.
pub fn ground_truth_index(labels: &[u8]) -> Result<usize> {
    let max = labels.iter().copied().max().ok_or_else(|| Error::Metric("empty label list".into()))?;
    let mut hits = labels.iter().enumerate().filter(|(_, &l)| l == max).map(|(i, _)| i);
    let first = hits.next().expect("max exists");
    if hits.next().is_some() {
        return Err(Error::Metric(
            "several candidates share the maximum label; HR needs a single ground truth, use NDCG".into(),
        ));
    }
    Ok(first)
}

pub fn hr_at_k(ranking: &[usize], labels: &[u8], k: usize) -> Result<f64> {
    let gt = ground_truth_index(labels)?;
    Ok(if ranking.iter().take(k).any(|&i| i == gt) { 1.0 } else { 0.0 })
}

fn gain(label: u8) -> f64 {
    f64::from((1u32 << label) - 1)
}

fn discount(pos: usize) -> f64 {
    ((pos + 2) as f64).log2()
}

/// Exponential-gain NDCG; 1 when no candidate is relevant.
pub fn ndcg_at_k(ranking: &[usize], labels: &[u8], k: usize) -> f64 {
    let dcg: f64 = ranking
        .iter()
        .take(k)
        .enumerate()
        .map(|(pos, &i)| gain(labels[i]) / discount(pos))
        .sum();
    let mut ideal = labels.to_vec();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(pos, &l)| gain(l) / discount(pos))
        .sum();
    if idcg == 0.0 {
        1.0
    } else {
        dcg / idcg
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    /// Metric name to dataset mean, in HR@1, HR@5, HR@10, N@5, N@10 order.
    /// HR entries are absent when no instance has a unique ground truth.
    pub values: IndexMap<String, f64>,
    pub n_instances: usize,
    /// Instances with a single maximal label, the ones HR is averaged over.
    pub n_hr_eligible: usize,
    /// Instances whose labels are all zero, counted as NDCG 1.
    pub n_idcg_zero: usize,
}

impl MetricReport {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }

    pub fn ndcg5(&self) -> f64 {
        self.get("N@5").unwrap_or(0.0)
    }
}

struct InstanceMetrics {
    hr: Option<[f64; 3]>,
    ndcg: [f64; 2],
    idcg_zero: bool,
}

fn instance_metrics(ranking: &[usize], labels: &[u8]) -> InstanceMetrics {
    let hr = ground_truth_index(labels).ok().map(|gt| {
        let rank = ranking.iter().position(|&i| i == gt).expect("ranking is a permutation");
        HR_CUTOFFS.map(|k| if rank < k { 1.0 } else { 0.0 })
    });
    InstanceMetrics {
        hr,
        ndcg: NDCG_CUTOFFS.map(|k| ndcg_at_k(ranking, labels, k)),
        idcg_zero: labels.iter().all(|&l| l == 0),
    }
}

/// Mean metrics over one split. Per-instance work runs in parallel; the
/// reduction runs in instance order so results do not depend on thread count.
pub fn evaluate(policy: &PolicyTable, dataset: &Dataset, split: Split) -> Result<MetricReport> {
    let instances: Vec<&RankingInstance> = dataset.split(split).collect();
    let per: Vec<InstanceMetrics> = instances
        .par_iter()
        .map(|inst| Ok(instance_metrics(&rank_candidates(policy, inst)?, &inst.labels)))
        .collect::<Result<_>>()?;
    Ok(aggregate(&per))
}

fn aggregate(per: &[InstanceMetrics]) -> MetricReport {
    let mut report = MetricReport {
        n_instances: per.len(),
        ..Default::default()
    };
    if per.is_empty() {
        return report;
    }
    let mut hr = [0.0; 3];
    let mut ndcg = [0.0; 2];
    for m in per {
        if let Some(h) = m.hr {
            report.n_hr_eligible += 1;
            for (acc, v) in hr.iter_mut().zip(h) {
                *acc += v;
            }
        }
        for (acc, v) in ndcg.iter_mut().zip(m.ndcg) {
            *acc += v;
        }
        report.n_idcg_zero += usize::from(m.idcg_zero);
    }
    if report.n_hr_eligible > 0 {
        for (k, v) in HR_CUTOFFS.iter().zip(hr) {
            report.values.insert(format!("HR@{k}"), v / report.n_hr_eligible as f64);
        }
    }
    for (k, v) in NDCG_CUTOFFS.iter().zip(ndcg) {
        report.values.insert(format!("N@{k}"), v / per.len() as f64);
    }
    report
}

/// Writes `step,split,metric,value` rows (no header).
pub fn write_metric_rows<W: Write + ?Sized>(out: &mut W, step: usize, split: Split, report: &MetricReport) -> std::io::Result<()> {
    for (name, value) in &report.values {
        writeln!(out, "{step},{split},{name},{value}")?;
    }
    Ok(())
}

pub const METRIC_CSV_HEADER: &str = "step,split,metric,value";
