//! Preference alignment: curriculum-ordered batches, three timed phases per
//! step, periodic evaluation and best-checkpoint selection.

pub mod ablate;
pub mod optimizer;
pub mod params;
pub mod schedule;
pub mod sft;

use std::io::Write;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::curriculum::{batch_by_k, batch_shuffled_k, order_dataset, shuffle_within_k_blocks, CurriculumMode};
use crate::error::{Error, Result};
use crate::eval::{evaluate, write_metric_rows, MetricReport, METRIC_CSV_HEADER};
use crate::loss::{kto_z0, sample_forward, LossConfig, LossKind, PairContext, RewardVector};
use crate::numeric::log_softmax;
use crate::policy::PolicyTable;
use crate::seed::Seed;
use crate::types::{Dataset, PreferenceSample, Split};

pub use ablate::{ablate, AblationGrid, AblationRow};
pub use optimizer::{Optimizer, OptimizerKind};
pub use params::{ParamSharing, TiedParams};
pub use schedule::lr_schedule;
pub use sft::{sft, SftConfig, SftInit, SftOutcome};

const ORDER_STREAM: u64 = 0x6f72_6465;
const LOSER_STREAM: u64 = 0x6c6f_7365;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub loss_kind: LossKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_max: f64,
    pub warmup_fraction: f64,
    pub optimizer: OptimizerKind,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub curriculum: CurriculumMode,
    /// Reshuffle samples within each equal-K run every epoch.
    pub shuffle_within_blocks: bool,
    pub seed: Seed,
    /// Evaluate every this many updates; 0 evaluates at epoch ends only.
    pub eval_every: usize,
    pub param_sharing: ParamSharing,
    /// Measure phase wall-clock times. When off the trace records zeros and is
    /// bit-reproducible.
    pub record_timing: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss_kind: LossKind::Kpo,
            epochs: 3,
            batch_size: 128,
            lr_max: 0.05,
            warmup_fraction: 0.1,
            optimizer: OptimizerKind::Adam,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            curriculum: CurriculumMode::Ascending,
            shuffle_within_blocks: false,
            seed: Seed(0),
            eval_every: 0,
            param_sharing: ParamSharing::Item,
            record_timing: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if !(self.lr_max >= 0.0 && self.lr_max.is_finite()) {
            return Err(Error::config("lr_max must be a non-negative finite number"));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::config("warmup_fraction must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || self.adam_eps <= 0.0 {
            return Err(Error::config("adam moments must lie in [0, 1) with positive eps"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based update number.
    pub step: usize,
    pub loss: f64,
    /// Batch mean of the reward of each sample's top-ranked candidate, before the update.
    pub reward_top1: f64,
    pub lr: f64,
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub kappa: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    /// Number of updates applied before this evaluation.
    pub step: usize,
    pub split: Split,
    pub report: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainTrace {
    pub steps: Vec<StepRecord>,
    pub evals: Vec<EvalRecord>,
    /// Update count of the returned checkpoint.
    pub best_step: usize,
}

impl TrainTrace {
    pub fn metric(&self, step: usize, split: Split, name: &str) -> Option<f64> {
        self.evals
            .iter()
            .find(|e| e.step == step && e.split == split)
            .and_then(|e| e.report.get(name))
    }

    pub fn final_metric(&self, split: Split, name: &str) -> Option<f64> {
        self.evals.iter().rev().find(|e| e.split == split).and_then(|e| e.report.get(name))
    }

    pub fn total_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn write_steps_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "step,loss,reward_top1,lr,t1,t2,t3")?;
        for s in &self.steps {
            writeln!(out, "{},{},{},{},{},{},{}", s.step, s.loss, s.reward_top1, s.lr, s.t1, s.t2, s.t3)?;
        }
        Ok(())
    }

    pub fn write_metrics_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "{METRIC_CSV_HEADER}")?;
        for e in &self.evals {
            write_metric_rows(out, e.step, e.split, &e.report)?;
        }
        Ok(())
    }

    /// Sums of the phase times over all steps.
    pub fn phase_totals(&self) -> [f64; 3] {
        self.steps.iter().fold([0.0; 3], |acc, s| [acc[0] + s.t1, acc[1] + s.t2, acc[2] + s.t3])
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Checkpoint with the best validation N@5.
    pub policy: PolicyTable,
    /// Parameters after the last update.
    pub final_policy: PolicyTable,
    pub trace: TrainTrace,
}

struct Prepared<'a> {
    sample: &'a PreferenceSample,
    inst: usize,
}

fn timer(on: bool) -> Option<Instant> {
    on.then(Instant::now)
}

fn elapsed(t: Option<Instant>) -> f64 {
    t.map_or(0.0, |t| t.elapsed().as_secs_f64())
}

fn pick_loser<R: Rng>(sample: &PreferenceSample, rng: &mut R) -> usize {
    if sample.tail.is_empty() {
        sample.head[1 + rng.random_range(0..sample.head.len() - 1)]
    } else {
        sample.tail[rng.random_range(0..sample.tail.len())]
    }
}

/// Aligns a policy initialized at `reference` on the training-split samples.
///
/// Each update runs three phases: rewards of every batch candidate under the
/// policy and the reference, the batch loss, and backpropagation with the
/// optimizer update. Validation and test metrics are recorded before the first
/// update, every `eval_every` updates and at each epoch end. The returned
/// checkpoint is the evaluated state with the best validation N@5 after at
/// least one update.
pub fn train(
    dataset: &Dataset,
    samples: &[PreferenceSample],
    reference: &PolicyTable,
    config: &TrainConfig,
    loss: &LossConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    loss.validate()?;
    let mut params = TiedParams::new(dataset, reference, config.param_sharing)?;

    let mut prepared = Vec::new();
    for s in samples {
        let n = params.instance_index(&s.instance_id)?;
        let inst = &dataset.instances[n];
        if inst.split != Split::Train {
            continue;
        }
        if s.m() != inst.len() {
            return Err(Error::data(format!(
                "sample `{}` covers {} candidates, instance has {}",
                s.instance_id,
                s.m(),
                inst.len()
            )));
        }
        s.validate()?;
        if config.loss_kind.is_pairwise() && s.m() < 2 {
            return Err(Error::data("pairwise objectives need two candidates"));
        }
        prepared.push(Prepared { sample: s, inst: n });
    }
    if prepared.is_empty() {
        return Err(Error::data("no preference samples on the training split"));
    }
    let kept: Vec<PreferenceSample> = prepared.iter().map(|p| p.sample.clone()).collect();

    let order_seed = config.seed.derive(ORDER_STREAM);
    let base_order = order_dataset(&kept, config.curriculum, order_seed);
    let epoch_batches = |epoch: usize| -> Result<Vec<Vec<usize>>> {
        let epoch_seed = order_seed.derive(epoch as u64);
        if config.curriculum == CurriculumMode::Random {
            let order = order_dataset(&kept, config.curriculum, epoch_seed);
            return batch_shuffled_k(&kept, &order, config.batch_size, epoch_seed);
        }
        let mut order = base_order.clone();
        if config.shuffle_within_blocks {
            shuffle_within_k_blocks(&mut order, &kept, epoch_seed);
        }
        batch_by_k(&kept, &order, config.batch_size)
    };
    let steps_per_epoch = epoch_batches(0)?.len();
    let total_steps = steps_per_epoch * config.epochs;

    let mut optimizer = Optimizer::new(
        config.optimizer,
        params.n_params(),
        config.adam_beta1,
        config.adam_beta2,
        config.adam_eps,
    );
    let mut trace = TrainTrace::default();
    let mut best: Option<(f64, usize, PolicyTable)> = None;

    let record_eval = |params: &TiedParams, step: usize, trace: &mut TrainTrace| -> Result<PolicyTable> {
        let table = params.to_table();
        for split in [Split::Valid, Split::Test] {
            let report = evaluate(&table, dataset, split)?;
            trace.evals.push(EvalRecord { step, split, report });
        }
        Ok(table)
    };
    record_eval(&params, 0, &mut trace)?;

    let mut grad = vec![0.0; params.n_params()];
    let mut step = 0;
    for epoch in 0..config.epochs {
        let batches = epoch_batches(epoch)?;
        let mut loser_rng = config.seed.derive(LOSER_STREAM).rng(epoch as u64);
        for batch in batches {
            let lr = lr_schedule(step, total_steps, config.lr_max, config.warmup_fraction);
            step += 1;

            // Phase 1: rewards under policy and reference.
            let t = timer(config.record_timing);
            let rewards: Vec<RewardVector> = batch
                .iter()
                .map(|&b| {
                    let n = prepared[b].inst;
                    let pol = log_softmax(&params.row(n));
                    let reff = log_softmax(params.base_row(n));
                    RewardVector::from_log_probs(pol, &reff, loss.beta)
                })
                .collect();
            let t1 = elapsed(t);

            // Phase 2: loss values.
            let t = timer(config.record_timing);
            let z0 = if config.loss_kind == LossKind::Kto {
                let pts: Vec<(&RewardVector, usize)> = rewards
                    .iter()
                    .zip(&batch)
                    .map(|(rv, &b)| (rv, prepared[b].sample.head[0]))
                    .collect();
                kto_z0(loss.kto_z0_mode, &pts)?
            } else {
                0.0
            };
            let mut forwards = Vec::with_capacity(batch.len());
            let mut reward_top1 = 0.0;
            let mut mean_loss = 0.0;
            for (j, (rv, &b)) in rewards.iter().zip(&batch).enumerate() {
                let p = &prepared[b];
                reward_top1 += rv.rewards[p.sample.head[0]];
                let loser = if config.loss_kind.is_pairwise() {
                    pick_loser(p.sample, &mut loser_rng)
                } else {
                    0
                };
                let ctx = PairContext { loser, kto_z0: z0 };
                let inst = &dataset.instances[p.inst];
                if let Some(fwd) = sample_forward(config.loss_kind, rv, p.sample, inst, ctx, loss)? {
                    if !fwd.value.is_finite() {
                        return Err(Error::NonFinite { step });
                    }
                    mean_loss += fwd.value;
                    forwards.push((j, fwd));
                }
            }
            if !forwards.is_empty() {
                mean_loss /= forwards.len() as f64;
            }
            let t2 = elapsed(t);

            // Phase 3: backpropagation and parameter update.
            let t = timer(config.record_timing);
            if !forwards.is_empty() {
                let scale = 1.0 / forwards.len() as f64;
                grad.iter_mut().for_each(|g| *g = 0.0);
                for (j, fwd) in &forwards {
                    let g = fwd.backward(&rewards[*j]);
                    if g.iter().any(|x| !x.is_finite()) {
                        return Err(Error::NonFinite { step });
                    }
                    params.scatter(prepared[batch[*j]].inst, &g, scale, &mut grad);
                }
                optimizer.step(&mut params.theta, &grad, lr);
            }
            let t3 = elapsed(t);

            trace.steps.push(StepRecord {
                step,
                loss: mean_loss,
                reward_top1: reward_top1 / batch.len() as f64,
                lr,
                t1,
                t2,
                t3,
                kappa: prepared[batch[0]].sample.kappa,
            });

            let at_epoch_end = step % steps_per_epoch == 0;
            let periodic = config.eval_every > 0 && step % config.eval_every == 0;
            if at_epoch_end || periodic {
                let table = record_eval(&params, step, &mut trace)?;
                let score = trace.metric(step, Split::Valid, "N@5").unwrap_or(f64::NEG_INFINITY);
                if best.as_ref().is_none_or(|(b, _, _)| score > *b) {
                    best = Some((score, step, table));
                }
            }
        }
    }

    let final_policy = params.to_table();
    let (_, best_step, policy) = best.expect("at least one evaluation after an update");
    trace.best_step = best_step;
    Ok(TrainOutcome {
        policy,
        final_policy,
        trace,
    })
}
