//! Cartesian sweeps of train + evaluate.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train, TrainConfig};
use crate::adaptive_k::{derive_samples, AdaptiveKConfig};
use crate::curriculum::CurriculumMode;
use crate::error::{Error, Result};
use crate::eval::{evaluate, MetricReport};
use crate::loss::{LossConfig, LossKind};
use crate::policy::PolicyTable;
use crate::seed::Seed;
use crate::types::{Dataset, Split};

/// Values to sweep per axis. An empty axis keeps the base configuration's value.
/// In `fixed_k`, `null` stands for the query-adaptive K.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationGrid {
    pub beta: Vec<f64>,
    pub tau: Vec<f64>,
    pub curriculum: Vec<CurriculumMode>,
    pub n_swaps: Vec<usize>,
    pub fixed_k: Vec<Option<usize>>,
    pub loss_kind: Vec<LossKind>,
    pub seed: Vec<u64>,
}

impl AblationGrid {
    /// The fixed-K sweep 1, 3, 5, 7, 10 next to the adaptive baseline.
    pub fn fixed_k_sweep() -> Self {
        AblationGrid {
            fixed_k: vec![None, Some(1), Some(3), Some(5), Some(7), Some(10)],
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        [
            self.beta.len(),
            self.tau.len(),
            self.curriculum.len(),
            self.n_swaps.len(),
            self.fixed_k.len(),
            self.loss_kind.len(),
            self.seed.len(),
        ]
        .iter()
        .map(|&n| n.max(1))
        .product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cells(&self, base: &AblationBase) -> Vec<AblationCell> {
        fn axis<T: Clone>(values: &[T], base: T) -> Vec<T> {
            if values.is_empty() {
                vec![base]
            } else {
                values.to_vec()
            }
        }
        let mut cells = Vec::new();
        for &beta in &axis(&self.beta, base.loss.beta) {
            for &tau in &axis(&self.tau, base.adaptive_k.tau_value) {
                for &curriculum in &axis(&self.curriculum, base.train.curriculum) {
                    for &n_swaps in &axis(&self.n_swaps, base.n_swaps) {
                        for &fixed_k in &axis(&self.fixed_k, base.adaptive_k.fixed_k) {
                            for &loss_kind in &axis(&self.loss_kind, base.train.loss_kind) {
                                for &seed in &axis(&self.seed, base.train.seed.0) {
                                    cells.push(AblationCell {
                                        beta,
                                        tau,
                                        curriculum,
                                        n_swaps,
                                        fixed_k,
                                        loss_kind,
                                        seed,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        cells
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub beta: f64,
    pub tau: f64,
    pub curriculum: CurriculumMode,
    pub n_swaps: usize,
    pub fixed_k: Option<usize>,
    pub loss_kind: LossKind,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationBase {
    pub adaptive_k: AdaptiveKConfig,
    pub train: TrainConfig,
    pub loss: LossConfig,
    pub n_swaps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub cell: AblationCell,
    pub best_step: usize,
    /// Mean batch loss of the last update.
    pub final_loss: f64,
    pub valid: MetricReport,
    pub test: MetricReport,
    pub mean_k: f64,
}

impl AblationCell {
    fn configs(&self, base: &AblationBase) -> (AdaptiveKConfig, TrainConfig, LossConfig) {
        let adaptive_k = AdaptiveKConfig {
            tau_value: self.tau,
            fixed_k: self.fixed_k,
            ..base.adaptive_k.clone()
        };
        let train = TrainConfig {
            loss_kind: self.loss_kind,
            curriculum: self.curriculum,
            seed: Seed(self.seed),
            ..base.train.clone()
        };
        let loss = LossConfig {
            beta: self.beta,
            ..base.loss.clone()
        };
        (adaptive_k, train, loss)
    }
}

/// Trains and evaluates every grid cell against the shared reference. Cells run
/// in parallel; rows come back in grid order.
pub fn ablate(
    dataset: &Dataset,
    reference: &PolicyTable,
    base: &AblationBase,
    grid: &AblationGrid,
) -> Result<Vec<AblationRow>> {
    let cells = grid.cells(base);
    if cells.is_empty() {
        return Err(Error::config("empty ablation grid"));
    }
    cells
        .par_iter()
        .map(|cell| {
            let (ak, tc, lc) = cell.configs(base);
            let selector = ak.selector(dataset)?;
            let samples = derive_samples(dataset, &selector, cell.n_swaps, Seed(cell.seed), Some(Split::Train))?;
            let mean_k = samples.iter().map(|s| s.kappa as f64).sum::<f64>() / samples.len().max(1) as f64;
            let out = train(dataset, &samples, reference, &tc, &lc)?;
            Ok(AblationRow {
                cell: *cell,
                best_step: out.trace.best_step,
                final_loss: out.trace.steps.last().map_or(0.0, |s| s.loss),
                valid: evaluate(&out.policy, dataset, Split::Valid)?,
                test: evaluate(&out.policy, dataset, Split::Test)?,
                mean_k,
            })
        })
        .collect()
}

pub const ABLATION_CSV_HEADER: &str = "cell,beta,tau,curriculum,n_swaps,fixed_k,loss_kind,seed,mean_k,best_step,split,metric,value";

/// One row per (cell, split, metric).
pub fn write_ablation_csv<W: Write>(out: &mut W, rows: &[AblationRow]) -> std::io::Result<()> {
    writeln!(out, "{ABLATION_CSV_HEADER}")?;
    for (i, row) in rows.iter().enumerate() {
        let c = &row.cell;
        let fixed = c.fixed_k.map_or_else(|| "adaptive".to_string(), |k| k.to_string());
        for (split, report) in [(Split::Valid, &row.valid), (Split::Test, &row.test)] {
            for (name, value) in &report.values {
                writeln!(
                    out,
                    "{i},{},{},{},{},{fixed},{},{},{},{},{split},{name},{value}",
                    c.beta, c.tau, c.curriculum, c.n_swaps, c.loss_kind, c.seed, row.mean_k, row.best_step
                )?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adaptive_k::TauMode;
    use crate::data::synthetic::{gen_synthetic, SyntheticConfig};

    fn base() -> AblationBase {
        AblationBase {
            adaptive_k: AdaptiveKConfig {
                tau_mode: TauMode::Absolute,
                tau_value: 0.5,
                ..Default::default()
            },
            train: TrainConfig {
                epochs: 1,
                batch_size: 8,
                record_timing: false,
                ..Default::default()
            },
            loss: LossConfig::default(),
            n_swaps: 0,
        }
    }

    #[test]
    fn single_cell_equals_direct_run() {
        let ds = gen_synthetic(&SyntheticConfig { n_queries: 40, ..Default::default() }).unwrap();
        let reference = PolicyTable::from_ref_logits(&ds);
        let b = base();
        let grid = AblationGrid::default();
        assert_eq!(grid.len(), 1);
        let rows = ablate(&ds, &reference, &b, &grid).unwrap();
        assert_eq!(rows.len(), 1);

        let sel = b.adaptive_k.selector(&ds).unwrap();
        let samples = derive_samples(&ds, &sel, 0, Seed(0), Some(Split::Train)).unwrap();
        let out = train(&ds, &samples, &reference, &b.train, &b.loss).unwrap();
        assert_eq!(rows[0].test, evaluate(&out.policy, &ds, Split::Test).unwrap());
    }

    #[test]
    fn seed_cells_share_metadata() {
        let ds = gen_synthetic(&SyntheticConfig { n_queries: 40, ..Default::default() }).unwrap();
        let reference = PolicyTable::from_ref_logits(&ds);
        let grid = AblationGrid { seed: vec![1, 2], curriculum: vec![CurriculumMode::Random], ..Default::default() };
        let rows = ablate(&ds, &reference, &base(), &grid).unwrap();
        assert_eq!(rows.len(), 2);
        let (a, b) = (rows[0].cell, rows[1].cell);
        assert_eq!(AblationCell { seed: 0, ..a }, AblationCell { seed: 0, ..b });
        assert_ne!(rows[0].final_loss, rows[1].final_loss);
    }

    #[test]
    fn fixed_k_axis_matches_sweep() {
        let cells = AblationGrid::fixed_k_sweep().cells(&base());
        let ks: Vec<Option<usize>> = cells.iter().map(|c| c.fixed_k).collect();
        assert_eq!(ks, vec![None, Some(1), Some(3), Some(5), Some(7), Some(10)]);
    }
}
