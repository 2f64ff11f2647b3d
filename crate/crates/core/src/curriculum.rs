//! K-aware training order and K-homogeneous batching.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::Seed;
use crate::types::PreferenceSample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CurriculumMode {
    #[default]
    Ascending,
    Descending,
    Random,
}

impl CurriculumMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CurriculumMode::Ascending => "ascending",
            CurriculumMode::Descending => "descending",
            CurriculumMode::Random => "random",
        }
    }
}

impl fmt::Display for CurriculumMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CurriculumMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ascending" => Ok(CurriculumMode::Ascending),
            "descending" => Ok(CurriculumMode::Descending),
            "random" => Ok(CurriculumMode::Random),
            other => Err(Error::config(format!("unknown curriculum `{other}`"))),
        }
    }
}

/// Training order as a permutation of sample indices.
///
/// Sorted modes are stable, so equal-K samples keep their original order.
pub fn order_dataset(samples: &[PreferenceSample], mode: CurriculumMode, seed: Seed) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    match mode {
        CurriculumMode::Ascending => idx.sort_by_key(|&i| samples[i].kappa),
        CurriculumMode::Descending => idx.sort_by_key(|&i| std::cmp::Reverse(samples[i].kappa)),
        CurriculumMode::Random => idx.shuffle(&mut seed.rng(0)),
    }
    idx
}

/// Shuffles within each run of equal K, leaving the run sequence intact.
pub fn shuffle_within_k_blocks(order: &mut [usize], samples: &[PreferenceSample], seed: Seed) {
    let mut rng = seed.rng(1);
    let mut start = 0;
    while start < order.len() {
        let k = samples[order[start]].kappa;
        let mut end = start + 1;
        while end < order.len() && samples[order[end]].kappa == k {
            end += 1;
        }
        order[start..end].shuffle(&mut rng);
        start = end;
    }
}

/// Chunks consecutive equal-K runs of `order` into batches of at most
/// `batch_size`. A batch never mixes two K values, so run boundaries may
/// produce short batches.
pub fn batch_by_k(
    samples: &[PreferenceSample],
    order: &[usize],
    batch_size: usize,
) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::config("batch_size must be at least 1"));
    }
    let mut batches = Vec::new();
    let mut current: Vec<usize> = Vec::with_capacity(batch_size);
    for &i in order {
        let fits = current.len() < batch_size
            && current.last().is_none_or(|&j| samples[j].kappa == samples[i].kappa);
        if !fits {
            batches.push(std::mem::take(&mut current));
        }
        current.push(i);
    }
    if !current.is_empty() {
        batches.push(current);
    }
    Ok(batches)
}

/// K-homogeneous batches for an unsorted order: samples are grouped by K
/// keeping their order within each group, chunked, and the batches are then
/// emitted in shuffled order.
pub fn batch_shuffled_k(
    samples: &[PreferenceSample],
    order: &[usize],
    batch_size: usize,
    seed: Seed,
) -> Result<Vec<Vec<usize>>> {
    let mut grouped = order.to_vec();
    grouped.sort_by_key(|&i| samples[i].kappa);
    let mut batches = batch_by_k(samples, &grouped, batch_size)?;
    batches.shuffle(&mut seed.rng(2));
    Ok(batches)
}
