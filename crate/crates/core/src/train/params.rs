//! Trainable offsets on top of a frozen base table.
//!
//! The trained policy is `u[x][i] = base[x][i] + θ[slot(x, i)]`. With item
//! sharing every occurrence of a candidate id reads the same slot, so updates
//! learned on training queries carry over to held-out ones. With instance
//! sharing each (instance, candidate) pair owns its slot.

use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::PolicyTable;
use crate::types::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamSharing {
    #[default]
    Item,
    Instance,
}

impl ParamSharing {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamSharing::Item => "item",
            ParamSharing::Instance => "instance",
        }
    }
}

impl fmt::Display for ParamSharing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ParamSharing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "item" => Ok(ParamSharing::Item),
            "instance" => Ok(ParamSharing::Instance),
            other => Err(Error::config(format!("unknown parameter sharing `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TiedParams {
    ids: Vec<String>,
    pub(crate) index: IndexMap<String, usize>,
    pub(crate) base: Vec<Vec<f64>>,
    pub(crate) slots: Vec<Vec<usize>>,
    pub theta: Vec<f64>,
}

impl TiedParams {
    /// Zero offsets over `base`, which must cover every instance of `dataset`.
    pub fn new(dataset: &Dataset, base: &PolicyTable, sharing: ParamSharing) -> Result<Self> {
        let mut items: IndexMap<&str, usize> = IndexMap::new();
        let mut next = 0;
        let mut slots = Vec::with_capacity(dataset.len());
        let mut rows = Vec::with_capacity(dataset.len());
        let mut index = IndexMap::with_capacity(dataset.len());
        for (n, inst) in dataset.instances.iter().enumerate() {
            rows.push(base.params_for(inst)?.to_vec());
            index.insert(inst.instance_id.clone(), n);
            slots.push(match sharing {
                ParamSharing::Item => inst
                    .candidate_ids
                    .iter()
                    .map(|c| {
                        let len = items.len();
                        *items.entry(c.as_str()).or_insert(len)
                    })
                    .collect(),
                ParamSharing::Instance => {
                    let s: Vec<usize> = (next..next + inst.len()).collect();
                    next += inst.len();
                    s
                }
            });
        }
        let n_params = match sharing {
            ParamSharing::Item => items.len(),
            ParamSharing::Instance => next,
        };
        Ok(TiedParams {
            ids: dataset.instances.iter().map(|i| i.instance_id.clone()).collect(),
            index,
            base: rows,
            slots,
            theta: vec![0.0; n_params],
        })
    }

    pub fn n_params(&self) -> usize {
        self.theta.len()
    }

    pub fn instance_index(&self, instance_id: &str) -> Result<usize> {
        self.index.get(instance_id).copied().ok_or_else(|| Error::Lookup {
            instance_id: instance_id.to_string(),
        })
    }

    pub fn base_row(&self, n: usize) -> &[f64] {
        &self.base[n]
    }

    pub fn row(&self, n: usize) -> Vec<f64> {
        self.base[n]
            .iter()
            .zip(&self.slots[n])
            .map(|(b, &s)| b + self.theta[s])
            .collect()
    }

    /// Adds `scale·grad_u` of instance `n` into the parameter gradient.
    pub fn scatter(&self, n: usize, grad_u: &[f64], scale: f64, out: &mut [f64]) {
        for (&s, g) in self.slots[n].iter().zip(grad_u) {
            out[s] += scale * g;
        }
    }

    pub fn to_table(&self) -> PolicyTable {
        self.ids
            .iter()
            .enumerate()
            .map(|(n, id)| (id.clone(), self.row(n)))
            .collect()
    }
}
