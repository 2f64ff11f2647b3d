//! Domain records shared by every module.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_LABEL: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(Error::config(format!("unknown split `{other}`"))),
        }
    }
}

/// One query with its candidate list.
///
/// `scores` carries ground-truth Plackett-Luce scores when the data is
/// synthetic; `lengths` overrides the unit candidate length used by SimPO;
/// `history` is the interaction context of ingested logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankingInstance {
    pub instance_id: String,
    pub candidate_ids: Vec<String>,
    pub labels: Vec<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_logits: Option<Vec<f64>>,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lengths: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history: Option<Vec<String>>,
}

impl RankingInstance {
    pub fn new(
        instance_id: impl Into<String>,
        candidate_ids: Vec<String>,
        labels: Vec<u8>,
        split: Split,
    ) -> Self {
        RankingInstance {
            instance_id: instance_id.into(),
            candidate_ids,
            labels,
            ref_logits: None,
            split,
            scores: None,
            lengths: None,
            history: None,
        }
    }

    pub fn len(&self) -> usize {
        self.candidate_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidate_ids.is_empty()
    }

    pub fn length_of(&self, idx: usize) -> f64 {
        self.lengths.as_ref().map_or(1.0, |l| l[idx])
    }

    /// Index of the candidate with the highest label, ties to the lowest index.
    pub fn top_labeled(&self) -> usize {
        let mut best = 0;
        for (i, &l) in self.labels.iter().enumerate() {
            if l > self.labels[best] {
                best = i;
            }
        }
        best
    }

    /// Checks the record invariants, naming the offending field on failure.
    pub fn validate(&self) -> std::result::Result<(), (&'static str, String)> {
        let m = self.candidate_ids.len();
        if m < 2 {
            return Err(("candidate_ids", format!("need at least 2 candidates, got {m}")));
        }
        let mut seen = HashSet::with_capacity(m);
        for id in &self.candidate_ids {
            if !seen.insert(id.as_str()) {
                return Err(("candidate_ids", format!("duplicate candidate id `{id}`")));
            }
        }
        if self.labels.len() != m {
            return Err(("labels", format!("expected {m} labels, got {}", self.labels.len())));
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l > MAX_LABEL) {
            return Err(("labels", format!("label {bad} outside 0..={MAX_LABEL}")));
        }
        for (name, field) in [
            ("ref_logits", &self.ref_logits),
            ("scores", &self.scores),
            ("lengths", &self.lengths),
        ] {
            if let Some(v) = field {
                if v.len() != m {
                    return Err((name, format!("expected {m} values, got {}", v.len())));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err((name, "non-finite value".into()));
                }
            }
        }
        if let Some(l) = &self.lengths {
            if l.iter().any(|&x| x <= 0.0) {
                return Err(("lengths", "lengths must be positive".into()));
            }
        }
        Ok(())
    }
}

/// A K-order preference `head[0] ≻ … ≻ head[K-1] ≻ {tail}` over candidate indices.
///
/// The tail is semantically unordered; its stored order is only used by the
/// full-order baseline, which needs some total order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreferenceSample {
    pub instance_id: String,
    pub head: Vec<usize>,
    pub tail: Vec<usize>,
    pub kappa: usize,
}

impl PreferenceSample {
    pub fn new(instance_id: impl Into<String>, head: Vec<usize>, tail: Vec<usize>) -> Result<Self> {
        let sample = PreferenceSample {
            instance_id: instance_id.into(),
            kappa: head.len(),
            head,
            tail,
        };
        sample.validate()?;
        Ok(sample)
    }

    /// Sample over `m` candidates whose first `k` indices are the ordered head.
    pub fn identity(instance_id: impl Into<String>, m: usize, k: usize) -> Result<Self> {
        if k == 0 || k > m {
            return Err(Error::domain(format!("K = {k} outside 1..={m}")));
        }
        Self::new(instance_id, (0..k).collect(), (k..m).collect())
    }

    pub fn m(&self) -> usize {
        self.head.len() + self.tail.len()
    }

    /// Head followed by tail.
    pub fn order(&self) -> impl Iterator<Item = usize> + '_ {
        self.head.iter().chain(self.tail.iter()).copied()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.m();
        if self.kappa != self.head.len() || self.kappa == 0 || self.kappa > m {
            return Err(Error::domain(format!(
                "sample `{}`: kappa {} must equal head length {} and lie in 1..={m}",
                self.instance_id,
                self.kappa,
                self.head.len()
            )));
        }
        let mut seen = vec![false; m];
        for idx in self.order() {
            if idx >= m || seen[idx] {
                return Err(Error::domain(format!(
                    "sample `{}`: head and tail do not partition 0..{m}",
                    self.instance_id
                )));
            }
            seen[idx] = true;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dataset {
    pub instances: Vec<RankingInstance>,
}

impl Dataset {
    pub fn new(instances: Vec<RankingInstance>) -> Self {
        Dataset { instances }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &RankingInstance> {
        self.instances.iter().filter(move |i| i.split == split)
    }

    pub fn split_counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for inst in &self.instances {
            c[inst.split as usize] += 1;
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst() -> RankingInstance {
        RankingInstance::new("q", vec!["a".into(), "b".into(), "c".into()], vec![0, 3, 1], Split::Train)
    }

    #[test]
    fn validate_accepts_well_formed() {
        assert!(inst().validate().is_ok());
        assert_eq!(inst().top_labeled(), 1);
    }

    #[test]
    fn validate_rejects_bad_fields() {
        let mut i = inst();
        i.candidate_ids[2] = "a".into();
        assert_eq!(i.validate().unwrap_err().0, "candidate_ids");

        let mut i = inst();
        i.labels[0] = 4;
        assert_eq!(i.validate().unwrap_err().0, "labels");

        let mut i = inst();
        i.ref_logits = Some(vec![0.0, f64::NAN, 1.0]);
        assert_eq!(i.validate().unwrap_err().0, "ref_logits");

        let mut i = inst();
        i.candidate_ids.truncate(1);
        i.labels.truncate(1);
        assert_eq!(i.validate().unwrap_err().0, "candidate_ids");
    }

    #[test]
    fn sample_partition_checks() {
        assert!(PreferenceSample::new("q", vec![2, 0], vec![1]).is_ok());
        assert!(PreferenceSample::new("q", vec![2, 0], vec![0]).is_err());
        assert!(PreferenceSample::new("q", vec![], vec![0, 1]).is_err());
        assert!(PreferenceSample::new("q", vec![0], vec![3]).is_err());
        assert!(PreferenceSample::identity("q", 3, 4).is_err());
    }
}
