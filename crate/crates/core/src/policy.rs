use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::numeric::log_softmax;
use crate::types::{Dataset, RankingInstance};

/// Per-instance pre-softmax parameters.
///
/// `log π(y_i | x) = u[x][i] - logsumexp_j u[x][j]`, normalized over the
/// instance's own candidate set. Used both for the trained policy and the
/// frozen reference.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PolicyTable {
    rows: IndexMap<String, Vec<f64>>,
}

impl PolicyTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Uniform policy (all parameters zero) covering every instance.
    pub fn uniform(dataset: &Dataset) -> Self {
        let rows = dataset
            .instances
            .iter()
            .map(|i| (i.instance_id.clone(), vec![0.0; i.len()]))
            .collect();
        PolicyTable { rows }
    }

    /// Parameters initialized from the dataset's reference logits, zero where absent.
    pub fn from_ref_logits(dataset: &Dataset) -> Self {
        let rows = dataset
            .instances
            .iter()
            .map(|i| {
                let row = i.ref_logits.clone().unwrap_or_else(|| vec![0.0; i.len()]);
                (i.instance_id.clone(), row)
            })
            .collect();
        PolicyTable { rows }
    }

    pub fn insert(&mut self, instance_id: impl Into<String>, params: Vec<f64>) {
        self.rows.insert(instance_id.into(), params);
    }

    pub fn params(&self, instance_id: &str) -> Result<&[f64]> {
        self.rows
            .get(instance_id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Lookup {
                instance_id: instance_id.to_string(),
            })
    }

    pub fn params_mut(&mut self, instance_id: &str) -> Result<&mut Vec<f64>> {
        self.rows.get_mut(instance_id).ok_or_else(|| Error::Lookup {
            instance_id: instance_id.to_string(),
        })
    }

    /// Parameters of an instance, checked against its candidate count.
    pub fn params_for(&self, instance: &RankingInstance) -> Result<&[f64]> {
        let row = self.params(&instance.instance_id)?;
        if row.len() != instance.len() {
            return Err(Error::data(format!(
                "instance `{}` has {} candidates but the policy row has {}",
                instance.instance_id,
                instance.len(),
                row.len()
            )));
        }
        Ok(row)
    }

    pub fn log_probs(&self, instance: &RankingInstance) -> Result<Vec<f64>> {
        Ok(log_softmax(self.params_for(instance)?))
    }

    pub fn probs(&self, instance: &RankingInstance) -> Result<Vec<f64>> {
        Ok(self.log_probs(instance)?.into_iter().map(f64::exp).collect())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.rows.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn contains(&self, instance_id: &str) -> bool {
        self.rows.contains_key(instance_id)
    }
}

impl FromIterator<(String, Vec<f64>)> for PolicyTable {
    fn from_iter<T: IntoIterator<Item = (String, Vec<f64>)>>(iter: T) -> Self {
        PolicyTable {
            rows: iter.into_iter().collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Split;
    use proptest::prelude::*;

    fn instance(m: usize) -> RankingInstance {
        RankingInstance::new(
            "q",
            (0..m).map(|i| format!("c{i}")).collect(),
            vec![0; m],
            Split::Train,
        )
    }

    #[test]
    fn lookup_error_names_instance() {
        let t = PolicyTable::new();
        match t.params("missing") {
            Err(Error::Lookup { instance_id }) => assert_eq!(instance_id, "missing"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn row_length_mismatch_is_reported() {
        let mut t = PolicyTable::new();
        t.insert("q", vec![0.0; 2]);
        assert!(t.log_probs(&instance(3)).is_err());
    }

    proptest! {
        #[test]
        fn rows_normalize(u in proptest::collection::vec(-30.0f64..30.0, 2..20)) {
            let inst = instance(u.len());
            let mut t = PolicyTable::new();
            t.insert("q", u);
            let s: f64 = t.probs(&inst).unwrap().iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-12);
        }
    }
}
