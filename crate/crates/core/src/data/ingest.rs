use std::path::Path;

use indexmap::{IndexMap, IndexSet};
use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use super::split_sizes;
use crate::error::{Error, Result};
use crate::seed::Seed;
use crate::types::{Dataset, RankingInstance, Split, MAX_LABEL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub user: String,
    pub item: String,
    pub timestamp: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct InteractionLog {
    pub records: Vec<Interaction>,
}

impl InteractionLog {
    /// Reads `user,item,timestamp` rows; the header row is required.
    pub fn read(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file)
    }

    pub fn from_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| parse_err(1, "<header>", e))?.clone();
        for col in ["user", "item", "timestamp"] {
            if !headers.iter().any(|h| h == col) {
                return Err(Error::Parse {
                    line: 1,
                    field: col.into(),
                    message: "missing column in header".into(),
                });
            }
        }
        let mut records = Vec::new();
        for (i, row) in rdr.deserialize::<Interaction>().enumerate() {
            records.push(row.map_err(|e| parse_err(i + 2, "<row>", e))?);
        }
        Ok(InteractionLog { records })
    }
}

fn parse_err(line: usize, field: &str, e: csv::Error) -> Error {
    Error::Parse {
        line,
        field: field.into(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub n_negatives: usize,
    /// Exclude every item the user ever touched from the negative pool; when
    /// false only the target item is excluded.
    pub exclude_history: bool,
    pub seed: Seed,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            n_negatives: 19,
            exclude_history: true,
            seed: Seed(0),
        }
    }
}

/// Turns per-user interaction sequences into next-item ranking instances.
///
/// For a user with chronological items `i_1..i_n`, position `t` yields an
/// instance whose ground truth is `i_{t+1}` (label 3) and whose context is
/// `i_1..i_t`; negatives (label 0) are sampled uniformly without replacement.
/// The `n-1` instances of each user are split 8:1:1 chronologically.
pub fn ingest_interactions(log: &InteractionLog, config: &IngestConfig) -> Result<Dataset> {
    let mut by_user: IndexMap<&str, Vec<(f64, &str)>> = IndexMap::new();
    let mut catalog: IndexSet<&str> = IndexSet::new();
    for r in &log.records {
        by_user.entry(&r.user).or_default().push((r.timestamp, &r.item));
        catalog.insert(&r.item);
    }

    let mut instances = Vec::new();
    for (u_idx, (user, events)) in by_user.iter_mut().enumerate() {
        if events.len() < 2 {
            return Err(Error::data(format!("user `{user}` has fewer than 2 interactions")));
        }
        // stable: equal timestamps keep input order
        events.sort_by(|a, b| a.0.total_cmp(&b.0));
        let seen: IndexSet<&str> = events.iter().map(|e| e.1).collect();
        let n_targets = events.len() - 1;
        let (n_train, n_valid, _) = split_sizes(n_targets);
        let user_seed = config.seed.derive(u_idx as u64);

        for t in 1..events.len() {
            let target = events[t].1;
            let pool: Vec<&str> = catalog
                .iter()
                .copied()
                .filter(|it| {
                    if config.exclude_history {
                        !seen.contains(it)
                    } else {
                        *it != target
                    }
                })
                .collect();
            if pool.len() < config.n_negatives {
                return Err(Error::data(format!(
                    "catalog leaves {} candidate negatives for user `{user}`, need {} (catalog must exceed n_negatives)",
                    pool.len(),
                    config.n_negatives
                )));
            }
            let mut rng = user_seed.rng(t as u64);
            let mut candidates: Vec<(&str, u8)> = index::sample(&mut rng, pool.len(), config.n_negatives)
                .into_iter()
                .map(|i| (pool[i], 0))
                .collect();
            candidates.push((target, MAX_LABEL));
            candidates.shuffle(&mut rng);

            let pos = t - 1;
            let split = if pos < n_train {
                Split::Train
            } else if pos < n_train + n_valid {
                Split::Valid
            } else {
                Split::Test
            };
            let mut inst = RankingInstance::new(
                format!("{user}#{t}"),
                candidates.iter().map(|c| c.0.to_string()).collect(),
                candidates.iter().map(|c| c.1).collect(),
                split,
            );
            inst.history = Some(events[..t].iter().map(|e| e.1.to_string()).collect());
            instances.push(inst);
        }
    }
    Ok(Dataset::new(instances))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log() -> InteractionLog {
        let mut csv = String::from("user,item,timestamp\n");
        for u in 0..3 {
            for t in 0..12 {
                csv.push_str(&format!("u{u},it{},{}\n", (u * 5 + t * 3) % 40, 100 - t));
            }
        }
        // make sure the catalog holds every item
        for it in 0..40 {
            csv.push_str(&format!("f{it},it{it},1\nf{it},it{},2\n", (it + 1) % 40));
        }
        InteractionLog::from_reader(csv.as_bytes()).unwrap()
    }

    #[test]
    fn nineteen_negatives_make_twenty_candidates() {
        let ds = ingest_interactions(&log(), &IngestConfig::default()).unwrap();
        for inst in &ds.instances {
            inst.validate().unwrap();
            assert_eq!(inst.len(), 20);
            assert_eq!(inst.labels.iter().filter(|&&l| l == MAX_LABEL).count(), 1);
            assert_eq!(inst.labels.iter().filter(|&&l| l > 0).count(), 1);
        }
    }

    #[test]
    fn chronology_and_exclusion() {
        let ds = ingest_interactions(&log(), &IngestConfig::default()).unwrap();
        let first = &ds.instances[0];
        // u0's events have descending timestamps in input, so the last row is first in time
        assert_eq!(first.history.as_ref().unwrap(), &vec!["it33".to_string()]);
        let gt = &first.candidate_ids[first.top_labeled()];
        assert_eq!(gt, "it30");
        let users_items: Vec<String> = (0..12).map(|t| format!("it{}", (t * 3) % 40)).collect();
        for inst in ds.instances.iter().filter(|i| i.instance_id.starts_with("u0#")) {
            for (c, &l) in inst.candidate_ids.iter().zip(&inst.labels) {
                if l == 0 {
                    assert!(!users_items.contains(c));
                }
            }
        }
    }

    #[test]
    fn deterministic_and_split() {
        let a = ingest_interactions(&log(), &IngestConfig::default()).unwrap();
        let b = ingest_interactions(&log(), &IngestConfig::default()).unwrap();
        assert_eq!(a, b);
        let u0: Vec<Split> = a.instances.iter().filter(|i| i.instance_id.starts_with("u0#")).map(|i| i.split).collect();
        assert_eq!(u0.len(), 11);
        assert_eq!(u0.iter().filter(|&&s| s == Split::Train).count(), 9);
        assert_eq!(*u0.last().unwrap(), Split::Test);
    }

    #[test]
    fn small_catalog_is_an_error() {
        let csv = "user,item,timestamp\na,x,1\na,y,2\nb,z,1\nb,x,2\n";
        let log = InteractionLog::from_reader(csv.as_bytes()).unwrap();
        assert!(matches!(
            ingest_interactions(&log, &IngestConfig::default()),
            Err(Error::Data(_))
        ));
        let ok = IngestConfig { n_negatives: 1, ..Default::default() };
        assert!(ingest_interactions(&log, &ok).is_ok());
    }

    #[test]
    fn header_is_required() {
        let csv = "a,x,1\na,y,2\n";
        assert!(matches!(InteractionLog::from_reader(csv.as_bytes()), Err(Error::Parse { .. })));
    }
}
