//! Line-delimited JSON files: datasets, preference samples and policy checkpoints.
//!
//! One record per line. Floats are written in shortest round-trip form, so
//! reading a written file reproduces every value bit for bit.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::policy::PolicyTable;
use crate::types::{Dataset, PreferenceSample, RankingInstance, Split};

const INSTANCE_FIELDS: [&str; 8] = [
    "instance_id",
    "candidate_ids",
    "labels",
    "ref_logits",
    "split",
    "scores",
    "lengths",
    "history",
];
const REQUIRED_FIELDS: [&str; 4] = ["instance_id", "candidate_ids", "labels", "split"];

fn perr(line: usize, field: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        field: field.to_string(),
        message: message.into(),
    }
}

fn field<T: DeserializeOwned>(obj: &Map<String, Value>, name: &str, line: usize) -> Result<T> {
    let v = obj.get(name).cloned().unwrap_or(Value::Null);
    serde_json::from_value(v).map_err(|e| perr(line, name, e.to_string()))
}

fn parse_object(text: &str, line: usize) -> Result<Map<String, Value>> {
    match serde_json::from_str::<Value>(text) {
        Ok(Value::Object(obj)) => Ok(obj),
        Ok(_) => Err(perr(line, "<record>", "expected a JSON object")),
        Err(e) => Err(perr(line, "<record>", e.to_string())),
    }
}

/// Parses one dataset record, naming the offending field on failure.
pub fn parse_instance(text: &str, line: usize) -> Result<RankingInstance> {
    let obj = parse_object(text, line)?;
    if let Some(unknown) = obj.keys().find(|k| !INSTANCE_FIELDS.contains(&k.as_str())) {
        return Err(perr(line, unknown, "unknown field"));
    }
    if let Some(missing) = REQUIRED_FIELDS.iter().find(|f| !obj.contains_key(**f)) {
        return Err(perr(line, missing, "missing field"));
    }
    let split: String = field(&obj, "split", line)?;
    let inst = RankingInstance {
        instance_id: field(&obj, "instance_id", line)?,
        candidate_ids: field(&obj, "candidate_ids", line)?,
        labels: field(&obj, "labels", line)?,
        ref_logits: field(&obj, "ref_logits", line)?,
        split: split
            .parse::<Split>()
            .map_err(|e| perr(line, "split", e.to_string()))?,
        scores: field(&obj, "scores", line)?,
        lengths: field(&obj, "lengths", line)?,
        history: field(&obj, "history", line)?,
    };
    inst.validate().map_err(|(f, msg)| perr(line, f, msg))?;
    Ok(inst)
}

fn for_each_line(path: &Path, mut f: impl FnMut(&str, usize) -> Result<()>) -> Result<()> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        f(&line, i + 1)?;
    }
    Ok(())
}

pub fn parse_dataset(text: &str) -> Result<Dataset> {
    let mut ds = Dataset::default();
    let mut ids = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        push_unique(&mut ds, &mut ids, parse_instance(line, i + 1)?, i + 1)?;
    }
    Ok(ds)
}

fn push_unique(ds: &mut Dataset, ids: &mut HashSet<String>, inst: RankingInstance, line: usize) -> Result<()> {
    if !ids.insert(inst.instance_id.clone()) {
        return Err(perr(
            line,
            "instance_id",
            format!("duplicate instance id `{}`", inst.instance_id),
        ));
    }
    ds.instances.push(inst);
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let mut ds = Dataset::default();
    let mut ids = HashSet::new();
    for_each_line(path, |line, n| push_unique(&mut ds, &mut ids, parse_instance(line, n)?, n))?;
    Ok(ds)
}

fn write_lines<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, &item)
            .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    write_lines(path, &dataset.instances)
}

pub fn write_samples(samples: &[PreferenceSample], path: &Path) -> Result<()> {
    write_lines(path, samples)
}

pub fn read_samples(path: &Path) -> Result<Vec<PreferenceSample>> {
    let mut out = Vec::new();
    for_each_line(path, |line, n| {
        let s: PreferenceSample =
            serde_json::from_str(line).map_err(|e| perr(n, "<record>", e.to_string()))?;
        s.validate().map_err(|e| perr(n, "head", e.to_string()))?;
        out.push(s);
        Ok(())
    })?;
    Ok(out)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyRow {
    instance_id: String,
    params: Vec<f64>,
}

pub fn write_policy(policy: &PolicyTable, path: &Path) -> Result<()> {
    write_lines(
        path,
        policy.iter().map(|(id, p)| PolicyRow {
            instance_id: id.to_string(),
            params: p.to_vec(),
        }),
    )
}

pub fn read_policy(path: &Path) -> Result<PolicyTable> {
    let mut table = PolicyTable::new();
    for_each_line(path, |line, n| {
        let row: PolicyRow =
            serde_json::from_str(line).map_err(|e| perr(n, "<record>", e.to_string()))?;
        if row.params.iter().any(|p| !p.is_finite()) {
            return Err(perr(n, "params", "non-finite parameter"));
        }
        if table.contains(&row.instance_id) {
            return Err(perr(n, "instance_id", format!("duplicate instance id `{}`", row.instance_id)));
        }
        table.insert(row.instance_id, row.params);
        Ok(())
    })?;
    Ok(table)
}
