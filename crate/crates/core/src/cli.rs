use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use rankalign::adaptive_k::{derive_samples, AdaptiveKConfig, TauMode};
use rankalign::config::{read_grid, Manifest, RunConfig};
use rankalign::curriculum::CurriculumMode;
use rankalign::data::{
    gen_synthetic, ingest_interactions, read_dataset, read_policy, read_samples, write_dataset, write_policy,
    write_samples, InteractionLog,
};
use rankalign::eval::{evaluate, write_metric_rows, METRIC_CSV_HEADER};
use rankalign::loss::LossKind;
use rankalign::theory::{optimal_accuracy, GroundTruthPL, Method, TheoryInstance};
use rankalign::train::ablate::{write_ablation_csv, AblationBase};
use rankalign::train::{ablate, sft, train, AblationGrid, OptimizerKind};
use rankalign::{Dataset, Error, PolicyTable, PreferenceSample, Result, Seed, Split};

#[derive(Debug, Parser)]
#[command(name = "rankalign", version, about = "K-order ranking preference optimization over tabular policies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic ranking dataset.
    GenData(GenDataArgs),
    /// Build next-item ranking instances from a `user,item,timestamp` log.
    Ingest(IngestArgs),
    /// Derive query-adaptive K-order preference samples.
    DeriveK(DeriveKArgs),
    /// Supervised fine-tuning of the reference policy.
    Sft(SftArgs),
    /// Preference alignment against a frozen reference.
    Train(TrainArgs),
    /// Evaluate a policy checkpoint.
    Eval(EvalArgs),
    /// Optimal top-K ranking accuracy of KPO and S-DPO.
    Theory(TheoryArgs),
    /// Train and evaluate every cell of a parameter grid.
    Ablate(AblateArgs),
    /// Repeat a run from its manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    queries: Option<usize>,
    #[arg(long)]
    candidates: Option<usize>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    negatives: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Allow the user's earlier items as negatives.
    #[arg(long)]
    include_history: bool,
}

#[derive(Debug, Args)]
pub struct DeriveKArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    tau_mode: Option<TauMode>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    k_min: Option<usize>,
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long)]
    fixed_k: Option<usize>,
    #[arg(long)]
    swaps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Take logits from this table for instances without reference logits.
    #[arg(long = "ref")]
    reference: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SftArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Also write the dataset with missing reference logits filled from the fitted table.
    #[arg(long)]
    data_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long = "ref")]
    reference: Option<PathBuf>,
    #[arg(long)]
    samples: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    loss: Option<LossKind>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    optimizer: Option<OptimizerKind>,
    #[arg(long)]
    curriculum: Option<CurriculumMode>,
    /// Record zero phase timings so that the trace is reproducible.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    policy: PathBuf,
    #[arg(long, default_value = "test")]
    split: Split,
    /// Metrics CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TheoryMethod {
    One(Method),
    Both,
}

impl std::str::FromStr for TheoryMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "both" {
            Ok(TheoryMethod::Both)
        } else {
            s.parse().map(TheoryMethod::One)
        }
    }
}

#[derive(Debug, Args)]
pub struct TheoryArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value = "both")]
    method: TheoryMethod,
    /// Same K for every instance.
    #[arg(long)]
    k: Option<usize>,
    /// Per-instance K from derived samples.
    #[arg(long)]
    samples: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    grid: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long = "ref")]
    reference: Option<PathBuf>,
    #[arg(long)]
    no_timing: bool,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// Runs a parsed command and returns the one-line JSON summary.
pub fn run(cli: Cli) -> Result<serde_json::Value> {
    match cli.command {
        Command::GenData(a) => gen_data_cmd(a),
        Command::Ingest(a) => ingest_cmd(a),
        Command::DeriveK(a) => derive_k_cmd(a),
        Command::Sft(a) => sft_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Theory(a) => theory_cmd(a),
        Command::Ablate(a) => ablate_cmd(a),
        Command::Replay(a) => replay_cmd(a),
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    path.map_or_else(|| Ok(RunConfig::default()), RunConfig::read)
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let mut w = create(path)?;
    f(&mut w).and_then(|_| w.flush()).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn absolute(path: &Path) -> PathBuf {
    std::path::absolute(path).unwrap_or_else(|_| path.to_path_buf())
}

fn require(path: Option<PathBuf>, what: &str) -> Result<PathBuf> {
    path.ok_or_else(|| Error::Config(format!("no {what} given (flag or config paths)")))
}

fn gen_data_cmd(a: GenDataArgs) -> Result<serde_json::Value> {
    let mut cfg = load_config(a.config.as_deref())?.synthetic;
    set(&mut cfg.seed, a.seed.map(Seed));
    set(&mut cfg.n_queries, a.queries);
    set(&mut cfg.m_candidates, a.candidates);
    let ds = gen_synthetic(&cfg)?;
    write_dataset(&ds, &a.out)?;
    let [train, valid, test] = ds.split_counts();
    Ok(json!({"dataset": a.out, "instances": ds.len(), "train": train, "valid": valid, "test": test}))
}

fn ingest_cmd(a: IngestArgs) -> Result<serde_json::Value> {
    let mut cfg = load_config(a.config.as_deref())?.ingest;
    set(&mut cfg.n_negatives, a.negatives);
    set(&mut cfg.seed, a.seed.map(Seed));
    if a.include_history {
        cfg.exclude_history = false;
    }
    let log = InteractionLog::read(&a.log)?;
    let ds = ingest_interactions(&log, &cfg)?;
    write_dataset(&ds, &a.out)?;
    Ok(json!({"dataset": a.out, "instances": ds.len()}))
}

fn fill_logits(dataset: &mut Dataset, table: &PolicyTable) -> Result<usize> {
    let mut filled = 0;
    for inst in &mut dataset.instances {
        if inst.ref_logits.is_none() {
            inst.ref_logits = Some(table.params_for(inst)?.to_vec());
            filled += 1;
        }
    }
    Ok(filled)
}

fn adaptive_k_config(a: &DeriveKArgs, base: AdaptiveKConfig) -> AdaptiveKConfig {
    let mut cfg = base;
    set(&mut cfg.tau_mode, a.tau_mode);
    set(&mut cfg.tau_value, a.tau);
    set(&mut cfg.k_min, a.k_min);
    if a.k_max.is_some() {
        cfg.k_max = a.k_max;
    }
    if a.fixed_k.is_some() {
        cfg.fixed_k = a.fixed_k;
    }
    cfg
}

fn derive_k_cmd(a: DeriveKArgs) -> Result<serde_json::Value> {
    let run = load_config(a.config.as_deref())?;
    let cfg = adaptive_k_config(&a, run.adaptive_k);
    let mut ds = read_dataset(&a.data)?;
    if let Some(r) = &a.reference {
        fill_logits(&mut ds, &read_policy(r)?)?;
    }
    let selector = cfg.selector(&ds)?;
    let swaps = a.swaps.unwrap_or(run.n_swaps);
    let seed = a.seed.map_or(run.train.seed, Seed);
    let samples = derive_samples(&ds, &selector, swaps, seed, None)?;
    write_samples(&samples, &a.out)?;
    Ok(json!({"samples": a.out, "count": samples.len(), "tau": selector.tau, "mean_k": mean_k(&samples)}))
}

fn mean_k(samples: &[PreferenceSample]) -> f64 {
    samples.iter().map(|s| s.kappa as f64).sum::<f64>() / samples.len().max(1) as f64
}

fn sft_cmd(a: SftArgs) -> Result<serde_json::Value> {
    let mut cfg = load_config(a.config.as_deref())?.sft;
    set(&mut cfg.epochs, a.epochs);
    set(&mut cfg.lr, a.lr);
    let mut ds = read_dataset(&a.data)?;
    let out = sft(&ds, &cfg)?;
    write_policy(&out.policy, &a.out)?;
    if let Some(path) = &a.data_out {
        fill_logits(&mut ds, &out.policy)?;
        write_dataset(&ds, path)?;
    }
    Ok(json!({
        "reference": a.out,
        "initial_nll": out.losses.first(),
        "final_nll": out.losses.last(),
    }))
}

fn train_cmd(a: TrainArgs) -> Result<serde_json::Value> {
    let mut cfg = load_config(a.config.as_deref())?;
    if a.data.is_some() {
        cfg.paths.data = a.data;
    }
    if a.reference.is_some() {
        cfg.paths.reference = a.reference;
    }
    if a.samples.is_some() {
        cfg.paths.samples = a.samples;
    }
    set(&mut cfg.train.loss_kind, a.loss);
    set(&mut cfg.loss.beta, a.beta);
    set(&mut cfg.train.seed, a.seed.map(Seed));
    set(&mut cfg.train.epochs, a.epochs);
    set(&mut cfg.train.batch_size, a.batch_size);
    set(&mut cfg.train.lr_max, a.lr);
    set(&mut cfg.train.optimizer, a.optimizer);
    set(&mut cfg.train.curriculum, a.curriculum);
    if a.no_timing {
        cfg.train.record_timing = false;
    }
    cfg.validate()?;
    run_train(cfg, &a.out)
}

fn run_train(mut cfg: RunConfig, out: &Path) -> Result<serde_json::Value> {
    let data = absolute(&require(cfg.paths.data.clone(), "dataset")?);
    let reference = absolute(&require(cfg.paths.reference.clone(), "reference")?);
    cfg.paths.data = Some(data.clone());
    cfg.paths.reference = Some(reference.clone());
    cfg.paths.samples = cfg.paths.samples.as_deref().map(absolute);

    let ds = read_dataset(&data)?;
    let ref_table = read_policy(&reference)?;
    let samples = match &cfg.paths.samples {
        Some(p) => read_samples(p)?,
        None => {
            let selector = cfg.adaptive_k.selector(&ds)?;
            derive_samples(&ds, &selector, cfg.n_swaps, cfg.train.seed, Some(Split::Train))?
        }
    };
    let outcome = train(&ds, &samples, &ref_table, &cfg.train, &cfg.loss)?;

    create_dir(out)?;
    write_with(&out.join("trace.csv"), |w| outcome.trace.write_steps_csv(w))?;
    write_with(&out.join("metrics.csv"), |w| outcome.trace.write_metrics_csv(w))?;
    write_policy(&outcome.policy, &out.join("checkpoint.jsonl"))?;
    write_policy(&outcome.final_policy, &out.join("final.jsonl"))?;
    Manifest::new("train", cfg.clone(), None).write(&out.join("manifest.json"))?;

    let test = evaluate(&outcome.policy, &ds, Split::Test)?;
    Ok(json!({
        "run_dir": out,
        "loss_kind": cfg.train.loss_kind,
        "steps": outcome.trace.total_steps(),
        "best_step": outcome.trace.best_step,
        "test": test.values,
    }))
}

fn eval_cmd(a: EvalArgs) -> Result<serde_json::Value> {
    let ds = read_dataset(&a.data)?;
    let policy = read_policy(&a.policy)?;
    let report = evaluate(&policy, &ds, a.split)?;
    let rows = |w: &mut dyn Write| -> std::io::Result<()> {
        writeln!(w, "{METRIC_CSV_HEADER}")?;
        write_metric_rows(w, 0, a.split, &report)
    };
    match &a.out {
        Some(path) => write_with(path, |w| rows(w))?,
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            rows(&mut lock).map_err(|e| Error::Io {
                path: "<stdout>".into(),
                source: e,
            })?;
        }
    }
    Ok(json!({
        "split": a.split,
        "metrics": report.values,
        "n_instances": report.n_instances,
        "n_hr_eligible": report.n_hr_eligible,
        "n_idcg_zero": report.n_idcg_zero,
    }))
}

fn theory_cmd(a: TheoryArgs) -> Result<serde_json::Value> {
    if !(a.beta > 0.0 && a.beta.is_finite()) {
        return Err(Error::Config(format!("beta must be positive, got {}", a.beta)));
    }
    let ds = read_dataset(&a.data)?;
    let reference = read_policy(&a.reference)?;
    let ks: Vec<usize> = match (&a.samples, a.k) {
        (Some(path), _) => {
            let samples = read_samples(path)?;
            let by_id: std::collections::HashMap<&str, usize> =
                samples.iter().map(|s| (s.instance_id.as_str(), s.kappa)).collect();
            ds.instances
                .iter()
                .map(|i| {
                    by_id.get(i.instance_id.as_str()).copied().ok_or_else(|| {
                        Error::Data(format!("no sample for instance `{}`", i.instance_id))
                    })
                })
                .collect::<Result<_>>()?
        }
        (None, Some(k)) => ds.instances.iter().map(|i| k.min(i.len())).collect(),
        (None, None) => {
            let cfg = load_config(a.config.as_deref())?.adaptive_k;
            let selector = cfg.selector(&ds)?;
            derive_samples(&ds, &selector, 0, Seed(0), None)?
                .iter()
                .map(|s| s.kappa)
                .collect()
        }
    };
    let instances: Vec<TheoryInstance> = ds
        .instances
        .iter()
        .zip(&ks)
        .map(|(inst, &k)| {
            let scores = inst.scores.clone().ok_or_else(|| {
                Error::Data(format!("instance `{}` has no ground-truth scores", inst.instance_id))
            })?;
            TheoryInstance::from_scores(&GroundTruthPL::new(scores), reference.log_probs(inst)?, k)
        })
        .collect::<Result<_>>()?;
    let acc = |m: Method| optimal_accuracy(&instances, a.beta, m);
    let mut out = json!({
        "beta": a.beta,
        "n_instances": instances.len(),
        "mean_k": ks.iter().sum::<usize>() as f64 / ks.len().max(1) as f64,
        "ties_count_as_failure": true,
    });
    match a.method {
        TheoryMethod::One(m) => {
            out[m.as_str()] = json!(acc(m)?);
        }
        TheoryMethod::Both => {
            let kpo = acc(Method::Kpo)?;
            let sdpo = acc(Method::Sdpo)?;
            out["kpo"] = json!(kpo);
            out["sdpo"] = json!(sdpo);
            out["difference"] = json!(kpo - sdpo);
        }
    }
    Ok(out)
}

fn ablate_cmd(a: AblateArgs) -> Result<serde_json::Value> {
    let mut cfg = load_config(a.config.as_deref())?;
    if a.data.is_some() {
        cfg.paths.data = a.data;
    }
    if a.reference.is_some() {
        cfg.paths.reference = a.reference;
    }
    if a.no_timing {
        cfg.train.record_timing = false;
    }
    let grid = read_grid(&a.grid)?;
    run_ablate(cfg, grid, &a.out)
}

fn run_ablate(mut cfg: RunConfig, grid: AblationGrid, out: &Path) -> Result<serde_json::Value> {
    cfg.paths.data = cfg.paths.data.as_deref().map(absolute);
    cfg.paths.reference = cfg.paths.reference.as_deref().map(absolute);
    let ds = match &cfg.paths.data {
        Some(p) => read_dataset(p)?,
        None => gen_synthetic(&cfg.synthetic)?,
    };
    let reference = match &cfg.paths.reference {
        Some(p) => read_policy(p)?,
        None => sft(&ds, &cfg.sft)?.policy,
    };
    let base = AblationBase {
        adaptive_k: cfg.adaptive_k.clone(),
        train: cfg.train.clone(),
        loss: cfg.loss.clone(),
        n_swaps: cfg.n_swaps,
    };
    let rows = ablate(&ds, &reference, &base, &grid)?;
    create_dir(out)?;
    write_with(&out.join("ablation.csv"), |w| write_ablation_csv(w, &rows))?;
    Manifest::new("ablate", cfg, Some(grid)).write(&out.join("manifest.json"))?;
    Ok(json!({"run_dir": out, "cells": rows.len()}))
}

fn replay_cmd(a: ReplayArgs) -> Result<serde_json::Value> {
    let m = Manifest::read(&a.manifest)?;
    match (m.command.as_str(), m.grid) {
        ("train", _) => run_train(m.config, &a.out),
        ("ablate", Some(grid)) => run_ablate(m.config, grid, &a.out),
        (other, _) => Err(Error::Config(format!("manifest command `{other}` cannot be replayed"))),
    }
}
