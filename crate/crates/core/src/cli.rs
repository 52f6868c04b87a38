//! Command line front end: generate, label, train, eval, sweep-n.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use log::info;
use serde_json::{json, Map, Value};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::intent::{label_dataset, read_labels, write_labels, IntentLabels, SimilarityTable, LABELS_FILE};
use crate::metrics::{
    diversity_group_gauc, read_scores, user_diversity, write_scores, MetricReport, SCORES_FILE,
};
use crate::model::{load_checkpoint, save_checkpoint, DaianModel};
use crate::synth::{generate, read_dataset, write_dataset, Archetype, Dataset};
use crate::train::{intent_fit, run_pipeline, run_pipeline_with, score_requests, StageReport, TrainData, TrainMode};

pub const MODEL_FILE: &str = "model.json";
pub const REPORTS_FILE: &str = "reports.json";
pub const REPORT_FILE: &str = "report.json";
pub const INTENT_FIT_FILE: &str = "intent_fit.tsv";
pub const SWEEP_FILE: &str = "sweep_n.tsv";

#[derive(Debug, Parser)]
#[command(name = "daian", version, about = "Intent-aware CTR prediction on a synthetic trigger-induced corpus")]
pub struct Cli {
    /// key=value configuration file
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Global seed (overrides the config file)
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Override one configuration key; repeatable
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus into the output directory
    Generate,
    /// Count ground-truth intent distributions
    Label {
        /// Corpus directory (defaults to --out)
        #[arg(long)]
        data: Option<PathBuf>,
        /// Number of similarity levels
        #[arg(short = 'n', long = "n")]
        n: Option<usize>,
    },
    /// Train a model and write stage reports and checkpoints
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Labels file (defaults to DATA/labels.jsonl)
        #[arg(long)]
        labels: Option<PathBuf>,
        /// three-stage | end-to-end | din-baseline
        #[arg(long, default_value = "three-stage")]
        mode: TrainMode,
    },
    /// Score held-out impressions with a checkpoint
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Scores file of the base model, for RelaImpr and diversity groups
        #[arg(long)]
        base_scores: Option<PathBuf>,
    },
    /// Relabel and retrain for each number of similarity levels
    SweepN {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',')]
        n_list: Option<Vec<usize>>,
    },
}

/// Defaults, then the config file, then `--set`, then dedicated flags.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    for o in &cli.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {o:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    match &cli.command {
        Command::Label { n: Some(n), .. } => cfg.model.n_levels = *n,
        Command::SweepN { n_list: Some(l), .. } => cfg.sweep.n_list = l.clone(),
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = resolve_config(&cli)?;
    fs::create_dir_all(&cli.out).map_err(|e| Error::io(&cli.out, e))?;
    cfg.write_resolved(&cli.out)?;
    let out = cli.out.as_path();
    match &cli.command {
        Command::Generate => cmd_generate(&cfg, out).map(|_| ()),
        Command::Label { data, .. } => cmd_label(&cfg, data.as_deref().unwrap_or(out), out).map(|_| ()),
        Command::Train { data, labels, mode } => cmd_train(&cfg, data, labels.as_deref(), *mode, out).map(|_| ()),
        Command::Eval {
            checkpoint,
            data,
            labels,
            base_scores,
        } => cmd_eval(&cfg, checkpoint, data, labels.as_deref(), base_scores.as_deref(), out).map(|_| ()),
        Command::SweepN { data, .. } => cmd_sweep_n(&cfg, data, out).map(|_| ()),
    }
}

pub fn cmd_generate(cfg: &RunConfig, out: &Path) -> Result<Dataset> {
    let ds = generate(&cfg.synth, cfg.seed)?;
    write_dataset(&ds, out)?;
    println!(
        "items {}  users {}  requests {}  impressions {}  positive rate {:.4}",
        ds.catalog.len(),
        ds.users.len(),
        ds.requests.len(),
        ds.num_impressions(),
        ds.positive_rate()
    );
    Ok(ds)
}

pub fn cmd_label(cfg: &RunConfig, data: &Path, out: &Path) -> Result<IntentLabels> {
    let ds = read_dataset(data)?;
    let sims = SimilarityTable::new(&ds.catalog)?;
    let labels = label_dataset(&ds, &sims, cfg.model.n_levels)?;
    write_labels(&labels, &ds, &out.join(LABELS_FILE))?;
    println!(
        "n {}  labeled {}  skipped (no clicks) {}  total {}",
        labels.n,
        labels.labeled(),
        labels.skipped(),
        ds.requests.len()
    );
    Ok(labels)
}

/// Labels from `explicit`, else `DATA/labels.jsonl`. Missing labels are an
/// error when `required`, otherwise counted in memory.
fn load_labels(
    data: &Path,
    explicit: Option<&Path>,
    ds: &Dataset,
    sims: &SimilarityTable,
    n: usize,
    required: bool,
) -> Result<IntentLabels> {
    let path = explicit.map_or_else(|| data.join(LABELS_FILE), Path::to_path_buf);
    if path.exists() {
        let labels = read_labels(&path, ds)?;
        if labels.n != n {
            return Err(Error::Config(format!(
                "{} holds {}-level labels but model.n_levels={n}",
                path.display(),
                labels.n
            )));
        }
        return Ok(labels);
    }
    if required || explicit.is_some() {
        return Err(Error::Config(format!(
            "labels file {} not found; run `daian label` first",
            path.display()
        )));
    }
    label_dataset(ds, sims, n)
}

fn provenance(cfg: &RunConfig, mode: TrainMode, ds: &Dataset) -> Value {
    let pairs: Map<String, Value> = cfg
        .to_pairs()
        .into_iter()
        .map(|(k, v)| (k, Value::String(v)))
        .collect();
    json!({
        "mode": mode,
        "config": pairs,
        "dataset": { "seed": ds.seed, "requests": ds.requests.len(), "impressions": ds.num_impressions() },
    })
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::io(path, e.into()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn cmd_train(
    cfg: &RunConfig,
    data_dir: &Path,
    labels: Option<&Path>,
    mode: TrainMode,
    out: &Path,
) -> Result<Vec<StageReport>> {
    let ds = read_dataset(data_dir)?;
    let sims = SimilarityTable::new(&ds.catalog)?;
    let needs_labels = mode == TrainMode::ThreeStage && cfg.model.components.uim;
    let labels = load_labels(data_dir, labels, &ds, &sims, cfg.model.n_levels, needs_labels)?;
    let tcfg = cfg.train_config();
    let split = ds.split(tcfg.holdout_fraction);
    let data = TrainData {
        ds: &ds,
        sims: &sims,
        labels: &labels,
        split: &split,
    };
    let model_cfg = cfg.model.clone().for_dataset(&ds);
    let base = provenance(cfg, mode, &ds);
    let mut k = 0;
    let outcome = run_pipeline_with(mode, &model_cfg, &data, &tcfg, |model, report| {
        k += 1;
        let path = out.join(format!("stage{k}_{}.json", report.stage));
        let mut prov = base.clone();
        prov["stage"] = Value::String(report.stage.clone());
        save_checkpoint(model, prov, &path)?;
        report.checkpoint = Some(path.display().to_string());
        println!(
            "{:<14} steps {:>6}  final epoch loss {:.5}  {} {:.5}  {:.1}s",
            report.stage,
            report.steps,
            report.epoch_losses.last().copied().unwrap_or(f64::NAN),
            report.metric_name,
            report.metric,
            report.wall_seconds
        );
        Ok(())
    })?;
    let mut prov = base;
    prov["stages"] = outcome.reports.iter().map(|r| Value::String(r.stage.clone())).collect();
    save_checkpoint(&outcome.model, prov, &out.join(MODEL_FILE))?;
    write_json(&out.join(REPORTS_FILE), &outcome.reports)?;
    println!("total steps {}", outcome.total_steps());
    Ok(outcome.reports)
}

fn check_vocab(model: &DaianModel, ds: &Dataset) -> Result<()> {
    let c = &model.config;
    if c.n_items != ds.catalog.len() || c.n_users != ds.users.len() || c.n_side_info != ds.catalog.side_info_vocab() {
        return Err(Error::Checkpoint(format!(
            "checkpoint sized for {} items / {} users / {} side-info ids, corpus has {} / {} / {}",
            c.n_items,
            c.n_users,
            c.n_side_info,
            ds.catalog.len(),
            ds.users.len(),
            ds.catalog.side_info_vocab()
        )));
    }
    Ok(())
}

/// Holdout fraction recorded at training time, if any.
fn trained_holdout(prov: &Value) -> Option<f64> {
    prov.get("config")?
        .get("train.holdout_fraction")?
        .as_str()?
        .parse()
        .ok()
}

pub fn cmd_eval(
    cfg: &RunConfig,
    checkpoint: &Path,
    data_dir: &Path,
    labels: Option<&Path>,
    base_scores: Option<&Path>,
    out: &Path,
) -> Result<MetricReport> {
    let (model, prov) = load_checkpoint(checkpoint)?;
    let ds = read_dataset(data_dir)?;
    check_vocab(&model, &ds)?;
    let sims = SimilarityTable::new(&ds.catalog)?;
    let labels = load_labels(data_dir, labels, &ds, &sims, model.config.n_levels, false)?;
    let holdout = trained_holdout(&prov).unwrap_or(cfg.train.holdout_fraction);
    let split = ds.split(holdout);
    let data = TrainData {
        ds: &ds,
        sims: &sims,
        labels: &labels,
        split: &split,
    };
    let diversity = user_diversity(&ds, &split.train)?;
    let scores = score_requests(&model, &data, &split.test, Some(&diversity))?;
    write_scores(&scores, &out.join(SCORES_FILE))?;
    let mut report = MetricReport::from_scores(&scores)?;
    if let Some(path) = base_scores {
        let base = read_scores(path)?;
        let base_report = MetricReport::from_scores(&base)?;
        report = report.with_base(&path.display().to_string(), &base_report)?;
        report.diversity = Some(diversity_group_gauc(&scores, &base, &cfg.eval.bucket_edges)?);
    }
    if model.uim.is_some() {
        let fit = intent_fit(&model, &data, &split.test)?;
        let mut rows = vec!["archetype\tlevel\tpredicted\tground_truth".to_string()];
        for a in [Archetype::Specific, Archetype::Broad] {
            rows.extend(fit.plot_rows(a));
        }
        let path = out.join(INTENT_FIT_FILE);
        fs::write(&path, rows.join("\n") + "\n").map_err(|e| Error::io(path, e))?;
        report.intent_fit = Some(fit);
    }
    write_json(&out.join(REPORT_FILE), &report)?;
    println!("AUC {:.4}  GAUC {:.4}  impressions {}", report.auc, report.gauc, report.impressions);
    if let (Some(a), Some(g)) = (report.rela_impr_auc, report.rela_impr_gauc) {
        println!("RelaImpr AUC {a:.2}%  GAUC {g:.2}%");
    }
    info!("scores written to {}", out.join(SCORES_FILE).display());
    Ok(report)
}

/// One row of the n sweep.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct SweepRow {
    pub n: usize,
    pub auc: f64,
    pub gauc: f64,
}

pub fn cmd_sweep_n(cfg: &RunConfig, data_dir: &Path, out: &Path) -> Result<Vec<SweepRow>> {
    let ds = read_dataset(data_dir)?;
    let sims = SimilarityTable::new(&ds.catalog)?;
    let tcfg = cfg.train_config();
    let split = ds.split(tcfg.holdout_fraction);
    let mut rows = Vec::new();
    for &n in &cfg.sweep.n_list {
        if n < 2 {
            return Err(Error::Config(format!("n must be at least 2, got {n}")));
        }
        let labels = label_dataset(&ds, &sims, n)?;
        let data = TrainData {
            ds: &ds,
            sims: &sims,
            labels: &labels,
            split: &split,
        };
        let mut model_cfg = cfg.model.clone().for_dataset(&ds);
        model_cfg.n_levels = n;
        let outcome = run_pipeline(TrainMode::ThreeStage, &model_cfg, &data, &tcfg)?;
        let report = MetricReport::from_scores(&score_requests(&outcome.model, &data, &split.test, None)?)?;
        println!("n {n:>2}  AUC {:.4}  GAUC {:.4}", report.auc, report.gauc);
        rows.push(SweepRow {
            n,
            auc: report.auc,
            gauc: report.gauc,
        });
    }
    let mut text = String::from("n\tauc\tgauc\n");
    for r in &rows {
        text += &format!("{}\t{:.6}\t{:.6}\n", r.n, r.auc, r.gauc);
    }
    let path = out.join(SWEEP_FILE);
    fs::write(&path, text).map_err(|e| Error::io(path, e))?;
    Ok(rows)
}
