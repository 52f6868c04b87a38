//! Three-stage training, the end-to-end comparator and the DIN baseline.
//!
//! Stage 1 fits the intent estimator (θ) to counted intent labels with KL.
//! Stage 2 trains extraction/gating (η) and the tower (φ) on clicks with
//! the ground-truth intent substituted for the estimate, θ frozen.
//! Stage 3 trains everything on clicks with the estimate, θ at a reduced
//! learning rate.

mod score;

pub use score::{evaluate, intent_fit, predict_intents, score_requests, SCORE_CHUNK};

use std::time::Instant;

use log::{debug, info};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intent::{IntentLabels, SimilarityTable};
use crate::model::{Components, Context, DaianModel, IntentMode, ModelConfig};
use crate::numeric::{AdaGrad, Graph, ParamGroup, Var};
use crate::seed::{derive_seed, rng_for};
use crate::synth::{Dataset, Split};

const STREAM_UIM: u64 = 0x11;
const STREAM_DIE: u64 = 0x12;
const STREAM_JOINT: u64 = 0x13;
const STREAM_E2E: u64 = 0x14;
const STREAM_DIN: u64 = 0x15;
const STREAM_INIT: u64 = 0x20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Impressions per step in the click stages, requests per step in stage 1.
    pub batch_size: usize,
    pub lr: f64,
    /// θ learning rate in stage 3, relative to `lr`.
    pub uim_finetune_lr_ratio: f64,
    pub epochs_uim: usize,
    pub epochs_die: usize,
    pub epochs_joint: usize,
    pub holdout_fraction: f64,
    /// Re-draw φ before stage 3.
    pub reinit_phi: bool,
    /// Weight of an intent KL term kept during stage 3 (0 removes it).
    pub joint_kl_weight: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 256,
            lr: 0.05,
            uim_finetune_lr_ratio: 0.1,
            epochs_uim: 3,
            epochs_die: 1,
            epochs_joint: 1,
            holdout_fraction: 0.2,
            reinit_phi: false,
            joint_kl_weight: 0.0,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("train.lr must be positive, got {}", self.lr)));
        }
        if !(0.0..=1.0).contains(&self.uim_finetune_lr_ratio) {
            return Err(Error::Config(format!(
                "train.uim_finetune_lr_ratio must lie in [0, 1], got {}",
                self.uim_finetune_lr_ratio
            )));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::Config("train.holdout_fraction must lie in [0, 1)".into()));
        }
        if !(self.joint_kl_weight >= 0.0) {
            return Err(Error::Config("train.joint_kl_weight must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: String,
    pub epochs: usize,
    pub steps: usize,
    /// Loss over the training examples before the first update.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_loss: Option<f64>,
    /// Mean step loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub step_losses: Vec<f64>,
    pub wall_seconds: f64,
    pub metric_name: String,
    pub metric: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
}

/// Everything a training run reads.
#[derive(Clone, Copy)]
pub struct TrainData<'a> {
    pub ds: &'a Dataset,
    pub sims: &'a SimilarityTable,
    pub labels: &'a IntentLabels,
    pub split: &'a Split,
}

impl<'a> TrainData<'a> {
    pub fn ctx(&self) -> Context<'a> {
        Context {
            catalog: &self.ds.catalog,
            users: &self.ds.users,
            sims: self.sims,
        }
    }

    pub fn train_impressions(&self) -> usize {
        self.split
            .train
            .iter()
            .map(|&r| self.ds.requests[r].impressions.len())
            .sum()
    }

    pub fn labeled_train(&self) -> Vec<usize> {
        self.split
            .train
            .iter()
            .copied()
            .filter(|&r| self.labels.get(r).is_some())
            .collect()
    }

    pub fn labeled_test(&self) -> Vec<usize> {
        self.split
            .test
            .iter()
            .copied()
            .filter(|&r| self.labels.get(r).is_some())
            .collect()
    }
}

/// Impressions of one request that fall in a batch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Chunk {
    pub req: usize,
    pub cands: Vec<usize>,
}

/// Click-stage batches for one epoch: training requests are shuffled, their
/// impressions laid end to end and cut every `batch_size` impressions.
pub fn ctr_batches(data: &TrainData<'_>, batch_size: usize, seed: u64) -> Vec<Vec<Chunk>> {
    let mut order = data.split.train.clone();
    order.shuffle(&mut rng_for(seed, 0, 0));
    let mut batches = Vec::new();
    let mut current: Vec<Chunk> = Vec::new();
    let mut filled = 0;
    for r in order {
        for i in 0..data.ds.requests[r].impressions.len() {
            match current.last_mut() {
                Some(c) if c.req == r => c.cands.push(i),
                _ => current.push(Chunk { req: r, cands: vec![i] }),
            }
            filled += 1;
            if filled == batch_size {
                batches.push(std::mem::take(&mut current));
                filled = 0;
            }
        }
    }
    if !current.is_empty() {
        batches.push(current);
    }
    batches
}

fn uim_batches(requests: &[usize], batch_size: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order = requests.to_vec();
    order.shuffle(&mut rng_for(seed, 0, 0));
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

pub fn ctr_steps_per_epoch(data: &TrainData<'_>, batch_size: usize) -> usize {
    data.train_impressions().div_ceil(batch_size)
}

pub fn uim_steps_per_epoch(data: &TrainData<'_>, batch_size: usize) -> usize {
    data.labeled_train().len().div_ceil(batch_size)
}

/// Gradient steps of a full three-stage run.
pub fn three_stage_budget(components: Components, data: &TrainData<'_>, cfg: &TrainConfig) -> usize {
    let s1 = if components.uim {
        cfg.epochs_uim * uim_steps_per_epoch(data, cfg.batch_size)
    } else {
        0
    };
    s1 + (cfg.epochs_die + cfg.epochs_joint) * ctr_steps_per_epoch(data, cfg.batch_size)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum IntentFeed {
    Predicted,
    GroundTruth,
}

/// Mean BCE over the impressions of `chunks`.
fn ctr_loss(
    model: &DaianModel,
    g: &mut Graph<'_>,
    data: &TrainData<'_>,
    chunks: &[Chunk],
    feed: IntentFeed,
    kl_weight: f64,
) -> Result<Var> {
    let ctx = data.ctx();
    let mut preds = Vec::with_capacity(chunks.len());
    let mut labels = Vec::new();
    let mut intents = Vec::new();
    let mut targets = Vec::new();
    for ch in chunks {
        let req = &data.ds.requests[ch.req];
        let mode = match feed {
            IntentFeed::Predicted => IntentMode::Predicted,
            IntentFeed::GroundTruth => IntentMode::GroundTruth(data.labels.get(ch.req)),
        };
        let out = model.forward_request(g, &ctx, req, &ch.cands, mode)?;
        preds.push(out.p_ctr);
        labels.extend(ch.cands.iter().map(|&i| req.impressions[i].label as f64));
        if kl_weight > 0.0 {
            if let (Some(e), Some(y)) = (out.e_int, data.labels.get(ch.req)) {
                intents.push(e);
                targets.extend_from_slice(y);
            }
        }
    }
    let p = g.concat_rows(&preds)?;
    let bce = g.bce(p, &labels)?;
    if intents.is_empty() {
        return Ok(bce);
    }
    let q = g.concat_rows(&intents)?;
    let kl = g.kl(&targets, q)?;
    let kl = g.scale(kl, kl_weight);
    g.add(bce, kl)
}

/// Mean KL(y_int ‖ E_int) over labeled requests.
fn kl_loss(model: &DaianModel, g: &mut Graph<'_>, data: &TrainData<'_>, reqs: &[usize]) -> Result<Var> {
    let ctx = data.ctx();
    let mut rows = Vec::with_capacity(reqs.len());
    let mut targets = Vec::with_capacity(reqs.len() * data.labels.n);
    for &r in reqs {
        let y = data
            .labels
            .get(r)
            .ok_or_else(|| Error::Data(format!("request index {r} has no intent label")))?;
        rows.push(model.uim_forward(g, &ctx, &data.ds.requests[r])?);
        targets.extend_from_slice(y);
    }
    let q = g.concat_rows(&rows)?;
    g.kl(&targets, q)
}

fn step(
    model: &mut DaianModel,
    opt: &mut AdaGrad,
    frozen: &[ParamGroup],
    scale: impl Fn(ParamGroup) -> f64,
    stage: &str,
    step_no: usize,
    build: impl Fn(&DaianModel, &mut Graph<'_>) -> Result<Var>,
) -> Result<f64> {
    let (loss, grads) = {
        let mut g = Graph::with_params(&model.params);
        for &f in frozen {
            g.freeze(f);
        }
        let diverged = || Error::NanLoss {
            stage: stage.to_string(),
            step: step_no,
        };
        // inputs are validated up front, so a non-finite intermediate means divergence
        let loss = match build(model, &mut g) {
            Err(Error::NumericInput(_)) => return Err(diverged()),
            other => other?,
        };
        let value = g.scalar(loss);
        if !value.is_finite() {
            return Err(diverged());
        }
        (value, g.backward(loss)?.into_params())
    };
    opt.step(&mut model.params, &grads, scale)?;
    Ok(loss)
}

/// Stage 1: fit θ to the counted intent labels.
pub fn pretrain_uim(model: &mut DaianModel, data: &TrainData<'_>, cfg: &TrainConfig) -> Result<StageReport> {
    const STAGE: &str = "uim_pretrain";
    if model.uim.is_none() {
        return Err(Error::Config("model has no intent estimator to pretrain".into()));
    }
    if data.labels.n != model.config.n_levels {
        return Err(Error::Config(format!(
            "labels have {} levels, model expects {}",
            data.labels.n, model.config.n_levels
        )));
    }
    let train = data.labeled_train();
    if train.is_empty() {
        return Err(Error::Config("no labeled training requests for intent pretraining".into()));
    }
    let start = Instant::now();
    let initial_loss = mean_kl(model, data, &train)?;
    info!("{STAGE}: initial KL {initial_loss:.5} over {} requests", train.len());
    let mut opt = AdaGrad::new(cfg.lr);
    let frozen = [ParamGroup::Die, ParamGroup::Base];
    let scale = |g: ParamGroup| if g == ParamGroup::Uim { 1.0 } else { 0.0 };
    let mut step_losses = Vec::new();
    let mut epoch_losses = Vec::new();
    for epoch in 0..cfg.epochs_uim {
        let seed = derive_seed(cfg.seed, STREAM_UIM, epoch as u64);
        let batches = uim_batches(&train, cfg.batch_size, seed);
        let mut total = 0.0;
        for b in &batches {
            let l = step(model, &mut opt, &frozen, scale, STAGE, step_losses.len(), |m, g| {
                kl_loss(m, g, data, b)
            })?;
            total += l;
            step_losses.push(l);
        }
        epoch_losses.push(total / batches.len() as f64);
        info!("{STAGE}: epoch {epoch} mean KL {:.5}", epoch_losses[epoch]);
    }
    let test = data.labeled_test();
    let metric = if test.is_empty() { f64::NAN } else { mean_kl(model, data, &test)? };
    Ok(StageReport {
        stage: STAGE.into(),
        epochs: cfg.epochs_uim,
        steps: step_losses.len(),
        initial_loss: Some(initial_loss),
        epoch_losses,
        step_losses,
        wall_seconds: start.elapsed().as_secs_f64(),
        metric_name: "heldout_kl".into(),
        metric,
        checkpoint: None,
    })
}

/// Mean KL(y_int ‖ E_int) over `reqs` without updating anything.
pub fn mean_kl(model: &DaianModel, data: &TrainData<'_>, reqs: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    for chunk in reqs.chunks(SCORE_CHUNK) {
        let mut g = Graph::with_params(&model.params);
        let l = kl_loss(model, &mut g, data, chunk)?;
        total += g.scalar(l) * chunk.len() as f64;
    }
    Ok(total / reqs.len() as f64)
}

#[allow(clippy::too_many_arguments)]
fn ctr_stage(
    model: &mut DaianModel,
    data: &TrainData<'_>,
    cfg: &TrainConfig,
    stage: &str,
    stream: u64,
    epochs: usize,
    max_steps: Option<usize>,
    feed: IntentFeed,
    frozen: &[ParamGroup],
    scale: impl Fn(ParamGroup) -> f64 + Copy,
    kl_weight: f64,
) -> Result<StageReport> {
    let start = Instant::now();
    let mut opt = AdaGrad::new(cfg.lr);
    let mut step_losses = Vec::new();
    let mut epoch_losses = Vec::new();
    let mut epoch = 0;
    loop {
        let done = match max_steps {
            Some(m) => step_losses.len() >= m,
            None => epoch >= epochs,
        };
        if done {
            break;
        }
        let batches = ctr_batches(data, cfg.batch_size, derive_seed(cfg.seed, stream, epoch as u64));
        let mut total = 0.0;
        let mut count = 0;
        for b in &batches {
            if max_steps.is_some_and(|m| step_losses.len() >= m) {
                break;
            }
            let l = step(model, &mut opt, frozen, scale, stage, step_losses.len(), |m, g| {
                ctr_loss(m, g, data, b, feed, kl_weight)
            })?;
            total += l;
            count += 1;
            step_losses.push(l);
            if step_losses.len() % 200 == 0 {
                debug!("{stage}: step {} loss {l:.5}", step_losses.len());
            }
        }
        if count == 0 {
            break;
        }
        epoch_losses.push(total / count as f64);
        info!("{stage}: epoch {epoch} mean BCE {:.5}", total / count as f64);
        epoch += 1;
    }
    let metric = if data.split.test.is_empty() {
        f64::NAN
    } else {
        evaluate(model, data, &data.split.test)?.auc
    };
    info!("{stage}: held-out AUC {metric:.5}");
    Ok(StageReport {
        stage: stage.into(),
        epochs: epoch,
        steps: step_losses.len(),
        initial_loss: None,
        epoch_losses,
        step_losses,
        wall_seconds: start.elapsed().as_secs_f64(),
        metric_name: "heldout_auc".into(),
        metric,
        checkpoint: None,
    })
}

/// Stage 2: clicks with ground-truth intent substituted; θ frozen.
pub fn pretrain_die(model: &mut DaianModel, data: &TrainData<'_>, cfg: &TrainConfig) -> Result<StageReport> {
    if model.config.components.uim && data.labels.n != model.config.n_levels {
        return Err(Error::Config("intent labels do not match the model's level count".into()));
    }
    ctr_stage(
        model,
        data,
        cfg,
        "die_pretrain",
        STREAM_DIE,
        cfg.epochs_die,
        None,
        IntentFeed::GroundTruth,
        &[ParamGroup::Uim],
        |g| if g == ParamGroup::Uim { 0.0 } else { 1.0 },
        0.0,
    )
}

/// Stage 3: clicks with the estimated intent; θ fine-tuned at a reduced rate.
pub fn train_joint(model: &mut DaianModel, data: &TrainData<'_>, cfg: &TrainConfig) -> Result<StageReport> {
    if cfg.reinit_phi {
        model.reinit_group(ParamGroup::Base, derive_seed(cfg.seed, STREAM_INIT, 3))?;
    }
    let ratio = cfg.uim_finetune_lr_ratio;
    let frozen: &[ParamGroup] = if ratio == 0.0 { &[ParamGroup::Uim] } else { &[] };
    ctr_stage(
        model,
        data,
        cfg,
        "joint",
        STREAM_JOINT,
        cfg.epochs_joint,
        None,
        IntentFeed::Predicted,
        frozen,
        move |g| if g == ParamGroup::Uim { ratio } else { 1.0 },
        cfg.joint_kl_weight,
    )
}

/// All groups from scratch on clicks only, for exactly `budget` steps.
pub fn train_end_to_end(
    model: &mut DaianModel,
    data: &TrainData<'_>,
    cfg: &TrainConfig,
    budget: usize,
) -> Result<StageReport> {
    ctr_stage(
        model,
        data,
        cfg,
        "end_to_end",
        STREAM_E2E,
        0,
        Some(budget),
        IntentFeed::Predicted,
        &[],
        |_| 1.0,
        0.0,
    )
}

/// Base tower only, on clicks, for the click-stage epochs of a three-stage run.
pub fn train_din_baseline(model: &mut DaianModel, data: &TrainData<'_>, cfg: &TrainConfig) -> Result<StageReport> {
    if !model.config.components.is_din() {
        return Err(Error::Config("DIN baseline requires every intent component disabled".into()));
    }
    ctr_stage(
        model,
        data,
        cfg,
        "din_baseline",
        STREAM_DIN,
        cfg.epochs_die + cfg.epochs_joint,
        None,
        IntentFeed::Predicted,
        &[],
        |_| 1.0,
        0.0,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainMode {
    ThreeStage,
    EndToEnd,
    DinBaseline,
}

impl std::str::FromStr for TrainMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "three-stage" => Ok(TrainMode::ThreeStage),
            "end-to-end" => Ok(TrainMode::EndToEnd),
            "din-baseline" => Ok(TrainMode::DinBaseline),
            other => Err(Error::Config(format!("unknown training mode {other}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: DaianModel,
    pub reports: Vec<StageReport>,
}

impl TrainOutcome {
    pub fn total_steps(&self) -> usize {
        self.reports.iter().map(|r| r.steps).sum()
    }
}

/// Build a fresh model and run the selected pipeline.
pub fn run_pipeline(
    mode: TrainMode,
    model_cfg: &ModelConfig,
    data: &TrainData<'_>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    run_pipeline_with(mode, model_cfg, data, cfg, |_, _| Ok(()))
}

/// As [`run_pipeline`], calling `after_stage` with the model and report at
/// the end of every stage (e.g. to write a checkpoint and fill in its path).
pub fn run_pipeline_with(
    mode: TrainMode,
    model_cfg: &ModelConfig,
    data: &TrainData<'_>,
    cfg: &TrainConfig,
    mut after_stage: impl FnMut(&DaianModel, &mut StageReport) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let init_seed = derive_seed(cfg.seed, STREAM_INIT, 0);
    let model_cfg = match mode {
        TrainMode::DinBaseline => ModelConfig {
            components: Components::DIN,
            ..model_cfg.clone()
        },
        _ => model_cfg.clone(),
    };
    let mut model = DaianModel::new(model_cfg, init_seed)?;
    let mut reports = Vec::new();
    let mut finish = |model: &DaianModel, mut r: StageReport| -> Result<()> {
        after_stage(model, &mut r)?;
        reports.push(r);
        Ok(())
    };
    match mode {
        TrainMode::ThreeStage => {
            if model.config.components.uim {
                let r = pretrain_uim(&mut model, data, cfg)?;
                finish(&model, r)?;
            }
            let r = pretrain_die(&mut model, data, cfg)?;
            finish(&model, r)?;
            let r = train_joint(&mut model, data, cfg)?;
            finish(&model, r)?;
        }
        TrainMode::EndToEnd => {
            let budget = three_stage_budget(model.config.components, data, cfg);
            let r = train_end_to_end(&mut model, data, cfg, budget)?;
            finish(&model, r)?;
        }
        TrainMode::DinBaseline => {
            let r = train_din_baseline(&mut model, data, cfg)?;
            finish(&model, r)?;
        }
    }
    Ok(TrainOutcome { model, reports })
}
