//! Mini-batch training with Adam, validation after every epoch, early
//! stopping on validation JRBM and top-k checkpoint retention.
//!
//! Randomness comes from named streams of the run seed: `init` for the
//! parameters, `augment` for oversampling, `shuffle` for batch order and
//! `dropout` for modality dropout.

use std::fs;
use std::path::{Path, PathBuf};

use log::{debug, info};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Mat, Tape};
use crate::checkpoint::{save_checkpoint, CheckpointMeta};
use crate::corpus::{class_weights, compute_class_stats, oversample_minority, Dataset, OversampleConfig, OversampleReport, Sample};
use crate::error::{Error, Result};
use crate::losses::{total_loss_and_grads, LossBreakdown, LossConfig, SwfcConfig, TaskObjective};
use crate::metrics::{evaluate, EvalReport};
use crate::model::{output_values, DropoutMask, Model, ModelConfig, ParameterSet};
use crate::rng::stream;
use crate::types::{Modality, Split, Task};

fn default_h() -> usize {
    32
}
fn default_one() -> usize {
    1
}
fn default_heads() -> usize {
    2
}
fn default_dropout_p() -> f64 {
    0.3
}

/// Model hyperparameters that do not depend on the data. Input widths and
/// class counts are filled in from the dataset by [`ModelSettings::config_for`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSettings {
    #[serde(default = "default_h")]
    pub h: usize,
    #[serde(default = "default_one")]
    pub fusion_layers: usize,
    #[serde(default = "default_heads")]
    pub fusion_heads: usize,
    #[serde(default = "default_heads")]
    pub interaction_heads: usize,
    #[serde(default = "default_dropout_p")]
    pub dropout_p: f64,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            h: default_h(),
            fusion_layers: 1,
            fusion_heads: default_heads(),
            interaction_heads: default_heads(),
            dropout_p: default_dropout_p(),
        }
    }
}

impl ModelSettings {
    /// Checks everything that does not depend on the data.
    pub fn validate(&self) -> Result<()> {
        self.with_shape(1, 1, 1, 1, 1).validate()
    }

    fn with_shape(&self, d_audio: usize, d_video: usize, d_text: usize, c_emotion: usize, c_intent: usize) -> ModelConfig {
        ModelConfig {
            d_audio,
            d_video,
            d_text,
            h: self.h,
            fusion_layers: self.fusion_layers,
            fusion_heads: self.fusion_heads,
            interaction_heads: self.interaction_heads,
            dropout_p: self.dropout_p,
            c_emotion,
            c_intent,
        }
    }

    pub fn config_for(&self, dataset: &Dataset) -> Result<ModelConfig> {
        let dims = dataset.feature_dims().ok_or(Error::EmptySplit("train".into()))?;
        let vocab = dataset.vocab();
        let cfg = self.with_shape(
            dims[Modality::Audio],
            dims[Modality::Video],
            dims[Modality::Text],
            vocab.num_classes(Task::Emotion),
            vocab.num_classes(Task::Intent),
        );
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub patience: usize,
    pub top_k: usize,
    pub use_augmentation: bool,
    pub use_swfc: bool,
    pub use_modality_dropout: bool,
    pub loss: LossConfig,
    pub model: ModelSettings,
    pub augment: OversampleConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            step_size: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            patience: 5,
            top_k: 3,
            use_augmentation: true,
            use_swfc: true,
            use_modality_dropout: true,
            loss: LossConfig::default(),
            model: ModelSettings::default(),
            augment: OversampleConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("patience", self.patience),
            ("top_k", self.top_k),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("train.{name} must be at least 1")));
        }
        if self.use_swfc && self.batch_size < 2 {
            return Err(Error::Config("train.batch_size must be at least 2 when use_swfc is set".into()));
        }
        if !(self.step_size > 0.0) || !(self.eps > 0.0) {
            return Err(Error::Config("train.step_size and train.eps must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("train.beta1 and train.beta2 must lie in [0, 1)".into()));
        }
        self.model.validate()?;
        self.loss.validate()
    }

    /// Modality dropout probability after applying the toggle.
    pub fn effective_dropout_p(&self) -> f64 {
        if self.use_modality_dropout {
            self.model.dropout_p
        } else {
            0.0
        }
    }

    /// SWFC mixing weight after applying the toggle.
    pub fn effective_mu_swfc(&self) -> f64 {
        if self.use_swfc {
            self.loss.mu_swfc
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Per-batch loss terms averaged over the epoch.
    pub train: LossBreakdown,
    pub val: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRecord {
    pub epoch: usize,
    pub val_jrbm: f64,
    /// Relative to the run's output directory.
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub config: TrainConfig,
    pub model: ModelConfig,
    pub augmentation: Option<OversampleReport>,
    pub epochs: Vec<EpochRecord>,
    /// Best first; ties go to the earlier epoch.
    pub checkpoints: Vec<CheckpointRecord>,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("history serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Json {
            context: "training history".into(),
            source: e,
        })
    }
}

pub fn checkpoint_file_name(epoch: usize) -> String {
    format!("ckpt/epoch-{epoch:03}.bin")
}

/// Top-`k` epochs by validation JRBM, best first, ties to the earlier epoch.
/// `k` is clipped to the number of recorded epochs.
pub fn select_checkpoints(history: &TrainHistory, k: usize) -> Vec<CheckpointRecord> {
    let mut ranked: Vec<CheckpointRecord> = history
        .epochs
        .iter()
        .map(|r| CheckpointRecord {
            epoch: r.epoch,
            val_jrbm: r.val.jrbm,
            path: checkpoint_file_name(r.epoch),
        })
        .collect();
    ranked.sort_by(|a, b| b.val_jrbm.total_cmp(&a.val_jrbm).then(a.epoch.cmp(&b.epoch)));
    ranked.truncate(k);
    ranked
}

/// A retained checkpoint held in memory.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub record: CheckpointRecord,
    pub model: Model,
}

/// Everything a training run produces.
#[derive(Debug, Clone)]
pub struct TrainRun {
    pub history: TrainHistory,
    /// Same order as `history.checkpoints`.
    pub checkpoints: Vec<Checkpoint>,
}

impl TrainRun {
    pub fn best(&self) -> &Model {
        &self.checkpoints[0].model
    }

    /// Writes `history.json` and every retained checkpoint under `out`.
    pub fn save(&self, out: &Path) -> Result<PathBuf> {
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        for c in &self.checkpoints {
            let meta = CheckpointMeta {
                model: c.model.config().clone(),
                seed: self.history.config.seed,
                epoch: c.record.epoch,
                val_jrbm: c.record.val_jrbm,
            };
            save_checkpoint(&out.join(&c.record.path), c.model.params(), &meta)?;
        }
        let path = out.join("history.json");
        fs::write(&path, self.history.to_json()).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

/// Per-task objectives derived from the training split's class counts.
pub fn task_objectives(dataset: &Dataset, loss: &LossConfig) -> Result<[TaskObjective; 2]> {
    let make = |task: Task| -> Result<TaskObjective> {
        let stats = compute_class_stats(dataset, task, Split::Train)?;
        let weights = class_weights(&stats, loss.w_max);
        let ce_weights = if loss.weighted_ce {
            weights.clone()
        } else {
            vec![1.0; weights.len()]
        };
        Ok(TaskObjective {
            swfc: SwfcConfig {
                gamma: loss.gamma,
                tau: loss.tau,
                weights,
            },
            ce_weights,
        })
    };
    Ok([make(Task::Emotion)?, make(Task::Intent)?])
}

/// Loss of one batch under fixed dropout masks, and its gradient with
/// respect to every parameter (layout order, flattened row-major).
pub fn batch_gradient(
    model: &Model,
    batch: &[&Sample],
    masks: &[DropoutMask],
    objectives: &[TaskObjective; 2],
    lambda_ce: f64,
    mu_swfc: f64,
) -> Result<(LossBreakdown, Vec<Vec<f64>>)> {
    if batch.len() != masks.len() {
        return Err(Error::LengthMismatch {
            left: batch.len(),
            right: masks.len(),
        });
    }
    let mut tape = Tape::new();
    let leaves = model.leaves(&mut tape);
    let mut vars = Vec::with_capacity(batch.len());
    for (s, mask) in batch.iter().zip(masks) {
        vars.push(model.forward_on_tape(&mut tape, &leaves, s, mask)?);
    }
    let outputs: Vec<_> = vars.iter().map(|v| output_values(&tape, v)).collect();
    let labels: Vec<(usize, usize)> = batch.iter().map(|s| (s.emotion, s.intent)).collect();
    let (breakdown, out_grads) = total_loss_and_grads(&outputs, &labels, objectives, lambda_ce, mu_swfc)?;
    let mut seeds = Vec::with_capacity(4 * batch.len());
    for (v, g) in vars.iter().zip(out_grads) {
        for t in 0..2 {
            seeds.push((v.logits[t], Mat::row_vector(g.logits[t].clone())));
            seeds.push((v.reps[t], Mat::row_vector(g.reps[t].clone())));
        }
    }
    let grads = tape.backward(&seeds);
    let flat = leaves
        .iter()
        .zip(model.params().iter())
        .map(|(&leaf, p)| match grads.get(leaf) {
            Some(g) => g.data.clone(),
            None => vec![0.0; p.data.len()],
        })
        .collect();
    Ok((breakdown, flat))
}

/// Adam with bias correction and a fixed step.
#[derive(Debug, Clone)]
pub struct Adam {
    step_size: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &ParameterSet, step_size: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.data.len()]).collect();
        Self {
            step_size,
            beta1,
            beta2,
            eps,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Applies one update and snaps the parameters back onto the f32 grid.
    pub fn step(&mut self, params: &mut ParameterSet, grads: &[Vec<f64>]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.data.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                p.data[i] -= self.step_size * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
            }
        }
        params.round_to_f32();
    }
}

fn mean_breakdown(parts: &[LossBreakdown]) -> LossBreakdown {
    let n = parts.len().max(1) as f64;
    let mut out = LossBreakdown::default();
    for b in parts {
        out.total += b.total;
        out.ce_emotion += b.ce_emotion;
        out.ce_intent += b.ce_intent;
        out.swfc_emotion += b.swfc_emotion;
        out.swfc_intent += b.swfc_intent;
    }
    out.total /= n;
    out.ce_emotion /= n;
    out.ce_intent /= n;
    out.swfc_emotion /= n;
    out.swfc_intent /= n;
    if let Some(first) = parts.first() {
        out.lambda_ce = first.lambda_ce;
        out.mu_swfc = first.mu_swfc;
    }
    out
}

/// Inserts into the best-first list, keeping at most `k`.
fn retain_top_k(kept: &mut Vec<Checkpoint>, candidate: Checkpoint, k: usize) {
    let pos = kept
        .iter()
        .position(|c| candidate.record.val_jrbm > c.record.val_jrbm)
        .unwrap_or(kept.len());
    if pos < k {
        kept.insert(pos, candidate);
        kept.truncate(k);
    }
}

pub fn train(cfg: &TrainConfig, dataset: &Dataset) -> Result<TrainRun> {
    cfg.validate()?;
    for split in [Split::Train, Split::Val] {
        if dataset.split_samples(split).next().is_none() {
            return Err(Error::EmptySplit(split.name().to_string()));
        }
    }
    let model_cfg = cfg.model.config_for(dataset)?;
    let mut model = Model::new(model_cfg.clone(), cfg.seed)?;

    let augmented;
    let (data, augmentation) = if cfg.use_augmentation {
        let (d, report) = oversample_minority(dataset, &cfg.augment, cfg.seed)?;
        info!("oversampling added {} samples", report.total_added());
        augmented = d;
        (&augmented, Some(report))
    } else {
        (dataset, None)
    };

    let objectives = task_objectives(data, &cfg.loss)?;
    let (lambda_ce, mu_swfc) = (cfg.loss.lambda_ce, cfg.effective_mu_swfc());
    let p = cfg.effective_dropout_p();
    let mut shuffle_rng = stream(cfg.seed, "shuffle");
    let mut dropout_rng = stream(cfg.seed, "dropout");
    let mut adam = Adam::new(model.params(), cfg.step_size, cfg.beta1, cfg.beta2, cfg.eps);
    let mut order = data.split_indices(Split::Train);

    let mut records = Vec::new();
    let mut kept: Vec<Checkpoint> = Vec::new();
    let mut best = f64::NEG_INFINITY;
    let mut since_best = 0;
    let mut stopped_early = false;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut parts = Vec::new();
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &data.samples()[i]).collect();
            let masks: Vec<DropoutMask> = batch.iter().map(|_| DropoutMask::sample(p, true, &mut dropout_rng)).collect();
            let (loss, grads) = batch_gradient(&model, &batch, &masks, &objectives, lambda_ce, mu_swfc)?;
            if !loss.total.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
                return Err(Error::DivergedLoss { epoch, batch: b });
            }
            adam.step(model.params_mut(), &grads);
            if !model.params().all_finite() {
                return Err(Error::DivergedLoss { epoch, batch: b });
            }
            parts.push(loss);
        }
        let train = mean_breakdown(&parts);
        let val = evaluate(&model, data, Split::Val)?;
        info!("epoch {epoch}: loss {:.5} val jrbm {:.4}", train.total, val.jrbm);
        debug!("epoch {epoch}: val f1 emotion {:.4} intent {:.4}", val.f1_emotion, val.f1_intent);
        let jrbm = val.jrbm;
        retain_top_k(
            &mut kept,
            Checkpoint {
                record: CheckpointRecord {
                    epoch,
                    val_jrbm: jrbm,
                    path: checkpoint_file_name(epoch),
                },
                model: model.clone(),
            },
            cfg.top_k,
        );
        records.push(EpochRecord { epoch, train, val });
        if jrbm > best {
            best = jrbm;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience && epoch < cfg.epochs {
                info!("no improvement for {since_best} epochs, stopping");
                stopped_early = true;
                break;
            }
        }
    }

    let history = TrainHistory {
        config: cfg.clone(),
        model: model_cfg,
        augmentation,
        epochs: records,
        checkpoints: kept.iter().map(|c| c.record.clone()).collect(),
        stopped_early,
    };
    Ok(TrainRun { history, checkpoints: kept })
}
