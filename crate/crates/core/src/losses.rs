//! Training objectives: sample-weighted focal contrastive (SWFC) loss and
//! class-weighted cross-entropy.
//!
//! SWFC over L2-normalised embeddings `z`, temperature `tau`, focus `gamma`
//! and per-class weights `w`:
//!
//! ```text
//! q_ip = exp(z_i.z_p / tau) / sum_{a != i} exp(z_i.z_a / tau)
//! L_i  = -(w_{y_i} / |P(i)|) * sum_{p in P(i)} (1 - q_ip)^gamma * log q_ip
//! L    = sum_i L_i / max(1, #anchors with a positive)
//! ```
//!
//! where `P(i)` holds the other batch members sharing anchor `i`'s label.
//! With `gamma = 0` and unit weights this is the supervised contrastive loss.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ForwardOutput;
use crate::types::Task;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwfcConfig {
    pub gamma: f64,
    pub tau: f64,
    /// Per-class weights, indexed by label.
    pub weights: Vec<f64>,
}

impl SwfcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !(self.gamma >= 0.0) {
            return Err(Error::Config(format!("swfc needs tau > 0 and gamma >= 0, got tau={} gamma={}", self.tau, self.gamma)));
        }
        if self.weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::Config("swfc class weights must be positive and finite".into()));
        }
        Ok(())
    }
}

fn default_gamma() -> f64 {
    2.0
}
fn default_tau() -> f64 {
    0.1
}
fn default_w_max() -> f64 {
    crate::corpus::DEFAULT_W_MAX
}
fn default_lambda_ce() -> f64 {
    1.0
}
fn default_mu_swfc() -> f64 {
    0.5
}
fn default_true() -> bool {
    true
}

/// Loss hyperparameters as they appear in run configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_w_max")]
    pub w_max: f64,
    #[serde(default = "default_lambda_ce")]
    pub lambda_ce: f64,
    #[serde(default = "default_mu_swfc")]
    pub mu_swfc: f64,
    /// Apply the class weights to cross-entropy as well as to SWFC.
    #[serde(default = "default_true")]
    pub weighted_ce: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            gamma: default_gamma(),
            tau: default_tau(),
            w_max: default_w_max(),
            lambda_ce: default_lambda_ce(),
            mu_swfc: default_mu_swfc(),
            weighted_ce: true,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !(self.gamma >= 0.0) || !(self.w_max >= 1.0) {
            return Err(Error::Config("loss needs tau > 0, gamma >= 0, w_max >= 1".into()));
        }
        if !(self.lambda_ce >= 0.0) || !(self.mu_swfc >= 0.0) {
            return Err(Error::Config("lambda_ce and mu_swfc must be non-negative".into()));
        }
        Ok(())
    }
}

/// One `(anchor, positive)` contribution to SWFC.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairTerm {
    pub anchor: usize,
    pub positive: usize,
    pub q: f64,
    /// `-(w / |P|) (1 - q)^gamma log q`, before the anchor-count normalisation.
    pub value: f64,
}

struct Normalized {
    z: Vec<Vec<f64>>,
    norms: Vec<f64>,
    degenerate: Vec<bool>,
}

fn normalize(embeddings: &[Vec<f64>]) -> Normalized {
    let dim = embeddings[0].len();
    let mut out = Normalized {
        z: Vec::with_capacity(embeddings.len()),
        norms: Vec::with_capacity(embeddings.len()),
        degenerate: Vec::with_capacity(embeddings.len()),
    };
    for (i, e) in embeddings.iter().enumerate() {
        let n = e.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.0 {
            out.z.push(e.iter().map(|v| v / n).collect());
            out.degenerate.push(false);
        } else {
            warn!("zero-norm embedding at batch position {i}; substituting a unit basis vector");
            let mut unit = vec![0.0; dim];
            unit[0] = 1.0;
            out.z.push(unit);
            out.degenerate.push(true);
        }
        out.norms.push(n);
    }
    out
}

fn check_batch(embeddings: &[Vec<f64>], labels: &[usize], cfg: &SwfcConfig) -> Result<()> {
    cfg.validate()?;
    if embeddings.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: embeddings.len(),
            right: labels.len(),
        });
    }
    if embeddings.len() < 2 {
        return Err(Error::Config("swfc needs a batch of at least 2".into()));
    }
    let dim = embeddings[0].len();
    if dim == 0 {
        return Err(Error::Config("empty embeddings".into()));
    }
    for e in embeddings {
        if e.len() != dim {
            return Err(Error::LengthMismatch { left: e.len(), right: dim });
        }
        if e.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("non-finite embedding".into()));
        }
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= cfg.weights.len()) {
        return Err(Error::LabelOutOfRange {
            label: l,
            classes: cfg.weights.len(),
        });
    }
    Ok(())
}

/// Scaled cosine similarities and, per anchor, the log-normaliser over `a != i`.
fn similarities(z: &[Vec<f64>], tau: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = z.len();
    let mut s = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let v = z[i].iter().zip(&z[j]).map(|(a, b)| a * b).sum::<f64>() / tau;
            s[i][j] = v;
            s[j][i] = v;
        }
    }
    let lse = (0..n)
        .map(|i| {
            let max = (0..n).filter(|&a| a != i).map(|a| s[i][a]).fold(f64::NEG_INFINITY, f64::max);
            max + (0..n).filter(|&a| a != i).map(|a| (s[i][a] - max).exp()).sum::<f64>().ln()
        })
        .collect();
    (s, lse)
}

fn positives(labels: &[usize], i: usize) -> impl Iterator<Item = usize> + '_ {
    (0..labels.len()).filter(move |&p| p != i && labels[p] == labels[i])
}

/// `(1 - q)^gamma * (-log q)` and its derivative with respect to `log q`.
fn focal_term(log_q: f64, gamma: f64) -> (f64, f64) {
    let q = log_q.exp();
    let one_minus_q = -log_q.exp_m1();
    let modulation = if gamma == 0.0 { 1.0 } else { one_minus_q.powf(gamma) };
    let value = -modulation * log_q;
    let focus = if gamma == 0.0 || one_minus_q <= 0.0 {
        0.0
    } else {
        gamma * q * one_minus_q.powf(gamma - 1.0) * log_q
    };
    (value, focus - modulation)
}

/// Every `(anchor, positive)` term of the loss.
pub fn swfc_pair_terms(embeddings: &[Vec<f64>], labels: &[usize], cfg: &SwfcConfig) -> Result<Vec<PairTerm>> {
    check_batch(embeddings, labels, cfg)?;
    let norm = normalize(embeddings);
    let (s, lse) = similarities(&norm.z, cfg.tau);
    let mut terms = Vec::new();
    for i in 0..labels.len() {
        let pos: Vec<usize> = positives(labels, i).collect();
        let scale = cfg.weights[labels[i]] / pos.len().max(1) as f64;
        for p in pos {
            let log_q = s[i][p] - lse[i];
            terms.push(PairTerm {
                anchor: i,
                positive: p,
                q: log_q.exp(),
                value: scale * focal_term(log_q, cfg.gamma).0,
            });
        }
    }
    Ok(terms)
}

pub fn swfc_loss(embeddings: &[Vec<f64>], labels: &[usize], cfg: &SwfcConfig) -> Result<f64> {
    swfc_loss_and_grad(embeddings, labels, cfg).map(|(v, _)| v)
}

/// Loss value and its gradient with respect to each raw embedding.
pub fn swfc_loss_and_grad(embeddings: &[Vec<f64>], labels: &[usize], cfg: &SwfcConfig) -> Result<(f64, Vec<Vec<f64>>)> {
    check_batch(embeddings, labels, cfg)?;
    let n = labels.len();
    let dim = embeddings[0].len();
    let norm = normalize(embeddings);
    let (s, lse) = similarities(&norm.z, cfg.tau);

    let anchors = (0..n).filter(|&i| positives(labels, i).next().is_some()).count();
    let denom = anchors.max(1) as f64;

    let mut total = 0.0;
    // d loss / d s_ij, accumulated over anchors.
    let mut ds = vec![vec![0.0; n]; n];
    for i in 0..n {
        let pos: Vec<usize> = positives(labels, i).collect();
        if pos.is_empty() {
            continue;
        }
        let c = cfg.weights[labels[i]] / (pos.len() as f64 * denom);
        let q_row: Vec<f64> = (0..n).map(|a| if a == i { 0.0 } else { (s[i][a] - lse[i]).exp() }).collect();
        let mut sum_dl = 0.0;
        for &p in &pos {
            let (value, d_logq) = focal_term(s[i][p] - lse[i], cfg.gamma);
            total += c * value;
            ds[i][p] += c * d_logq;
            sum_dl += c * d_logq;
        }
        for a in (0..n).filter(|&a| a != i) {
            ds[i][a] -= sum_dl * q_row[a];
        }
    }

    let mut dz = vec![vec![0.0; dim]; n];
    for i in 0..n {
        for j in 0..n {
            let g = ds[i][j] / cfg.tau;
            if g == 0.0 {
                continue;
            }
            for k in 0..dim {
                dz[i][k] += g * norm.z[j][k];
                dz[j][k] += g * norm.z[i][k];
            }
        }
    }
    let grads = (0..n)
        .map(|i| {
            if norm.degenerate[i] {
                return vec![0.0; dim];
            }
            let z = &norm.z[i];
            let radial = z.iter().zip(&dz[i]).map(|(a, b)| a * b).sum::<f64>();
            (0..dim).map(|k| (dz[i][k] - z[k] * radial) / norm.norms[i]).collect()
        })
        .collect();
    Ok((total, grads))
}

fn check_logits(logits: &[Vec<f64>], labels: &[usize], weights: &[f64]) -> Result<()> {
    if logits.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: logits.len(),
            right: labels.len(),
        });
    }
    if logits.is_empty() {
        return Err(Error::Config("cross-entropy needs a non-empty batch".into()));
    }
    for (row, &y) in logits.iter().zip(labels) {
        if row.len() != weights.len() {
            return Err(Error::LengthMismatch {
                left: row.len(),
                right: weights.len(),
            });
        }
        if y >= row.len() {
            return Err(Error::LabelOutOfRange {
                label: y,
                classes: row.len(),
            });
        }
    }
    Ok(())
}

pub fn weighted_cross_entropy(logits: &[Vec<f64>], labels: &[usize], weights: &[f64]) -> Result<f64> {
    weighted_cross_entropy_and_grad(logits, labels, weights).map(|(v, _)| v)
}

/// Mean over the batch of `-w_y log softmax(logits)_y`, with its gradient.
pub fn weighted_cross_entropy_and_grad(logits: &[Vec<f64>], labels: &[usize], weights: &[f64]) -> Result<(f64, Vec<Vec<f64>>)> {
    check_logits(logits, labels, weights)?;
    let n = logits.len() as f64;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(logits.len());
    for (row, &y) in logits.iter().zip(labels) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        let w = weights[y];
        total += -w * (row[y] - log_z);
        let mut g: Vec<f64> = row.iter().map(|v| w * (v - log_z).exp() / n).collect();
        g[y] -= w / n;
        grads.push(g);
    }
    Ok((total / n, grads))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub ce_emotion: f64,
    pub ce_intent: f64,
    pub swfc_emotion: f64,
    pub swfc_intent: f64,
    pub lambda_ce: f64,
    pub mu_swfc: f64,
}

impl LossBreakdown {
    /// Recombines the parts with the stored mixing coefficients.
    pub fn recombine(&self) -> f64 {
        self.lambda_ce * (self.ce_emotion + self.ce_intent) + self.mu_swfc * (self.swfc_emotion + self.swfc_intent)
    }
}

/// Per-task objective settings for [`total_loss`].
#[derive(Debug, Clone, PartialEq)]
pub struct TaskObjective {
    pub swfc: SwfcConfig,
    pub ce_weights: Vec<f64>,
}

/// Gradient of the total loss with respect to one forward output.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputGrad {
    pub logits: [Vec<f64>; 2],
    pub reps: [Vec<f64>; 2],
}

pub fn total_loss(
    outputs: &[ForwardOutput],
    labels: &[(usize, usize)],
    objectives: &[TaskObjective; 2],
    lambda_ce: f64,
    mu_swfc: f64,
) -> Result<LossBreakdown> {
    total_loss_and_grads(outputs, labels, objectives, lambda_ce, mu_swfc).map(|(b, _)| b)
}

/// Total loss plus its gradient with respect to every output's logits and
/// representations. A batch of one has no contrastive pairs and scores 0 on
/// the SWFC terms.
pub fn total_loss_and_grads(
    outputs: &[ForwardOutput],
    labels: &[(usize, usize)],
    objectives: &[TaskObjective; 2],
    lambda_ce: f64,
    mu_swfc: f64,
) -> Result<(LossBreakdown, Vec<OutputGrad>)> {
    if outputs.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: outputs.len(),
            right: labels.len(),
        });
    }
    let mut grads: Vec<OutputGrad> = outputs
        .iter()
        .map(|o| OutputGrad {
            logits: [vec![0.0; o.emotion_logits.len()], vec![0.0; o.intent_logits.len()]],
            reps: [vec![0.0; o.emotion_rep.len()], vec![0.0; o.intent_rep.len()]],
        })
        .collect();
    let mut ce = [0.0; 2];
    let mut swfc = [0.0; 2];
    for task in Task::ALL {
        let t = task.index();
        let y: Vec<usize> = labels.iter().map(|l| if t == 0 { l.0 } else { l.1 }).collect();
        let logits: Vec<Vec<f64>> = outputs.iter().map(|o| o.logits(task).to_vec()).collect();
        let (value, g) = weighted_cross_entropy_and_grad(&logits, &y, &objectives[t].ce_weights)?;
        ce[t] = value;
        for (og, gi) in grads.iter_mut().zip(g) {
            og.logits[t] = gi.into_iter().map(|v| lambda_ce * v).collect();
        }
        if outputs.len() >= 2 {
            let reps: Vec<Vec<f64>> = outputs.iter().map(|o| o.rep(task).to_vec()).collect();
            let (value, g) = swfc_loss_and_grad(&reps, &y, &objectives[t].swfc)?;
            swfc[t] = value;
            for (og, gi) in grads.iter_mut().zip(g) {
                og.reps[t] = gi.into_iter().map(|v| mu_swfc * v).collect();
            }
        }
    }
    let mut breakdown = LossBreakdown {
        total: 0.0,
        ce_emotion: ce[0],
        ce_intent: ce[1],
        swfc_emotion: swfc[0],
        swfc_intent: swfc[1],
        lambda_ce,
        mu_swfc,
    };
    breakdown.total = breakdown.recombine();
    Ok((breakdown, grads))
}
