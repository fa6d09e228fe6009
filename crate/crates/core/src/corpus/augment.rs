//! Feature-space minority oversampling.
//!
//! New samples are per-modality convex combinations of two same-class
//! originals, truncated to the shorter sequence, plus optional Gaussian
//! jitter. Existing samples are never touched.

use log::warn;
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{compute_class_stats, Dataset, FeatureMatrix, Sample};
use crate::error::{Error, Result};
use crate::rng::{stream, StreamRng};
use crate::types::{ModalityMap, Origin, Split, Task};

const ALPHA_RANGE: (f64, f64) = (0.3, 0.7);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OversampleConfig {
    pub task: Task,
    /// Every class is grown to at least `ceil(target_ratio * n_max)` samples.
    pub target_ratio: f64,
    pub jitter_sigma: f64,
}

impl Default for OversampleConfig {
    fn default() -> Self {
        Self {
            task: Task::Intent,
            target_ratio: 0.5,
            jitter_sigma: 0.05,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OversampleReport {
    /// Number of augmented samples appended per class.
    pub added: Vec<usize>,
    /// Classes with a single train sample; grown by jittered copies only.
    pub singleton_classes: Vec<usize>,
    /// Classes absent from the train split; left empty.
    pub empty_classes: Vec<usize>,
}

impl OversampleReport {
    pub fn total_added(&self) -> usize {
        self.added.iter().sum()
    }
}

/// `alpha * a + (1 - alpha) * b` over the first `min(a.rows, b.rows)` rows,
/// plus `N(0, jitter_sigma^2)` noise. No draws are made when `jitter_sigma == 0`.
pub fn blend(
    a: &FeatureMatrix,
    b: &FeatureMatrix,
    alpha: f64,
    jitter_sigma: f64,
    rng: &mut impl Rng,
) -> Result<FeatureMatrix> {
    if a.cols() != b.cols() {
        return Err(Error::LengthMismatch {
            left: a.cols(),
            right: b.cols(),
        });
    }
    let rows = a.rows().min(b.rows());
    let n = rows * a.cols();
    let values = a.values()[..n]
        .iter()
        .zip(&b.values()[..n])
        .map(|(&x, &y)| {
            let mut v = alpha * f64::from(x) + (1.0 - alpha) * f64::from(y);
            if jitter_sigma > 0.0 {
                v += jitter_sigma * rng.sample::<f64, _>(StandardNormal);
            }
            v as f32
        })
        .collect();
    FeatureMatrix::new(rows, a.cols(), values)
}

pub fn oversample_minority(
    dataset: &Dataset,
    cfg: &OversampleConfig,
    seed: u64,
) -> Result<(Dataset, OversampleReport)> {
    let task = cfg.task;
    if !(cfg.target_ratio > 0.0 && cfg.target_ratio <= 1.0) {
        return Err(Error::Config(format!("target_ratio {} outside (0, 1]", cfg.target_ratio)));
    }
    if !(cfg.jitter_sigma >= 0.0) {
        return Err(Error::Config("jitter_sigma must be non-negative".into()));
    }
    let stats = compute_class_stats(dataset, task, Split::Train)?;
    let n_max = *stats.counts.iter().max().unwrap_or(&0);
    let floor = (cfg.target_ratio * n_max as f64).ceil() as usize;
    if floor < 1 {
        return Err(Error::Config("target_ratio * n_max must be at least 1".into()));
    }

    let mut by_class: Vec<Vec<&Sample>> = vec![Vec::new(); stats.num_classes()];
    for s in dataset.split_samples(Split::Train).filter(|s| s.origin == Origin::Original) {
        by_class[s.label(task)].push(s);
    }

    let mut rng: StreamRng = stream(seed, "augment");
    let mut report = OversampleReport {
        added: vec![0; stats.num_classes()],
        ..Default::default()
    };
    let mut appended = Vec::new();
    for (class, &count) in stats.counts.iter().enumerate() {
        if count >= floor {
            continue;
        }
        let parents = &by_class[class];
        if parents.is_empty() {
            warn!("{task} class {class} has no original train samples; not oversampled");
            report.empty_classes.push(class);
            continue;
        }
        if parents.len() == 1 {
            warn!("{task} class {class} has a single train sample; using jittered copies");
            report.singleton_classes.push(class);
        }
        for k in 0..floor - count {
            let (a, b, alphas) = if parents.len() == 1 {
                (parents[0], parents[0], [1.0; 3])
            } else {
                let pick: Vec<&&Sample> = parents.choose_multiple(&mut rng, 2).collect();
                let alphas = [(); 3].map(|_| rng.random_range(ALPHA_RANGE.0..=ALPHA_RANGE.1));
                (*pick[0], *pick[1], alphas)
            };
            let features = ModalityMap::try_from_fn(|m| {
                blend(&a.features[m], &b.features[m], alphas[m.index()], cfg.jitter_sigma, &mut rng)
            })?;
            appended.push(Sample {
                id: format!("aug-{task}-{class}-{k:05}"),
                features,
                emotion: a.emotion,
                intent: a.intent,
                split: Split::Train,
                origin: Origin::Augmented,
            });
            report.added[class] += 1;
        }
    }

    let (vocab, mut samples) = dataset.clone().into_parts();
    samples.extend(appended);
    Ok((Dataset::new(vocab, samples)?, report))
}
