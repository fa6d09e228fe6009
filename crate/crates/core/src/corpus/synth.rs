//! Gaussian-mixture stand-in for a real feature corpus.
//!
//! Each (emotion, intent) pair owns one mean vector per modality. Means are
//! drawn from a standard normal and rescaled so that the closest two pairs
//! sit exactly `delta * sigma` apart. A sample adds an utterance-level
//! offset with standard deviation `sigma` and per-frame noise with standard
//! deviation `frame_noise * sigma`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Dataset, FeatureMatrix, LabelVocabulary, Sample};
use crate::error::{Error, Result};
use crate::rng::{stream, StreamRng};
use crate::types::{Modality, ModalityMap, Origin, Split, Task};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairCount {
    pub emotion: String,
    pub intent: String,
    #[serde(default)]
    pub train: usize,
    #[serde(default)]
    pub val: usize,
    #[serde(default)]
    pub test: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureDims {
    pub audio: usize,
    pub video: usize,
    pub text: usize,
}

impl FeatureDims {
    pub fn get(&self, m: Modality) -> usize {
        match m {
            Modality::Audio => self.audio,
            Modality::Video => self.video,
            Modality::Text => self.text,
        }
    }
}

fn default_sigma() -> f64 {
    1.0
}

fn default_frame_noise() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub emotion_labels: Vec<String>,
    pub intent_labels: Vec<String>,
    pub dims: FeatureDims,
    /// Inclusive `[min, max]` sequence length.
    pub seq_len: [usize; 2],
    /// Minimum distance between pair means, in units of `sigma`.
    pub delta: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_frame_noise")]
    pub frame_noise: f64,
    /// Explicit per-pair counts.
    #[serde(default)]
    pub pairs: Vec<PairCount>,
    /// Counts applied to every pair not listed in `pairs`.
    #[serde(default)]
    pub per_pair: Option<SplitCounts>,
}

impl SynthConfig {
    fn vocab(&self) -> Result<LabelVocabulary> {
        LabelVocabulary::new(self.emotion_labels.clone(), self.intent_labels.clone())
            .map_err(|e| Error::BadSpec(e.to_string()))
    }

    /// Resolved count table indexed `[emotion][intent]`.
    pub fn count_table(&self, vocab: &LabelVocabulary) -> Result<Vec<Vec<SplitCounts>>> {
        let fill = self.per_pair.unwrap_or_default();
        let mut table =
            vec![vec![fill; vocab.num_classes(Task::Intent)]; vocab.num_classes(Task::Emotion)];
        for p in &self.pairs {
            let e = vocab
                .index_of(Task::Emotion, &p.emotion)
                .ok_or_else(|| Error::BadSpec(format!("unknown emotion {:?}", p.emotion)))?;
            let i = vocab
                .index_of(Task::Intent, &p.intent)
                .ok_or_else(|| Error::BadSpec(format!("unknown intent {:?}", p.intent)))?;
            table[e][i] = SplitCounts {
                train: p.train,
                val: p.val,
                test: p.test,
            };
        }
        Ok(table)
    }

    fn validate(&self) -> Result<()> {
        if self.emotion_labels.is_empty() || self.intent_labels.is_empty() {
            return Err(Error::BadSpec("zero classes".into()));
        }
        if Modality::ALL.iter().any(|&m| self.dims.get(m) == 0) {
            return Err(Error::BadSpec("zero feature dimension".into()));
        }
        let [lo, hi] = self.seq_len;
        if lo == 0 || lo > hi {
            return Err(Error::BadSpec(format!("bad sequence length range [{lo}, {hi}]")));
        }
        if !(self.delta >= 0.0 && self.sigma > 0.0 && self.frame_noise >= 0.0) {
            return Err(Error::BadSpec("delta, sigma and frame_noise must be non-negative (sigma > 0)".into()));
        }
        Ok(())
    }
}

fn normal_vec(rng: &mut StreamRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Means for every class pair of one modality, min pairwise distance `target`.
fn pair_means(rng: &mut StreamRng, pairs: usize, dim: usize, target: f64) -> Vec<Vec<f64>> {
    let mut means: Vec<Vec<f64>> = (0..pairs).map(|_| normal_vec(rng, dim)).collect();
    let mut min_d = f64::INFINITY;
    for a in 0..pairs {
        for b in a + 1..pairs {
            min_d = min_d.min(dist(&means[a], &means[b]));
        }
    }
    if min_d.is_finite() && min_d > 0.0 {
        let scale = target / min_d;
        for m in &mut means {
            m.iter_mut().for_each(|v| *v *= scale);
        }
    }
    means
}

pub fn synth_generate(spec: &SynthConfig, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let vocab = spec.vocab()?;
    let table = spec.count_table(&vocab)?;
    let n_intent = vocab.num_classes(Task::Intent);
    let n_pairs = vocab.num_classes(Task::Emotion) * n_intent;

    let mut rng = stream(seed, "synth");
    let means: ModalityMap<Vec<Vec<f64>>> = ModalityMap::from_fn(|m| {
        pair_means(&mut rng, n_pairs, spec.dims.get(m), spec.delta * spec.sigma)
    });

    let [lo, hi] = spec.seq_len;
    let mut samples = Vec::new();
    for split in Split::ALL {
        let mut k = 0usize;
        for (e, row) in table.iter().enumerate() {
            for (i, counts) in row.iter().enumerate() {
                let pair = e * n_intent + i;
                for _ in 0..counts.get(split) {
                    let features = ModalityMap::try_from_fn(|m| {
                        let d = spec.dims.get(m);
                        let t = rng.random_range(lo..=hi);
                        let offset = normal_vec(&mut rng, d);
                        let mut values = Vec::with_capacity(t * d);
                        for _ in 0..t {
                            for j in 0..d {
                                let eps: f64 = rng.sample(StandardNormal);
                                let v = means[m][pair][j]
                                    + spec.sigma * (offset[j] + spec.frame_noise * eps);
                                values.push(v as f32);
                            }
                        }
                        FeatureMatrix::new(t, d, values)
                    })?;
                    samples.push(Sample {
                        id: format!("{split}-{k:05}"),
                        features,
                        emotion: e,
                        intent: i,
                        split,
                        origin: Origin::Original,
                    });
                    k += 1;
                }
            }
        }
    }
    Dataset::new(vocab, samples)
}
