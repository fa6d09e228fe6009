//! Datasets of per-modality feature sequences with joint emotion/intent labels.

mod augment;
mod feature;
mod manifest;
mod stats;
mod synth;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ModalityMap, Origin, Split, Task};

pub use augment::{blend, oversample_minority, OversampleConfig, OversampleReport};
pub use feature::{read_feature_matrix, write_feature_matrix, FeatureMatrix, FEA1_MAGIC};
pub use manifest::{load_manifest, save_manifest, ManifestHeader, ManifestRecord};
pub use stats::{class_weights, compute_class_stats, ClassStats, DEFAULT_W_MAX};
pub use synth::{synth_generate, FeatureDims, PairCount, SplitCounts, SynthConfig};

/// Ordered label names for both tasks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelVocabulary {
    pub emotion_labels: Vec<String>,
    pub intent_labels: Vec<String>,
}

impl LabelVocabulary {
    pub fn new(emotion_labels: Vec<String>, intent_labels: Vec<String>) -> Result<Self> {
        let v = Self {
            emotion_labels,
            intent_labels,
        };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        for task in Task::ALL {
            let labels = self.labels(task);
            if labels.is_empty() {
                return Err(Error::BadVocabulary(format!("{task} labels are empty")));
            }
            let mut seen = HashSet::new();
            for l in labels {
                if l.is_empty() {
                    return Err(Error::BadVocabulary(format!("empty {task} label name")));
                }
                if !seen.insert(l.as_str()) {
                    return Err(Error::BadVocabulary(format!("duplicate {task} label {l:?}")));
                }
            }
        }
        Ok(())
    }

    pub fn labels(&self, task: Task) -> &[String] {
        match task {
            Task::Emotion => &self.emotion_labels,
            Task::Intent => &self.intent_labels,
        }
    }

    pub fn num_classes(&self, task: Task) -> usize {
        self.labels(task).len()
    }

    pub fn index_of(&self, task: Task, name: &str) -> Option<usize> {
        self.labels(task).iter().position(|l| l == name)
    }

    pub fn name_of(&self, task: Task, index: usize) -> &str {
        &self.labels(task)[index]
    }
}

/// One utterance: three modality feature matrices and both labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub features: ModalityMap<FeatureMatrix>,
    pub emotion: usize,
    pub intent: usize,
    pub split: Split,
    pub origin: Origin,
}

impl Sample {
    pub fn label(&self, task: Task) -> usize {
        match task {
            Task::Emotion => self.emotion,
            Task::Intent => self.intent,
        }
    }
}

/// Immutable collection of samples with a shared vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    vocab: LabelVocabulary,
    samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(vocab: LabelVocabulary, samples: Vec<Sample>) -> Result<Self> {
        vocab.validate()?;
        let mut ids = HashSet::with_capacity(samples.len());
        for s in &samples {
            if !ids.insert(s.id.as_str()) {
                return Err(Error::DuplicateId(s.id.clone()));
            }
            for task in Task::ALL {
                let classes = vocab.num_classes(task);
                if s.label(task) >= classes {
                    return Err(Error::LabelOutOfRange {
                        label: s.label(task),
                        classes,
                    });
                }
            }
        }
        Ok(Self { vocab, samples })
    }

    pub fn vocab(&self) -> &LabelVocabulary {
        &self.vocab
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Positions of the samples in `split`, in dataset order.
    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        self.samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.split == split)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn split_samples(&self, split: Split) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(move |s| s.split == split)
    }

    /// Feature dimension of each modality, taken from the first sample.
    pub fn feature_dims(&self) -> Option<ModalityMap<usize>> {
        self.samples.first().map(|s| s.features.map(|_, f| f.cols()))
    }

    pub(crate) fn into_parts(self) -> (LabelVocabulary, Vec<Sample>) {
        (self.vocab, self.samples)
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    pub fn vocab(emotions: usize, intents: usize) -> LabelVocabulary {
        LabelVocabulary::new(
            (0..emotions).map(|i| format!("e{i}")).collect(),
            (0..intents).map(|i| format!("i{i}")).collect(),
        )
        .unwrap()
    }

    pub fn sample(id: &str, emotion: usize, intent: usize, split: Split, fill: f32) -> Sample {
        Sample {
            id: id.to_string(),
            features: ModalityMap::from_fn(|m| {
                let cols = 2 + m.index();
                FeatureMatrix::new(2, cols, vec![fill; 2 * cols]).unwrap()
            }),
            emotion,
            intent,
            split,
            origin: Origin::Original,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;

    #[test]
    fn vocabulary_rejects_duplicates_and_empties() {
        assert!(LabelVocabulary::new(vec![], vec!["a".into()]).is_err());
        assert!(LabelVocabulary::new(vec!["a".into(), "a".into()], vec!["b".into()]).is_err());
        let v = LabelVocabulary::new(
            vec!["happy".into()],
            vec!["acknowledging".into(), "encouraging".into()],
        )
        .unwrap();
        assert_eq!(v.index_of(Task::Intent, "encouraging"), Some(1));
    }

    #[test]
    fn dataset_rejects_duplicate_ids() {
        let s = sample("a", 0, 0, Split::Train, 0.0);
        let err = Dataset::new(vocab(1, 1), vec![s.clone(), s]).unwrap_err();
        assert!(matches!(err, Error::DuplicateId(id) if id == "a"));
    }

    #[test]
    fn split_indices_preserve_order() {
        let d = Dataset::new(
            vocab(2, 2),
            vec![
                sample("a", 0, 0, Split::Train, 0.0),
                sample("b", 1, 0, Split::Val, 0.0),
                sample("c", 1, 1, Split::Train, 0.0),
            ],
        )
        .unwrap();
        assert_eq!(d.split_indices(Split::Train), vec![0, 2]);
        assert_eq!(d.split_indices(Split::Test), Vec::<usize>::new());
    }
}
