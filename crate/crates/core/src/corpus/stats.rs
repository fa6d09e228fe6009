use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::types::{Split, Task};

pub const DEFAULT_W_MAX: f64 = 10.0;

/// Per-class label counts for one task over one split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassStats {
    pub task: Task,
    pub counts: Vec<usize>,
    pub total: usize,
}

impl ClassStats {
    pub fn from_labels(task: Task, num_classes: usize, labels: impl IntoIterator<Item = usize>) -> Self {
        let mut counts = vec![0; num_classes];
        let mut total = 0;
        for l in labels {
            counts[l] += 1;
            total += 1;
        }
        Self { task, counts, total }
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }
}

pub fn compute_class_stats(dataset: &Dataset, task: Task, split: Split) -> Result<ClassStats> {
    let stats = ClassStats::from_labels(
        task,
        dataset.vocab().num_classes(task),
        dataset.split_samples(split).map(|s| s.label(task)),
    );
    if stats.total == 0 {
        return Err(Error::EmptySplit(split.name().to_string()));
    }
    Ok(stats)
}

/// Inverse-frequency class weights `N / (C * n_c)`, clipped to `w_max`.
/// Empty classes get `w_max`.
pub fn class_weights(stats: &ClassStats, w_max: f64) -> Vec<f64> {
    let n = stats.total as f64;
    let c = stats.num_classes() as f64;
    stats
        .counts
        .iter()
        .map(|&nc| {
            if nc == 0 {
                w_max
            } else {
                (n / (c * nc as f64)).min(w_max)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::test_support::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn stats(counts: &[usize]) -> ClassStats {
        ClassStats {
            task: Task::Intent,
            counts: counts.to_vec(),
            total: counts.iter().sum(),
        }
    }

    #[test]
    fn tallies_small_split() {
        let d = Dataset::new(
            vocab(2, 2),
            vec![
                sample("a", 0, 0, Split::Train, 0.0),
                sample("b", 0, 1, Split::Train, 0.0),
                sample("c", 1, 1, Split::Train, 0.0),
                sample("d", 1, 1, Split::Val, 0.0),
            ],
        )
        .unwrap();
        let s = compute_class_stats(&d, Task::Emotion, Split::Train).unwrap();
        assert_eq!((s.counts, s.total), (vec![2, 1], 3));
        let err = compute_class_stats(&d, Task::Emotion, Split::Test).unwrap_err();
        assert!(matches!(err, Error::EmptySplit(_)));
    }

    #[test]
    fn uniform_labels() {
        let d = Dataset::new(
            vocab(4, 1),
            (0..8).map(|i| sample(&i.to_string(), i % 4, 0, Split::Train, 0.0)).collect(),
        )
        .unwrap();
        let s = compute_class_stats(&d, Task::Emotion, Split::Train).unwrap();
        assert_eq!(s.counts, vec![2, 2, 2, 2]);
    }

    #[test]
    fn random_dataset_matches_one_pass_tally() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let labels: Vec<(usize, usize)> = (0..50).map(|_| (rng.random_range(0..3), rng.random_range(0..5))).collect();
        let d = Dataset::new(
            vocab(3, 5),
            labels
                .iter()
                .enumerate()
                .map(|(i, &(e, t))| sample(&format!("s{i}"), e, t, Split::Train, 0.0))
                .collect(),
        )
        .unwrap();
        let mut oracle = [0usize; 5];
        for &(_, t) in &labels {
            oracle[t] += 1;
        }
        let s = compute_class_stats(&d, Task::Intent, Split::Train).unwrap();
        assert_eq!(s.counts, oracle.to_vec());
        assert_eq!(s.total, 50);
    }

    #[test]
    fn weight_examples() {
        assert_eq!(class_weights(&stats(&[10, 10, 10]), 10.0), vec![1.0; 3]);
        let w = class_weights(&stats(&[100, 100, 50, 5]), 10.0);
        for (a, b) in w.iter().zip([0.6375, 0.6375, 1.275, 10.0]) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        assert_eq!(class_weights(&stats(&[3, 0]), 10.0), vec![0.5, 10.0]);
    }

    proptest! {
        #[test]
        fn weights_are_scale_covariant(counts in proptest::collection::vec(1usize..50, 2..6), k in 1usize..20) {
            let base = class_weights(&stats(&counts), f64::INFINITY);
            let scaled: Vec<usize> = counts.iter().map(|c| c * k).collect();
            let w = class_weights(&stats(&scaled), f64::INFINITY);
            for (a, b) in base.iter().zip(&w) {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
                prop_assert!(*b > 0.0);
            }
        }
    }
}
