//! Confusion matrices, macro-F1 and the joint recognition balance metric.
//!
//! JRBM is taken to be the harmonic mean of the emotion and intent macro-F1
//! scores. It is zero whenever either task scores zero.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::types::{Split, Task};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub num_classes: usize,
    /// `counts[gold][pred]`
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(num_classes: usize) -> Self {
        Self {
            num_classes,
            counts: vec![vec![0; num_classes]; num_classes],
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Adds another matrix of the same size, e.g. from a shard of the split.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.num_classes != self.num_classes {
            return Err(Error::LengthMismatch {
                left: self.num_classes,
                right: other.num_classes,
            });
        }
        for (a, b) in self.counts.iter_mut().flatten().zip(other.counts.iter().flatten()) {
            *a += b;
        }
        Ok(())
    }
}

pub fn confusion(golds: &[usize], preds: &[usize], num_classes: usize) -> Result<ConfusionMatrix> {
    if golds.len() != preds.len() {
        return Err(Error::LengthMismatch {
            left: golds.len(),
            right: preds.len(),
        });
    }
    let mut m = ConfusionMatrix::zeros(num_classes);
    for (&g, &p) in golds.iter().zip(preds) {
        for label in [g, p] {
            if label >= num_classes {
                return Err(Error::LabelOutOfRange {
                    label,
                    classes: num_classes,
                });
            }
        }
        m.counts[g][p] += 1;
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroF1 {
    pub macro_f1: f64,
    /// `None` for classes absent from both gold labels and predictions.
    pub per_class: Vec<Option<f64>>,
}

pub fn macro_f1(conf: &ConfusionMatrix) -> Result<MacroF1> {
    if conf.total() == 0 {
        return Err(Error::EmptyMatrix);
    }
    let c = conf.num_classes;
    let per_class: Vec<Option<f64>> = (0..c)
        .map(|k| {
            let tp = conf.counts[k][k];
            let fp: u64 = (0..c).filter(|&g| g != k).map(|g| conf.counts[g][k]).sum();
            let fn_: u64 = (0..c).filter(|&p| p != k).map(|p| conf.counts[k][p]).sum();
            let denom = 2 * tp + fp + fn_;
            (denom > 0).then(|| 2.0 * tp as f64 / denom as f64)
        })
        .collect();
    let included: Vec<f64> = per_class.iter().flatten().copied().collect();
    let macro_f1 = included.iter().sum::<f64>() / included.len() as f64;
    Ok(MacroF1 { macro_f1, per_class })
}

/// Harmonic mean of the two task scores; zero if either is zero.
pub fn jrbm(f1_emotion: f64, f1_intent: f64) -> f64 {
    if f1_emotion == 0.0 || f1_intent == 0.0 {
        return 0.0;
    }
    // Grouped so that jrbm(a, a) == a holds exactly in floating point.
    (2.0 * f1_intent) * (f1_emotion / (f1_emotion + f1_intent))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: Split,
    pub num_samples: usize,
    pub conf_emotion: ConfusionMatrix,
    pub conf_intent: ConfusionMatrix,
    pub f1_emotion: f64,
    pub f1_intent: f64,
    pub per_class_f1_emotion: Vec<Option<f64>>,
    pub per_class_f1_intent: Vec<Option<f64>>,
    pub jrbm: f64,
}

impl EvalReport {
    pub fn from_confusions(split: Split, conf_emotion: ConfusionMatrix, conf_intent: ConfusionMatrix) -> Result<Self> {
        let e = macro_f1(&conf_emotion)?;
        let i = macro_f1(&conf_intent)?;
        Ok(Self {
            split,
            num_samples: conf_emotion.total() as usize,
            jrbm: jrbm(e.macro_f1, i.macro_f1),
            f1_emotion: e.macro_f1,
            f1_intent: i.macro_f1,
            per_class_f1_emotion: e.per_class,
            per_class_f1_intent: i.per_class,
            conf_emotion,
            conf_intent,
        })
    }

    pub fn f1(&self, task: Task) -> f64 {
        match task {
            Task::Emotion => self.f1_emotion,
            Task::Intent => self.f1_intent,
        }
    }

    pub fn per_class_f1(&self, task: Task) -> &[Option<f64>] {
        match task {
            Task::Emotion => &self.per_class_f1_emotion,
            Task::Intent => &self.per_class_f1_intent,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Anything that maps a sample to `(emotion_logits, intent_logits)`.
pub trait Predictor {
    fn logits(&self, sample: &Sample) -> Result<(Vec<f64>, Vec<f64>)>;
}

impl Predictor for Model {
    fn logits(&self, sample: &Sample) -> Result<(Vec<f64>, Vec<f64>)> {
        let out = self.predict(sample)?;
        Ok((out.emotion_logits, out.intent_logits))
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub emotion: usize,
    pub intent: usize,
}

pub fn predict_split(predictor: &impl Predictor, dataset: &Dataset, split: Split) -> Result<Vec<Prediction>> {
    dataset
        .split_samples(split)
        .map(|s| {
            let (e, i) = predictor.logits(s)?;
            Ok(Prediction {
                id: s.id.clone(),
                emotion: argmax(&e),
                intent: argmax(&i),
            })
        })
        .collect()
}

/// Scores predictions against the gold labels of `split`.
pub fn report_from_predictions(dataset: &Dataset, split: Split, preds: &[Prediction]) -> Result<EvalReport> {
    let gold: Vec<&Sample> = dataset.split_samples(split).collect();
    if gold.is_empty() {
        return Err(Error::EmptySplit(split.name().to_string()));
    }
    if gold.len() != preds.len() {
        return Err(Error::LengthMismatch {
            left: gold.len(),
            right: preds.len(),
        });
    }
    let vocab = dataset.vocab();
    let conf = |task: Task, pick: fn(&Prediction) -> usize| {
        let g: Vec<usize> = gold.iter().map(|s| s.label(task)).collect();
        let p: Vec<usize> = preds.iter().map(pick).collect();
        confusion(&g, &p, vocab.num_classes(task))
    };
    EvalReport::from_confusions(split, conf(Task::Emotion, |p| p.emotion)?, conf(Task::Intent, |p| p.intent)?)
}

pub fn evaluate_with(predictor: &impl Predictor, dataset: &Dataset, split: Split) -> Result<(EvalReport, Vec<Prediction>)> {
    if dataset.split_samples(split).next().is_none() {
        return Err(Error::EmptySplit(split.name().to_string()));
    }
    let preds = predict_split(predictor, dataset, split)?;
    let report = report_from_predictions(dataset, split, &preds)?;
    Ok((report, preds))
}

/// Inference-mode evaluation of `model` on one split.
pub fn evaluate(model: &Model, dataset: &Dataset, split: Split) -> Result<EvalReport> {
    evaluate_with(model, dataset, split).map(|(r, _)| r)
}

/// Writes `id,emotion,intent` rows using label names.
pub fn write_predictions_csv(path: &Path, dataset: &Dataset, preds: &[Prediction]) -> Result<()> {
    let vocab = dataset.vocab();
    let mut out = String::from("id,emotion,intent\n");
    for p in preds {
        out.push_str(&format!(
            "{},{},{}\n",
            p.id,
            vocab.name_of(Task::Emotion, p.emotion),
            vocab.name_of(Task::Intent, p.intent)
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::test_support::{sample, vocab};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn confusion_examples() {
        let m = confusion(&[0, 1], &[0, 1], 2).unwrap();
        assert_eq!(m.counts, vec![vec![1, 0], vec![0, 1]]);
        let m = confusion(&[0, 0], &[1, 1], 2).unwrap();
        assert_eq!(m.counts, vec![vec![0, 2], vec![0, 0]]);
        assert!(matches!(confusion(&[0], &[0, 1], 2), Err(Error::LengthMismatch { .. })));
        assert!(matches!(confusion(&[0], &[2], 2), Err(Error::LabelOutOfRange { .. })));
    }

    #[test]
    fn confusion_matches_tally() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g: Vec<usize> = (0..200).map(|_| rng.random_range(0..4)).collect();
        let p: Vec<usize> = (0..200).map(|_| rng.random_range(0..4)).collect();
        let m = confusion(&g, &p, 4).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                let n = g.iter().zip(&p).filter(|(&x, &y)| x == a && y == b).count() as u64;
                assert_eq!(m.counts[a][b], n);
            }
        }
        assert_eq!(m.total(), 200);
    }

    #[test]
    fn macro_f1_examples() {
        let perfect = confusion(&[0, 1, 2], &[0, 1, 2], 3).unwrap();
        assert_eq!(macro_f1(&perfect).unwrap().macro_f1, 1.0);
        let half = ConfusionMatrix {
            num_classes: 2,
            counts: vec![vec![1, 1], vec![1, 1]],
        };
        let f = macro_f1(&half).unwrap();
        assert_eq!(f.per_class, vec![Some(0.5), Some(0.5)]);
        assert_eq!(f.macro_f1, 0.5);
        let absent = confusion(&[0, 1], &[0, 1], 3).unwrap();
        let f = macro_f1(&absent).unwrap();
        assert_eq!(f.macro_f1, 1.0);
        assert_eq!(f.per_class[2], None);
        assert!(matches!(macro_f1(&ConfusionMatrix::zeros(2)), Err(Error::EmptyMatrix)));
    }

    #[test]
    fn jrbm_examples() {
        assert_eq!(jrbm(1.0, 1.0), 1.0);
        assert_eq!(jrbm(1.0, 0.0), 0.0);
        assert!((jrbm(0.8, 0.6) - 0.685_714_285_714_285_7).abs() < 1e-12);
        for a in [0.1, 0.37, 0.5, 0.99] {
            assert_eq!(jrbm(a, a), a);
        }
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }

    #[test]
    fn relabeling_permutation_preserves_macro_f1() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g: Vec<usize> = (0..60).map(|_| rng.random_range(0..4)).collect();
        let p: Vec<usize> = (0..60).map(|_| rng.random_range(0..4)).collect();
        let perm = [2, 0, 3, 1];
        let a = macro_f1(&confusion(&g, &p, 4).unwrap()).unwrap().macro_f1;
        let gp: Vec<usize> = g.iter().map(|&x| perm[x]).collect();
        let pp: Vec<usize> = p.iter().map(|&x| perm[x]).collect();
        let b = macro_f1(&confusion(&gp, &pp, 4).unwrap()).unwrap().macro_f1;
        assert!((a - b).abs() < 1e-15);
    }

    struct Constant(usize, usize, usize, usize);

    impl Predictor for Constant {
        fn logits(&self, _: &Sample) -> Result<(Vec<f64>, Vec<f64>)> {
            let mut e = vec![0.0; self.2];
            let mut i = vec![0.0; self.3];
            e[self.0] = 1.0;
            i[self.1] = 1.0;
            Ok((e, i))
        }
    }

    struct Oracle;

    impl Predictor for Oracle {
        fn logits(&self, s: &Sample) -> Result<(Vec<f64>, Vec<f64>)> {
            let mut e = vec![0.0; 2];
            let mut i = vec![0.0; 2];
            e[s.emotion] = 1.0;
            i[s.intent] = 1.0;
            Ok((e, i))
        }
    }

    fn balanced() -> Dataset {
        Dataset::new(
            vocab(2, 2),
            (0..4).map(|k| sample(&format!("v{k}"), k % 2, (k / 2) % 2, Split::Val, 0.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn evaluate_perfect_and_constant_predictors() {
        let d = balanced();
        let (r, preds) = evaluate_with(&Oracle, &d, Split::Val).unwrap();
        assert_eq!(r.jrbm, 1.0);
        assert_eq!(preds.len(), 4);

        // Always class 0: class 0 F1 = 2*2/(4+2) = 2/3, class 1 F1 = 0.
        let (r, _) = evaluate_with(&Constant(0, 0, 2, 2), &d, Split::Val).unwrap();
        assert!((r.f1_emotion - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.jrbm, jrbm(r.f1_emotion, r.f1_intent));
        assert!(matches!(evaluate_with(&Oracle, &d, Split::Test), Err(Error::EmptySplit(_))));
    }

    #[test]
    fn shuffling_pairs_leaves_report_unchanged() {
        let d = balanced();
        let (r, preds) = evaluate_with(&Constant(1, 0, 2, 2), &d, Split::Val).unwrap();
        let gold: Vec<Sample> = d.samples().iter().rev().cloned().collect();
        let rev = Dataset::new(d.vocab().clone(), gold).unwrap();
        let rev_preds: Vec<Prediction> = preds.into_iter().rev().collect();
        assert_eq!(report_from_predictions(&rev, Split::Val, &rev_preds).unwrap(), r);
    }
}
