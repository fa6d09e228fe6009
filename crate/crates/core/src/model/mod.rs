//! The joint recognition network.
//!
//! For each modality, two dedicated encoders (one per task) map the feature
//! sequence to an `h`-dimensional embedding. Modality dropout may zero whole
//! modalities during training. Each task then fuses its three modality
//! embeddings with a small transformer whose readout is a learned
//! aggregation token (no positional encoding, so the modalities form a set).
//! A bidirectional cross-attention stage lets the emotion and intent
//! representations attend to each other, and two affine heads produce logits.

mod dropout;
mod layers;
mod params;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use dropout::{apply_dropout_mask, modality_dropout, DropoutMask};
pub use params::{Param, ParameterSet};

use crate::autodiff::{Mat, Tape, Var};
use crate::corpus::{FeatureMatrix, Sample};
use crate::error::{Error, Result};
use crate::types::{Modality, ModalityMap, Task};
use layers::{row_var, Architecture};
pub(crate) use layers::ForwardVars;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub d_audio: usize,
    pub d_video: usize,
    pub d_text: usize,
    /// Shared embedding width.
    pub h: usize,
    pub fusion_layers: usize,
    pub fusion_heads: usize,
    pub interaction_heads: usize,
    /// Modality dropout probability, shared by all modalities.
    pub dropout_p: f64,
    pub c_emotion: usize,
    pub c_intent: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("d_audio", self.d_audio),
            ("d_video", self.d_video),
            ("d_text", self.d_text),
            ("h", self.h),
            ("fusion_layers", self.fusion_layers),
            ("fusion_heads", self.fusion_heads),
            ("interaction_heads", self.interaction_heads),
            ("c_emotion", self.c_emotion),
            ("c_intent", self.c_intent),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("model.{name} must be at least 1")));
        }
        if !self.h.is_multiple_of(self.fusion_heads) || !self.h.is_multiple_of(self.interaction_heads) {
            return Err(Error::Config(format!(
                "h = {} must be divisible by fusion_heads ({}) and interaction_heads ({})",
                self.h, self.fusion_heads, self.interaction_heads
            )));
        }
        if !(0.0..=1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!("dropout_p {} outside [0, 1]", self.dropout_p)));
        }
        Ok(())
    }

    pub fn input_dim(&self, m: Modality) -> usize {
        match m {
            Modality::Audio => self.d_audio,
            Modality::Video => self.d_video,
            Modality::Text => self.d_text,
        }
    }

    pub fn num_classes(&self, task: Task) -> usize {
        match task {
            Task::Emotion => self.c_emotion,
            Task::Intent => self.c_intent,
        }
    }
}

/// Task-specific embeddings of one modality.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingPair {
    pub emotion: Vec<f64>,
    pub intent: Vec<f64>,
}

impl EmbeddingPair {
    pub fn get(&self, task: Task) -> &[f64] {
        match task {
            Task::Emotion => &self.emotion,
            Task::Intent => &self.intent,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub emotion_logits: Vec<f64>,
    pub intent_logits: Vec<f64>,
    /// Post-interaction representation consumed by the emotion head.
    pub emotion_rep: Vec<f64>,
    pub intent_rep: Vec<f64>,
}

impl ForwardOutput {
    pub fn logits(&self, task: Task) -> &[f64] {
        match task {
            Task::Emotion => &self.emotion_logits,
            Task::Intent => &self.intent_logits,
        }
    }

    pub fn rep(&self, task: Task) -> &[f64] {
        match task {
            Task::Emotion => &self.emotion_rep,
            Task::Intent => &self.intent_rep,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    arch: Architecture,
    params: ParameterSet,
}

impl Model {
    /// Fresh model with seeded uniform initialization.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (arch, specs) = Architecture::build(&config);
        let params = ParameterSet::initialize(&specs, seed);
        Ok(Self { config, arch, params })
    }

    /// Wraps existing parameters, checking names and shapes against the layout.
    pub fn from_parts(config: ModelConfig, params: ParameterSet) -> Result<Self> {
        config.validate()?;
        let (arch, specs) = Architecture::build(&config);
        if specs.len() != params.len() {
            return Err(Error::Config(format!(
                "parameter count {} does not match layout {}",
                params.len(),
                specs.len()
            )));
        }
        for (spec, p) in specs.iter().zip(params.iter()) {
            if spec.name != p.name || spec.rows != p.rows || spec.cols != p.cols || p.data.len() != p.rows * p.cols {
                return Err(Error::Config(format!(
                    "parameter {} ({}x{}) does not match layout {} ({}x{})",
                    p.name, p.rows, p.cols, spec.name, spec.rows, spec.cols
                )));
            }
        }
        if !params.all_finite() {
            return Err(Error::Config("non-finite parameter value".into()));
        }
        Ok(Self { config, arch, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet {
        &mut self.params
    }

    pub fn into_params(self) -> ParameterSet {
        self.params
    }

    /// Places every parameter on the tape as a leaf, in layout order.
    pub(crate) fn leaves(&self, tape: &mut Tape) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| tape.leaf(Mat::from_vec(p.rows, p.cols, p.data.clone())))
            .collect()
    }

    fn input_var(&self, tape: &mut Tape, m: Modality, x: &FeatureMatrix) -> Result<Var> {
        let expected = self.config.input_dim(m);
        if x.cols() != expected {
            return Err(Error::DimMismatch {
                modality: m.name().to_string(),
                expected,
                found: x.cols(),
            });
        }
        let data = x.values().iter().map(|&v| f64::from(v)).collect();
        Ok(tape.leaf(Mat::from_vec(x.rows(), x.cols(), data)))
    }

    pub(crate) fn forward_on_tape(&self, tape: &mut Tape, leaves: &[Var], sample: &Sample, mask: &DropoutMask) -> Result<ForwardVars> {
        let inputs = ModalityMap::try_from_fn(|m| {
            let x = &sample.features[m];
            Ok::<_, Error>((self.input_var(tape, m, x)?, vec![true; x.rows()]))
        })?;
        let keep = Modality::ALL.map(|m| mask.keeps(m));
        Ok(self.arch.forward(tape, leaves, &inputs, keep))
    }

    /// Both task embeddings for one modality. `valid` marks non-padding
    /// rows; `None` means every row is valid.
    pub fn encode_modality(&self, m: Modality, x: &FeatureMatrix, valid: Option<&[bool]>) -> Result<EmbeddingPair> {
        let mut tape = Tape::new();
        let leaves = self.leaves(&mut tape);
        let xv = self.input_var(&mut tape, m, x)?;
        let valid = match valid {
            Some(v) if v.len() != x.rows() => {
                return Err(Error::LengthMismatch {
                    left: v.len(),
                    right: x.rows(),
                })
            }
            Some(v) if !v.iter().any(|&k| k) => return Err(Error::InvalidMatrix("no valid rows".into())),
            Some(v) => v.to_vec(),
            None => vec![true; x.rows()],
        };
        let [e, i] = Task::ALL.map(|task| {
            let out = self.arch.encode(&mut tape, &leaves, m, task, xv, &valid);
            tape.value(out).data.clone()
        });
        Ok(EmbeddingPair { emotion: e, intent: i })
    }

    /// Transformer fusion of three `h`-vectors for one task.
    pub fn fuse(&self, embs: &ModalityMap<Vec<f64>>, task: Task) -> Vec<f64> {
        let mut tape = Tape::new();
        let leaves = self.leaves(&mut tape);
        let vars = Modality::ALL.map(|m| row_var(&mut tape, &embs[m]));
        let out = self.arch.fuse(&mut tape, &leaves, task, vars);
        tape.value(out).data.clone()
    }

    /// Emotion-intent cross-attention; returns `(emotion_rep, intent_rep)`.
    pub fn interact(&self, emotion: &[f64], intent: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut tape = Tape::new();
        let leaves = self.leaves(&mut tape);
        let (e, i) = (row_var(&mut tape, emotion), row_var(&mut tape, intent));
        let (e, i) = self.arch.interact(&mut tape, &leaves, e, i);
        (tape.value(e).data.clone(), tape.value(i).data.clone())
    }

    /// Forward pass with an explicit dropout decision.
    pub fn forward_masked(&self, sample: &Sample, mask: &DropoutMask) -> Result<ForwardOutput> {
        let mut tape = Tape::new();
        let leaves = self.leaves(&mut tape);
        let vars = self.forward_on_tape(&mut tape, &leaves, sample, mask)?;
        Ok(output_values(&tape, &vars))
    }

    /// Forward pass; modality dropout with the configured probability is
    /// drawn from `rng` only when `training` is set.
    pub fn forward(&self, sample: &Sample, training: bool, rng: &mut impl Rng) -> Result<ForwardOutput> {
        let mask = DropoutMask::sample(self.config.dropout_p, training, rng);
        self.forward_masked(sample, &mask)
    }

    /// Inference-mode forward pass.
    pub fn predict(&self, sample: &Sample) -> Result<ForwardOutput> {
        self.forward_masked(sample, &DropoutMask::KEEP_ALL)
    }
}

pub(crate) fn output_values(tape: &Tape, vars: &ForwardVars) -> ForwardOutput {
    let get = |v: Var| tape.value(v).data.clone();
    ForwardOutput {
        emotion_logits: get(vars.logits[0]),
        intent_logits: get(vars.logits[1]),
        emotion_rep: get(vars.reps[0]),
        intent_rep: get(vars.reps[1]),
    }
}


#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;
    use crate::rng::stream;
    use rand::{Rng, SeedableRng};

    fn zero_named(model: &mut Model, pred: impl Fn(&str) -> bool) {
        for p in model.params_mut().iter_mut().filter(|p| pred(&p.name)) {
            p.data.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = tiny_config();
        cfg.fusion_heads = 3;
        assert!(Model::new(cfg, 0).is_err());
        let mut cfg = tiny_config();
        cfg.d_video = 0;
        assert!(Model::new(cfg, 0).is_err());
    }

    #[test]
    fn encoder_shapes() {
        let mut cfg = tiny_config();
        cfg.d_audio = 20;
        cfg.h = 32;
        let model = Model::new(cfg, 1).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let x = random_matrix(&mut rng, 7, 20);
        let e = model.encode_modality(Modality::Audio, &x, None).unwrap();
        assert_eq!((e.emotion.len(), e.intent.len()), (32, 32));
        let bad = random_matrix(&mut rng, 7, 19);
        assert!(matches!(
            model.encode_modality(Modality::Audio, &bad, None),
            Err(Error::DimMismatch { expected: 20, found: 19, .. })
        ));
    }

    #[test]
    fn zero_input_gives_value_at_origin() {
        let cfg = tiny_config();
        let mut model = Model::new(cfg.clone(), 1).unwrap();
        let x = FeatureMatrix::new(3, cfg.d_video, vec![0.0; 3 * cfg.d_video]).unwrap();
        let e = model.encode_modality(Modality::Video, &x, None).unwrap();
        assert_eq!(e.emotion, vec![0.0; cfg.h]);
        assert_eq!(e.intent, vec![0.0; cfg.h]);
        // Distinct nonzero biases make the two task embeddings differ.
        for (k, task) in ["emotion", "intent"].iter().enumerate() {
            let p = model.params_mut().get_mut(&format!("encoder.video.{task}.proj.bias")).unwrap();
            p.data.iter_mut().enumerate().for_each(|(j, v)| *v = 0.1 * (j + k) as f64);
        }
        let e = model.encode_modality(Modality::Video, &x, None).unwrap();
        assert_ne!(e.emotion, e.intent);
    }

    #[test]
    fn padding_rows_do_not_change_encoding() {
        let cfg = tiny_config();
        let model = Model::new(cfg.clone(), 2).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let x = random_matrix(&mut rng, 5, cfg.d_audio);
        let mut padded = x.values().to_vec();
        padded.extend((0..3 * cfg.d_audio).map(|_| rng.random_range(-5.0f32..5.0)));
        let xp = FeatureMatrix::new(8, cfg.d_audio, padded).unwrap();
        let mask: Vec<bool> = (0..8).map(|r| r < 5).collect();
        let a = model.encode_modality(Modality::Audio, &x, None).unwrap();
        let b = model.encode_modality(Modality::Audio, &xp, Some(&mask)).unwrap();
        for (u, v) in a.emotion.iter().chain(&a.intent).zip(b.emotion.iter().chain(&b.intent)) {
            assert!((u - v).abs() < 1e-6);
        }
    }

    #[test]
    fn fusion_is_permutation_invariant() {
        let cfg = tiny_config();
        let model = Model::new(cfg.clone(), 4).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let v: Vec<Vec<f64>> = (0..3).map(|_| (0..cfg.h).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        for task in Task::ALL {
            let base = model.fuse(&ModalityMap([v[0].clone(), v[1].clone(), v[2].clone()]), task);
            assert_eq!(base.len(), cfg.h);
            let perm = model.fuse(&ModalityMap([v[2].clone(), v[0].clone(), v[1].clone()]), task);
            for (a, b) in base.iter().zip(&perm) {
                assert!((a - b).abs() < 1e-6);
            }
        }
        let zeros = ModalityMap::from_fn(|_| vec![0.0; cfg.h]);
        assert_eq!(model.fuse(&zeros, Task::Intent), model.fuse(&zeros, Task::Intent));
        assert_ne!(model.fuse(&zeros, Task::Intent), model.fuse(&zeros, Task::Emotion));
    }

    #[test]
    fn interaction_is_residual_identity_with_zero_output_projections() {
        let cfg = tiny_config();
        let mut model = Model::new(cfg.clone(), 6).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let e: Vec<f64> = (0..cfg.h).map(|_| rng.random_range(-1.0..1.0)).collect();
        let i: Vec<f64> = (0..cfg.h).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (oe, oi) = model.interact(&e, &i);
        assert_eq!((oe.len(), oi.len()), (cfg.h, cfg.h));
        // Swapping inputs does not swap outputs: the directions have separate weights.
        let (se, si) = model.interact(&i, &e);
        assert!(se != oi || si != oe);

        zero_named(&mut model, |n| {
            n.starts_with("interaction.") && (n.contains(".attn.out.") || n.contains(".ff.outer."))
        });
        let (ze, zi) = model.interact(&e, &i);
        assert_eq!(ze, e);
        assert_eq!(zi, i);
    }

    #[test]
    fn forward_shapes_and_determinism() {
        let cfg = tiny_config();
        let model = Model::new(cfg.clone(), 8).unwrap();
        let s = random_sample(&cfg, 9, 0, 1);
        let mut rng = stream(1, "dropout");
        let a = model.forward(&s, false, &mut rng).unwrap();
        let b = model.forward(&s, false, &mut rng).unwrap();
        assert_eq!(a.emotion_logits.len(), cfg.c_emotion);
        assert_eq!(a.intent_logits.len(), cfg.c_intent);
        assert_eq!(a, b);

        let mut no_drop = cfg.clone();
        no_drop.dropout_p = 0.0;
        let model0 = Model::from_parts(no_drop, model.params().clone()).unwrap();
        let c = model0.forward(&s, true, &mut rng).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn dropout_masks_change_training_forward() {
        let cfg = tiny_config();
        let model = Model::new(cfg.clone(), 8).unwrap();
        let s = random_sample(&cfg, 10, 0, 1);
        let full = model.predict(&s).unwrap();
        let masked = model
            .forward_masked(&s, &DropoutMask::from_draws(0.5, [0.1, 0.9, 0.9], 0))
            .unwrap();
        assert_ne!(full, masked);
    }

    #[test]
    fn from_parts_checks_layout() {
        let cfg = tiny_config();
        let model = Model::new(cfg.clone(), 1).unwrap();
        let mut other = cfg.clone();
        other.h = 4;
        assert!(Model::from_parts(other, model.params().clone()).is_err());
        assert!(Model::from_parts(cfg, model.into_params()).is_ok());
    }
}
