//! Modality dropout: during training each modality's embeddings are zeroed
//! independently with probability `p`. If every modality is dropped, one is
//! restored uniformly at random. Surviving embeddings are not rescaled.

use rand::Rng;

use super::EmbeddingPair;
use crate::types::{Modality, ModalityMap};

/// Outcome of one dropout decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DropoutMask {
    /// Modalities whose draw fell below `p`, before the keep-one fallback.
    pub dropped: [bool; 3],
    /// Modality restored by the keep-one fallback, if it fired.
    pub restored: Option<Modality>,
}

impl DropoutMask {
    pub const KEEP_ALL: DropoutMask = DropoutMask {
        dropped: [false; 3],
        restored: None,
    };

    pub fn keeps(&self, m: Modality) -> bool {
        !self.dropped[m.index()] || self.restored == Some(m)
    }

    pub fn kept_count(&self) -> usize {
        Modality::ALL.iter().filter(|&&m| self.keeps(m)).count()
    }

    /// Applies the drop rule to fixed uniform draws. `fallback` selects the
    /// restored modality (`0..3`) and is only consulted when all are dropped.
    pub fn from_draws(p: f64, draws: [f64; 3], fallback: usize) -> Self {
        let dropped = draws.map(|u| u < p);
        let restored = dropped.iter().all(|&d| d).then(|| Modality::ALL[fallback]);
        Self { dropped, restored }
    }

    /// Draws a mask. No random numbers are consumed when `!training` or `p == 0`.
    pub fn sample(p: f64, training: bool, rng: &mut impl Rng) -> Self {
        if !training || p <= 0.0 {
            return Self::KEEP_ALL;
        }
        let draws = [(); 3].map(|_| rng.random::<f64>());
        let dropped = draws.map(|u| u < p);
        let fallback = if dropped.iter().all(|&d| d) {
            rng.random_range(0..3)
        } else {
            0
        };
        Self::from_draws(p, draws, fallback)
    }
}

pub fn apply_dropout_mask(
    embs: &ModalityMap<EmbeddingPair>,
    mask: &DropoutMask,
) -> ModalityMap<EmbeddingPair> {
    embs.map(|m, e| {
        if mask.keeps(m) {
            e.clone()
        } else {
            EmbeddingPair {
                emotion: vec![0.0; e.emotion.len()],
                intent: vec![0.0; e.intent.len()],
            }
        }
    })
}

pub fn modality_dropout(
    embs: &ModalityMap<EmbeddingPair>,
    p: f64,
    training: bool,
    rng: &mut impl Rng,
) -> (ModalityMap<EmbeddingPair>, DropoutMask) {
    let mask = DropoutMask::sample(p, training, rng);
    (apply_dropout_mask(embs, &mask), mask)
}
