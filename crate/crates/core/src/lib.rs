//! Joint emotion and intent recognition over pre-extracted multimodal features.
//!
//! The pipeline mirrors a typical challenge system for class-imbalanced joint
//! recognition: per-modality encoders produce a dedicated embedding for each
//! task, modality dropout zeroes whole modalities during training, a small
//! transformer fuses the modalities per task, a cross-attention stage lets the
//! two tasks condition on each other, and two linear heads classify.
//!
//! Training combines class-weighted cross-entropy with a sample-weighted focal
//! contrastive objective ([`losses::swfc_loss`]). Models are scored with the
//! joint recognition balance metric ([`metrics::jrbm`]) and the best
//! checkpoints can be combined by plurality voting ([`ensemble`]).

pub mod autodiff;
pub mod checkpoint;
pub mod corpus;
pub mod ensemble;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod training;
mod types;

pub use error::{Error, Result};
pub use types::{Modality, ModalityMap, Origin, Split, Task};
