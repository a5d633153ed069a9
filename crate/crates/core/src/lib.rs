//! Inhaler sound event classification core.
//!
//! Everything in this crate is pure computation: signal preprocessing,
//! corpus splitting and synthesis, a compact wav2vec-style model with
//! hand-written backpropagation, the optimizers and training loops, and the
//! evaluation metrics. File formats, the command line and run directories live
//! in the `inhaler` companion crate.
//!
//! The crate is `no_std` (with `alloc`) when the default `std` feature is
//! disabled.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod audio;
pub mod corpus;
pub mod label;
pub mod math;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod train;

pub use audio::{Annotation, LabeledSegment, Waveform};
pub use label::{DatasetTag, EventClass, NUM_CLASSES};
pub use metrics::{ConfusionMatrix, CvSummary, EvalReport};
pub use model::{ModelCheckpoint, ModelConfig, Wav2Vec2};

/// Sample rate every model operation expects.
pub const MODEL_SAMPLE_RATE: u32 = 16_000;
