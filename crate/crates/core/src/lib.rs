//! Knowledge-guided, dual-learning data augmentation for event causality
//! identification.
//!
//! The pipeline mines candidate event pairs from lexical resources and
//! discourse connectives, filters them in a learned causal embedding space,
//! turns them into sentences with relation-conditioned mask-fill generators,
//! and trains the generators and a causality identifier against each other
//! before retraining the identifier on the augmented data.

pub mod corpus;
pub mod dualtrain;
pub mod error;
pub mod eval;
pub mod generation;
pub mod knowledge;
pub mod models;
pub mod pipeline;
pub mod synth;

pub use error::{Error, Result};
