//! Causal mediation analysis for conversational language.
//!
//! The crate turns transcripts into adjacent advocate/justice utterance pairs,
//! measures a binary group signal, a binary interruption outcome and a set of
//! interpretable language mediators, fits cross-fitted GLM nuisance models and
//! computes sample-average natural direct and indirect effects per mediator.
//! A structural causal model simulator with an exact enumeration oracle is
//! included so every estimator can be checked against ground truth.

pub mod corpus;
pub mod error;
pub mod glm;
pub mod measure;
pub mod mediation;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod scm;
pub mod text;

pub use error::{Error, Result};
