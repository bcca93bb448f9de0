//! Joint intent detection and slot filling with intent-slot attention.
//!
//! The model encodes an utterance with a small transformer, predicts the
//! intent from the `[CLS]` vector, turns the intent distribution into a soft
//! label embedding that attends over the token vectors, and decodes slot tags
//! with a linear-chain CRF over the intent-specific token vectors.

#![allow(clippy::needless_range_loop)]

pub mod archive;
pub mod attention;
pub mod autodiff;
pub mod cli;
pub mod config;
pub mod crf;
pub mod data;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod intent_head;
pub mod model;
pub mod nn;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};
