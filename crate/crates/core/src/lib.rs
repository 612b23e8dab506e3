//! Interpretable mimic learning on static + temporal tabular data.
//!
//! Deep teachers (a feedforward network, a stacked denoising autoencoder and an
//! LSTM) are trained on labelled records and then distilled into gradient
//! boosted regression trees through their soft predictions. The boosted
//! students expose feature importances and per-stage decision trees, and the
//! [`eval`] module runs the repeated k-fold benchmark that compares every
//! baseline, teacher and mimic model by AUC.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the command
//! line front end and parallel benchmark execution live in the `mimic` crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod data;
pub mod distill;
mod error;
pub mod eval;
pub mod linalg;
pub mod linear;
pub mod neural;
pub mod rng;
pub mod trees;

pub use error::{Error, Result};
