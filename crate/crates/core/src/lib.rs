//! Temporal action detection from sparse, automatically sampled point labels.
//!
//! Frames are sampled without looking at their content ([`sampler`]), a human
//! (or the ground-truth oracle) tags each sampled frame with the set of actions
//! visible in it, and a snippet scoring model ([`model`]) is trained on those
//! labels with three objectives ([`losses`]) plus anchored pseudo-labels
//! ([`pseudo`]). Scores are turned into scored intervals by [`detector`] and
//! evaluated with [`evaluator`]. [`cost`] carries measured annotation times.
//!
//! Pipeline stages:
//!
//! 1. [`corpus`]: manifests, label files, binary feature files, resampling.
//! 2. [`sampler`]: regular, random and clustering-based frame sampling.
//! 3. [`model`] + [`optim`]: forward/backward of the scoring model and Adam.
//! 4. [`losses`], [`pseudo`], [`trainer`]: the training objective and loop.
//! 5. [`detector`], [`evaluator`]: instance generation and mAP.

// `!(x > 0.0)` style checks are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod cost;
pub mod detector;
pub mod error;
pub mod evaluator;
pub mod losses;
pub mod model;
pub mod optim;
pub mod pseudo;
pub mod sampler;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};

/// Lower/upper clamp applied to probabilities before taking logs or logits.
pub const PROB_EPS: f64 = 1e-7;

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub(crate) fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}
