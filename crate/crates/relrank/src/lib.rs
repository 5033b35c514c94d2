//! `relrank`: audio-text relevance learning with graded and binary relevances.
//!
//! The crate trains a dual-encoder (two affine projection heads over
//! precomputed feature vectors) with a listwise ranking objective over
//! continuous relevance ratings, a symmetric contrastive objective over
//! binary pairings, or a convex combination of the two. It also ships the
//! evaluation side: retrieval metrics (mAP, R@k), rank-correlation
//! statistics with p-values, and an analysis table correlating audio/text
//! features against rating characteristics.
//!
//! Start from the runnable programs in `examples/`: each one exercises a
//! major capability end to end on synthetic data.

pub mod analysis;
pub mod cli;
pub mod dataset;
mod error;
pub mod losses;
pub mod metrics;
pub mod model;

pub use error::{Error, Result};
