//! Measurement core for training-data memorization under nucleus sampling.
//!
//! The crate is `no_std` (it needs `alloc`) and carries no IO. It covers the
//! whole measurement path:
//!
//! * [`corpus`]: tokenization, vocabulary, synthetic base corpora, length
//!   buckets, the duplication planner and the materialized training stream.
//! * [`lm`]: the [`LanguageModel`](lm::LanguageModel) interface and an
//!   interpolated, additively smoothed n-gram model trained by counting.
//! * [`decode`]: greedy decoding and nucleus sampling with per-step
//!   instrumentation.
//! * [`memometrics`]: verbatim memorization and BLEU-4 soft memorization.
//! * [`sweep`]: probe construction, sweeps over decode settings, heatmap
//!   aggregation, ramp-up/saturation detection and deterministic-step
//!   analysis.
//!
//! File formats, the CLI and parallel execution live in the `nucmem` crate.

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod corpus;
pub mod decode;
mod error;
pub mod lm;
pub mod memometrics;
pub mod rng;
pub mod sweep;

pub use error::{Error, Result};

/// Dense integer id of a vocabulary entry.
pub type TokenId = u32;

/// Reserved id of the unknown-token marker.
pub const UNK_ID: TokenId = 0;
/// Reserved id of the end-of-sequence marker.
pub const EOS_ID: TokenId = 1;
