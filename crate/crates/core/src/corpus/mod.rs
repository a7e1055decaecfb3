//! Base corpora and training corpora with an exactly known duplicate distribution.

mod bucket;
mod materialize;
mod plan;
mod synthetic;
mod tokenize;
mod vocab;

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use bucket::{assign_buckets, LengthBucket};
pub use materialize::{materialize, CopyRef, MaterializedCorpus};
pub use plan::{
    plan_duplication, CorpusManifest, DuplicationPlan, ManifestEntry, Split,
    MANIFEST_SCHEMA_VERSION,
};
pub use synthetic::{
    generate_synthetic_corpus, BucketLengths, LengthDistribution, SyntheticConfig,
};
pub use tokenize::{encode, surface_tokens, tokenize, EOS_TOKEN, UNK_TOKEN};
pub use vocab::{build_vocab, Vocabulary};

use crate::{TokenId, EOS_ID};

/// A base-corpus document before tokenization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDocument {
    pub id: String,
    pub text: String,
}

impl RawDocument {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
        }
    }

    /// Number of surface tokens, not counting the end-of-sequence marker.
    pub fn content_len(&self) -> usize {
        surface_tokens(&self.text).len()
    }
}

/// A tokenized document. `tokens` always ends with exactly one [`EOS_ID`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub tokens: Vec<TokenId>,
}

impl Document {
    pub fn encode(raw: &RawDocument, vocab: &Vocabulary) -> Self {
        Self {
            id: raw.id.clone(),
            tokens: encode(&raw.text, vocab),
        }
    }

    /// Token count including the trailing end-of-sequence marker.
    pub fn token_count(&self) -> usize {
        self.tokens.len()
    }

    /// Token count without the trailing end-of-sequence marker.
    pub fn content_len(&self) -> usize {
        self.tokens.len().saturating_sub(1)
    }

    pub fn bucket(&self) -> LengthBucket {
        LengthBucket::of(self.content_len())
    }

    /// Checks the single-trailing-marker invariant.
    pub fn is_well_formed(&self) -> bool {
        match self.tokens.split_last() {
            Some((&last, body)) => last == EOS_ID && !body.contains(&EOS_ID),
            None => false,
        }
    }
}
