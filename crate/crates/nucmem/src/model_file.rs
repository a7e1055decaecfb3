//! Versioned JSON container for trained n-gram models.
//!
//! ```text
//! {
//!   "schema_version": 1, "config_hash": "...", "seed": 0,
//!   "order": 4, "alpha": 0.01, "lambda": 0.1,
//!   "vocab": ["<unk>", "<eos>", ...],
//!   "tables": [ [[w, count], ...], [[c1, w, count], ...], ... ]
//! }
//! ```
//!
//! `tables[k]` holds every observed `(k+1)`-gram as its token ids followed
//! by its count, rows sorted by ids.

use std::fmt;
use std::fs;
use std::path::Path;

use nucmem_core::corpus::Vocabulary;
use nucmem_core::lm::{CountTable, LanguageModel, NGramModel, NGramParams};
use serde::de::{self, SeqAccess, Visitor};
use serde::ser::SerializeSeq;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::config::Provenance;
use crate::error::{AppError, AppResult};
use crate::io::write_atomic;

pub const MODEL_SCHEMA_VERSION: u32 = 1;

struct Rows<'a>(&'a CountTable);

impl Serialize for Rows<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        struct Row<'a>(&'a [u32], u64);
        impl Serialize for Row<'_> {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                let mut seq = s.serialize_seq(Some(self.0.len() + 1))?;
                for id in self.0 {
                    seq.serialize_element(id)?;
                }
                seq.serialize_element(&self.1)?;
                seq.end()
            }
        }
        let mut seq = s.serialize_seq(Some(self.0.len()))?;
        for (gram, count) in self.0.iter() {
            seq.serialize_element(&Row(gram, count))?;
        }
        seq.end()
    }
}

#[derive(Serialize)]
struct ModelOut<'a> {
    schema_version: u32,
    config_hash: &'a str,
    seed: u64,
    order: usize,
    alpha: f64,
    lambda: f64,
    vocab: &'a [String],
    tables: Vec<Rows<'a>>,
}

#[derive(Default)]
struct TableIn {
    width: Option<usize>,
    grams: Vec<u32>,
    counts: Vec<u64>,
}

impl<'de> Deserialize<'de> for TableIn {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = TableIn;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a list of [token ids..., count] rows")
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<TableIn, A::Error> {
                let mut t = TableIn::default();
                while let Some(row) = seq.next_element::<Vec<u64>>()? {
                    let w = row.len().saturating_sub(1);
                    if w == 0 || t.width.is_some_and(|tw| tw != w) {
                        return Err(de::Error::custom(format!(
                            "row {} has the wrong length",
                            t.counts.len()
                        )));
                    }
                    t.width = Some(w);
                    for &id in &row[..w] {
                        t.grams.push(
                            u32::try_from(id)
                                .map_err(|_| de::Error::custom("token id exceeds u32"))?,
                        );
                    }
                    t.counts.push(row[w]);
                }
                Ok(t)
            }
        }
        d.deserialize_seq(V)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelIn {
    schema_version: u32,
    config_hash: String,
    seed: u64,
    order: usize,
    alpha: f64,
    lambda: f64,
    vocab: Vec<String>,
    tables: Vec<TableIn>,
}

pub fn save_model(
    path: &Path,
    model: &NGramModel,
    vocab: &Vocabulary,
    provenance: &Provenance,
) -> AppResult<()> {
    if vocab.len() != model.vocab_size() {
        return Err(AppError::Runtime(format!(
            "model vocabulary has {} entries but the vocabulary file has {}",
            model.vocab_size(),
            vocab.len()
        )));
    }
    let p = model.params();
    let out = ModelOut {
        schema_version: MODEL_SCHEMA_VERSION,
        config_hash: &provenance.config_hash,
        seed: provenance.seed,
        order: p.order,
        alpha: p.alpha,
        lambda: p.lambda,
        vocab: vocab.tokens(),
        tables: model.tables().iter().map(Rows).collect(),
    };
    write_atomic(path, |w| {
        serde_json::to_writer(&mut *w, &out)?;
        w.write_all(b"\n")
    })
}

/// A model read back from disk with its vocabulary and provenance.
pub struct LoadedModel {
    pub model: NGramModel,
    pub vocab: Vocabulary,
    pub provenance: Provenance,
}

pub fn load_model(path: &Path) -> AppResult<LoadedModel> {
    let bytes = fs::read(path).map_err(|e| AppError::read(path, "model file", e))?;
    let bad = |e: &dyn fmt::Display| {
        AppError::Runtime(format!(
            "model file {} is truncated or malformed: {e}",
            path.display()
        ))
    };

    #[derive(Deserialize)]
    struct Header {
        schema_version: u32,
    }
    let header: Header = serde_json::from_slice(&bytes).map_err(|e| bad(&e))?;
    if header.schema_version != MODEL_SCHEMA_VERSION {
        return Err(AppError::Runtime(format!(
            "model file {} has schema_version {}; this build reads version {MODEL_SCHEMA_VERSION}",
            path.display(),
            header.schema_version
        )));
    }
    let m: ModelIn = serde_json::from_slice(&bytes).map_err(|e| bad(&e))?;
    let vocab = Vocabulary::from_tokens(m.vocab)?;
    let params = NGramParams {
        order: m.order,
        alpha: m.alpha,
        lambda: m.lambda,
    };
    let mut tables = Vec::with_capacity(m.tables.len());
    for (k, t) in m.tables.into_iter().enumerate() {
        if t.width.is_some_and(|w| w != k + 1) {
            return Err(bad(&format!("table {k} holds grams of the wrong length")));
        }
        tables.push(CountTable::from_parts(k, t.grams, t.counts).map_err(|e| bad(&e))?);
    }
    let model = NGramModel::from_tables(params, vocab.len(), tables).map_err(|e| bad(&e))?;
    Ok(LoadedModel {
        model,
        vocab,
        provenance: Provenance {
            schema_version: m.schema_version,
            config_hash: m.config_hash,
            seed: m.seed,
        },
    })
}
