//! Files, pipeline commands and the `nucmem` CLI around [`nucmem_core`].
//!
//! Everything a run writes lives in one output directory:
//!
//! | file | written by |
//! |---|---|
//! | `base.jsonl` | `gen-synthetic` |
//! | `vocab.json`, `docs.jsonl`, `manifest.json`, `corpus.bin` + `corpus.idx`, `corpus.jsonl`, `build.json` | `build` |
//! | `model.json`, `perplexity.json` | `train` |
//! | `records.jsonl`, `bleu_records.jsonl`, `aggregate.csv`, `heatmap.json`, `sweep.json`, `traces.jsonl` | `sweep` |
//! | `probe/records.jsonl`, `probe/traces.jsonl` | `probe` |
//! | `rampsat.json`, `deterministic.csv`, `bleu_table.csv`, `context.csv` | `analyze` |
//!
//! Files are replaced atomically.

#![forbid(unsafe_code)]

pub mod config;
pub mod error;
pub mod io;
pub mod model_file;
pub mod pipeline;
pub mod reports;

pub use config::{parse_config, parse_config_str, Overrides, Provenance, RunConfig};
pub use error::{AppError, AppResult};
