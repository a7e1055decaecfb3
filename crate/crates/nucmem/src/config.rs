//! The run configuration: one JSON file, unknown keys rejected.
//!
//! A single top-level `seed` drives every random choice of a run:
//!
//! * synthetic corpus generation and the duplication plan use `seed` itself
//!   (their streams carry distinct labels),
//! * singleton probe sampling uses `seed`,
//! * decode replicate `r` (an entry of `sweep.seeds`) uses
//!   `mix(seed, "decode.<r>")`, and each probe then draws from
//!   `mix(that, probe_id)`.

use std::path::{Path, PathBuf};

use nucmem_core::corpus::{DuplicationPlan, LengthDistribution, SyntheticConfig};
use nucmem_core::lm::NGramParams;
use nucmem_core::rng;
use nucmem_core::sweep::{ContextMode, DuplicityBin, RampSatThresholds, SweepConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{AppError, AppResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSection {
    pub num_docs: usize,
    pub vocab_size: usize,
    pub zipf_exponent: f64,
    pub lengths: LengthDistribution,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        let d = SyntheticConfig::default();
        Self {
            num_docs: d.num_docs,
            vocab_size: d.vocab_size,
            zipf_exponent: d.zipf_exponent,
            lengths: d.lengths,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSection {
    /// Base corpus: a directory of text files or a JSONL file of
    /// `{"id", "text"}`. Unset means `<out>/base.jsonl`.
    pub input: Option<PathBuf>,
    pub synthetic: SyntheticSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlanSection {
    pub docs_per_level: usize,
    pub docs_per_bucket_per_level: usize,
    pub level_min: u32,
    pub level_max: u32,
    pub validation_fraction: f64,
}

impl Default for PlanSection {
    fn default() -> Self {
        let d = DuplicationPlan::default();
        Self {
            docs_per_level: d.docs_per_level,
            docs_per_bucket_per_level: d.docs_per_bucket_per_level,
            level_min: d.level_min,
            level_max: d.level_max,
            validation_fraction: d.validation_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    pub rampsat: RampSatThresholds,
    /// Inclusive duplicity ranges of the BLEU table rows.
    pub bleu_bins: Vec<[u32; 2]>,
    /// Prefix-length bucket edges of the context report. Multiplied by the
    /// scale when `sweep.context_mode` is bucketed.
    pub context_edges: Vec<usize>,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            rampsat: RampSatThresholds::default(),
            bleu_bins: vec![[1, 1], [2, 9], [10, 19], [20, 30]],
            context_edges: vec![100, 200, 300, 400, 500],
        }
    }
}

impl AnalysisSection {
    pub fn bins(&self) -> Vec<DuplicityBin> {
        self.bleu_bins
            .iter()
            .map(|&[lo, hi]| DuplicityBin::new(lo, hi))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoSection {
    /// Output directory; `--out` takes precedence.
    pub out_dir: Option<PathBuf>,
    /// Write the materialized corpus as JSONL.
    pub jsonl: bool,
    /// Write the materialized corpus as flat little-endian u32 ids.
    pub bin: bool,
    /// Keep per-step decode traces of the sweep.
    pub traces: bool,
}

impl Default for IoSection {
    fn default() -> Self {
        Self {
            out_dir: None,
            jsonl: true,
            bin: true,
            traces: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub corpus: CorpusSection,
    pub plan: PlanSection,
    pub model: NGramParams,
    pub sweep: SweepConfig,
    pub analysis: AnalysisSection,
    pub io: IoSection,
}

/// Command-line values that replace config fields.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub top_p: Vec<f64>,
    pub prefix_len: Option<usize>,
    pub order: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn synthetic(&self) -> SyntheticConfig {
        let s = &self.corpus.synthetic;
        SyntheticConfig {
            num_docs: s.num_docs,
            vocab_size: s.vocab_size,
            zipf_exponent: s.zipf_exponent,
            lengths: s.lengths,
            seed: self.seed,
        }
    }

    pub fn plan(&self) -> DuplicationPlan {
        let p = &self.plan;
        DuplicationPlan {
            docs_per_level: p.docs_per_level,
            docs_per_bucket_per_level: p.docs_per_bucket_per_level,
            level_min: p.level_min,
            level_max: p.level_max,
            validation_fraction: p.validation_fraction,
            seed: self.seed,
        }
    }

    /// Seed handed to the decoder for replicate `replicate`.
    pub fn decode_seed(&self, replicate: u64) -> u64 {
        rng::mix(self.seed, &format!("decode.{replicate}"))
    }

    pub fn context_edges(&self) -> Vec<usize> {
        match self.sweep.context_mode {
            ContextMode::Fixed => self.analysis.context_edges.clone(),
            ContextMode::Bucketed { scale } => self
                .analysis
                .context_edges
                .iter()
                .map(|&e| (e as f64 * scale).floor() as usize)
                .collect(),
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if !o.top_p.is_empty() {
            self.sweep.top_p_values = o.top_p.clone();
        }
        if let Some(n) = o.prefix_len {
            self.sweep.prefix_len = n;
        }
        if let Some(n) = o.order {
            self.model.order = n;
        }
        if let Some(dir) = &o.out_dir {
            self.io.out_dir = Some(dir.clone());
        }
    }

    pub fn validate(&self) -> AppResult<()> {
        self.synthetic().validate()?;
        self.plan().validate()?;
        self.model.validate()?;
        self.sweep.validate()?;
        let t = &self.analysis.rampsat;
        for (name, v) in [("tau_r", t.tau_r), ("tau_s", t.tau_s)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(AppError::Config(format!(
                    "analysis.rampsat.{name}: {v} is outside [0, 1]"
                )));
            }
        }
        for (name, v) in [("growth_factor", t.growth_factor), ("epsilon", t.epsilon)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(AppError::Config(format!(
                    "analysis.rampsat.{name}: must be finite and > 0"
                )));
            }
        }
        let mut prev_hi = 0;
        for (i, &[lo, hi]) in self.analysis.bleu_bins.iter().enumerate() {
            if lo > hi || (i > 0 && lo <= prev_hi) {
                return Err(AppError::Config(format!(
                    "analysis.bleu_bins[{i}]: bins must be ascending, non-overlapping ranges [lo, hi]"
                )));
            }
            prev_hi = hi;
        }
        let edges = &self.analysis.context_edges;
        if let Some(i) = edges.windows(2).position(|w| w[0] >= w[1]) {
            return Err(AppError::Config(format!(
                "analysis.context_edges[{}]: edges must be strictly ascending",
                i + 1
            )));
        }
        Ok(())
    }

    /// Output directory from `--out` or `io.out_dir`.
    pub fn out_dir(&self) -> AppResult<&Path> {
        self.io.out_dir.as_deref().ok_or_else(|| {
            AppError::Config("io.out_dir: no output directory (set it or pass --out)".into())
        })
    }

    /// SHA-256 of the canonical JSON form, output directory excluded, as hex.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.io.out_dir = None;
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Parses and validates a config. Errors name the field path.
pub fn parse_config_str(text: &str) -> AppResult<RunConfig> {
    let mut de = serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        AppError::Config(format!("{path}: {}", e.inner()))
    })?;
    de.end().map_err(|e| AppError::Config(format!(".: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> AppResult<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| AppError::read(path, "config file", e))?;
    parse_config_str(&text)
}

/// Provenance stamped into every report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub schema_version: u32,
    pub config_hash: String,
    pub seed: u64,
}

/// Version of every report and file format written by this crate.
pub const SCHEMA_VERSION: u32 = 1;

impl Provenance {
    pub fn of(cfg: &RunConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            config_hash: cfg.hash(),
            seed: cfg.seed,
        }
    }

    /// `# schema_version=1 config_hash=<hex> seed=<n>`, the first line of
    /// every CSV report.
    pub fn csv_comment(&self) -> String {
        format!(
            "# schema_version={} config_hash={} seed={}",
            self.schema_version, self.config_hash, self.seed
        )
    }
}
