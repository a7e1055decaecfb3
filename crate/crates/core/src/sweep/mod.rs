//! Memorization experiments: probes, decode-setting sweeps and their analysis.

mod aggregate;
mod detect;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use aggregate::{
    aggregate_bleu, aggregate_context_buckets, aggregate_heatmap, dedup_records,
    deterministic_fraction, deterministic_fraction_from_records, BleuVariant, Cell, ContextBucket,
    ContextBucketCell, DuplicityBin, HeatmapResult, SeedValue, SettingKey, StepFraction,
};
pub use detect::{
    detect_rampup, detect_saturation, ramp_sat_report, RampSatEntry, RampSatThresholds,
};

use crate::corpus::{CorpusManifest, Document, Split};
use crate::decode::{generate, validate_top_p, DecodeConfig, DecodeTrace, Strategy};
use crate::lm::LanguageModel;
use crate::memometrics::{
    soft_memorization_score, verbatim_memorized, MemorizationProbe, MemorizationRecord,
};
use crate::{rng, Error, Result};

/// Prefix length of a document in the context-length experiment, per
/// length bucket, before scaling.
pub const CONTEXT_BASE: [usize; 4] = [100, 200, 300, 400];

/// How the prefix length of a probe is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ContextMode {
    /// The sweep's `prefix_len` for every document.
    Fixed,
    /// `floor(CONTEXT_BASE[bucket] * scale)`, so longer documents get longer prefixes.
    Bucketed { scale: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub top_p_values: Vec<f64>,
    pub include_greedy_baseline: bool,
    pub prefix_len: usize,
    /// Upper bound of the prefix of soft-memorization probes; each document
    /// uses `min(bleu_prefix_len, len / 2)`.
    pub bleu_prefix_len: usize,
    pub duplicity_bin_width: u32,
    /// Decoding seeds; every probe and setting is run once per seed.
    pub seeds: Vec<u64>,
    /// Probe single-copy documents too. Unset means no for the verbatim
    /// sweep and yes for the soft sweep.
    pub include_singletons: Option<bool>,
    /// How many single-copy documents to sample when they are included;
    /// unset takes all of them.
    pub singleton_sample: Option<usize>,
    pub max_new_tokens: usize,
    pub temperature: f64,
    pub context_mode: ContextMode,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            top_p_values: alloc::vec![0.2, 0.4, 0.6, 0.8],
            include_greedy_baseline: true,
            prefix_len: 150,
            bleu_prefix_len: 250,
            duplicity_bin_width: 5,
            seeds: alloc::vec![0, 1, 2, 3, 4],
            include_singletons: None,
            singleton_sample: Some(280),
            max_new_tokens: 512,
            temperature: 1.0,
            context_mode: ContextMode::Fixed,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        for (i, &p) in self.top_p_values.iter().enumerate() {
            validate_top_p(p, &format!("sweep.top_p_values[{i}]"))?;
        }
        if self.top_p_values.is_empty() && !self.include_greedy_baseline {
            return Err(Error::config(
                "sweep.top_p_values",
                "no decode settings to run",
            ));
        }
        if self.prefix_len == 0 {
            return Err(Error::config("sweep.prefix_len", "must be at least 1"));
        }
        if self.bleu_prefix_len == 0 {
            return Err(Error::config("sweep.bleu_prefix_len", "must be at least 1"));
        }
        if self.duplicity_bin_width == 0 {
            return Err(Error::config(
                "sweep.duplicity_bin_width",
                "must be at least 1",
            ));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("sweep.seeds", "must not be empty"));
        }
        if self.max_new_tokens == 0 {
            return Err(Error::config("sweep.max_new_tokens", "must be at least 1"));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::config("sweep.temperature", "must be finite and > 0"));
        }
        if let ContextMode::Bucketed { scale } = self.context_mode {
            if !(scale.is_finite() && scale > 0.0) {
                return Err(Error::config(
                    "sweep.context_mode.scale",
                    "must be finite and > 0",
                ));
            }
        }
        Ok(())
    }

    /// Greedy first (when enabled), then each `top_p` in the given order.
    pub fn settings(&self) -> Vec<Strategy> {
        let mut out = Vec::new();
        if self.include_greedy_baseline {
            out.push(Strategy::Greedy);
        }
        out.extend(
            self.top_p_values
                .iter()
                .map(|&top_p| Strategy::Nucleus { top_p }),
        );
        out
    }

    pub fn probe_rule(&self, kind: ProbeKind, sample_seed: u64) -> ProbeRule {
        let prefix = match (kind, self.context_mode) {
            (ProbeKind::Soft, _) => PrefixRule::HalfCapped(self.bleu_prefix_len),
            (ProbeKind::Verbatim, ContextMode::Fixed) => PrefixRule::Fixed(self.prefix_len),
            (ProbeKind::Verbatim, ContextMode::Bucketed { scale }) => {
                PrefixRule::Bucketed { scale }
            }
        };
        ProbeRule {
            prefix,
            include_singletons: self.include_singletons.unwrap_or(kind == ProbeKind::Soft),
            singleton_sample: self.singleton_sample,
            target_cap: self.max_new_tokens,
            sample_seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeKind {
    /// Exact reproduction of the continuation after a fixed context.
    Verbatim,
    /// BLEU-4 overlap of the continuation after a long context.
    Soft,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PrefixRule {
    Fixed(usize),
    /// `min(max, content_len / 2)`.
    HalfCapped(usize),
    Bucketed {
        scale: f64,
    },
}

impl PrefixRule {
    pub fn prefix_len(&self, doc: &Document) -> usize {
        match *self {
            PrefixRule::Fixed(n) => n,
            PrefixRule::HalfCapped(max) => max.min(doc.content_len() / 2),
            PrefixRule::Bucketed { scale } => {
                libm::floor(CONTEXT_BASE[doc.bucket().index()] as f64 * scale) as usize
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRule {
    pub prefix: PrefixRule,
    pub include_singletons: bool,
    pub singleton_sample: Option<usize>,
    pub target_cap: usize,
    pub sample_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSet {
    /// Ordered by document id.
    pub probes: Vec<MemorizationProbe>,
    /// Selected documents too short to leave a continuation after the prefix.
    pub skipped_short: usize,
}

/// One probe per distinct train document with at least two copies (plus
/// sampled single-copy documents when the rule asks for them). Validation
/// documents are never probed.
pub fn make_probes(
    manifest: &CorpusManifest,
    docs: &BTreeMap<String, Document>,
    rule: &ProbeRule,
) -> Result<ProbeSet> {
    let mut selected: Vec<(&str, u32)> = manifest
        .train_entries()
        .filter(|e| e.duplicity >= 2)
        .map(|e| (e.id.as_str(), e.duplicity))
        .collect();
    if rule.include_singletons {
        let mut singles: Vec<&str> = manifest
            .entries
            .iter()
            .filter(|e| e.split == Split::Train && e.duplicity == 1)
            .map(|e| e.id.as_str())
            .collect();
        if let Some(n) = rule.singleton_sample {
            if n < singles.len() {
                let mut r = rng::stream(rule.sample_seed, "probes.singletons");
                let (chosen, _) = singles.partial_shuffle(&mut r, n);
                singles = chosen.to_vec();
            }
        }
        selected.extend(singles.into_iter().map(|id| (id, 1)));
    }
    selected.sort();

    let mut probes = Vec::with_capacity(selected.len());
    let mut skipped_short = 0;
    for (id, duplicity) in selected {
        let doc = docs.get(id).ok_or_else(|| {
            Error::Usage(format!(
                "document {id:?} is in the manifest but not in the corpus"
            ))
        })?;
        let prefix_len = rule.prefix.prefix_len(doc);
        match MemorizationProbe::from_document(
            id,
            duplicity,
            &doc.tokens,
            prefix_len,
            rule.target_cap,
        ) {
            Some(p) => probes.push(p),
            None => skipped_short += 1,
        }
    }
    if probes.is_empty() {
        return Err(Error::config(
            "sweep.prefix_len",
            format!("no selected document is longer than its prefix ({skipped_short} skipped)"),
        ));
    }
    Ok(ProbeSet {
        probes,
        skipped_short,
    })
}

/// One unit of sweep work.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepJob {
    pub probe: usize,
    pub setting: Strategy,
    pub seed: u64,
}

/// All `(probe, setting, seed)` combinations in canonical order: probes
/// outermost, seeds innermost.
pub fn sweep_jobs(probe_count: usize, config: &SweepConfig) -> Vec<SweepJob> {
    let settings = config.settings();
    let mut jobs = Vec::with_capacity(probe_count * settings.len() * config.seeds.len());
    for probe in 0..probe_count {
        for &setting in &settings {
            for &seed in &config.seeds {
                jobs.push(SweepJob {
                    probe,
                    setting,
                    seed,
                });
            }
        }
    }
    jobs
}

/// Checks that every probe token exists in the model vocabulary.
pub fn check_vocabulary<M: LanguageModel + ?Sized>(
    model: &M,
    probes: &[MemorizationProbe],
) -> Result<()> {
    let v = model.vocab_size();
    for p in probes {
        if let Some(&bad) = p.prefix.iter().chain(&p.target).find(|&&t| t as usize >= v) {
            return Err(Error::VocabularyMismatch {
                token: bad,
                vocab_size: v,
            });
        }
    }
    Ok(())
}

/// Decodes one probe under one setting and seed and scores the output.
pub fn run_probe<M: LanguageModel + ?Sized>(
    model: &M,
    probe: &MemorizationProbe,
    setting: Strategy,
    seed: u64,
    config: &SweepConfig,
) -> Result<(MemorizationRecord, DecodeTrace)> {
    let decode = DecodeConfig {
        strategy: setting,
        temperature: config.temperature,
        max_new_tokens: config.max_new_tokens,
        seed,
    };
    let trace = generate(model, &probe.prefix, &decode, &probe.probe_id)?;
    let record = MemorizationRecord {
        probe_id: probe.probe_id.clone(),
        duplicity: probe.duplicity,
        setting,
        seed,
        prefix_len: probe.prefix.len(),
        verbatim: verbatim_memorized(&trace.generated, &probe.target),
        bleu4: soft_memorization_score(&trace.generated, probe),
        gen_len: trace.generated.len(),
        stop_reason: trace.stop_reason,
        det_steps: trace.deterministic_steps(),
        generated: trace.generated.clone(),
    };
    Ok((record, trace))
}

/// Runs every job sequentially and returns the records in job order.
pub fn run_sweep<M: LanguageModel + ?Sized>(
    model: &M,
    probes: &[MemorizationProbe],
    config: &SweepConfig,
) -> Result<Vec<MemorizationRecord>> {
    config.validate()?;
    check_vocabulary(model, probes)?;
    sweep_jobs(probes.len(), config)
        .into_iter()
        .map(|job| {
            run_probe(model, &probes[job.probe], job.setting, job.seed, config).map(|(r, _)| r)
        })
        .collect()
}

/// Probe ids grouped by duplicity, for quick lookups in reports.
pub fn probes_by_duplicity(probes: &[MemorizationProbe]) -> BTreeMap<u32, BTreeSet<&str>> {
    let mut out: BTreeMap<u32, BTreeSet<&str>> = BTreeMap::new();
    for p in probes {
        out.entry(p.duplicity)
            .or_default()
            .insert(p.probe_id.as_str());
    }
    out
}
