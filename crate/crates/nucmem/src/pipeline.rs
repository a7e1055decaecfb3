//! The pipeline commands. Each reads its inputs from and writes its outputs
//! to one output directory.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use nucmem_core::corpus::{
    assign_buckets, build_vocab, generate_synthetic_corpus, materialize, plan_duplication,
    CorpusManifest, Document, LengthBucket, RawDocument, Split,
};
use nucmem_core::decode::{DecodeConfig, Strategy};
use nucmem_core::lm::{corpus_perplexity, perplexity, NGramModel};
use nucmem_core::memometrics::{MemorizationProbe, MemorizationRecord};
use nucmem_core::sweep::{
    aggregate_bleu, aggregate_context_buckets, aggregate_heatmap, check_vocabulary,
    deterministic_fraction_from_records, make_probes, ramp_sat_report, run_probe, sweep_jobs,
    BleuVariant, ProbeKind, SettingKey,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Provenance, RunConfig};
use crate::error::{AppError, AppResult};
use crate::io::{self, CORPUS_BIN, CORPUS_IDX, CORPUS_JSONL};
use crate::model_file::{load_model, save_model};
use crate::reports::{self, RecordLine, TraceLine};

pub const BASE: &str = "base.jsonl";
pub const VOCAB: &str = "vocab.json";
pub const DOCS: &str = "docs.jsonl";
pub const MANIFEST: &str = "manifest.json";
pub const BUILD_REPORT: &str = "build.json";
pub const MODEL: &str = "model.json";
pub const PERPLEXITY: &str = "perplexity.json";
pub const RECORDS: &str = "records.jsonl";
pub const BLEU_RECORDS: &str = "bleu_records.jsonl";
pub const TRACES: &str = "traces.jsonl";
pub const AGGREGATE: &str = "aggregate.csv";
pub const HEATMAP: &str = "heatmap.json";
pub const SWEEP_REPORT: &str = "sweep.json";
pub const RAMPSAT: &str = "rampsat.json";
pub const DETERMINISTIC: &str = "deterministic.csv";
pub const BLEU_TABLE: &str = "bleu_table.csv";
pub const CONTEXT: &str = "context.csv";
pub const PROBE_DIR: &str = "probe";

/// Writes a synthetic base corpus to `<out>/base.jsonl`.
pub fn gen_synthetic(cfg: &RunConfig, out: &Path) -> AppResult<PathBuf> {
    let docs = generate_synthetic_corpus(&cfg.synthetic())?;
    let path = out.join(BASE);
    io::write_base_corpus(&path, &docs)?;
    Ok(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub base_docs: usize,
    /// Base documents dropped because an earlier id had the same text.
    pub dropped_duplicates: usize,
    pub vocab_size: usize,
    pub docs_per_bucket: BTreeMap<LengthBucket, usize>,
    pub train_docs: usize,
    pub validation_docs: usize,
    pub duplicated_docs: usize,
    /// Copies of duplicated documents, every copy counted.
    pub duplicated_copies: u64,
    /// The same tally with one extra copy per duplicated document.
    pub duplicated_copies_plus_originals: u64,
    pub stream_copies: u64,
    pub stream_tokens: u64,
    pub materialized: Vec<String>,
}

fn base_input(cfg: &RunConfig, out: &Path) -> PathBuf {
    cfg.corpus.input.clone().unwrap_or_else(|| out.join(BASE))
}

/// Tokenizes the base corpus, plans the duplication and materializes the
/// training stream.
pub fn build(cfg: &RunConfig, out: &Path) -> AppResult<BuildReport> {
    if !cfg.io.jsonl && !cfg.io.bin {
        return Err(AppError::Config(
            "io.bin: at least one of io.jsonl and io.bin must be set".into(),
        ));
    }
    let input = base_input(cfg, out);
    let raw = io::read_base_corpus(&input)?;
    let base_docs = raw.len();
    let mut seen = BTreeSet::new();
    let raw: Vec<RawDocument> = raw
        .into_iter()
        .filter(|d| seen.insert(d.text.clone()))
        .collect();
    let dropped_duplicates = base_docs - raw.len();

    let vocab = build_vocab(raw.iter().map(|d| d.text.as_str()));
    let docs: Vec<Document> = raw.iter().map(|r| Document::encode(r, &vocab)).collect();
    let buckets = assign_buckets(&docs);
    let mut manifest = plan_duplication(&buckets, &cfg.plan())?;
    manifest.vocabulary = Some(VOCAB.into());
    if cfg.io.bin {
        manifest.materialized.push(CORPUS_BIN.into());
    }
    if cfg.io.jsonl {
        manifest.materialized.push(CORPUS_JSONL.into());
    }
    let docs: BTreeMap<String, Document> = docs.into_iter().map(|d| (d.id.clone(), d)).collect();
    let stream = materialize(&manifest);

    let provenance = Provenance::of(cfg);
    io::write_vocab(&out.join(VOCAB), &vocab, &provenance)?;
    io::write_docs(&out.join(DOCS), &docs)?;
    if cfg.io.bin {
        io::write_corpus_bin(&out.join(CORPUS_BIN), &out.join(CORPUS_IDX), &stream, &docs)?;
    }
    if cfg.io.jsonl {
        io::write_corpus_jsonl(&out.join(CORPUS_JSONL), &stream, &docs)?;
    }
    io::write_manifest(&out.join(MANIFEST), &manifest)?;

    let mut docs_per_bucket = BTreeMap::new();
    for b in buckets.values() {
        *docs_per_bucket.entry(*b).or_insert(0) += 1;
    }
    let report = BuildReport {
        provenance,
        base_docs,
        dropped_duplicates,
        vocab_size: vocab.len(),
        docs_per_bucket,
        train_docs: manifest.train_entries().count(),
        validation_docs: manifest
            .entries
            .iter()
            .filter(|e| e.split == Split::Validation)
            .count(),
        duplicated_docs: manifest.duplicated_docs(),
        duplicated_copies: manifest.duplicated_copies(),
        duplicated_copies_plus_originals: manifest.duplicated_copies_plus_originals(),
        stream_copies: manifest.total_copies(),
        stream_tokens: stream.token_len(&docs)?,
        materialized: manifest.materialized.clone(),
    };
    io::write_json(&out.join(BUILD_REPORT), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuplicityPerplexity {
    pub duplicity: u32,
    pub docs: usize,
    /// Mean of per-document perplexities.
    pub mean_perplexity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerplexityReport {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub vocab_size: usize,
    /// What a uniform model scores: the vocabulary size.
    pub uniform: f64,
    /// Token-weighted, over distinct train documents.
    pub train: Option<f64>,
    pub validation: Option<f64>,
    pub by_duplicity: Vec<DuplicityPerplexity>,
}

struct Built {
    manifest: CorpusManifest,
    docs: BTreeMap<String, Document>,
}

fn load_built(out: &Path) -> AppResult<Built> {
    let manifest = io::read_manifest(&out.join(MANIFEST))?;
    let docs = io::read_docs(&out.join(DOCS))?;
    if let Some(e) = manifest.entries.iter().find(|e| !docs.contains_key(&e.id)) {
        return Err(AppError::Runtime(format!(
            "{} lists {:?}, which {} lacks",
            MANIFEST, e.id, DOCS
        )));
    }
    Ok(Built { manifest, docs })
}

/// Trains the n-gram model on the materialized stream and reports
/// perplexities.
pub fn train(cfg: &RunConfig, out: &Path) -> AppResult<PerplexityReport> {
    let Built { manifest, docs } = load_built(out)?;
    let vocab = io::read_vocab(&out.join(VOCAB))?;
    let stream = io::read_training_stream(out, &manifest)?;
    let model = NGramModel::train(stream.iter().map(Vec::as_slice), vocab.len(), cfg.model)?;
    drop(stream);
    let provenance = Provenance::of(cfg);
    save_model(&out.join(MODEL), &model, &vocab, &provenance)?;

    let tokens = |split: Split| {
        manifest
            .entries
            .iter()
            .filter(move |e| e.split == split)
            .map(|e| docs[&e.id].tokens.as_slice())
    };
    let mut by_dup: BTreeMap<u32, (usize, f64)> = BTreeMap::new();
    for e in manifest.train_entries() {
        if let Some(ppl) = perplexity(&model, &docs[&e.id].tokens) {
            let s = by_dup.entry(e.duplicity).or_insert((0, 0.0));
            s.0 += 1;
            s.1 += ppl;
        }
    }
    let report = PerplexityReport {
        provenance,
        vocab_size: vocab.len(),
        uniform: vocab.len() as f64,
        train: corpus_perplexity(&model, tokens(Split::Train)),
        validation: corpus_perplexity(&model, tokens(Split::Validation)),
        by_duplicity: by_dup
            .into_iter()
            .map(|(duplicity, (docs, sum))| DuplicityPerplexity {
                duplicity,
                docs,
                mean_perplexity: sum / docs as f64,
            })
            .collect(),
    };
    io::write_json(&out.join(PERPLEXITY), &report)?;
    Ok(report)
}

fn pool(jobs: usize) -> AppResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| AppError::runtime("starting worker threads", e))
}

/// Runs every `(probe, setting, replicate)` job on `jobs` threads. Results
/// come back in job order whatever the thread count.
fn run_jobs(
    cfg: &RunConfig,
    model: &NGramModel,
    probes: &[MemorizationProbe],
    jobs: usize,
    keep_traces: bool,
) -> AppResult<(Vec<MemorizationRecord>, Vec<TraceLine>)> {
    check_vocabulary(model, probes)?;
    let work = sweep_jobs(probes.len(), &cfg.sweep);
    let results: Vec<AppResult<(MemorizationRecord, Option<TraceLine>)>> =
        pool(jobs)?.install(|| {
            work.par_iter()
                .map(|job| {
                    let probe = &probes[job.probe];
                    let seed = cfg.decode_seed(job.seed);
                    let (mut record, trace) =
                        run_probe(model, probe, job.setting, seed, &cfg.sweep)?;
                    record.seed = job.seed;
                    let trace = keep_traces.then(|| {
                        let config = DecodeConfig {
                            strategy: job.setting,
                            temperature: cfg.sweep.temperature,
                            max_new_tokens: cfg.sweep.max_new_tokens,
                            seed,
                        };
                        TraceLine::new(&probe.probe_id, job.seed, config, trace)
                    });
                    Ok((record, trace))
                })
                .collect()
        });
    let mut records = Vec::with_capacity(results.len());
    let mut traces = Vec::new();
    for r in results {
        let (record, trace) = r?;
        records.push(record);
        traces.extend(trace);
    }
    Ok((records, traces))
}

fn load_model_for(out: &Path) -> AppResult<NGramModel> {
    let loaded = load_model(&out.join(MODEL))?;
    let vocab = io::read_vocab(&out.join(VOCAB))?;
    if loaded.vocab != vocab {
        return Err(AppError::Runtime(format!(
            "{MODEL} was trained on a different vocabulary than {VOCAB}"
        )));
    }
    Ok(loaded.model)
}

fn write_records(path: &Path, p: &Provenance, records: Vec<MemorizationRecord>) -> AppResult<()> {
    io::write_jsonl(path, records.into_iter().map(|r| RecordLine::new(r, p)))
}

pub fn read_records(path: &Path) -> AppResult<Vec<MemorizationRecord>> {
    Ok(io::read_jsonl::<RecordLine>(path, "records")?
        .into_iter()
        .map(RecordLine::into_record)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub settings: Vec<String>,
    pub replicates: Vec<u64>,
    pub decode_seeds: Vec<u64>,
    pub probes: usize,
    /// Selected documents too short for the prefix.
    pub skipped_short: usize,
    pub records: usize,
    pub soft_probes: usize,
    pub soft_skipped_short: usize,
    /// Prefix rule of the BLEU probes.
    pub soft_prefix_rule: String,
    pub soft_records: usize,
}

/// Runs the verbatim and soft memorization sweeps and writes the records,
/// `aggregate.csv` and `heatmap.json`.
pub fn sweep(cfg: &RunConfig, out: &Path, jobs: usize) -> AppResult<SweepReport> {
    let model = load_model_for(out)?;
    let Built { manifest, docs } = load_built(out)?;
    let provenance = Provenance::of(cfg);

    let verbatim = make_probes(
        &manifest,
        &docs,
        &cfg.sweep.probe_rule(ProbeKind::Verbatim, cfg.seed),
    )?;
    let (records, traces) = run_jobs(cfg, &model, &verbatim.probes, jobs, cfg.io.traces)?;
    let soft = make_probes(
        &manifest,
        &docs,
        &cfg.sweep.probe_rule(ProbeKind::Soft, cfg.seed),
    )?;
    let (soft_records, _) = run_jobs(cfg, &model, &soft.probes, jobs, false)?;

    let heatmap = aggregate_heatmap(&records, cfg.sweep.duplicity_bin_width);
    reports::write_aggregate_csv(&out.join(AGGREGATE), &provenance, &heatmap)?;
    reports::write_heatmap_json(
        &out.join(HEATMAP),
        &provenance,
        &heatmap,
        cfg.sweep.duplicity_bin_width,
    )?;

    let report = SweepReport {
        provenance: provenance.clone(),
        settings: cfg.sweep.settings().iter().map(Strategy::label).collect(),
        replicates: cfg.sweep.seeds.clone(),
        decode_seeds: cfg
            .sweep
            .seeds
            .iter()
            .map(|&r| cfg.decode_seed(r))
            .collect(),
        probes: verbatim.probes.len(),
        skipped_short: verbatim.skipped_short,
        records: records.len(),
        soft_probes: soft.probes.len(),
        soft_skipped_short: soft.skipped_short,
        soft_prefix_rule: format!("min({}, floor(content_len / 2))", cfg.sweep.bleu_prefix_len),
        soft_records: soft_records.len(),
    };
    write_records(&out.join(RECORDS), &provenance, records)?;
    write_records(&out.join(BLEU_RECORDS), &provenance, soft_records)?;
    if cfg.io.traces {
        io::write_jsonl(&out.join(TRACES), traces)?;
    }
    io::write_json(&out.join(SWEEP_REPORT), &report)?;
    Ok(report)
}

/// Decodes selected verbatim probes (all of them when `probe_ids` is
/// empty) under every configured setting and replicate, and writes records
/// and full traces to `<out>/probe/`. Returns the number of records.
pub fn probe(cfg: &RunConfig, out: &Path, probe_ids: &[String], jobs: usize) -> AppResult<usize> {
    let model = load_model_for(out)?;
    let Built { manifest, docs } = load_built(out)?;
    let all = make_probes(
        &manifest,
        &docs,
        &cfg.sweep.probe_rule(ProbeKind::Verbatim, cfg.seed),
    )?
    .probes;
    let probes: Vec<MemorizationProbe> = if probe_ids.is_empty() {
        all
    } else {
        let by_id: BTreeMap<&str, &MemorizationProbe> =
            all.iter().map(|p| (p.probe_id.as_str(), p)).collect();
        probe_ids
            .iter()
            .map(|id| {
                by_id.get(id.as_str()).map(|p| (*p).clone()).ok_or_else(|| {
                    AppError::Config(format!(
                        "--probe-id: {id:?} is not a verbatim probe of this corpus"
                    ))
                })
            })
            .collect::<AppResult<_>>()?
    };
    let provenance = Provenance::of(cfg);
    let (records, traces) = run_jobs(cfg, &model, &probes, jobs, true)?;
    let n = records.len();
    let dir = out.join(PROBE_DIR);
    write_records(&dir.join(RECORDS), &provenance, records)?;
    io::write_jsonl(&dir.join(TRACES), traces)?;
    Ok(n)
}

/// Ramp-up/saturation, deterministic-step, BLEU and context-length reports
/// from the sweep records. The BLEU table uses `bleu_records.jsonl` when it
/// exists and `records.jsonl` otherwise.
pub fn analyze(cfg: &RunConfig, out: &Path) -> AppResult<()> {
    let provenance = Provenance::of(cfg);
    let records = read_records(&out.join(RECORDS))?;
    if records.is_empty() {
        return Err(AppError::Runtime(format!("{RECORDS} holds no records")));
    }
    let bleu_path = out.join(BLEU_RECORDS);
    let soft = if bleu_path.exists() {
        read_records(&bleu_path)?
    } else {
        records.clone()
    };

    let per_duplicity = aggregate_heatmap(&records, 1);
    let t = cfg.analysis.rampsat;
    reports::write_rampsat_json(
        &out.join(RAMPSAT),
        &provenance,
        ramp_sat_report(&per_duplicity, &t),
        &t,
    )?;

    let det = deterministic_fraction_from_records(&records, |r| {
        Some((SettingKey::from(r.setting), r.duplicity))
    });
    let setting_of: BTreeMap<SettingKey, Strategy> = records
        .iter()
        .map(|r| (r.setting.into(), r.setting))
        .collect();
    let det: Vec<((Strategy, u32), _)> = det
        .into_iter()
        .map(|((k, d), f)| ((setting_of[&k], d), f))
        .collect();
    reports::write_deterministic_csv(&out.join(DETERMINISTIC), &provenance, &det)?;

    let bins = cfg.analysis.bins();
    let tables =
        [BleuVariant::NonVerbatim, BleuVariant::All].map(|v| (v, aggregate_bleu(&soft, &bins, v)));
    reports::write_bleu_csv(&out.join(BLEU_TABLE), &provenance, &tables)?;

    let context = aggregate_context_buckets(&records, &cfg.context_edges());
    reports::write_context_csv(&out.join(CONTEXT), &provenance, &context)?;
    Ok(())
}

/// Every stage in order; the synthetic corpus is generated only when no
/// base corpus is configured.
pub fn run_all(cfg: &RunConfig, out: &Path, jobs: usize) -> AppResult<()> {
    if cfg.corpus.input.is_none() {
        gen_synthetic(cfg, out)?;
    }
    build(cfg, out)?;
    train(cfg, out)?;
    sweep(cfg, out, jobs)?;
    analyze(cfg, out)
}
