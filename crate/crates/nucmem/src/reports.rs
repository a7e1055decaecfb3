//! Record, trace and report file formats.

use std::collections::BTreeSet;
use std::path::Path;

use nucmem_core::decode::{DecodeConfig, DecodeTrace, StepRecord, StopReason, Strategy};
use nucmem_core::memometrics::MemorizationRecord;
use nucmem_core::sweep::{
    BleuVariant, Cell, ContextBucketCell, HeatmapResult, RampSatEntry, RampSatThresholds,
    StepFraction,
};
use nucmem_core::TokenId;
use serde::{Deserialize, Serialize};

use crate::config::Provenance;
use crate::error::AppResult;
use crate::io::{write_csv, write_json};

/// One line of `records.jsonl`. `seed` is the run seed; `replicate` names
/// the decode replicate the record belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordLine {
    pub schema_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub replicate: u64,
    pub probe_id: String,
    pub duplicity: u32,
    #[serde(flatten)]
    pub setting: Strategy,
    pub prefix_len: usize,
    pub verbatim: bool,
    pub bleu4: f64,
    pub gen_len: usize,
    pub stop_reason: StopReason,
    pub det_steps: usize,
    pub generated: Vec<TokenId>,
}

impl RecordLine {
    pub fn new(r: MemorizationRecord, p: &Provenance) -> Self {
        Self {
            schema_version: p.schema_version,
            config_hash: p.config_hash.clone(),
            seed: p.seed,
            replicate: r.seed,
            probe_id: r.probe_id,
            duplicity: r.duplicity,
            setting: r.setting,
            prefix_len: r.prefix_len,
            verbatim: r.verbatim,
            bleu4: r.bleu4,
            gen_len: r.gen_len,
            stop_reason: r.stop_reason,
            det_steps: r.det_steps,
            generated: r.generated,
        }
    }

    pub fn into_record(self) -> MemorizationRecord {
        MemorizationRecord {
            probe_id: self.probe_id,
            duplicity: self.duplicity,
            setting: self.setting,
            seed: self.replicate,
            prefix_len: self.prefix_len,
            verbatim: self.verbatim,
            bleu4: self.bleu4,
            gen_len: self.gen_len,
            stop_reason: self.stop_reason,
            det_steps: self.det_steps,
            generated: self.generated,
        }
    }
}

/// One line of `traces.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceLine {
    pub probe_id: String,
    pub replicate: u64,
    pub config: DecodeConfig,
    pub stop_reason: StopReason,
    pub generated: Vec<TokenId>,
    pub prefix_probs: Vec<f64>,
    pub steps: Vec<StepRecord>,
}

impl TraceLine {
    pub fn new(probe_id: &str, replicate: u64, config: DecodeConfig, t: DecodeTrace) -> Self {
        Self {
            probe_id: probe_id.into(),
            replicate,
            config,
            stop_reason: t.stop_reason,
            generated: t.generated,
            prefix_probs: t.prefix_probs,
            steps: t.steps,
        }
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn cell_columns(cell: Option<&Cell>) -> [String; 3] {
    match cell {
        Some(c) => [num(c.mean), c.n.to_string(), num(c.std)],
        None => [String::new(), "0".into(), String::new()],
    }
}

/// `aggregate.csv`: one row per duplicity bin; per setting the mean
/// memorized fraction and its `_n` and `_std` companions.
pub fn write_aggregate_csv(path: &Path, p: &Provenance, h: &HeatmapResult) -> AppResult<()> {
    let labels: Vec<String> = h.cols.iter().map(Strategy::label).collect();
    let mut header = vec!["bin".to_string()];
    for l in &labels {
        header.extend([l.clone(), format!("{l}_n"), format!("{l}_std")]);
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = h
        .rows
        .iter()
        .zip(&h.cells)
        .map(|(bin, row)| {
            let mut out = vec![bin.label()];
            for c in row {
                out.extend(cell_columns(c.as_ref()));
            }
            out
        })
        .collect();
    write_csv(path, p, &header, &rows)
}

#[derive(Serialize)]
struct SeedGrid {
    seed: u64,
    cells: Vec<Vec<Option<f64>>>,
}

#[derive(Serialize)]
struct HeatmapFile<'a> {
    #[serde(flatten)]
    provenance: &'a Provenance,
    bin_width: u32,
    rows: Vec<String>,
    cols: Vec<String>,
    cells: Vec<Vec<Option<f64>>>,
    n: Vec<Vec<usize>>,
    std: Vec<Vec<Option<f64>>>,
    per_seed: Vec<SeedGrid>,
}

/// `heatmap.json`: the aggregate table as plot-ready arrays, with the
/// per-seed grids it averages.
pub fn write_heatmap_json(
    path: &Path,
    p: &Provenance,
    h: &HeatmapResult,
    bin_width: u32,
) -> AppResult<()> {
    let grid = |f: &dyn Fn(&Cell) -> Option<f64>| -> Vec<Vec<Option<f64>>> {
        h.cells
            .iter()
            .map(|row| row.iter().map(|c| c.as_ref().and_then(f)).collect())
            .collect()
    };
    let seeds: BTreeSet<u64> = h
        .cells
        .iter()
        .flatten()
        .flatten()
        .flat_map(|c| c.per_seed.iter().map(|s| s.seed))
        .collect();
    let per_seed = seeds
        .into_iter()
        .map(|seed| SeedGrid {
            seed,
            cells: grid(&|c: &Cell| c.per_seed.iter().find(|s| s.seed == seed).map(|s| s.value)),
        })
        .collect();
    let file = HeatmapFile {
        provenance: p,
        bin_width,
        rows: h.rows.iter().map(|b| b.label()).collect(),
        cols: h.cols.iter().map(Strategy::label).collect(),
        cells: grid(&|c: &Cell| Some(c.mean)),
        n: h.cells
            .iter()
            .map(|row| row.iter().map(|c| c.as_ref().map_or(0, |c| c.n)).collect())
            .collect(),
        std: grid(&|c: &Cell| Some(c.std)),
        per_seed,
    };
    write_json(path, &file)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RampSatSetting {
    pub setting: String,
    pub ramp_up: Option<u32>,
    pub saturation: Option<u32>,
    pub series: Vec<(u32, f64)>,
    pub thresholds: RampSatThresholds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RampSatFile {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub settings: Vec<RampSatSetting>,
}

pub fn write_rampsat_json(
    path: &Path,
    p: &Provenance,
    entries: Vec<RampSatEntry>,
    t: &RampSatThresholds,
) -> AppResult<()> {
    let file = RampSatFile {
        provenance: p.clone(),
        settings: entries
            .into_iter()
            .map(|e| RampSatSetting {
                setting: e.setting.label(),
                ramp_up: e.ramp_up,
                saturation: e.saturation,
                series: e.series,
                thresholds: *t,
            })
            .collect(),
    };
    write_json(path, &file)
}

/// `deterministic.csv`: share of single-token-nucleus steps per setting
/// and duplicity.
pub fn write_deterministic_csv(
    path: &Path,
    p: &Provenance,
    fractions: &[((Strategy, u32), StepFraction)],
) -> AppResult<()> {
    let rows: Vec<Vec<String>> = fractions
        .iter()
        .map(|((setting, d), f)| {
            vec![
                setting.label(),
                d.to_string(),
                f.deterministic.to_string(),
                f.total.to_string(),
                f.fraction().map(num).unwrap_or_default(),
            ]
        })
        .collect();
    write_csv(
        path,
        p,
        &[
            "setting",
            "duplicity",
            "deterministic_steps",
            "steps",
            "fraction",
        ],
        &rows,
    )
}

/// `bleu_table.csv`: mean BLEU-4 per duplicity bin, setting and variant.
pub fn write_bleu_csv(
    path: &Path,
    p: &Provenance,
    tables: &[(BleuVariant, HeatmapResult)],
) -> AppResult<()> {
    let mut rows = Vec::new();
    for (variant, h) in tables {
        let variant = match variant {
            BleuVariant::NonVerbatim => "non_verbatim",
            BleuVariant::All => "all",
        };
        for (bin, row) in h.rows.iter().zip(&h.cells) {
            for (setting, c) in h.cols.iter().zip(row) {
                let mut r = vec![bin.label(), setting.label(), variant.to_string()];
                r.extend(cell_columns(c.as_ref()));
                rows.push(r);
            }
        }
    }
    write_csv(
        path,
        p,
        &["bin", "setting", "variant", "bleu4", "n", "std"],
        &rows,
    )
}

/// `context.csv`: memorized fraction per prefix-length bucket and setting.
pub fn write_context_csv(
    path: &Path,
    p: &Provenance,
    cells: &[ContextBucketCell],
) -> AppResult<()> {
    let rows: Vec<Vec<String>> = cells
        .iter()
        .map(|c| {
            let mut r = vec![c.bucket.label(), c.setting.label()];
            r.extend(cell_columns(Some(&c.cell)));
            r
        })
        .collect();
    write_csv(
        path,
        p,
        &["prefix_len", "setting", "fraction", "n", "std"],
        &rows,
    )
}
