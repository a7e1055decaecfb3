use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::decode::{DecodeTrace, Strategy};
use crate::memometrics::MemorizationRecord;

/// Total order over decode settings: greedy first, then by `top_p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SettingKey(Option<u64>);

impl From<Strategy> for SettingKey {
    fn from(s: Strategy) -> Self {
        match s {
            Strategy::Greedy => SettingKey(None),
            // Bit patterns of positive floats sort like the floats.
            Strategy::Nucleus { top_p } => SettingKey(Some(top_p.to_bits())),
        }
    }
}

/// Inclusive range of duplicities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DuplicityBin {
    pub lo: u32,
    pub hi: u32,
}

impl DuplicityBin {
    pub const fn new(lo: u32, hi: u32) -> Self {
        Self { lo, hi }
    }

    /// Bins of `width` aligned to multiples of the width, with single-copy
    /// documents kept apart: width 5 gives `1`, `2-5`, `6-10`, ...
    pub fn of(duplicity: u32, width: u32) -> Self {
        if duplicity <= 1 {
            return Self::new(duplicity, duplicity);
        }
        let b = duplicity.div_ceil(width);
        Self::new(((b - 1) * width + 1).max(2), b * width)
    }

    pub fn contains(&self, duplicity: u32) -> bool {
        (self.lo..=self.hi).contains(&duplicity)
    }

    pub fn label(&self) -> String {
        if self.lo == self.hi {
            format!("{}", self.lo)
        } else {
            format!("{}-{}", self.lo, self.hi)
        }
    }
}

impl fmt::Display for DuplicityBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Observations from one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedValue {
    pub seed: u64,
    /// Number of observations.
    pub n: usize,
    /// Sum of the observed values (the memorized count for 0/1 outcomes).
    pub sum: f64,
    pub value: f64,
}

/// One table cell: the mean over seeds of each seed's mean value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub mean: f64,
    /// Population standard deviation across seeds.
    pub std: f64,
    /// Observations over all seeds.
    pub n: usize,
    pub per_seed: Vec<SeedValue>,
}

impl Cell {
    fn from_seeds(per_seed: BTreeMap<u64, (usize, f64)>) -> Self {
        let per_seed: Vec<SeedValue> = per_seed
            .into_iter()
            .map(|(seed, (n, sum))| SeedValue {
                seed,
                n,
                sum,
                value: sum / n as f64,
            })
            .collect();
        let k = per_seed.len() as f64;
        let mean = per_seed.iter().map(|s| s.value).sum::<f64>() / k;
        let var = per_seed
            .iter()
            .map(|s| (s.value - mean) * (s.value - mean))
            .sum::<f64>()
            / k;
        Self {
            mean,
            std: libm::sqrt(var),
            n: per_seed.iter().map(|s| s.n).sum(),
            per_seed,
        }
    }
}

/// Duplicity bins by decode settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapResult {
    pub rows: Vec<DuplicityBin>,
    pub cols: Vec<Strategy>,
    /// `cells[row][col]`; `None` where no observation fell.
    pub cells: Vec<Vec<Option<Cell>>>,
}

impl HeatmapResult {
    pub fn col_index(&self, setting: Strategy) -> Option<usize> {
        let key = SettingKey::from(setting);
        self.cols.iter().position(|&c| SettingKey::from(c) == key)
    }

    pub fn row_index(&self, bin: DuplicityBin) -> Option<usize> {
        self.rows.iter().position(|&r| r == bin)
    }

    pub fn cell(&self, bin: DuplicityBin, setting: Strategy) -> Option<&Cell> {
        self.cells[self.row_index(bin)?][self.col_index(setting)?].as_ref()
    }

    /// `(bin, mean)` down one column, skipping empty cells.
    pub fn column_series(&self, setting: Strategy) -> Vec<(DuplicityBin, f64)> {
        let Some(c) = self.col_index(setting) else {
            return Vec::new();
        };
        self.rows
            .iter()
            .zip(&self.cells)
            .filter_map(|(&bin, row)| row[c].as_ref().map(|cell| (bin, cell.mean)))
            .collect()
    }
}

/// Records keyed by `(probe, setting, seed)`, first occurrence kept, in key
/// order. Aggregating this view makes results independent of record order.
pub fn dedup_records(records: &[MemorizationRecord]) -> Vec<&MemorizationRecord> {
    let mut keyed: BTreeMap<(&str, SettingKey, u64), &MemorizationRecord> = BTreeMap::new();
    for r in records {
        keyed
            .entry((r.probe_id.as_str(), r.setting.into(), r.seed))
            .or_insert(r);
    }
    keyed.into_values().collect()
}

fn build_table(
    records: &[MemorizationRecord],
    bin_of: impl Fn(u32) -> Option<DuplicityBin>,
    value_of: impl Fn(&MemorizationRecord) -> Option<f64>,
) -> HeatmapResult {
    type Seeds = BTreeMap<u64, (usize, f64)>;
    let mut groups: BTreeMap<DuplicityBin, BTreeMap<SettingKey, Seeds>> = BTreeMap::new();
    let mut settings: BTreeMap<SettingKey, Strategy> = BTreeMap::new();
    for r in dedup_records(records) {
        let Some(bin) = bin_of(r.duplicity) else {
            continue;
        };
        let key = SettingKey::from(r.setting);
        settings.insert(key, r.setting);
        let row = groups.entry(bin).or_default();
        let seeds = row.entry(key).or_default();
        if let Some(v) = value_of(r) {
            let e = seeds.entry(r.seed).or_insert((0, 0.0));
            e.0 += 1;
            e.1 += v;
        }
    }
    let keys: Vec<SettingKey> = settings.keys().copied().collect();
    let rows: Vec<DuplicityBin> = groups.keys().copied().collect();
    let cells = groups
        .into_values()
        .map(|mut row| {
            keys.iter()
                .map(|k| {
                    row.remove(k)
                        .filter(|s| !s.is_empty())
                        .map(Cell::from_seeds)
                })
                .collect()
        })
        .collect();
    HeatmapResult {
        rows,
        cols: settings.into_values().collect(),
        cells,
    }
}

/// Fraction of verbatim-memorized probes per duplicity bin and decode
/// setting. Width 1 gives one row per duplicity.
pub fn aggregate_heatmap(records: &[MemorizationRecord], bin_width: u32) -> HeatmapResult {
    let width = bin_width.max(1);
    build_table(
        records,
        |d| Some(DuplicityBin::of(d, width)),
        |r| Some(if r.verbatim { 1.0 } else { 0.0 }),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BleuVariant {
    /// Only outputs that did not reproduce the target exactly.
    NonVerbatim,
    All,
}

/// Mean BLEU-4 per given duplicity bin and decode setting. Records outside
/// every bin are ignored.
pub fn aggregate_bleu(
    records: &[MemorizationRecord],
    bins: &[DuplicityBin],
    variant: BleuVariant,
) -> HeatmapResult {
    build_table(
        records,
        |d| bins.iter().copied().find(|b| b.contains(d)),
        |r| match variant {
            BleuVariant::NonVerbatim if r.verbatim => None,
            _ => Some(r.bleu4),
        },
    )
}

/// Half-open range of prefix lengths, `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ContextBucket {
    pub lo: usize,
    pub hi: Option<usize>,
}

impl ContextBucket {
    pub fn label(&self) -> String {
        match self.hi {
            Some(hi) => format!("{}-{}", self.lo, hi),
            None => format!("{}+", self.lo),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextBucketCell {
    pub bucket: ContextBucket,
    pub setting: Strategy,
    pub cell: Cell,
}

/// Verbatim-memorized fraction per prefix-length bucket and setting. The
/// buckets are `[0, e0)`, `[e0, e1)`, ..., `[e_last, inf)` for ascending
/// `edges`; buckets without records are left out.
pub fn aggregate_context_buckets(
    records: &[MemorizationRecord],
    edges: &[usize],
) -> Vec<ContextBucketCell> {
    let bucket_of = |len: usize| {
        let i = edges.partition_point(|&e| e <= len);
        ContextBucket {
            lo: if i == 0 { 0 } else { edges[i - 1] },
            hi: edges.get(i).copied(),
        }
    };
    // (setting, per-seed (n, memorized)) per bucket and setting.
    type Group = (Strategy, BTreeMap<u64, (usize, f64)>);
    let mut groups: BTreeMap<(ContextBucket, SettingKey), Group> = BTreeMap::new();
    for r in dedup_records(records) {
        let g = groups
            .entry((bucket_of(r.prefix_len), r.setting.into()))
            .or_insert_with(|| (r.setting, BTreeMap::new()));
        let e = g.1.entry(r.seed).or_insert((0, 0.0));
        e.0 += 1;
        e.1 += if r.verbatim { 1.0 } else { 0.0 };
    }
    groups
        .into_iter()
        .map(|((bucket, _), (setting, seeds))| ContextBucketCell {
            bucket,
            setting,
            cell: Cell::from_seeds(seeds),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepFraction {
    pub deterministic: usize,
    pub total: usize,
}

impl StepFraction {
    pub fn fraction(&self) -> Option<f64> {
        (self.total > 0).then(|| self.deterministic as f64 / self.total as f64)
    }
}

/// Share of generation steps with a single-token nucleus, per group.
pub fn deterministic_fraction<'a, K: Ord>(
    traces: impl IntoIterator<Item = (K, &'a DecodeTrace)>,
) -> BTreeMap<K, StepFraction> {
    let mut out: BTreeMap<K, StepFraction> = BTreeMap::new();
    for (key, trace) in traces {
        let e = out.entry(key).or_default();
        e.deterministic += trace.deterministic_steps();
        e.total += trace.steps.len();
    }
    out
}

/// [`deterministic_fraction`] from the step tallies kept in records.
/// Records for which `key` returns `None` are skipped.
pub fn deterministic_fraction_from_records<K: Ord>(
    records: &[MemorizationRecord],
    key: impl Fn(&MemorizationRecord) -> Option<K>,
) -> BTreeMap<K, StepFraction> {
    let mut out: BTreeMap<K, StepFraction> = BTreeMap::new();
    for r in dedup_records(records) {
        if let Some(k) = key(r) {
            let e = out.entry(k).or_default();
            e.deterministic += r.det_steps;
            e.total += r.gen_len;
        }
    }
    out
}
