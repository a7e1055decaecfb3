use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::LengthBucket;
use crate::{rng, Error, Result};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// How many documents get each total copy count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DuplicationPlan {
    pub docs_per_level: usize,
    pub docs_per_bucket_per_level: usize,
    /// Smallest total copy count of a duplicated document.
    pub level_min: u32,
    /// Largest total copy count, inclusive.
    pub level_max: u32,
    /// Share of base documents held out as validation, drawn from documents
    /// never selected for duplication.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for DuplicationPlan {
    fn default() -> Self {
        Self {
            docs_per_level: 280,
            docs_per_bucket_per_level: 70,
            level_min: 2,
            level_max: 30,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

impl DuplicationPlan {
    pub fn validate(&self) -> Result<()> {
        if self.docs_per_bucket_per_level == 0 {
            return Err(Error::config(
                "plan.docs_per_bucket_per_level",
                "must be at least 1",
            ));
        }
        if self.docs_per_bucket_per_level * LengthBucket::ALL.len() != self.docs_per_level {
            return Err(Error::config(
                "plan.docs_per_level",
                format!(
                    "must equal 4 x docs_per_bucket_per_level = {}",
                    self.docs_per_bucket_per_level * 4
                ),
            ));
        }
        if self.level_min < 2 {
            return Err(Error::config("plan.level_min", "must be at least 2"));
        }
        if self.level_max < self.level_min {
            return Err(Error::config(
                "plan.level_max",
                "must be at least level_min",
            ));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::config(
                "plan.validation_fraction",
                "must be in [0, 1)",
            ));
        }
        Ok(())
    }

    pub fn levels(&self) -> core::ops::RangeInclusive<u32> {
        self.level_min..=self.level_max
    }

    pub fn level_count(&self) -> usize {
        (self.level_max - self.level_min + 1) as usize
    }

    /// Documents each bucket must supply.
    pub fn required_per_bucket(&self) -> usize {
        self.docs_per_bucket_per_level * self.level_count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    /// Total number of copies in the training stream; `1` for validation
    /// documents, which are never materialized.
    pub duplicity: u32,
    pub bucket: LengthBucket,
    pub split: Split,
}

/// Ground truth for a built training corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusManifest {
    pub schema_version: u32,
    pub seed: u64,
    pub plan: DuplicationPlan,
    /// Path of the vocabulary file the token ids refer to, when one was written.
    #[serde(default)]
    pub vocabulary: Option<String>,
    /// Materialized formats written next to the manifest.
    #[serde(default)]
    pub materialized: Vec<String>,
    /// Entries ordered by id.
    pub entries: Vec<ManifestEntry>,
}

impl CorpusManifest {
    pub fn train_entries(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(|e| e.split == Split::Train)
    }

    pub fn entry(&self, id: &str) -> Option<&ManifestEntry> {
        self.entries
            .binary_search_by(|e| e.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.entries[i])
    }

    /// Documents with at least two copies.
    pub fn duplicated_docs(&self) -> usize {
        self.train_entries().filter(|e| e.duplicity >= 2).count()
    }

    /// Copies of documents that occur at least twice, originals included.
    pub fn duplicated_copies(&self) -> u64 {
        self.train_entries()
            .filter(|e| e.duplicity >= 2)
            .map(|e| e.duplicity as u64)
            .sum()
    }

    /// The same tally under the reading where a level-`n` document receives
    /// `n` extra copies on top of its original.
    pub fn duplicated_copies_plus_originals(&self) -> u64 {
        self.train_entries()
            .filter(|e| e.duplicity >= 2)
            .map(|e| e.duplicity as u64 + 1)
            .sum()
    }

    /// Length of the materialized training stream in document copies.
    pub fn total_copies(&self) -> u64 {
        self.train_entries().map(|e| e.duplicity as u64).sum()
    }

    /// Number of train entries at each duplicity.
    pub fn level_counts(&self) -> BTreeMap<u32, usize> {
        let mut out = BTreeMap::new();
        for e in self.train_entries() {
            *out.entry(e.duplicity).or_insert(0) += 1;
        }
        out
    }

    /// Checks every structural invariant the planner guarantees.
    pub fn validate(&self) -> Result<()> {
        self.plan.validate()?;
        if self.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::config(
                "manifest.schema_version",
                format!("unsupported version {}", self.schema_version),
            ));
        }
        for (i, w) in self.entries.windows(2).enumerate() {
            if w[0].id >= w[1].id {
                return Err(Error::config(
                    format!("manifest.entries[{}].id", i + 1),
                    "entries must be sorted by id without repeats",
                ));
            }
        }
        let mut per_level_bucket: BTreeMap<(u32, LengthBucket), usize> = BTreeMap::new();
        for (i, e) in self.entries.iter().enumerate() {
            if e.duplicity == 0 {
                return Err(Error::config(
                    format!("manifest.entries[{i}].duplicity"),
                    "must be >= 1",
                ));
            }
            if e.split == Split::Validation && e.duplicity != 1 {
                return Err(Error::config(
                    format!("manifest.entries[{i}].duplicity"),
                    "validation documents are never duplicated",
                ));
            }
            if e.duplicity >= 2 {
                if !self.plan.levels().contains(&e.duplicity) {
                    return Err(Error::config(
                        format!("manifest.entries[{i}].duplicity"),
                        "outside the plan's level range",
                    ));
                }
                *per_level_bucket.entry((e.duplicity, e.bucket)).or_insert(0) += 1;
            }
        }
        for level in self.plan.levels() {
            for bucket in LengthBucket::ALL {
                let got = per_level_bucket.get(&(level, bucket)).copied().unwrap_or(0);
                if got != self.plan.docs_per_bucket_per_level {
                    return Err(Error::config(
                        "manifest.entries",
                        format!(
                            "level {level} bucket {bucket} has {got} documents, expected {}",
                            self.plan.docs_per_bucket_per_level
                        ),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Selects, for every level `n` of the plan, `docs_per_bucket_per_level`
/// not-yet-selected documents from each length bucket and gives them
/// duplicity `n`. A validation sample is then drawn from the remaining
/// documents; everything else keeps a single copy.
///
/// The outcome depends only on the set of `(id, bucket)` pairs and the plan,
/// not on the iteration order of the input.
pub fn plan_duplication(
    buckets: &BTreeMap<String, LengthBucket>,
    plan: &DuplicationPlan,
) -> Result<CorpusManifest> {
    plan.validate()?;
    let mut pools: [Vec<&str>; 4] = Default::default();
    for (id, bucket) in buckets {
        pools[bucket.index()].push(id.as_str());
    }
    let required = plan.required_per_bucket();
    for bucket in LengthBucket::ALL {
        let available = pools[bucket.index()].len();
        if available < required {
            return Err(Error::InsufficientDocuments {
                bucket,
                available,
                required,
            });
        }
    }

    let mut duplicity: BTreeMap<&str, u32> = BTreeMap::new();
    let mut selection_rng = rng::stream(plan.seed, "plan.select");
    for pool in pools.iter_mut() {
        // A uniform shuffle consumed chunk by chunk is a draw without
        // replacement for each level from what earlier levels left behind.
        pool.shuffle(&mut selection_rng);
        let per = plan.docs_per_bucket_per_level;
        for (i, level) in plan.levels().enumerate() {
            for id in &pool[i * per..(i + 1) * per] {
                duplicity.insert(id, level);
            }
        }
    }

    let mut remaining: Vec<&str> = buckets
        .keys()
        .map(String::as_str)
        .filter(|id| !duplicity.contains_key(id))
        .collect();
    let validation_count = libm::round(plan.validation_fraction * buckets.len() as f64) as usize;
    if validation_count > remaining.len() {
        return Err(Error::config(
            "plan.validation_fraction",
            format!(
                "needs {validation_count} validation documents but only {} are unselected",
                remaining.len()
            ),
        ));
    }
    let mut split_rng = rng::stream(plan.seed, "plan.validation");
    let (held_out, _) = remaining.partial_shuffle(&mut split_rng, validation_count);
    let held_out: alloc::collections::BTreeSet<&str> = held_out.iter().copied().collect();

    let entries = buckets
        .iter()
        .map(|(id, &bucket)| {
            let validation = held_out.contains(id.as_str());
            ManifestEntry {
                id: id.clone(),
                duplicity: duplicity.get(id.as_str()).copied().unwrap_or(1),
                bucket,
                split: if validation {
                    Split::Validation
                } else {
                    Split::Train
                },
            }
        })
        .collect();

    let manifest = CorpusManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        seed: plan.seed,
        plan: plan.clone(),
        vocabulary: None,
        materialized: Vec::new(),
        entries,
    };
    debug_assert!(manifest.validate().is_ok());
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn synthetic_buckets(per_bucket: usize) -> BTreeMap<String, LengthBucket> {
        let mut out = BTreeMap::new();
        for b in LengthBucket::ALL {
            for i in 0..per_bucket {
                out.insert(format!("{}-{i:05}", b.label()), b);
            }
        }
        out
    }

    fn tiny_plan() -> DuplicationPlan {
        DuplicationPlan {
            docs_per_level: 4,
            docs_per_bucket_per_level: 1,
            level_min: 2,
            level_max: 3,
            validation_fraction: 0.0,
            seed: 11,
        }
    }

    #[test]
    fn tiny_plan_tallies_match_brute_force() {
        let buckets = synthetic_buckets(3);
        let m = plan_duplication(&buckets, &tiny_plan()).unwrap();
        // Brute force over the manifest.
        let mut dup_docs = 0;
        let mut copies = 0u64;
        for e in &m.entries {
            if e.duplicity >= 2 {
                dup_docs += 1;
                copies += e.duplicity as u64;
            }
        }
        assert_eq!(dup_docs, 8);
        assert_eq!(copies, 4 * 2 + 4 * 3);
        assert_eq!(m.duplicated_docs(), 8);
        assert_eq!(m.duplicated_copies(), 20);
        assert_eq!(m.total_copies(), 20 + 4);
        m.validate().unwrap();
    }

    #[test]
    fn insufficient_bucket_names_shortfall() {
        let mut buckets = synthetic_buckets(2);
        buckets.retain(|id, b| *b != LengthBucket::UpTo400 || id.ends_with("00000"));
        let err = plan_duplication(&buckets, &tiny_plan()).unwrap_err();
        assert_eq!(
            err,
            Error::InsufficientDocuments {
                bucket: LengthBucket::UpTo400,
                available: 1,
                required: 2
            }
        );
        assert!(err.to_string().contains("short by 1"));
    }

    #[test]
    fn validation_drawn_from_unselected() {
        let buckets = synthetic_buckets(10);
        let plan = DuplicationPlan {
            validation_fraction: 0.25,
            ..tiny_plan()
        };
        let m = plan_duplication(&buckets, &plan).unwrap();
        let val: Vec<_> = m
            .entries
            .iter()
            .filter(|e| e.split == Split::Validation)
            .collect();
        assert_eq!(val.len(), 10);
        assert!(val.iter().all(|e| e.duplicity == 1));
    }

    #[test]
    fn rejects_bad_plans() {
        let bad = DuplicationPlan {
            level_min: 1,
            ..DuplicationPlan::default()
        };
        assert!(
            matches!(bad.validate(), Err(Error::Config { ref field, .. }) if field == "plan.level_min")
        );
        let bad = DuplicationPlan {
            docs_per_level: 279,
            ..DuplicationPlan::default()
        };
        assert!(
            matches!(bad.validate(), Err(Error::Config { ref field, .. }) if field == "plan.docs_per_level")
        );
        let bad = DuplicationPlan {
            level_max: 1,
            level_min: 2,
            ..DuplicationPlan::default()
        };
        assert!(bad.validate().is_err());
        DuplicationPlan::default().validate().unwrap();
    }

    #[test]
    fn defaults_need_2030_per_bucket() {
        assert_eq!(DuplicationPlan::default().required_per_bucket(), 70 * 29);
    }
}
