use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{LengthBucket, RawDocument};
use crate::{rng, Error, Result};

/// Content-length range and relative weight for one [`LengthBucket`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BucketLengths {
    pub weight: f64,
    pub min: usize,
    pub max: usize,
}

/// Per-bucket length ranges, indexed like [`LengthBucket::ALL`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LengthDistribution {
    pub buckets: [BucketLengths; 4],
}

impl Default for LengthDistribution {
    fn default() -> Self {
        let b = |min, max| BucketLengths {
            weight: 1.0,
            min,
            max,
        };
        Self {
            buckets: [b(40, 200), b(201, 300), b(301, 400), b(401, 500)],
        }
    }
}

impl LengthDistribution {
    pub fn validate(&self) -> Result<()> {
        let mut total = 0.0;
        for (i, (range, bucket)) in self.buckets.iter().zip(LengthBucket::ALL).enumerate() {
            let field = |name: &str| format!("corpus.synthetic.lengths.buckets[{i}].{name}");
            if !(range.weight.is_finite() && range.weight >= 0.0) {
                return Err(Error::config(field("weight"), "must be finite and >= 0"));
            }
            if range.min == 0 || range.min <= bucket.lower() {
                return Err(Error::config(
                    field("min"),
                    format!("must be above {} for bucket {bucket}", bucket.lower()),
                ));
            }
            if range.max < range.min || bucket.upper().is_some_and(|hi| range.max > hi) {
                return Err(Error::config(
                    field("max"),
                    format!(
                        "must be within [min, {}]",
                        bucket.upper().map_or(usize::MAX, |h| h)
                    ),
                ));
            }
            total += range.weight;
        }
        if total <= 0.0 {
            return Err(Error::config(
                "corpus.synthetic.lengths",
                "all bucket weights are zero",
            ));
        }
        Ok(())
    }

    /// Splits `n` documents over the buckets by largest remainder, so equal
    /// weights give every bucket `n / 4` or `n / 4 + 1` documents.
    pub fn allocate(&self, n: usize) -> [usize; 4] {
        let total: f64 = self.buckets.iter().map(|b| b.weight).sum();
        let mut counts = [0usize; 4];
        let mut rema = [(0.0f64, 0usize); 4];
        let mut assigned = 0;
        for (i, b) in self.buckets.iter().enumerate() {
            let exact = n as f64 * b.weight / total;
            counts[i] = libm::floor(exact) as usize;
            assigned += counts[i];
            rema[i] = (exact - counts[i] as f64, i);
        }
        rema.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, i) in rema.iter().take(n - assigned) {
            counts[i] += 1;
        }
        counts
    }
}

/// Parameters of the synthetic base-corpus generator.
///
/// Words are drawn i.i.d. from a Zipf law over `vocab_size` word types
/// (`w0` the most frequent). A skewed law makes short contexts recur across
/// documents, so a document has to be repeated before an n-gram model
/// prefers its continuations over the background.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub num_docs: usize,
    pub vocab_size: usize,
    pub zipf_exponent: f64,
    pub lengths: LengthDistribution,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_docs: 4000,
            vocab_size: 500,
            zipf_exponent: 0.6,
            lengths: LengthDistribution::default(),
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_docs == 0 {
            return Err(Error::config(
                "corpus.synthetic.num_docs",
                "must be at least 1",
            ));
        }
        if self.vocab_size == 0 {
            return Err(Error::config(
                "corpus.synthetic.vocab_size",
                "must be at least 1",
            ));
        }
        if !(self.zipf_exponent.is_finite() && self.zipf_exponent >= 0.0) {
            return Err(Error::config(
                "corpus.synthetic.zipf_exponent",
                "must be finite and >= 0",
            ));
        }
        self.lengths.validate()
    }
}

struct Zipf {
    cdf: Vec<f64>,
}

impl Zipf {
    fn new(n: usize, exponent: f64) -> Self {
        let weights: Vec<f64> = (1..=n).map(|r| libm::pow(r as f64, -exponent)).collect();
        let total: f64 = weights.iter().sum();
        let mut acc = 0.0;
        let cdf = weights
            .iter()
            .map(|w| {
                acc += w / total;
                acc
            })
            .collect();
        Self { cdf }
    }

    fn sample(&self, rng: &mut rng::Rng) -> u32 {
        let u: f64 = rng.gen();
        let i = self.cdf.partition_point(|&c| c <= u);
        i.min(self.cdf.len() - 1) as u32
    }
}

/// Generates a deduplicated base corpus. Bucket sizes follow
/// [`LengthDistribution::allocate`]; a document identical to an earlier one
/// is redrawn, so no two documents share their text.
pub fn generate_synthetic_corpus(config: &SyntheticConfig) -> Result<Vec<RawDocument>> {
    config.validate()?;
    let zipf = Zipf::new(config.vocab_size, config.zipf_exponent);
    let counts = config.lengths.allocate(config.num_docs);
    let mut plan: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(b, &n)| core::iter::repeat_n(b, n))
        .collect();
    let mut rng = rng::stream(config.seed, "synthetic");
    plan.shuffle(&mut rng);

    let width = format!("{}", config.num_docs.saturating_sub(1)).len();
    let mut seen: BTreeSet<Vec<u32>> = BTreeSet::new();
    let mut docs = Vec::with_capacity(config.num_docs);
    for (i, &bucket) in plan.iter().enumerate() {
        let range = config.lengths.buckets[bucket];
        let words = loop {
            let len = rng.gen_range(range.min..=range.max);
            let words: Vec<u32> = (0..len).map(|_| zipf.sample(&mut rng)).collect();
            if !seen.contains(&words) {
                break words;
            }
        };
        let mut text = String::with_capacity(words.len() * 5);
        for (j, w) in words.iter().enumerate() {
            if j > 0 {
                text.push(' ');
            }
            let _ = write!(text, "w{w}");
        }
        seen.insert(words);
        docs.push(RawDocument {
            id: format!("syn-{i:0width$}"),
            text,
        });
    }
    Ok(docs)
}
