use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use super::LanguageModel;
use crate::{Error, Result, TokenId};

/// Hyper-parameters of [`NGramModel`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NGramParams {
    /// n-gram order `N`; contexts of up to `N - 1` tokens are used.
    pub order: usize,
    /// Additive smoothing of the unigram base distribution.
    pub alpha: f64,
    /// Weight of the lower-order distribution at every interpolation step.
    pub lambda: f64,
}

impl Default for NGramParams {
    fn default() -> Self {
        Self {
            order: 4,
            alpha: 0.01,
            lambda: 0.1,
        }
    }
}

impl NGramParams {
    pub fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(Error::config("model.order", "must be at least 1"));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::config("model.alpha", "must be finite and > 0"));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::config("model.lambda", "must be in (0, 1)"));
        }
        Ok(())
    }
}

/// Counts of every `(context, successor)` pair for one context length,
/// stored as a flat array of `context_len + 1`-token grams in lexicographic
/// order with a parallel count array.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountTable {
    context_len: usize,
    grams: Vec<TokenId>,
    counts: Vec<u64>,
}

impl CountTable {
    /// Builds a table from sorted, repeat-free grams. Errors if the layout is
    /// inconsistent, unsorted, or holds a zero count.
    pub fn from_parts(context_len: usize, grams: Vec<TokenId>, counts: Vec<u64>) -> Result<Self> {
        let width = context_len + 1;
        if grams.len() != counts.len() * width {
            return Err(Error::Model(format!(
                "table for context length {context_len}: {} ids do not form {} grams",
                grams.len(),
                counts.len()
            )));
        }
        for (i, pair) in grams
            .chunks_exact(width)
            .collect::<Vec<_>>()
            .windows(2)
            .enumerate()
        {
            if pair[0] >= pair[1] {
                return Err(Error::Model(format!(
                    "table for context length {context_len}: entry {} is out of order",
                    i + 1
                )));
            }
        }
        if let Some(i) = counts.iter().position(|&c| c == 0) {
            return Err(Error::Model(format!(
                "table for context length {context_len}: entry {i} has a zero count"
            )));
        }
        Ok(Self {
            context_len,
            grams,
            counts,
        })
    }

    pub fn context_len(&self) -> usize {
        self.context_len
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// The `i`-th gram: context tokens followed by the successor.
    pub fn gram(&self, i: usize) -> &[TokenId] {
        let w = self.context_len + 1;
        &self.grams[i * w..(i + 1) * w]
    }

    pub fn count(&self, i: usize) -> u64 {
        self.counts[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[TokenId], u64)> + '_ {
        self.grams
            .chunks_exact(self.context_len + 1)
            .zip(self.counts.iter().copied())
    }

    /// Entry range whose context equals `context`.
    fn successors(&self, context: &[TokenId]) -> Range<usize> {
        debug_assert_eq!(context.len(), self.context_len);
        let w = self.context_len + 1;
        let k = self.context_len;
        let ctx_of = |i: usize| &self.grams[i * w..i * w + k];
        let lo = partition(self.counts.len(), |i| ctx_of(i) < context);
        let hi = lo + partition(self.counts.len() - lo, |i| ctx_of(lo + i) <= context);
        lo..hi
    }

    fn successor(&self, i: usize) -> TokenId {
        self.grams[i * (self.context_len + 1) + self.context_len]
    }
}

/// First index in `0..n` where `pred` turns false.
fn partition(n: usize, pred: impl Fn(usize) -> bool) -> usize {
    let (mut lo, mut hi) = (0, n);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if pred(mid) {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Interpolated n-gram model with an additively smoothed unigram base:
///
/// ```text
/// P_0(w)       = (c(w) + alpha) / (T + alpha * V)
/// P_k(w | h_k) = (1 - lambda) * c(h_k w) / c(h_k .) + lambda * P_{k-1}(w | h_{k-1})
/// ```
///
/// where `h_k` is the last `k` tokens of the context. A context never seen
/// in training leaves the lower-order distribution unchanged, and a context
/// shorter than `N - 1` tokens simply stops the recursion early.
#[derive(Debug, Clone, PartialEq)]
pub struct NGramModel {
    params: NGramParams,
    vocab_size: usize,
    tables: Vec<CountTable>,
    unigram: Vec<f64>,
}

impl NGramModel {
    /// Counts every document independently: no n-gram spans two documents.
    /// A document repeated `n` times in `docs` contributes `n` times.
    pub fn train<'a, I>(docs: I, vocab_size: usize, params: NGramParams) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [TokenId]>,
    {
        params.validate()?;
        let mut buf: Vec<TokenId> = Vec::new();
        let mut spans: Vec<Range<usize>> = Vec::new();
        for doc in docs {
            if let Some(&bad) = doc.iter().find(|&&t| t as usize >= vocab_size) {
                return Err(Error::VocabularyMismatch {
                    token: bad,
                    vocab_size,
                });
            }
            let start = buf.len();
            buf.extend_from_slice(doc);
            spans.push(start..buf.len());
        }

        let mut tables = Vec::with_capacity(params.order);
        for k in 0..params.order {
            let width = k + 1;
            let mut starts: Vec<u32> = Vec::new();
            for span in &spans {
                if span.len() >= width {
                    starts.extend((span.start..=span.end - width).map(|s| s as u32));
                }
            }
            let gram = |s: u32| &buf[s as usize..s as usize + width];
            starts.sort_unstable_by(|&a, &b| gram(a).cmp(gram(b)));
            let mut grams = Vec::new();
            let mut counts: Vec<u64> = Vec::new();
            let mut prev: Option<&[TokenId]> = None;
            for &s in &starts {
                let g = gram(s);
                if prev == Some(g) {
                    *counts.last_mut().unwrap() += 1;
                } else {
                    grams.extend_from_slice(g);
                    counts.push(1);
                    prev = Some(g);
                }
            }
            tables.push(CountTable {
                context_len: k,
                grams,
                counts,
            });
        }
        Self::from_tables(params, vocab_size, tables)
    }

    /// Assembles a model from count tables, one per context length `0..N`.
    pub fn from_tables(
        params: NGramParams,
        vocab_size: usize,
        tables: Vec<CountTable>,
    ) -> Result<Self> {
        params.validate()?;
        if vocab_size == 0 {
            return Err(Error::Model("vocabulary is empty".into()));
        }
        if tables.len() != params.order {
            return Err(Error::Model(format!(
                "order {} needs {} count tables, found {}",
                params.order,
                params.order,
                tables.len()
            )));
        }
        for (k, t) in tables.iter().enumerate() {
            if t.context_len != k {
                return Err(Error::Model(format!(
                    "table {k} has context length {}",
                    t.context_len
                )));
            }
            if let Some(&bad) = t.grams.iter().find(|&&id| id as usize >= vocab_size) {
                return Err(Error::VocabularyMismatch {
                    token: bad,
                    vocab_size,
                });
            }
        }
        let mut unigram = vec![0.0; vocab_size];
        let mut total = 0u64;
        for (g, c) in tables[0].iter() {
            unigram[g[0] as usize] = c as f64;
            total += c;
        }
        let denom = total as f64 + params.alpha * vocab_size as f64;
        for p in unigram.iter_mut() {
            *p = (*p + params.alpha) / denom;
        }
        Ok(Self {
            params,
            vocab_size,
            tables,
            unigram,
        })
    }

    pub fn params(&self) -> NGramParams {
        self.params
    }

    pub fn order(&self) -> usize {
        self.params.order
    }

    pub fn tables(&self) -> &[CountTable] {
        &self.tables
    }

    /// `c(context . token)`: how often `token` followed `context`.
    pub fn count(&self, context: &[TokenId], token: TokenId) -> u64 {
        let Some(table) = self.tables.get(context.len()) else {
            return 0;
        };
        let r = table.successors(context);
        let lo = r.start;
        let idx = partition(r.len(), |i| table.successor(lo + i) < token);
        if idx < r.len() && table.successor(lo + idx) == token {
            table.counts[lo + idx]
        } else {
            0
        }
    }

    /// `c(context .)`: total count of successors of `context`.
    pub fn context_total(&self, context: &[TokenId]) -> u64 {
        self.tables
            .get(context.len())
            .map(|t| t.successors(context).map(|i| t.counts[i]).sum())
            .unwrap_or(0)
    }

    /// Contexts of length `1..=min(N-1, len)` ending at the end of `context`,
    /// shortest first, up to the first one never seen in training.
    fn seen_levels<'a>(
        &'a self,
        context: &'a [TokenId],
    ) -> impl Iterator<Item = (&'a CountTable, Range<usize>, u64)> + 'a {
        let max_k = (self.params.order - 1).min(context.len());
        (1..=max_k)
            .map(move |k| {
                let table = &self.tables[k];
                let r = table.successors(&context[context.len() - k..]);
                let total: u64 = r.clone().map(|i| table.counts[i]).sum();
                (table, r, total)
            })
            // A longer context cannot have been seen if its suffix was not.
            .take_while(|(_, _, total)| *total > 0)
    }
}

impl LanguageModel for NGramModel {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn next_distribution_into(&self, context: &[TokenId], out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(&self.unigram);
        let lambda = self.params.lambda;
        for (table, range, total) in self.seen_levels(context) {
            for p in out.iter_mut() {
                *p *= lambda;
            }
            for i in range {
                let ml = table.counts[i] as f64 / total as f64;
                out[table.successor(i) as usize] += (1.0 - lambda) * ml;
            }
        }
    }

    fn token_prob(&self, context: &[TokenId], token: TokenId) -> f64 {
        let lambda = self.params.lambda;
        let mut p = self.unigram[token as usize];
        for (table, range, total) in self.seen_levels(context) {
            let lo = range.start;
            let idx = partition(range.len(), |i| table.successor(lo + i) < token);
            p *= lambda;
            if idx < range.len() && table.successor(lo + idx) == token {
                let ml = table.counts[lo + idx] as f64 / total as f64;
                p += (1.0 - lambda) * ml;
            }
        }
        p
    }
}
