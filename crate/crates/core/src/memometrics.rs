//! Verbatim and soft (BLEU-4) memorization scores.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::decode::{StopReason, Strategy};
use crate::{TokenId, EOS_ID};

/// A prefix taken from a training document and the continuation the model
/// would have to reproduce.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemorizationProbe {
    pub probe_id: String,
    pub doc_id: String,
    pub duplicity: u32,
    pub prefix: Vec<TokenId>,
    /// The continuation right after `prefix`. Ends with end-of-sequence
    /// unless it was cut at the generation cap.
    pub target: Vec<TokenId>,
}

impl MemorizationProbe {
    /// Builds a probe from a document's tokens: `prefix_len` context tokens
    /// and at most `cap` continuation tokens. Returns `None` when the
    /// document leaves no continuation after the prefix.
    pub fn from_document(
        doc_id: &str,
        duplicity: u32,
        tokens: &[TokenId],
        prefix_len: usize,
        cap: usize,
    ) -> Option<Self> {
        if prefix_len == 0 || cap == 0 || tokens.len() <= prefix_len {
            return None;
        }
        let rest = &tokens[prefix_len..];
        Some(Self {
            probe_id: doc_id.into(),
            doc_id: doc_id.into(),
            duplicity,
            prefix: tokens[..prefix_len].to_vec(),
            target: rest[..rest.len().min(cap)].to_vec(),
        })
    }

    pub fn k(&self) -> usize {
        self.target.len()
    }

    /// The target runs to the document's end-of-sequence marker.
    pub fn reaches_eos(&self) -> bool {
        self.target.last() == Some(&EOS_ID)
    }
}

/// Outcome of decoding one probe under one setting and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemorizationRecord {
    pub probe_id: String,
    pub duplicity: u32,
    pub setting: Strategy,
    pub seed: u64,
    /// Tokens of context the model was given.
    pub prefix_len: usize,
    pub verbatim: bool,
    pub bleu4: f64,
    pub gen_len: usize,
    pub stop_reason: StopReason,
    /// Generation steps whose nucleus held a single token.
    pub det_steps: usize,
    pub generated: Vec<TokenId>,
}

/// True iff `generated` reproduces `target` token for token.
///
/// A target that ends at the document's end-of-sequence marker must be
/// matched exactly, stop included. A target cut at the generation cap only
/// has to match on its first `target.len()` tokens.
pub fn verbatim_memorized(generated: &[TokenId], target: &[TokenId]) -> bool {
    if target.last() == Some(&EOS_ID) {
        generated == target
    } else {
        generated.len() >= target.len() && &generated[..target.len()] == target
    }
}

fn ngram_counts(tokens: &[TokenId], n: usize) -> BTreeMap<&[TokenId], usize> {
    let mut counts = BTreeMap::new();
    for g in tokens.windows(n) {
        *counts.entry(g).or_insert(0) += 1;
    }
    counts
}

/// Sentence-level BLEU-4 of `candidate` against a single `reference`:
/// clipped n-gram precisions for `n = 1..=4`, uniform weights, geometric
/// mean and the brevity penalty `exp(1 - r/c)` when `c < r`. Unsmoothed, so
/// any zero precision gives zero.
///
/// An order for which neither sequence has an n-gram (both shorter than
/// `n`) is left out of the mean, which keeps `bleu4(x, x) == 1` for short
/// `x`. An empty candidate or reference scores zero.
pub fn bleu4(candidate: &[TokenId], reference: &[TokenId]) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    let mut orders = 0usize;
    for n in 1..=4 {
        let cand_total = (candidate.len() + 1).saturating_sub(n);
        let ref_total = (reference.len() + 1).saturating_sub(n);
        if cand_total == 0 && ref_total == 0 {
            continue;
        }
        if cand_total == 0 {
            return 0.0;
        }
        let refs = ngram_counts(reference, n);
        let matched: usize = ngram_counts(candidate, n)
            .into_iter()
            .map(|(g, c)| c.min(refs.get(g).copied().unwrap_or(0)))
            .sum();
        if matched == 0 {
            return 0.0;
        }
        log_sum += libm::log(matched as f64 / cand_total as f64);
        orders += 1;
    }
    let c = candidate.len() as f64;
    let r = reference.len() as f64;
    let bp = if c < r { libm::exp(1.0 - r / c) } else { 1.0 };
    bp * libm::exp(log_sum / orders as f64)
}

/// BLEU-4 of the generated continuation against the probe target. The
/// prefix is part of neither side.
pub fn soft_memorization_score(generated: &[TokenId], probe: &MemorizationProbe) -> f64 {
    bleu4(generated, &probe.target)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verbatim_examples() {
        assert!(verbatim_memorized(&[5, 6, EOS_ID], &[5, 6, EOS_ID]));
        assert!(!verbatim_memorized(&[5, 7, EOS_ID], &[5, 6, EOS_ID]));
        // Stopped early.
        assert!(!verbatim_memorized(&[5], &[5, 6, EOS_ID]));
        // Ran past the document end.
        assert!(!verbatim_memorized(&[5, 6, 7], &[5, 6, EOS_ID]));
        // Cap-truncated target: only the first k tokens count.
        assert!(verbatim_memorized(&[5, 6, 9], &[5, 6]));
        assert!(!verbatim_memorized(&[5], &[5, 6]));
    }

    #[test]
    fn twinkle() {
        use crate::corpus::{build_vocab, encode};
        let text = "Twinkle, twinkle, little star, how I wonder what you are,";
        let vocab = build_vocab([text]);
        let tokens = encode(text, &vocab);
        let prefix_len = crate::corpus::surface_tokens("Twinkle, twinkle, little star,").len();
        let probe = MemorizationProbe::from_document("rhyme", 2, &tokens, prefix_len, 512).unwrap();
        let continuation = encode("how I wonder what you are,", &vocab);
        assert_eq!(probe.target, continuation);
        assert!(verbatim_memorized(&continuation, &probe.target));
        assert_eq!(soft_memorization_score(&continuation, &probe), 1.0);
    }

    #[test]
    fn bleu_examples() {
        let x = [1u32, 2, 3, 4, 5, 6];
        assert_eq!(bleu4(&x, &x), 1.0);
        assert_eq!(bleu4(&[9, 8, 7, 6], &[1, 2, 3, 4]), 0.0);
        assert_eq!(bleu4(&[], &x), 0.0);
        // Oracle: (4/5 * 3/4 * 2/3 * 1/2)^(1/4).
        let got = bleu4(&[10, 11, 12, 13, 14], &[10, 11, 12, 13, 15]);
        let expected = libm::pow(0.8 * 0.75 * (2.0 / 3.0) * 0.5, 0.25);
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 0.668_740_3).abs() < 1e-6);
    }

    #[test]
    fn bleu_short_sequences() {
        assert_eq!(bleu4(&[3], &[3]), 1.0);
        assert_eq!(bleu4(&[3, 4], &[3, 4]), 1.0);
        // Candidate too short for 4-grams the reference has.
        assert_eq!(bleu4(&[3, 4], &[3, 4, 5, 6]), 0.0);
    }

    #[test]
    fn bleu_clips_and_penalizes_brevity() {
        // Candidate repeats a reference unigram; clipping bounds p1.
        let b = bleu4(&[1, 1, 1, 1, 1], &[1, 1, 2, 3, 4]);
        assert_eq!(b, 0.0);
        let full = [1u32, 2, 3, 4, 5, 6, 7, 8];
        let short = &full[..6];
        let expected = libm::exp(1.0 - 8.0 / 6.0);
        assert!((bleu4(short, &full) - expected).abs() < 1e-12);
    }

    #[test]
    fn probe_target_rules() {
        let doc = [5u32, 6, 7, 8, EOS_ID];
        let p = MemorizationProbe::from_document("d", 3, &doc, 2, 512).unwrap();
        assert_eq!(p.prefix, [5, 6]);
        assert_eq!(p.target, [7, 8, EOS_ID]);
        assert!(p.reaches_eos());
        let p = MemorizationProbe::from_document("d", 3, &doc, 2, 2).unwrap();
        assert_eq!(p.target, [7, 8]);
        assert!(!p.reaches_eos());
        assert!(MemorizationProbe::from_document("d", 3, &doc, 5, 512).is_none());
    }
}
