//! Next-token distributions.

mod ngram;

use alloc::vec::Vec;

pub use ngram::{CountTable, NGramModel, NGramParams};

use crate::TokenId;

/// A model of the next token given the tokens before it.
///
/// Implementations return a full-support probability vector of length
/// [`vocab_size`](LanguageModel::vocab_size) that sums to one.
pub trait LanguageModel {
    fn vocab_size(&self) -> usize;

    /// Writes the next-token distribution for `context` into `out`,
    /// resizing it to the vocabulary size.
    fn next_distribution_into(&self, context: &[TokenId], out: &mut Vec<f64>);

    fn next_distribution(&self, context: &[TokenId]) -> Vec<f64> {
        let mut out = Vec::new();
        self.next_distribution_into(context, &mut out);
        out
    }

    /// Probability of a single `token` after `context`.
    fn token_prob(&self, context: &[TokenId], token: TokenId) -> f64 {
        self.next_distribution(context)[token as usize]
    }
}

impl<M: LanguageModel + ?Sized> LanguageModel for &M {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }

    fn next_distribution_into(&self, context: &[TokenId], out: &mut Vec<f64>) {
        (**self).next_distribution_into(context, out)
    }

    fn token_prob(&self, context: &[TokenId], token: TokenId) -> f64 {
        (**self).token_prob(context, token)
    }
}

/// The uniform distribution over `V` tokens, whatever the context.
#[derive(Debug, Clone, Copy)]
pub struct UniformModel {
    pub vocab_size: usize,
}

impl LanguageModel for UniformModel {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn next_distribution_into(&self, _context: &[TokenId], out: &mut Vec<f64>) {
        out.clear();
        out.resize(self.vocab_size, 1.0 / self.vocab_size as f64);
    }
}

/// Per-position probability of each token given the tokens before it,
/// starting at position 0 with an empty context.
pub fn teacher_forced_probs<M: LanguageModel + ?Sized>(model: &M, tokens: &[TokenId]) -> Vec<f64> {
    (0..tokens.len())
        .map(|i| model.token_prob(&tokens[..i], tokens[i]))
        .collect()
}

/// Exponential of the mean negative log-probability of every token of one
/// document (its end-of-sequence marker included) given the tokens before it.
///
/// Returns `None` for an empty token slice.
pub fn perplexity<M: LanguageModel + ?Sized>(model: &M, tokens: &[TokenId]) -> Option<f64> {
    if tokens.is_empty() {
        return None;
    }
    let nll: f64 = teacher_forced_probs(model, tokens)
        .into_iter()
        .map(|p| -libm::log(p))
        .sum();
    Some(libm::exp(nll / tokens.len() as f64))
}

/// Token-weighted perplexity over several documents.
pub fn corpus_perplexity<'a, M, I>(model: &M, docs: I) -> Option<f64>
where
    M: LanguageModel + ?Sized,
    I: IntoIterator<Item = &'a [TokenId]>,
{
    let mut nll = 0.0;
    let mut n = 0usize;
    for doc in docs {
        for p in teacher_forced_probs(model, doc) {
            nll -= libm::log(p);
        }
        n += doc.len();
    }
    (n > 0).then(|| libm::exp(nll / n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_perplexity_is_vocab_size() {
        let m = UniformModel { vocab_size: 37 };
        let ppl = perplexity(&m, &[3, 4, 5, 1]).unwrap();
        assert!((ppl - 37.0).abs() < 1e-9);
        assert_eq!(perplexity(&m, &[]), None);
    }
}
