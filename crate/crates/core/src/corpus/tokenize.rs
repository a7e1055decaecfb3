use alloc::vec::Vec;

use super::Vocabulary;
use crate::{TokenId, EOS_ID};

pub const UNK_TOKEN: &str = "<unk>";
pub const EOS_TOKEN: &str = "<eos>";

/// Splits on whitespace and detaches every character that is neither
/// alphanumeric nor whitespace into a token of its own.
///
/// ```
/// use nucmem_core::corpus::surface_tokens;
/// assert_eq!(surface_tokens("Hello, world"), ["Hello", ",", "world"]);
/// ```
pub fn surface_tokens(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let mut start = 0;
        for (i, ch) in word.char_indices() {
            if !ch.is_alphanumeric() {
                if start < i {
                    out.push(&word[start..i]);
                }
                let end = i + ch.len_utf8();
                out.push(&word[i..end]);
                start = end;
            }
        }
        if start < word.len() {
            out.push(&word[start..]);
        }
    }
    out
}

/// Surface tokens followed by [`EOS_TOKEN`]. With a vocabulary, pieces the
/// vocabulary lacks are replaced by [`UNK_TOKEN`].
pub fn tokenize<'a>(text: &'a str, vocab: Option<&'a Vocabulary>) -> Vec<&'a str> {
    let mut out = surface_tokens(text);
    if let Some(vocab) = vocab {
        for piece in out.iter_mut() {
            if vocab.id(piece).is_none() {
                *piece = UNK_TOKEN;
            }
        }
    }
    out.push(EOS_TOKEN);
    out
}

/// Token ids of `text` under `vocab`, terminated by [`EOS_ID`].
pub fn encode(text: &str, vocab: &Vocabulary) -> Vec<TokenId> {
    let mut out: Vec<TokenId> = surface_tokens(text)
        .into_iter()
        .map(|piece| vocab.id_or_unk(piece))
        .collect();
    out.push(EOS_ID);
    out
}
