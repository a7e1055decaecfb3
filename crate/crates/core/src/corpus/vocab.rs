use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::tokenize::{surface_tokens, EOS_TOKEN, UNK_TOKEN};
use crate::{Error, Result, TokenId, EOS_ID, UNK_ID};

/// Closed vocabulary with dense ids `0..len()`. Ids 0 and 1 are always
/// `<unk>` and `<eos>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: BTreeMap<String, TokenId>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    tokens: Vec<String>,
}

impl TryFrom<VocabularyRepr> for Vocabulary {
    type Error = Error;

    fn try_from(repr: VocabularyRepr) -> Result<Self> {
        Vocabulary::from_tokens(repr.tokens)
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr { tokens: v.tokens }
    }
}

impl Vocabulary {
    /// Rebuilds a vocabulary from its id-ordered token list.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 2 || tokens[0] != UNK_TOKEN || tokens[1] != EOS_TOKEN {
            return Err(Error::config(
                "vocab.tokens",
                "the first two entries must be <unk> and <eos>",
            ));
        }
        let mut index = BTreeMap::new();
        for (id, tok) in tokens.iter().enumerate() {
            if index.insert(tok.clone(), id as TokenId).is_some() {
                return Err(Error::config(
                    alloc::format!("vocab.tokens[{id}]"),
                    alloc::format!("duplicate token {tok:?}"),
                ));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &str) -> TokenId {
        self.id(token).unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Renders ids back to space-joined text.
    pub fn decode(&self, ids: &[TokenId]) -> String {
        let mut out = String::new();
        for (i, &id) in ids.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(self.token(id).unwrap_or(UNK_TOKEN));
        }
        out
    }
}

/// Builds a vocabulary from document texts: every distinct surface token,
/// ordered by descending frequency and then lexicographically, after the two
/// reserved markers.
pub fn build_vocab<I, S>(texts: I) -> Vocabulary
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut freq: BTreeMap<String, u64> = BTreeMap::new();
    for text in texts {
        for piece in surface_tokens(text.as_ref()) {
            match freq.get_mut(piece) {
                Some(c) => *c += 1,
                None => {
                    freq.insert(piece.to_string(), 1);
                }
            }
        }
    }
    let mut ranked: Vec<(String, u64)> = freq.into_iter().collect();
    // BTreeMap iteration is already lexicographic, so a stable sort by count keeps ties ordered.
    ranked.sort_by_key(|&(_, n)| core::cmp::Reverse(n));
    let mut tokens = Vec::with_capacity(ranked.len() + 2);
    tokens.push(UNK_TOKEN.to_string());
    tokens.push(EOS_TOKEN.to_string());
    tokens.extend(ranked.into_iter().map(|(t, _)| t));
    let v =
        Vocabulary::from_tokens(tokens).expect("surface tokens never spell the reserved markers");
    debug_assert_eq!(v.id(EOS_TOKEN), Some(EOS_ID));
    v
}
