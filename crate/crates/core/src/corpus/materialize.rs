use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{CorpusManifest, Document};
use crate::{rng, Error, Result, TokenId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CopyRef {
    pub id: String,
    pub copy_index: u32,
}

/// The training stream: every train document repeated `duplicity` times, in
/// a seeded shuffled order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaterializedCorpus {
    pub copies: Vec<CopyRef>,
}

impl MaterializedCorpus {
    /// Resolves every copy to its document tokens, in stream order.
    pub fn resolve<'a>(
        &'a self,
        docs: &'a BTreeMap<String, Document>,
    ) -> Result<Vec<&'a [TokenId]>> {
        self.copies
            .iter()
            .map(|c| {
                docs.get(&c.id).map(|d| d.tokens.as_slice()).ok_or_else(|| {
                    Error::Usage(alloc::format!("document {:?} missing from corpus", c.id))
                })
            })
            .collect()
    }

    /// Total number of tokens in the stream.
    pub fn token_len(&self, docs: &BTreeMap<String, Document>) -> Result<u64> {
        Ok(self.resolve(docs)?.iter().map(|t| t.len() as u64).sum())
    }
}

pub fn materialize(manifest: &CorpusManifest) -> MaterializedCorpus {
    let mut copies: Vec<CopyRef> = manifest
        .train_entries()
        .flat_map(|e| {
            (0..e.duplicity).map(move |copy_index| CopyRef {
                id: e.id.clone(),
                copy_index,
            })
        })
        .collect();
    copies.shuffle(&mut rng::stream(manifest.seed, "materialize.shuffle"));
    MaterializedCorpus { copies }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{DuplicationPlan, LengthBucket, ManifestEntry, Split};
    use alloc::vec;

    fn one_doc_manifest(duplicity: u32) -> CorpusManifest {
        CorpusManifest {
            schema_version: 1,
            seed: 3,
            plan: DuplicationPlan::default(),
            vocabulary: None,
            materialized: vec![],
            entries: vec![ManifestEntry {
                id: "doc".into(),
                duplicity,
                bucket: LengthBucket::UpTo200,
                split: Split::Train,
            }],
        }
    }

    #[test]
    fn emits_duplicity_copies() {
        let m = materialize(&one_doc_manifest(3));
        assert_eq!(m.copies.len(), 3);
        assert!(m.copies.iter().all(|c| c.id == "doc"));
        let mut idx: Vec<u32> = m.copies.iter().map(|c| c.copy_index).collect();
        idx.sort();
        assert_eq!(idx, [0, 1, 2]);
    }

    #[test]
    fn missing_document_is_an_error() {
        let m = materialize(&one_doc_manifest(1));
        assert!(m.resolve(&BTreeMap::new()).is_err());
    }
}
