use alloc::collections::BTreeMap;
use alloc::string::String;
use core::fmt;

use serde::{Deserialize, Serialize};

use super::Document;

/// Document-length bucket over content token counts: `(0,200]`, `(200,300]`,
/// `(300,400]` and `(400,inf)`. An empty document falls into the first bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LengthBucket {
    #[serde(rename = "0-200")]
    UpTo200,
    #[serde(rename = "200-300")]
    UpTo300,
    #[serde(rename = "300-400")]
    UpTo400,
    #[serde(rename = "400+")]
    Over400,
}

impl LengthBucket {
    pub const ALL: [LengthBucket; 4] = [
        LengthBucket::UpTo200,
        LengthBucket::UpTo300,
        LengthBucket::UpTo400,
        LengthBucket::Over400,
    ];

    pub fn of(content_len: usize) -> Self {
        match content_len {
            0..=200 => LengthBucket::UpTo200,
            201..=300 => LengthBucket::UpTo300,
            301..=400 => LengthBucket::UpTo400,
            _ => LengthBucket::Over400,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Inclusive upper bound, `None` for the open-ended bucket.
    pub fn upper(self) -> Option<usize> {
        match self {
            LengthBucket::UpTo200 => Some(200),
            LengthBucket::UpTo300 => Some(300),
            LengthBucket::UpTo400 => Some(400),
            LengthBucket::Over400 => None,
        }
    }

    /// Exclusive lower bound.
    pub fn lower(self) -> usize {
        match self {
            LengthBucket::UpTo200 => 0,
            LengthBucket::UpTo300 => 200,
            LengthBucket::UpTo400 => 300,
            LengthBucket::Over400 => 400,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            LengthBucket::UpTo200 => "0-200",
            LengthBucket::UpTo300 => "200-300",
            LengthBucket::UpTo400 => "300-400",
            LengthBucket::Over400 => "400+",
        }
    }
}

impl fmt::Display for LengthBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Bucket of every document by its content length (the trailing
/// end-of-sequence marker is not counted).
pub fn assign_buckets(docs: &[Document]) -> BTreeMap<String, LengthBucket> {
    docs.iter().map(|d| (d.id.clone(), d.bucket())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn boundaries_are_upper_inclusive() {
        assert_eq!(LengthBucket::of(1), LengthBucket::UpTo200);
        assert_eq!(LengthBucket::of(200), LengthBucket::UpTo200);
        assert_eq!(LengthBucket::of(201), LengthBucket::UpTo300);
        assert_eq!(LengthBucket::of(250), LengthBucket::UpTo300);
        assert_eq!(LengthBucket::of(300), LengthBucket::UpTo300);
        assert_eq!(LengthBucket::of(400), LengthBucket::UpTo400);
        assert_eq!(LengthBucket::of(401), LengthBucket::Over400);
    }

    #[test]
    fn partition_is_consistent_with_bounds() {
        for n in 1..2000usize {
            let b = LengthBucket::of(n);
            assert!(n > b.lower());
            if let Some(hi) = b.upper() {
                assert!(n <= hi);
            }
        }
    }

    #[test]
    fn assign_excludes_eos() {
        let mut tokens = vec![5u32; 200];
        tokens.push(crate::EOS_ID);
        let docs = [Document {
            id: "d".into(),
            tokens,
        }];
        assert_eq!(assign_buckets(&docs)["d"], LengthBucket::UpTo200);
    }
}
