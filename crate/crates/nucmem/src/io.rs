//! File plumbing: atomic writes, JSON/JSONL helpers and corpus readers.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nucmem_core::corpus::{CorpusManifest, Document, MaterializedCorpus, RawDocument, Vocabulary};
use nucmem_core::TokenId;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::Provenance;
use crate::error::{AppError, AppResult};

/// Writes `path` through a temporary file in the same directory that is
/// renamed into place only after `fill` succeeded, so readers never see a
/// partial file.
pub fn write_atomic(
    path: &Path,
    fill: impl FnOnce(&mut dyn Write) -> io::Result<()>,
) -> AppResult<()> {
    let fail =
        |e: &dyn std::fmt::Display| AppError::runtime(format!("writing {}", path.display()), e);
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| fail(&e))?;
    let mut builder = tempfile::Builder::new();
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        // Final files get ordinary permissions, not the private temp-file mode.
        builder.permissions(fs::Permissions::from_mode(0o644));
    }
    let tmp = builder.tempfile_in(dir).map_err(|e| fail(&e))?;
    let mut w = BufWriter::new(tmp);
    fill(&mut w).map_err(|e| fail(&e))?;
    let tmp = w.into_inner().map_err(|e| fail(e.error()))?;
    tmp.persist(path).map_err(|e| fail(&e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> AppResult<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")
    })
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> AppResult<()> {
    write_atomic(path, |w| {
        for row in rows {
            serde_json::to_writer(&mut *w, &row)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path, what: &str) -> AppResult<T> {
    let file = fs::File::open(path).map_err(|e| AppError::read(path, what, e))?;
    serde_json::from_reader(BufReader::new(file))
        .map_err(|e| AppError::runtime(format!("{what} {}", path.display()), e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path, what: &str) -> AppResult<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| AppError::read(path, what, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| AppError::read(path, what, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(&line).map_err(|e| {
            AppError::runtime(format!("{what} {} line {}", path.display(), i + 1), e)
        })?;
        out.push(row);
    }
    Ok(out)
}

/// Reads a base corpus: every regular file of a directory (one document
/// per file, id = file name) or a JSONL file of `{"id", "text"}`. Documents
/// come back sorted by id; repeated ids are an error.
pub fn read_base_corpus(path: &Path) -> AppResult<Vec<RawDocument>> {
    let meta = fs::metadata(path).map_err(|e| AppError::read(path, "base corpus", e))?;
    let mut docs: Vec<RawDocument> = if meta.is_dir() {
        let mut docs = Vec::new();
        for entry in fs::read_dir(path).map_err(|e| AppError::read(path, "base corpus", e))? {
            let entry = entry.map_err(|e| AppError::read(path, "base corpus", e))?;
            let p = entry.path();
            if !p.is_file() {
                continue;
            }
            let id = entry.file_name().to_string_lossy().into_owned();
            let text = fs::read_to_string(&p)
                .map_err(|e| AppError::runtime(format!("base corpus file {}", p.display()), e))?;
            docs.push(RawDocument { id, text });
        }
        docs
    } else {
        #[derive(Deserialize)]
        struct Line {
            id: String,
            text: String,
        }
        read_jsonl::<Line>(path, "base corpus")?
            .into_iter()
            .map(|l| RawDocument {
                id: l.id,
                text: l.text,
            })
            .collect()
    };
    docs.sort_by(|a, b| a.id.cmp(&b.id));
    if let Some(w) = docs.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(AppError::Runtime(format!(
            "base corpus {}: document id {:?} appears twice",
            path.display(),
            w[0].id
        )));
    }
    Ok(docs)
}

pub fn write_base_corpus(path: &Path, docs: &[RawDocument]) -> AppResult<()> {
    #[derive(Serialize)]
    struct Line<'a> {
        id: &'a str,
        text: &'a str,
    }
    write_jsonl(
        path,
        docs.iter().map(|d| Line {
            id: &d.id,
            text: &d.text,
        }),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabFile {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub tokens: Vec<String>,
}

pub fn write_vocab(path: &Path, vocab: &Vocabulary, provenance: &Provenance) -> AppResult<()> {
    write_json(
        path,
        &VocabFile {
            provenance: provenance.clone(),
            tokens: vocab.tokens().to_vec(),
        },
    )
}

pub fn read_vocab(path: &Path) -> AppResult<Vocabulary> {
    let file: VocabFile = read_json(path, "vocabulary")?;
    Ok(Vocabulary::from_tokens(file.tokens)?)
}

/// Tokenized base documents, `{"id", "tokens"}` per line, sorted by id.
pub fn write_docs(path: &Path, docs: &BTreeMap<String, Document>) -> AppResult<()> {
    write_jsonl(path, docs.values())
}

pub fn read_docs(path: &Path) -> AppResult<BTreeMap<String, Document>> {
    Ok(read_jsonl::<Document>(path, "tokenized documents")?
        .into_iter()
        .map(|d| (d.id.clone(), d))
        .collect())
}

pub fn write_manifest(path: &Path, manifest: &CorpusManifest) -> AppResult<()> {
    write_json(path, manifest)
}

pub fn read_manifest(path: &Path) -> AppResult<CorpusManifest> {
    let m: CorpusManifest = read_json(path, "manifest")?;
    m.validate()?;
    Ok(m)
}

pub const CORPUS_JSONL: &str = "corpus.jsonl";
pub const CORPUS_BIN: &str = "corpus.bin";
pub const CORPUS_IDX: &str = "corpus.idx";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct CopyLine<'a> {
    id: std::borrow::Cow<'a, str>,
    copy_index: u32,
    tokens: std::borrow::Cow<'a, [TokenId]>,
}

/// One copy per line, `{"id", "copy_index", "tokens"}`, in stream order.
pub fn write_corpus_jsonl(
    path: &Path,
    stream: &MaterializedCorpus,
    docs: &BTreeMap<String, Document>,
) -> AppResult<()> {
    let tokens = stream.resolve(docs)?;
    write_jsonl(
        path,
        stream.copies.iter().zip(tokens).map(|(c, t)| CopyLine {
            id: c.id.as_str().into(),
            copy_index: c.copy_index,
            tokens: t.into(),
        }),
    )
}

/// Flat little-endian u32 token ids plus a CSV index
/// `id,copy_index,offset,len` (offsets and lengths in tokens).
pub fn write_corpus_bin(
    bin: &Path,
    idx: &Path,
    stream: &MaterializedCorpus,
    docs: &BTreeMap<String, Document>,
) -> AppResult<()> {
    let tokens = stream.resolve(docs)?;
    write_atomic(bin, |w| {
        for t in &tokens {
            for id in t.iter() {
                w.write_all(&id.to_le_bytes())?;
            }
        }
        Ok(())
    })?;
    write_atomic(idx, |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["id", "copy_index", "offset", "len"])?;
        let mut offset = 0u64;
        for (c, t) in stream.copies.iter().zip(&tokens) {
            csv.write_record([
                c.id.clone(),
                c.copy_index.to_string(),
                offset.to_string(),
                t.len().to_string(),
            ])?;
            offset += t.len() as u64;
        }
        csv.flush()
    })
}

/// The training stream as token sequences, from whichever materialized
/// form the manifest lists (the binary form when both exist).
pub fn read_training_stream(dir: &Path, manifest: &CorpusManifest) -> AppResult<Vec<Vec<TokenId>>> {
    let has = |name: &str| manifest.materialized.iter().any(|m| m == name);
    if has(CORPUS_BIN) {
        read_corpus_bin(&dir.join(CORPUS_BIN), &dir.join(CORPUS_IDX))
    } else if has(CORPUS_JSONL) {
        Ok(
            read_jsonl::<CopyLine<'static>>(&dir.join(CORPUS_JSONL), "materialized corpus")?
                .into_iter()
                .map(|l| l.tokens.into_owned())
                .collect(),
        )
    } else {
        Err(AppError::missing(
            &dir.join(CORPUS_BIN),
            "the manifest lists no materialized corpus",
        ))
    }
}

pub fn read_corpus_bin(bin: &Path, idx: &Path) -> AppResult<Vec<Vec<TokenId>>> {
    let bytes = fs::read(bin).map_err(|e| AppError::read(bin, "materialized corpus", e))?;
    if bytes.len() % 4 != 0 {
        return Err(AppError::Runtime(format!(
            "{}: length is not a multiple of 4",
            bin.display()
        )));
    }
    let ids: Vec<TokenId> = bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let file = fs::File::open(idx).map_err(|e| AppError::read(idx, "corpus index", e))?;
    let mut out = Vec::new();
    let mut expected = 0u64;
    let mut seen = BTreeSet::new();
    for (i, row) in csv::Reader::from_reader(file)
        .deserialize::<(String, u32, u64, u64)>()
        .enumerate()
    {
        let (id, copy, offset, len) =
            row.map_err(|e| AppError::runtime(format!("{} row {}", idx.display(), i + 1), e))?;
        if offset != expected || offset + len > ids.len() as u64 || !seen.insert((id, copy)) {
            return Err(AppError::Runtime(format!(
                "{} row {}: inconsistent with {}",
                idx.display(),
                i + 1,
                bin.display()
            )));
        }
        out.push(ids[offset as usize..(offset + len) as usize].to_vec());
        expected = offset + len;
    }
    if expected != ids.len() as u64 {
        return Err(AppError::Runtime(format!(
            "{} covers {expected} of {} tokens",
            idx.display(),
            ids.len()
        )));
    }
    Ok(out)
}

/// Writes a CSV report: the provenance comment line, then the rows.
pub fn write_csv(
    path: &Path,
    provenance: &Provenance,
    header: &[&str],
    rows: &[Vec<String>],
) -> AppResult<()> {
    write_atomic(path, |w| {
        writeln!(w, "{}", provenance.csv_comment())?;
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(header)?;
        for r in rows {
            csv.write_record(r)?;
        }
        csv.flush()
    })
}
