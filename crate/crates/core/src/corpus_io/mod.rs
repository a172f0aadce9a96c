//! On-disk corpora, test sets and training-batch streams.
//!
//! Three line-delimited JSON formats (corpus documents, test examples, batch
//! slots) plus a flat little-endian binary shard format for large corpora.
//! Shard readers are independent; a directory of shards is read in file-name
//! order, each shard in line order.

mod binary;
mod jsonl;
mod stream;
mod testset;

use std::collections::HashSet;
use std::fmt;
use std::ops::Deref;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use binary::{BinaryShardReader, BinaryShardWriter, BINARY_MAGIC};
pub use jsonl::{JsonlCorpusReader, JsonlCorpusWriter};
pub use stream::{read_stream, write_stream, BatchStream, SlotRecord};
pub use testset::{group_by_lang_pair, read_testset, write_testset, TestExample};

/// A sequence of opaque token ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSequence(pub Vec<u32>);

impl TokenSequence {
    pub fn new(tokens: Vec<u32>) -> Self {
        TokenSequence(tokens)
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }
}

impl Deref for TokenSequence {
    type Target = [u32];

    fn deref(&self) -> &[u32] {
        &self.0
    }
}

impl AsRef<[u32]> for TokenSequence {
    fn as_ref(&self) -> &[u32] {
        &self.0
    }
}

impl From<Vec<u32>> for TokenSequence {
    fn from(v: Vec<u32>) -> Self {
        TokenSequence(v)
    }
}

impl From<&[u32]> for TokenSequence {
    fn from(v: &[u32]) -> Self {
        TokenSequence(v.to_vec())
    }
}

#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    #[default]
    Monolingual,
    Parallel,
    Contamination,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Monolingual => "monolingual",
            Category::Parallel => "parallel",
            Category::Contamination => "contamination",
        }
    }

    /// Contamination documents stand in for parallel text and count toward
    /// the parallel budget of a batch.
    pub fn counts_as_parallel(self) -> bool {
        matches!(self, Category::Parallel | Category::Contamination)
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "monolingual" => Ok(Category::Monolingual),
            "parallel" => Ok(Category::Parallel),
            "contamination" => Ok(Category::Contamination),
            other => Err(Error::invalid(format!("unknown category `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusDocument {
    pub doc_id: String,
    pub tokens: TokenSequence,
    #[serde(default)]
    pub category: Category,
    #[serde(default)]
    pub lang: String,
}

impl CorpusDocument {
    pub fn new(doc_id: impl Into<String>, tokens: impl Into<TokenSequence>) -> Self {
        CorpusDocument {
            doc_id: doc_id.into(),
            tokens: tokens.into(),
            category: Category::Monolingual,
            lang: String::new(),
        }
    }

    pub fn with_category(mut self, category: Category) -> Self {
        self.category = category;
        self
    }

    pub fn with_lang(mut self, lang: impl Into<String>) -> Self {
        self.lang = lang.into();
        self
    }
}

/// An ordered (source, target) language pair, written `src-tgt`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LangPair {
    pub source: String,
    pub target: String,
}

impl LangPair {
    pub fn new(source: impl Into<String>, target: impl Into<String>) -> Self {
        LangPair {
            source: source.into(),
            target: target.into(),
        }
    }
}

impl fmt::Display for LangPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.source, self.target)
    }
}

impl FromStr for LangPair {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (src, tgt) = s.split_once('-').ok_or_else(|| {
            Error::invalid(format!("language pair `{s}` is not of the form src-tgt"))
        })?;
        if src.is_empty() || tgt.is_empty() || src == tgt {
            return Err(Error::invalid(format!("invalid language pair `{s}`")));
        }
        Ok(LangPair::new(src, tgt))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Jsonl,
    Binary,
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" | "json" => Ok(CorpusFormat::Jsonl),
            "bin" | "binary" => Ok(CorpusFormat::Binary),
            other => Err(Error::UnknownFormat(other.to_string())),
        }
    }
}

/// Shard files under `path`: the file itself, or the regular files of a
/// directory sorted by name.
pub fn list_shards(path: &Path) -> Result<Vec<PathBuf>> {
    let meta = std::fs::metadata(path).map_err(|e| Error::io(path, e))?;
    if meta.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut shards = Vec::new();
    for entry in std::fs::read_dir(path).map_err(|e| Error::io(path, e))? {
        let entry = entry.map_err(|e| Error::io(path, e))?;
        let p = entry.path();
        if p.is_file() {
            shards.push(p);
        }
    }
    shards.sort();
    Ok(shards)
}

enum ShardReader {
    Jsonl(JsonlCorpusReader),
    Binary(BinaryShardReader),
}

impl ShardReader {
    fn open(path: &Path, format: CorpusFormat) -> Result<Self> {
        Ok(match format {
            CorpusFormat::Jsonl => ShardReader::Jsonl(JsonlCorpusReader::open(path)?),
            CorpusFormat::Binary => ShardReader::Binary(BinaryShardReader::open(path)?),
        })
    }

    fn next_doc(&mut self) -> Option<Result<CorpusDocument>> {
        match self {
            ShardReader::Jsonl(r) => r.next(),
            ShardReader::Binary(r) => r.next(),
        }
    }
}

/// Streaming reader over every shard of a corpus. Holds one open shard and
/// the set of ids seen so far.
pub struct CorpusReader {
    format: CorpusFormat,
    shards: std::vec::IntoIter<PathBuf>,
    current: Option<ShardReader>,
    seen: HashSet<String>,
    failed: bool,
}

impl CorpusReader {
    pub fn open(path: &Path, format: CorpusFormat) -> Result<Self> {
        Ok(Self::from_shards(list_shards(path)?, format))
    }

    pub fn from_shards(shards: Vec<PathBuf>, format: CorpusFormat) -> Self {
        CorpusReader {
            format,
            shards: shards.into_iter(),
            current: None,
            seen: HashSet::new(),
            failed: false,
        }
    }
}

impl Iterator for CorpusReader {
    type Item = Result<CorpusDocument>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        loop {
            if self.current.is_none() {
                let shard = self.shards.next()?;
                match ShardReader::open(&shard, self.format) {
                    Ok(r) => self.current = Some(r),
                    Err(e) => {
                        self.failed = true;
                        return Some(Err(e));
                    }
                }
            }
            let reader = self.current.as_mut().expect("shard open");
            match reader.next_doc() {
                None => self.current = None,
                Some(Ok(doc)) => {
                    if !self.seen.insert(doc.doc_id.clone()) {
                        self.failed = true;
                        return Some(Err(Error::DuplicateId(doc.doc_id)));
                    }
                    return Some(Ok(doc));
                }
                Some(Err(e)) => {
                    self.failed = true;
                    return Some(Err(e));
                }
            }
        }
    }
}

/// Stream the documents of a corpus file or shard directory in order.
pub fn read_corpus(path: &Path, format: CorpusFormat) -> Result<CorpusReader> {
    CorpusReader::open(path, format)
}

/// Read one shard fully. Used by the parallel index builder.
pub fn read_shard(path: &Path, format: CorpusFormat) -> Result<Vec<CorpusDocument>> {
    let mut reader = ShardReader::open(path, format)?;
    let mut docs = Vec::new();
    while let Some(doc) = reader.next_doc() {
        docs.push(doc?);
    }
    Ok(docs)
}

/// Write documents to a single shard in the given format.
pub fn write_corpus<'a>(
    path: &Path,
    format: CorpusFormat,
    docs: impl IntoIterator<Item = &'a CorpusDocument>,
) -> Result<()> {
    match format {
        CorpusFormat::Jsonl => {
            let mut w = JsonlCorpusWriter::create(path)?;
            for d in docs {
                w.write(d)?;
            }
            w.finish()
        }
        CorpusFormat::Binary => {
            let mut w = BinaryShardWriter::create(path)?;
            for d in docs {
                w.write(d)?;
            }
            w.finish()
        }
    }
}
