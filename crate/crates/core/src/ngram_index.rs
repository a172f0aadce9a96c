//! Exact n-gram location index over a tokenized corpus.
//!
//! Every window of `n` tokens inside a document is fingerprinted with a
//! rolling polynomial hash and posted as a `(doc, offset)` location. Windows
//! never cross document boundaries. Queries verify each candidate against the
//! stored tokens, so fingerprint collisions never surface as matches.
//!
//! Fingerprint of `t[0..n]`:
//!
//! ```text
//! h = sum_i (t[i] + 1) * B^(n-1-i)   (mod 2^64),  B = 0x0000_0100_0000_01B3
//! fp = mix(h) & mask(bits)
//! ```
//!
//! where `mix` is the SplitMix64 finalizer and `mask(64)` keeps every bit.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus_io::{list_shards, read_shard, CorpusDocument, CorpusFormat};
use crate::error::{Error, Result};

pub const INDEX_MAGIC: &[u8; 4] = b"CTKX";

const HASH_BASE: u64 = 0x0000_0100_0000_01B3;

/// Scan parameters shared by the index and the matcher.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub ngram_order: usize,
    /// A field is contaminated when its overlap fraction is strictly above this.
    pub threshold: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            ngram_order: 8,
            threshold: 0.7,
        }
    }
}

impl ScanConfig {
    pub fn new(ngram_order: usize, threshold: f64) -> Result<Self> {
        let c = ScanConfig {
            ngram_order,
            threshold,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ngram_order == 0 {
            return Err(Error::Config("ngram_order must be at least 1".into()));
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(Error::Config(format!(
                "threshold must lie in (0, 1], got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexOptions {
    /// Fingerprint width in bits (1..=64). Narrow widths exist to exercise
    /// collision handling.
    pub fingerprint_bits: u32,
    pub max_postings: u64,
}

impl Default for IndexOptions {
    fn default() -> Self {
        IndexOptions {
            fingerprint_bits: 64,
            max_postings: u32::MAX as u64,
        }
    }
}

/// Compact reference to a document in an index's doc table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DocRef(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Location {
    pub doc: DocRef,
    pub offset: u32,
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mask(bits: u32) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

/// Fingerprint of a single gram, equal to what the rolling scan produces.
pub fn fingerprint(gram: &[u32], bits: u32) -> u64 {
    let h = gram.iter().fold(0u64, |h, &t| {
        h.wrapping_mul(HASH_BASE).wrapping_add(t as u64 + 1)
    });
    mix64(h) & mask(bits)
}

/// Fingerprints of every length-`n` window of `tokens`, left to right.
fn rolling_fingerprints(tokens: &[u32], n: usize, bits: u32) -> Vec<u64> {
    if tokens.len() < n {
        return Vec::new();
    }
    let top = (1..n).fold(1u64, |p, _| p.wrapping_mul(HASH_BASE));
    let m = mask(bits);
    let mut h = tokens[..n].iter().fold(0u64, |h, &t| {
        h.wrapping_mul(HASH_BASE).wrapping_add(t as u64 + 1)
    });
    let mut out = Vec::with_capacity(tokens.len() - n + 1);
    out.push(mix64(h) & m);
    for i in n..tokens.len() {
        h = h.wrapping_sub((tokens[i - n] as u64 + 1).wrapping_mul(top));
        h = h.wrapping_mul(HASH_BASE).wrapping_add(tokens[i] as u64 + 1);
        out.push(mix64(h) & m);
    }
    out
}

/// Immutable n-gram index. Holds the corpus tokens for verification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NGramIndex {
    ngram_order: usize,
    fingerprint_bits: u32,
    doc_ids: Vec<String>,
    doc_starts: Vec<u64>,
    tokens: Vec<u32>,
    keys: Vec<u64>,
    key_starts: Vec<u64>,
    postings: Vec<Location>,
}

/// Accumulates shards, then builds postings in parallel with a deterministic
/// merge (document order, then offset, within each fingerprint).
pub struct IndexBuilder {
    config: ScanConfig,
    options: IndexOptions,
    doc_ids: Vec<String>,
    seen: HashSet<String>,
    doc_starts: Vec<u64>,
    tokens: Vec<u32>,
}

impl IndexBuilder {
    pub fn new(config: ScanConfig, options: IndexOptions) -> Result<Self> {
        config.validate()?;
        if options.fingerprint_bits == 0 || options.fingerprint_bits > 64 {
            return Err(Error::Config("fingerprint_bits must lie in 1..=64".into()));
        }
        Ok(IndexBuilder {
            config,
            options,
            doc_ids: Vec::new(),
            seen: HashSet::new(),
            doc_starts: vec![0],
            tokens: Vec::new(),
        })
    }

    pub fn add(&mut self, doc: CorpusDocument) -> Result<()> {
        if !self.seen.insert(doc.doc_id.clone()) {
            return Err(Error::DuplicateId(doc.doc_id));
        }
        if self.doc_ids.len() >= u32::MAX as usize {
            return Err(Error::PostingOverflow {
                postings: self.doc_ids.len() as u64,
                limit: u32::MAX as u64,
            });
        }
        if doc.tokens.len() > u32::MAX as usize {
            return Err(Error::invalid(format!(
                "document `{}` is too long",
                doc.doc_id
            )));
        }
        self.tokens.extend_from_slice(&doc.tokens);
        self.doc_starts.push(self.tokens.len() as u64);
        self.doc_ids.push(doc.doc_id);
        Ok(())
    }

    pub fn finish(self) -> Result<NGramIndex> {
        let n = self.config.ngram_order;
        let bits = self.options.fingerprint_bits;
        let num_docs = self.doc_ids.len();
        let total: u64 = (0..num_docs)
            .map(|d| {
                let len = self.doc_starts[d + 1] - self.doc_starts[d];
                len.saturating_sub(n as u64 - 1)
            })
            .sum();
        if total > self.options.max_postings {
            return Err(Error::PostingOverflow {
                postings: total,
                limit: self.options.max_postings,
            });
        }

        let tokens = &self.tokens;
        let starts = &self.doc_starts;
        let per_doc: Vec<Vec<(u64, Location)>> = (0..num_docs)
            .into_par_iter()
            .map(|d| {
                let doc = &tokens[starts[d] as usize..starts[d + 1] as usize];
                rolling_fingerprints(doc, n, bits)
                    .into_iter()
                    .enumerate()
                    .map(|(off, fp)| {
                        (
                            fp,
                            Location {
                                doc: DocRef(d as u32),
                                offset: off as u32,
                            },
                        )
                    })
                    .collect()
            })
            .collect();

        let mut all: Vec<(u64, Location)> = Vec::with_capacity(total as usize);
        for v in per_doc {
            all.extend(v);
        }
        // stable: equal fingerprints keep document/offset order
        all.sort_by_key(|&(fp, _)| fp);

        let mut keys = Vec::new();
        let mut key_starts = Vec::new();
        let mut postings = Vec::with_capacity(all.len());
        for (i, &(fp, loc)) in all.iter().enumerate() {
            if i == 0 || all[i - 1].0 != fp {
                keys.push(fp);
                key_starts.push(i as u64);
            }
            postings.push(loc);
        }
        key_starts.push(postings.len() as u64);

        Ok(NGramIndex {
            ngram_order: n,
            fingerprint_bits: bits,
            doc_ids: self.doc_ids,
            doc_starts: self.doc_starts,
            tokens: self.tokens,
            keys,
            key_starts,
            postings,
        })
    }
}

/// Build an index from a document stream, in stream order.
pub fn build_index<I>(corpus: I, config: ScanConfig) -> Result<NGramIndex>
where
    I: IntoIterator<Item = Result<CorpusDocument>>,
{
    build_index_with(corpus, config, IndexOptions::default())
}

pub fn build_index_with<I>(
    corpus: I,
    config: ScanConfig,
    options: IndexOptions,
) -> Result<NGramIndex>
where
    I: IntoIterator<Item = Result<CorpusDocument>>,
{
    let mut b = IndexBuilder::new(config, options)?;
    for doc in corpus {
        b.add(doc?)?;
    }
    b.finish()
}

/// Build from a corpus file or shard directory, reading shards in parallel
/// and adding them in shard order.
pub fn build_index_from_path(
    path: &Path,
    format: CorpusFormat,
    config: ScanConfig,
    options: IndexOptions,
) -> Result<NGramIndex> {
    let shards = list_shards(path)?;
    let docs: Vec<Result<Vec<CorpusDocument>>> =
        shards.par_iter().map(|s| read_shard(s, format)).collect();
    let mut b = IndexBuilder::new(config, options)?;
    for shard in docs {
        for doc in shard? {
            b.add(doc)?;
        }
    }
    b.finish()
}

impl NGramIndex {
    pub fn ngram_order(&self) -> usize {
        self.ngram_order
    }

    pub fn fingerprint_bits(&self) -> u32 {
        self.fingerprint_bits
    }

    pub fn num_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn num_postings(&self) -> usize {
        self.postings.len()
    }

    pub fn num_tokens(&self) -> usize {
        self.tokens.len()
    }

    pub fn doc_refs(&self) -> impl Iterator<Item = DocRef> {
        (0..self.doc_ids.len() as u32).map(DocRef)
    }

    pub fn doc_id(&self, doc: DocRef) -> Result<&str> {
        self.doc_ids
            .get(doc.0 as usize)
            .map(String::as_str)
            .ok_or(Error::UnknownDoc(doc.0))
    }

    pub fn doc_ref(&self, doc_id: &str) -> Option<DocRef> {
        self.doc_ids
            .iter()
            .position(|d| d == doc_id)
            .map(|i| DocRef(i as u32))
    }

    pub fn doc_tokens(&self, doc: DocRef) -> Result<&[u32]> {
        let d = doc.0 as usize;
        if d >= self.doc_ids.len() {
            return Err(Error::UnknownDoc(doc.0));
        }
        Ok(&self.tokens[self.doc_starts[d] as usize..self.doc_starts[d + 1] as usize])
    }

    pub fn doc_len(&self, doc: DocRef) -> Result<usize> {
        self.doc_tokens(doc).map(<[u32]>::len)
    }

    pub fn token_at(&self, doc: DocRef, offset: usize) -> Result<u32> {
        let toks = self.doc_tokens(doc)?;
        toks.get(offset).copied().ok_or(Error::OutOfRange {
            doc: doc.0,
            offset,
            len: toks.len(),
        })
    }

    fn bucket(&self, fp: u64) -> &[Location] {
        match self.keys.binary_search(&fp) {
            Ok(k) => &self.postings[self.key_starts[k] as usize..self.key_starts[k + 1] as usize],
            Err(_) => &[],
        }
    }

    /// Number of postings sharing `gram`'s fingerprint, before verification.
    pub fn candidate_count(&self, gram: &[u32]) -> usize {
        self.bucket(fingerprint(gram, self.fingerprint_bits)).len()
    }

    /// All locations where `gram` occurs, in (doc, offset) order.
    pub fn query(&self, gram: &[u32]) -> Result<Vec<Location>> {
        if gram.len() != self.ngram_order {
            return Err(Error::GramLength {
                found: gram.len(),
                expected: self.ngram_order,
            });
        }
        let n = self.ngram_order;
        Ok(self
            .bucket(fingerprint(gram, self.fingerprint_bits))
            .iter()
            .copied()
            .filter(|loc| {
                let start = self.doc_starts[loc.doc.0 as usize] as usize + loc.offset as usize;
                &self.tokens[start..start + n] == gram
            })
            .collect())
    }

    /// All occurrences of an arbitrary non-empty pattern. Patterns of at least
    /// `n` tokens go through the index; shorter ones fall back to a linear scan.
    pub fn find_occurrences(&self, pattern: &[u32]) -> Result<Vec<Location>> {
        if pattern.is_empty() {
            return Err(Error::invalid("empty pattern"));
        }
        let n = self.ngram_order;
        if pattern.len() >= n {
            let mut out = Vec::new();
            for loc in self.query(&pattern[..n])? {
                let doc = self.doc_tokens(loc.doc)?;
                let off = loc.offset as usize;
                if doc.len() - off >= pattern.len() && &doc[off..off + pattern.len()] == pattern {
                    out.push(loc);
                }
            }
            return Ok(out);
        }
        let mut out = Vec::new();
        for d in self.doc_refs() {
            let doc = self.doc_tokens(d)?;
            if doc.len() < pattern.len() {
                continue;
            }
            for (off, w) in doc.windows(pattern.len()).enumerate() {
                if w == pattern {
                    out.push(Location {
                        doc: d,
                        offset: off as u32,
                    });
                }
            }
        }
        Ok(out)
    }

    /// Serialize to the `CTKX` layout. Output depends only on index content.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(INDEX_MAGIC)?;
        w.write_all(&(self.ngram_order as u32).to_le_bytes())?;
        w.write_all(&(self.doc_ids.len() as u32).to_le_bytes())?;
        w.write_all(&(self.postings.len() as u64).to_le_bytes())?;
        w.write_all(&(self.keys.len() as u64).to_le_bytes())?;
        w.write_all(&self.fingerprint_bits.to_le_bytes())?;
        for (d, id) in self.doc_ids.iter().enumerate() {
            let toks = &self.tokens[self.doc_starts[d] as usize..self.doc_starts[d + 1] as usize];
            w.write_all(&(id.len() as u32).to_le_bytes())?;
            w.write_all(id.as_bytes())?;
            w.write_all(&(toks.len() as u32).to_le_bytes())?;
            for t in toks {
                w.write_all(&t.to_le_bytes())?;
            }
        }
        for (k, fp) in self.keys.iter().enumerate() {
            let block =
                &self.postings[self.key_starts[k] as usize..self.key_starts[k + 1] as usize];
            w.write_all(&fp.to_le_bytes())?;
            w.write_all(&(block.len() as u32).to_le_bytes())?;
            for loc in block {
                w.write_all(&loc.doc.0.to_le_bytes())?;
                w.write_all(&loc.offset.to_le_bytes())?;
            }
        }
        w.flush()
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        IndexDecoder {
            r,
            path: Path::new("<index>"),
        }
        .decode()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        IndexDecoder {
            r: std::io::BufReader::new(file),
            path,
        }
        .decode()
    }
}

struct IndexDecoder<'p, R> {
    r: R,
    path: &'p Path,
}

impl<R: Read> IndexDecoder<'_, R> {
    fn bad(&self, message: impl Into<String>) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            message: message.into(),
        }
    }

    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.r
            .read_exact(&mut b)
            .map_err(|e| Error::io(self.path, e))?;
        Ok(b)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    fn decode(mut self) -> Result<NGramIndex> {
        if &self.bytes::<4>()? != INDEX_MAGIC {
            return Err(self.bad("bad magic"));
        }
        let n = self.u32()? as usize;
        let num_docs = self.u32()? as usize;
        let num_postings = self.u64()?;
        let num_keys = self.u64()?;
        let bits = self.u32()?;
        if n == 0 || bits == 0 || bits > 64 {
            return Err(self.bad("invalid header"));
        }
        let mut doc_ids = Vec::with_capacity(num_docs);
        let mut doc_starts = vec![0u64];
        let mut tokens = Vec::new();
        for _ in 0..num_docs {
            let id_len = self.u32()? as usize;
            let mut id = vec![0u8; id_len];
            self.r
                .read_exact(&mut id)
                .map_err(|e| Error::io(self.path, e))?;
            doc_ids.push(String::from_utf8(id).map_err(|_| self.bad("doc id is not UTF-8"))?);
            let len = self.u32()?;
            for _ in 0..len {
                tokens.push(self.u32()?);
            }
            doc_starts.push(tokens.len() as u64);
        }
        let mut keys = Vec::with_capacity(num_keys as usize);
        let mut key_starts = Vec::with_capacity(num_keys as usize + 1);
        let mut postings = Vec::with_capacity(num_postings as usize);
        for _ in 0..num_keys {
            let fp = self.u64()?;
            if keys.last().is_some_and(|&last| last >= fp) {
                return Err(self.bad("fingerprint blocks are not sorted"));
            }
            keys.push(fp);
            key_starts.push(postings.len() as u64);
            let count = self.u32()?;
            for _ in 0..count {
                let doc = self.u32()?;
                let offset = self.u32()?;
                let d = doc as usize;
                if d >= num_docs || offset as u64 + n as u64 > doc_starts[d + 1] - doc_starts[d] {
                    return Err(self.bad("posting out of range"));
                }
                postings.push(Location {
                    doc: DocRef(doc),
                    offset,
                });
            }
        }
        key_starts.push(postings.len() as u64);
        if postings.len() as u64 != num_postings {
            return Err(self.bad("posting count does not match header"));
        }
        Ok(NGramIndex {
            ngram_order: n,
            fingerprint_bits: bits,
            doc_ids,
            doc_starts,
            tokens,
            keys,
            key_starts,
            postings,
        })
    }
}
