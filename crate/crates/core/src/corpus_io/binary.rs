//! Flat binary shard: `CTK1`, u32 doc count, then per document a u32 id
//! length, the id bytes, a u32 token count and the tokens. All integers are
//! little-endian. Only ids and tokens are stored; documents read back carry
//! the default category and an empty language tag.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use super::{CorpusDocument, TokenSequence};
use crate::error::{Error, Result};

pub const BINARY_MAGIC: &[u8; 4] = b"CTK1";

pub struct BinaryShardReader {
    path: PathBuf,
    input: BufReader<File>,
    remaining: u32,
}

impl BinaryShardReader {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut input = BufReader::new(file);
        let mut magic = [0u8; 4];
        input
            .read_exact(&mut magic)
            .map_err(|e| Error::io(path, e))?;
        if &magic != BINARY_MAGIC {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: format!("bad magic {magic:?}"),
            });
        }
        let mut reader = BinaryShardReader {
            path: path.to_path_buf(),
            input,
            remaining: 0,
        };
        reader.remaining = reader.read_u32()?;
        Ok(reader)
    }

    pub fn doc_count(&self) -> u32 {
        self.remaining
    }

    fn read_u32(&mut self) -> Result<u32> {
        let mut buf = [0u8; 4];
        self.input
            .read_exact(&mut buf)
            .map_err(|e| Error::io(&self.path, e))?;
        Ok(u32::from_le_bytes(buf))
    }

    fn read_doc(&mut self) -> Result<CorpusDocument> {
        let id_len = self.read_u32()? as usize;
        let mut id = vec![0u8; id_len];
        self.input
            .read_exact(&mut id)
            .map_err(|e| Error::io(&self.path, e))?;
        let doc_id = String::from_utf8(id).map_err(|_| Error::Format {
            path: self.path.clone(),
            message: "document id is not valid UTF-8".into(),
        })?;
        let n = self.read_u32()? as usize;
        let mut raw = vec![0u8; n * 4];
        self.input
            .read_exact(&mut raw)
            .map_err(|e| Error::io(&self.path, e))?;
        let tokens = raw
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(CorpusDocument::new(doc_id, TokenSequence(tokens)))
    }
}

impl Iterator for BinaryShardReader {
    type Item = Result<CorpusDocument>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let doc = self.read_doc();
        if doc.is_err() {
            self.remaining = 0;
        }
        Some(doc)
    }
}

/// Writes a binary shard; the document count in the header is patched on
/// [`finish`](Self::finish).
pub struct BinaryShardWriter<W: Write + Seek = BufWriter<File>> {
    path: PathBuf,
    out: W,
    count: u32,
}

impl BinaryShardWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Self::new(BufWriter::new(file), path)
    }
}

impl<W: Write + Seek> BinaryShardWriter<W> {
    pub fn new(mut out: W, path: &Path) -> Result<Self> {
        out.write_all(BINARY_MAGIC)
            .and_then(|_| out.write_all(&0u32.to_le_bytes()))
            .map_err(|e| Error::io(path, e))?;
        Ok(BinaryShardWriter {
            path: path.to_path_buf(),
            out,
            count: 0,
        })
    }

    pub fn write(&mut self, doc: &CorpusDocument) -> Result<()> {
        let id = doc.doc_id.as_bytes();
        let id_len = u32::try_from(id.len()).map_err(|_| Error::invalid("document id too long"))?;
        let n = u32::try_from(doc.tokens.len()).map_err(|_| Error::invalid("document too long"))?;
        self.count = self
            .count
            .checked_add(1)
            .ok_or_else(|| Error::invalid("binary shard holds at most u32::MAX documents"))?;
        let mut buf = Vec::with_capacity(8 + id.len() + 4 * doc.tokens.len());
        buf.extend_from_slice(&id_len.to_le_bytes());
        buf.extend_from_slice(id);
        buf.extend_from_slice(&n.to_le_bytes());
        for &t in doc.tokens.iter() {
            buf.extend_from_slice(&t.to_le_bytes());
        }
        self.out
            .write_all(&buf)
            .map_err(|e| Error::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        let path = self.path.clone();
        let io = |e| Error::io(&path, e);
        self.out.seek(SeekFrom::Start(4)).map_err(io)?;
        self.out.write_all(&self.count.to_le_bytes()).map_err(io)?;
        self.out.seek(SeekFrom::End(0)).map_err(io)?;
        self.out.flush().map_err(io)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus_io::{read_corpus, write_corpus, CorpusFormat};

    #[test]
    fn layout_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.bin");
        let docs = vec![CorpusDocument::new("ab", vec![1, 256])];
        write_corpus(&p, CorpusFormat::Binary, &docs).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        let expected: Vec<u8> = [
            &b"CTK1"[..],
            &1u32.to_le_bytes(),
            &2u32.to_le_bytes(),
            b"ab",
            &2u32.to_le_bytes(),
            &1u32.to_le_bytes(),
            &256u32.to_le_bytes(),
        ]
        .concat();
        assert_eq!(bytes, expected);
    }

    #[test]
    fn round_trip_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.bin");
        let docs: Vec<_> = (0..5)
            .map(|i| CorpusDocument::new(format!("d{i}"), (0..i * 3).collect::<Vec<u32>>()))
            .collect();
        write_corpus(&p, CorpusFormat::Binary, &docs).unwrap();
        let back: Vec<_> = read_corpus(&p, CorpusFormat::Binary)
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(back, docs);

        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 2]).unwrap();
        let res: Result<Vec<_>> = read_corpus(&p, CorpusFormat::Binary).unwrap().collect();
        assert!(res.is_err());
    }

    #[test]
    fn bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.bin");
        std::fs::write(&p, b"NOPE\0\0\0\0").unwrap();
        let mut r = read_corpus(&p, CorpusFormat::Binary).unwrap();
        assert!(matches!(r.next(), Some(Err(Error::Format { .. }))));
    }
}
