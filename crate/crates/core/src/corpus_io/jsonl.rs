use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Lines, Write};
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use super::{Category, CorpusDocument, TokenSequence};
use crate::error::{Error, Result};

/// Decoding context for one line of a JSON-lines file.
pub(crate) struct RecordCtx<'a> {
    pub shard: &'a Path,
    pub line: usize,
}

impl RecordCtx<'_> {
    pub fn err(&self, field: &str, message: impl Into<String>) -> Error {
        Error::Record {
            shard: self.shard.to_path_buf(),
            line: self.line,
            field: field.to_string(),
            message: message.into(),
        }
    }

    pub fn parse_object(&self, text: &str) -> Result<Map<String, Value>> {
        match serde_json::from_str::<Value>(text) {
            Ok(Value::Object(m)) => Ok(m),
            Ok(_) => Err(self.err("<record>", "record is not a JSON object")),
            Err(e) => Err(self.err("<record>", e.to_string())),
        }
    }

    pub fn string(&self, obj: &Map<String, Value>, field: &str) -> Result<String> {
        match obj.get(field) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(self.err(field, "expected a string")),
            None => Err(self.err(field, "missing field")),
        }
    }

    pub fn opt_string(&self, obj: &Map<String, Value>, field: &str) -> Result<Option<String>> {
        match obj.get(field) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(self.err(field, "expected a string")),
        }
    }

    pub fn uint(&self, obj: &Map<String, Value>, field: &str) -> Result<u64> {
        match obj.get(field) {
            Some(v) => v
                .as_u64()
                .ok_or_else(|| self.err(field, "expected a non-negative integer")),
            None => Err(self.err(field, "missing field")),
        }
    }

    pub fn tokens(&self, obj: &Map<String, Value>, field: &str) -> Result<TokenSequence> {
        let arr = match obj.get(field) {
            Some(Value::Array(a)) => a,
            Some(_) => return Err(self.err(field, "expected an array of token ids")),
            None => return Err(self.err(field, "missing field")),
        };
        let mut out = Vec::with_capacity(arr.len());
        for (i, v) in arr.iter().enumerate() {
            let t = v
                .as_u64()
                .filter(|&t| t <= u32::MAX as u64)
                .ok_or_else(|| self.err(field, format!("element {i} is not a u32 token id")))?;
            out.push(t as u32);
        }
        Ok(TokenSequence(out))
    }

    pub fn document(&self, obj: &Map<String, Value>) -> Result<CorpusDocument> {
        let doc_id = self.string(obj, "doc_id")?;
        let tokens = self.tokens(obj, "tokens")?;
        let category = match self.opt_string(obj, "category")? {
            None => Category::Monolingual,
            Some(s) => s
                .parse()
                .map_err(|_| self.err("category", format!("unknown category `{s}`")))?,
        };
        let lang = self.opt_string(obj, "lang")?.unwrap_or_default();
        Ok(CorpusDocument {
            doc_id,
            tokens,
            category,
            lang,
        })
    }
}

/// Iterates non-blank lines with their 1-based line numbers.
pub(crate) struct NumberedLines {
    path: PathBuf,
    lines: Lines<BufReader<File>>,
    line: usize,
}

impl NumberedLines {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(NumberedLines {
            path: path.to_path_buf(),
            lines: BufReader::new(file).lines(),
            line: 0,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl Iterator for NumberedLines {
    type Item = Result<(usize, String)>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let next = self.lines.next()?;
            self.line += 1;
            match next {
                Err(e) => return Some(Err(Error::io(&self.path, e))),
                Ok(l) if l.trim().is_empty() => continue,
                Ok(l) => return Some(Ok((self.line, l))),
            }
        }
    }
}

pub struct JsonlCorpusReader {
    lines: NumberedLines,
}

impl JsonlCorpusReader {
    pub fn open(path: &Path) -> Result<Self> {
        Ok(JsonlCorpusReader {
            lines: NumberedLines::open(path)?,
        })
    }
}

impl Iterator for JsonlCorpusReader {
    type Item = Result<CorpusDocument>;

    fn next(&mut self) -> Option<Self::Item> {
        let (line, text) = match self.lines.next()? {
            Ok(x) => x,
            Err(e) => return Some(Err(e)),
        };
        let ctx = RecordCtx {
            shard: self.lines.path(),
            line,
        };
        Some(ctx.parse_object(&text).and_then(|obj| ctx.document(&obj)))
    }
}

pub struct JsonlCorpusWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl JsonlCorpusWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(JsonlCorpusWriter {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    pub fn write(&mut self, doc: &CorpusDocument) -> Result<()> {
        serde_json::to_writer(&mut self.out, doc)?;
        self.out
            .write_all(b"\n")
            .map_err(|e| Error::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus_io::{read_corpus, CorpusFormat};

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn single_record() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "a.jsonl",
            "{\"doc_id\":\"d0\",\"tokens\":[1,2,3]}\n",
        );
        let docs: Vec<_> = read_corpus(&p, CorpusFormat::Jsonl)
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(docs.len(), 1);
        assert_eq!(docs[0].tokens.as_slice(), &[1, 2, 3]);
        assert_eq!(docs[0].category, Category::Monolingual);
    }

    #[test]
    fn empty_file_is_empty_stream() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.jsonl", "");
        assert_eq!(read_corpus(&p, CorpusFormat::Jsonl).unwrap().count(), 0);
    }

    #[test]
    fn malformed_record_names_shard_line_and_field() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "bad.jsonl",
            "{\"doc_id\":\"d0\",\"tokens\":[1]}\n{\"doc_id\":\"d1\",\"tokens\":[1,-2]}\n",
        );
        let err = read_corpus(&p, CorpusFormat::Jsonl)
            .unwrap()
            .collect::<Result<Vec<_>>>()
            .unwrap_err();
        match err {
            Error::Record {
                shard, line, field, ..
            } => {
                assert!(shard.ends_with("bad.jsonl"));
                assert_eq!(line, 2);
                assert_eq!(field, "tokens");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_category_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "a.jsonl",
            "{\"doc_id\":\"d0\",\"tokens\":[],\"category\":\"web\"}\n",
        );
        let err = read_corpus(&p, CorpusFormat::Jsonl)
            .unwrap()
            .next()
            .unwrap()
            .unwrap_err();
        assert!(err.to_string().contains("category"), "{err}");
    }

    #[test]
    fn duplicate_id_across_shards() {
        let dir = tempfile::tempdir().unwrap();
        write(
            dir.path(),
            "00.jsonl",
            "{\"doc_id\":\"d0\",\"tokens\":[1]}\n",
        );
        write(
            dir.path(),
            "01.jsonl",
            "{\"doc_id\":\"d0\",\"tokens\":[2]}\n",
        );
        let err = read_corpus(dir.path(), CorpusFormat::Jsonl)
            .unwrap()
            .collect::<Result<Vec<_>>>()
            .unwrap_err();
        assert!(matches!(err, Error::DuplicateId(ref id) if id == "d0"));
    }
}
