use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::jsonl::{NumberedLines, RecordCtx};
use super::{LangPair, TokenSequence};
use crate::error::{Error, Result};

/// One evaluation example. Tokens are used for matching; text is carried
/// verbatim for rendering contamination documents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestExample {
    pub example_id: String,
    pub lang_pair: LangPair,
    pub source_text: String,
    pub target_text: String,
    pub source_tokens: TokenSequence,
    pub target_tokens: TokenSequence,
}

#[derive(Serialize)]
struct TestRecord<'a> {
    example_id: &'a str,
    src_lang: &'a str,
    tgt_lang: &'a str,
    source_text: &'a str,
    target_text: &'a str,
    source_tokens: &'a TokenSequence,
    target_tokens: &'a TokenSequence,
}

impl TestExample {
    pub fn validate(&self) -> Result<()> {
        if self.source_tokens.is_empty() || self.target_tokens.is_empty() {
            return Err(Error::invalid(format!(
                "example `{}` has an empty token field",
                self.example_id
            )));
        }
        if self.lang_pair.source == self.lang_pair.target {
            return Err(Error::invalid(format!(
                "example `{}` has identical source and target languages",
                self.example_id
            )));
        }
        Ok(())
    }

    /// The same example with source and target fields exchanged.
    pub fn swapped(&self) -> TestExample {
        TestExample {
            example_id: self.example_id.clone(),
            lang_pair: LangPair::new(&self.lang_pair.target, &self.lang_pair.source),
            source_text: self.target_text.clone(),
            target_text: self.source_text.clone(),
            source_tokens: self.target_tokens.clone(),
            target_tokens: self.source_tokens.clone(),
        }
    }

    fn from_record(ctx: &RecordCtx<'_>, line: &str) -> Result<Self> {
        let obj = ctx.parse_object(line)?;
        let example_id = ctx.string(&obj, "example_id")?;
        let src_lang = ctx.string(&obj, "src_lang")?;
        let tgt_lang = ctx.string(&obj, "tgt_lang")?;
        let source_text = ctx.string(&obj, "source_text")?;
        let target_text = ctx.string(&obj, "target_text")?;
        let source_tokens = ctx.tokens(&obj, "source_tokens")?;
        let target_tokens = ctx.tokens(&obj, "target_tokens")?;
        if source_tokens.is_empty() {
            return Err(ctx.err("source_tokens", "token field is empty"));
        }
        if target_tokens.is_empty() {
            return Err(ctx.err("target_tokens", "token field is empty"));
        }
        if src_lang == tgt_lang {
            return Err(ctx.err("tgt_lang", "target language equals source language"));
        }
        Ok(TestExample {
            example_id,
            lang_pair: LangPair::new(src_lang, tgt_lang),
            source_text,
            target_text,
            source_tokens,
            target_tokens,
        })
    }
}

pub fn read_testset(path: &Path) -> Result<Vec<TestExample>> {
    let mut lines = NumberedLines::open(path)?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    while let Some(next) = lines.next() {
        let (line, text) = next?;
        let ctx = RecordCtx {
            shard: lines.path(),
            line,
        };
        let ex = TestExample::from_record(&ctx, &text)?;
        if !seen.insert(ex.example_id.clone()) {
            return Err(Error::DuplicateId(ex.example_id));
        }
        out.push(ex);
    }
    Ok(out)
}

pub fn write_testset<'a>(
    path: &Path,
    examples: impl IntoIterator<Item = &'a TestExample>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for ex in examples {
        let rec = TestRecord {
            example_id: &ex.example_id,
            src_lang: &ex.lang_pair.source,
            tgt_lang: &ex.lang_pair.target,
            source_text: &ex.source_text,
            target_text: &ex.target_text,
            source_tokens: &ex.source_tokens,
            target_tokens: &ex.target_tokens,
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn group_by_lang_pair(examples: &[TestExample]) -> BTreeMap<LangPair, Vec<&TestExample>> {
    let mut groups: BTreeMap<LangPair, Vec<&TestExample>> = BTreeMap::new();
    for ex in examples {
        groups.entry(ex.lang_pair.clone()).or_default().push(ex);
    }
    groups
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, src: &str, tgt: &str, st: &str, tt: &str) -> String {
        format!(
            "{{\"example_id\":\"{id}\",\"src_lang\":\"{src}\",\"tgt_lang\":\"{tgt}\",\
             \"source_text\":\"s\",\"target_text\":\"t\",\"source_tokens\":{st},\"target_tokens\":{tt}}}"
        )
    }

    #[test]
    fn reads_one_example() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.jsonl");
        std::fs::write(&p, record("e0", "de", "en", "[5,6]", "[7,8]")).unwrap();
        let ts = read_testset(&p).unwrap();
        assert_eq!(ts.len(), 1);
        assert_eq!(ts[0].source_tokens.as_slice(), &[5, 6]);
        assert_eq!(ts[0].target_tokens.as_slice(), &[7, 8]);
    }

    #[test]
    fn missing_target_tokens_names_field() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.jsonl");
        std::fs::write(
            &p,
            "{\"example_id\":\"e0\",\"src_lang\":\"de\",\"tgt_lang\":\"en\",\"source_text\":\"s\",\"target_text\":\"t\",\"source_tokens\":[1]}",
        )
        .unwrap();
        let err = read_testset(&p).unwrap_err();
        assert!(
            matches!(err, Error::Record { ref field, line: 1, .. } if field == "target_tokens"),
            "{err}"
        );
    }

    #[test]
    fn empty_tokens_and_duplicates_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.jsonl");
        std::fs::write(&p, record("e0", "de", "en", "[]", "[1]")).unwrap();
        assert!(
            matches!(read_testset(&p).unwrap_err(), Error::Record { ref field, .. } if field == "source_tokens")
        );

        let body = format!(
            "{}\n{}\n",
            record("e0", "de", "en", "[1]", "[1]"),
            record("e0", "en", "de", "[1]", "[1]")
        );
        std::fs::write(&p, body).unwrap();
        assert!(matches!(
            read_testset(&p).unwrap_err(),
            Error::DuplicateId(_)
        ));

        std::fs::write(&p, record("e0", "de", "de", "[1]", "[1]")).unwrap();
        assert!(read_testset(&p).is_err());
    }

    #[test]
    fn wmt_style_fixture_groups_by_pair() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.jsonl");
        let mut body = String::new();
        for i in 0..20 {
            let (s, t) = if i % 4 == 0 {
                ("en", "de")
            } else {
                ("de", "en")
            };
            body.push_str(&record(&format!("e{i}"), s, t, "[1,2]", "[3]"));
            body.push('\n');
        }
        std::fs::write(&p, body).unwrap();
        let ts = read_testset(&p).unwrap();
        assert_eq!(ts.len(), 20);
        let groups = group_by_lang_pair(&ts);
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[&LangPair::new("en", "de")].len(), 5);
        assert_eq!(groups[&LangPair::new("de", "en")].len(), 15);
        assert_eq!(ts[3].example_id, "e3");
    }

    #[test]
    fn write_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.jsonl");
        let ex = TestExample {
            example_id: "x".into(),
            lang_pair: LangPair::new("de", "en"),
            source_text: "Diego \"Cocca\"\n".into(),
            target_text: "ü".into(),
            source_tokens: vec![1, 2].into(),
            target_tokens: vec![3].into(),
        };
        write_testset(&p, [&ex]).unwrap();
        assert_eq!(read_testset(&p).unwrap(), vec![ex]);
    }
}
