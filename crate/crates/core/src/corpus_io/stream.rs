use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::jsonl::{NumberedLines, RecordCtx};
use super::CorpusDocument;
use crate::error::{Error, Result};

/// Training batches, one fixed-size list of document slots per step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchStream {
    pub batch_size: usize,
    pub steps: Vec<Vec<CorpusDocument>>,
}

/// One line of a batch-stream file.
#[derive(Debug, Serialize, Deserialize)]
pub struct SlotRecord {
    pub step: usize,
    pub slot: usize,
    pub doc: CorpusDocument,
}

impl BatchStream {
    pub fn new(batch_size: usize, steps: Vec<Vec<CorpusDocument>>) -> Result<Self> {
        let s = BatchStream { batch_size, steps };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        for (step, batch) in self.steps.iter().enumerate() {
            if batch.len() != self.batch_size {
                return Err(Error::BatchSize {
                    step,
                    found: batch.len(),
                    expected: self.batch_size,
                });
            }
        }
        Ok(())
    }

    pub fn num_steps(&self) -> usize {
        self.steps.len()
    }

    /// Slots of `step` that hold parallel-budget documents.
    pub fn parallel_slots(&self, step: usize) -> Vec<usize> {
        self.steps[step]
            .iter()
            .enumerate()
            .filter(|(_, d)| d.category.counts_as_parallel())
            .map(|(i, _)| i)
            .collect()
    }
}

pub fn write_stream(stream: &BatchStream, path: &Path) -> Result<()> {
    stream.validate()?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    #[derive(Serialize)]
    struct Ref<'a> {
        step: usize,
        slot: usize,
        doc: &'a CorpusDocument,
    }
    for (step, batch) in stream.steps.iter().enumerate() {
        for (slot, doc) in batch.iter().enumerate() {
            serde_json::to_writer(&mut out, &Ref { step, slot, doc })?;
            out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Read a batch stream. Records may appear in any order but must cover a
/// dense `steps × batch_size` grid exactly once.
pub fn read_stream(path: &Path) -> Result<BatchStream> {
    let mut lines = NumberedLines::open(path)?;
    let mut cells: BTreeMap<(usize, usize), CorpusDocument> = BTreeMap::new();
    while let Some(next) = lines.next() {
        let (line, text) = next?;
        let ctx = RecordCtx {
            shard: lines.path(),
            line,
        };
        let obj = ctx.parse_object(&text)?;
        let step = ctx.uint(&obj, "step")? as usize;
        let slot = ctx.uint(&obj, "slot")? as usize;
        let doc = match obj.get("doc") {
            Some(serde_json::Value::Object(d)) => ctx.document(d)?,
            Some(_) => return Err(ctx.err("doc", "expected an object")),
            None => return Err(ctx.err("doc", "missing field")),
        };
        if cells.insert((step, slot), doc).is_some() {
            return Err(ctx.err(
                "slot",
                format!("duplicate record for step {step} slot {slot}"),
            ));
        }
    }
    if cells.is_empty() {
        return Err(Error::invalid(format!(
            "{}: empty batch stream",
            path.display()
        )));
    }
    let num_steps = cells.keys().map(|&(s, _)| s).max().unwrap_or(0) + 1;
    let mut steps: Vec<Vec<CorpusDocument>> = vec![Vec::new(); num_steps];
    for ((step, slot), doc) in cells {
        if slot != steps[step].len() {
            return Err(Error::Mismatch(format!(
                "step {step} is missing slot {}",
                steps[step].len()
            )));
        }
        steps[step].push(doc);
    }
    let batch_size = steps.iter().map(Vec::len).max().unwrap_or(0);
    BatchStream::new(batch_size, steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus_io::Category;

    fn doc(step: usize, slot: usize) -> CorpusDocument {
        CorpusDocument::new(format!("s{step}-{slot}"), vec![step as u32, slot as u32])
            .with_category(if slot == 0 {
                Category::Parallel
            } else {
                Category::Monolingual
            })
            .with_lang("en")
    }

    #[test]
    fn two_steps_of_four() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.jsonl");
        let s = BatchStream::new(
            4,
            (0..2)
                .map(|st| (0..4).map(|sl| doc(st, sl)).collect())
                .collect(),
        )
        .unwrap();
        write_stream(&s, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 8);
        let first: serde_json::Value = serde_json::from_str(text.lines().nth(5).unwrap()).unwrap();
        assert_eq!(first["step"], 1);
        assert_eq!(first["slot"], 1);
        assert_eq!(read_stream(&p).unwrap(), s);
        assert_eq!(s.parallel_slots(1), vec![0]);
    }

    #[test]
    fn short_batch_rejected_on_write() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.jsonl");
        let s = BatchStream {
            batch_size: 4,
            steps: vec![
                (0..4).map(|sl| doc(0, sl)).collect(),
                (0..3).map(|sl| doc(1, sl)).collect(),
            ],
        };
        let err = write_stream(&s, &p).unwrap_err();
        assert!(matches!(
            err,
            Error::BatchSize {
                step: 1,
                found: 3,
                expected: 4
            }
        ));
    }

    #[test]
    fn gaps_are_rejected_on_read() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.jsonl");
        std::fs::write(
            &p,
            "{\"step\":0,\"slot\":0,\"doc\":{\"doc_id\":\"a\",\"tokens\":[]}}\n{\"step\":0,\"slot\":2,\"doc\":{\"doc_id\":\"b\",\"tokens\":[]}}\n",
        )
        .unwrap();
        assert!(read_stream(&p).is_err());
    }
}
