use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One pool document. Serialized as a single JSON Lines record.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub token_count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

#[derive(Deserialize)]
struct RawDocument {
    id: String,
    text: String,
    #[serde(default)]
    token_count: Option<u64>,
    #[serde(default)]
    source: Option<String>,
}

pub trait TokenCounter: Send + Sync {
    fn count(&self, text: &str) -> u64;
}

/// Counts whitespace-separated tokens.
#[derive(Clone, Copy, Debug, Default)]
pub struct WhitespaceCounter;

impl TokenCounter for WhitespaceCounter {
    fn count(&self, text: &str) -> u64 {
        text.split_whitespace().count() as u64
    }
}

#[derive(Clone)]
pub struct IngestOptions {
    pub counter: Arc<dyn TokenCounter>,
    /// Recount every document. When false, an ingested `token_count` is kept
    /// verbatim and the counter only fills missing values.
    pub recount: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            counter: Arc::new(WhitespaceCounter),
            recount: false,
        }
    }
}

impl std::fmt::Debug for IngestOptions {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("IngestOptions")
            .field("recount", &self.recount)
            .finish_non_exhaustive()
    }
}

/// Streaming JSON Lines document reader. Rejects malformed lines and
/// duplicate ids, reporting the 1-based line number.
pub struct DocumentReader<R> {
    lines: std::io::Lines<R>,
    line: usize,
    seen: HashSet<String>,
    opts: IngestOptions,
    name: String,
    failed: bool,
}

impl<R: BufRead> DocumentReader<R> {
    pub fn new(reader: R, name: impl Into<String>, opts: IngestOptions) -> Self {
        DocumentReader {
            lines: reader.lines(),
            line: 0,
            seen: HashSet::new(),
            opts,
            name: name.into(),
            failed: false,
        }
    }

    fn parse(&mut self, line: &str) -> Result<Document> {
        let raw: RawDocument = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: self.name.clone(),
            line: self.line,
            message: e.to_string(),
        })?;
        if !self.seen.insert(raw.id.clone()) {
            return Err(Error::DuplicateId {
                id: raw.id,
                line: self.line,
            });
        }
        let token_count = match raw.token_count {
            Some(n) if !self.opts.recount => n,
            _ => self.opts.counter.count(&raw.text),
        };
        Ok(Document {
            id: raw.id,
            text: raw.text,
            token_count,
            source: raw.source,
        })
    }
}

impl<R: BufRead> Iterator for DocumentReader<R> {
    type Item = Result<Document>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => {
                    self.failed = true;
                    return Some(Err(e.into()));
                }
            };
            self.line += 1;
            if line.trim().is_empty() {
                continue;
            }
            let doc = self.parse(&line);
            self.failed = doc.is_err();
            return Some(doc);
        }
    }
}

pub fn ingest_documents(
    path: impl AsRef<Path>,
    opts: IngestOptions,
) -> Result<DocumentReader<BufReader<File>>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    Ok(DocumentReader::new(
        BufReader::new(file),
        path.display().to_string(),
        opts,
    ))
}

/// Reads a whole document file into memory.
pub fn read_documents(path: impl AsRef<Path>, opts: IngestOptions) -> Result<Vec<Document>> {
    ingest_documents(path, opts)?.collect()
}

pub fn write_documents<'a, W: Write>(
    mut out: W,
    docs: impl IntoIterator<Item = &'a Document>,
) -> Result<()> {
    for doc in docs {
        serde_json::to_writer(&mut out, doc)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
