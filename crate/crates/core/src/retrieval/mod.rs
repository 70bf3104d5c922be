//! Document corpus handling and retrieval: lexical BM25 search, embedding
//! search, per-plan context assembly under a document budget, and
//! diversity-aware reranking.

pub mod context;
pub mod dense;
pub mod index;
pub mod mmr;

pub use context::{allocate_budget, assemble_context, ContextDoc, RetrievedContext};
pub use dense::DenseIndex;
pub use index::{build_index, Bm25Params, Index};
pub use mmr::{mmr_rerank, MmrRetriever};

use std::collections::HashSet;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One searchable document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    #[serde(rename = "text")]
    pub body: String,
}

impl Document {
    pub fn new(id: impl Into<String>, body: impl Into<String>) -> Self {
        Document { id: id.into(), body: body.into() }
    }

    /// Whitespace-separated word count; the unit of the ingestion length filter.
    pub fn word_count(&self) -> usize {
        self.body.split_whitespace().count()
    }
}

/// A filtered document collection ready for indexing.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub documents: Vec<Document>,
    /// Documents with fewer words than this were dropped at ingestion.
    pub min_words: usize,
    /// How many input documents the length filter removed.
    pub dropped: usize,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }
}

/// Build a [`Corpus`], dropping documents with fewer than `min_words` words.
/// Duplicate ids are an error.
pub fn ingest_corpus<I>(docs: I, min_words: usize) -> Result<Corpus>
where
    I: IntoIterator<Item = Document>,
{
    let mut seen = HashSet::new();
    let mut documents = Vec::new();
    let mut dropped = 0usize;
    for doc in docs {
        if !seen.insert(doc.id.clone()) {
            return Err(Error::DuplicateId(doc.id));
        }
        if doc.word_count() < min_words {
            dropped += 1;
            continue;
        }
        documents.push(doc);
    }
    Ok(Corpus { documents, min_words, dropped })
}

/// Read a corpus from a JSON-lines file of `{"id": ..., "text": ...}`
/// records, applying the length filter. Blank lines are skipped.
pub fn read_corpus_jsonl(path: &Path, min_words: usize) -> Result<Corpus> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = std::io::BufReader::new(file);
    let mut docs = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(&line).map_err(|e| {
            Error::format(path, format!("line {}: {e}", lineno + 1))
        })?;
        docs.push(doc);
    }
    ingest_corpus(docs, min_words)
}

/// Lowercase alphanumeric tokens. The single tokenization convention shared
/// by the BM25 index, term-frequency similarity, and hashed embeddings.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Anything that can search documents by free-text query.
///
/// `retrieve` returns at most `k` results with strictly positive scores,
/// descending by score with ties broken by ascending document id.
pub trait Retriever: Send + Sync {
    fn retrieve(&self, query: &str, k: usize) -> Result<Vec<(String, f64)>>;
    fn document(&self, id: &str) -> Option<&Document>;
}

impl<T: Retriever + ?Sized> Retriever for &T {
    fn retrieve(&self, query: &str, k: usize) -> Result<Vec<(String, f64)>> {
        (**self).retrieve(query, k)
    }

    fn document(&self, id: &str) -> Option<&Document> {
        (**self).document(id)
    }
}
