//! Inverted index with BM25 ranking.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::retrieval::{tokenize, Corpus, Document, Retriever};

/// BM25 scoring constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

/// Searchable index over a corpus. Postings are kept in memory and rebuilt
/// when loading from disk; only the documents and parameters are persisted.
pub struct Index {
    params: Bm25Params,
    min_words: usize,
    docs: Vec<Document>,
    id_to_idx: HashMap<String, usize>,
    /// term -> [(doc index, term frequency)]
    postings: HashMap<String, Vec<(usize, u32)>>,
    doc_len: Vec<usize>,
    avgdl: f64,
}

/// Index a corpus. The corpus must be nonempty.
pub fn build_index(corpus: &Corpus, params: Bm25Params) -> Result<Index> {
    if corpus.is_empty() {
        return Err(Error::InvalidInput(
            "cannot index an empty corpus (did the length filter drop everything?)".into(),
        ));
    }
    let mut postings: HashMap<String, Vec<(usize, u32)>> = HashMap::new();
    let mut doc_len = Vec::with_capacity(corpus.len());
    let mut id_to_idx = HashMap::with_capacity(corpus.len());
    for (idx, doc) in corpus.documents.iter().enumerate() {
        let tokens = tokenize(&doc.body);
        doc_len.push(tokens.len());
        let mut counts: HashMap<String, u32> = HashMap::new();
        for token in tokens {
            *counts.entry(token).or_insert(0) += 1;
        }
        for (term, tf) in counts {
            postings.entry(term).or_default().push((idx, tf));
        }
        id_to_idx.insert(doc.id.clone(), idx);
    }
    let avgdl = doc_len.iter().sum::<usize>() as f64 / doc_len.len() as f64;
    Ok(Index {
        params,
        min_words: corpus.min_words,
        docs: corpus.documents.clone(),
        id_to_idx,
        postings,
        doc_len,
        avgdl,
    })
}

impl Index {
    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn min_words(&self) -> usize {
        self.min_words
    }

    pub fn documents(&self) -> &[Document] {
        &self.docs
    }

    /// Smoothed inverse document frequency; strictly positive for any term.
    fn idf(&self, df: usize) -> f64 {
        let n = self.docs.len() as f64;
        (((n - df as f64 + 0.5) / (df as f64 + 0.5)) + 1.0).ln()
    }

    /// BM25 score of one document for a tokenized query. Repeated query
    /// tokens contribute once per occurrence.
    fn score_doc(&self, query_tokens: &[String], idx: usize) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let dl = self.doc_len[idx] as f64;
        let mut score = 0.0;
        for token in query_tokens {
            let Some(posting) = self.postings.get(token) else { continue };
            let Some(&(_, tf)) = posting.iter().find(|(d, _)| *d == idx) else { continue };
            let tf = tf as f64;
            let norm = tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / self.avgdl));
            score += self.idf(posting.len()) * norm;
        }
        score
    }

    /// Write the index to disk: a JSON header line followed by one document
    /// per line.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        let header = Header {
            format: FORMAT_NAME.into(),
            version: FORMAT_VERSION,
            k1: self.params.k1,
            b: self.params.b,
            min_words: self.min_words,
            docs: self.docs.len(),
        };
        let write = |out: &mut std::io::BufWriter<std::fs::File>, line: String| {
            writeln!(out, "{line}").map_err(|e| Error::io(path, e))
        };
        write(&mut out, serde_json::to_string(&header).expect("header serializes"))?;
        for doc in &self.docs {
            write(&mut out, serde_json::to_string(doc).expect("document serializes"))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    /// Load an index written by [`save`](Self::save), rebuilding postings.
    pub fn load(path: &Path) -> Result<Index> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = std::io::BufReader::new(file).lines();
        let header_line = lines
            .next()
            .ok_or_else(|| Error::format(path, "empty index file"))?
            .map_err(|e| Error::io(path, e))?;
        let header: Header = serde_json::from_str(&header_line)
            .map_err(|e| Error::format(path, format!("bad header: {e}")))?;
        if header.format != FORMAT_NAME {
            return Err(Error::format(path, format!("not an index file: {}", header.format)));
        }
        if header.version != FORMAT_VERSION {
            return Err(Error::format(
                path,
                format!("unsupported index version {}", header.version),
            ));
        }
        let mut docs = Vec::with_capacity(header.docs);
        for line in lines {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let doc: Document = serde_json::from_str(&line)
                .map_err(|e| Error::format(path, format!("bad document line: {e}")))?;
            docs.push(doc);
        }
        if docs.len() != header.docs {
            return Err(Error::format(
                path,
                format!("header promises {} docs, found {}", header.docs, docs.len()),
            ));
        }
        let corpus = Corpus { documents: docs, min_words: header.min_words, dropped: 0 };
        build_index(&corpus, Bm25Params { k1: header.k1, b: header.b })
    }
}

const FORMAT_NAME: &str = "purview-index";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    k1: f64,
    b: f64,
    min_words: usize,
    docs: usize,
}

impl Retriever for Index {
    fn retrieve(&self, query: &str, k: usize) -> Result<Vec<(String, f64)>> {
        let query_tokens = tokenize(query);
        if query_tokens.is_empty() || k == 0 {
            return Ok(Vec::new());
        }
        // Candidates: docs containing at least one query term.
        let mut candidates: Vec<usize> = Vec::new();
        let mut seen = vec![false; self.docs.len()];
        for token in &query_tokens {
            if let Some(posting) = self.postings.get(token) {
                for &(idx, _) in posting {
                    if !seen[idx] {
                        seen[idx] = true;
                        candidates.push(idx);
                    }
                }
            }
        }
        let mut scored: Vec<(String, f64)> = candidates
            .into_iter()
            .map(|idx| (self.docs[idx].id.clone(), self.score_doc(&query_tokens, idx)))
            .filter(|(_, score)| *score > 0.0)
            .collect();
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .expect("BM25 scores are finite")
                .then_with(|| a.0.cmp(&b.0))
        });
        scored.truncate(k);
        Ok(scored)
    }

    fn document(&self, id: &str) -> Option<&Document> {
        self.id_to_idx.get(id).map(|&idx| &self.docs[idx])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::ingest_corpus;

    fn index(docs: Vec<(&str, &str)>) -> Index {
        let corpus = ingest_corpus(
            docs.into_iter().map(|(id, body)| Document::new(id, body)),
            0,
        )
        .unwrap();
        build_index(&corpus, Bm25Params::default()).unwrap()
    }

    #[test]
    fn empty_corpus_rejected() {
        let corpus = ingest_corpus(Vec::new(), 0).unwrap();
        assert!(build_index(&corpus, Bm25Params::default()).is_err());
    }

    #[test]
    fn hand_computed_scores() {
        // N = 3, avgdl = 8/3. Query "a": df = 2, idf = ln(1.5/2.5 + 1) = ln(1.6).
        // d1: tf 2, dl 3 -> 2*2.2 / (2 + 1.2*(0.25 + 0.75*3/(8/3))) = 4.4/3.3125
        // d2: tf 1, dl 2 -> 2.2 / (1 + 1.2*(0.25 + 0.75*2/(8/3))) = 2.2/1.975
        let idx = index(vec![("d1", "a b a"), ("d2", "a c"), ("d3", "c c c")]);
        let results = idx.retrieve("a", 10).unwrap();
        let idf = 1.6f64.ln();
        let expect_d1 = idf * (4.4 / 3.3125);
        let expect_d2 = idf * (2.2 / 1.975);
        assert_eq!(results.len(), 2);
        assert_eq!(results[0].0, "d1");
        assert!((results[0].1 - expect_d1).abs() < 1e-12);
        assert_eq!(results[1].0, "d2");
        assert!((results[1].1 - expect_d2).abs() < 1e-12);
    }

    #[test]
    fn zero_score_docs_excluded() {
        let idx = index(vec![("d1", "a b"), ("d2", "c d")]);
        let results = idx.retrieve("a", 10).unwrap();
        assert_eq!(results.len(), 1);
        assert_eq!(results[0].0, "d1");
    }

    #[test]
    fn ties_break_by_ascending_id() {
        let idx = index(vec![("z", "a b"), ("m", "a b"), ("a", "a b")]);
        let results = idx.retrieve("a", 10).unwrap();
        let ids: Vec<&str> = results.iter().map(|(id, _)| id.as_str()).collect();
        assert_eq!(ids, vec!["a", "m", "z"]);
        assert!(results[0].1 == results[1].1 && results[1].1 == results[2].1);
    }

    #[test]
    fn idf_positive_even_for_ubiquitous_terms() {
        let idx = index(vec![("d1", "a"), ("d2", "a"), ("d3", "a")]);
        let results = idx.retrieve("a", 10).unwrap();
        assert_eq!(results.len(), 3);
        assert!(results.iter().all(|(_, s)| *s > 0.0));
    }

    #[test]
    fn repeated_query_tokens_stack() {
        let idx = index(vec![("d1", "a b"), ("d2", "b c")]);
        let single = idx.retrieve("a", 10).unwrap()[0].1;
        let double = idx.retrieve("a a", 10).unwrap()[0].1;
        assert!((double - 2.0 * single).abs() < 1e-12);
    }

    #[test]
    fn truncates_to_k() {
        let idx = index(vec![("d1", "a x"), ("d2", "a y"), ("d3", "a z")]);
        assert_eq!(idx.retrieve("a", 2).unwrap().len(), 2);
        assert!(idx.retrieve("a", 0).unwrap().is_empty());
    }

    #[test]
    fn empty_query_returns_nothing() {
        let idx = index(vec![("d1", "a")]);
        assert!(idx.retrieve("  !!! ", 5).unwrap().is_empty());
    }

    #[test]
    fn save_load_round_trip() {
        let idx = index(vec![("d1", "a b a"), ("d2", "a c"), ("d3", "c c c")]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("test.idx");
        idx.save(&path).unwrap();
        let loaded = Index::load(&path).unwrap();
        assert_eq!(loaded.len(), 3);
        assert_eq!(loaded.retrieve("a c", 10).unwrap(), idx.retrieve("a c", 10).unwrap());
        assert_eq!(loaded.document("d2").unwrap().body, "a c");
    }

    #[test]
    fn load_rejects_foreign_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bogus");
        std::fs::write(&path, "{\"format\": \"something-else\", \"version\": 1, \"k1\": 1.0, \"b\": 0.5, \"min_words\": 0, \"docs\": 0}\n").unwrap();
        assert!(Index::load(&path).is_err());
        std::fs::write(&path, "garbage\n").unwrap();
        assert!(Index::load(&path).is_err());
    }
}
