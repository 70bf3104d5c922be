//! Embedding-based retrieval: exact cosine nearest neighbors over
//! per-document vectors computed once at build time.

use std::collections::HashMap;

use crate::backends::EmbeddingBackend;
use crate::error::{Error, Result};
use crate::retrieval::{Corpus, Document, Retriever};

/// Exhaustive-scan vector index. Fine for the corpus sizes this engine
/// targets; swap in an ANN structure behind [`Retriever`] if that changes.
pub struct DenseIndex<E> {
    embedder: E,
    docs: Vec<Document>,
    id_to_idx: HashMap<String, usize>,
    vectors: Vec<Vec<f64>>,
    norms: Vec<f64>,
}

impl<E: EmbeddingBackend> DenseIndex<E> {
    /// Embed every document in the corpus. The corpus must be nonempty.
    pub fn build(corpus: &Corpus, embedder: E) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::InvalidInput("cannot index an empty corpus".into()));
        }
        let mut vectors = Vec::with_capacity(corpus.len());
        let mut norms = Vec::with_capacity(corpus.len());
        let mut id_to_idx = HashMap::with_capacity(corpus.len());
        for (idx, doc) in corpus.documents.iter().enumerate() {
            let vector = embedder.embed(&doc.body)?.values;
            norms.push(vector.iter().map(|v| v * v).sum::<f64>().sqrt());
            vectors.push(vector);
            id_to_idx.insert(doc.id.clone(), idx);
        }
        Ok(DenseIndex { embedder, docs: corpus.documents.clone(), id_to_idx, vectors, norms })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

impl<E: EmbeddingBackend> Retriever for DenseIndex<E> {
    fn retrieve(&self, query: &str, k: usize) -> Result<Vec<(String, f64)>> {
        if k == 0 {
            return Ok(Vec::new());
        }
        let query_vec = self.embedder.embed(query)?.values;
        let query_norm = query_vec.iter().map(|v| v * v).sum::<f64>().sqrt();
        if query_norm == 0.0 {
            return Ok(Vec::new());
        }
        let mut scored: Vec<(String, f64)> = self
            .vectors
            .iter()
            .enumerate()
            .filter_map(|(idx, vector)| {
                if self.norms[idx] == 0.0 {
                    return None;
                }
                let dot: f64 = vector.iter().zip(&query_vec).map(|(a, b)| a * b).sum();
                let sim = dot / (self.norms[idx] * query_norm);
                (sim > 0.0).then(|| (self.docs[idx].id.clone(), sim))
            })
            .collect();
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .expect("cosine similarities are finite")
                .then_with(|| a.0.cmp(&b.0))
        });
        scored.truncate(k);
        Ok(scored)
    }

    fn document(&self, id: &str) -> Option<&Document> {
        self.id_to_idx.get(id).map(|&idx| &self.docs[idx])
    }
}
