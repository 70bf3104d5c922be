//! Maximal-marginal-relevance reranking: trade retrieval relevance against
//! redundancy with already-selected documents.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::retrieval::{tokenize, Retriever};

/// Rerank the top `pool_size` retrieval results for `query` down to `k`
/// documents, greedily maximizing
/// `lambda * relevance - (1 - lambda) * max_similarity_to_selected`.
///
/// Relevance is the retrieval score max-normalized into [0, 1] over the
/// pool; similarity is cosine over term-frequency vectors. The returned
/// score is each document's objective value at the moment it was picked.
/// `lambda = 1` reproduces the retrieval order; `lambda = 0` ignores
/// relevance except to break ties.
pub fn mmr_rerank(
    query: &str,
    k: usize,
    lambda: f64,
    pool_size: usize,
    retriever: &dyn Retriever,
) -> Result<Vec<(String, f64)>> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidInput(format!("lambda {lambda} outside [0, 1]")));
    }
    let pool = retriever.retrieve(query, pool_size)?;
    if pool.is_empty() || k == 0 {
        return Ok(Vec::new());
    }
    let max_score = pool[0].1.max(f64::MIN_POSITIVE);
    let relevance: Vec<f64> = pool.iter().map(|(_, s)| s / max_score).collect();
    let vectors: Vec<HashMap<String, f64>> = pool
        .iter()
        .map(|(id, _)| {
            let doc = retriever.document(id).ok_or_else(|| {
                Error::InvalidInput(format!("retriever returned unknown document id {id}"))
            })?;
            Ok(tf_vector(&doc.body))
        })
        .collect::<Result<_>>()?;

    let mut selected: Vec<usize> = Vec::new();
    let mut result: Vec<(String, f64)> = Vec::new();
    while result.len() < k && selected.len() < pool.len() {
        let mut best: Option<(usize, f64)> = None;
        for (i, rel) in relevance.iter().enumerate() {
            if selected.contains(&i) {
                continue;
            }
            let redundancy = selected
                .iter()
                .map(|&j| cosine(&vectors[i], &vectors[j]))
                .fold(0.0f64, f64::max);
            let objective = lambda * rel - (1.0 - lambda) * redundancy;
            // Strict `>` keeps the earliest (highest-relevance) candidate on ties.
            if best.is_none_or(|(_, b)| objective > b) {
                best = Some((i, objective));
            }
        }
        let (i, objective) = best.expect("pool has unselected documents");
        selected.push(i);
        result.push((pool[i].0.clone(), objective));
    }
    Ok(result)
}

/// Adapter that applies MMR reranking on top of another retriever, so the
/// rest of the pipeline can stay agnostic about diversification. Returned
/// scores are MMR objective values: non-increasing, possibly negative.
pub struct MmrRetriever<R> {
    inner: R,
    lambda: f64,
    pool_size: usize,
}

impl<R: Retriever> MmrRetriever<R> {
    pub fn new(inner: R, lambda: f64, pool_size: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidInput(format!("lambda {lambda} outside [0, 1]")));
        }
        if pool_size == 0 {
            return Err(Error::InvalidInput("MMR pool size must be >= 1".into()));
        }
        Ok(MmrRetriever { inner, lambda, pool_size })
    }
}

impl<R: Retriever> Retriever for MmrRetriever<R> {
    fn retrieve(&self, query: &str, k: usize) -> Result<Vec<(String, f64)>> {
        mmr_rerank(query, k, self.lambda, self.pool_size, &self.inner)
    }

    fn document(&self, id: &str) -> Option<&crate::retrieval::Document> {
        self.inner.document(id)
    }
}

fn tf_vector(text: &str) -> HashMap<String, f64> {
    let mut counts = HashMap::new();
    for token in tokenize(text) {
        *counts.entry(token).or_insert(0.0) += 1.0;
    }
    counts
}

fn cosine(a: &HashMap<String, f64>, b: &HashMap<String, f64>) -> f64 {
    let dot: f64 = a
        .iter()
        .filter_map(|(term, &va)| b.get(term).map(|&vb| va * vb))
        .sum();
    if dot == 0.0 {
        return 0.0;
    }
    let norm = |v: &HashMap<String, f64>| v.values().map(|x| x * x).sum::<f64>().sqrt();
    dot / (norm(a) * norm(b))
}
