//! Splitting a retrieval budget across plan steps and assembling the
//! resulting evidence into one deduplicated context.

use crate::error::{Error, Result};
use crate::retrieval::Retriever;

/// Split a budget of `k` documents across `steps` plan steps: every step
/// gets `k / steps`, and the remainder goes one document at a time to the
/// earliest steps. The shares always sum to `k`.
pub fn allocate_budget(k: usize, steps: usize) -> Result<Vec<usize>> {
    if steps == 0 {
        return Err(Error::InvalidInput("cannot allocate budget across zero steps".into()));
    }
    let base = k / steps;
    let remainder = k % steps;
    Ok((0..steps).map(|i| base + usize::from(i < remainder)).collect())
}

/// One document admitted into a context.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextDoc {
    pub id: String,
    /// Plan step whose query first retrieved this document.
    pub step_index: usize,
    /// Retrieval score under that step's query.
    pub score: f64,
    pub text: String,
}

/// Evidence gathered for one plan, ordered by step and rank.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RetrievedContext {
    pub docs: Vec<ContextDoc>,
    /// The budget `k` the assembly was asked to spend.
    pub budget: usize,
}

impl RetrievedContext {
    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Numbered evidence block for inclusion in a generation prompt.
    pub fn render_for_prompt(&self) -> String {
        let mut out = String::new();
        for (i, doc) in self.docs.iter().enumerate() {
            out.push_str(&format!("[{}] {}\n", i + 1, doc.text));
        }
        out
    }

    pub fn doc_ids(&self) -> Vec<&str> {
        self.docs.iter().map(|d| d.id.as_str()).collect()
    }
}

/// Retrieve evidence for each step query under a total budget of `k`
/// documents and merge it in step order. A document retrieved by several
/// steps is kept once, attributed to the earliest step (then best rank).
/// Steps whose queries find fewer documents than their share contribute
/// fewer, so the context may hold fewer than `k` documents.
pub fn assemble_context(
    step_queries: &[String],
    k: usize,
    retriever: &dyn Retriever,
) -> Result<RetrievedContext> {
    let shares = allocate_budget(k, step_queries.len())?;
    let mut docs: Vec<ContextDoc> = Vec::new();
    for (step_index, (query, share)) in step_queries.iter().zip(shares).enumerate() {
        for (id, score) in retriever.retrieve(query, share)? {
            if docs.iter().any(|d| d.id == id) {
                continue;
            }
            let text = retriever
                .document(&id)
                .ok_or_else(|| {
                    Error::InvalidInput(format!("retriever returned unknown document id {id}"))
                })?
                .body
                .clone();
            docs.push(ContextDoc { id, step_index, score, text });
        }
    }
    Ok(RetrievedContext { docs, budget: k })
}
