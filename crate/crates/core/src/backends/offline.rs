//! Model-free deterministic backends: hashed bag-of-words embeddings,
//! lexical-overlap NLI, and an adapter that turns any generation backend
//! into an NLI judge.

use crate::backends::{
    EmbeddingBackend, EmbeddingVector, GenerationBackend, GenerationRequest, NliBackend, NliLabel,
    NliVerdict,
};
use crate::error::Result;
use crate::hash::fnv1a64_str;
use crate::retrieval::tokenize;

/// Embeds text as an L2-normalized bag of hashed lowercase tokens.
/// Purely local and deterministic; suitable for tests and as a stand-in
/// encoder when no embedding service is configured.
pub struct HashedEmbeddingBackend {
    dim: usize,
}

impl HashedEmbeddingBackend {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        HashedEmbeddingBackend { dim }
    }
}

impl EmbeddingBackend for HashedEmbeddingBackend {
    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        let mut values = vec![0.0f64; self.dim];
        for token in tokenize(text) {
            let slot = (fnv1a64_str(&token) % self.dim as u64) as usize;
            values[slot] += 1.0;
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut values {
                *v /= norm;
            }
        }
        EmbeddingVector::new(values)
    }

    fn dim(&self) -> usize {
        self.dim
    }
}

/// Judges entailment by token recall: the fraction of hypothesis tokens
/// present in the premise. Crude but deterministic; used when no NLI
/// service is configured.
pub struct LexicalNli {
    /// Minimum recall counted as entailment.
    pub threshold: f64,
}

impl Default for LexicalNli {
    fn default() -> Self {
        LexicalNli { threshold: 0.6 }
    }
}

impl NliBackend for LexicalNli {
    fn nli(&self, premise: &str, hypothesis: &str) -> Result<NliVerdict> {
        let premise_tokens: std::collections::HashSet<String> =
            tokenize(premise).into_iter().collect();
        let hypothesis_tokens = tokenize(hypothesis);
        if hypothesis_tokens.is_empty() {
            return NliVerdict::new(NliLabel::NotEntailed, 1.0);
        }
        let hits = hypothesis_tokens
            .iter()
            .filter(|t| premise_tokens.contains(*t))
            .count();
        let recall = hits as f64 / hypothesis_tokens.len() as f64;
        let label = if recall >= self.threshold { NliLabel::Entailed } else { NliLabel::NotEntailed };
        // Confidence grows with distance from the threshold.
        let confidence = if label == NliLabel::Entailed {
            recall
        } else {
            1.0 - recall
        };
        NliVerdict::new(label, confidence.clamp(0.0, 1.0))
    }
}

/// Uses a generation backend as an entailment judge via a fixed yes/no
/// prompt, decoded greedily.
pub struct LlmNli<G> {
    backend: G,
}

impl<G: GenerationBackend> LlmNli<G> {
    pub fn new(backend: G) -> Self {
        LlmNli { backend }
    }

    fn prompt(premise: &str, hypothesis: &str) -> String {
        format!(
            "Premise:\n{premise}\n\nHypothesis:\n{hypothesis}\n\n\
             Does the premise entail the hypothesis? Answer with a single word, yes or no."
        )
    }
}

impl<G: GenerationBackend> NliBackend for LlmNli<G> {
    fn nli(&self, premise: &str, hypothesis: &str) -> Result<NliVerdict> {
        let req = GenerationRequest::new(Self::prompt(premise, hypothesis), 0.0, 8)?;
        let answer = self.backend.generate(&req)?;
        let normalized = answer.trim().to_lowercase();
        let label = if normalized.starts_with("yes") {
            NliLabel::Entailed
        } else {
            NliLabel::NotEntailed
        };
        NliVerdict::new(label, 1.0)
    }
}
