//! Uniform interfaces to text generation, text embedding, and
//! natural-language-inference judgment.
//!
//! Two families of implementations ship with the engine: a live HTTP
//! client speaking the de-facto chat/embeddings wire schema
//! ([`http::HttpBackend`]) and a deterministic scripted backend for
//! tests ([`scripted::ScriptedBackend`]). [`offline`] adds
//! model-free deterministic helpers (hashed embeddings, lexical NLI).

pub mod http;
pub mod offline;
pub mod scripted;

use crate::error::{Error, Result};

/// One generation call: prompt plus decoding controls.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRequest {
    pub prompt: String,
    /// Nucleus sampling temperature; 0 means greedy decoding.
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub seed: Option<u64>,
}

impl GenerationRequest {
    pub fn new(prompt: impl Into<String>, temperature: f64, max_output_tokens: u32) -> Result<Self> {
        let req = GenerationRequest {
            prompt: prompt.into(),
            temperature,
            max_output_tokens,
            seed: None,
        };
        req.validate()?;
        Ok(req)
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.temperature) {
            return Err(Error::InvalidInput(format!(
                "temperature {} outside [0, 1]",
                self.temperature
            )));
        }
        if self.max_output_tokens == 0 {
            return Err(Error::InvalidInput(
                "max_output_tokens must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Fixed-dimension embedding of a text.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Protocol("embedding contains non-finite entries".into()));
        }
        Ok(EmbeddingVector { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn dot(&self, weights: &[f64]) -> f64 {
        self.values.iter().zip(weights).map(|(a, b)| a * b).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NliLabel {
    Entailed,
    NotEntailed,
}

/// Entailment judgment for a (premise, hypothesis) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct NliVerdict {
    pub label: NliLabel,
    /// In [0, 1].
    pub confidence: f64,
}

impl NliVerdict {
    pub fn new(label: NliLabel, confidence: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::InvalidInput(format!(
                "confidence {confidence} outside [0, 1]"
            )));
        }
        Ok(NliVerdict { label, confidence })
    }

    pub fn entailed(&self) -> bool {
        self.label == NliLabel::Entailed
    }
}

/// Text generation backend. Implementations must be safe to share across
/// concurrent pipeline tasks.
pub trait GenerationBackend: Send + Sync {
    fn generate(&self, req: &GenerationRequest) -> Result<String>;
}

/// Text embedding backend. `embed` must be deterministic: the same text
/// always maps to the same vector, and the dimension is constant for the
/// lifetime of the instance.
pub trait EmbeddingBackend: Send + Sync {
    fn embed(&self, text: &str) -> Result<EmbeddingVector>;
    fn dim(&self) -> usize;
}

/// Natural-language-inference backend: does `premise` entail `hypothesis`?
pub trait NliBackend: Send + Sync {
    fn nli(&self, premise: &str, hypothesis: &str) -> Result<NliVerdict>;
}

impl<T: GenerationBackend + ?Sized> GenerationBackend for std::sync::Arc<T> {
    fn generate(&self, req: &GenerationRequest) -> Result<String> {
        (**self).generate(req)
    }
}

impl<T: EmbeddingBackend + ?Sized> EmbeddingBackend for std::sync::Arc<T> {
    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        (**self).embed(text)
    }

    fn dim(&self) -> usize {
        (**self).dim()
    }
}

impl<T: NliBackend + ?Sized> NliBackend for std::sync::Arc<T> {
    fn nli(&self, premise: &str, hypothesis: &str) -> Result<NliVerdict> {
        (**self).nli(premise, hypothesis)
    }
}

pub(crate) fn require_nonempty(value: &str, what: &str) -> Result<()> {
    if value.trim().is_empty() {
        return Err(Error::InvalidInput(format!("{what} must be nonempty")));
    }
    Ok(())
}
