//! Deterministic scripted backend for tests and offline runs.
//!
//! Generation replies come from an ordered script: each call consumes the
//! first unconsumed entry whose matcher accepts the request. Embedding and
//! NLI calls check reusable override rules first and fall back to
//! deterministic model-free behavior, so a script only has to pin down the
//! calls a test actually cares about.

use std::path::Path;
use std::sync::Mutex;

use serde::Deserialize;

use crate::backends::offline::HashedEmbeddingBackend;
use crate::backends::{
    EmbeddingBackend, EmbeddingVector, GenerationBackend, GenerationRequest, NliBackend, NliLabel,
    NliVerdict,
};
use crate::error::{Error, Result};
use crate::hash::fnv1a64_str;

pub const DEFAULT_EMBEDDING_DIM: usize = 64;

/// One observed backend call, in arrival order.
#[derive(Debug, Clone, PartialEq)]
pub enum CallRecord {
    Generate {
        prompt: String,
        temperature: f64,
        max_output_tokens: u32,
    },
    Embed {
        text: String,
    },
    Nli {
        premise: String,
        hypothesis: String,
    },
}

#[derive(Debug, Clone)]
enum Matcher {
    /// Matches a byte-identical prompt (stored hashed) at an optional temperature.
    Exact { prompt_hash: u64, temperature: Option<f64> },
    /// Matches any prompt containing `needle`; the empty needle matches everything.
    Contains { needle: String, temperature: Option<f64> },
}

impl Matcher {
    fn matches(&self, req: &GenerationRequest) -> bool {
        let temp_ok = |want: &Option<f64>| match want {
            None => true,
            Some(t) => centi(*t) == centi(req.temperature),
        };
        match self {
            Matcher::Exact { prompt_hash, temperature } => {
                temp_ok(temperature) && *prompt_hash == fnv1a64_str(&req.prompt)
            }
            Matcher::Contains { needle, temperature } => {
                temp_ok(temperature) && req.prompt.contains(needle.as_str())
            }
        }
    }
}

/// Temperatures are compared at two-decimal precision.
fn centi(t: f64) -> i64 {
    (t * 100.0).round() as i64
}

#[derive(Debug, Clone)]
enum Reply {
    Text(String),
    TransportError(String),
}

#[derive(Debug)]
struct Entry {
    matcher: Matcher,
    reply: Reply,
    consumed: bool,
}

#[derive(Debug, Clone)]
struct NliRule {
    premise_contains: Option<String>,
    hypothesis_contains: Option<String>,
    label: NliLabel,
    confidence: f64,
}

#[derive(Debug)]
struct State {
    entries: Vec<Entry>,
    nli_rules: Vec<NliRule>,
    embeddings: Vec<(String, Vec<f64>)>,
    call_log: Vec<CallRecord>,
}

/// Scripted implementation of all three backend traits.
pub struct ScriptedBackend {
    state: Mutex<State>,
    fallback_embedder: HashedEmbeddingBackend,
}

impl Default for ScriptedBackend {
    fn default() -> Self {
        Self::new()
    }
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::with_embedding_dim(DEFAULT_EMBEDDING_DIM)
    }

    pub fn with_embedding_dim(dim: usize) -> Self {
        ScriptedBackend {
            state: Mutex::new(State {
                entries: Vec::new(),
                nli_rules: Vec::new(),
                embeddings: Vec::new(),
                call_log: Vec::new(),
            }),
            fallback_embedder: HashedEmbeddingBackend::new(dim),
        }
    }

    /// Queue a reply for the first future request whose prompt contains `needle`.
    /// An empty needle matches any request, turning the script into a plain queue.
    pub fn push_text(&self, needle: impl Into<String>, reply: impl Into<String>) {
        self.push_entry(
            Matcher::Contains { needle: needle.into(), temperature: None },
            Reply::Text(reply.into()),
        );
    }

    /// Like [`push_text`](Self::push_text) but also pins the request temperature
    /// (compared at two-decimal precision).
    pub fn push_text_at(
        &self,
        needle: impl Into<String>,
        temperature: f64,
        reply: impl Into<String>,
    ) {
        self.push_entry(
            Matcher::Contains { needle: needle.into(), temperature: Some(temperature) },
            Reply::Text(reply.into()),
        );
    }

    /// Queue a reply for one byte-identical prompt.
    pub fn push_exact(&self, prompt: &str, temperature: Option<f64>, reply: impl Into<String>) {
        self.push_entry(
            Matcher::Exact { prompt_hash: fnv1a64_str(prompt), temperature },
            Reply::Text(reply.into()),
        );
    }

    /// Queue a simulated transport failure.
    pub fn push_transport_error(&self, needle: impl Into<String>, message: impl Into<String>) {
        self.push_entry(
            Matcher::Contains { needle: needle.into(), temperature: None },
            Reply::TransportError(message.into()),
        );
    }

    fn push_entry(&self, matcher: Matcher, reply: Reply) {
        self.state
            .lock()
            .unwrap()
            .entries
            .push(Entry { matcher, reply, consumed: false });
    }

    /// Add a reusable NLI rule; rules are checked in insertion order.
    /// A `None` pattern matches any text.
    pub fn push_nli_rule(
        &self,
        premise_contains: Option<&str>,
        hypothesis_contains: Option<&str>,
        label: NliLabel,
        confidence: f64,
    ) {
        self.state.lock().unwrap().nli_rules.push(NliRule {
            premise_contains: premise_contains.map(str::to_owned),
            hypothesis_contains: hypothesis_contains.map(str::to_owned),
            label,
            confidence,
        });
    }

    /// Pin the embedding of one exact text. The vector must match the
    /// backend dimension.
    pub fn push_embedding(&self, text: impl Into<String>, values: Vec<f64>) -> Result<()> {
        if values.len() != self.fallback_embedder.dim() {
            return Err(Error::InvalidInput(format!(
                "scripted embedding has dimension {}, backend uses {}",
                values.len(),
                self.fallback_embedder.dim()
            )));
        }
        self.state.lock().unwrap().embeddings.push((text.into(), values));
        Ok(())
    }

    /// All calls observed so far, oldest first.
    pub fn call_log(&self) -> Vec<CallRecord> {
        self.state.lock().unwrap().call_log.clone()
    }

    /// Temperatures of the generation calls observed so far, oldest first.
    pub fn generation_temperatures(&self) -> Vec<f64> {
        self.state
            .lock()
            .unwrap()
            .call_log
            .iter()
            .filter_map(|c| match c {
                CallRecord::Generate { temperature, .. } => Some(*temperature),
                _ => None,
            })
            .collect()
    }

    /// Number of scripted generation entries not yet consumed.
    pub fn unconsumed(&self) -> usize {
        self.state
            .lock()
            .unwrap()
            .entries
            .iter()
            .filter(|e| !e.consumed)
            .count()
    }

    /// Load a script from a JSON playbook file.
    pub fn from_playbook_path(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_playbook_json(&raw)
            .map_err(|e| Error::format(path, format!("bad playbook: {e}")))
    }

    /// Parse a JSON playbook. Schema:
    ///
    /// ```json
    /// {
    ///   "embedding_dim": 64,
    ///   "entries": [
    ///     {"contains": "plan", "temperature": 0.7, "reply": "..."},
    ///     {"reply": "matches anything"}
    ///   ],
    ///   "nli": [
    ///     {"premise_contains": "p", "hypothesis_contains": "h",
    ///      "entailed": true, "confidence": 1.0}
    ///   ]
    /// }
    /// ```
    pub fn from_playbook_json(json: &str) -> Result<Self> {
        let playbook: Playbook =
            serde_json::from_str(json).map_err(|e| Error::Protocol(format!("playbook: {e}")))?;
        let backend =
            Self::with_embedding_dim(playbook.embedding_dim.unwrap_or(DEFAULT_EMBEDDING_DIM));
        for entry in playbook.entries {
            let matcher = Matcher::Contains {
                needle: entry.contains.unwrap_or_default(),
                temperature: entry.temperature,
            };
            let reply = match (entry.reply, entry.transport_error) {
                (Some(text), None) => Reply::Text(text),
                (None, Some(message)) => Reply::TransportError(message),
                _ => {
                    return Err(Error::Protocol(
                        "playbook entry needs exactly one of `reply` or `transport_error`".into(),
                    ))
                }
            };
            backend.push_entry(matcher, reply);
        }
        for rule in playbook.nli {
            let label = if rule.entailed { NliLabel::Entailed } else { NliLabel::NotEntailed };
            backend.push_nli_rule(
                rule.premise_contains.as_deref(),
                rule.hypothesis_contains.as_deref(),
                label,
                rule.confidence.unwrap_or(1.0),
            );
        }
        Ok(backend)
    }
}

#[derive(Deserialize)]
struct Playbook {
    embedding_dim: Option<usize>,
    #[serde(default)]
    entries: Vec<PlaybookEntry>,
    #[serde(default)]
    nli: Vec<PlaybookNli>,
}

#[derive(Deserialize)]
struct PlaybookEntry {
    contains: Option<String>,
    temperature: Option<f64>,
    reply: Option<String>,
    transport_error: Option<String>,
}

#[derive(Deserialize)]
struct PlaybookNli {
    premise_contains: Option<String>,
    hypothesis_contains: Option<String>,
    entailed: bool,
    confidence: Option<f64>,
}

impl GenerationBackend for ScriptedBackend {
    fn generate(&self, req: &GenerationRequest) -> Result<String> {
        req.validate()?;
        let mut state = self.state.lock().unwrap();
        state.call_log.push(CallRecord::Generate {
            prompt: req.prompt.clone(),
            temperature: req.temperature,
            max_output_tokens: req.max_output_tokens,
        });
        let hit = state
            .entries
            .iter_mut()
            .find(|e| !e.consumed && e.matcher.matches(req));
        match hit {
            Some(entry) => {
                entry.consumed = true;
                match &entry.reply {
                    Reply::Text(text) => Ok(text.clone()),
                    Reply::TransportError(message) => Err(Error::Transport {
                        attempts: 1,
                        message: message.clone(),
                    }),
                }
            }
            None => Err(Error::ScriptExhausted(preview(&req.prompt))),
        }
    }
}

impl EmbeddingBackend for ScriptedBackend {
    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        let mut state = self.state.lock().unwrap();
        state.call_log.push(CallRecord::Embed { text: text.to_owned() });
        if let Some((_, values)) = state.embeddings.iter().find(|(t, _)| t == text) {
            return EmbeddingVector::new(values.clone());
        }
        drop(state);
        self.fallback_embedder.embed(text)
    }

    fn dim(&self) -> usize {
        self.fallback_embedder.dim()
    }
}

impl NliBackend for ScriptedBackend {
    fn nli(&self, premise: &str, hypothesis: &str) -> Result<NliVerdict> {
        let mut state = self.state.lock().unwrap();
        state.call_log.push(CallRecord::Nli {
            premise: premise.to_owned(),
            hypothesis: hypothesis.to_owned(),
        });
        for rule in &state.nli_rules {
            let premise_ok = rule
                .premise_contains
                .as_deref()
                .is_none_or(|needle| premise.contains(needle));
            let hypothesis_ok = rule
                .hypothesis_contains
                .as_deref()
                .is_none_or(|needle| hypothesis.contains(needle));
            if premise_ok && hypothesis_ok {
                return NliVerdict::new(rule.label, rule.confidence);
            }
        }
        // Unscripted fallback: only literal repetition counts as entailment.
        let label = if premise == hypothesis { NliLabel::Entailed } else { NliLabel::NotEntailed };
        NliVerdict::new(label, 1.0)
    }
}

fn preview(prompt: &str) -> String {
    const LIMIT: usize = 120;
    let flat = prompt.replace('\n', " ");
    if flat.len() <= LIMIT {
        flat
    } else {
        let mut cut = LIMIT;
        while !flat.is_char_boundary(cut) {
            cut -= 1;
        }
        format!("{}...", &flat[..cut])
    }
}
