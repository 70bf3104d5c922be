//! Structured answer plans: prompting for them, parsing them, and sampling
//! several diverse ones per query.
//!
//! A plan is an ordered list of steps; each step names one aspect a complete
//! answer should cover, why it matters, and a standalone retrieval query for
//! gathering evidence about it. Plans travel as JSON with the shape
//! `{"aspects": [{"title", "reason", "query"}]}`.

use serde::{Deserialize, Serialize};

use crate::backends::{require_nonempty, GenerationBackend, GenerationRequest};
use crate::error::{Error, Result};

/// One aspect of a plan: what to cover, why, and how to search for it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanStep {
    #[serde(rename = "title")]
    pub aspect: String,
    pub reason: String,
    pub query: String,
}

/// A parsed plan plus the sampling temperature and raw text it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub steps: Vec<PlanStep>,
    pub origin_temperature: f64,
    pub raw_text: String,
}

impl Plan {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Single-step plan that just restates the query. Used when planning is
    /// disabled and the pipeline degrades to plain best-of-N sampling.
    pub fn trivial(query: &str) -> Plan {
        let step = PlanStep {
            aspect: query.trim().to_owned(),
            reason: "direct answer to the question as asked".to_owned(),
            query: query.trim().to_owned(),
        };
        let raw_text = steps_to_json(std::slice::from_ref(&step));
        Plan { steps: vec![step], origin_temperature: 0.0, raw_text }
    }

    /// Canonical JSON form, parseable by [`parse_plan`].
    pub fn to_json(&self) -> String {
        steps_to_json(&self.steps)
    }

    /// Human-oriented rendering used inside generation prompts.
    pub fn render_for_prompt(&self) -> String {
        let mut out = String::new();
        for (i, step) in self.steps.iter().enumerate() {
            out.push_str(&format!("{}. {} ({})\n", i + 1, step.aspect, step.reason));
        }
        out
    }
}

fn steps_to_json(steps: &[PlanStep]) -> String {
    serde_json::to_string(&serde_json::json!({ "aspects": steps }))
        .expect("plan serialization cannot fail")
}

/// Why a model reply could not be read as a plan.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlanParseError {
    #[error("not valid JSON: {0}")]
    Json(String),
    #[error("missing or mistyped field `{0}`")]
    MissingField(String),
    #[error("plan has no steps")]
    EmptySteps,
    #[error("field `{0}` is empty")]
    EmptyField(String),
}

/// Prompt asking for a plan for `query`, stating the exact JSON shape.
pub fn build_plan_prompt(query: &str) -> String {
    let query = query.trim();
    format!(
        "You are preparing to answer a question with a thorough long-form response. \
         Before writing anything, break the question into the distinct aspects a \
         complete answer must cover.\n\
         \n\
         Question:\n{query}\n\
         \n\
         Reply with JSON only, in exactly this shape:\n\
         {{\"aspects\": [{{\"title\": \"...\", \"reason\": \"...\", \"query\": \"...\"}}]}}\n\
         \n\
         For each aspect give a short title, the reason it belongs in the answer, \
         and a standalone search query for finding evidence about it. Order the \
         aspects as they should appear in the answer."
    )
}

/// Parse a model reply into a [`Plan`]. Accepts the bare JSON object,
/// optionally wrapped in a Markdown code fence.
pub fn parse_plan(
    text: &str,
    origin_temperature: f64,
) -> std::result::Result<Plan, PlanParseError> {
    let body = strip_fence(text);
    let value: serde_json::Value =
        serde_json::from_str(body).map_err(|e| PlanParseError::Json(e.to_string()))?;
    let aspects = value
        .get("aspects")
        .and_then(|v| v.as_array())
        .ok_or_else(|| PlanParseError::MissingField("aspects".into()))?;
    if aspects.is_empty() {
        return Err(PlanParseError::EmptySteps);
    }
    let mut steps = Vec::with_capacity(aspects.len());
    for (i, aspect) in aspects.iter().enumerate() {
        let field = |name: &str| -> std::result::Result<String, PlanParseError> {
            let raw = aspect
                .get(name)
                .and_then(|v| v.as_str())
                .ok_or_else(|| PlanParseError::MissingField(format!("aspects[{i}].{name}")))?;
            let trimmed = raw.trim();
            if trimmed.is_empty() {
                return Err(PlanParseError::EmptyField(format!("aspects[{i}].{name}")));
            }
            Ok(trimmed.to_owned())
        };
        steps.push(PlanStep {
            aspect: field("title")?,
            reason: field("reason")?,
            query: field("query")?,
        });
    }
    Ok(Plan { steps, origin_temperature, raw_text: text.to_owned() })
}

fn strip_fence(text: &str) -> &str {
    let t = text.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t;
    };
    // Drop the info string ("json", ...) on the opening fence line.
    let rest = rest.split_once('\n').map(|(_, r)| r).unwrap_or("");
    let rest = rest.trim_end();
    rest.strip_suffix("```").unwrap_or(rest).trim()
}

/// Escalation policy for re-asking after an unusable plan reply: each retry
/// raises the sampling temperature by `increment`, saturating at
/// `max_temperature`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryLadder {
    pub increment: f64,
    pub max_temperature: f64,
    pub max_attempts: u32,
}

impl Default for RetryLadder {
    fn default() -> Self {
        RetryLadder { increment: 0.1, max_temperature: 1.0, max_attempts: 5 }
    }
}

impl RetryLadder {
    /// Temperature for 0-based `attempt` starting from `base`.
    pub fn temperature_for(&self, base: f64, attempt: u32) -> f64 {
        (base + self.increment * attempt as f64).min(self.max_temperature)
    }
}

/// Sample `n` plans for `query` at `temperature`, retrying each slot on an
/// unusable reply per `ladder`. Backend failures propagate immediately; only
/// parse failures are retried.
pub fn sample_plans(
    query: &str,
    n: usize,
    temperature: f64,
    ladder: &RetryLadder,
    backend: &dyn GenerationBackend,
    max_output_tokens: u32,
    seed: Option<u64>,
) -> Result<Vec<Plan>> {
    require_nonempty(query, "query")?;
    if n == 0 {
        return Err(Error::InvalidInput("plan count must be >= 1".into()));
    }
    if ladder.max_attempts == 0 {
        return Err(Error::Config("retry ladder allows zero attempts".into()));
    }
    let prompt = build_plan_prompt(query);
    let mut plans = Vec::with_capacity(n);
    for slot in 0..n {
        let mut last: Option<PlanParseError> = None;
        let mut accepted = None;
        for attempt in 0..ladder.max_attempts {
            let temp = ladder.temperature_for(temperature, attempt);
            let req = GenerationRequest::new(prompt.clone(), temp, max_output_tokens)?
                .with_seed(seed.map(|s| mix_seed(s, slot as u64, attempt as u64)));
            let reply = backend.generate(&req)?;
            match parse_plan(&reply, temp) {
                Ok(plan) => {
                    accepted = Some(plan);
                    break;
                }
                Err(e) => {
                    log::debug!("plan slot {slot} attempt {attempt} unusable: {e}");
                    last = Some(e);
                }
            }
        }
        match accepted {
            Some(plan) => plans.push(plan),
            None => {
                return Err(Error::LadderExhausted {
                    attempts: ladder.max_attempts,
                    last: last.expect("at least one attempt ran"),
                })
            }
        }
    }
    Ok(plans)
}

/// Distinct deterministic seed per (slot, attempt) so live endpoints that
/// honor seeds still produce diverse plans.
fn mix_seed(base: u64, slot: u64, attempt: u64) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(slot << 16)
        .wrapping_add(attempt)
}
