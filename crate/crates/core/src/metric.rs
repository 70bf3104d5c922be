//! Coverage/factuality scoring of long-form answers.
//!
//! A response is broken into atomic claims; each claim is fact-checked
//! against retrieved corpus evidence with NLI, and the set of claims is
//! matched against the subtopics a complete answer should cover. The final
//! score is the harmonic mean of subtopic coverage and claim factuality.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backends::{GenerationBackend, GenerationRequest, NliBackend};
use crate::error::{Error, Result};
use crate::retrieval::Retriever;

/// How much of the metric pipeline is model-based.
///
/// * `Manual`: annotated subtopics, lexical claim/subtopic matching.
/// * `Semi`: annotated subtopics, model-based matching.
/// * `Auto`: model-generated subtopics, model-based matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Level {
    Manual,
    Semi,
    Auto,
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_lowercase().as_str() {
            "manual" | "m" => Ok(Level::Manual),
            "semi" | "s" => Ok(Level::Semi),
            "auto" | "a" => Ok(Level::Auto),
            other => Err(Error::InvalidInput(format!("unknown metric level `{other}`"))),
        }
    }
}

impl std::fmt::Display for Level {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Level::Manual => "manual",
            Level::Semi => "semi",
            Level::Auto => "auto",
        })
    }
}

/// An evaluation input: a stable id plus the question text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: String,
}

impl Query {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Query { id: id.into(), text: text.into() }
    }
}

/// One aspect a complete answer is expected to cover.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subtopic {
    pub label: String,
}

/// One atomic factual statement extracted from a response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claim {
    pub text: String,
}

/// A fact-checked claim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimVerdict {
    pub text: String,
    pub supported: bool,
    /// Id of the first document whose text entailed the claim.
    pub evidence_id: Option<String>,
}

/// Per-subtopic coverage outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtopicReport {
    pub label: String,
    pub covered: bool,
}

/// Full scoring result for one (query, response) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub coverage: f64,
    pub factuality: f64,
    pub f_measure: f64,
    pub claims: Vec<ClaimVerdict>,
    pub subtopics: Vec<SubtopicReport>,
    /// True when no claims could be extracted or no subtopics exist; all
    /// three scores are zero in that case.
    pub degenerate: bool,
}

impl MetricReport {
    pub fn supported_claims(&self) -> usize {
        self.claims.iter().filter(|c| c.supported).count()
    }

    pub fn covered_subtopics(&self) -> usize {
        self.subtopics.iter().filter(|s| s.covered).count()
    }

    fn zero(claims: Vec<ClaimVerdict>, subtopics: Vec<SubtopicReport>) -> Self {
        MetricReport {
            coverage: 0.0,
            factuality: 0.0,
            f_measure: 0.0,
            claims,
            subtopics,
            degenerate: true,
        }
    }
}

/// Harmonic mean of coverage and factuality; zero when both are zero.
/// Inputs must lie in [0, 1].
pub fn f_measure(coverage: f64, factuality: f64) -> Result<f64> {
    for (name, v) in [("coverage", coverage), ("factuality", factuality)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidInput(format!("{name} {v} outside [0, 1]")));
        }
    }
    if coverage + factuality == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * coverage * factuality / (coverage + factuality))
}

// ---------------------------------------------------------------- claims

/// Splits a response into atomic claims.
pub trait ClaimExtractor: Send + Sync {
    fn extract(&self, response: &str) -> Result<Vec<Claim>>;
}

/// Model-free extractor: one claim per sentence. Naive about abbreviations,
/// which is acceptable for a fallback.
pub struct SentenceClaims;

impl ClaimExtractor for SentenceClaims {
    fn extract(&self, response: &str) -> Result<Vec<Claim>> {
        let mut claims = Vec::new();
        let mut current = String::new();
        for c in response.chars() {
            current.push(c);
            if matches!(c, '.' | '!' | '?') {
                push_claim(&mut claims, &current);
                current.clear();
            }
        }
        push_claim(&mut claims, &current);
        Ok(claims)
    }
}

fn push_claim(claims: &mut Vec<Claim>, text: &str) {
    let trimmed = text.trim().trim_end_matches(['.', '!', '?']).trim();
    if !trimmed.is_empty() {
        claims.push(Claim { text: trimmed.to_owned() });
    }
}

/// Model-based extractor: asks the backend for one claim per line.
pub struct LlmClaims<G> {
    backend: G,
    max_output_tokens: u32,
}

impl<G: GenerationBackend> LlmClaims<G> {
    pub fn new(backend: G, max_output_tokens: u32) -> Self {
        LlmClaims { backend, max_output_tokens }
    }
}

impl<G: GenerationBackend> ClaimExtractor for LlmClaims<G> {
    fn extract(&self, response: &str) -> Result<Vec<Claim>> {
        let prompt = format!(
            "Break the following text into its atomic factual claims. Write one \
             claim per line, as a standalone sentence. Output only the claims.\n\
             \n\
             Text:\n{response}"
        );
        let req = GenerationRequest::new(prompt, 0.0, self.max_output_tokens)?;
        let reply = self.backend.generate(&req)?;
        Ok(parse_lines(&reply).into_iter().map(|text| Claim { text }).collect())
    }
}

/// Non-empty lines with list markers ("-", "*", "1.", "2)") stripped.
fn parse_lines(text: &str) -> Vec<String> {
    text.lines()
        .map(|line| {
            line.trim()
                .trim_start_matches(['-', '*', '•'])
                .trim_start_matches(|c: char| c.is_ascii_digit())
                .trim_start_matches(['.', ')'])
                .trim()
                .to_owned()
        })
        .filter(|line| !line.is_empty())
        .collect()
}

/// Extract claims, falling back to sentence splitting if the extractor
/// fails. The downgrade is logged, not fatal.
pub fn extract_claims(response: &str, extractor: &dyn ClaimExtractor) -> Vec<Claim> {
    match extractor.extract(response) {
        Ok(claims) => claims,
        Err(e) => {
            log::warn!("claim extractor failed ({e}); falling back to sentence splitting");
            SentenceClaims.extract(response).expect("sentence splitting cannot fail")
        }
    }
}

/// Fact-check one claim: retrieve up to `evidence_depth` documents for the
/// claim text and accept it if any document entails it.
pub fn verify_claim(
    claim: &Claim,
    retriever: &dyn Retriever,
    nli: &dyn NliBackend,
    evidence_depth: usize,
) -> Result<ClaimVerdict> {
    for (id, _) in retriever.retrieve(&claim.text, evidence_depth)? {
        let doc = retriever.document(&id).ok_or_else(|| {
            Error::InvalidInput(format!("retriever returned unknown document id {id}"))
        })?;
        if nli.nli(&doc.body, &claim.text)?.entailed() {
            return Ok(ClaimVerdict { text: claim.text.clone(), supported: true, evidence_id: Some(id) });
        }
    }
    Ok(ClaimVerdict { text: claim.text.clone(), supported: false, evidence_id: None })
}

// ------------------------------------------------------------- subtopics

/// Supplies the expected subtopics for a query.
pub trait SubtopicSource: Send + Sync {
    fn subtopics_for(&self, query: &Query) -> Result<Vec<Subtopic>>;
}

/// Subtopics from a prepared annotation file.
#[derive(Debug, Clone, Default)]
pub struct AnnotatedSubtopics {
    map: HashMap<String, Vec<Subtopic>>,
}

impl AnnotatedSubtopics {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, query_id: impl Into<String>, subtopics: Vec<Subtopic>) {
        self.map.insert(query_id.into(), subtopics);
    }

    /// Load a JSON-lines file of `{"query_id": ..., "subtopics": [...]}`.
    pub fn load(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Line {
            query_id: String,
            subtopics: Vec<String>,
        }
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut map = HashMap::new();
        for (lineno, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Line = serde_json::from_str(&line)
                .map_err(|e| Error::format(path, format!("line {}: {e}", lineno + 1)))?;
            if map
                .insert(
                    parsed.query_id.clone(),
                    parsed.subtopics.into_iter().map(|label| Subtopic { label }).collect(),
                )
                .is_some()
            {
                return Err(Error::DuplicateId(parsed.query_id));
            }
        }
        Ok(AnnotatedSubtopics { map })
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

impl SubtopicSource for AnnotatedSubtopics {
    fn subtopics_for(&self, query: &Query) -> Result<Vec<Subtopic>> {
        self.map.get(&query.id).cloned().ok_or_else(|| {
            Error::InvalidInput(format!("no subtopic annotations for query {}", query.id))
        })
    }
}

/// Model-generated subtopics: asks the backend for one subtopic per line.
pub struct LlmSubtopics<G> {
    backend: G,
    max_output_tokens: u32,
}

impl<G: GenerationBackend> LlmSubtopics<G> {
    pub fn new(backend: G, max_output_tokens: u32) -> Self {
        LlmSubtopics { backend, max_output_tokens }
    }
}

impl<G: GenerationBackend> SubtopicSource for LlmSubtopics<G> {
    fn subtopics_for(&self, query: &Query) -> Result<Vec<Subtopic>> {
        let prompt = format!(
            "List the distinct subtopics a complete answer to the following \
             question should cover. Write one short subtopic per line. Output \
             only the subtopics.\n\
             \n\
             Question:\n{}",
            query.text
        );
        let req = GenerationRequest::new(prompt, 0.0, self.max_output_tokens)?;
        let reply = self.backend.generate(&req)?;
        Ok(parse_lines(&reply).into_iter().map(|label| Subtopic { label }).collect())
    }
}

// -------------------------------------------------------------- coverage

/// Decides whether a claim addresses a subtopic.
pub trait SubtopicMatcher: Send + Sync {
    fn covers(&self, claim: &Claim, subtopic: &Subtopic) -> Result<bool>;
}

/// Lexical matcher: case-insensitive containment of the subtopic label in
/// the claim text.
pub struct SubstringMatcher;

impl SubtopicMatcher for SubstringMatcher {
    fn covers(&self, claim: &Claim, subtopic: &Subtopic) -> Result<bool> {
        Ok(claim.text.to_lowercase().contains(&subtopic.label.to_lowercase()))
    }
}

/// Model-based matcher: the claim covers the subtopic when the claim
/// entails it.
pub struct NliMatcher<N> {
    nli: N,
}

impl<N: NliBackend> NliMatcher<N> {
    pub fn new(nli: N) -> Self {
        NliMatcher { nli }
    }
}

impl<N: NliBackend> SubtopicMatcher for NliMatcher<N> {
    fn covers(&self, claim: &Claim, subtopic: &Subtopic) -> Result<bool> {
        Ok(self.nli.nli(&claim.text, &subtopic.label)?.entailed())
    }
}

/// Fraction of subtopics addressed by at least one claim. Zero when there
/// are no subtopics.
pub fn coverage_of(
    claims: &[Claim],
    subtopics: &[Subtopic],
    matcher: &dyn SubtopicMatcher,
) -> Result<(f64, Vec<SubtopicReport>)> {
    let mut reports = Vec::with_capacity(subtopics.len());
    for subtopic in subtopics {
        let mut covered = false;
        for claim in claims {
            if matcher.covers(claim, subtopic)? {
                covered = true;
                break;
            }
        }
        reports.push(SubtopicReport { label: subtopic.label.clone(), covered });
    }
    if subtopics.is_empty() {
        return Ok((0.0, reports));
    }
    let covered = reports.iter().filter(|r| r.covered).count();
    Ok((covered as f64 / subtopics.len() as f64, reports))
}

// -------------------------------------------------------------- engine

/// Scores (query, response) pairs; what the rest of the engine optimizes.
pub trait Utility: Send + Sync {
    fn evaluate(&self, query: &Query, response: &str) -> Result<MetricReport>;
}

/// The composed metric: claims -> fact-check -> subtopics -> coverage -> F.
pub struct MetricEngine<'a> {
    pub level: Level,
    pub extractor: &'a dyn ClaimExtractor,
    pub retriever: &'a dyn Retriever,
    pub nli: &'a dyn NliBackend,
    pub subtopics: &'a dyn SubtopicSource,
    pub matcher: &'a dyn SubtopicMatcher,
    /// Evidence documents retrieved per claim during fact-checking.
    pub evidence_depth: usize,
}

impl MetricEngine<'_> {
    pub fn evaluate(&self, query: &Query, response: &str) -> Result<MetricReport> {
        let claims = extract_claims(response, self.extractor);
        let subtopic_list = self.subtopics.subtopics_for(query)?;

        let mut verdicts = Vec::with_capacity(claims.len());
        for claim in &claims {
            verdicts.push(verify_claim(claim, self.retriever, self.nli, self.evidence_depth)?);
        }
        let (coverage, subtopic_reports) = coverage_of(&claims, &subtopic_list, self.matcher)?;

        if claims.is_empty() || subtopic_list.is_empty() {
            return Ok(MetricReport::zero(verdicts, subtopic_reports));
        }
        let factuality = verdicts.iter().filter(|v| v.supported).count() as f64 / claims.len() as f64;
        let f = f_measure(coverage, factuality)?;
        Ok(MetricReport {
            coverage,
            factuality,
            f_measure: f,
            claims: verdicts,
            subtopics: subtopic_reports,
            degenerate: false,
        })
    }
}

impl Utility for MetricEngine<'_> {
    fn evaluate(&self, query: &Query, response: &str) -> Result<MetricReport> {
        MetricEngine::evaluate(self, query, response)
    }
}
