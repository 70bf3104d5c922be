//! Builders for the three self-training datasets: high-scoring plans,
//! worse/better edit pairs, and worse/better reward pairs. All selection is
//! driven by the utility metric; no human labels are involved.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::backends::GenerationBackend;
use crate::config::EngineConfig;
use crate::error::{Error, Result};
use crate::hash::fnv1a64_str;
use crate::metric::{Query, Utility};
use crate::orchestrator::{generate_initial, PipelineConfig};
use crate::planner::{sample_plans, Plan, RetryLadder};
use crate::retrieval::{assemble_context, Retriever};
use crate::reward::RewardPair;

/// Score at the given percentile of `scores` by the nearest-rank rule:
/// sort ascending and take the value at 1-based index `ceil(z/100 * n)`.
/// `z` must lie in (0, 100]; `scores` must be nonempty and finite.
pub fn percentile_threshold(scores: &[f64], z: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::InvalidInput("percentile of an empty score list".into()));
    }
    if !(z > 0.0 && z <= 100.0) {
        return Err(Error::InvalidInput(format!("percentile {z} outside (0, 100]")));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidInput("scores contain non-finite values".into()));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("scores are finite"));
    let n = sorted.len();
    let rank = ((z / 100.0) * n as f64).ceil() as usize;
    Ok(sorted[rank.clamp(1, n) - 1])
}

/// A plan whose response scored at or above the per-query percentile cut.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanExample {
    pub query_id: String,
    pub query: String,
    /// Canonical plan JSON.
    pub plan: String,
    pub response: String,
    pub score: f64,
}

/// A worse/better response pair drawn from one plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditExample {
    pub query_id: String,
    pub query: String,
    pub plan: String,
    pub worse: String,
    pub better: String,
    /// Utility gap `score(better) - score(worse)`, at least the edit margin.
    pub gap: f64,
}

/// A worse/better response pair drawn from two distinct plans.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardExample {
    pub query_id: String,
    pub query: String,
    pub worse: String,
    pub better: String,
    /// Utility gap `score(better) - score(worse)`, at least the reward margin.
    pub gap: f64,
}

impl From<&RewardExample> for RewardPair {
    fn from(e: &RewardExample) -> RewardPair {
        RewardPair { query: e.query.clone(), better: e.better.clone(), worse: e.worse.clone() }
    }
}

impl From<&EditExample> for RewardPair {
    fn from(e: &EditExample) -> RewardPair {
        RewardPair { query: e.query.clone(), better: e.better.clone(), worse: e.worse.clone() }
    }
}

/// Settings shared by the three builders.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    /// Plans sampled per query for the plan dataset.
    pub plan_budget: usize,
    /// Pairs attempted per query for the edit/reward datasets.
    pub pair_budget: usize,
    /// Percentile cut (0, 100] for plan retention.
    pub plan_percentile: f64,
    pub edit_margin: f64,
    pub reward_margin: f64,
    /// Temperature for diversity sampling (plans and edit-pair responses).
    pub sample_temperature: f64,
    /// Temperature for plain response drafting.
    pub generator_temperature: f64,
    pub retrieval_budget: usize,
    pub max_output_tokens: u32,
    pub seed: u64,
    pub ladder: RetryLadder,
}

impl From<&EngineConfig> for DatasetConfig {
    fn from(config: &EngineConfig) -> Self {
        DatasetConfig {
            plan_budget: config.plan_budget,
            pair_budget: config.pair_budget,
            plan_percentile: config.plan_percentile,
            edit_margin: config.edit_margin,
            reward_margin: config.reward_margin,
            sample_temperature: config.sample_temperature,
            generator_temperature: config.generator_temperature,
            retrieval_budget: config.retrieval_budget,
            max_output_tokens: config.max_output_tokens,
            seed: config.seed,
            ladder: RetryLadder::default(),
        }
    }
}

/// Counters from one builder run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BuildStats {
    pub queries_processed: usize,
    /// Queries dropped because generation or scoring failed.
    pub queries_skipped: usize,
    /// Candidate examples looked at before margin/percentile filtering.
    pub candidates_considered: usize,
}

fn query_seed(config: &DatasetConfig, query: &Query) -> u64 {
    config.seed ^ fnv1a64_str(&query.id)
}

/// Single-draft pipeline settings used to answer one plan.
fn drafting_config(config: &DatasetConfig, seed: u64, temperature: f64) -> PipelineConfig {
    PipelineConfig {
        n_plans: 1,
        rounds: 1,
        retrieval_budget: config.retrieval_budget,
        planner_temperature: config.sample_temperature,
        generator_temperature: temperature,
        editor_temperature: 0.0,
        max_output_tokens: config.max_output_tokens,
        seed,
        planning_enabled: true,
        jobs: 1,
        deterministic: true,
        ladder: config.ladder,
    }
}

/// Draft one response for `plan`. `variant` feeds the seed so repeated calls
/// with the same plan still draw distinct samples.
fn respond(
    query: &Query,
    plan: &Plan,
    variant: usize,
    temperature: f64,
    retriever: &dyn Retriever,
    backend: &dyn GenerationBackend,
    config: &DatasetConfig,
) -> Result<String> {
    let step_queries: Vec<String> = plan.steps.iter().map(|s| s.query.clone()).collect();
    let context = assemble_context(&step_queries, config.retrieval_budget, retriever)?;
    let cfg = drafting_config(config, query_seed(config, query), temperature);
    let candidate = generate_initial(&query.text, plan, variant, &context, backend, &cfg)?;
    Ok(candidate.text)
}

fn score(utility: &dyn Utility, query: &Query, response: &str) -> Result<f64> {
    Ok(utility.evaluate(query, response)?.f_measure)
}

/// Per query: sample `plan_budget` plans, draft one response each, and keep
/// the plans whose responses score at or above the `plan_percentile` cut for
/// that query. Queries that fail are skipped with a warning.
pub fn build_plan_dataset(
    queries: &[Query],
    retriever: &dyn Retriever,
    backend: &dyn GenerationBackend,
    utility: &dyn Utility,
    config: &DatasetConfig,
) -> Result<(Vec<PlanExample>, BuildStats)> {
    let mut examples = Vec::new();
    let mut stats = BuildStats::default();
    for query in queries {
        let attempt = || -> Result<Vec<PlanExample>> {
            let plans = sample_plans(
                &query.text,
                config.plan_budget,
                config.sample_temperature,
                &config.ladder,
                backend,
                config.max_output_tokens,
                Some(query_seed(config, query)),
            )?;
            let mut scored = Vec::with_capacity(plans.len());
            for (i, plan) in plans.iter().enumerate() {
                let response =
                    respond(query, plan, i, config.generator_temperature, retriever, backend, config)?;
                let s = score(utility, query, &response)?;
                scored.push((plan, response, s));
            }
            let threshold =
                percentile_threshold(&scored.iter().map(|(_, _, s)| *s).collect::<Vec<_>>(), config.plan_percentile)?;
            Ok(scored
                .into_iter()
                .filter(|(_, _, s)| *s >= threshold)
                .map(|(plan, response, s)| PlanExample {
                    query_id: query.id.clone(),
                    query: query.text.clone(),
                    plan: plan.to_json(),
                    response,
                    score: s,
                })
                .collect())
        };
        stats.candidates_considered += config.plan_budget;
        match attempt() {
            Ok(kept) => {
                stats.queries_processed += 1;
                examples.extend(kept);
            }
            Err(e) => {
                stats.queries_skipped += 1;
                log::warn!("plan dataset: skipping query {}: {e}", query.id);
            }
        }
    }
    Ok((examples, stats))
}

/// Per query: take one greedily decoded plan, draft `2 * pair_budget`
/// responses at the diversity temperature, pair them up consecutively, and
/// keep pairs whose utility gap reaches the edit margin, ordered
/// (worse, better).
pub fn build_edit_dataset(
    queries: &[Query],
    retriever: &dyn Retriever,
    backend: &dyn GenerationBackend,
    utility: &dyn Utility,
    config: &DatasetConfig,
) -> Result<(Vec<EditExample>, BuildStats)> {
    let mut examples = Vec::new();
    let mut stats = BuildStats::default();
    for query in queries {
        let attempt = || -> Result<Vec<EditExample>> {
            let plan = sample_plans(
                &query.text,
                1,
                0.0,
                &config.ladder,
                backend,
                config.max_output_tokens,
                Some(query_seed(config, query)),
            )?
            .remove(0);
            let mut responses = Vec::with_capacity(2 * config.pair_budget);
            for i in 0..2 * config.pair_budget {
                let response =
                    respond(query, &plan, i, config.sample_temperature, retriever, backend, config)?;
                let s = score(utility, query, &response)?;
                responses.push((response, s));
            }
            let mut kept = Vec::new();
            for pair in responses.chunks_exact(2) {
                let (a, b) = (&pair[0], &pair[1]);
                let (worse, better) = if a.1 <= b.1 { (a, b) } else { (b, a) };
                let gap = better.1 - worse.1;
                if gap >= config.edit_margin {
                    kept.push(EditExample {
                        query_id: query.id.clone(),
                        query: query.text.clone(),
                        plan: plan.to_json(),
                        worse: worse.0.clone(),
                        better: better.0.clone(),
                        gap,
                    });
                }
            }
            Ok(kept)
        };
        stats.candidates_considered += config.pair_budget;
        match attempt() {
            Ok(kept) => {
                stats.queries_processed += 1;
                examples.extend(kept);
            }
            Err(e) => {
                stats.queries_skipped += 1;
                log::warn!("edit dataset: skipping query {}: {e}", query.id);
            }
        }
    }
    Ok((examples, stats))
}

/// Per query: sample `2 * pair_budget` distinct plans, draft one response
/// each, pair responses from consecutive plans, and keep pairs whose utility
/// gap reaches the reward margin, ordered (worse, better).
pub fn build_reward_dataset(
    queries: &[Query],
    retriever: &dyn Retriever,
    backend: &dyn GenerationBackend,
    utility: &dyn Utility,
    config: &DatasetConfig,
) -> Result<(Vec<RewardExample>, BuildStats)> {
    let mut examples = Vec::new();
    let mut stats = BuildStats::default();
    for query in queries {
        let attempt = || -> Result<Vec<RewardExample>> {
            let plans = sample_plans(
                &query.text,
                2 * config.pair_budget,
                config.sample_temperature,
                &config.ladder,
                backend,
                config.max_output_tokens,
                Some(query_seed(config, query)),
            )?;
            let mut responses = Vec::with_capacity(plans.len());
            for (i, plan) in plans.iter().enumerate() {
                let response =
                    respond(query, plan, i, config.generator_temperature, retriever, backend, config)?;
                let s = score(utility, query, &response)?;
                responses.push((response, s));
            }
            let mut kept = Vec::new();
            for pair in responses.chunks_exact(2) {
                let (a, b) = (&pair[0], &pair[1]);
                let (worse, better) = if a.1 <= b.1 { (a, b) } else { (b, a) };
                let gap = better.1 - worse.1;
                if gap >= config.reward_margin {
                    kept.push(RewardExample {
                        query_id: query.id.clone(),
                        query: query.text.clone(),
                        worse: worse.0.clone(),
                        better: better.0.clone(),
                        gap,
                    });
                }
            }
            Ok(kept)
        };
        stats.candidates_considered += config.pair_budget;
        match attempt() {
            Ok(kept) => {
                stats.queries_processed += 1;
                examples.extend(kept);
            }
            Err(e) => {
                stats.queries_skipped += 1;
                log::warn!("reward dataset: skipping query {}: {e}", query.id);
            }
        }
    }
    Ok((examples, stats))
}

// ------------------------------------------------------------ file I/O

/// Write items as JSON lines.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    for item in items {
        let json = serde_json::to_string(item).expect("dataset line serializes");
        writeln!(out, "{json}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Read JSON lines back. Blank lines are skipped.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut items = Vec::new();
    for (lineno, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item: T = serde_json::from_str(&line)
            .map_err(|e| Error::format(path, format!("line {}: {e}", lineno + 1)))?;
        items.push(item);
    }
    Ok(items)
}

/// Load evaluation/training queries from JSON lines of `{"id", "text"}`.
/// Duplicate ids are an error.
pub fn read_queries_jsonl(path: &Path) -> Result<Vec<Query>> {
    let queries: Vec<Query> = read_jsonl(path)?;
    let mut seen = std::collections::HashSet::new();
    for q in &queries {
        if !seen.insert(&q.id) {
            return Err(Error::DuplicateId(q.id.clone()));
        }
    }
    Ok(queries)
}

/// Summary of one dataset build, written next to the dataset files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub version: u32,
    pub queries: usize,
    pub plan_examples: usize,
    pub edit_examples: usize,
    pub reward_examples: usize,
    pub plan_budget: usize,
    pub pair_budget: usize,
    pub plan_percentile: f64,
    pub edit_margin: f64,
    pub reward_margin: f64,
    pub sample_temperature: f64,
    pub seed: u64,
    /// How responses were grouped into pairs.
    pub pairing: String,
}

pub const MANIFEST_FORMAT: &str = "purview-datasets";
pub const MANIFEST_VERSION: u32 = 1;

impl DatasetManifest {
    pub fn new(
        config: &DatasetConfig,
        queries: usize,
        plan_examples: usize,
        edit_examples: usize,
        reward_examples: usize,
    ) -> Self {
        DatasetManifest {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            queries,
            plan_examples,
            edit_examples,
            reward_examples,
            plan_budget: config.plan_budget,
            pair_budget: config.pair_budget,
            plan_percentile: config.plan_percentile,
            edit_margin: config.edit_margin,
            reward_margin: config.reward_margin,
            sample_temperature: config.sample_temperature,
            seed: config.seed,
            pairing: "consecutive".into(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: DatasetManifest = serde_json::from_str(&raw)
            .map_err(|e| Error::format(path, format!("bad manifest: {e}")))?;
        if manifest.format != MANIFEST_FORMAT {
            return Err(Error::format(path, format!("not a dataset manifest: {}", manifest.format)));
        }
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::scripted::ScriptedBackend;
    use crate::metric::MetricReport;
    use crate::retrieval::{build_index, ingest_corpus, Bm25Params, Document, Index};
    use proptest::prelude::*;
    use std::collections::HashMap;

    #[test]
    fn percentile_nearest_rank_examples() {
        let scores: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        // rank = ceil(0.5 * 10) = 5 -> 5th smallest.
        assert_eq!(percentile_threshold(&scores, 50.0).unwrap(), 5.0);
        assert_eq!(percentile_threshold(&scores, 100.0).unwrap(), 10.0);
        assert_eq!(percentile_threshold(&scores, 1.0).unwrap(), 1.0);
        assert_eq!(percentile_threshold(&[7.0], 95.0).unwrap(), 7.0);
    }

    #[test]
    fn percentile_95_of_32_keeps_two() {
        let scores: Vec<f64> = (1..=32).map(|i| i as f64 / 32.0).collect();
        let threshold = percentile_threshold(&scores, 95.0).unwrap();
        let kept = scores.iter().filter(|&&s| s >= threshold).count();
        assert_eq!(kept, 2);
    }

    #[test]
    fn percentile_rejects_bad_input() {
        assert!(percentile_threshold(&[], 50.0).is_err());
        assert!(percentile_threshold(&[1.0], 0.0).is_err());
        assert!(percentile_threshold(&[1.0], 100.1).is_err());
        assert!(percentile_threshold(&[f64::NAN], 50.0).is_err());
    }

    proptest! {
        #[test]
        fn percentile_matches_sort_oracle(
            scores in proptest::collection::vec(-100.0f64..100.0, 1..50),
            z in 0.01f64..=100.0,
        ) {
            let got = percentile_threshold(&scores, z).unwrap();
            let mut sorted = scores.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let rank = ((z / 100.0) * sorted.len() as f64).ceil() as usize;
            let expect = sorted[rank.clamp(1, sorted.len()) - 1];
            prop_assert_eq!(got, expect);
            // The threshold is always one of the scores.
            prop_assert!(scores.contains(&got));
        }
    }

    struct TestUtility {
        scores: HashMap<String, f64>,
    }

    impl TestUtility {
        fn new(scores: &[(&str, f64)]) -> Self {
            TestUtility {
                scores: scores.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            }
        }
    }

    impl Utility for TestUtility {
        fn evaluate(&self, _query: &Query, response: &str) -> Result<MetricReport> {
            let score = *self
                .scores
                .get(response)
                .ok_or_else(|| Error::InvalidInput(format!("unscored response {response}")))?;
            Ok(MetricReport {
                coverage: score,
                factuality: score,
                f_measure: score,
                claims: Vec::new(),
                subtopics: Vec::new(),
                degenerate: false,
            })
        }
    }

    fn index() -> Index {
        let corpus = ingest_corpus(
            vec![Document::new("d1", "alpha facts"), Document::new("d2", "beta facts")],
            0,
        )
        .unwrap();
        build_index(&corpus, Bm25Params::default()).unwrap()
    }

    fn plan_json(marker: &str) -> String {
        serde_json::json!({
            "aspects": [{"title": format!("aspect-{marker}"), "reason": "r", "query": "alpha"}]
        })
        .to_string()
    }

    fn small_config() -> DatasetConfig {
        DatasetConfig {
            plan_budget: 4,
            pair_budget: 2,
            plan_percentile: 75.0,
            edit_margin: 0.1,
            reward_margin: 0.1,
            sample_temperature: 0.7,
            generator_temperature: 0.1,
            retrieval_budget: 2,
            max_output_tokens: 512,
            seed: 7,
            ladder: RetryLadder::default(),
        }
    }

    #[test]
    fn plan_dataset_keeps_top_percentile() {
        let idx = index();
        let backend = ScriptedBackend::new();
        // 4 plans; each plan's draft is keyed to its aspect marker.
        for i in 0..4 {
            backend.push_text("Reply with JSON only", plan_json(&format!("p{i}")));
        }
        for i in 0..4 {
            backend.push_text(format!("aspect-p{i}"), format!("response-{i}"));
        }
        let utility = TestUtility::new(&[
            ("response-0", 0.1),
            ("response-1", 0.4),
            ("response-2", 0.3),
            ("response-3", 0.2),
        ]);
        let queries = vec![Query::new("q1", "the question")];
        let (examples, stats) =
            build_plan_dataset(&queries, &idx, &backend, &utility, &small_config()).unwrap();
        // ceil(0.75 * 4) = 3rd smallest = 0.3; keep scores >= 0.3.
        assert_eq!(examples.len(), 2);
        assert!(examples.iter().all(|e| e.score >= 0.3));
        assert!(examples.iter().any(|e| e.response == "response-1"));
        assert_eq!(stats.queries_processed, 1);
        assert_eq!(stats.queries_skipped, 0);
        // Examples preserve the producing plan.
        assert!(examples.iter().all(|e| e.plan.contains("aspect-p")));
    }

    #[test]
    fn edit_dataset_pairs_and_margins() {
        let idx = index();
        let backend = ScriptedBackend::new();
        backend.push_text_at("Reply with JSON only", 0.0, plan_json("greedy"));
        for i in 0..4 {
            backend.push_text("aspect-greedy", format!("draft-{i}"));
        }
        let utility = TestUtility::new(&[
            ("draft-0", 0.1),
            ("draft-1", 0.5),
            ("draft-2", 0.3),
            ("draft-3", 0.35),
        ]);
        let queries = vec![Query::new("q1", "the question")];
        let (examples, stats) =
            build_edit_dataset(&queries, &idx, &backend, &utility, &small_config()).unwrap();
        // Pair (draft-0, draft-1): gap 0.4 kept. Pair (draft-2, draft-3): gap 0.05 dropped.
        assert_eq!(examples.len(), 1);
        assert_eq!(examples[0].worse, "draft-0");
        assert_eq!(examples[0].better, "draft-1");
        assert!((examples[0].gap - 0.4).abs() < 1e-12);
        assert_eq!(stats.queries_processed, 1);
        // All edit drafts were sampled at the diversity temperature.
        let temps = backend.generation_temperatures();
        assert_eq!(&temps[1..], &[0.7, 0.7, 0.7, 0.7]);
        assert_eq!(temps[0], 0.0); // the greedy plan
    }

    #[test]
    fn edit_dataset_orders_pairs_worse_first() {
        let idx = index();
        let backend = ScriptedBackend::new();
        backend.push_text_at("Reply with JSON only", 0.0, plan_json("greedy"));
        for i in 0..4 {
            backend.push_text("aspect-greedy", format!("draft-{i}"));
        }
        // First of the pair is better this time.
        let utility = TestUtility::new(&[
            ("draft-0", 0.9),
            ("draft-1", 0.2),
            ("draft-2", 0.0),
            ("draft-3", 0.9),
        ]);
        let queries = vec![Query::new("q1", "the question")];
        let (examples, _) =
            build_edit_dataset(&queries, &idx, &backend, &utility, &small_config()).unwrap();
        assert_eq!(examples.len(), 2);
        assert_eq!(examples[0].worse, "draft-1");
        assert_eq!(examples[0].better, "draft-0");
        assert_eq!(examples[1].worse, "draft-2");
        assert_eq!(examples[1].better, "draft-3");
    }

    #[test]
    fn reward_dataset_pairs_across_plans() {
        let idx = index();
        let backend = ScriptedBackend::new();
        for i in 0..4 {
            backend.push_text("Reply with JSON only", plan_json(&format!("r{i}")));
        }
        for i in 0..4 {
            backend.push_text(format!("aspect-r{i}"), format!("answer-{i}"));
        }
        let utility = TestUtility::new(&[
            ("answer-0", 0.9),
            ("answer-1", 0.2),
            ("answer-2", 0.4),
            ("answer-3", 0.45),
        ]);
        let queries = vec![Query::new("q1", "the question")];
        let (examples, _) =
            build_reward_dataset(&queries, &idx, &backend, &utility, &small_config()).unwrap();
        assert_eq!(examples.len(), 1);
        assert_eq!(examples[0].worse, "answer-1");
        assert_eq!(examples[0].better, "answer-0");
        assert!((examples[0].gap - 0.7).abs() < 1e-12);
    }

    #[test]
    fn failing_queries_are_skipped_not_fatal() {
        let idx = index();
        let backend = ScriptedBackend::new();
        // Script only query q2's needs; q1's plan sampling will exhaust.
        for _ in 0..4 {
            backend.push_text("q2 question", plan_json("ok"));
        }
        for i in 0..4 {
            backend.push_text("aspect-ok", format!("resp-{i}"));
        }
        let utility = TestUtility::new(&[
            ("resp-0", 0.1),
            ("resp-1", 0.2),
            ("resp-2", 0.3),
            ("resp-3", 0.4),
        ]);
        let queries = vec![Query::new("q1", "q1 question"), Query::new("q2", "q2 question")];
        let (examples, stats) =
            build_plan_dataset(&queries, &idx, &backend, &utility, &small_config()).unwrap();
        assert_eq!(stats.queries_skipped, 1);
        assert_eq!(stats.queries_processed, 1);
        assert!(examples.iter().all(|e| e.query_id == "q2"));
    }

    #[test]
    fn jsonl_round_trip_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("reward.jsonl");
        let examples = vec![RewardExample {
            query_id: "q".into(),
            query: "text".into(),
            worse: "w".into(),
            better: "b".into(),
            gap: 0.25,
        }];
        write_jsonl(&path, &examples).unwrap();
        let back: Vec<RewardExample> = read_jsonl(&path).unwrap();
        assert_eq!(back, examples);

        let manifest_path = dir.path().join("manifest.json");
        let manifest = DatasetManifest::new(&small_config(), 3, 5, 2, 1);
        manifest.save(&manifest_path).unwrap();
        let loaded = DatasetManifest::load(&manifest_path).unwrap();
        assert_eq!(loaded, manifest);
        assert_eq!(loaded.pairing, "consecutive");
    }

    #[test]
    fn queries_loader_rejects_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("queries.jsonl");
        std::fs::write(
            &path,
            "{\"id\": \"a\", \"text\": \"one\"}\n{\"id\": \"a\", \"text\": \"two\"}\n",
        )
        .unwrap();
        assert!(matches!(read_queries_jsonl(&path), Err(Error::DuplicateId(_))));
        std::fs::write(&path, "{\"id\": \"a\", \"text\": \"one\"}\n").unwrap();
        assert_eq!(read_queries_jsonl(&path).unwrap().len(), 1);
    }
}
