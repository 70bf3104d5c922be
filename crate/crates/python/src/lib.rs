//! Python bindings for the answer engine: indexing and retrieval, the
//! plan/draft/refine pipeline, reward-head training, dataset builders, and
//! the standalone scoring helpers.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use purview_core::backends::offline::HashedEmbeddingBackend;
use purview_core::backends::scripted;
use purview_core::backends::NliLabel;
use purview_core::error::Error as CoreError;
use purview_core::metric::{MetricReport, Query, Utility};
use purview_core::orchestrator::{run_pipeline, PipelineConfig};
use purview_core::planner::{self, RetryLadder};
use purview_core::retrieval::{self, Bm25Params, Document, Retriever};
use purview_core::reward::{self, RewardPair, TrainConfig};
use purview_core::selftrain::{self, DatasetConfig};

fn to_py(e: CoreError) -> PyErr {
    match e {
        CoreError::InvalidInput(_) | CoreError::Config(_) | CoreError::DuplicateId(_) => {
            PyValueError::new_err(e.to_string())
        }
        CoreError::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Harmonic mean of coverage and factuality.
#[pyfunction]
fn f_measure(coverage: f64, factuality: f64) -> PyResult<f64> {
    purview_core::metric::f_measure(coverage, factuality).map_err(to_py)
}

/// Nearest-rank percentile threshold over raw scores; `z` in (0, 100].
#[pyfunction]
fn percentile_threshold(scores: Vec<f64>, z: f64) -> PyResult<f64> {
    selftrain::percentile_threshold(&scores, z).map_err(to_py)
}

/// Split a retrieval budget of `k` documents evenly over `steps` plan steps,
/// earliest steps taking any remainder.
#[pyfunction]
fn allocate_budget(k: usize, steps: usize) -> PyResult<Vec<usize>> {
    retrieval::allocate_budget(k, steps).map_err(to_py)
}

/// Preference loss `-ln sigmoid(preferred - other)` on a scored pair.
#[pyfunction]
fn pairwise_loss(preferred: f64, other: f64) -> f64 {
    reward::pairwise_loss(preferred, other)
}

/// Index of the highest score, earliest on ties; `None` for an empty list.
#[pyfunction]
fn select_best(scores: Vec<f64>) -> Option<usize> {
    reward::select_best(&scores)
}

/// The prompt that asks a model for a structured plan.
#[pyfunction]
fn build_plan_prompt(query: &str) -> String {
    planner::build_plan_prompt(query)
}

/// Parse a plan reply into `(title, reason, search query)` steps.
#[pyfunction]
fn parse_plan(reply: &str) -> PyResult<Vec<(String, String, String)>> {
    let plan = planner::parse_plan(reply, 0.0).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(plan
        .steps
        .into_iter()
        .map(|s| (s.aspect, s.reason, s.query))
        .collect())
}

/// Lowercased alphanumeric tokens, the unit of all lexical matching.
#[pyfunction]
fn tokenize(text: &str) -> Vec<String> {
    retrieval::tokenize(text)
}

/// The engine's default configuration as a JSON string.
#[pyfunction]
fn default_config() -> String {
    purview_core::EngineConfig::default().to_json()
}

/// BM25 index over (id, text) documents.
#[pyclass]
struct Index {
    inner: retrieval::Index,
}

#[pymethods]
impl Index {
    /// Index documents, dropping any under `min_words` words.
    #[staticmethod]
    #[pyo3(signature = (docs, min_words = 0))]
    fn build(docs: Vec<(String, String)>, min_words: usize) -> PyResult<Self> {
        let corpus = retrieval::ingest_corpus(
            docs.into_iter().map(|(id, body)| Document::new(id, body)),
            min_words,
        )
        .map_err(to_py)?;
        let inner = retrieval::build_index(&corpus, Bm25Params::default()).map_err(to_py)?;
        Ok(Index { inner })
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        Ok(Index { inner: retrieval::Index::load(&path).map_err(to_py)? })
    }

    fn save(&self, path: std::path::PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(to_py)
    }

    /// Top `k` documents as `(id, score)`, best first.
    fn retrieve(&self, query: &str, k: usize) -> PyResult<Vec<(String, f64)>> {
        self.inner.retrieve(query, k).map_err(to_py)
    }

    /// Diversity-reranked top `k` as `(id, objective)`.
    #[pyo3(signature = (query, k, lambda_ = 0.1, pool = 100))]
    fn retrieve_diverse(
        &self,
        query: &str,
        k: usize,
        lambda_: f64,
        pool: usize,
    ) -> PyResult<Vec<(String, f64)>> {
        retrieval::mmr_rerank(query, k, lambda_, pool, &self.inner).map_err(to_py)
    }

    /// Document body for an id, or `None`.
    fn document(&self, id: &str) -> Option<String> {
        self.inner.document(id).map(|d| d.body.clone())
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Index({} documents)", self.inner.len())
    }
}

/// Deterministic scripted model for tests and offline runs: queued
/// generation replies matched by substring, plus rule-based entailment.
#[pyclass]
struct ScriptedBackend {
    inner: scripted::ScriptedBackend,
}

#[pymethods]
impl ScriptedBackend {
    #[new]
    fn new() -> Self {
        ScriptedBackend { inner: scripted::ScriptedBackend::new() }
    }

    /// Load a JSON playbook (the same format the CLI's `--script` takes).
    #[staticmethod]
    fn from_playbook(json: &str) -> PyResult<Self> {
        Ok(ScriptedBackend {
            inner: scripted::ScriptedBackend::from_playbook_json(json).map_err(to_py)?,
        })
    }

    /// Queue `reply` for the next prompt containing `needle`.
    fn push_text(&self, needle: &str, reply: &str) {
        self.inner.push_text(needle, reply);
    }

    /// Add an entailment rule checked in insertion order.
    #[pyo3(signature = (entailed, premise_contains = None, hypothesis_contains = None, confidence = 0.9))]
    fn push_nli_rule(
        &self,
        entailed: bool,
        premise_contains: Option<&str>,
        hypothesis_contains: Option<&str>,
        confidence: f64,
    ) {
        let label = if entailed { NliLabel::Entailed } else { NliLabel::NotEntailed };
        self.inner.push_nli_rule(premise_contains, hypothesis_contains, label, confidence);
    }

    /// Scripted replies not yet consumed.
    fn unconsumed(&self) -> usize {
        self.inner.unconsumed()
    }

    fn __repr__(&self) -> String {
        format!("ScriptedBackend({} entries pending)", self.inner.unconsumed())
    }
}

/// Linear scoring head over hashed joint embeddings of (query, response).
#[pyclass]
struct RewardHead {
    inner: reward::RewardHead,
}

#[pymethods]
impl RewardHead {
    /// Train from `(query, better, worse)` preference triples. Returns the
    /// head and the held-out pairwise accuracy (`None` if nothing was held
    /// out).
    #[staticmethod]
    #[pyo3(signature = (
        pairs,
        dim = 256,
        epochs = 200,
        learning_rate = 0.01,
        batch_size = 8,
        holdout = 0.2,
        seed = 0,
        logit_space = false,
    ))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        pairs: Vec<(String, String, String)>,
        dim: usize,
        epochs: usize,
        learning_rate: f64,
        batch_size: usize,
        holdout: f64,
        seed: u64,
        logit_space: bool,
    ) -> PyResult<(Self, Option<f64>)> {
        let pairs: Vec<RewardPair> = pairs
            .into_iter()
            .map(|(query, better, worse)| RewardPair { query, better, worse })
            .collect();
        let embedder = HashedEmbeddingBackend::new(dim);
        let config = TrainConfig {
            learning_rate,
            epochs,
            batch_size,
            seed,
            holdout_fraction: holdout,
            logit_space,
        };
        let (head, report) = reward::train_head(&pairs, &embedder, &config).map_err(to_py)?;
        Ok((RewardHead { inner: head }, report.holdout_accuracy))
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        Ok(RewardHead { inner: reward::RewardHead::load(&path).map_err(to_py)? })
    }

    fn save(&self, path: std::path::PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(to_py)
    }

    /// Sigmoid score of one response for a query.
    fn score(&self, query: &str, response: &str) -> PyResult<f64> {
        let embedder = HashedEmbeddingBackend::new(self.inner.dim());
        self.inner.score(&embedder, query, response).map_err(to_py)
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn __repr__(&self) -> String {
        format!("RewardHead(dim={}, trained={})", self.inner.dim(), self.inner.is_trained())
    }
}

/// Run the full pipeline for one query against a scripted model. Returns
/// `(answer, selected index, candidates)` where each candidate is
/// `(plan, depth, score, text)`; scores are `None` without a reward head.
#[pyfunction]
#[pyo3(signature = (
    query,
    index,
    backend,
    n_plans = 2,
    rounds = 2,
    budget = 8,
    seed = 0,
    planning = true,
    head = None,
))]
#[allow(clippy::too_many_arguments, clippy::type_complexity)]
fn answer(
    query: &str,
    index: &Index,
    backend: &ScriptedBackend,
    n_plans: usize,
    rounds: usize,
    budget: usize,
    seed: u64,
    planning: bool,
    head: Option<&RewardHead>,
) -> PyResult<(String, usize, Vec<(usize, usize, Option<f64>, String)>)> {
    let config = PipelineConfig {
        n_plans,
        rounds,
        retrieval_budget: budget,
        seed,
        planning_enabled: planning,
        deterministic: true,
        ..PipelineConfig::default()
    };
    let embedder = head.map(|h| HashedEmbeddingBackend::new(h.inner.dim()));
    let selector = head
        .zip(embedder.as_ref())
        .map(|(h, e)| (&h.inner, e as &dyn purview_core::backends::EmbeddingBackend));
    let outcome =
        run_pipeline(query, &index.inner, &backend.inner, selector, &config).map_err(to_py)?;
    let candidates = outcome
        .trace
        .candidates
        .into_iter()
        .map(|c| (c.plan, c.depth, c.score, c.text))
        .collect();
    Ok((outcome.answer, outcome.trace.selected, candidates))
}

/// Scores responses by calling back into Python: `utility(query_id, query,
/// response) -> float`.
struct PyUtility {
    callback: Py<PyAny>,
}

impl Utility for PyUtility {
    fn evaluate(&self, query: &Query, response: &str) -> purview_core::Result<MetricReport> {
        let score: f64 = Python::attach(|py| {
            self.callback
                .call1(py, (query.id.as_str(), query.text.as_str(), response))?
                .extract(py)
        })
        .map_err(|e: PyErr| CoreError::Protocol(format!("python utility failed: {e}")))?;
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

fn dataset_config(
    plan_budget: usize,
    pair_budget: usize,
    percentile: f64,
    margin: f64,
    budget: usize,
    seed: u64,
) -> DatasetConfig {
    DatasetConfig {
        plan_budget,
        pair_budget,
        plan_percentile: percentile,
        edit_margin: margin,
        reward_margin: margin,
        sample_temperature: 0.7,
        generator_temperature: 0.1,
        retrieval_budget: budget,
        max_output_tokens: 4096,
        seed,
        ladder: RetryLadder::default(),
    }
}

fn to_queries(queries: Vec<(String, String)>) -> Vec<Query> {
    queries.into_iter().map(|(id, text)| Query::new(id, text)).collect()
}

/// Build plan-training examples: per query, keep the plans whose responses
/// score at or above the percentile cut. Returns
/// `(query_id, query, plan json, response, score)` tuples.
#[pyfunction]
#[pyo3(signature = (queries, index, backend, utility, plan_budget = 8, percentile = 95.0, budget = 8, seed = 0))]
#[allow(clippy::too_many_arguments, clippy::type_complexity)]
fn build_plan_dataset(
    queries: Vec<(String, String)>,
    index: &Index,
    backend: &ScriptedBackend,
    utility: Py<PyAny>,
    plan_budget: usize,
    percentile: f64,
    budget: usize,
    seed: u64,
) -> PyResult<Vec<(String, String, String, String, f64)>> {
    let config = dataset_config(plan_budget, 1, percentile, 0.1, budget, seed);
    let scorer = PyUtility { callback: utility };
    let (examples, _) = selftrain::build_plan_dataset(
        &to_queries(queries),
        &index.inner,
        &backend.inner,
        &scorer,
        &config,
    )
    .map_err(to_py)?;
    Ok(examples
        .into_iter()
        .map(|e| (e.query_id, e.query, e.plan, e.response, e.score))
        .collect())
}

/// Build edit-training pairs under one plan. Returns
/// `(query_id, query, plan json, worse, better, gap)` tuples.
#[pyfunction]
#[pyo3(signature = (queries, index, backend, utility, pair_budget = 4, margin = 0.1, budget = 8, seed = 0))]
#[allow(clippy::too_many_arguments, clippy::type_complexity)]
fn build_edit_dataset(
    queries: Vec<(String, String)>,
    index: &Index,
    backend: &ScriptedBackend,
    utility: Py<PyAny>,
    pair_budget: usize,
    margin: f64,
    budget: usize,
    seed: u64,
) -> PyResult<Vec<(String, String, String, String, String, f64)>> {
    let config = dataset_config(1, pair_budget, 95.0, margin, budget, seed);
    let scorer = PyUtility { callback: utility };
    let (examples, _) = selftrain::build_edit_dataset(
        &to_queries(queries),
        &index.inner,
        &backend.inner,
        &scorer,
        &config,
    )
    .map_err(to_py)?;
    Ok(examples
        .into_iter()
        .map(|e| (e.query_id, e.query, e.plan, e.worse, e.better, e.gap))
        .collect())
}

/// Build reward-training pairs across plans. Returns
/// `(query_id, query, worse, better, gap)` tuples.
#[pyfunction]
#[pyo3(signature = (queries, index, backend, utility, pair_budget = 4, margin = 0.1, budget = 8, seed = 0))]
#[allow(clippy::too_many_arguments, clippy::type_complexity)]
fn build_reward_dataset(
    queries: Vec<(String, String)>,
    index: &Index,
    backend: &ScriptedBackend,
    utility: Py<PyAny>,
    pair_budget: usize,
    margin: f64,
    budget: usize,
    seed: u64,
) -> PyResult<Vec<(String, String, String, String, f64)>> {
    let config = dataset_config(1, pair_budget, 95.0, margin, budget, seed);
    let scorer = PyUtility { callback: utility };
    let (examples, _) = selftrain::build_reward_dataset(
        &to_queries(queries),
        &index.inner,
        &backend.inner,
        &scorer,
        &config,
    )
    .map_err(to_py)?;
    Ok(examples
        .into_iter()
        .map(|e| (e.query_id, e.query, e.worse, e.better, e.gap))
        .collect())
}

#[pymodule]
fn purview(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Index>()?;
    m.add_class::<ScriptedBackend>()?;
    m.add_class::<RewardHead>()?;
    m.add_function(wrap_pyfunction!(f_measure, m)?)?;
    m.add_function(wrap_pyfunction!(percentile_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(allocate_budget, m)?)?;
    m.add_function(wrap_pyfunction!(pairwise_loss, m)?)?;
    m.add_function(wrap_pyfunction!(select_best, m)?)?;
    m.add_function(wrap_pyfunction!(build_plan_prompt, m)?)?;
    m.add_function(wrap_pyfunction!(parse_plan, m)?)?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(answer, m)?)?;
    m.add_function(wrap_pyfunction!(build_plan_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(build_edit_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(build_reward_dataset, m)?)?;
    Ok(())
}
