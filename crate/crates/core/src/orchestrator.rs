//! The answer pipeline: sample several plans, draft a grounded response per
//! plan, iteratively edit each draft, then pick the best candidate from the
//! combined pool.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backends::{require_nonempty, EmbeddingBackend, GenerationBackend, GenerationRequest};
use crate::config::EngineConfig;
use crate::error::{Error, Result};
use crate::planner::{sample_plans, Plan, PlanStep, RetryLadder};
use crate::retrieval::{assemble_context, RetrievedContext, Retriever};
use crate::reward::{score_pool, select_best, RewardHead};

/// One generated response and where it sits in the search.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub text: String,
    /// Which plan's chain this candidate belongs to.
    pub plan_index: usize,
    /// 0 for the initial draft, +1 per edit.
    pub edit_depth: usize,
    /// Decoding temperature that produced it.
    pub temperature: f64,
}

/// All candidates from one query, ordered by (plan_index, edit_depth).
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePool {
    candidates: Vec<Candidate>,
    n_plans: usize,
    rounds: usize,
}

impl CandidatePool {
    /// Wrap candidates, enforcing the accounting contract: exactly
    /// `n_plans * rounds` entries covering each (plan, depth) pair once, in
    /// lexicographic order.
    pub fn new(candidates: Vec<Candidate>, n_plans: usize, rounds: usize) -> Result<Self> {
        if candidates.len() != n_plans * rounds {
            return Err(Error::InvalidInput(format!(
                "pool has {} candidates, expected {} ({n_plans} plans x {rounds} rounds)",
                candidates.len(),
                n_plans * rounds
            )));
        }
        for (i, c) in candidates.iter().enumerate() {
            let (expect_plan, expect_depth) = (i / rounds, i % rounds);
            if c.plan_index != expect_plan || c.edit_depth != expect_depth {
                return Err(Error::InvalidInput(format!(
                    "candidate {i} is (plan {}, depth {}), expected (plan {expect_plan}, depth {expect_depth})",
                    c.plan_index, c.edit_depth
                )));
            }
        }
        Ok(CandidatePool { candidates, n_plans, rounds })
    }

    pub fn candidates(&self) -> &[Candidate] {
        &self.candidates
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn n_plans(&self) -> usize {
        self.n_plans
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    pub fn texts(&self) -> Vec<String> {
        self.candidates.iter().map(|c| c.text.clone()).collect()
    }
}

/// Knobs for one pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub n_plans: usize,
    /// Generations per plan: one initial draft plus `rounds - 1` edits.
    pub rounds: usize,
    pub retrieval_budget: usize,
    pub planner_temperature: f64,
    pub generator_temperature: f64,
    pub editor_temperature: f64,
    pub max_output_tokens: u32,
    pub seed: u64,
    pub planning_enabled: bool,
    pub jobs: usize,
    pub deterministic: bool,
    pub ladder: RetryLadder,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            n_plans: 4,
            rounds: 4,
            retrieval_budget: 40,
            planner_temperature: 0.7,
            generator_temperature: 0.1,
            editor_temperature: 0.0,
            max_output_tokens: 4096,
            seed: 0,
            planning_enabled: true,
            jobs: 1,
            deterministic: false,
            ladder: RetryLadder::default(),
        }
    }
}

impl From<&EngineConfig> for PipelineConfig {
    fn from(config: &EngineConfig) -> Self {
        PipelineConfig {
            n_plans: config.n_plans,
            rounds: config.rounds,
            retrieval_budget: config.retrieval_budget,
            planner_temperature: config.planner_temperature,
            generator_temperature: config.generator_temperature,
            editor_temperature: config.editor_temperature,
            max_output_tokens: config.max_output_tokens,
            seed: config.seed,
            planning_enabled: config.planning_enabled,
            jobs: config.jobs,
            deterministic: config.deterministic,
            ladder: RetryLadder::default(),
        }
    }
}

fn initial_prompt(query: &str, plan: &Plan, context: &RetrievedContext) -> String {
    let mut prompt = format!(
        "Answer the question below with a thorough, accurate, long-form response.\n\
         \n\
         Question:\n{query}\n\
         \n\
         Cover these aspects, in order:\n{}",
        plan.render_for_prompt()
    );
    if !context.is_empty() {
        prompt.push_str(&format!(
            "\nGround your statements in this evidence where it applies:\n{}",
            context.render_for_prompt()
        ));
    }
    prompt.push_str("\nWrite the full answer now.");
    prompt
}

fn refine_prompt(query: &str, plan: &Plan, previous: &str) -> String {
    format!(
        "Improve the draft answer below: fix factual errors, fill gaps in the \
         aspects it should cover, and remove unsupported statements.\n\
         \n\
         Question:\n{query}\n\
         \n\
         Aspects the answer must cover, in order:\n{}\
         \n\
         Draft:\n{previous}\n\
         \n\
         Write the improved answer now.",
        plan.render_for_prompt()
    )
}

/// Deterministic per-call seed so live endpoints that honor seeds still see
/// distinct draws per (plan, depth).
fn mix_seed(base: u64, plan_index: usize, depth: usize) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((plan_index as u64) << 20)
        .wrapping_add(depth as u64)
}

/// Draft the depth-0 response for one plan from its retrieved context.
pub fn generate_initial(
    query: &str,
    plan: &Plan,
    plan_index: usize,
    context: &RetrievedContext,
    backend: &dyn GenerationBackend,
    config: &PipelineConfig,
) -> Result<Candidate> {
    require_nonempty(query, "query")?;
    let req = GenerationRequest::new(
        initial_prompt(query, plan, context),
        config.generator_temperature,
        config.max_output_tokens,
    )?
    .with_seed(Some(mix_seed(config.seed, plan_index, 0)));
    let text = backend.generate(&req)?;
    Ok(Candidate { text, plan_index, edit_depth: 0, temperature: config.generator_temperature })
}

/// Produce the next candidate in a chain by editing the previous one. The
/// editor sees the plan and the draft but no retrieved documents. Fails when
/// the chain already holds `rounds` generations.
pub fn refine(
    query: &str,
    plan: &Plan,
    previous: &Candidate,
    backend: &dyn GenerationBackend,
    config: &PipelineConfig,
) -> Result<Candidate> {
    let depth = previous.edit_depth + 1;
    if depth >= config.rounds {
        return Err(Error::InvalidInput(format!(
            "chain for plan {} is complete: depth {} reached rounds {}",
            previous.plan_index, previous.edit_depth, config.rounds
        )));
    }
    let req = GenerationRequest::new(
        refine_prompt(query, plan, &previous.text),
        config.editor_temperature,
        config.max_output_tokens,
    )?
    .with_seed(Some(mix_seed(config.seed, previous.plan_index, depth)));
    let text = backend.generate(&req)?;
    Ok(Candidate {
        text,
        plan_index: previous.plan_index,
        edit_depth: depth,
        temperature: config.editor_temperature,
    })
}

/// Everything produced by the search phase.
#[derive(Debug, Clone)]
pub struct Exploration {
    pub plans: Vec<Plan>,
    pub contexts: Vec<RetrievedContext>,
    pub pool: CandidatePool,
}

/// Run the full search: sample `n_plans` plans (or trivial ones when
/// planning is disabled), retrieve a context per plan, and grow each plan's
/// chain to `rounds` candidates. Chains are independent and run on up to
/// `jobs` threads; results keep plan order either way.
pub fn explore(
    query: &str,
    retriever: &dyn Retriever,
    backend: &dyn GenerationBackend,
    config: &PipelineConfig,
) -> Result<Exploration> {
    require_nonempty(query, "query")?;
    if config.n_plans == 0 || config.rounds == 0 {
        return Err(Error::Config("n_plans and rounds must be >= 1".into()));
    }
    let plans = if config.planning_enabled {
        sample_plans(
            query,
            config.n_plans,
            config.planner_temperature,
            &config.ladder,
            backend,
            config.max_output_tokens,
            Some(config.seed),
        )?
    } else {
        vec![Plan::trivial(query); config.n_plans]
    };

    type ChainOutput = Result<(RetrievedContext, Vec<Candidate>)>;
    let run_chain = |(plan_index, plan): (usize, &Plan)| -> ChainOutput {
        let step_queries: Vec<String> = plan.steps.iter().map(|s| s.query.clone()).collect();
        let context = assemble_context(&step_queries, config.retrieval_budget, retriever)?;
        let mut chain = Vec::with_capacity(config.rounds);
        chain.push(generate_initial(query, plan, plan_index, &context, backend, config)?);
        for _ in 1..config.rounds {
            let next = refine(query, plan, chain.last().expect("chain is nonempty"), backend, config)?;
            chain.push(next);
        }
        Ok((context, chain))
    };

    let workers = config.jobs.max(1).min(plans.len());
    let mut results: Vec<Option<ChainOutput>> = (0..plans.len()).map(|_| None).collect();
    if workers <= 1 {
        for (i, plan) in plans.iter().enumerate() {
            results[i] = Some(run_chain((i, plan)));
        }
    } else {
        let outputs = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let plans = &plans;
                    let run_chain = &run_chain;
                    scope.spawn(move || {
                        let mut out = Vec::new();
                        let mut i = w;
                        while i < plans.len() {
                            out.push((i, run_chain((i, &plans[i]))));
                            i += workers;
                        }
                        out
                    })
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("chain worker does not panic"))
                .collect::<Vec<_>>()
        });
        for (i, result) in outputs {
            results[i] = Some(result);
        }
    }

    let mut contexts = Vec::with_capacity(plans.len());
    let mut candidates = Vec::with_capacity(plans.len() * config.rounds);
    for result in results {
        let (context, chain) = result.expect("every plan ran")?;
        contexts.push(context);
        candidates.extend(chain);
    }
    let pool = CandidatePool::new(candidates, plans.len(), config.rounds)?;
    Ok(Exploration { plans, contexts, pool })
}

/// One plan as recorded in a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePlan {
    pub index: usize,
    pub origin_temperature: f64,
    pub steps: Vec<PlanStep>,
    pub context_doc_ids: Vec<String>,
}

/// One candidate as recorded in a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceCandidate {
    pub plan: usize,
    pub depth: usize,
    pub temperature: f64,
    pub score: Option<f64>,
    pub text: String,
}

/// Replayable record of one pipeline run, written as JSON lines.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub query: String,
    pub n_plans: usize,
    pub rounds: usize,
    pub retrieval_budget: usize,
    pub seed: u64,
    pub planning_enabled: bool,
    /// "reward" when a head picked the answer, "first" otherwise.
    pub selection_method: String,
    /// Zero when the run was deterministic.
    pub elapsed_ms: u64,
    pub plans: Vec<TracePlan>,
    pub candidates: Vec<TraceCandidate>,
    /// Index into `candidates`.
    pub selected: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum TraceLine {
    Meta {
        version: u32,
        query: String,
        n_plans: usize,
        rounds: usize,
        retrieval_budget: usize,
        seed: u64,
        planning_enabled: bool,
        selection_method: String,
        elapsed_ms: u64,
    },
    Plan(TracePlan),
    Candidate(TraceCandidate),
    Selection {
        index: usize,
    },
}

const TRACE_VERSION: u32 = 1;

impl RunTrace {
    pub fn save(&self, path: &Path) -> Result<()> {
        use std::io::Write;
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        let mut write = |line: &TraceLine| -> Result<()> {
            let json = serde_json::to_string(line).expect("trace line serializes");
            writeln!(out, "{json}").map_err(|e| Error::io(path, e))
        };
        write(&TraceLine::Meta {
            version: TRACE_VERSION,
            query: self.query.clone(),
            n_plans: self.n_plans,
            rounds: self.rounds,
            retrieval_budget: self.retrieval_budget,
            seed: self.seed,
            planning_enabled: self.planning_enabled,
            selection_method: self.selection_method.clone(),
            elapsed_ms: self.elapsed_ms,
        })?;
        for plan in &self.plans {
            write(&TraceLine::Plan(plan.clone()))?;
        }
        for candidate in &self.candidates {
            write(&TraceLine::Candidate(candidate.clone()))?;
        }
        write(&TraceLine::Selection { index: self.selected })
    }

    pub fn load(path: &Path) -> Result<RunTrace> {
        use std::io::BufRead;
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut meta: Option<RunTrace> = None;
        let mut plans = Vec::new();
        let mut candidates = Vec::new();
        let mut selected: Option<usize> = None;
        for (lineno, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: TraceLine = serde_json::from_str(&line)
                .map_err(|e| Error::format(path, format!("line {}: {e}", lineno + 1)))?;
            match parsed {
                TraceLine::Meta {
                    version,
                    query,
                    n_plans,
                    rounds,
                    retrieval_budget,
                    seed,
                    planning_enabled,
                    selection_method,
                    elapsed_ms,
                } => {
                    if version != TRACE_VERSION {
                        return Err(Error::format(path, format!("unsupported trace version {version}")));
                    }
                    meta = Some(RunTrace {
                        query,
                        n_plans,
                        rounds,
                        retrieval_budget,
                        seed,
                        planning_enabled,
                        selection_method,
                        elapsed_ms,
                        plans: Vec::new(),
                        candidates: Vec::new(),
                        selected: 0,
                    });
                }
                TraceLine::Plan(p) => plans.push(p),
                TraceLine::Candidate(c) => candidates.push(c),
                TraceLine::Selection { index } => selected = Some(index),
            }
        }
        let mut trace = meta.ok_or_else(|| Error::format(path, "trace has no meta line"))?;
        trace.plans = plans;
        trace.candidates = candidates;
        trace.selected =
            selected.ok_or_else(|| Error::format(path, "trace has no selection line"))?;
        if trace.selected >= trace.candidates.len() {
            return Err(Error::format(path, "selection index out of range"));
        }
        Ok(trace)
    }
}

/// File name for a query's trace: hex hash of the query text, plus
/// milliseconds since the epoch unless `deterministic` naming is requested.
pub fn trace_filename(query: &str, deterministic: bool) -> String {
    let h = crate::hash::fnv1a64_str(query);
    if deterministic {
        format!("{h:016x}.trace.jsonl")
    } else {
        let ms = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis())
            .unwrap_or(0);
        format!("{h:016x}-{ms}.trace.jsonl")
    }
}

/// Final answer plus its trace.
#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub answer: String,
    pub trace: RunTrace,
}

/// Run the whole pipeline for one query. With a reward head and embedder the
/// answer is the highest-scoring candidate; without, the first candidate
/// (plan 0, depth 0) is returned and the trace says so.
pub fn run_pipeline(
    query: &str,
    retriever: &dyn Retriever,
    backend: &dyn GenerationBackend,
    selector: Option<(&RewardHead, &dyn EmbeddingBackend)>,
    config: &PipelineConfig,
) -> Result<PipelineOutcome> {
    let started = std::time::Instant::now();
    let exploration = explore(query, retriever, backend, config)?;
    let Exploration { plans, contexts, pool } = exploration;

    let (scores, selected, selection_method) = match selector {
        Some((head, embedder)) => {
            let scores = score_pool(head, embedder, query, &pool.texts())?;
            let selected = select_best(&scores).expect("pool is nonempty");
            (Some(scores), selected, "reward")
        }
        None => (None, 0, "first"),
    };

    let trace_plans = plans
        .iter()
        .zip(&contexts)
        .enumerate()
        .map(|(index, (plan, context))| TracePlan {
            index,
            origin_temperature: plan.origin_temperature,
            steps: plan.steps.clone(),
            context_doc_ids: context.docs.iter().map(|d| d.id.clone()).collect(),
        })
        .collect();
    let trace_candidates = pool
        .candidates()
        .iter()
        .enumerate()
        .map(|(i, c)| TraceCandidate {
            plan: c.plan_index,
            depth: c.edit_depth,
            temperature: c.temperature,
            score: scores.as_ref().map(|s| s[i]),
            text: c.text.clone(),
        })
        .collect();

    let answer = pool.candidates()[selected].text.clone();
    let trace = RunTrace {
        query: query.to_owned(),
        n_plans: config.n_plans,
        rounds: config.rounds,
        retrieval_budget: config.retrieval_budget,
        seed: config.seed,
        planning_enabled: config.planning_enabled,
        selection_method: selection_method.to_owned(),
        elapsed_ms: if config.deterministic { 0 } else { started.elapsed().as_millis() as u64 },
        plans: trace_plans,
        candidates: trace_candidates,
        selected,
    };
    Ok(PipelineOutcome { answer, trace })
}
