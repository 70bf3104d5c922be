use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use purview_core::backends::http::HttpBackend;
use purview_core::backends::offline::{HashedEmbeddingBackend, LexicalNli, LlmNli};
use purview_core::backends::scripted::ScriptedBackend;
use purview_core::backends::{EmbeddingBackend, GenerationBackend, NliBackend};
use purview_core::config::{BackendKind, ConfigOverlay, EngineConfig};
use purview_core::error::{Error, Result};
use purview_core::metric::{
    AnnotatedSubtopics, ClaimExtractor, Level, LlmClaims, LlmSubtopics, MetricEngine,
    MetricReport, NliMatcher, SentenceClaims, SubstringMatcher, SubtopicMatcher,
    SubtopicSource,
};
use purview_core::orchestrator::{run_pipeline, trace_filename, PipelineConfig, RunTrace};
use purview_core::retrieval::{build_index, read_corpus_jsonl, Index, MmrRetriever, Retriever};
use purview_core::reward::{train_head, RewardHead, RewardPair};
use purview_core::selftrain::{
    build_edit_dataset, build_plan_dataset, build_reward_dataset, read_jsonl,
    read_queries_jsonl, write_jsonl, DatasetConfig, DatasetManifest,
};

use crate::{
    AskArgs, BuildDatasetsArgs, Cli, Command, EvalArgs, IndexArgs, InspectTraceArgs, SweepArgs,
    TrainRewardArgs,
};

pub fn run(cli: Cli) -> Result<()> {
    let mut overlay = ConfigOverlay {
        seed: cli.seed,
        jobs: cli.jobs,
        deterministic: cli.deterministic.then_some(true),
        ..ConfigOverlay::default()
    };
    if let Some(kind) = &cli.backend {
        overlay.backend = Some(kind.parse::<BackendKind>()?);
    }
    if cli.script.is_some() {
        overlay.script_path.clone_from(&cli.script);
    }
    let config_path = cli.config.clone();
    match cli.command {
        Command::Index(args) => cmd_index(config_path.as_deref(), overlay, args),
        Command::Ask(args) => cmd_ask(config_path.as_deref(), overlay, args),
        Command::BuildDatasets(args) => cmd_build_datasets(config_path.as_deref(), overlay, args),
        Command::TrainReward(args) => cmd_train_reward(config_path.as_deref(), overlay, args),
        Command::Eval(args) => cmd_eval(config_path.as_deref(), overlay, args),
        Command::Sweep(args) => cmd_sweep(config_path.as_deref(), overlay, args),
        Command::InspectTrace(args) => cmd_inspect_trace(args),
    }
}

// ------------------------------------------------------------ backends

/// The generation/embedding/NLI backends for one invocation. Scripted runs
/// share a single consumption state across all three roles.
struct Stack {
    generator: Option<Arc<dyn GenerationBackend>>,
    embedder: Arc<dyn EmbeddingBackend>,
    nli: Arc<dyn NliBackend>,
    scripted: Option<Arc<ScriptedBackend>>,
}

impl Stack {
    fn build(config: &EngineConfig) -> Result<Stack> {
        match config.backend {
            BackendKind::Http => {
                let backend = Arc::new(HttpBackend::from_env()?);
                Ok(Stack {
                    generator: Some(backend.clone()),
                    embedder: backend.clone(),
                    nli: Arc::new(LlmNli::new(backend)),
                    scripted: None,
                })
            }
            BackendKind::Scripted => {
                let path = config
                    .script_path
                    .as_ref()
                    .ok_or_else(|| Error::Config("scripted backend needs --script".into()))?;
                let backend = Arc::new(ScriptedBackend::from_playbook_path(path)?);
                Ok(Stack {
                    generator: Some(backend.clone()),
                    embedder: backend.clone(),
                    nli: backend.clone(),
                    scripted: Some(backend),
                })
            }
            BackendKind::Offline => Ok(Stack {
                generator: None,
                embedder: Arc::new(HashedEmbeddingBackend::new(config.embedding_dim)),
                nli: Arc::new(LexicalNli::default()),
                scripted: None,
            }),
        }
    }

    fn generator(&self) -> Result<&dyn GenerationBackend> {
        self.generator.as_deref().ok_or_else(|| {
            Error::Config(
                "the offline backend cannot generate; use --backend http or scripted".into(),
            )
        })
    }

    fn generator_arc(&self) -> Result<Arc<dyn GenerationBackend>> {
        self.generator.clone().ok_or_else(|| {
            Error::Config(
                "the offline backend cannot generate; use --backend http or scripted".into(),
            )
        })
    }

    /// Scripted playbooks should be fully consumed; leftovers usually mean
    /// the scenario diverged from the script.
    fn warn_unconsumed(&self) {
        if let Some(scripted) = &self.scripted {
            let n = scripted.unconsumed();
            if n > 0 {
                log::warn!("{n} scripted replies were never consumed");
            }
        }
    }
}

/// The metric pieces for one invocation, owned so `MetricEngine` can borrow.
struct MetricStack {
    extractor: Box<dyn ClaimExtractor>,
    subtopics: Box<dyn SubtopicSource>,
    matcher: Box<dyn SubtopicMatcher>,
    nli: Arc<dyn NliBackend>,
    level: Level,
    evidence_depth: usize,
}

impl MetricStack {
    /// Manual: annotated subtopics, substring matching, sentence claims.
    /// Semi: annotated subtopics, NLI matching, sentence claims.
    /// Auto: model-generated subtopics and claims, NLI matching.
    fn build(config: &EngineConfig, stack: &Stack, subtopics_path: Option<&Path>) -> Result<Self> {
        let level = config.metric_level;
        let annotated = || -> Result<Box<dyn SubtopicSource>> {
            let path = subtopics_path.ok_or_else(|| {
                Error::Config(format!(
                    "metric level {level} needs --subtopics with annotated subtopics"
                ))
            })?;
            Ok(Box::new(AnnotatedSubtopics::load(path)?))
        };
        let (extractor, subtopics, matcher): (
            Box<dyn ClaimExtractor>,
            Box<dyn SubtopicSource>,
            Box<dyn SubtopicMatcher>,
        ) = match level {
            Level::Manual => (
                Box::new(SentenceClaims),
                annotated()?,
                Box::new(SubstringMatcher),
            ),
            Level::Semi => (
                Box::new(SentenceClaims),
                annotated()?,
                Box::new(NliMatcher::new(stack.nli.clone())),
            ),
            Level::Auto => (
                Box::new(LlmClaims::new(stack.generator_arc()?, config.max_output_tokens)),
                Box::new(LlmSubtopics::new(stack.generator_arc()?, config.max_output_tokens)),
                Box::new(NliMatcher::new(stack.nli.clone())),
            ),
        };
        Ok(MetricStack {
            extractor,
            subtopics,
            matcher,
            nli: stack.nli.clone(),
            level,
            evidence_depth: config.evidence_depth,
        })
    }

    fn engine<'a>(&'a self, retriever: &'a dyn Retriever) -> MetricEngine<'a> {
        MetricEngine {
            level: self.level,
            extractor: &*self.extractor,
            retriever,
            nli: &*self.nli,
            subtopics: &*self.subtopics,
            matcher: &*self.matcher,
            evidence_depth: self.evidence_depth,
        }
    }
}

fn apply_level(overlay: &mut ConfigOverlay, level: &Option<String>) -> Result<()> {
    if let Some(raw) = level {
        overlay.metric_level = Some(raw.parse::<Level>()?);
    }
    Ok(())
}

fn resolve(config_path: Option<&Path>, overlay: &ConfigOverlay) -> Result<EngineConfig> {
    EngineConfig::resolve(config_path, overlay)
}

/// Wrap the index in an MMR reranker when asked.
fn retriever_for<'a>(index: &'a Index, mmr: bool, config: &EngineConfig) -> Result<Box<dyn Retriever + 'a>> {
    if mmr {
        Ok(Box::new(MmrRetriever::new(index, config.mmr_lambda, config.mmr_pool)?))
    } else {
        Ok(Box::new(index))
    }
}

/// Map items to results on up to `jobs` threads, preserving order.
fn parallel_map<T, R, F>(items: &[T], jobs: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    let workers = jobs.clamp(1, items.len().max(1));
    if workers <= 1 {
        return items.iter().enumerate().map(|(i, item)| f(i, item)).collect();
    }
    let mut slots: Vec<Option<R>> = std::iter::repeat_with(|| None).take(items.len()).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let f = &f;
                scope.spawn(move || {
                    let mut out = Vec::new();
                    let mut i = w;
                    while i < items.len() {
                        out.push((i, f(i, &items[i])));
                        i += workers;
                    }
                    out
                })
            })
            .collect();
        for handle in handles {
            for (i, r) in handle.join().expect("eval worker does not panic") {
                slots[i] = Some(r);
            }
        }
    });
    slots.into_iter().map(|s| s.expect("every item mapped")).collect()
}

// ------------------------------------------------------------ index

fn cmd_index(config_path: Option<&Path>, mut overlay: ConfigOverlay, args: IndexArgs) -> Result<()> {
    overlay.min_words = args.min_words.or(overlay.min_words);
    let config = resolve(config_path, &overlay)?;
    if args.out.exists() && !args.force {
        return Err(Error::InvalidInput(format!(
            "{} already exists; pass --force to overwrite",
            args.out.display()
        )));
    }
    let corpus = read_corpus_jsonl(&args.corpus, config.min_words)?;
    let total = corpus.len() + corpus.dropped;
    let index = build_index(&corpus, config.bm25_params())?;
    index.save(&args.out)?;
    println!(
        "ingested {} / {} documents ({} under {} words)",
        corpus.len(),
        total,
        corpus.dropped,
        config.min_words
    );
    println!("index written to {}", args.out.display());
    Ok(())
}

// ------------------------------------------------------------ ask

fn load_head(reward: Option<&Path>, no_reward: bool, quiet: bool) -> Result<Option<RewardHead>> {
    match (reward, no_reward) {
        (Some(_), true) => Err(Error::InvalidInput(
            "--reward conflicts with --no-reward".into(),
        )),
        (Some(path), false) => Ok(Some(RewardHead::load(path)?)),
        (None, true) => Ok(None),
        (None, false) => {
            if !quiet {
                eprintln!(
                    "warning: no reward head given; returning the first candidate \
                     (pass --reward, or --no-reward to silence this)"
                );
            }
            Ok(None)
        }
    }
}

fn cmd_ask(config_path: Option<&Path>, mut overlay: ConfigOverlay, args: AskArgs) -> Result<()> {
    overlay.n_plans = args.n_plans.or(overlay.n_plans);
    overlay.rounds = args.rounds.or(overlay.rounds);
    overlay.retrieval_budget = args.budget.or(overlay.retrieval_budget);
    if args.no_planning {
        overlay.planning_enabled = Some(false);
    }
    let config = resolve(config_path, &overlay)?;
    if args.show_config {
        println!("{}", config.to_json());
        return Ok(());
    }
    let query = args
        .query
        .ok_or_else(|| Error::InvalidInput("a query is required (or pass --show-config)".into()))?;
    let index_path = args
        .index
        .ok_or_else(|| Error::InvalidInput("--index is required".into()))?;
    let index = Index::load(&index_path)?;
    let stack = Stack::build(&config)?;
    let generator = stack.generator()?;
    let head = load_head(args.reward.as_deref(), args.no_reward, false)?;

    let pipeline = PipelineConfig::from(&config);
    let retriever = retriever_for(&index, args.mmr, &config)?;
    let outcome = run_pipeline(
        &query,
        &*retriever,
        generator,
        head.as_ref().map(|h| (h, &*stack.embedder)),
        &pipeline,
    )?;

    let trace_dir = args.trace_dir.unwrap_or_else(|| PathBuf::from("traces"));
    std::fs::create_dir_all(&trace_dir).map_err(|e| Error::io(&trace_dir, e))?;
    let trace_path = trace_dir.join(trace_filename(&query, config.deterministic));
    outcome.trace.save(&trace_path)?;

    println!("{}", outcome.answer);
    eprintln!("trace: {}", trace_path.display());
    stack.warn_unconsumed();
    Ok(())
}

// ------------------------------------------------------------ build-datasets

fn cmd_build_datasets(
    config_path: Option<&Path>,
    mut overlay: ConfigOverlay,
    args: BuildDatasetsArgs,
) -> Result<()> {
    overlay.plan_budget = args.plan_budget.or(overlay.plan_budget);
    overlay.pair_budget = args.pair_budget.or(overlay.pair_budget);
    overlay.plan_percentile = args.percentile.or(overlay.plan_percentile);
    apply_level(&mut overlay, &args.level)?;
    let config = resolve(config_path, &overlay)?;

    let queries = read_queries_jsonl(&args.queries)?;
    let index = Index::load(&args.index)?;
    let stack = Stack::build(&config)?;
    let generator = stack.generator()?;
    let metric = MetricStack::build(&config, &stack, args.subtopics.as_deref())?;
    let engine = metric.engine(&index);
    let dataset_config = DatasetConfig::from(&config);

    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    let (plan_examples, plan_stats) =
        build_plan_dataset(&queries, &index, generator, &engine, &dataset_config)?;
    let (edit_examples, edit_stats) =
        build_edit_dataset(&queries, &index, generator, &engine, &dataset_config)?;
    let (reward_examples, reward_stats) =
        build_reward_dataset(&queries, &index, generator, &engine, &dataset_config)?;

    write_jsonl(&args.out_dir.join("plan.jsonl"), &plan_examples)?;
    write_jsonl(&args.out_dir.join("edit.jsonl"), &edit_examples)?;
    write_jsonl(&args.out_dir.join("reward.jsonl"), &reward_examples)?;
    let manifest = DatasetManifest::new(
        &dataset_config,
        queries.len(),
        plan_examples.len(),
        edit_examples.len(),
        reward_examples.len(),
    );
    manifest.save(&args.out_dir.join("manifest.json"))?;

    println!(
        "plan dataset: {} examples ({} queries, {} skipped)",
        plan_examples.len(),
        plan_stats.queries_processed,
        plan_stats.queries_skipped
    );
    println!(
        "edit dataset: {} pairs ({} queries, {} skipped)",
        edit_examples.len(),
        edit_stats.queries_processed,
        edit_stats.queries_skipped
    );
    println!(
        "reward dataset: {} pairs ({} queries, {} skipped)",
        reward_examples.len(),
        reward_stats.queries_processed,
        reward_stats.queries_skipped
    );
    println!("manifest: {}", args.out_dir.join("manifest.json").display());
    stack.warn_unconsumed();
    Ok(())
}

// ------------------------------------------------------------ train-reward

fn cmd_train_reward(
    config_path: Option<&Path>,
    mut overlay: ConfigOverlay,
    args: TrainRewardArgs,
) -> Result<()> {
    overlay.epochs = args.epochs.or(overlay.epochs);
    overlay.learning_rate = args.learning_rate.or(overlay.learning_rate);
    overlay.batch_size = args.batch_size.or(overlay.batch_size);
    overlay.holdout_fraction = args.holdout.or(overlay.holdout_fraction);
    if args.logit_space {
        overlay.logit_space = Some(true);
    }
    let config = resolve(config_path, &overlay)?;
    let pairs: Vec<RewardPair> = read_jsonl(&args.pairs)?;
    let stack = Stack::build(&config)?;
    let (head, report) = train_head(&pairs, &*stack.embedder, &config.train_config())?;
    head.save(&args.out)?;
    println!(
        "trained on {} pairs ({} held out) over {} epochs",
        report.pairs_trained, report.pairs_held_out, report.epochs_run
    );
    println!("final training loss {:.6}", report.final_train_loss);
    match report.holdout_accuracy {
        Some(acc) => println!("held-out pairwise accuracy {acc:.4}"),
        None => println!("held-out pairwise accuracy n/a (no held-out pairs)"),
    }
    println!("reward head written to {}", args.out.display());
    Ok(())
}

// ------------------------------------------------------------ eval

#[derive(Deserialize)]
struct ResponseRecord {
    query_id: String,
    response: String,
}

#[derive(Serialize)]
struct EvalRecord<'a> {
    query_id: &'a str,
    #[serde(flatten)]
    report: &'a MetricReport,
}

fn cmd_eval(config_path: Option<&Path>, mut overlay: ConfigOverlay, args: EvalArgs) -> Result<()> {
    apply_level(&mut overlay, &args.level)?;
    let config = resolve(config_path, &overlay)?;
    let queries = read_queries_jsonl(&args.queries)?;
    if queries.is_empty() {
        return Err(Error::InvalidInput("no queries to evaluate".into()));
    }
    let index = Index::load(&args.index)?;
    let stack = Stack::build(&config)?;
    let metric = MetricStack::build(&config, &stack, args.subtopics.as_deref())?;
    let retriever = retriever_for(&index, args.mmr, &config)?;
    let engine = metric.engine(&*retriever);

    // Either score supplied responses or run the pipeline per query.
    let responses: Vec<String> = match &args.responses {
        Some(path) => {
            let records: Vec<ResponseRecord> = read_jsonl(path)?;
            let by_id: std::collections::HashMap<&str, &str> = records
                .iter()
                .map(|r| (r.query_id.as_str(), r.response.as_str()))
                .collect();
            queries
                .iter()
                .map(|q| {
                    by_id.get(q.id.as_str()).map(|r| r.to_string()).ok_or_else(|| {
                        Error::InvalidInput(format!("no response for query {}", q.id))
                    })
                })
                .collect::<Result<_>>()?
        }
        None => {
            let generator = stack.generator()?;
            let head = load_head(args.reward.as_deref(), args.reward.is_none(), true)?;
            let pipeline = PipelineConfig::from(&config);
            let outcomes = parallel_map(&queries, config.jobs, |_, query| {
                run_pipeline(
                    &query.text,
                    &*retriever,
                    generator,
                    head.as_ref().map(|h| (h, &*stack.embedder)),
                    &pipeline,
                )
            });
            outcomes
                .into_iter()
                .map(|o| o.map(|outcome| outcome.answer))
                .collect::<Result<_>>()?
        }
    };

    let reports = parallel_map(&queries, config.jobs, |i, query| {
        engine.evaluate(query, &responses[i])
    });
    let mut collected = Vec::with_capacity(queries.len());
    for (query, report) in queries.iter().zip(reports) {
        let report = report?;
        let note = if report.degenerate { "  (degenerate)" } else { "" };
        println!(
            "{}  coverage={:.4}  factuality={:.4}  f={:.4}{note}",
            query.id, report.coverage, report.factuality, report.f_measure
        );
        collected.push(report);
    }
    let n = collected.len() as f64;
    let mean = |f: fn(&MetricReport) -> f64| collected.iter().map(f).sum::<f64>() / n;
    println!(
        "mean over {} queries  coverage={:.4}  factuality={:.4}  f={:.4}",
        collected.len(),
        mean(|r| r.coverage),
        mean(|r| r.factuality),
        mean(|r| r.f_measure)
    );

    if let Some(out) = &args.out {
        let records: Vec<EvalRecord> = queries
            .iter()
            .zip(&collected)
            .map(|(q, report)| EvalRecord { query_id: &q.id, report })
            .collect();
        write_jsonl(out, &records)?;
        eprintln!("reports written to {}", out.display());
    }
    stack.warn_unconsumed();
    Ok(())
}

// ------------------------------------------------------------ sweep

#[derive(Serialize)]
struct SweepRow {
    n_plans: usize,
    rounds: usize,
    pool: usize,
    z: Option<f64>,
    plan_examples: Option<usize>,
    mean_f: f64,
}

fn parse_usize_list(raw: &str, flag: &str) -> Result<Vec<usize>> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| Error::InvalidInput(format!("{flag}: bad value `{s}`: {e}")))
        })
        .collect()
}

fn parse_f64_list(raw: &str, flag: &str) -> Result<Vec<f64>> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::InvalidInput(format!("{flag}: bad value `{s}`: {e}")))
        })
        .collect()
}

fn cmd_sweep(config_path: Option<&Path>, mut overlay: ConfigOverlay, args: SweepArgs) -> Result<()> {
    if args.grid_budget.is_some() && (args.grid_n.is_some() || args.grid_rounds.is_some()) {
        return Err(Error::InvalidInput(
            "--grid-budget conflicts with --grid-n/--grid-rounds".into(),
        ));
    }
    apply_level(&mut overlay, &args.level)?;
    let config = resolve(config_path, &overlay)?;
    let queries = read_queries_jsonl(&args.queries)?;
    if queries.is_empty() {
        return Err(Error::InvalidInput("no queries to sweep over".into()));
    }
    let index = Index::load(&args.index)?;
    let stack = Stack::build(&config)?;
    let generator = stack.generator()?;
    let metric = MetricStack::build(&config, &stack, args.subtopics.as_deref())?;
    let engine = metric.engine(&index);
    let head = load_head(args.reward.as_deref(), args.reward.is_none(), true)?;

    // The (n_plans, rounds) axis: either explicit grids or total budgets
    // factored as best-of-N (n_plans=budget, rounds=1).
    let shapes: Vec<(usize, usize)> = match (&args.grid_budget, &args.grid_n, &args.grid_rounds) {
        (Some(budgets), _, _) => parse_usize_list(budgets, "--grid-budget")?
            .into_iter()
            .map(|budget| (budget, 1))
            .collect(),
        (None, n, rounds) => {
            let n_values = match n {
                Some(raw) => parse_usize_list(raw, "--grid-n")?,
                None => vec![config.n_plans],
            };
            let round_values = match rounds {
                Some(raw) => parse_usize_list(raw, "--grid-rounds")?,
                None => vec![config.rounds],
            };
            n_values
                .iter()
                .flat_map(|&n| round_values.iter().map(move |&t| (n, t)))
                .collect()
        }
    };
    let z_values: Vec<Option<f64>> = match &args.grid_z {
        Some(raw) => parse_f64_list(raw, "--grid-z")?.into_iter().map(Some).collect(),
        None => vec![None],
    };

    let mut rows = Vec::new();
    for &(n_plans, rounds) in &shapes {
        for &z in &z_values {
            let mut row_config = config.clone();
            row_config.n_plans = n_plans;
            row_config.rounds = rounds;
            if let Some(z) = z {
                row_config.plan_percentile = z;
            }
            row_config.validate()?;

            let pipeline = PipelineConfig::from(&row_config);
            let mut pool = 0usize;
            let mut f_sum = 0.0;
            for query in &queries {
                let outcome = run_pipeline(
                    &query.text,
                    &index,
                    generator,
                    head.as_ref().map(|h| (h, &*stack.embedder)),
                    &pipeline,
                )?;
                pool = outcome.trace.candidates.len();
                let report = engine.evaluate(query, &outcome.answer)?;
                f_sum += report.f_measure;
            }
            let plan_examples = match z {
                Some(_) => {
                    let dataset_config = DatasetConfig::from(&row_config);
                    let (examples, _) =
                        build_plan_dataset(&queries, &index, generator, &engine, &dataset_config)?;
                    Some(examples.len())
                }
                None => None,
            };
            rows.push(SweepRow {
                n_plans,
                rounds,
                pool,
                z,
                plan_examples,
                mean_f: f_sum / queries.len() as f64,
            });
        }
    }

    println!(
        "{:>7}  {:>6}  {:>5}  {:>6}  {:>10}  {:>8}",
        "n_plans", "rounds", "pool", "z", "plan_kept", "mean_f"
    );
    for row in &rows {
        let z = row.z.map_or_else(|| "-".to_string(), |z| format!("{z}"));
        let kept = row.plan_examples.map_or_else(|| "-".to_string(), |n| n.to_string());
        println!(
            "{:>7}  {:>6}  {:>5}  {:>6}  {:>10}  {:>8.4}",
            row.n_plans, row.rounds, row.pool, z, kept, row.mean_f
        );
    }
    if let Some(out) = &args.out {
        write_jsonl(out, &rows)?;
        eprintln!("rows written to {}", out.display());
    }
    stack.warn_unconsumed();
    Ok(())
}

// ------------------------------------------------------------ inspect-trace

fn cmd_inspect_trace(args: InspectTraceArgs) -> Result<()> {
    let trace = RunTrace::load(&args.path)?;
    println!("query: {}", trace.query);
    println!(
        "run: {} plan(s) x {} round(s), retrieval budget {}, seed {}, planning {}",
        trace.n_plans,
        trace.rounds,
        trace.retrieval_budget,
        trace.seed,
        if trace.planning_enabled { "on" } else { "off" }
    );
    println!(
        "selection: {} -> candidate {} of {} ({} ms)",
        trace.selection_method,
        trace.selected,
        trace.candidates.len(),
        trace.elapsed_ms
    );
    for plan in &trace.plans {
        println!(
            "plan {} (sampled at {:.2}, {} context docs)",
            plan.index,
            plan.origin_temperature,
            plan.context_doc_ids.len()
        );
        for (i, step) in plan.steps.iter().enumerate() {
            println!("  {}. {} | search: {}", i + 1, step.aspect, step.query);
        }
    }
    println!("candidates:");
    for (i, candidate) in trace.candidates.iter().enumerate() {
        let marker = if i == trace.selected { '*' } else { ' ' };
        let score = candidate
            .score
            .map_or_else(|| "   -  ".to_string(), |s| format!("{s:.4}"));
        println!(
            "{marker} [{i:>3}] plan {} depth {} temp {:.2} score {score} ({} chars)",
            candidate.plan,
            candidate.depth,
            candidate.temperature,
            candidate.text.len()
        );
        if args.full {
            for line in candidate.text.lines() {
                println!("      {line}");
            }
        }
    }
    println!("\nselected answer:\n{}", trace.candidates[trace.selected].text);
    Ok(())
}
