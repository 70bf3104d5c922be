use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use purview_core::Error;

mod commands;

#[derive(Parser)]
#[command(
    name = "purview",
    version,
    about = "Plan, retrieve, draft, refine, and rank long-form answers.",
    propagate_version = true
)]
pub struct Cli {
    /// JSON configuration file. Precedence: flags > file > defaults.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Seed for planning, drafting, and training randomness.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for per-plan and per-query work.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Zero wall-clock fields and timestamped names so reruns are
    /// byte-identical.
    #[arg(long, global = true)]
    pub deterministic: bool,

    /// Backend family: http, scripted, or offline.
    #[arg(long, global = true, value_name = "KIND")]
    pub backend: Option<String>,

    /// Reply playbook file for the scripted backend.
    #[arg(long, global = true, value_name = "PATH")]
    pub script: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Build a search index from a JSON-lines corpus.
    Index(IndexArgs),
    /// Answer one query end to end and write its run trace.
    Ask(AskArgs),
    /// Build the plan/edit/reward self-training datasets.
    BuildDatasets(BuildDatasetsArgs),
    /// Fit the reward head on worse/better response pairs.
    TrainReward(TrainRewardArgs),
    /// Score responses for a set of queries and report per-query and mean
    /// metrics.
    Eval(EvalArgs),
    /// Run the pipeline across a grid of configurations and tabulate results.
    Sweep(SweepArgs),
    /// Pretty-print a saved run trace.
    InspectTrace(InspectTraceArgs),
}

#[derive(Args)]
pub struct IndexArgs {
    /// JSON-lines corpus of {"id", "text"} records.
    #[arg(long, value_name = "PATH")]
    pub corpus: PathBuf,
    /// Where to write the index.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Drop documents with fewer words than this.
    #[arg(long)]
    pub min_words: Option<usize>,
    /// Overwrite an existing index file.
    #[arg(long)]
    pub force: bool,
}

#[derive(Args)]
pub struct AskArgs {
    /// The question to answer. Optional with --show-config.
    pub query: Option<String>,
    /// Index file built by `purview index`.
    #[arg(long, value_name = "PATH")]
    pub index: Option<PathBuf>,
    /// Trained reward head used to pick the best candidate.
    #[arg(long, value_name = "PATH")]
    pub reward: Option<PathBuf>,
    /// Skip reward ranking and return the first candidate.
    #[arg(long)]
    pub no_reward: bool,
    /// Plans sampled for the query.
    #[arg(long)]
    pub n_plans: Option<usize>,
    /// Generations per plan (one draft plus rounds-1 edits).
    #[arg(long)]
    pub rounds: Option<usize>,
    /// Total documents retrieved per plan.
    #[arg(long)]
    pub budget: Option<usize>,
    /// Replace sampled plans with a single step restating the query.
    #[arg(long)]
    pub no_planning: bool,
    /// Rerank retrieval with maximal marginal relevance.
    #[arg(long)]
    pub mmr: bool,
    /// Directory for trace files (default `traces`).
    #[arg(long, value_name = "DIR")]
    pub trace_dir: Option<PathBuf>,
    /// Print the effective configuration as JSON and exit.
    #[arg(long)]
    pub show_config: bool,
}

#[derive(Args)]
pub struct BuildDatasetsArgs {
    /// JSON-lines queries of {"id", "text"} records.
    #[arg(long, value_name = "PATH")]
    pub queries: PathBuf,
    /// Index file built by `purview index`.
    #[arg(long, value_name = "PATH")]
    pub index: PathBuf,
    /// Directory for plan.jsonl, edit.jsonl, reward.jsonl, manifest.json.
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
    /// Annotated subtopics file for manual/semi metric levels.
    #[arg(long, value_name = "PATH")]
    pub subtopics: Option<PathBuf>,
    /// Metric level: manual, semi, or auto.
    #[arg(long, value_name = "LEVEL")]
    pub level: Option<String>,
    /// Plans sampled per query for the plan dataset.
    #[arg(long)]
    pub plan_budget: Option<usize>,
    /// Response pairs built per query for the edit/reward datasets.
    #[arg(long)]
    pub pair_budget: Option<usize>,
    /// Keep plan examples scoring at or above this percentile.
    #[arg(long)]
    pub percentile: Option<f64>,
}

#[derive(Args)]
pub struct TrainRewardArgs {
    /// JSON-lines pairs with "query", "better", "worse" fields.
    #[arg(long, value_name = "PATH")]
    pub pairs: PathBuf,
    /// Where to write the trained head.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Fraction of pairs held out for accuracy reporting.
    #[arg(long)]
    pub holdout: Option<f64>,
    /// Train the pairwise loss on logits instead of sigmoid scores.
    #[arg(long)]
    pub logit_space: bool,
}

#[derive(Args)]
pub struct EvalArgs {
    /// JSON-lines queries of {"id", "text"} records.
    #[arg(long, value_name = "PATH")]
    pub queries: PathBuf,
    /// Index file built by `purview index`.
    #[arg(long, value_name = "PATH")]
    pub index: PathBuf,
    /// JSON-lines {"query_id", "response"} to score instead of running the
    /// pipeline.
    #[arg(long, value_name = "PATH")]
    pub responses: Option<PathBuf>,
    /// Reward head for candidate selection when running the pipeline.
    #[arg(long, value_name = "PATH")]
    pub reward: Option<PathBuf>,
    /// Annotated subtopics file for manual/semi metric levels.
    #[arg(long, value_name = "PATH")]
    pub subtopics: Option<PathBuf>,
    /// Metric level: manual, semi, or auto.
    #[arg(long, value_name = "LEVEL")]
    pub level: Option<String>,
    /// Rerank retrieval with maximal marginal relevance.
    #[arg(long)]
    pub mmr: bool,
    /// Write per-query reports as JSON lines.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SweepArgs {
    /// JSON-lines queries of {"id", "text"} records.
    #[arg(long, value_name = "PATH")]
    pub queries: PathBuf,
    /// Index file built by `purview index`.
    #[arg(long, value_name = "PATH")]
    pub index: PathBuf,
    /// Comma-separated plan counts to sweep.
    #[arg(long, value_name = "LIST")]
    pub grid_n: Option<String>,
    /// Comma-separated rounds-per-plan values to sweep.
    #[arg(long, value_name = "LIST")]
    pub grid_rounds: Option<String>,
    /// Comma-separated total generation budgets; each runs as
    /// (n_plans=budget, rounds=1). Conflicts with --grid-n/--grid-rounds.
    #[arg(long, value_name = "LIST")]
    pub grid_budget: Option<String>,
    /// Comma-separated plan-retention percentiles; adds a plan-dataset
    /// retention column.
    #[arg(long, value_name = "LIST")]
    pub grid_z: Option<String>,
    /// Reward head for candidate selection.
    #[arg(long, value_name = "PATH")]
    pub reward: Option<PathBuf>,
    /// Annotated subtopics file for manual/semi metric levels.
    #[arg(long, value_name = "PATH")]
    pub subtopics: Option<PathBuf>,
    /// Metric level: manual, semi, or auto.
    #[arg(long, value_name = "LEVEL")]
    pub level: Option<String>,
    /// Write result rows as JSON lines.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct InspectTraceArgs {
    /// Trace file written by `purview ask`.
    pub path: PathBuf,
    /// Also print every candidate's full text.
    #[arg(long)]
    pub full: bool,
}

/// 0 success, 1 user error (bad input/config/files), 2 internal error
/// (backend, training, or script failures).
fn exit_code_for(error: &Error) -> u8 {
    match error {
        Error::InvalidInput(_)
        | Error::Config(_)
        | Error::DuplicateId(_)
        | Error::Io { .. }
        | Error::Format { .. } => 1,
        Error::Transport { .. }
        | Error::Protocol(_)
        | Error::ScriptExhausted(_)
        | Error::PlanParse(_)
        | Error::LadderExhausted { .. }
        | Error::Diverged { .. } => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
