//! Engine configuration: one flat struct with working defaults, overridable
//! from a JSON file and then from command-line flags (flags win).

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::Level;
use crate::retrieval::Bm25Params;
use crate::reward::TrainConfig;

/// Which backend family serves generation/embedding/NLI calls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    /// Live chat-completions/embeddings endpoint, configured via `PURVIEW_*`
    /// environment variables.
    Http,
    /// Replies scripted in a JSON playbook file.
    Scripted,
    /// No generator; deterministic local embeddings and lexical NLI only.
    Offline,
}

impl FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_lowercase().as_str() {
            "http" => Ok(BackendKind::Http),
            "scripted" => Ok(BackendKind::Scripted),
            "offline" => Ok(BackendKind::Offline),
            other => Err(Error::InvalidInput(format!("unknown backend kind `{other}`"))),
        }
    }
}

/// Every knob the engine exposes. `EngineConfig::default()` reproduces the
/// reference setup; see the field docs for units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EngineConfig {
    // -- answer pipeline --
    /// Plans sampled per query.
    pub n_plans: usize,
    /// Generations per plan: one initial draft plus `rounds - 1` edits.
    pub rounds: usize,
    /// Total documents retrieved per plan, split across its steps.
    pub retrieval_budget: usize,
    pub planner_temperature: f64,
    pub generator_temperature: f64,
    pub editor_temperature: f64,
    pub max_output_tokens: u32,
    pub seed: u64,
    /// With planning off, every plan degenerates to a single step restating
    /// the query (plain best-of-N sampling).
    pub planning_enabled: bool,
    /// Worker threads for independent plan chains and per-query work.
    pub jobs: usize,
    /// Zero out wall-clock fields and timestamped names in outputs so reruns
    /// are byte-identical.
    pub deterministic: bool,

    // -- retrieval --
    /// Documents with fewer words than this are dropped at ingestion.
    pub min_words: usize,
    pub bm25_k1: f64,
    pub bm25_b: f64,
    /// Relevance/diversity trade-off for `sweep`/rerank experiments.
    pub mmr_lambda: f64,
    /// Candidate pool size fed to the reranker.
    pub mmr_pool: usize,

    // -- reward model --
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub holdout_fraction: f64,
    /// Train the pairwise loss on logits instead of sigmoid scores.
    pub logit_space: bool,
    /// Dimension of the local hashed embedder (scripted/offline backends).
    pub embedding_dim: usize,

    // -- self-training dataset builders --
    /// Plans sampled per query for the plan dataset.
    pub plan_budget: usize,
    /// Response pairs built per query for the edit/reward datasets.
    pub pair_budget: usize,
    /// Keep plan examples scoring at or above this percentile (0, 100].
    pub plan_percentile: f64,
    /// Minimum score gap for an edit pair.
    pub edit_margin: f64,
    /// Minimum score gap for a reward pair.
    pub reward_margin: f64,
    /// Sampling temperature for dataset generation.
    pub sample_temperature: f64,

    // -- metric --
    pub metric_level: Level,
    /// Evidence documents retrieved per claim during fact-checking.
    pub evidence_depth: usize,

    // -- backends --
    pub backend: BackendKind,
    /// Playbook path, required when `backend` is `scripted`.
    pub script_path: Option<PathBuf>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
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
            min_words: 50,
            bm25_k1: 1.2,
            bm25_b: 0.75,
            mmr_lambda: 0.1,
            mmr_pool: 100,
            learning_rate: 1e-2,
            epochs: 200,
            batch_size: 8,
            holdout_fraction: 0.2,
            logit_space: false,
            embedding_dim: 256,
            plan_budget: 32,
            pair_budget: 8,
            plan_percentile: 95.0,
            edit_margin: 0.1,
            reward_margin: 0.1,
            sample_temperature: 0.7,
            metric_level: Level::Auto,
            evidence_depth: 5,
            backend: BackendKind::Http,
            script_path: None,
        }
    }
}

/// Partial configuration: every field optional. Unset fields leave the
/// current value untouched.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverlay {
    pub n_plans: Option<usize>,
    pub rounds: Option<usize>,
    pub retrieval_budget: Option<usize>,
    pub planner_temperature: Option<f64>,
    pub generator_temperature: Option<f64>,
    pub editor_temperature: Option<f64>,
    pub max_output_tokens: Option<u32>,
    pub seed: Option<u64>,
    pub planning_enabled: Option<bool>,
    pub jobs: Option<usize>,
    pub deterministic: Option<bool>,
    pub min_words: Option<usize>,
    pub bm25_k1: Option<f64>,
    pub bm25_b: Option<f64>,
    pub mmr_lambda: Option<f64>,
    pub mmr_pool: Option<usize>,
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub holdout_fraction: Option<f64>,
    pub logit_space: Option<bool>,
    pub embedding_dim: Option<usize>,
    pub plan_budget: Option<usize>,
    pub pair_budget: Option<usize>,
    pub plan_percentile: Option<f64>,
    pub edit_margin: Option<f64>,
    pub reward_margin: Option<f64>,
    pub sample_temperature: Option<f64>,
    pub metric_level: Option<Level>,
    pub evidence_depth: Option<usize>,
    pub backend: Option<BackendKind>,
    pub script_path: Option<PathBuf>,
}

impl ConfigOverlay {
    /// Read an overlay from a JSON file. Unknown keys are an error to catch
    /// typos early.
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&raw).map_err(|e| Error::format(path, format!("bad config: {e}")))
    }
}

macro_rules! apply_fields {
    ($config:expr, $overlay:expr, direct: [$($field:ident),* $(,)?], wrapped: [$($opt:ident),* $(,)?]) => {
        $(if let Some(v) = $overlay.$field { $config.$field = v; })*
        $(if $overlay.$opt.is_some() { $config.$opt = $overlay.$opt.clone(); })*
    };
}

impl EngineConfig {
    /// Apply one overlay on top of this configuration.
    pub fn apply(&mut self, overlay: &ConfigOverlay) {
        let o = overlay.clone();
        apply_fields!(
            self, o,
            direct: [
                n_plans, rounds, retrieval_budget, planner_temperature,
                generator_temperature, editor_temperature, max_output_tokens,
                seed, planning_enabled, jobs, deterministic, min_words,
                bm25_k1, bm25_b, mmr_lambda, mmr_pool, learning_rate, epochs,
                batch_size, holdout_fraction, logit_space, embedding_dim,
                plan_budget, pair_budget, plan_percentile, edit_margin,
                reward_margin, sample_temperature, metric_level, evidence_depth,
                backend,
            ],
            wrapped: [script_path]
        );
    }

    /// Defaults, then the optional file overlay, then the flag overlay.
    pub fn resolve(file: Option<&Path>, flags: &ConfigOverlay) -> Result<EngineConfig> {
        let mut config = EngineConfig::default();
        if let Some(path) = file {
            config.apply(&ConfigOverlay::load(path)?);
        }
        config.apply(flags);
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let check_unit = |name: &str, v: f64| -> Result<()> {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} {v} outside [0, 1]")));
            }
            Ok(())
        };
        check_unit("planner_temperature", self.planner_temperature)?;
        check_unit("generator_temperature", self.generator_temperature)?;
        check_unit("editor_temperature", self.editor_temperature)?;
        check_unit("sample_temperature", self.sample_temperature)?;
        check_unit("mmr_lambda", self.mmr_lambda)?;
        check_unit("edit_margin", self.edit_margin)?;
        check_unit("reward_margin", self.reward_margin)?;
        let positive = |name: &str, v: usize| -> Result<()> {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
            Ok(())
        };
        positive("n_plans", self.n_plans)?;
        positive("rounds", self.rounds)?;
        positive("jobs", self.jobs)?;
        positive("batch_size", self.batch_size)?;
        positive("embedding_dim", self.embedding_dim)?;
        positive("plan_budget", self.plan_budget)?;
        positive("pair_budget", self.pair_budget)?;
        positive("evidence_depth", self.evidence_depth)?;
        positive("mmr_pool", self.mmr_pool)?;
        positive("epochs", self.epochs)?;
        if self.max_output_tokens == 0 {
            return Err(Error::Config("max_output_tokens must be >= 1".into()));
        }
        if !(self.plan_percentile > 0.0 && self.plan_percentile <= 100.0) {
            return Err(Error::Config(format!(
                "plan_percentile {} outside (0, 100]",
                self.plan_percentile
            )));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::Config(format!(
                "holdout_fraction {} outside [0, 1)",
                self.holdout_fraction
            )));
        }
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.bm25_k1 < 0.0 || !(0.0..=1.0).contains(&self.bm25_b) {
            return Err(Error::Config("bm25_k1 must be >= 0 and bm25_b in [0, 1]".into()));
        }
        if self.backend == BackendKind::Scripted && self.script_path.is_none() {
            return Err(Error::Config("scripted backend needs script_path".into()));
        }
        Ok(())
    }

    pub fn bm25_params(&self) -> Bm25Params {
        Bm25Params { k1: self.bm25_k1, b: self.bm25_b }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            holdout_fraction: self.holdout_fraction,
            logit_space: self.logit_space,
        }
    }

    /// Pretty JSON of the effective configuration.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
