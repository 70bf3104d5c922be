//! Scalar reward model over frozen embeddings: a sigmoid head scores
//! (query, response) pairs, trained on better/worse response pairs with a
//! pairwise logistic loss.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backends::EmbeddingBackend;
use crate::error::{Error, Result};

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Pairwise logistic loss `-ln sigmoid(preferred - other)`. At equal inputs
/// this is `ln 2`.
pub fn pairwise_loss(preferred: f64, other: f64) -> f64 {
    softplus(other - preferred)
}

/// One preference example: for `query`, `better` beat `worse`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardPair {
    pub query: String,
    pub better: String,
    pub worse: String,
}

/// Linear head over a frozen text encoder. The score of a (query, response)
/// pair is `sigmoid(W . embed(query SEP response))`.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardHead {
    weights: Vec<f64>,
    separator: String,
    trained: bool,
}

pub const DEFAULT_SEPARATOR: &str = "\n[SEP]\n";

impl RewardHead {
    /// Fresh zero head; scores everything 0.5 until trained.
    pub fn zeros(dim: usize) -> Self {
        RewardHead { weights: vec![0.0; dim], separator: DEFAULT_SEPARATOR.into(), trained: false }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    /// The text joining query and response before embedding.
    pub fn joint_input(&self, query: &str, response: &str) -> String {
        format!("{query}{}{response}", self.separator)
    }

    /// Pre-sigmoid score of an already-embedded joint input.
    pub fn logit(&self, embedding: &[f64]) -> Result<f64> {
        if embedding.len() != self.weights.len() {
            return Err(Error::InvalidInput(format!(
                "embedding dimension {} does not match head dimension {}",
                embedding.len(),
                self.weights.len()
            )));
        }
        Ok(self.weights.iter().zip(embedding).map(|(w, e)| w * e).sum())
    }

    /// Score in (0, 1) for a (query, response) pair.
    pub fn score(&self, embedder: &dyn EmbeddingBackend, query: &str, response: &str) -> Result<f64> {
        let embedding = embedder.embed(&self.joint_input(query, response))?;
        Ok(sigmoid(self.logit(&embedding.values)?))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = HeadFile {
            format: FORMAT_NAME.into(),
            version: FORMAT_VERSION,
            dimension: self.weights.len(),
            separator: self.separator.clone(),
            trained: self.trained,
            weights: self.weights.clone(),
        };
        let mut out = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let json = serde_json::to_string_pretty(&file).expect("head serializes");
        out.write_all(json.as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: HeadFile = serde_json::from_str(&raw)
            .map_err(|e| Error::format(path, format!("bad reward head: {e}")))?;
        if file.format != FORMAT_NAME {
            return Err(Error::format(path, format!("not a reward head file: {}", file.format)));
        }
        if file.version != FORMAT_VERSION {
            return Err(Error::format(path, format!("unsupported version {}", file.version)));
        }
        if file.weights.len() != file.dimension {
            return Err(Error::format(
                path,
                format!("dimension {} but {} weights", file.dimension, file.weights.len()),
            ));
        }
        Ok(RewardHead { weights: file.weights, separator: file.separator, trained: file.trained })
    }
}

const FORMAT_NAME: &str = "purview-reward-head";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct HeadFile {
    format: String,
    version: u32,
    dimension: usize,
    separator: String,
    trained: bool,
    weights: Vec<f64>,
}

/// Training settings for [`train_head`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Fraction of pairs held out for the accuracy report.
    pub holdout_fraction: f64,
    /// When true, the pairwise loss is applied to pre-sigmoid logits instead
    /// of the sigmoid scores. Trains faster; off by default to keep the loss
    /// exactly `-ln sigmoid(score_better - score_worse)`.
    pub logit_space: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-2,
            epochs: 200,
            batch_size: 8,
            seed: 0,
            holdout_fraction: 0.2,
            logit_space: false,
        }
    }
}

/// Outcome of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub pairs_trained: usize,
    pub pairs_held_out: usize,
    pub epochs_run: usize,
    pub final_train_loss: f64,
    /// Fraction of held-out pairs where the better response strictly outscores
    /// the worse one. `None` when nothing was held out.
    pub holdout_accuracy: Option<f64>,
}

/// Loss and gradient of one pair at the given weights.
///
/// `e1` embeds the preferred response's joint input, `e0` the other's.
/// With `logit_space` false the loss is `-ln sigmoid(s1 - s0)` on sigmoid
/// scores `s = sigmoid(W.e)`; with it true, on the raw logits.
pub fn loss_and_gradient(
    weights: &[f64],
    e1: &[f64],
    e0: &[f64],
    logit_space: bool,
) -> (f64, Vec<f64>) {
    let dot = |e: &[f64]| weights.iter().zip(e).map(|(w, x)| w * x).sum::<f64>();
    let z1 = dot(e1);
    let z0 = dot(e0);
    if logit_space {
        let g = z1 - z0;
        let loss = softplus(-g);
        let coeff = sigmoid(g) - 1.0;
        let grad = e1.iter().zip(e0).map(|(a, b)| coeff * (a - b)).collect();
        (loss, grad)
    } else {
        let s1 = sigmoid(z1);
        let s0 = sigmoid(z0);
        let g = s1 - s0;
        let loss = softplus(-g);
        let coeff = sigmoid(g) - 1.0;
        let d1 = s1 * (1.0 - s1);
        let d0 = s0 * (1.0 - s0);
        let grad = e1
            .iter()
            .zip(e0)
            .map(|(a, b)| coeff * (d1 * a - d0 * b))
            .collect();
        (loss, grad)
    }
}

/// Train a [`RewardHead`] from scratch on preference pairs with mini-batch
/// gradient descent. Texts are embedded once up front; the encoder stays
/// frozen throughout.
pub fn train_head(
    pairs: &[RewardPair],
    embedder: &dyn EmbeddingBackend,
    config: &TrainConfig,
) -> Result<(RewardHead, TrainReport)> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("no pairs to train on".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch_size must be >= 1".into()));
    }
    if !(0.0..1.0).contains(&config.holdout_fraction) {
        return Err(Error::Config("holdout_fraction must be in [0, 1)".into()));
    }

    let mut head = RewardHead::zeros(0);
    // Embed each distinct joint input once.
    let mut cache: HashMap<String, Vec<f64>> = HashMap::new();
    let mut embedded: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(pairs.len());
    let mut dim: Option<usize> = None;
    for pair in pairs {
        let mut lookup = |text: String| -> Result<Vec<f64>> {
            if let Some(v) = cache.get(&text) {
                return Ok(v.clone());
            }
            let v = embedder.embed(&text)?.values;
            match dim {
                None => dim = Some(v.len()),
                Some(d) if d != v.len() => {
                    return Err(Error::Protocol(format!(
                        "embedding dimension changed from {d} to {}",
                        v.len()
                    )))
                }
                _ => {}
            }
            cache.insert(text, v.clone());
            Ok(v)
        };
        let e1 = lookup(head.joint_input(&pair.query, &pair.better))?;
        let e0 = lookup(head.joint_input(&pair.query, &pair.worse))?;
        embedded.push((e1, e0));
    }
    let dim = dim.expect("at least one pair embedded");

    // Deterministic split: shuffle indices once, hold out the tail.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut rng);
    let held = ((pairs.len() as f64) * config.holdout_fraction).round() as usize;
    let held = held.min(pairs.len().saturating_sub(1));
    let (train_idx, held_idx) = order.split_at(pairs.len() - held);
    let mut train_idx: Vec<usize> = train_idx.to_vec();

    let mut weights = vec![0.0f64; dim];
    for epoch in 0..config.epochs {
        train_idx.shuffle(&mut rng);
        for batch in train_idx.chunks(config.batch_size) {
            let mut grad = vec![0.0f64; dim];
            for &i in batch {
                let (e1, e0) = &embedded[i];
                let (_, g) = loss_and_gradient(&weights, e1, e0, config.logit_space);
                for (acc, gi) in grad.iter_mut().zip(g) {
                    *acc += gi;
                }
            }
            let scale = config.learning_rate / batch.len() as f64;
            for (w, g) in weights.iter_mut().zip(&grad) {
                *w -= scale * g;
            }
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
    }

    let mean_loss = |indices: &[usize]| -> f64 {
        if indices.is_empty() {
            return 0.0;
        }
        indices
            .iter()
            .map(|&i| {
                let (e1, e0) = &embedded[i];
                loss_and_gradient(&weights, e1, e0, config.logit_space).0
            })
            .sum::<f64>()
            / indices.len() as f64
    };
    let final_train_loss = mean_loss(&train_idx);
    let holdout_accuracy = if held_idx.is_empty() {
        None
    } else {
        let correct = held_idx
            .iter()
            .filter(|&&i| {
                let (e1, e0) = &embedded[i];
                let s = |e: &[f64]| sigmoid(weights.iter().zip(e).map(|(w, x)| w * x).sum());
                s(e1) > s(e0)
            })
            .count();
        Some(correct as f64 / held_idx.len() as f64)
    };

    head.weights = weights;
    head.trained = true;
    Ok((
        head,
        TrainReport {
            pairs_trained: train_idx.len(),
            pairs_held_out: held_idx.len(),
            epochs_run: config.epochs,
            final_train_loss,
            holdout_accuracy,
        },
    ))
}

/// Index of the highest score; ties go to the earliest. `None` on empty input.
pub fn select_best(scores: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        match best {
            Some((_, b)) if s <= b => {}
            _ => best = Some((i, s)),
        }
    }
    best.map(|(i, _)| i)
}

/// Score every candidate response for `query` with one head.
pub fn score_pool(
    head: &RewardHead,
    embedder: &dyn EmbeddingBackend,
    query: &str,
    responses: &[String],
) -> Result<Vec<f64>> {
    responses
        .iter()
        .map(|r| head.score(embedder, query, r))
        .collect()
}
