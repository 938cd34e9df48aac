//! Skip-gram training with negative sampling plus a definition term for
//! linked words.
//!
//! Every token position emits one SGD ascent step per in-window context
//! (window fixed at `window` tokens each side, truncated at document
//! boundaries). A position whose token links to a document additionally
//! emits one definition step: the token's input vector is pulled toward the
//! weighted composition of the linked document's prefix, recomputed from the
//! current input vectors at every occurrence.
//!
//! Single-threaded training is bit-reproducible for a fixed seed. With
//! `threads > 1` workers share the parameter matrices without locking and
//! update them racily; results are no longer bit-stable but remain
//! statistically equivalent.

mod math;
mod noise;
mod parallel;

pub use math::{
    definition_gradients, sigmoid, skipgram_gradients, DefinitionGrad, SigmoidTable, SkipGramGrad,
};
pub use noise::NoiseTable;

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::{EncodedDocument, Vocabulary};
use crate::weighting::{build_idf, doc_weights, WeightScheme, WeightingError};

#[derive(Debug, Error)]
pub enum TrainerError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("cannot train with an empty vocabulary")]
    EmptyVocabulary,
    #[error("cannot train on a corpus with no in-vocabulary tokens")]
    EmptyCorpus,
    #[error("token id {token_id} is out of range for a vocabulary of {vocab_size}")]
    CorpusVocabMismatch { token_id: u32, vocab_size: usize },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error(transparent)]
    Weighting(#[from] WeightingError),
}

/// Hyperparameters. The defaults are the reference configuration: window 3,
/// 5 negatives, 50 dimensions, 10 epochs, initial learning rate 0.5,
/// min-count 10, 100-token composition prefix, TF-IDF weighting.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Context window radius, in tokens, each side of the center.
    pub window: usize,
    /// Negatives drawn per (center, context) pair.
    pub negatives: usize,
    /// Embedding dimensionality.
    pub dim: usize,
    pub epochs: usize,
    pub initial_lr: f64,
    /// Tokens occurring fewer times than this are dropped from the
    /// vocabulary (applied by `build_vocab`, recorded here so the CLI can
    /// surface one config).
    pub min_count: u64,
    /// Document prefix length used when composing definition embeddings.
    pub prefix_len: usize,
    /// Weighting for definition-document composition during training.
    pub weight_scheme: WeightScheme,
    /// Exponent applied to unigram counts in the noise distribution.
    pub noise_power: f64,
    pub noise_table_size: usize,
    /// The learning rate never falls below `initial_lr * lr_floor_ratio`.
    pub lr_floor_ratio: f64,
    pub seed: u64,
    /// When false, linked tokens train exactly like unlinked ones.
    pub definition_term_enabled: bool,
    /// Worker threads; 1 is the bit-deterministic reference mode.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            window: 3,
            negatives: 5,
            dim: 50,
            epochs: 10,
            initial_lr: 0.5,
            min_count: 10,
            prefix_len: 100,
            weight_scheme: WeightScheme::TfIdf,
            noise_power: 0.75,
            noise_table_size: 10_000_000,
            lr_floor_ratio: 1e-4,
            seed: 1,
            definition_term_enabled: true,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainerError> {
        let fail = |msg: &str| Err(TrainerError::InvalidConfig(msg.to_string()));
        if self.window == 0 {
            return fail("window must be at least 1");
        }
        if self.negatives == 0 {
            return fail("negatives must be at least 1");
        }
        if self.dim == 0 {
            return fail("dim must be at least 1");
        }
        if self.epochs == 0 {
            return fail("epochs must be at least 1");
        }
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return fail("initial_lr must be positive and finite");
        }
        if !(self.lr_floor_ratio > 0.0 && self.lr_floor_ratio <= 1.0) {
            return fail("lr_floor_ratio must be in (0, 1]");
        }
        if self.prefix_len == 0 {
            return fail("prefix_len must be at least 1");
        }
        if !(self.noise_power > 0.0 && self.noise_power.is_finite()) {
            return fail("noise_power must be positive and finite");
        }
        if self.noise_table_size == 0 {
            return fail("noise_table_size must be at least 1");
        }
        if self.threads == 0 {
            return fail("threads must be at least 1");
        }
        Ok(())
    }
}

/// Two dense row-major matrices of shape `vocab_size x dim`: `input` holds
/// the word vectors consumers use; `output` holds the context vectors the
/// sampling objective trains against.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    dim: usize,
    input: Vec<f32>,
    output: Vec<f32>,
}

impl EmbeddingModel {
    pub fn from_vectors(
        dim: usize,
        input: Vec<f32>,
        output: Vec<f32>,
    ) -> Result<Self, TrainerError> {
        if dim == 0 {
            return Err(TrainerError::InvalidModel("dim must be at least 1".into()));
        }
        if input.len() != output.len() {
            return Err(TrainerError::InvalidModel(format!(
                "input and output matrices differ in size: {} vs {}",
                input.len(),
                output.len()
            )));
        }
        if input.len() % dim != 0 {
            return Err(TrainerError::InvalidModel(format!(
                "matrix size {} is not a multiple of dim {dim}",
                input.len()
            )));
        }
        if input.iter().chain(output.iter()).any(|v| !v.is_finite()) {
            return Err(TrainerError::InvalidModel("matrices contain NaN or infinity".into()));
        }
        Ok(Self { dim, input, output })
    }

    pub fn zeros(vocab_size: usize, dim: usize) -> Self {
        assert!(dim > 0, "dim must be at least 1");
        Self { dim, input: vec![0.0; vocab_size * dim], output: vec![0.0; vocab_size * dim] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab_size(&self) -> usize {
        self.input.len() / self.dim
    }

    pub fn input_row(&self, token: u32) -> &[f32] {
        let start = token as usize * self.dim;
        &self.input[start..start + self.dim]
    }

    pub fn output_row(&self, token: u32) -> &[f32] {
        let start = token as usize * self.dim;
        &self.output[start..start + self.dim]
    }

    pub fn input_row_mut(&mut self, token: u32) -> &mut [f32] {
        let start = token as usize * self.dim;
        &mut self.input[start..start + self.dim]
    }

    pub fn output_row_mut(&mut self, token: u32) -> &mut [f32] {
        let start = token as usize * self.dim;
        &mut self.output[start..start + self.dim]
    }

    /// Flat row-major input matrix.
    pub fn input(&self) -> &[f32] {
        &self.input
    }

    /// Flat row-major output matrix.
    pub fn output(&self) -> &[f32] {
        &self.output
    }
}

/// Fresh parameters: input vectors i.i.d. uniform on `(-0.5/dim, 0.5/dim)`
/// from a seeded generator, output vectors all zero.
pub fn init_params(vocab_size: usize, dim: usize, seed: u64) -> EmbeddingModel {
    assert!(dim > 0, "dim must be at least 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = 0.5 / dim as f64;
    let input = (0..vocab_size * dim).map(|_| rng.random_range(-half..half) as f32).collect();
    EmbeddingModel { dim, input, output: vec![0.0; vocab_size * dim] }
}

/// Linear decay over the whole run with a floor:
/// `initial_lr * max(1 - words_done/total_words, lr_floor_ratio)`.
pub fn lr_schedule(words_done: u64, total_words: u64, cfg: &TrainConfig) -> f64 {
    assert!(total_words > 0, "total_words must be positive");
    let remaining = 1.0 - words_done as f64 / total_words as f64;
    cfg.initial_lr * remaining.max(cfg.lr_floor_ratio)
}

fn widen(row: &[f32], buf: &mut Vec<f64>) {
    buf.clear();
    buf.extend(row.iter().map(|&v| v as f64));
}

fn apply(row: &mut [f32], grad: &[f64], lr: f64) {
    for (r, g) in row.iter_mut().zip(grad) {
        *r = (*r as f64 + lr * g) as f32;
    }
}

/// Draws up to `k` negatives for one pair. A draw equal to `context` is
/// retried (at most 10 draws per slot) and the slot is skipped if every try
/// hits the context; a draw equal to the center is fine.
pub(crate) fn draw_negatives(
    noise: &NoiseTable,
    context: u32,
    k: usize,
    rng: &mut impl Rng,
    out: &mut Vec<u32>,
) {
    out.clear();
    for _ in 0..k {
        for _attempt in 0..10 {
            let candidate = noise.sample(rng);
            if candidate != context {
                out.push(candidate);
                break;
            }
        }
    }
}

/// One SGD ascent step on `log sigmoid(v_center . v'_context) + sum_i log
/// sigmoid(-v_center . v'_neg_i)` with `negatives` draws from the noise
/// table. Returns the term's pre-update objective value.
pub fn skipgram_step(
    model: &mut EmbeddingModel,
    center: u32,
    context: u32,
    noise: &NoiseTable,
    negatives: usize,
    lr: f64,
    rng: &mut impl Rng,
) -> f64 {
    let mut drawn = Vec::with_capacity(negatives);
    draw_negatives(noise, context, negatives, rng, &mut drawn);
    skipgram_step_with(model, center, context, &drawn, lr)
}

/// [`skipgram_step`] with the negatives chosen by the caller. All gradients
/// are evaluated at the pre-step parameters, then applied.
pub fn skipgram_step_with(
    model: &mut EmbeddingModel,
    center: u32,
    context: u32,
    negatives: &[u32],
    lr: f64,
) -> f64 {
    let mut c = Vec::new();
    widen(model.input_row(center), &mut c);
    let mut x = Vec::new();
    widen(model.output_row(context), &mut x);
    let negs: Vec<Vec<f64>> =
        negatives.iter().map(|&n| model.output_row(n).iter().map(|&v| v as f64).collect()).collect();
    let neg_refs: Vec<&[f64]> = negs.iter().map(|v| v.as_slice()).collect();

    let grad = skipgram_gradients(&c, &x, &neg_refs);
    apply(model.input_row_mut(center), &grad.d_center, lr);
    apply(model.output_row_mut(context), &grad.d_context, lr);
    for (&n, d_neg) in negatives.iter().zip(&grad.d_negatives) {
        apply(model.output_row_mut(n), d_neg, lr);
    }
    grad.objective
}

/// One SGD ascent step on `log sigmoid(v_center . d)` where `d` is the
/// weighted sum of the definition document's input vectors, recomputed from
/// the current parameters. Both the center row and every document token row
/// are updated; when the center occurs in its own definition the two
/// gradient contributions to its row add up. Returns the pre-update
/// objective value.
///
/// Panics if `def_doc` is empty.
pub fn definition_step(
    model: &mut EmbeddingModel,
    center: u32,
    def_doc: &[(u32, f64)],
    lr: f64,
) -> f64 {
    assert!(!def_doc.is_empty(), "definition step needs a non-empty weighted document");
    let mut c = Vec::new();
    widen(model.input_row(center), &mut c);
    let rows: Vec<Vec<f64>> =
        def_doc.iter().map(|&(t, _)| model.input_row(t).iter().map(|&v| v as f64).collect()).collect();
    let row_refs: Vec<&[f64]> = rows.iter().map(|v| v.as_slice()).collect();
    let alphas: Vec<f64> = def_doc.iter().map(|&(_, a)| a).collect();

    let grad = definition_gradients(&c, &row_refs, &alphas);
    apply(model.input_row_mut(center), &grad.d_center, lr);
    for (&(t, _), d_tok) in def_doc.iter().zip(&grad.d_tokens) {
        apply(model.input_row_mut(t), d_tok, lr);
    }
    grad.objective
}

/// Training progress snapshot, emitted periodically and at each epoch end.
#[derive(Debug, Clone, Copy)]
pub struct Progress {
    /// 1-based epoch number.
    pub epoch: usize,
    pub words_done: u64,
    pub total_words: u64,
    pub lr: f64,
    /// Mean negated objective per step over the current epoch so far.
    pub avg_loss: f64,
}

#[derive(Debug)]
pub struct TrainOutput {
    pub model: EmbeddingModel,
    /// Mean step loss per epoch.
    pub epoch_loss: Vec<f64>,
}

const PROGRESS_INTERVAL: u64 = 10_000;

/// Weighted definition prefix per linked vocabulary token, plus everything
/// the inner loops need besides the parameters.
pub(crate) struct TrainPlan {
    pub(crate) noise: NoiseTable,
    pub(crate) def_prefixes: HashMap<u32, Vec<(u32, f64)>>,
    pub(crate) total_words: u64,
}

fn prepare(
    docs: &[EncodedDocument],
    vocab: &Vocabulary,
    cfg: &TrainConfig,
) -> Result<TrainPlan, TrainerError> {
    cfg.validate()?;
    if vocab.is_empty() {
        return Err(TrainerError::EmptyVocabulary);
    }
    if cfg.noise_table_size < vocab.len() {
        return Err(TrainerError::InvalidConfig(format!(
            "noise_table_size {} is smaller than the vocabulary ({})",
            cfg.noise_table_size,
            vocab.len()
        )));
    }
    for doc in docs {
        for &t in &doc.token_ids {
            if t as usize >= vocab.len() {
                return Err(TrainerError::CorpusVocabMismatch {
                    token_id: t,
                    vocab_size: vocab.len(),
                });
            }
        }
    }
    let corpus_tokens: u64 = docs.iter().map(|d| d.token_ids.len() as u64).sum();
    if corpus_tokens == 0 {
        return Err(TrainerError::EmptyCorpus);
    }

    let mut def_prefixes = HashMap::new();
    if cfg.definition_term_enabled {
        let doc_pos: HashMap<usize, usize> =
            docs.iter().enumerate().map(|(pos, d)| (d.doc_index, pos)).collect();
        let linked: Vec<(u32, usize)> = (0..vocab.len() as u32)
            .filter_map(|t| {
                let target = vocab.link(t)?.doc?;
                Some((t, *doc_pos.get(&target)?))
            })
            .collect();
        if !linked.is_empty() {
            let idf = match cfg.weight_scheme {
                WeightScheme::TfIdf => Some(build_idf(docs, vocab.len())?),
                WeightScheme::Uniform => None,
            };
            for (t, pos) in linked {
                let weights =
                    doc_weights(&docs[pos], cfg.prefix_len, cfg.weight_scheme, idf.as_ref());
                // A definition document with no in-vocabulary prefix tokens
                // contributes nothing; such tokens train as plain skip-gram.
                if !weights.is_empty() {
                    def_prefixes.insert(t, weights);
                }
            }
        }
    }

    Ok(TrainPlan {
        noise: NoiseTable::build(vocab, cfg.noise_power, cfg.noise_table_size),
        def_prefixes,
        total_words: cfg.epochs as u64 * corpus_tokens,
    })
}

pub(crate) fn sampler_rng(seed: u64, worker: u64) -> ChaCha8Rng {
    // A stream distinct from the init_params generator, and per worker.
    const SALT: u64 = 0x9e37_79b9_7f4a_7c15;
    ChaCha8Rng::seed_from_u64(seed ^ SALT.wrapping_mul(worker.wrapping_add(1)))
}

pub fn train(
    docs: &[EncodedDocument],
    vocab: &Vocabulary,
    cfg: &TrainConfig,
) -> Result<TrainOutput, TrainerError> {
    train_with_progress(docs, vocab, cfg, |_| {})
}

pub fn train_with_progress(
    docs: &[EncodedDocument],
    vocab: &Vocabulary,
    cfg: &TrainConfig,
    mut on_progress: impl FnMut(&Progress),
) -> Result<TrainOutput, TrainerError> {
    let plan = prepare(docs, vocab, cfg)?;
    let mut model = init_params(vocab.len(), cfg.dim, cfg.seed);

    if cfg.threads > 1 {
        let epoch_loss = parallel::run(docs, cfg, &plan, &mut model, &mut on_progress);
        return Ok(TrainOutput { model, epoch_loss });
    }

    let mut rng = sampler_rng(cfg.seed, 0);
    let mut negatives = Vec::with_capacity(cfg.negatives);
    let mut words_done: u64 = 0;
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let mut loss_sum = 0.0;
        let mut steps: u64 = 0;
        for doc in docs {
            let ids = &doc.token_ids;
            for t in 0..ids.len() {
                let lr = lr_schedule(words_done, plan.total_words, cfg);
                let center = ids[t];
                let lo = t.saturating_sub(cfg.window);
                let hi = (t + cfg.window).min(ids.len() - 1);
                for j in lo..=hi {
                    if j == t {
                        continue;
                    }
                    draw_negatives(&plan.noise, ids[j], cfg.negatives, &mut rng, &mut negatives);
                    let obj = skipgram_step_with(&mut model, center, ids[j], &negatives, lr);
                    loss_sum -= obj;
                    steps += 1;
                }
                if let Some(weights) = plan.def_prefixes.get(&center) {
                    let obj = definition_step(&mut model, center, weights, lr);
                    loss_sum -= obj;
                    steps += 1;
                }
                words_done += 1;
                if words_done % PROGRESS_INTERVAL == 0 {
                    on_progress(&Progress {
                        epoch,
                        words_done,
                        total_words: plan.total_words,
                        lr: lr_schedule(words_done, plan.total_words, cfg),
                        avg_loss: if steps > 0 { loss_sum / steps as f64 } else { 0.0 },
                    });
                }
            }
        }
        let mean = if steps > 0 { loss_sum / steps as f64 } else { 0.0 };
        epoch_loss.push(mean);
        on_progress(&Progress {
            epoch,
            words_done,
            total_words: plan.total_words,
            lr: lr_schedule(words_done, plan.total_words, cfg),
            avg_loss: mean,
        });
    }
    Ok(TrainOutput { model, epoch_loss })
}

/// Exact softmax probability of `target` as a context of `center` over the
/// whole vocabulary: `exp(v_center . v'_target) / sum_w exp(v_center . v'_w)`.
///
/// Desk-scale reference only; cost is linear in the vocabulary.
pub fn full_softmax_prob(model: &EmbeddingModel, center: u32, target: u32) -> f64 {
    let mut c = Vec::new();
    widen(model.input_row(center), &mut c);
    let scores: Vec<f64> = (0..model.vocab_size() as u32)
        .map(|w| model.output_row(w).iter().zip(&c).map(|(&o, &ci)| o as f64 * ci).sum())
        .collect();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let denom: f64 = scores.iter().map(|s| (s - max).exp()).sum();
    (scores[target as usize] - max).exp() / denom
}
