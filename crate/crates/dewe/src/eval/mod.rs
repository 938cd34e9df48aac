//! Intrinsic and extrinsic evaluation of trained embeddings: nearest
//! neighbors, word-similarity correlation, reverse-dictionary ranking, and
//! link prediction. Document classification lives in [`classify`].
//!
//! All rankings are deterministic: candidates sort by descending cosine and
//! break ties on ascending index.

pub mod classify;

pub use classify::{classification_metrics, classify_eval, ClassificationMetrics, ClassifyReport};

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::compose::{compose_add, doc_embedding, ComposeError};
use crate::corpus::{EncodedDocument, Vocabulary};
use crate::trainer::EmbeddingModel;
use crate::weighting::{token_weights, IdfTable, WeightScheme};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("{0}")]
    NoUsableInput(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Compose(#[from] ComposeError),
}

/// Cosine similarity; 0.0 when either vector has zero norm.
///
/// Panics if the lengths differ.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "cosine of vectors with different lengths");
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na.sqrt() * nb.sqrt())
}

fn input_row64(model: &EmbeddingModel, token: u32) -> Vec<f64> {
    model.input_row(token).iter().map(|&v| v as f64).collect()
}

/// The `n` vocabulary tokens whose input vectors are closest to `vector` by
/// cosine, best first. All-zero rows and tokens in `exclude` are skipped.
pub fn nearest_words(
    model: &EmbeddingModel,
    vector: &[f64],
    n: usize,
    exclude: &[u32],
) -> Vec<(u32, f64)> {
    let mut scored: Vec<(u32, f64)> = (0..model.vocab_size() as u32)
        .filter(|t| !exclude.contains(t))
        .filter(|&t| model.input_row(t).iter().any(|&v| v != 0.0))
        .map(|t| (t, cosine(vector, &input_row64(model, t))))
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored.truncate(n);
    scored
}

/// 1-based rank of `target` when every vocabulary token is ordered by
/// descending cosine against `vector`, ties broken by ascending token id.
/// All rows participate, zero rows included (at cosine 0).
pub fn rank_of(model: &EmbeddingModel, vector: &[f64], target: u32) -> usize {
    let target_cos = cosine(vector, &input_row64(model, target));
    let mut better = 0usize;
    for t in 0..model.vocab_size() as u32 {
        if t == target {
            continue;
        }
        let c = cosine(vector, &input_row64(model, t));
        if c > target_cos || (c == target_cos && t < target) {
            better += 1;
        }
    }
    better + 1
}

/// Average-rank positions (1-based) with ties sharing the mean of the
/// positions they span.
fn fractional_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("NaN in rank input"));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation: Pearson correlation of fractional ranks, with
/// tied values sharing their average rank. Returns NaN when either side has
/// no rank variance.
///
/// Panics if the slices differ in length, are shorter than 2, or contain NaN.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "spearman needs paired observations");
    assert!(a.len() >= 2, "spearman needs at least two pairs");
    let ra = fractional_ranks(a);
    let rb = fractional_ranks(b);
    let n = ra.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    cov / (va * vb).sqrt()
}

/// One human-scored word pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityPair {
    pub a: String,
    pub b: String,
    pub score: f64,
}

/// Reads `word1 word2 score` triples, whitespace-separated, one per line.
/// Blank lines and lines starting with `#` are ignored.
pub fn load_similarity_pairs(path: impl AsRef<Path>) -> Result<Vec<SimilarityPair>, EvalError> {
    let reader = BufReader::new(File::open(path)?);
    let mut pairs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(EvalError::Format {
                line: i + 1,
                message: format!("expected `word1 word2 score`, found {} fields", fields.len()),
            });
        }
        let score: f64 = fields[2].parse().map_err(|_| EvalError::Format {
            line: i + 1,
            message: format!("score `{}` is not a number", fields[2]),
        })?;
        pairs.push(SimilarityPair { a: fields[0].to_string(), b: fields[1].to_string(), score });
    }
    Ok(pairs)
}

#[derive(Debug, Clone, Serialize)]
pub struct SimilarityReport {
    /// Pairs in the input.
    pub pairs: usize,
    /// Pairs with both words in the vocabulary.
    pub used: usize,
    pub skipped_oov: usize,
    /// Spearman correlation between model cosines and the human scores.
    pub spearman: f64,
}

/// Correlates input-vector cosine with human similarity judgments over the
/// in-vocabulary subset of `pairs`.
pub fn word_similarity_eval(
    model: &EmbeddingModel,
    vocab: &Vocabulary,
    pairs: &[SimilarityPair],
) -> Result<SimilarityReport, EvalError> {
    let mut model_scores = Vec::new();
    let mut human_scores = Vec::new();
    for pair in pairs {
        let (Some(a), Some(b)) = (vocab.id(&pair.a), vocab.id(&pair.b)) else {
            continue;
        };
        model_scores.push(cosine(&input_row64(model, a), &input_row64(model, b)));
        human_scores.push(pair.score);
    }
    if model_scores.len() < 2 {
        return Err(EvalError::NoUsableInput(format!(
            "only {} of {} pairs are fully in-vocabulary; need at least 2",
            model_scores.len(),
            pairs.len()
        )));
    }
    Ok(SimilarityReport {
        pairs: pairs.len(),
        used: model_scores.len(),
        skipped_oov: pairs.len() - model_scores.len(),
        spearman: spearman(&model_scores, &human_scores),
    })
}

/// A reverse-dictionary item: the word to recover and the description.
#[derive(Debug, Clone, PartialEq)]
pub struct Description {
    pub target: String,
    pub tokens: Vec<String>,
}

/// Reads `target word word ...` lines, whitespace-separated. Blank lines and
/// lines starting with `#` are ignored.
pub fn load_descriptions(path: impl AsRef<Path>) -> Result<Vec<Description>, EvalError> {
    let reader = BufReader::new(File::open(path)?);
    let mut items = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace().map(str::to_string);
        let target = fields.next().expect("non-blank line has a first field");
        let tokens: Vec<String> = fields.collect();
        if tokens.is_empty() {
            return Err(EvalError::Format {
                line: i + 1,
                message: "a description needs a target and at least one word".to_string(),
            });
        }
        items.push(Description { target, tokens });
    }
    Ok(items)
}

/// Summary statistics over 1-based retrieval ranks.
#[derive(Debug, Clone, Serialize)]
pub struct RankStats {
    pub count: usize,
    /// Middle rank; the mean of the two middle ranks for even counts.
    pub median: f64,
    /// Fraction of ranks at most 10.
    pub acc_at_10: f64,
    /// Fraction of ranks at most 100.
    pub acc_at_100: f64,
    /// Population standard deviation of the ranks.
    pub std_dev: f64,
}

/// Panics if `ranks` is empty.
pub fn rank_stats(ranks: &[usize]) -> RankStats {
    assert!(!ranks.is_empty(), "rank statistics need at least one rank");
    let mut sorted: Vec<usize> = ranks.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0
    };
    let within = |k: usize| sorted.iter().filter(|&&r| r <= k).count() as f64 / n as f64;
    let mean = sorted.iter().sum::<usize>() as f64 / n as f64;
    let var = sorted.iter().map(|&r| (r as f64 - mean).powi(2)).sum::<f64>() / n as f64;
    RankStats {
        count: n,
        median,
        acc_at_10: within(10),
        acc_at_100: within(100),
        std_dev: var.sqrt(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RevDictReport {
    pub stats: RankStats,
    /// Descriptions actually ranked.
    pub evaluated: usize,
    /// Descriptions dropped for an out-of-vocabulary target or an all-OOV
    /// description.
    pub skipped: usize,
}

/// Ranked candidates for one description: composes the in-vocabulary
/// description words under `scheme` and returns the top `n` tokens.
pub fn reverse_dictionary_query(
    model: &EmbeddingModel,
    vocab: &Vocabulary,
    words: &[String],
    scheme: WeightScheme,
    idf: Option<&IdfTable>,
    n: usize,
) -> Result<Vec<(u32, f64)>, EvalError> {
    let ids: Vec<u32> = words.iter().filter_map(|w| vocab.id(w)).collect();
    if ids.is_empty() {
        return Err(EvalError::NoUsableInput(
            "no description word is in the vocabulary".to_string(),
        ));
    }
    let weights = token_weights(&ids, scheme, idf);
    let query = compose_add(model, &weights)?;
    Ok(nearest_words(model, &query.values, n, &[]))
}

/// Ranks each description's target among all vocabulary tokens and
/// summarizes the ranks. Descriptions whose target is out of vocabulary or
/// whose words are all out of vocabulary are skipped with a warning.
pub fn reverse_dictionary_eval(
    model: &EmbeddingModel,
    vocab: &Vocabulary,
    descriptions: &[Description],
    scheme: WeightScheme,
    idf: Option<&IdfTable>,
) -> Result<RevDictReport, EvalError> {
    let mut ranks = Vec::new();
    let mut skipped = 0usize;
    for desc in descriptions {
        let Some(target) = vocab.id(&desc.target) else {
            log::warn!("reverse dictionary: target `{}` is out of vocabulary", desc.target);
            skipped += 1;
            continue;
        };
        let ids: Vec<u32> = desc.tokens.iter().filter_map(|w| vocab.id(w)).collect();
        if ids.is_empty() {
            log::warn!(
                "reverse dictionary: every description word for `{}` is out of vocabulary",
                desc.target
            );
            skipped += 1;
            continue;
        }
        let weights = token_weights(&ids, scheme, idf);
        let query = compose_add(model, &weights)?;
        ranks.push(rank_of(model, &query.values, target));
    }
    if ranks.is_empty() {
        return Err(EvalError::NoUsableInput("no description could be evaluated".to_string()));
    }
    Ok(RevDictReport { stats: rank_stats(&ranks), evaluated: ranks.len(), skipped })
}

#[derive(Debug, Clone, Serialize)]
pub struct LinkPredReport {
    /// Cutoff for both metrics.
    pub k: usize,
    /// Mean average precision at `k` over query documents.
    pub mean_ap: f64,
    /// Mean recall at `k` over query documents.
    pub mean_recall: f64,
    /// Documents with an embeddable prefix and at least one embeddable link
    /// target.
    pub queries: usize,
    /// Documents without an embeddable prefix.
    pub skipped_docs: usize,
}

/// Predicts each document's outgoing links by ranking all other embeddable
/// documents by cosine of their prefix embeddings. A document qualifies as a
/// query when its own prefix is embeddable and at least one of its link
/// targets is too; candidates never include the query itself.
pub fn link_prediction_eval(
    model: &EmbeddingModel,
    docs: &[EncodedDocument],
    k: usize,
    prefix_len: usize,
    scheme: WeightScheme,
    idf: Option<&IdfTable>,
) -> Result<LinkPredReport, EvalError> {
    if k == 0 {
        return Err(EvalError::InvalidParameter("k must be at least 1".to_string()));
    }
    let mut embedded: HashMap<usize, Vec<f64>> = HashMap::new();
    for doc in docs {
        match doc_embedding(model, doc, prefix_len, scheme, idf) {
            Ok(v) => {
                embedded.insert(doc.doc_index, v.values);
            }
            Err(ComposeError::NoKnownTokens { .. }) => {}
            Err(other) => return Err(other.into()),
        }
    }
    let skipped_docs = docs.len() - embedded.len();
    let mut candidate_ids: Vec<usize> = embedded.keys().copied().collect();
    candidate_ids.sort_unstable();

    let mut ap_sum = 0.0;
    let mut recall_sum = 0.0;
    let mut queries = 0usize;
    for doc in docs {
        let Some(query_vec) = embedded.get(&doc.doc_index) else {
            continue;
        };
        let truth: Vec<usize> = doc
            .outgoing_links
            .iter()
            .copied()
            .filter(|d| *d != doc.doc_index && embedded.contains_key(d))
            .collect();
        if truth.is_empty() {
            continue;
        }
        let mut scored: Vec<(usize, f64)> = candidate_ids
            .iter()
            .copied()
            .filter(|&d| d != doc.doc_index)
            .map(|d| (d, cosine(query_vec, &embedded[&d])))
            .collect();
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));

        let mut hits = 0usize;
        let mut precision_sum = 0.0;
        for (i, &(d, _)) in scored.iter().take(k).enumerate() {
            if truth.contains(&d) {
                hits += 1;
                precision_sum += hits as f64 / (i + 1) as f64;
            }
        }
        ap_sum += precision_sum / truth.len().min(k) as f64;
        recall_sum += hits as f64 / truth.len() as f64;
        queries += 1;
    }
    if queries == 0 {
        return Err(EvalError::NoUsableInput(
            "no document has both an embeddable prefix and an embeddable link target".to_string(),
        ));
    }
    Ok(LinkPredReport {
        k,
        mean_ap: ap_sum / queries as f64,
        mean_recall: recall_sum / queries as f64,
        queries,
        skipped_docs,
    })
}
