//! Composing document and query embeddings from word vectors.
//!
//! The additive composer is the workhorse: a weighted sum of input vectors,
//! accumulated in f64. It is what the trainer's definition term optimizes
//! toward and what the document-level evaluations consume. The
//! multiplicative composer (element-wise product) is kept as a baseline.

use thiserror::Error;

use crate::corpus::EncodedDocument;
use crate::trainer::EmbeddingModel;
use crate::weighting::{doc_weights, IdfTable, WeightScheme};

#[derive(Debug, Error)]
pub enum ComposeError {
    #[error("cannot compose an empty token sequence")]
    EmptyComposition,
    #[error("token id {token_id} is out of range for a vocabulary of {vocab_size}")]
    UnknownToken { token_id: u32, vocab_size: usize },
    #[error("document {doc_index} has no in-vocabulary tokens in its prefix")]
    NoKnownTokens { doc_index: usize },
}

/// Where a composed vector came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VectorSource {
    /// Composed from a corpus document, identified by its document index.
    Document(usize),
    /// Composed from an ad-hoc token sequence, e.g. a search query.
    Query,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocVector {
    pub values: Vec<f64>,
    pub source: VectorSource,
}

fn check_token(model: &EmbeddingModel, token: u32) -> Result<(), ComposeError> {
    if token as usize >= model.vocab_size() {
        return Err(ComposeError::UnknownToken {
            token_id: token,
            vocab_size: model.vocab_size(),
        });
    }
    Ok(())
}

/// Weighted sum of input vectors: `sum_j alpha_j * v_{w_j}`.
pub fn compose_add(
    model: &EmbeddingModel,
    weighted: &[(u32, f64)],
) -> Result<DocVector, ComposeError> {
    if weighted.is_empty() {
        return Err(ComposeError::EmptyComposition);
    }
    let mut values = vec![0.0f64; model.dim()];
    for &(token, alpha) in weighted {
        check_token(model, token)?;
        for (acc, &v) in values.iter_mut().zip(model.input_row(token)) {
            *acc += alpha * v as f64;
        }
    }
    Ok(DocVector { values, source: VectorSource::Query })
}

/// Element-wise product of input vectors, unweighted.
pub fn compose_mult(model: &EmbeddingModel, tokens: &[u32]) -> Result<DocVector, ComposeError> {
    if tokens.is_empty() {
        return Err(ComposeError::EmptyComposition);
    }
    let mut values = vec![1.0f64; model.dim()];
    for &token in tokens {
        check_token(model, token)?;
        for (acc, &v) in values.iter_mut().zip(model.input_row(token)) {
            *acc *= v as f64;
        }
    }
    Ok(DocVector { values, source: VectorSource::Query })
}

/// Additive embedding of a document's prefix under the given weighting,
/// matching what the trainer's definition term uses for that document.
pub fn doc_embedding(
    model: &EmbeddingModel,
    doc: &EncodedDocument,
    prefix_len: usize,
    scheme: WeightScheme,
    idf: Option<&IdfTable>,
) -> Result<DocVector, ComposeError> {
    let weights = doc_weights(doc, prefix_len, scheme, idf);
    if weights.is_empty() {
        return Err(ComposeError::NoKnownTokens { doc_index: doc.doc_index });
    }
    let mut vector = compose_add(model, &weights)?;
    vector.source = VectorSource::Document(doc.doc_index);
    Ok(vector)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::init_params;
    use std::collections::BTreeSet;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn single_token_with_unit_weight_reproduces_its_vector() {
        let model = init_params(10, 8, 42);
        let composed = compose_add(&model, &[(4, 1.0)]).unwrap();
        let expected: Vec<f64> = model.input_row(4).iter().map(|&v| v as f64).collect();
        assert_eq!(composed.values, expected);
        assert_eq!(composed.source, VectorSource::Query);
    }

    #[test]
    fn addition_is_linear_and_order_independent() {
        let model = init_params(10, 8, 42);
        let ab = compose_add(&model, &[(1, 2.0), (2, 0.5)]).unwrap();
        let ba = compose_add(&model, &[(2, 0.5), (1, 2.0)]).unwrap();
        assert!(close(&ab.values, &ba.values, 1e-12));

        let a = compose_add(&model, &[(1, 2.0)]).unwrap();
        let b = compose_add(&model, &[(2, 0.5)]).unwrap();
        let sum: Vec<f64> = a.values.iter().zip(&b.values).map(|(x, y)| x + y).collect();
        assert!(close(&ab.values, &sum, 1e-12));

        let doubled = compose_add(&model, &[(1, 4.0)]).unwrap();
        let scaled: Vec<f64> = a.values.iter().map(|x| 2.0 * x).collect();
        assert!(close(&doubled.values, &scaled, 1e-12));
    }

    #[test]
    fn multiplication_squares_a_repeated_token() {
        let model = init_params(10, 8, 42);
        let squared = compose_mult(&model, &[3, 3]).unwrap();
        let expected: Vec<f64> =
            model.input_row(3).iter().map(|&v| (v as f64) * (v as f64)).collect();
        assert!(close(&squared.values, &expected, 1e-15));
    }

    #[test]
    fn rejects_empty_and_out_of_range_input() {
        let model = init_params(10, 8, 42);
        assert!(matches!(compose_add(&model, &[]), Err(ComposeError::EmptyComposition)));
        assert!(matches!(compose_mult(&model, &[]), Err(ComposeError::EmptyComposition)));
        assert!(matches!(
            compose_add(&model, &[(10, 1.0)]),
            Err(ComposeError::UnknownToken { token_id: 10, vocab_size: 10 })
        ));
    }

    #[test]
    fn doc_embedding_ignores_tokens_beyond_the_prefix() {
        let model = init_params(10, 8, 42);
        let short = EncodedDocument {
            doc_index: 3,
            title_token: None,
            token_ids: vec![1, 2, 1],
            category: 0,
            outgoing_links: BTreeSet::new(),
        };
        let mut long = short.clone();
        long.token_ids.extend([5, 6, 7, 8, 9]);

        let a = doc_embedding(&model, &short, 3, WeightScheme::Uniform, None).unwrap();
        let b = doc_embedding(&model, &long, 3, WeightScheme::Uniform, None).unwrap();
        assert_eq!(a.values, b.values, "tokens past the prefix must not contribute");
        assert_eq!(a.source, VectorSource::Document(3));

        let full = doc_embedding(&model, &long, 100, WeightScheme::Uniform, None).unwrap();
        assert_ne!(a.values, full.values);
    }

    #[test]
    fn doc_embedding_reports_empty_prefixes() {
        let model = init_params(10, 8, 42);
        let empty = EncodedDocument {
            doc_index: 7,
            title_token: None,
            token_ids: vec![],
            category: 0,
            outgoing_links: BTreeSet::new(),
        };
        assert!(matches!(
            doc_embedding(&model, &empty, 100, WeightScheme::Uniform, None),
            Err(ComposeError::NoKnownTokens { doc_index: 7 })
        ));
    }
}
