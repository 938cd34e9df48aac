//! Composition weights for document embeddings: uniform or TF-IDF.
//!
//! A document's embedding is a weighted sum of its word vectors over a
//! prefix of the document (see [`crate::compose`]). This module computes the
//! per-token weights. Term frequency is counted inside the prefix; document
//! frequency always comes from full documents.

use std::collections::HashMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::EncodedDocument;

#[derive(Debug, Error)]
pub enum WeightingError {
    #[error("cannot build document frequencies from an empty corpus")]
    EmptyCorpus,
    #[error("token id {0} appears in no document; corpus and vocabulary disagree")]
    TokenNeverSeen(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightScheme {
    /// Every occurrence weighs 1.
    Uniform,
    /// Each distinct token weighs `tf * idf`, downweighting stop words.
    TfIdf,
}

impl FromStr for WeightScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "tfidf" => Ok(Self::TfIdf),
            other => Err(format!("unknown weighting scheme {other:?} (expected uniform|tfidf)")),
        }
    }
}

impl std::fmt::Display for WeightScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Uniform => "uniform",
            Self::TfIdf => "tfidf",
        })
    }
}

/// Inverse document frequencies over a corpus: `idf(t) = ln(N / df(t))`.
#[derive(Debug, Clone)]
pub struct IdfTable {
    idf: Vec<f64>,
    document_count: usize,
}

impl IdfTable {
    pub fn idf(&self, token: u32) -> f64 {
        self.idf[token as usize]
    }

    pub fn document_count(&self) -> usize {
        self.document_count
    }

    pub fn len(&self) -> usize {
        self.idf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.idf.is_empty()
    }
}

/// Counts document frequencies over full (untruncated) documents and returns
/// `ln(N / df)` per vocabulary token.
///
/// Errors if `docs` is empty or if some token of `0..vocab_size` never
/// appears, which means the documents were not encoded with this vocabulary.
pub fn build_idf(docs: &[EncodedDocument], vocab_size: usize) -> Result<IdfTable, WeightingError> {
    if docs.is_empty() {
        return Err(WeightingError::EmptyCorpus);
    }
    let mut df = vec![0u64; vocab_size];
    let mut seen_in_doc = vec![usize::MAX; vocab_size];
    for (i, doc) in docs.iter().enumerate() {
        for &t in &doc.token_ids {
            let slot = &mut seen_in_doc[t as usize];
            if *slot != i {
                *slot = i;
                df[t as usize] += 1;
            }
        }
    }
    let n = docs.len() as f64;
    let idf = df
        .iter()
        .enumerate()
        .map(|(t, &d)| {
            if d == 0 {
                Err(WeightingError::TokenNeverSeen(t as u32))
            } else {
                Ok((n / d as f64).ln())
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(IdfTable { idf, document_count: docs.len() })
}

/// Aggregated composition weights for a token sequence: one `(token, weight)`
/// pair per distinct token, in first-occurrence order.
///
/// Uniform weights are the occurrence counts (per-occurrence weight 1);
/// TF-IDF weights are `count * idf(token)`. An empty sequence yields an empty
/// list. `idf` is only consulted for [`WeightScheme::TfIdf`] and must be
/// `Some` there.
pub fn token_weights(
    token_ids: &[u32],
    scheme: WeightScheme,
    idf: Option<&IdfTable>,
) -> Vec<(u32, f64)> {
    let mut order = Vec::new();
    let mut counts: HashMap<u32, u64> = HashMap::new();
    for &t in token_ids {
        let c = counts.entry(t).or_insert(0);
        if *c == 0 {
            order.push(t);
        }
        *c += 1;
    }
    match scheme {
        WeightScheme::Uniform => {
            order.into_iter().map(|t| (t, counts[&t] as f64)).collect()
        }
        WeightScheme::TfIdf => {
            let idf = idf.expect("TF-IDF weighting requires an IdfTable");
            order.into_iter().map(|t| (t, counts[&t] as f64 * idf.idf(t))).collect()
        }
    }
}

/// Composition weights for the first `prefix_len` tokens of a document.
pub fn doc_weights(
    doc: &EncodedDocument,
    prefix_len: usize,
    scheme: WeightScheme,
    idf: Option<&IdfTable>,
) -> Vec<(u32, f64)> {
    let prefix = &doc.token_ids[..doc.token_ids.len().min(prefix_len)];
    token_weights(prefix, scheme, idf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn doc(index: usize, ids: &[u32]) -> EncodedDocument {
        EncodedDocument {
            doc_index: index,
            title_token: None,
            token_ids: ids.to_vec(),
            category: 0,
            outgoing_links: BTreeSet::new(),
        }
    }

    #[test]
    fn idf_is_log_ratio_of_documents() {
        // Four documents: token 0 in all, token 1 in one, token 2 in two.
        let docs = vec![
            doc(0, &[0, 1, 2]),
            doc(1, &[0, 2]),
            doc(2, &[0]),
            doc(3, &[0, 0]),
        ];
        let idf = build_idf(&docs, 3).unwrap();
        assert_eq!(idf.document_count(), 4);
        assert_eq!(idf.idf(0), 0.0); // ln(4/4)
        assert_eq!(idf.idf(1), 4.0_f64.ln());
        assert_eq!(idf.idf(2), (4.0_f64 / 2.0).ln());
    }

    #[test]
    fn idf_counts_full_documents_not_prefixes() {
        // Token 1 appears only past any reasonable prefix position.
        let mut long = vec![0; 150];
        long.push(1);
        let docs = vec![doc(0, &long), doc(1, &[0, 1])];
        let idf = build_idf(&docs, 2).unwrap();
        assert_eq!(idf.idf(1), 0.0); // df = 2 of 2 despite position 150
    }

    #[test]
    fn idf_rejects_empty_and_inconsistent_input() {
        assert!(matches!(build_idf(&[], 1), Err(WeightingError::EmptyCorpus)));
        let docs = vec![doc(0, &[0])];
        assert!(matches!(build_idf(&docs, 2), Err(WeightingError::TokenNeverSeen(1))));
    }

    #[test]
    fn uniform_weights_aggregate_occurrence_counts() {
        let d = doc(0, &[4, 7, 4]);
        assert_eq!(doc_weights(&d, 100, WeightScheme::Uniform, None), vec![(4, 2.0), (7, 1.0)]);
    }

    #[test]
    fn tfidf_weights_are_count_times_idf() {
        let docs = vec![doc(0, &[0, 1, 1]), doc(1, &[0])];
        let idf = build_idf(&docs, 2).unwrap();
        let w = doc_weights(&docs[0], 100, WeightScheme::TfIdf, Some(&idf));
        assert_eq!(w.len(), 2);
        assert_eq!(w[0], (0, 0.0)); // in every document
        assert_eq!(w[1].0, 1);
        assert!((w[1].1 - 2.0 * 2.0_f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn prefix_truncation_limits_term_frequency() {
        let d = doc(0, &[4, 7, 4]);
        assert_eq!(doc_weights(&d, 2, WeightScheme::Uniform, None), vec![(4, 1.0), (7, 1.0)]);
        assert_eq!(doc_weights(&d, 0, WeightScheme::Uniform, None), vec![]);
    }

    #[test]
    fn empty_document_yields_empty_weights() {
        let d = doc(0, &[]);
        assert!(doc_weights(&d, 100, WeightScheme::Uniform, None).is_empty());
    }

    #[test]
    fn uniform_weight_sum_is_truncated_length() {
        let d = doc(0, &[1, 2, 1, 3, 1, 2]);
        for prefix in 0..=8 {
            let w = doc_weights(&d, prefix, WeightScheme::Uniform, None);
            let total: f64 = w.iter().map(|(_, a)| a).sum();
            assert_eq!(total, d.token_ids.len().min(prefix) as f64);
        }
    }
}
