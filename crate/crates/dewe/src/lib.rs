//! Definition-enriched skip-gram word embeddings.
//!
//! The crate trains skip-gram embeddings with negative sampling and, for
//! tokens that link to a descriptive document, an extra attractive term that
//! pulls the token's vector toward a weighted composition of that document's
//! words. On top of the trainer it provides document composition, an
//! evaluation suite (similarity, reverse dictionary, link prediction,
//! document classification) and text/binary model persistence.
//!
//! Typical flow:
//!
//! ```no_run
//! use dewe::corpus::{parse_corpus, normalize_links, build_vocab, encode};
//! use dewe::trainer::{train, TrainConfig};
//!
//! # fn main() -> Result<(), Box<dyn std::error::Error>> {
//! let file = std::io::BufReader::new(std::fs::File::open("corpus.jsonl")?);
//! let set = normalize_links(parse_corpus(file)?);
//! let cfg = TrainConfig::default();
//! let vocab = build_vocab(&set, cfg.min_count);
//! let docs = encode(&set, &vocab);
//! let run = train(&docs, &vocab, &cfg)?;
//! dewe::store::save_binary("model.dewe", &run.model, &vocab)?;
//! # Ok(())
//! # }
//! ```

pub mod compose;
pub mod corpus;
pub mod eval;
pub mod store;
pub mod trainer;
pub mod weighting;
