//! Corpus builders shared by the integration suites.

use dewe::corpus::{
    build_vocab, encode, normalize_links, parse_corpus, DocumentSet, EncodedDocument, Vocabulary,
};
use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::io::Cursor;

/// A corpus run through the full ingestion pipeline: parse, link
/// normalization, vocabulary build, encoding.
pub struct Pipeline {
    pub set: DocumentSet,
    pub vocab: Vocabulary,
    pub docs: Vec<EncodedDocument>,
}

pub fn pipeline(jsonl: &str, min_count: u64) -> Pipeline {
    let set = parse_corpus(Cursor::new(jsonl)).expect("fixture corpus parses");
    assert_eq!(set.skipped_records, 0, "fixture corpus has malformed records");
    let set = normalize_links(set);
    let vocab = build_vocab(&set, min_count);
    let docs = encode(&set, &vocab);
    Pipeline { set, vocab, docs }
}

fn push_record(out: &mut String, id: &str, title: &str, category: &str, text: &str) {
    let line = serde_json::json!({
        "id": id,
        "title": title,
        "category": category,
        "text": text,
    });
    out.push_str(&line.to_string());
    out.push('\n');
}

/// Documents with no `[[...]]` markup at all, drawn from an 80-word pool with
/// a heavy-tailed frequency profile so the vocabulary looks natural-ish.
pub fn linkless_corpus(n_docs: usize, seed: u64) -> String {
    let words: Vec<String> = (0..80).map(|i| format!("word{i:02}")).collect();
    let weights: Vec<f64> = (1..=words.len()).map(|rank| 1.0 / rank as f64).collect();
    let dist = WeightedIndex::new(&weights).expect("valid weights");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let categories = ["alpha", "beta", "gamma"];
    let mut out = String::new();
    for d in 0..n_docs {
        let len = rng.random_range(8..=16);
        let text: Vec<&str> = (0..len).map(|_| words[dist.sample(&mut rng)].as_str()).collect();
        push_record(
            &mut out,
            &format!("doc-{d:04}"),
            &format!("Plain {d:04}"),
            categories[d % categories.len()],
            &text.join(" "),
        );
    }
    out
}

fn topic_tokens(i: usize) -> Vec<String> {
    (0..5u8).map(|j| format!("t{i:03}{}", (b'a' + j) as char)).collect()
}

/// One definition document per headword `w{i}` (33 tokens) plus three usage
/// documents that link back to it. Every headword and topic token occurs 11
/// times, clearing the default `min_count` of 10; the connective words are
/// shared across all documents, so their document frequency is high and
/// tf-idf composition all but ignores them.
pub fn definition_corpus(n_words: usize) -> String {
    let mut out = String::new();
    // Definitions come first so each headword precedes its topic tokens in
    // first-seen order (equal counts tie-break toward the headword).
    for i in 0..n_words {
        let w = format!("w{i:03}");
        let round = topic_tokens(i).join(" ");
        let text =
            format!("{w} is a kind of topic {w} covers {round} {round} {round} {round} {round}");
        push_record(&mut out, &format!("def-{i:03}"), &w, "definition", &text);
    }
    for i in 0..n_words {
        let w = format!("w{i:03}");
        let round = topic_tokens(i).join(" ");
        for u in 0..3 {
            let text = format!(
                "the [[{w}]] system uses {round} and then {round} again {w} near {w} end"
            );
            push_record(
                &mut out,
                &format!("use-{i:03}-{u}"),
                &format!("Usage {i:03} {u}"),
                "usage",
                &text,
            );
        }
    }
    out
}
