//! Corpus ingestion: line-delimited JSON documents with wiki-style links.
//!
//! Each input line is one JSON object with string fields `id`, `title`,
//! `category` and `text`. The text is whitespace-tokenized; spans written as
//! `[[Target Title]]` or `[[Target Title|surface words]]` become a single
//! token carrying a link to the document whose `title` equals the bracketed
//! target. Multi-word anchors and surfaces are joined with underscores, so
//! `[[Bill Gates]]` yields the token `Bill_Gates`.
//!
//! The pipeline is: [`parse_corpus`] -> [`normalize_links`] ->
//! [`build_vocab`] -> [`encode`].

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error reading corpus: {0}")]
    Io(#[from] std::io::Error),
    #[error("duplicate token in vocabulary: {0:?}")]
    DuplicateToken(String),
}

/// One whitespace-delimited token, with an optional link to another document
/// in the same [`DocumentSet`] (an index into `DocumentSet::docs`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawToken {
    pub surface: String,
    pub link: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDocument {
    pub id: String,
    pub title: String,
    pub category: String,
    pub tokens: Vec<RawToken>,
}

/// A parsed corpus plus ingestion counters.
#[derive(Debug, Default)]
pub struct DocumentSet {
    pub docs: Vec<RawDocument>,
    /// Input lines that were not well-formed records (bad JSON, missing
    /// fields, empty text, duplicate id) and were skipped.
    pub skipped_records: usize,
    /// Link spans whose target title matched no document; the token is kept,
    /// the link dropped.
    pub dangling_links: usize,
    /// Linked occurrences whose explicit target disagreed with the surface
    /// token's canonical target and were rewritten by [`normalize_links`].
    pub link_conflicts: usize,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    /// Lowercase token surfaces and titles during parsing. Off by default:
    /// case distinguishes named entities from common words.
    pub lowercase: bool,
}

#[derive(Deserialize)]
struct RecordIn {
    id: String,
    title: String,
    category: String,
    text: String,
}

#[derive(Serialize)]
struct RecordOut<'a> {
    id: &'a str,
    title: &'a str,
    category: &'a str,
    text: String,
}

/// Joins the whitespace-separated words of `s` with underscores.
pub fn underscore_join(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join("_")
}

/// Collapses runs of whitespace to single spaces, for title matching.
fn normalize_title(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

struct PendingToken {
    surface: String,
    target: Option<String>,
}

/// Splits a text field into tokens, extracting `[[...]]` link spans. An
/// unterminated `[[` is treated as literal text.
fn tokenize(text: &str, lowercase: bool) -> Vec<PendingToken> {
    let mut out = Vec::new();
    let plain = |segment: &str, out: &mut Vec<PendingToken>| {
        for word in segment.split_whitespace() {
            let surface = if lowercase { word.to_lowercase() } else { word.to_string() };
            out.push(PendingToken { surface, target: None });
        }
    };
    let mut rest = text;
    while let Some(open) = rest.find("[[") {
        let Some(close_rel) = rest[open + 2..].find("]]") else {
            break;
        };
        plain(&rest[..open], &mut out);
        let inner = &rest[open + 2..open + 2 + close_rel];
        rest = &rest[open + 2 + close_rel + 2..];

        let (target_part, surface_part) = match inner.find('|') {
            Some(bar) => (&inner[..bar], Some(&inner[bar + 1..])),
            None => (inner, None),
        };
        let mut target = normalize_title(target_part);
        let mut surface = underscore_join(surface_part.unwrap_or(target_part));
        if lowercase {
            target = target.to_lowercase();
            surface = surface.to_lowercase();
        }
        if target.is_empty() || surface.is_empty() {
            // Not a usable link span; keep whatever words it contained.
            plain(inner.replace('|', " ").as_str(), &mut out);
            continue;
        }
        out.push(PendingToken { surface, target: Some(target) });
    }
    plain(rest, &mut out);
    out
}

/// Parses a line-delimited JSON corpus with default options.
pub fn parse_corpus(reader: impl BufRead) -> Result<DocumentSet, CorpusError> {
    parse_corpus_with(reader, &ParseOptions::default())
}

/// Parses a line-delimited JSON corpus.
///
/// Malformed lines (invalid JSON, missing fields, empty text, duplicate id)
/// are counted in `skipped_records` and logged with their line number. Link
/// targets are resolved against document titles; targets that match no title
/// are dropped and counted in `dangling_links`. Blank lines are ignored.
pub fn parse_corpus_with(
    reader: impl BufRead,
    opts: &ParseOptions,
) -> Result<DocumentSet, CorpusError> {
    let mut set = DocumentSet::default();
    let mut pending: Vec<Vec<PendingToken>> = Vec::new();
    let mut seen_ids: HashMap<String, usize> = HashMap::new();
    let mut title_index: HashMap<String, usize> = HashMap::new();

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: RecordIn = match serde_json::from_str(line.trim_end_matches('\r')) {
            Ok(r) => r,
            Err(err) => {
                log::warn!("corpus line {lineno}: skipping malformed record: {err}");
                set.skipped_records += 1;
                continue;
            }
        };
        if seen_ids.contains_key(&record.id) {
            log::warn!("corpus line {lineno}: skipping duplicate id {:?}", record.id);
            set.skipped_records += 1;
            continue;
        }
        let tokens = tokenize(&record.text, opts.lowercase);
        if tokens.is_empty() {
            log::warn!("corpus line {lineno}: skipping record {:?} with empty text", record.id);
            set.skipped_records += 1;
            continue;
        }
        let title = if opts.lowercase { record.title.to_lowercase() } else { record.title };
        let doc_index = set.docs.len();
        seen_ids.insert(record.id.clone(), doc_index);
        title_index.entry(normalize_title(&title)).or_insert(doc_index);
        set.docs.push(RawDocument {
            id: record.id,
            title,
            category: record.category,
            tokens: Vec::new(),
        });
        pending.push(tokens);
    }

    for (doc_index, tokens) in pending.into_iter().enumerate() {
        let resolved = tokens
            .into_iter()
            .map(|t| {
                let link = match &t.target {
                    Some(target) => match title_index.get(target) {
                        Some(&d) => Some(d),
                        None => {
                            set.dangling_links += 1;
                            None
                        }
                    },
                    None => None,
                };
                RawToken { surface: t.surface, link }
            })
            .collect();
        set.docs[doc_index].tokens = resolved;
    }
    Ok(set)
}

/// Writes a [`DocumentSet`] back out as line-delimited JSON. Re-parsing the
/// output reproduces the same documents.
pub fn serialize_corpus(set: &DocumentSet, mut writer: impl Write) -> Result<(), CorpusError> {
    for doc in &set.docs {
        let text = doc
            .tokens
            .iter()
            .map(|t| match t.link {
                Some(d) => {
                    let title = &set.docs[d].title;
                    if t.surface == underscore_join(title) {
                        format!("[[{title}]]")
                    } else {
                        format!("[[{}|{}]]", title, t.surface.replace('_', " "))
                    }
                }
                None => t.surface.clone(),
            })
            .collect::<Vec<_>>()
            .join(" ");
        let record = RecordOut {
            id: &doc.id,
            title: &doc.title,
            category: &doc.category,
            text,
        };
        serde_json::to_writer(&mut writer, &record).map_err(std::io::Error::other)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Makes link annotations consistent: every occurrence of a surface token
/// that is linked anywhere carries the same link, everywhere.
///
/// The canonical target for a token is the one of its earliest linked
/// occurrence (document order, then token order). Occurrences that carried a
/// different explicit target are rewritten and counted in `link_conflicts`;
/// bare occurrences gain the link.
pub fn normalize_links(mut set: DocumentSet) -> DocumentSet {
    let mut canonical: HashMap<String, usize> = HashMap::new();
    for doc in &set.docs {
        for token in &doc.tokens {
            if let Some(d) = token.link {
                canonical.entry(token.surface.clone()).or_insert(d);
            }
        }
    }
    let mut conflicts = 0;
    for doc in &mut set.docs {
        for token in &mut doc.tokens {
            if let Some(&d) = canonical.get(&token.surface) {
                if let Some(prev) = token.link {
                    if prev != d {
                        conflicts += 1;
                    }
                }
                token.link = Some(d);
            }
        }
    }
    set.link_conflicts = conflicts;
    set
}

/// Link carried by a vocabulary token: the target document's index and its
/// underscore-joined title.
///
/// `doc` is `Some` for a vocabulary built from a corpus and `None` for one
/// loaded from a model archive, where no document list exists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VocabLink {
    pub doc: Option<usize>,
    pub title: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VocabEntry {
    pub token: String,
    pub count: u64,
    pub link: Option<VocabLink>,
}

/// Token inventory: entries sorted by descending count (ties broken by first
/// appearance), with dense ids `0..len`.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    entries: Vec<VocabEntry>,
    index: HashMap<String, u32>,
    total_tokens: u64,
}

impl Vocabulary {
    /// Builds a vocabulary from explicit entries (used by archive loading and
    /// tests). Entry order defines the ids.
    pub fn from_entries(entries: Vec<VocabEntry>) -> Result<Self, CorpusError> {
        let mut index = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if index.insert(e.token.clone(), i as u32).is_some() {
                return Err(CorpusError::DuplicateToken(e.token.clone()));
            }
        }
        let total_tokens = entries.iter().map(|e| e.count).sum();
        Ok(Self { entries, index, total_tokens })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sum of retained occurrence counts, i.e. the in-vocabulary token count
    /// of the corpus the vocabulary was built from.
    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn entry(&self, id: u32) -> &VocabEntry {
        &self.entries[id as usize]
    }

    pub fn token(&self, id: u32) -> &str {
        &self.entries[id as usize].token
    }

    pub fn count(&self, id: u32) -> u64 {
        self.entries[id as usize].count
    }

    pub fn link(&self, id: u32) -> Option<&VocabLink> {
        self.entries[id as usize].link.as_ref()
    }

    pub fn entries(&self) -> &[VocabEntry] {
        &self.entries
    }
}

/// Counts tokens over the whole set and keeps those occurring at least
/// `min_count` times. Call after [`normalize_links`] so link annotations are
/// consistent; each retained token inherits its (single) link target.
pub fn build_vocab(set: &DocumentSet, min_count: u64) -> Vocabulary {
    struct Tally {
        count: u64,
        first_seen: usize,
        link: Option<usize>,
    }
    let mut tally: HashMap<&str, Tally> = HashMap::new();
    let mut position = 0usize;
    for doc in &set.docs {
        for token in &doc.tokens {
            let t = tally.entry(token.surface.as_str()).or_insert(Tally {
                count: 0,
                first_seen: position,
                link: None,
            });
            t.count += 1;
            if t.link.is_none() {
                t.link = token.link;
            }
            position += 1;
        }
    }
    let mut retained: Vec<(&str, Tally)> =
        tally.into_iter().filter(|(_, t)| t.count >= min_count).collect();
    retained.sort_by(|a, b| b.1.count.cmp(&a.1.count).then(a.1.first_seen.cmp(&b.1.first_seen)));

    let entries = retained
        .into_iter()
        .map(|(token, t)| VocabEntry {
            token: token.to_string(),
            count: t.count,
            link: t.link.map(|d| VocabLink {
                doc: Some(d),
                title: underscore_join(&set.docs[d].title),
            }),
        })
        .collect();
    Vocabulary::from_entries(entries).expect("tallied tokens are unique")
}

/// A document mapped onto vocabulary ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedDocument {
    /// Position of the document in the [`DocumentSet`] it came from.
    pub doc_index: usize,
    /// Vocabulary id of the underscore-joined title, when in vocabulary.
    pub title_token: Option<u32>,
    /// In-vocabulary tokens in order; out-of-vocabulary tokens are removed,
    /// so context windows close over the gaps they leave.
    pub token_ids: Vec<u32>,
    /// Dense category label (see [`category_names`]).
    pub category: usize,
    /// Documents this one links to, from all link-carrying tokens (including
    /// out-of-vocabulary ones), excluding self-links.
    pub outgoing_links: BTreeSet<usize>,
}

/// Category label table: distinct category strings in first-appearance
/// order. [`EncodedDocument::category`] indexes into this.
pub fn category_names(set: &DocumentSet) -> Vec<String> {
    let mut names = Vec::new();
    let mut seen = HashMap::new();
    for doc in &set.docs {
        if !seen.contains_key(doc.category.as_str()) {
            seen.insert(doc.category.as_str(), names.len());
            names.push(doc.category.clone());
        }
    }
    names
}

/// Maps every document onto vocabulary ids. Documents whose tokens are all
/// out-of-vocabulary yield an empty `token_ids` but keep their index.
pub fn encode(set: &DocumentSet, vocab: &Vocabulary) -> Vec<EncodedDocument> {
    let mut category_ids = HashMap::new();
    let mut next_category = 0usize;
    set.docs
        .iter()
        .enumerate()
        .map(|(doc_index, doc)| {
            let category = *category_ids.entry(doc.category.as_str()).or_insert_with(|| {
                let id = next_category;
                next_category += 1;
                id
            });
            let token_ids = doc
                .tokens
                .iter()
                .filter_map(|t| vocab.id(&t.surface))
                .collect();
            let outgoing_links = doc
                .tokens
                .iter()
                .filter_map(|t| t.link)
                .filter(|&d| d != doc_index)
                .collect();
            EncodedDocument {
                doc_index,
                title_token: vocab.id(&underscore_join(&doc.title)),
                token_ids,
                category,
                outgoing_links,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn parse(text: &str) -> DocumentSet {
        parse_corpus(Cursor::new(text)).unwrap()
    }

    fn line(id: &str, title: &str, category: &str, text: &str) -> String {
        serde_json::to_string(&serde_json::json!({
            "id": id, "title": title, "category": category, "text": text
        }))
        .unwrap()
    }

    fn surfaces(doc: &RawDocument) -> Vec<&str> {
        doc.tokens.iter().map(|t| t.surface.as_str()).collect()
    }

    #[test]
    fn bracket_spans_become_linked_tokens() {
        let corpus = [
            line("d1", "Internet Explorer", "software", "a browser program"),
            line("d2", "Usage", "misc", "uses [[Internet Explorer]] daily"),
        ]
        .join("\n");
        let set = parse(&corpus);
        assert_eq!(set.docs.len(), 2);
        assert_eq!(surfaces(&set.docs[1]), ["uses", "Internet_Explorer", "daily"]);
        assert_eq!(set.docs[1].tokens[1].link, Some(0));
        assert_eq!(set.dangling_links, 0);
    }

    #[test]
    fn surface_form_differs_from_target() {
        let corpus = [
            line("d1", "Bill Gates", "people", "a person"),
            line("d2", "Usage", "misc", "then [[Bill Gates|the founder]] spoke"),
        ]
        .join("\n");
        let set = parse(&corpus);
        let tokens = &set.docs[1].tokens;
        assert_eq!(surfaces(&set.docs[1]), ["then", "the_founder", "spoke"]);
        assert_eq!(tokens[1].link, Some(0));
    }

    #[test]
    fn dangling_link_kept_as_plain_token() {
        let corpus = line("d1", "Solo", "misc", "see [[Nowhere]] now");
        let set = parse(&corpus);
        assert_eq!(surfaces(&set.docs[0]), ["see", "Nowhere", "now"]);
        assert_eq!(set.docs[0].tokens[1].link, None);
        assert_eq!(set.dangling_links, 1);
    }

    #[test]
    fn malformed_lines_are_counted_and_skipped() {
        let corpus = [
            line("d1", "A", "x", "alpha beta"),
            "not json at all".to_string(),
            r#"{"id":"d2","title":"B","category":"x"}"#.to_string(), // missing text
            line("d1", "C", "x", "duplicate id"),
            line("d3", "D", "x", "   "), // empty text
            line("d4", "E", "x", "gamma"),
        ]
        .join("\n");
        let set = parse(&corpus);
        assert_eq!(set.docs.len(), 2);
        assert_eq!(set.skipped_records, 4);
    }

    #[test]
    fn unterminated_bracket_is_literal_text() {
        let set = parse(&line("d1", "A", "x", "start [[oops and more"));
        assert_eq!(surfaces(&set.docs[0]), ["start", "[[oops", "and", "more"]);
    }

    #[test]
    fn self_link_is_kept_on_the_token() {
        let corpus = line("d1", "Loop", "x", "about [[Loop]] itself");
        let set = parse(&corpus);
        assert_eq!(set.docs[0].tokens[1].link, Some(0));
    }

    #[test]
    fn lowercase_option_applies_to_tokens_and_titles() {
        let corpus = [
            line("d1", "Bill Gates", "people", "a person"),
            line("d2", "Usage", "misc", "met [[Bill Gates]] today"),
        ]
        .join("\n");
        let set =
            parse_corpus_with(Cursor::new(corpus), &ParseOptions { lowercase: true }).unwrap();
        assert_eq!(surfaces(&set.docs[1]), ["met", "bill_gates", "today"]);
        assert_eq!(set.docs[1].tokens[1].link, Some(0));
        assert_eq!(set.docs[0].title, "bill gates");
    }

    #[test]
    fn normalize_backfills_and_resolves_conflicts_earliest_wins() {
        // "db" is linked to doc 1 in doc 0, to doc 2 in doc 3, and bare in
        // doc 2. Earliest linked occurrence wins; the bare one is backfilled.
        let corpus = [
            line("d0", "Zero", "x", "see [[One|db]] here"),
            line("d1", "One", "x", "first target"),
            line("d2", "Two", "x", "plain db mention"),
            line("d3", "Three", "x", "see [[Two|db]] again"),
        ]
        .join("\n");
        let set = normalize_links(parse(&corpus));
        let links: Vec<Option<usize>> = set
            .docs
            .iter()
            .flat_map(|d| d.tokens.iter())
            .filter(|t| t.surface == "db")
            .map(|t| t.link)
            .collect();
        assert_eq!(links, vec![Some(1), Some(1), Some(1)]);
        assert_eq!(set.link_conflicts, 1);
    }

    #[test]
    fn vocab_retains_by_min_count_and_sorts_by_count() {
        let mut lines = vec![line("t", "Database", "x", "definition of databases")];
        // "Database" appears 11 times linked, "rare" 3 times.
        for i in 0..11 {
            lines.push(line(
                &format!("d{i}"),
                &format!("Doc {i}"),
                "x",
                &format!("filler [[Database]] entry {}", if i < 3 { "rare" } else { "common" }),
            ));
        }
        let set = normalize_links(parse(&lines.join("\n")));
        let vocab = build_vocab(&set, 10);
        let db = vocab.id("Database").expect("retained");
        assert_eq!(vocab.count(db), 11);
        let link = vocab.link(db).expect("linked");
        assert_eq!(link.title, "Database");
        assert_eq!(link.doc, Some(0));
        assert_eq!(vocab.id("rare"), None);
        // 11 fillers + 11 entries, both above "Database"; counts descending.
        let counts: Vec<u64> = (0..vocab.len() as u32).map(|i| vocab.count(i)).collect();
        assert!(counts.windows(2).all(|w| w[0] >= w[1]), "counts not sorted: {counts:?}");
    }

    #[test]
    fn ties_break_by_first_appearance() {
        let corpus = line("d1", "A", "x", "zz aa zz aa");
        let vocab = build_vocab(&parse(&corpus), 1);
        assert_eq!(vocab.token(0), "zz");
        assert_eq!(vocab.token(1), "aa");
        assert_eq!(vocab.total_tokens(), 4);
    }

    #[test]
    fn encode_removes_oov_and_collects_links() {
        let corpus = [
            line("d0", "Target", "cat-a", "target target target words"),
            line("d1", "Page", "cat-b", "rare [[Target]] target mention [[Target]] target"),
        ]
        .join("\n");
        let set = normalize_links(parse(&corpus));
        let vocab = build_vocab(&set, 2);
        let docs = encode(&set, &vocab);
        let target = vocab.id("target").unwrap();
        let title = vocab.id("Target").unwrap();
        // "rare", "mention" and "words" fall below min_count and vanish.
        assert_eq!(docs[0].token_ids, vec![target, target, target]);
        assert_eq!(docs[1].token_ids, vec![title, target, title, target]);
        assert_eq!(docs[1].outgoing_links.iter().copied().collect::<Vec<_>>(), vec![0]);
        // Self-links never appear in outgoing_links.
        assert!(docs[0].outgoing_links.is_empty());
        assert_eq!(docs[0].title_token, Some(vocab.id("Target").unwrap()));
        assert_eq!(category_names(&set), vec!["cat-a", "cat-b"]);
        assert_eq!(docs[0].category, 0);
        assert_eq!(docs[1].category, 1);
    }

    #[test]
    fn outgoing_links_survive_oov_removal() {
        // The linking token "Target" appears once, below min_count 2, so it
        // is out of vocabulary; the document still records the link.
        let corpus = [
            line("d0", "Target", "x", "target target target"),
            line("d1", "Page", "x", "also also [[Target]]"),
        ]
        .join("\n");
        let set = normalize_links(parse(&corpus));
        let vocab = build_vocab(&set, 2);
        let docs = encode(&set, &vocab);
        assert_eq!(vocab.id("Target"), None);
        assert_eq!(docs[1].outgoing_links.iter().copied().collect::<Vec<_>>(), vec![0]);
    }

    #[test]
    fn serialize_then_parse_round_trips() {
        let corpus = [
            line("d1", "Bill Gates", "people", "a person of note"),
            line("d2", "Usage", "misc", "met [[Bill Gates]] and [[Bill Gates|the founder]] x_y"),
        ]
        .join("\n");
        let set = parse(&corpus);
        let mut buf = Vec::new();
        serialize_corpus(&set, &mut buf).unwrap();
        let reparsed = parse_corpus(Cursor::new(buf)).unwrap();
        assert_eq!(set.docs, reparsed.docs);
    }
}
