//! Keyword-annotated document corpora: JSONL ingestion, keyword
//! normalization, vocabularies and train/test splits.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::error::{Error, Result};

/// Lowercases, collapses internal whitespace runs to one space and trims.
///
/// All-whitespace input yields an empty string, which callers drop.
pub fn normalize_keyword(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for word in raw.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.chars().flat_map(char::to_lowercase));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    /// Normalized, deduplicated, in first-seen order.
    pub keywords: Vec<String>,
}

impl Document {
    /// Builds a document, normalizing and deduplicating `raw` keywords.
    /// Returns the document and the number of keywords dropped as empty.
    pub fn new<S: AsRef<str>>(id: impl Into<String>, raw: &[S]) -> (Self, usize) {
        let mut seen = HashSet::new();
        let mut keywords = Vec::with_capacity(raw.len());
        let mut dropped = 0;
        for kw in raw {
            let norm = normalize_keyword(kw.as_ref());
            if norm.is_empty() {
                dropped += 1;
            } else if seen.insert(norm.clone()) {
                keywords.push(norm);
            }
        }
        (
            Document {
                id: id.into(),
                keywords,
            },
            dropped,
        )
    }

    /// Documents with fewer than two keywords yield no training pairs.
    pub fn is_trainable(&self) -> bool {
        self.keywords.len() >= 2
    }
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub documents: Vec<Document>,
    /// Keywords that normalized to the empty string.
    pub dropped_empty: usize,
}

#[derive(Deserialize)]
struct RawRecord {
    id: serde_json::Value,
    keywords: Option<Vec<String>>,
}

impl Corpus {
    pub fn from_documents(documents: Vec<Document>) -> Self {
        Corpus {
            documents,
            dropped_empty: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn keyword_occurrences(&self) -> usize {
        self.documents.iter().map(|d| d.keywords.len()).sum()
    }

    /// Documents holding a single keyword. They stay in the corpus (and the
    /// co-occurrence graph) but produce no training examples.
    pub fn single_keyword_documents(&self) -> usize {
        self.documents.iter().filter(|d| d.keywords.len() == 1).count()
    }

    /// Parses JSONL text. `origin` names the source in error messages.
    pub fn parse_jsonl(text: &str, origin: &Path) -> Result<Self> {
        Self::parse_lines(text.lines().map(|l| Ok(l.to_owned())), origin)
    }

    fn parse_lines<I>(lines: I, origin: &Path) -> Result<Self>
    where
        I: Iterator<Item = std::io::Result<String>>,
    {
        let mut corpus = Corpus::default();
        let mut ids: HashMap<String, usize> = HashMap::new();
        let mut duplicates = Vec::new();
        for (idx, line) in lines.enumerate() {
            let lineno = idx + 1;
            let line = line.map_err(|e| Error::io(origin, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: origin.to_path_buf(),
                line: lineno,
                message,
            };
            let record: RawRecord =
                serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
            let id = match record.id {
                serde_json::Value::String(s) => s,
                serde_json::Value::Number(n) => n.to_string(),
                other => return Err(parse_err(format!("`id` must be a string, got {other}"))),
            };
            let keywords = record
                .keywords
                .ok_or_else(|| parse_err("missing `keywords` field".into()))?;
            let (doc, dropped) = Document::new(id, &keywords);
            corpus.dropped_empty += dropped;
            let seen = ids.entry(doc.id.clone()).or_insert(0);
            *seen += 1;
            if *seen == 2 {
                duplicates.push(doc.id.clone());
            }
            corpus.documents.push(doc);
        }
        if !duplicates.is_empty() {
            return Err(Error::DuplicateDocuments(duplicates));
        }
        Ok(corpus)
    }

    /// Writes the canonical JSONL form (normalized keywords only).
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for doc in &self.documents {
            let line = serde_json::json!({ "id": doc.id, "keywords": doc.keywords });
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// Reads a JSONL dataset: one `{"id": ..., "keywords": [...]}` object per line.
/// Extra fields such as `title` and `abstract` are ignored.
pub fn parse_dataset(path: &Path) -> Result<Corpus> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Corpus::parse_lines(BufReader::new(file).lines(), path)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    keywords: Vec<String>,
    keyword_index: HashMap<String, u32>,
    words: Vec<String>,
    word_index: HashMap<String, u32>,
    keyword_df: Vec<u32>,
}

impl Vocab {
    /// Rebuilds a vocabulary from explicit keyword and word lists.
    /// Document frequencies are unknown and set to zero.
    pub fn from_parts(keywords: Vec<String>, words: Vec<String>) -> Result<Self> {
        let keyword_index = index_of(&keywords, "keyword")?;
        let word_index = index_of(&words, "word")?;
        let keyword_df = vec![0; keywords.len()];
        let vocab = Vocab {
            keywords,
            keyword_index,
            words,
            word_index,
            keyword_df,
        };
        for kw in &vocab.keywords {
            if let Some(w) = kw.split(' ').find(|w| !vocab.word_index.contains_key(*w)) {
                return Err(Error::InvalidArgument(format!(
                    "word {w:?} of keyword {kw:?} missing from word list"
                )));
            }
        }
        Ok(vocab)
    }

    pub fn len(&self) -> usize {
        self.keywords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keywords.is_empty()
    }

    pub fn word_count(&self) -> usize {
        self.words.len()
    }

    pub fn keyword_id(&self, keyword: &str) -> Option<u32> {
        self.keyword_index.get(keyword).copied()
    }

    pub fn word_id(&self, word: &str) -> Option<u32> {
        self.word_index.get(word).copied()
    }

    pub fn keyword(&self, id: u32) -> &str {
        &self.keywords[id as usize]
    }

    pub fn keywords(&self) -> &[String] {
        &self.keywords
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn document_frequency(&self, id: u32) -> u32 {
        self.keyword_df[id as usize]
    }

    /// Keyword ids of a document, skipping keywords outside the vocabulary.
    pub fn doc_ids(&self, doc: &Document) -> Vec<u32> {
        doc.keywords
            .iter()
            .filter_map(|k| self.keyword_id(k))
            .collect()
    }

    /// `id<TAB>keyword` lines, ids ascending.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (id, kw) in self.keywords.iter().enumerate() {
            writeln!(out, "{id}\t{kw}")?;
        }
        Ok(())
    }
}

fn index_of(items: &[String], what: &str) -> Result<HashMap<String, u32>> {
    let mut index = HashMap::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        if index.insert(item.clone(), i as u32).is_some() {
            return Err(Error::InvalidArgument(format!("duplicate {what} {item:?}")));
        }
    }
    Ok(index)
}

/// Assigns dense ids, in first-seen order, to every keyword whose document
/// frequency reaches `min_count`, and to every word of those keywords.
pub fn build_vocab(corpus: &Corpus, min_count: u32) -> Result<Vocab> {
    if min_count < 1 {
        return Err(Error::InvalidArgument("min_count must be >= 1".into()));
    }
    if corpus.is_empty() {
        return Err(Error::Empty("corpus has no documents".into()));
    }
    let mut order: Vec<&str> = Vec::new();
    let mut df: HashMap<&str, u32> = HashMap::new();
    for doc in &corpus.documents {
        for kw in &doc.keywords {
            let count = df.entry(kw.as_str()).or_insert_with(|| {
                order.push(kw.as_str());
                0
            });
            *count += 1;
        }
    }

    let mut keywords = Vec::new();
    let mut keyword_df = Vec::new();
    let mut words = Vec::new();
    let mut word_index = HashMap::new();
    for kw in order {
        let count = df[kw];
        if count < min_count {
            continue;
        }
        for w in kw.split(' ') {
            if !word_index.contains_key(w) {
                word_index.insert(w.to_owned(), words.len() as u32);
                words.push(w.to_owned());
            }
        }
        keywords.push(kw.to_owned());
        keyword_df.push(count);
    }
    let keyword_index = index_of(&keywords, "keyword")?;
    Ok(Vocab {
        keywords,
        keyword_index,
        words,
        word_index,
        keyword_df,
    })
}

/// Disjoint train/test partition of document indices (ascending).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

impl Split {
    pub fn is_test(&self, doc: usize) -> bool {
        self.test.binary_search(&doc).is_ok()
    }
}

/// Shuffles document indices with a seeded generator and cuts off
/// `round(n * test_fraction)` of them (at least one, at most n-1) as test.
pub fn split_corpus(corpus: &Corpus, test_fraction: f64, seed: u64) -> Result<Split> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction must be in (0, 1), got {test_fraction}"
        )));
    }
    let n = corpus.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 documents to split, got {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
    let mut test = order[..n_test].to_vec();
    let mut train = order[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok(Split { train, test, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn corpus(docs: &[&[&str]]) -> Corpus {
        Corpus::from_documents(
            docs.iter()
                .enumerate()
                .map(|(i, kws)| Document::new(format!("d{i}"), kws).0)
                .collect(),
        )
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_keyword("Search  Engine "), "search engine");
        assert_eq!(normalize_keyword("search engine"), "search engine");
        assert_eq!(normalize_keyword(""), "");
        assert_eq!(normalize_keyword(" \t\n "), "");
        assert_eq!(normalize_keyword("ÜBER\tCafé"), "über café");
    }

    #[test]
    fn parse_lines() {
        let text = r#"{"id":"d1","keywords":["Search Engine","IR"]}
{"id":"d2","keywords":["x","X ", "  "],"title":"ignored"}
"#;
        let c = Corpus::parse_jsonl(text, Path::new("mem")).unwrap();
        assert_eq!(c.documents[0].keywords, ["search engine", "ir"]);
        assert_eq!(c.documents[1].keywords, ["x"]);
        assert_eq!(c.dropped_empty, 1);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let text = "{\"id\":\"d1\",\"keywords\":[\"a\"]}\n{not json\n";
        let err = Corpus::parse_jsonl(text, Path::new("data.jsonl")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert!(err.to_string().starts_with("data.jsonl:2:"));

        let err = Corpus::parse_jsonl("{\"id\":\"d1\"}", Path::new("x")).unwrap_err();
        assert!(err.to_string().contains("missing `keywords`"), "{err}");
    }

    #[test]
    fn duplicate_ids_are_listed() {
        let text = "{\"id\":\"a\",\"keywords\":[\"x\"]}\n{\"id\":\"a\",\"keywords\":[\"y\"]}\n";
        match Corpus::parse_jsonl(text, Path::new("x")).unwrap_err() {
            Error::DuplicateDocuments(ids) => assert_eq!(ids, ["a"]),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn vocab_thresholds() {
        let v = build_vocab(&corpus(&[&["a", "b"]]), 1).unwrap();
        assert_eq!(v.keyword_id("a"), Some(0));
        assert_eq!(v.keyword_id("b"), Some(1));
        assert!(build_vocab(&corpus(&[&["a", "b"]]), 2).unwrap().is_empty());
        let v = build_vocab(&corpus(&[&["a", "b"], &["a", "c"]]), 2).unwrap();
        assert_eq!(v.keywords(), ["a"]);
        assert_eq!(v.document_frequency(0), 2);
        assert!(build_vocab(&Corpus::default(), 1).is_err());
    }

    #[test]
    fn vocab_words_cover_keywords() {
        let v = build_vocab(&corpus(&[&["search engine", "vector search"]]), 1).unwrap();
        assert_eq!(v.words(), ["search", "engine", "vector"]);
        let mut buf = Vec::new();
        v.write_tsv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "0\tsearch engine\n1\tvector search\n");
    }

    #[test]
    fn split_cardinality_and_determinism() {
        let docs: Vec<Vec<&str>> = (0..10).map(|_| vec!["a"]).collect();
        let refs: Vec<&[&str]> = docs.iter().map(|d| d.as_slice()).collect();
        let c = corpus(&refs);
        let s = split_corpus(&c, 0.2, 7).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (8, 2));
        assert!(s.test.iter().all(|t| !s.train.contains(t)));
        assert_eq!(s, split_corpus(&c, 0.2, 7).unwrap());

        let two = corpus(&[&["a"], &["b"]]);
        let s = split_corpus(&two, 0.5, 1).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (1, 1));
        assert!(split_corpus(&corpus(&[&["a"]]), 0.5, 1).is_err());
        assert!(split_corpus(&two, 1.0, 1).is_err());
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent(s in "\\PC{0,40}") {
            let once = normalize_keyword(&s);
            prop_assert_eq!(normalize_keyword(&once), once.clone());
        }

        #[test]
        fn occurrences_bound_vocab(docs in prop::collection::vec(
            prop::collection::vec("[a-e]{1,2}( [a-c])?", 1..6), 1..8)) {
            let c = Corpus::from_documents(
                docs.iter().enumerate().map(|(i, k)| Document::new(i.to_string(), k).0).collect());
            let v = build_vocab(&c, 1).unwrap();
            prop_assert!(c.keyword_occurrences() >= v.len());
        }

        #[test]
        fn split_partitions(n in 2usize..40, frac in 0.01f64..0.99, seed in any::<u64>()) {
            let c = Corpus::from_documents(
                (0..n).map(|i| Document::new(i.to_string(), &["k"]).0).collect());
            let s = split_corpus(&c, frac, seed).unwrap();
            let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            prop_assert_eq!(s, split_corpus(&c, frac, seed).unwrap());
        }
    }
}
