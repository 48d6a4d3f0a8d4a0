//! Keyword decomposition into input units: character n-grams of each word,
//! one unit per word, one unit for the whole keyword, and zero-weight fill
//! units padding every decomposition to the same length.
//!
//! Words are not wrapped in boundary markers before n-gram extraction, so
//! "search" yields `sea ear arc rch` for n = 3. This differs from FastText,
//! which would also produce `<se` and `ch>`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{normalize_keyword, Vocab};
use crate::error::{Error, Result};

pub const DEFAULT_BUCKETS: u64 = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubwordConfig {
    pub n_min: u8,
    pub n_max: u8,
    pub max_ngrams: u32,
    pub max_words: u32,
    pub buckets: u64,
}

impl Default for SubwordConfig {
    fn default() -> Self {
        SubwordConfig {
            n_min: 3,
            n_max: 6,
            max_ngrams: 20,
            max_words: 11,
            buckets: DEFAULT_BUCKETS,
        }
    }
}

impl SubwordConfig {
    /// Fixed decomposition length.
    pub fn slots(&self) -> usize {
        self.max_ngrams as usize + self.max_words as usize + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_min < 1 || self.n_min > self.n_max {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= n_min <= n_max, got {}..{}",
                self.n_min, self.n_max
            )));
        }
        if self.buckets < 1 {
            return Err(Error::InvalidArgument("bucket count must be >= 1".into()));
        }
        Ok(())
    }
}

/// Layout of the input-unit id space:
/// `[0, B)` n-gram buckets, then word units, then keyword units, then one
/// fill unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnitSpace {
    pub buckets: u64,
    pub words: usize,
    pub keywords: usize,
}

impl UnitSpace {
    pub fn new(buckets: u64, vocab: &Vocab) -> Self {
        UnitSpace {
            buckets,
            words: vocab.word_count(),
            keywords: vocab.len(),
        }
    }

    pub fn word_unit(&self, word: u32) -> u32 {
        (self.buckets + word as u64) as u32
    }

    pub fn keyword_unit(&self, keyword: u32) -> u32 {
        (self.buckets + self.words as u64 + keyword as u64) as u32
    }

    pub fn fill_unit(&self) -> u32 {
        (self.buckets + (self.words + self.keywords) as u64) as u32
    }

    pub fn rows(&self) -> usize {
        self.fill_unit() as usize + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitKind {
    Ngram,
    Word,
    Keyword,
    Fill,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitDecomposition {
    /// `(unit id, weight)`; fill slots carry weight 0.
    pub slots: Vec<(u32, f32)>,
}

impl UnitDecomposition {
    pub fn active(&self) -> impl Iterator<Item = (u32, f32)> + '_ {
        self.slots.iter().copied().filter(|&(_, w)| w != 0.0)
    }

    pub fn weight_sum(&self) -> f64 {
        self.slots.iter().map(|&(_, w)| w as f64).sum()
    }

    pub fn kind(&self, space: &UnitSpace, unit: u32) -> UnitKind {
        let u = unit as u64;
        if u < space.buckets {
            UnitKind::Ngram
        } else if u < space.buckets + space.words as u64 {
            UnitKind::Word
        } else if unit < space.fill_unit() {
            UnitKind::Keyword
        } else {
            UnitKind::Fill
        }
    }

    /// One `unit<TAB>kind<TAB>weight` line per slot.
    pub fn debug_text(&self, space: &UnitSpace) -> String {
        let mut s = String::new();
        for &(u, w) in &self.slots {
            let _ = writeln!(s, "{u}\t{:?}\t{w}", self.kind(space, u));
        }
        s
    }
}

/// Contiguous character substrings of length `n_min..=n_max`, ordered by
/// start position then length. Substrings spanning the whole word are
/// left out: the word has its own unit.
pub fn char_ngrams(word: &str, n_min: usize, n_max: usize) -> Vec<String> {
    let chars: Vec<char> = word.chars().collect();
    let len = chars.len();
    let mut out = Vec::new();
    for start in 0..len {
        for n in n_min.max(1)..=n_max {
            if n >= len || start + n > len {
                break;
            }
            out.push(chars[start..start + n].iter().collect());
        }
    }
    out
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a (64-bit) over the UTF-8 bytes, reduced modulo `buckets`.
pub fn hash_ngram(ngram: &str, buckets: u64) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in ngram.as_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h % buckets
}

/// Decomposes a keyword into exactly `cfg.slots()` units.
///
/// Layout: up to `max_ngrams` n-gram buckets (words left to right, each by
/// start position then length), then one unit per in-vocabulary word (at
/// most `max_words`), then the keyword unit when the keyword is in the
/// vocabulary, then fill.
pub fn decompose(
    keyword: &str,
    vocab: &Vocab,
    space: &UnitSpace,
    cfg: &SubwordConfig,
) -> Result<UnitDecomposition> {
    let keyword = normalize_keyword(keyword);
    if keyword.is_empty() {
        return Err(Error::InvalidArgument("empty keyword".into()));
    }
    let mut slots = Vec::with_capacity(cfg.slots());
    let ngram_cap = cfg.max_ngrams as usize;
    'words: for word in keyword.split(' ') {
        for g in char_ngrams(word, cfg.n_min as usize, cfg.n_max as usize) {
            if slots.len() == ngram_cap {
                break 'words;
            }
            slots.push((hash_ngram(&g, space.buckets) as u32, 1.0));
        }
    }
    for word in keyword.split(' ').take(cfg.max_words as usize) {
        if let Some(w) = vocab.word_id(word) {
            slots.push((space.word_unit(w), 1.0));
        }
    }
    if let Some(k) = vocab.keyword_id(&keyword) {
        slots.push((space.keyword_unit(k), 1.0));
    }
    slots.resize(cfg.slots(), (space.fill_unit(), 0.0));
    Ok(UnitDecomposition { slots })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocab, Corpus, Document};
    use proptest::prelude::*;

    fn vocab(kws: &[&str]) -> Vocab {
        build_vocab(&Corpus::from_documents(vec![Document::new("d", kws).0]), 1).unwrap()
    }

    #[test]
    fn trigram_examples() {
        assert_eq!(char_ngrams("search", 3, 3), ["sea", "ear", "arc", "rch"]);
        assert_eq!(char_ngrams("engine", 3, 3), ["eng", "ngi", "gin", "ine"]);
        assert!(char_ngrams("ab", 3, 6).is_empty());
        assert!(char_ngrams("", 3, 6).is_empty());
        assert_eq!(char_ngrams("abcd", 2, 3), ["ab", "abc", "bc", "bcd", "cd"]);
        assert_eq!(char_ngrams("añob", 3, 6), ["año", "ñob"]);
    }

    /// Reference FNV-1a, written independently of `hash_ngram`.
    fn fnv1a_reference(bytes: &[u8]) -> u64 {
        bytes.iter().fold(14695981039346656037u64, |h, &b| {
            (h ^ u64::from(b)).wrapping_mul(1099511628211)
        })
    }

    #[test]
    fn hashing() {
        assert_eq!(hash_ngram("sea", 1), 0);
        assert_eq!(hash_ngram("sea", 2_000_000), hash_ngram("sea", 2_000_000));
        // published FNV-1a 64 test vectors
        assert_eq!(fnv1a_reference(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a_reference(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(hash_ngram("a", u64::MAX), 0xaf63dc4c8601ec8c);
        let expected = fnv1a_reference(b"sea") % 2_000_000;
        assert_eq!(hash_ngram("sea", 2_000_000), expected);
    }

    #[test]
    fn search_engine_layout() {
        let v = vocab(&["search engine"]);
        let space = UnitSpace::new(1000, &v);
        let cfg = SubwordConfig { n_min: 3, n_max: 3, ..Default::default() };
        let d = decompose("search engine", &v, &space, &cfg).unwrap();
        assert_eq!(d.slots.len(), 32);
        let kinds: Vec<UnitKind> = d.slots.iter().map(|&(u, _)| d.kind(&space, u)).collect();
        assert!(kinds[..8].iter().all(|k| *k == UnitKind::Ngram));
        assert_eq!(&kinds[8..11], [UnitKind::Word, UnitKind::Word, UnitKind::Keyword]);
        assert!(kinds[11..].iter().all(|k| *k == UnitKind::Fill));
        assert_eq!(d.weight_sum(), 11.0);
        assert_eq!(d.slots[0].0 as u64, hash_ngram("sea", 1000));
        assert_eq!(d.slots[4].0 as u64, hash_ngram("eng", 1000));
    }

    #[test]
    fn oov_keyword_has_no_keyword_unit() {
        let v = vocab(&["quantum computing", "remote sensing"]);
        let space = UnitSpace::new(1000, &v);
        let d = decompose("quantum sensing", &v, &space, &SubwordConfig::default()).unwrap();
        let kinds: Vec<UnitKind> = d.active().map(|(u, _)| d.kind(&space, u)).collect();
        assert!(!kinds.contains(&UnitKind::Keyword));
        assert_eq!(kinds.iter().filter(|k| **k == UnitKind::Word).count(), 2);
        assert_eq!(kinds.iter().filter(|k| **k == UnitKind::Ngram).count(), 20);
    }

    #[test]
    fn single_char_keyword() {
        let v = vocab(&["x", "y"]);
        let space = UnitSpace::new(10, &v);
        let d = decompose("x", &v, &space, &SubwordConfig::default()).unwrap();
        assert_eq!(d.active().count(), 2);
        assert!(decompose("  ", &v, &space, &SubwordConfig::default()).is_err());
    }

    #[test]
    fn unit_space_ranges() {
        let v = vocab(&["a b", "c"]);
        let s = UnitSpace::new(5, &v);
        assert_eq!((s.word_unit(0), s.word_unit(2)), (5, 7));
        assert_eq!((s.keyword_unit(0), s.keyword_unit(1)), (8, 9));
        assert_eq!((s.fill_unit(), s.rows()), (10, 11));
    }

    proptest! {
        #[test]
        fn decomposition_shape(words in prop::collection::vec("[a-z]{1,12}", 1..16)) {
            let kw = words.join(" ");
            let v = vocab(&[kw.as_str()]);
            let space = UnitSpace::new(97, &v);
            let cfg = SubwordConfig::default();
            let d = decompose(&kw, &v, &space, &cfg).unwrap();
            prop_assert_eq!(d.slots.len(), cfg.slots());
            prop_assert!(d.weight_sum() >= 1.0);
            let ngrams = d.active().filter(|&(u, _)| d.kind(&space, u) == UnitKind::Ngram).count();
            prop_assert!(ngrams <= 20);
            for &(u, w) in &d.slots {
                prop_assert!(w == 0.0 || w == 1.0);
                prop_assert_eq!(w == 0.0, u == space.fill_unit());
            }
            prop_assert_eq!(&d, &decompose(&kw, &v, &space, &cfg).unwrap());
        }
    }
}
