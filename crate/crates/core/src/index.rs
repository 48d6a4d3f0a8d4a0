//! Exact cosine-similarity search over a keyword universe.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Split, Vocab};
use crate::error::{Error, Result};
use crate::model::EmbeddingModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexMode {
    /// Every keyword of the dataset.
    AllItems,
    /// Only keywords of test documents.
    TestItems,
}

impl std::str::FromStr for IndexMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" | "all_items" => Ok(IndexMode::AllItems),
            "test" | "test_items" => Ok(IndexMode::TestItems),
            other => Err(Error::InvalidArgument(format!("unknown index mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for IndexMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            IndexMode::AllItems => "all_items",
            IndexMode::TestItems => "test_items",
        })
    }
}

/// Keyword ids making up the candidate universe of `mode`, ascending.
pub fn candidate_keywords(corpus: &Corpus, split: &Split, vocab: &Vocab, mode: IndexMode) -> Vec<u32> {
    match mode {
        IndexMode::AllItems => (0..vocab.len() as u32).collect(),
        IndexMode::TestItems => split
            .test
            .iter()
            .flat_map(|&d| vocab.doc_ids(&corpus.documents[d]))
            .collect::<BTreeSet<u32>>()
            .into_iter()
            .collect(),
    }
}

#[derive(Debug, Clone)]
pub struct SimilarityIndex {
    ids: Vec<u32>,
    /// Unit-norm rows, `dim` values each.
    rows: Vec<f64>,
    dim: usize,
    pub mode: IndexMode,
    /// Keywords left out because their embedding was the zero vector.
    pub zero_norm_excluded: usize,
}

fn normalized(v: &[f64]) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (norm > 0.0 && norm.is_finite()).then(|| v.iter().map(|x| x / norm).collect())
}

/// Descending score, ascending id on ties.
fn by_score(a: &(u32, f64), b: &(u32, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

impl SimilarityIndex {
    /// Builds an index from `(keyword id, embedding)` pairs; rows are kept
    /// in ascending id order.
    pub fn from_embeddings<I>(entries: I, dim: usize, mode: IndexMode) -> Result<Self>
    where
        I: IntoIterator<Item = (u32, Vec<f64>)>,
    {
        let mut index = SimilarityIndex {
            ids: Vec::new(),
            rows: Vec::new(),
            dim,
            mode,
            zero_norm_excluded: 0,
        };
        let mut entries: Vec<(u32, Vec<f64>)> = entries.into_iter().collect();
        entries.sort_by_key(|e| e.0);
        entries.dedup_by_key(|e| e.0);
        let seen = entries.len();
        for (id, v) in entries {
            match normalized(&v) {
                Some(row) => {
                    index.ids.push(id);
                    index.rows.extend(row);
                }
                None => index.zero_norm_excluded += 1,
            }
        }
        if seen == 0 {
            return Err(Error::Empty("index keyword set".into()));
        }
        if index.zero_norm_excluded > 0 {
            log::warn!("{} zero-norm embeddings left out of the index", index.zero_norm_excluded);
        }
        Ok(index)
    }

    pub fn build(model: &EmbeddingModel, keywords: &[u32], mode: IndexMode) -> Result<Self> {
        Self::from_embeddings(
            keywords.iter().map(|&k| (k, model.keyword_embedding_by_id(k))),
            model.dim(),
            mode,
        )
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn contains(&self, id: u32) -> bool {
        self.ids.binary_search(&id).is_ok()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    /// Cosine of the query to every stored row, aligned with [`ids`](Self::ids).
    pub fn scores(&self, query: &[f64]) -> Result<Vec<f64>> {
        if query.len() != self.dim {
            return Err(Error::LengthMismatch(query.len(), self.dim));
        }
        let q = normalized(query).ok_or(Error::ZeroVector)?;
        Ok((0..self.len())
            .map(|i| self.row(i).iter().zip(&q).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// Top `k` keywords by cosine, descending, ties by ascending id.
    pub fn nearest(&self, query: &[f64], k: usize, exclude: &HashSet<u32>) -> Result<Vec<(u32, f64)>> {
        if k < 1 {
            return Err(Error::InvalidArgument("k must be >= 1".into()));
        }
        let scores = self.scores(query)?;
        let candidates: Vec<(u32, f64)> = self
            .ids
            .iter()
            .copied()
            .zip(scores)
            .filter(|(id, _)| !exclude.contains(id))
            .collect();
        Ok(top_k(candidates, k))
    }
}

/// Sorts the best `k` entries by [`by_score`] and drops the rest.
pub fn top_k(mut items: Vec<(u32, f64)>, k: usize) -> Vec<(u32, f64)> {
    if items.len() > k {
        items.select_nth_unstable_by(k - 1, by_score);
        items.truncate(k);
    }
    items.sort_unstable_by(by_score);
    items
}

/// Full ranking by score, descending, ties by ascending id.
pub fn rank_all(mut items: Vec<(u32, f64)>) -> Vec<(u32, f64)> {
    items.sort_unstable_by(by_score);
    items
}

/// `query<TAB>rank<TAB>keyword<TAB>score` lines, ranks 1-based.
pub fn write_neighbors_tsv<W: Write>(
    query: &str,
    hits: &[(u32, f64)],
    vocab: &Vocab,
    mut out: W,
) -> std::io::Result<()> {
    for (rank, (id, score)) in hits.iter().enumerate() {
        writeln!(out, "{query}\t{}\t{}\t{score:.4}", rank + 1, vocab.keyword(*id))?;
    }
    Ok(())
}
