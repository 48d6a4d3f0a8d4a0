//! Keyword-suggestion ranking tasks.
//!
//! * Task 1, document keyword identification: each keyword of a test
//!   document queries the index; the document's other keywords are the
//!   relevant items. Scored by AP@20, aggregated as MAP over all queries.
//! * Task 2, masked keyword discovery: one keyword of a sampled test
//!   document is hidden, the remaining keywords' cosine scores are fused,
//!   and the hidden keyword's reciprocal rank (zero past rank 100) is
//!   averaged into MRR.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document, Split};
use crate::error::{Error, Result};
use crate::index::{candidate_keywords, IndexMode, SimilarityIndex};
use crate::model::EmbeddingModel;
use crate::seeded_rng;

pub const MAP_CUTOFF: usize = 20;
pub const MRR_CUTOFF: usize = 100;
pub const MRR_DOCS: usize = 50;

const STREAM_TASK2: u64 = 21;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Map20,
    Mrr100,
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "map20" => Ok(Task::Map20),
            "mrr100" => Ok(Task::Mrr100),
            other => Err(Error::InvalidArgument(format!("unknown task {other:?}"))),
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Task::Map20 => "map20",
            Task::Mrr100 => "mrr100",
        })
    }
}

/// How the remaining keywords' similarities combine in Task 2. Both give
/// the same ranking; `Mean` only rescales the scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fusion {
    #[default]
    Sum,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryScore {
    pub query: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skipped {
    pub query: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub mode: IndexMode,
    #[serde(default)]
    pub system: String,
    pub aggregate: f64,
    pub per_query: Vec<QueryScore>,
    /// Queries that produced no score.
    pub skipped: Vec<Skipped>,
    /// Queries scored zero for a recorded reason (Task 2 masked keyword
    /// absent from the index).
    #[serde(default)]
    pub zero_reasons: Vec<Skipped>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl EvalReport {
    fn new(task: Task, mode: IndexMode) -> Self {
        EvalReport {
            task,
            mode,
            system: String::new(),
            aggregate: 0.0,
            per_query: Vec::new(),
            skipped: Vec::new(),
            zero_reasons: Vec::new(),
            warnings: Vec::new(),
        }
    }

    fn skip(&mut self, query: String, reason: &str) {
        self.skipped.push(Skipped {
            query,
            reason: reason.to_owned(),
        });
    }

    fn finish(mut self) -> Self {
        self.aggregate = if self.per_query.is_empty() {
            0.0
        } else {
            self.per_query.iter().map(|q| q.score).sum::<f64>() / self.per_query.len() as f64
        };
        self
    }

    pub fn scores(&self) -> Vec<f64> {
        self.per_query.iter().map(|q| q.score).collect()
    }

    /// Human-readable summary.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let name = if self.system.is_empty() { "-" } else { &self.system };
        let _ = writeln!(s, "{:<24} {:<8} {:<10} {:>8} {:>8} {:>8}", "system", "task", "mode", "score", "queries", "skipped");
        let _ = writeln!(
            s,
            "{:<24} {:<8} {:<10} {:>8.4} {:>8} {:>8}",
            name,
            self.task.to_string(),
            self.mode.to_string(),
            self.aggregate,
            self.per_query.len(),
            self.skipped.len()
        );
        let mut reasons: BTreeMap<&str, usize> = BTreeMap::new();
        for sk in self.skipped.iter().chain(&self.zero_reasons) {
            *reasons.entry(sk.reason.as_str()).or_default() += 1;
        }
        for (reason, n) in reasons {
            let _ = writeln!(s, "  {n} x {reason}");
        }
        for w in &self.warnings {
            let _ = writeln!(s, "  warning: {w}");
        }
        s
    }
}

/// Lookup from keyword strings to ids and embeddings.
pub trait KeywordSpace {
    fn keyword_id(&self, keyword: &str) -> Option<u32>;
    fn embed(&self, keyword: &str) -> Option<Vec<f64>>;
}

impl KeywordSpace for EmbeddingModel {
    fn keyword_id(&self, keyword: &str) -> Option<u32> {
        self.vocab().keyword_id(keyword)
    }

    fn embed(&self, keyword: &str) -> Option<Vec<f64>> {
        self.keyword_embedding(keyword).ok()
    }
}

/// AP@cutoff with denominator `min(|relevant|, cutoff)`.
pub fn average_precision(ranking: &[u32], relevant: &HashSet<u32>, cutoff: usize) -> Result<f64> {
    if cutoff < 1 {
        return Err(Error::InvalidArgument("cutoff must be >= 1".into()));
    }
    if relevant.is_empty() {
        return Err(Error::Empty("relevant set".into()));
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, id) in ranking.iter().take(cutoff).enumerate() {
        if relevant.contains(id) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(sum / relevant.len().min(cutoff) as f64)
}

/// 1-based rank of `target` among `(id, score)` items ordered by descending
/// score with ties broken by ascending id; `None` if absent.
pub fn rank_of(target: u32, items: &[(u32, f64)]) -> Option<usize> {
    let &(_, ts) = items.iter().find(|(id, _)| *id == target)?;
    Some(
        1 + items
            .iter()
            .filter(|&&(id, s)| s > ts || (s == ts && id < target))
            .count(),
    )
}

pub fn reciprocal_rank(rank: Option<usize>, cutoff: usize) -> f64 {
    match rank {
        Some(r) if r <= cutoff => 1.0 / r as f64,
        _ => 0.0,
    }
}

fn test_documents<'a>(corpus: &'a Corpus, split: &Split) -> Vec<&'a Document> {
    let mut docs: Vec<&Document> = split.test.iter().map(|&d| &corpus.documents[d]).collect();
    docs.sort_by(|a, b| a.id.cmp(&b.id));
    docs
}

/// Task 1 over explicit documents and index.
pub fn task1_with<S: KeywordSpace + ?Sized>(
    docs: &[&Document],
    space: &S,
    index: &SimilarityIndex,
    cutoff: usize,
) -> Result<EvalReport> {
    let mut report = EvalReport::new(Task::Map20, index.mode);
    for doc in docs {
        let mut queries: Vec<(Option<u32>, &str)> =
            doc.keywords.iter().map(|k| (space.keyword_id(k), k.as_str())).collect();
        queries.sort_by_key(|&(id, _)| id.unwrap_or(u32::MAX));
        for (qid, q) in queries {
            let name = format!("{}#{}", doc.id, q);
            let Some(query) = space.embed(q) else {
                report.skip(name, "query keyword has no embedding");
                continue;
            };
            let relevant: HashSet<u32> = doc
                .keywords
                .iter()
                .filter(|k| k.as_str() != q)
                .filter_map(|k| space.keyword_id(k))
                .filter(|&id| index.contains(id))
                .collect();
            if relevant.is_empty() {
                report.skip(name, "no other document keyword in the index");
                continue;
            }
            let exclude: HashSet<u32> = qid.into_iter().collect();
            let ranking: Vec<u32> = match index.nearest(&query, cutoff, &exclude) {
                Ok(hits) => hits.into_iter().map(|(id, _)| id).collect(),
                Err(Error::ZeroVector) => {
                    report.skip(name, "query embedding is the zero vector");
                    continue;
                }
                Err(e) => return Err(e),
            };
            let ap = average_precision(&ranking, &relevant, cutoff)?;
            report.per_query.push(QueryScore { query: name, score: ap });
        }
    }
    Ok(report.finish())
}

/// Task 1 (MAP@20) on the test documents of `split`.
pub fn task1_map(
    model: &EmbeddingModel,
    corpus: &Corpus,
    split: &Split,
    mode: IndexMode,
) -> Result<EvalReport> {
    let ids = candidate_keywords(corpus, split, model.vocab(), mode);
    let index = SimilarityIndex::build(model, &ids, mode)?;
    task1_with(&test_documents(corpus, split), model, &index, MAP_CUTOFF)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Task2Options {
    pub n_docs: usize,
    pub seed: u64,
    pub cutoff: usize,
    pub fusion: Fusion,
}

impl Task2Options {
    pub fn new(seed: u64) -> Self {
        Task2Options {
            n_docs: MRR_DOCS,
            seed,
            cutoff: MRR_CUTOFF,
            fusion: Fusion::Sum,
        }
    }
}

/// The sampled documents and masked keyword positions of Task 2, in
/// evaluation order.
pub fn task2_plan(docs: &[&Document], opts: &Task2Options) -> (Vec<(usize, usize)>, usize) {
    let eligible: Vec<usize> = (0..docs.len()).filter(|&i| docs[i].keywords.len() >= 2).collect();
    let mut rng = seeded_rng(opts.seed, STREAM_TASK2);
    let n = opts.n_docs.min(eligible.len());
    let mut chosen: Vec<usize> = index::sample(&mut rng, eligible.len(), n)
        .into_iter()
        .map(|i| eligible[i])
        .collect();
    chosen.sort_unstable();
    let plan = chosen
        .into_iter()
        .map(|d| (d, rng.gen_range(0..docs[d].keywords.len())))
        .collect();
    (plan, docs.len() - eligible.len())
}

/// Task 2 over explicit documents and index.
pub fn task2_with<S: KeywordSpace + ?Sized>(
    docs: &[&Document],
    space: &S,
    index: &SimilarityIndex,
    opts: &Task2Options,
) -> Result<EvalReport> {
    let mut report = EvalReport::new(Task::Mrr100, index.mode);
    let eligible = docs.iter().filter(|d| d.keywords.len() >= 2).count();
    if opts.n_docs > eligible {
        report.warnings.push(format!(
            "requested {} documents, only {eligible} test documents have two or more keywords",
            opts.n_docs
        ));
    }
    let (plan, too_small) = task2_plan(docs, opts);
    for d in docs.iter().filter(|d| d.keywords.len() < 2) {
        report.skip(d.id.clone(), "document has fewer than two keywords");
    }
    debug_assert_eq!(too_small, report.skipped.len());

    for (d, masked_pos) in plan {
        let doc = docs[d];
        let masked = &doc.keywords[masked_pos];
        let name = doc.id.clone();
        let rest: Vec<&String> = doc
            .keywords
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != masked_pos)
            .map(|(_, k)| k)
            .collect();
        let queries: Vec<Vec<f64>> = rest.iter().filter_map(|k| space.embed(k)).collect();
        if queries.is_empty() {
            report.skip(name, "no remaining keyword has an embedding");
            continue;
        }
        let Some(masked_id) = space.keyword_id(masked).filter(|&id| index.contains(id)) else {
            report.zero_reasons.push(Skipped {
                query: name.clone(),
                reason: "masked keyword not in the index".into(),
            });
            report.per_query.push(QueryScore { query: name, score: 0.0 });
            continue;
        };
        let rest_ids: HashSet<u32> = rest.iter().filter_map(|k| space.keyword_id(k)).collect();
        let mut fused = vec![0.0; index.len()];
        for q in &queries {
            for (f, s) in fused.iter_mut().zip(index.scores(q)?) {
                *f += s;
            }
        }
        if opts.fusion == Fusion::Mean {
            let n = queries.len() as f64;
            fused.iter_mut().for_each(|f| *f /= n);
        }
        let candidates: Vec<(u32, f64)> = index
            .ids()
            .iter()
            .copied()
            .zip(fused)
            .filter(|(id, _)| !rest_ids.contains(id))
            .collect();
        let rr = reciprocal_rank(rank_of(masked_id, &candidates), opts.cutoff);
        report.per_query.push(QueryScore { query: name, score: rr });
    }
    Ok(report.finish())
}

/// Task 2 (MRR@100) on `n_docs` random test documents of `split`.
pub fn task2_mrr(
    model: &EmbeddingModel,
    corpus: &Corpus,
    split: &Split,
    mode: IndexMode,
    opts: &Task2Options,
) -> Result<EvalReport> {
    let ids = candidate_keywords(corpus, split, model.vocab(), mode);
    let index = SimilarityIndex::build(model, &ids, mode)?;
    task2_with(&test_documents(corpus, split), model, &index, opts)
}

/// Checks that reports score the same queries in the same order.
pub fn check_paired(reports: &[EvalReport]) -> Result<()> {
    let Some(first) = reports.first() else {
        return Ok(());
    };
    for r in &reports[1..] {
        if r.task != first.task {
            return Err(Error::QueryMismatch(format!("tasks differ: {} vs {}", first.task, r.task)));
        }
        if r.per_query.len() != first.per_query.len()
            || r.per_query.iter().zip(&first.per_query).any(|(a, b)| a.query != b.query)
        {
            return Err(Error::QueryMismatch(format!(
                "{:?} and {:?} score different queries",
                first.system, r.system
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    struct Toy {
        ids: HashMap<String, u32>,
        vectors: Vec<Vec<f64>>,
    }

    impl KeywordSpace for Toy {
        fn keyword_id(&self, k: &str) -> Option<u32> {
            self.ids.get(k).copied()
        }
        fn embed(&self, k: &str) -> Option<Vec<f64>> {
            self.keyword_id(k).map(|i| self.vectors[i as usize].clone())
        }
    }

    fn doc(id: &str, kws: &[&str]) -> Document {
        Document::new(id, kws).0
    }

    #[test]
    fn ap_examples() {
        let rel = HashSet::from([10, 30]);
        let ap = average_precision(&[10, 20, 30, 40], &rel, 20).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        assert_eq!(average_precision(&[30, 10, 5], &rel, 20).unwrap(), 1.0);
        assert_eq!(average_precision(&[1, 2, 3], &rel, 20).unwrap(), 0.0);
        assert!(average_precision(&[1], &HashSet::new(), 20).is_err());
        // more relevant items than the cutoff: a perfect list still scores 1
        let many: HashSet<u32> = (0..30).collect();
        let ranking: Vec<u32> = (0..30).collect();
        assert_eq!(average_precision(&ranking, &many, 20).unwrap(), 1.0);
    }

    #[test]
    fn rr_and_rank() {
        let items = [(1, 0.5), (2, 0.9), (3, 0.5), (4, 0.1)];
        assert_eq!(rank_of(2, &items), Some(1));
        assert_eq!(rank_of(1, &items), Some(2));
        assert_eq!(rank_of(3, &items), Some(3));
        assert_eq!(rank_of(9, &items), None);
        assert_eq!(reciprocal_rank(Some(4), 100), 0.25);
        assert_eq!(reciprocal_rank(Some(101), 100), 0.0);
    }

    /// Documents get mutually orthogonal directions; keywords of a document
    /// share that direction exactly.
    fn separated() -> (Vec<Document>, Toy) {
        let docs = vec![
            doc("a", &["a1", "a2", "a3"]),
            doc("b", &["b1", "b2"]),
            doc("c", &["c1", "c2", "c3", "c4"]),
        ];
        let mut ids = HashMap::new();
        let mut vectors = Vec::new();
        for (d, document) in docs.iter().enumerate() {
            for k in &document.keywords {
                ids.insert(k.clone(), vectors.len() as u32);
                let mut v = vec![0.0; 3];
                v[d] = 1.0;
                vectors.push(v);
            }
        }
        (docs, Toy { ids, vectors })
    }

    fn toy_index(toy: &Toy, mode: IndexMode) -> SimilarityIndex {
        SimilarityIndex::from_embeddings(
            toy.vectors.iter().cloned().enumerate().map(|(i, v)| (i as u32, v)),
            toy.vectors[0].len(),
            mode,
        )
        .unwrap()
    }

    #[test]
    fn perfect_separation_scores_one() {
        let (docs, toy) = separated();
        let refs: Vec<&Document> = docs.iter().collect();
        let index = toy_index(&toy, IndexMode::AllItems);
        let r = task1_with(&refs, &toy, &index, MAP_CUTOFF).unwrap();
        assert_eq!(r.per_query.len(), 9);
        assert_eq!(r.aggregate, 1.0);

        let r = task2_with(&refs, &toy, &index, &Task2Options::new(1)).unwrap();
        assert_eq!(r.per_query.len(), 3);
        assert_eq!(r.aggregate, 1.0);
    }

    #[test]
    fn masked_keyword_outside_index_scores_zero() {
        let (mut docs, mut toy) = separated();
        docs[1] = doc("b", &["b1", "unknown"]);
        toy.ids.remove("b2");
        let refs: Vec<&Document> = docs[1..2].iter().collect();
        let index = toy_index(&toy, IndexMode::AllItems);
        let mut hits = 0;
        for seed in 0..10 {
            let r = task2_with(&refs, &toy, &index, &Task2Options { n_docs: 1, ..Task2Options::new(seed) }).unwrap();
            if r.zero_reasons.len() == 1 {
                assert_eq!(r.per_query[0].score, 0.0);
                hits += 1;
            }
        }
        assert!(hits > 0);
    }

    #[test]
    fn single_keyword_docs_are_skipped_and_n_docs_capped() {
        let (mut docs, toy) = separated();
        docs.push(doc("d", &["a1"]));
        let refs: Vec<&Document> = docs.iter().collect();
        let index = toy_index(&toy, IndexMode::AllItems);
        let r = task2_with(&refs, &toy, &index, &Task2Options::new(3)).unwrap();
        assert_eq!(r.skipped.len(), 1);
        assert_eq!(r.per_query.len(), 3);
        assert_eq!(r.warnings.len(), 1, "50 requested, 3 eligible");
    }

    #[test]
    fn report_json_round_trip() {
        let (docs, toy) = separated();
        let refs: Vec<&Document> = docs.iter().collect();
        let r = task1_with(&refs, &toy, &toy_index(&toy, IndexMode::TestItems), 20).unwrap();
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"task\":\"map20\""));
        assert!(json.contains("\"mode\":\"test_items\""));
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        assert!(r.to_table().contains("map20"));
        assert!(check_paired(&[r.clone(), back]).is_ok());
        let mut other = r.clone();
        other.per_query.pop();
        assert!(check_paired(&[r, other]).is_err());
    }
}
