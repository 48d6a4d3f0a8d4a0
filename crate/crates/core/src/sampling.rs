//! Positive (target, context) pairs from keyword combinations within a
//! document, and negative keywords drawn from foreign connected components.

use std::io::Write;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Split, Vocab};
use crate::error::{Error, Result};
use crate::graph::{ComponentLabeling, CooccurrenceGraph};
use crate::seeded_rng;

/// Per-target cap on context combinations; larger sets are subsampled.
pub const MAX_COMBINATIONS: usize = 10_000;

/// Rejection-sampling budget for the non-co-occurrence fallback.
pub const FALLBACK_TRIES: usize = 1000;

const STREAM_SUBSAMPLE: u64 = 1;
const STREAM_EPOCH: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingExample {
    pub target: u32,
    /// Exactly `w - 1` distinct keywords from the target's document.
    pub context: Vec<u32>,
    pub negatives: Vec<u32>,
    /// Set when the target's component left too few outside candidates and
    /// negatives came from the non-co-occurrence fallback instead.
    pub fallback: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeStrategy {
    /// Keywords outside the target's connected component.
    #[default]
    Components,
    /// Any keyword other than the target.
    Random,
}

impl std::str::FromStr for NegativeStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "components" => Ok(Self::Components),
            "random" => Ok(Self::Random),
            other => Err(Error::InvalidArgument(format!(
                "unknown negative sampling strategy {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for NegativeStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Components => "components",
            Self::Random => "random",
        })
    }
}

/// Binomial coefficient, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Lexicographic rank -> k-subset of `0..m`.
fn unrank_combination(m: usize, k: usize, mut rank: u128, out: &mut Vec<usize>) {
    out.clear();
    let mut x = 0;
    for pos in 0..k {
        loop {
            let count = binomial(m - 1 - x, k - 1 - pos);
            if rank < count {
                break;
            }
            rank -= count;
            x += 1;
        }
        out.push(x);
        x += 1;
    }
}

/// Calls `f` with every k-subset of `0..m` in lexicographic order.
fn for_each_combination(m: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > m {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + m - k) else {
            return;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// All (target, context) pairs of one document: for each keyword, every
/// `(w-1)`-subset of the other keywords. Targets ascend by id and contexts
/// are lexicographic over ids. Fewer than `w` keywords yields nothing.
pub fn positive_samples(doc: &[u32], w: usize) -> Result<Vec<(u32, Vec<u32>)>> {
    let mut out = Vec::new();
    positive_samples_into(doc, w, usize::MAX, None, |t, c| out.push((t, c.to_vec())))?;
    Ok(out)
}

fn positive_samples_into(
    doc: &[u32],
    w: usize,
    cap: usize,
    mut rng: Option<&mut rand_chacha::ChaCha8Rng>,
    mut emit: impl FnMut(u32, &[u32]),
) -> Result<()> {
    if w < 2 {
        return Err(Error::InvalidArgument(format!("w must be >= 2, got {w}")));
    }
    let mut ids = doc.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let k = w - 1;
    if ids.len() < w {
        return Ok(());
    }
    let m = ids.len() - 1;
    let total = binomial(m, k);
    let mut rest = Vec::with_capacity(m);
    let mut ctx = Vec::with_capacity(k);
    let mut picks = Vec::with_capacity(k);
    for (ti, &target) in ids.iter().enumerate() {
        rest.clear();
        rest.extend(ids.iter().enumerate().filter(|&(i, _)| i != ti).map(|(_, &x)| x));
        if total > cap as u128 {
            let rng = rng
                .as_deref_mut()
                .expect("subsampling needs a generator");
            let mut ranks: Vec<u128> = if total <= usize::MAX as u128 {
                index::sample(rng, total as usize, cap)
                    .into_iter()
                    .map(|r| r as u128)
                    .collect()
            } else {
                let mut seen = std::collections::HashSet::with_capacity(cap);
                while seen.len() < cap {
                    seen.insert(rng.gen_range(0..total));
                }
                seen.into_iter().collect()
            };
            ranks.sort_unstable();
            for r in ranks {
                unrank_combination(m, k, r, &mut picks);
                ctx.clear();
                ctx.extend(picks.iter().map(|&p| rest[p]));
                emit(target, &ctx);
            }
        } else {
            for_each_combination(m, k, |c| {
                ctx.clear();
                ctx.extend(c.iter().map(|&p| rest[p]));
                emit(target, &ctx);
            });
        }
    }
    Ok(())
}

/// Draws negatives for a target keyword.
#[derive(Debug, Clone, Copy)]
pub struct NegativeSampler<'a> {
    labeling: &'a ComponentLabeling,
    graph: &'a CooccurrenceGraph,
    strategy: NegativeStrategy,
    ns: usize,
}

impl<'a> NegativeSampler<'a> {
    pub fn new(
        labeling: &'a ComponentLabeling,
        graph: &'a CooccurrenceGraph,
        strategy: NegativeStrategy,
        ns: usize,
    ) -> Result<Self> {
        if ns < 1 {
            return Err(Error::InvalidArgument("ns must be >= 1".into()));
        }
        if labeling.keyword_count() != graph.node_count() {
            return Err(Error::InvalidArgument(
                "labeling and graph cover different vocabularies".into(),
            ));
        }
        Ok(NegativeSampler {
            labeling,
            graph,
            strategy,
            ns,
        })
    }

    /// Fills `out` with `ns` negatives; returns whether the fallback was used.
    ///
    /// Negatives are distinct within one example whenever the candidate pool
    /// allows it.
    pub fn sample_into<R: Rng + ?Sized>(
        &self,
        target: u32,
        rng: &mut R,
        out: &mut Vec<u32>,
    ) -> Result<bool> {
        out.clear();
        let n = self.labeling.keyword_count();
        match self.strategy {
            NegativeStrategy::Random => {
                let pool = n - 1;
                if pool == 0 {
                    return Err(self.exhausted(target, 0));
                }
                let pick = |i: usize| (if i >= target as usize { i + 1 } else { i }) as u32;
                if pool >= self.ns {
                    out.extend(index::sample(rng, pool, self.ns).into_iter().map(pick));
                } else {
                    out.extend((0..self.ns).map(|_| pick(rng.gen_range(0..pool))));
                }
                Ok(false)
            }
            NegativeStrategy::Components => {
                let comp = self.labeling.component_of(target);
                let (start, end) = self.labeling.component_range(comp);
                let outside = n - (end - start);
                if outside >= self.ns {
                    let members = self.labeling.grouped_members();
                    out.extend(index::sample(rng, outside, self.ns).into_iter().map(|i| {
                        if i < start {
                            members[i]
                        } else {
                            members[i + end - start]
                        }
                    }));
                    Ok(false)
                } else {
                    self.fallback(target, rng, out)?;
                    Ok(true)
                }
            }
        }
    }

    /// Uniform over keywords that never co-occur with the target.
    fn fallback<R: Rng + ?Sized>(&self, target: u32, rng: &mut R, out: &mut Vec<u32>) -> Result<()> {
        let n = self.labeling.keyword_count();
        let pool = n - 1 - self.graph.neighbors(target).len();
        if pool == 0 {
            return Err(self.exhausted(target, 0));
        }
        let distinct = pool >= self.ns;
        let mut tries = 0;
        while out.len() < self.ns {
            if tries == FALLBACK_TRIES {
                return Err(self.exhausted(target, tries));
            }
            tries += 1;
            let cand = rng.gen_range(0..n as u32);
            if cand == target
                || self.graph.are_adjacent(target, cand)
                || (distinct && out.contains(&cand))
            {
                continue;
            }
            out.push(cand);
        }
        Ok(())
    }

    fn exhausted(&self, target: u32, tries: usize) -> Error {
        Error::NegativeSampling {
            target,
            wanted: self.ns,
            tries,
        }
    }
}

/// Convenience wrapper over [`NegativeSampler`] for a single draw.
pub fn negative_samples<R: Rng + ?Sized>(
    target: u32,
    ns: usize,
    labeling: &ComponentLabeling,
    graph: &CooccurrenceGraph,
    rng: &mut R,
) -> Result<(Vec<u32>, bool)> {
    let sampler = NegativeSampler::new(labeling, graph, NegativeStrategy::Components, ns)?;
    let mut out = Vec::with_capacity(ns);
    let fallback = sampler.sample_into(target, rng, &mut out)?;
    Ok((out, fallback))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplingConfig {
    pub w: usize,
    pub ns: usize,
    pub strategy: NegativeStrategy,
    pub max_combinations: usize,
}

impl SamplingConfig {
    pub fn new(w: usize, ns: usize) -> Self {
        SamplingConfig {
            w,
            ns,
            strategy: NegativeStrategy::Components,
            max_combinations: MAX_COMBINATIONS,
        }
    }
}

/// Positive pairs of a document set, materialized once; negatives are drawn
/// fresh for every pass.
#[derive(Debug, Clone)]
pub struct ExampleGenerator<'a> {
    sampler: NegativeSampler<'a>,
    context_len: usize,
    targets: Vec<u32>,
    /// `context_len` ids per pair, flattened.
    contexts: Vec<u32>,
    seed: u64,
}

impl<'a> ExampleGenerator<'a> {
    pub fn new(
        corpus: &Corpus,
        docs: &[usize],
        vocab: &Vocab,
        graph: &'a CooccurrenceGraph,
        labeling: &'a ComponentLabeling,
        cfg: SamplingConfig,
        seed: u64,
    ) -> Result<Self> {
        let sampler = NegativeSampler::new(labeling, graph, cfg.strategy, cfg.ns)?;
        let mut targets = Vec::new();
        let mut contexts = Vec::new();
        let mut rng = seeded_rng(seed, STREAM_SUBSAMPLE);
        for &d in docs {
            let ids = vocab.doc_ids(&corpus.documents[d]);
            positive_samples_into(&ids, cfg.w, cfg.max_combinations, Some(&mut rng), |t, c| {
                targets.push(t);
                contexts.extend_from_slice(c);
            })?;
        }
        if targets.is_empty() {
            return Err(Error::Empty(
                "no training examples: every document has fewer than w keywords".into(),
            ));
        }
        Ok(ExampleGenerator {
            sampler,
            context_len: cfg.w - 1,
            targets,
            contexts,
            seed,
        })
    }

    pub fn pair_count(&self) -> usize {
        self.targets.len()
    }

    pub fn target(&self, pair: usize) -> u32 {
        self.targets[pair]
    }

    pub fn context(&self, pair: usize) -> &[u32] {
        &self.contexts[pair * self.context_len..(pair + 1) * self.context_len]
    }

    /// Examples for the given pair indices, in that order, with negatives
    /// drawn from `rng`.
    pub fn examples<R: Rng + ?Sized>(
        &self,
        pairs: &[usize],
        rng: &mut R,
    ) -> Result<Vec<TrainingExample>> {
        pairs
            .iter()
            .map(|&p| {
                let target = self.targets[p];
                let mut negatives = Vec::with_capacity(self.sampler.ns);
                let fallback = self.sampler.sample_into(target, rng, &mut negatives)?;
                Ok(TrainingExample {
                    target,
                    context: self.context(p).to_vec(),
                    negatives,
                    fallback,
                })
            })
            .collect()
    }

    /// One epoch over `pairs`: order reshuffled and negatives redrawn with a
    /// generator derived from the base seed and the epoch index.
    pub fn epoch(&self, pairs: &[usize], epoch: u64) -> Result<Vec<TrainingExample>> {
        let mut rng = seeded_rng(self.seed, STREAM_EPOCH + epoch);
        let mut order = pairs.to_vec();
        order.shuffle(&mut rng);
        self.examples(&order, &mut rng)
    }

    /// All pairs in document order, one negative draw.
    pub fn all_examples(&self, seed: u64) -> Result<Vec<TrainingExample>> {
        let all: Vec<usize> = (0..self.pair_count()).collect();
        self.examples(&all, &mut seeded_rng(seed, 0))
    }
}

/// The full example stream over the training documents of `split`, in
/// document order, with one deterministic negative draw per pair.
pub fn generate_examples(
    corpus: &Corpus,
    split: &Split,
    vocab: &Vocab,
    graph: &CooccurrenceGraph,
    labeling: &ComponentLabeling,
    cfg: SamplingConfig,
    seed: u64,
) -> Result<Vec<TrainingExample>> {
    ExampleGenerator::new(corpus, &split.train, vocab, graph, labeling, cfg, seed)?
        .all_examples(seed)
}

/// `target<TAB>ctx1,ctx2<TAB>neg1,...` per example.
pub fn write_examples<W: Write>(examples: &[TrainingExample], mut out: W) -> std::io::Result<()> {
    let join = |ids: &[u32]| {
        ids.iter()
            .map(u32::to_string)
            .collect::<Vec<_>>()
            .join(",")
    };
    for ex in examples {
        writeln!(out, "{}\t{}\t{}", ex.target, join(&ex.context), join(&ex.negatives))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocab, Document};
    use crate::graph::{build_graph, connected_components};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn binomials() {
        assert_eq!(binomial(3, 2), 3);
        assert_eq!(binomial(1, 2), 0);
        assert_eq!(binomial(10, 0), 1);
        assert_eq!(binomial(52, 5), 2_598_960);
    }

    #[test]
    fn positive_pairs_for_one_target() {
        let pairs = positive_samples(&[0, 1, 2, 3], 3).unwrap();
        let for_a: Vec<_> = pairs.iter().filter(|(t, _)| *t == 0).map(|(_, c)| c.clone()).collect();
        assert_eq!(for_a, [vec![1, 2], vec![1, 3], vec![2, 3]]);
        assert_eq!(pairs.len(), 4 * 3);
        assert!(positive_samples(&[0, 1], 3).unwrap().is_empty());
        assert!(positive_samples(&[0, 1], 1).is_err());
    }

    #[test]
    fn unranking_matches_enumeration() {
        for (m, k) in [(5, 2), (6, 3), (7, 1), (4, 4)] {
            let mut listed = Vec::new();
            for_each_combination(m, k, |c| listed.push(c.to_vec()));
            assert_eq!(listed.len() as u128, binomial(m, k));
            let mut buf = Vec::new();
            for (r, c) in listed.iter().enumerate() {
                unrank_combination(m, k, r as u128, &mut buf);
                assert_eq!(&buf, c);
            }
        }
    }

    #[test]
    fn combination_cap_subsamples() {
        // 30 keywords, w = 4: C(29, 3) = 3654 per target; cap 100.
        let doc: Vec<u32> = (0..30).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut per_target = vec![0usize; 30];
        let mut prev: Option<(u32, Vec<u32>)> = None;
        positive_samples_into(&doc, 4, 100, Some(&mut rng), |t, c| {
            per_target[t as usize] += 1;
            assert!(!c.contains(&t));
            if let Some((pt, pc)) = &prev {
                if *pt == t {
                    assert!(pc.as_slice() < c, "sorted and distinct");
                }
            }
            prev = Some((t, c.to_vec()));
        })
        .unwrap();
        assert!(per_target.iter().all(|&n| n == 100));
    }

    /// Four documents forming three components, shaped like the classic
    /// "information retrieval" example.
    fn figure_corpus() -> Corpus {
        let docs: [&[&str]; 4] = [
            &["information retrieval", "search engine", "word embeddings", "vector"],
            &["word embeddings", "vector", "search engine"],
            &["maths", "algebra", "geometry"],
            &["protein folding", "molecular dynamics"],
        ];
        Corpus::from_documents(
            docs.iter()
                .enumerate()
                .map(|(i, k)| Document::new(format!("d{i}"), k).0)
                .collect(),
        )
    }

    #[test]
    fn figure_components_and_negatives() {
        let c = figure_corpus();
        let v = build_vocab(&c, 1).unwrap();
        let g = build_graph(&c, &v).unwrap();
        let l = connected_components(&g);
        assert_eq!(l.component_count(), 3);
        let ir = v.keyword_id("information retrieval").unwrap();
        let maths = v.keyword_id("maths").unwrap();
        assert_ne!(l.component_of(ir), l.component_of(maths));
        for seed in 0..50 {
            let (negs, fb) =
                negative_samples(ir, 2, &l, &g, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert!(!fb);
            assert_eq!(negs.len(), 2);
            assert_ne!(negs[0], negs[1]);
            for n in negs {
                assert_ne!(l.component_of(n), l.component_of(ir));
            }
        }
    }

    #[test]
    fn only_candidates_are_used() {
        // components of sizes 5 and 3
        let g = CooccurrenceGraph::from_documents(8, [vec![0u32, 1, 2, 3, 4], vec![5, 6, 7]]);
        let l = connected_components(&g);
        let (mut negs, fb) = negative_samples(0, 3, &l, &g, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(!fb);
        negs.sort_unstable();
        assert_eq!(negs, [5, 6, 7]);
    }

    #[test]
    fn single_component_falls_back_to_non_cooccurring() {
        // a path 0-1-2-3-4-5: one component, but plenty of non-neighbours
        let docs: Vec<Vec<u32>> = (0..5).map(|i| vec![i, i + 1]).collect();
        let g = CooccurrenceGraph::from_documents(6, &docs);
        let l = connected_components(&g);
        assert_eq!(l.component_count(), 1);
        for seed in 0..50 {
            let (negs, fb) = negative_samples(2, 2, &l, &g, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert!(fb);
            for n in negs {
                assert!(n != 2 && !g.are_adjacent(2, n));
            }
        }
        // a clique leaves nothing to sample
        let clique = CooccurrenceGraph::from_documents(3, [[0u32, 1, 2]]);
        let l = connected_components(&clique);
        assert!(negative_samples(0, 2, &l, &clique, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn random_strategy_excludes_target() {
        let g = CooccurrenceGraph::from_documents(5, [[0u32, 1, 2, 3, 4]]);
        let l = connected_components(&g);
        let s = NegativeSampler::new(&l, &g, NegativeStrategy::Random, 4).unwrap();
        let mut out = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            assert!(!s.sample_into(2, &mut rng, &mut out).unwrap());
            let mut sorted = out.clone();
            sorted.sort_unstable();
            assert_eq!(sorted, [0, 1, 3, 4]);
        }
    }

    #[test]
    fn generate_small_stream() {
        let c = Corpus::from_documents(vec![
            Document::new("d0", &["a", "b", "c"]).0,
            Document::new("d1", &["x", "y"]).0,
        ]);
        let v = build_vocab(&c, 1).unwrap();
        let g = build_graph(&c, &v).unwrap();
        let l = connected_components(&g);
        let split = Split { train: vec![0, 1], test: vec![], seed: 0 };
        let cfg = SamplingConfig::new(3, 2);
        let ex = generate_examples(&c, &split, &v, &g, &l, cfg, 5).unwrap();
        assert_eq!(ex.len(), 3);
        assert_eq!(ex.iter().map(|e| e.target).collect::<Vec<_>>(), [0, 1, 2]);
        for e in &ex {
            assert_eq!(e.negatives.len(), 2);
            assert!(!e.context.contains(&e.target));
        }
        assert_eq!(ex, generate_examples(&c, &split, &v, &g, &l, cfg, 5).unwrap());

        let mut buf = Vec::new();
        write_examples(&ex[..1], &mut buf).unwrap();
        let line = String::from_utf8(buf).unwrap();
        assert!(line.starts_with("0\t1,2\t"), "{line}");

        let only_pairs = Split { train: vec![1], test: vec![], seed: 0 };
        assert!(generate_examples(&c, &only_pairs, &v, &g, &l, cfg, 5).is_err());
    }

    proptest! {
        #[test]
        fn count_law(n in 0usize..7, w in 2usize..5) {
            let doc: Vec<u32> = (0..n as u32).collect();
            let pairs = positive_samples(&doc, w).unwrap();
            // brute force: every target, every subset of the rest by bitmask
            let mut brute = 0usize;
            for t in 0..n {
                for mask in 0u32..(1 << n) {
                    if mask & (1 << t) == 0 && mask.count_ones() as usize == w - 1 {
                        brute += 1;
                    }
                }
            }
            prop_assert_eq!(pairs.len(), brute);
            prop_assert_eq!(pairs.len() as u128, n as u128 * binomial(n.saturating_sub(1), w - 1));
        }
    }
}
