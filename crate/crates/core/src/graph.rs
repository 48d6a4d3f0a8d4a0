//! Keyword co-occurrence graph and its connected components.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::Serialize;

use crate::corpus::{Corpus, Vocab};
use crate::error::{Error, Result};

/// Undirected, unweighted graph over keyword ids. An edge joins two keywords
/// that appear together in at least one document.
#[derive(Debug, Clone)]
pub struct CooccurrenceGraph {
    adjacency: Vec<Vec<u32>>,
    /// Number of documents each unordered pair shares; diagnostics only.
    pair_counts: HashMap<(u32, u32), u32>,
    /// Corpus keywords that had no vocabulary id.
    pub skipped_keywords: usize,
}

impl CooccurrenceGraph {
    /// Builds an edgeless graph over `n` nodes and adds the cliques of `docs`.
    pub fn from_documents<I, D>(n: usize, docs: I) -> Self
    where
        I: IntoIterator<Item = D>,
        D: AsRef<[u32]>,
    {
        let mut graph = CooccurrenceGraph {
            adjacency: vec![Vec::new(); n],
            pair_counts: HashMap::new(),
            skipped_keywords: 0,
        };
        for doc in docs {
            let ids = doc.as_ref();
            for (i, &a) in ids.iter().enumerate() {
                for &b in &ids[i + 1..] {
                    if a == b {
                        continue;
                    }
                    let key = (a.min(b), a.max(b));
                    let count = graph.pair_counts.entry(key).or_insert(0);
                    if *count == 0 {
                        graph.adjacency[a as usize].push(b);
                        graph.adjacency[b as usize].push(a);
                    }
                    *count += 1;
                }
            }
        }
        for nbrs in &mut graph.adjacency {
            nbrs.sort_unstable();
        }
        graph
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.pair_counts.len()
    }

    /// Sorted neighbour ids.
    pub fn neighbors(&self, id: u32) -> &[u32] {
        &self.adjacency[id as usize]
    }

    pub fn are_adjacent(&self, a: u32, b: u32) -> bool {
        self.neighbors(a).binary_search(&b).is_ok()
    }

    pub fn cooccurrence_count(&self, a: u32, b: u32) -> u32 {
        self.pair_counts
            .get(&(a.min(b), a.max(b)))
            .copied()
            .unwrap_or(0)
    }
}

pub fn build_graph(corpus: &Corpus, vocab: &Vocab) -> Result<CooccurrenceGraph> {
    if vocab.is_empty() {
        return Err(Error::Empty("keyword vocabulary".into()));
    }
    let mut skipped = 0;
    let docs: Vec<Vec<u32>> = corpus
        .documents
        .iter()
        .map(|d| {
            let ids = vocab.doc_ids(d);
            skipped += d.keywords.len() - ids.len();
            ids
        })
        .collect();
    let mut graph = CooccurrenceGraph::from_documents(vocab.len(), &docs);
    graph.skipped_keywords = skipped;
    Ok(graph)
}

/// Partition of keyword ids into connected components.
///
/// Component ids are dense and ordered by each component's smallest member,
/// so the labeling is canonical: the same graph always yields the same bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentLabeling {
    component_of: Vec<u32>,
    sizes: Vec<u32>,
    /// Keyword ids grouped by component, ascending within each group.
    members: Vec<u32>,
    /// `offsets[c]..offsets[c + 1]` indexes `members` for component `c`.
    offsets: Vec<u32>,
}

struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        let mut root = x;
        while self.parent[root as usize] != root {
            root = self.parent[root as usize];
        }
        while self.parent[x as usize] != root {
            let next = self.parent[x as usize];
            self.parent[x as usize] = root;
            x = next;
        }
        root
    }

    fn union(&mut self, a: u32, b: u32) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra as usize] < self.size[rb as usize] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb as usize] = ra;
        self.size[ra as usize] += self.size[rb as usize];
    }
}

pub fn connected_components(graph: &CooccurrenceGraph) -> ComponentLabeling {
    let n = graph.node_count();
    let mut uf = UnionFind::new(n);
    for (a, nbrs) in graph.adjacency.iter().enumerate() {
        for &b in nbrs {
            if (a as u32) < b {
                uf.union(a as u32, b);
            }
        }
    }
    ComponentLabeling::from_roots((0..n as u32).map(|k| uf.find(k)))
}

impl ComponentLabeling {
    /// Canonicalizes arbitrary per-keyword root labels: components are
    /// numbered in order of their smallest keyword id.
    fn from_roots(roots: impl Iterator<Item = u32>) -> Self {
        let mut relabel: HashMap<u32, u32> = HashMap::new();
        let mut component_of = Vec::new();
        let mut sizes: Vec<u32> = Vec::new();
        for root in roots {
            let next = relabel.len() as u32;
            let c = *relabel.entry(root).or_insert(next);
            if c as usize == sizes.len() {
                sizes.push(0);
            }
            sizes[c as usize] += 1;
            component_of.push(c);
        }
        let mut offsets = Vec::with_capacity(sizes.len() + 1);
        offsets.push(0u32);
        for s in &sizes {
            offsets.push(offsets.last().unwrap() + s);
        }
        let mut cursor = offsets.clone();
        let mut members = vec![0u32; component_of.len()];
        for (k, &c) in component_of.iter().enumerate() {
            members[cursor[c as usize] as usize] = k as u32;
            cursor[c as usize] += 1;
        }
        ComponentLabeling {
            component_of,
            sizes,
            members,
            offsets,
        }
    }

    pub fn component_of(&self, keyword: u32) -> u32 {
        self.component_of[keyword as usize]
    }

    pub fn component_count(&self) -> usize {
        self.sizes.len()
    }

    pub fn component_size(&self, component: u32) -> usize {
        self.sizes[component as usize] as usize
    }

    pub fn keyword_count(&self) -> usize {
        self.component_of.len()
    }

    pub fn members(&self, component: u32) -> &[u32] {
        let c = component as usize;
        &self.members[self.offsets[c] as usize..self.offsets[c + 1] as usize]
    }

    /// All keyword ids, grouped by component.
    pub(crate) fn grouped_members(&self) -> &[u32] {
        &self.members
    }

    pub(crate) fn component_range(&self, component: u32) -> (usize, usize) {
        let c = component as usize;
        (self.offsets[c] as usize, self.offsets[c + 1] as usize)
    }

    /// `keyword_id<TAB>component_id` lines.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (k, c) in self.component_of.iter().enumerate() {
            writeln!(out, "{k}\t{c}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentStats {
    pub components: usize,
    pub keywords: usize,
    /// component size -> number of components of that size
    pub size_histogram: BTreeMap<usize, usize>,
    pub largest: usize,
    pub largest_fraction: f64,
}

pub fn component_stats(labeling: &ComponentLabeling) -> Result<ComponentStats> {
    if labeling.keyword_count() == 0 {
        return Err(Error::Empty("component labeling".into()));
    }
    let mut size_histogram = BTreeMap::new();
    for &s in &labeling.sizes {
        *size_histogram.entry(s as usize).or_insert(0) += 1;
    }
    let largest = labeling.sizes.iter().copied().max().unwrap_or(0) as usize;
    Ok(ComponentStats {
        components: labeling.component_count(),
        keywords: labeling.keyword_count(),
        size_histogram,
        largest,
        largest_fraction: largest as f64 / labeling.keyword_count() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocab, Document};
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
    fn cliques_per_document() {
        let c = corpus(&[&["a", "b", "c"], &["c", "d"]]);
        let v = build_vocab(&c, 1).unwrap();
        let g = build_graph(&c, &v).unwrap();
        assert_eq!(g.edge_count(), 4);
        for (x, y) in [("a", "b"), ("a", "c"), ("b", "c"), ("c", "d")] {
            assert!(g.are_adjacent(v.keyword_id(x).unwrap(), v.keyword_id(y).unwrap()));
        }
        assert!(!g.are_adjacent(0, 3));

        let single = corpus(&[&["a"]]);
        let g = build_graph(&single, &build_vocab(&single, 1).unwrap()).unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (1, 0));
    }

    #[test]
    fn components_small() {
        let g = CooccurrenceGraph::from_documents(5, [[0u32, 1], [2, 3]]);
        let l = connected_components(&g);
        assert_eq!(l.component_count(), 3);
        assert_eq!(l.members(0), [0, 1]);
        assert_eq!(l.members(1), [2, 3]);
        assert_eq!(l.members(2), [4]);

        let full = CooccurrenceGraph::from_documents(4, [[0u32, 1, 2, 3]]);
        let l = connected_components(&full);
        assert_eq!(l.component_count(), 1);
        assert_eq!(l.component_size(0), 4);
    }

    #[test]
    fn stats() {
        let l = connected_components(&CooccurrenceGraph::from_documents(3, [[0u32, 1]]));
        let s = component_stats(&l).unwrap();
        assert_eq!(s.components, 2);
        assert!((s.largest_fraction - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.size_histogram, BTreeMap::from([(1, 1), (2, 1)]));

        let one = connected_components(&CooccurrenceGraph::from_documents(1, Vec::<Vec<u32>>::new()));
        assert_eq!(component_stats(&one).unwrap().largest_fraction, 1.0);

        let empty = connected_components(&CooccurrenceGraph::from_documents(0, Vec::<Vec<u32>>::new()));
        assert!(component_stats(&empty).is_err());
    }

    fn docs_strategy() -> impl Strategy<Value = (usize, Vec<Vec<u32>>)> {
        (2usize..30).prop_flat_map(|n| {
            (
                Just(n),
                prop::collection::vec(
                    prop::collection::btree_set(0..n as u32, 1..5)
                        .prop_map(|s| s.into_iter().collect::<Vec<_>>()),
                    0..15,
                ),
            )
        })
    }

    proptest! {
        #[test]
        fn cooccurring_keywords_share_component((n, docs) in docs_strategy()) {
            let g = CooccurrenceGraph::from_documents(n, &docs);
            let l = connected_components(&g);
            for d in &docs {
                for &a in d {
                    prop_assert_eq!(l.component_of(a), l.component_of(d[0]));
                }
            }
            let total: usize = (0..l.component_count() as u32).map(|c| l.component_size(c)).sum();
            prop_assert_eq!(total, n);
            for a in 0..n as u32 {
                for &b in g.neighbors(a) {
                    prop_assert!(g.are_adjacent(b, a));
                    prop_assert_ne!(a, b);
                }
            }
        }

        #[test]
        fn labeling_ignores_insertion_order((n, mut docs) in docs_strategy()) {
            let a = connected_components(&CooccurrenceGraph::from_documents(n, &docs));
            docs.reverse();
            for d in &mut docs {
                d.reverse();
            }
            let b = connected_components(&CooccurrenceGraph::from_documents(n, &docs));
            prop_assert_eq!(a, b);
        }
    }
}
