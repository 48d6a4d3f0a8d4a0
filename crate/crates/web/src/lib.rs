//! Browser bindings: load a JSONL corpus, inspect its co-occurrence
//! components, train a small model and query nearest neighbours, and show
//! how a keyword breaks down into embedding units.

use std::collections::HashSet;
use std::path::Path;

use kwe::subword::{char_ngrams, UnitKind, UnitSpace};
use kwe::{
    component_stats, decompose, train, Corpus, Dataset, EmbeddingModel, IndexMode, ModelConfig, SimilarityIndex,
    Variant,
};
use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

const DEMO_BUCKETS: u64 = 1 << 16;

fn demo_config(variant: Variant, dim: usize, epochs: usize, seed: u64) -> ModelConfig {
    let mut cfg = ModelConfig::new(variant);
    cfg.dim = dim;
    cfg.epochs = epochs;
    cfg.seed = seed;
    cfg.subword.buckets = DEMO_BUCKETS;
    cfg.batch_size = 1024;
    cfg.early_stopping.enabled = false;
    cfg.strict = true;
    cfg
}

#[derive(Serialize)]
struct Neighbour<'a> {
    keyword: &'a str,
    score: f64,
}

#[derive(Serialize)]
struct Unit {
    kind: &'static str,
    label: String,
    unit: u32,
}

/// Corpus state behind the browser API. Errors are plain strings.
pub struct Session {
    data: Dataset,
    model: Option<EmbeddingModel>,
}

impl Session {
    pub fn load(jsonl: &str) -> Result<Self, String> {
        let corpus = Corpus::parse_jsonl(jsonl, Path::new("input")).map_err(|e| e.to_string())?;
        if corpus.is_empty() {
            return Err("no documents in input".into());
        }
        let data = Dataset::for_config(corpus, &ModelConfig::default()).map_err(|e| e.to_string())?;
        Ok(Session { data, model: None })
    }

    /// Component statistics plus the members of the largest components.
    pub fn graph_summary(&self) -> Result<String, String> {
        let labeling = &self.data.labeling;
        let stats = component_stats(labeling).map_err(|e| e.to_string())?;
        let mut comps: Vec<u32> = (0..labeling.component_count() as u32).collect();
        comps.sort_by_key(|&c| std::cmp::Reverse(labeling.component_size(c)));
        let largest: Vec<_> = comps
            .iter()
            .take(5)
            .map(|&c| {
                let members: Vec<&str> = labeling
                    .members(c)
                    .iter()
                    .take(12)
                    .map(|&k| self.data.vocab.keyword(k))
                    .collect();
                json!({ "size": labeling.component_size(c), "members": members })
            })
            .collect();
        Ok(json!({
            "documents": self.data.corpus.len(),
            "keywords": stats.keywords,
            "edges": self.data.graph.edge_count(),
            "components": stats.components,
            "largest_fraction": stats.largest_fraction,
            "size_histogram": stats.size_histogram,
            "largest": largest,
        })
        .to_string())
    }

    /// Trains on every document and returns the per-epoch losses.
    pub fn train(&mut self, variant: &str, dim: usize, epochs: usize, seed: u64) -> Result<String, String> {
        let variant: Variant = variant.parse().map_err(|e: kwe::Error| e.to_string())?;
        let mut cfg = demo_config(variant, dim, epochs, seed);
        cfg.train_scope = kwe::TrainScope::All;
        cfg.validate().map_err(|e| e.to_string())?;
        let (model, log) = train(&self.data, &cfg).map_err(|e| e.to_string())?;
        self.model = Some(model);
        let losses: Vec<f64> = log.epochs.iter().map(|r| r.train_loss).collect();
        Ok(json!({ "pairs": log.train_pairs, "losses": losses }).to_string())
    }

    pub fn neighbours(&self, keyword: &str, k: usize) -> Result<String, String> {
        let model = self.model.as_ref().ok_or("train a model first")?;
        let query = kwe::corpus::normalize_keyword(keyword);
        let v = model.keyword_embedding(&query).map_err(|e| e.to_string())?;
        let ids: Vec<u32> = (0..model.vocab().len() as u32).collect();
        let index = SimilarityIndex::build(model, &ids, IndexMode::AllItems).map_err(|e| e.to_string())?;
        let exclude: HashSet<u32> = model.vocab().keyword_id(&query).into_iter().collect();
        let hits = index.nearest(&v, k.max(1), &exclude).map_err(|e| e.to_string())?;
        let rows: Vec<Neighbour> = hits
            .iter()
            .map(|&(id, score)| Neighbour { keyword: model.vocab().keyword(id), score })
            .collect();
        serde_json::to_string(&rows).map_err(|e| e.to_string())
    }

    /// The active units of a keyword under the FastKeywords decomposition.
    pub fn decompose(&self, keyword: &str) -> Result<String, String> {
        let vocab = &self.data.vocab;
        let cfg = demo_config(Variant::FastKeywords, 1, 0, 0).subword;
        let space = UnitSpace::new(cfg.buckets, vocab);
        let d = decompose(keyword, vocab, &space, &cfg).map_err(|e| e.to_string())?;
        let normalized = kwe::corpus::normalize_keyword(keyword);
        let mut grams = normalized
            .split(' ')
            .flat_map(|w| char_ngrams(w, cfg.n_min as usize, cfg.n_max as usize));
        let units: Vec<Unit> = d
            .active()
            .map(|(u, _)| match d.kind(&space, u) {
                UnitKind::Ngram => Unit { kind: "ngram", label: grams.next().unwrap_or_default(), unit: u },
                UnitKind::Word => Unit {
                    kind: "word",
                    label: vocab.words()[(u as u64 - space.buckets) as usize].clone(),
                    unit: u,
                },
                UnitKind::Keyword => Unit {
                    kind: "keyword",
                    label: vocab.keyword((u as u64 - space.buckets) as u32 - vocab.word_count() as u32).to_owned(),
                    unit: u,
                },
                UnitKind::Fill => Unit { kind: "fill", label: String::new(), unit: u },
            })
            .collect();
        Ok(json!({
            "keyword": normalized,
            "in_vocabulary": vocab.keyword_id(&normalized).is_some(),
            "slots": cfg.slots(),
            "units": units,
        })
        .to_string())
    }
}

#[wasm_bindgen]
pub struct Demo(Session);

fn js(e: String) -> JsError {
    JsError::new(&e)
}

#[wasm_bindgen]
impl Demo {
    /// Parses a JSONL corpus (`{"id": ..., "keywords": [...]}` per line).
    #[wasm_bindgen(constructor)]
    pub fn new(jsonl: &str) -> Result<Demo, JsError> {
        Session::load(jsonl).map(Demo).map_err(js)
    }

    #[wasm_bindgen(js_name = graphSummary)]
    pub fn graph_summary(&self) -> Result<String, JsError> {
        self.0.graph_summary().map_err(js)
    }

    pub fn train(&mut self, variant: &str, dim: usize, epochs: usize, seed: u32) -> Result<String, JsError> {
        self.0.train(variant, dim, epochs, seed as u64).map_err(js)
    }

    pub fn neighbours(&self, keyword: &str, k: usize) -> Result<String, JsError> {
        self.0.neighbours(keyword, k).map_err(js)
    }

    pub fn decompose(&self, keyword: &str) -> Result<String, JsError> {
        self.0.decompose(keyword).map_err(js)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    const CORPUS: &str = r#"{"id": 1, "keywords": ["search engines", "query expansion", "information retrieval"]}
{"id": 2, "keywords": ["query expansion", "relevance feedback"]}
{"id": 3, "keywords": ["deep learning", "neural networks"]}
{"id": 4, "keywords": ["neural networks", "backpropagation", "deep learning"]}
"#;

    #[test]
    fn summary_counts_components() {
        let s = Session::load(CORPUS).unwrap();
        let v: Value = serde_json::from_str(&s.graph_summary().unwrap()).unwrap();
        assert_eq!(v["components"], 2);
        assert_eq!(v["keywords"], 7);
        assert_eq!(v["largest"][0]["size"], 4);
    }

    #[test]
    fn train_then_query() {
        let mut s = Session::load(CORPUS).unwrap();
        assert!(s.neighbours("deep learning", 3).is_err());
        let v: Value = serde_json::from_str(&s.train("fastkeywords", 8, 3, 1).unwrap()).unwrap();
        assert_eq!(v["losses"].as_array().unwrap().len(), 3);
        let hits: Value = serde_json::from_str(&s.neighbours("Deep Learning", 3).unwrap()).unwrap();
        assert_eq!(hits.as_array().unwrap().len(), 3);
        assert!(hits.as_array().unwrap().iter().all(|h| h["keyword"] != "deep learning"));
        // unseen keyword goes through subword units
        assert!(s.neighbours("deep search", 2).is_ok());
        s.train("keywords2vec", 8, 1, 1).unwrap();
        assert!(s.neighbours("deep search", 2).is_err());
        assert!(s.train("word2vec", 8, 1, 1).is_err());
    }

    #[test]
    fn decomposition_labels() {
        let s = Session::load(CORPUS).unwrap();
        let v: Value = serde_json::from_str(&s.decompose("neural networks").unwrap()).unwrap();
        let units = v["units"].as_array().unwrap();
        assert_eq!(units[0]["label"], "neu");
        assert!(units.iter().any(|u| u["kind"] == "word" && u["label"] == "networks"));
        assert_eq!(units.last().unwrap()["kind"], "keyword");
        assert_eq!(v["in_vocabulary"], true);
        assert!(s.decompose("   ").is_err());
        assert!(Session::load("").is_err());
        assert!(Session::load("{").is_err());
    }
}
