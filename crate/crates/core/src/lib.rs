//! Keyword embeddings learned from keyword co-occurrence.
//!
//! Two model variants share one training pipeline:
//!
//! * [`Variant::Keywords2Vec`] gives every keyword its own input vector.
//! * [`Variant::FastKeywords`] builds a keyword vector from hashed character
//!   n-grams, whole words and the whole keyword, so unseen keywords still
//!   get an embedding.
//!
//! Training is CBOW with negative sampling where negatives are drawn from
//! outside the target keyword's connected component in the co-occurrence
//! graph.
//!
//! ```no_run
//! use kwe::{parse_dataset, train, Dataset, ModelConfig, Variant};
//!
//! let corpus = parse_dataset("docs.jsonl".as_ref())?;
//! let cfg = ModelConfig::new(Variant::FastKeywords);
//! let data = Dataset::for_config(corpus, &cfg)?;
//! let (model, _log) = train(&data, &cfg)?;
//! let v = model.keyword_embedding("neural ranking")?;
//! # Ok::<(), kwe::Error>(())
//! ```

pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod format;
pub mod graph;
pub mod index;
pub mod model;
pub mod sampling;
pub mod stats;
pub mod subword;
pub mod trainer;

pub use config::{EarlyStopping, ModelConfig, TrainScope, Variant};
pub use corpus::{build_vocab, parse_dataset, split_corpus, Corpus, Document, Split, Vocab};
pub use error::{Error, Result};
pub use eval::{task1_map, task2_mrr, EvalReport, Task, Task2Options};
pub use graph::{build_graph, component_stats, connected_components, ComponentLabeling, CooccurrenceGraph};
pub use index::{IndexMode, SimilarityIndex};
pub use model::EmbeddingModel;
pub use sampling::{NegativeStrategy, TrainingExample};
pub use stats::{permutation_test, randomized_tukey_hsd, PairwiseReport, ScoreMatrix};
pub use subword::{decompose, SubwordConfig, UnitDecomposition};
pub use trainer::{train, Dataset, TrainingLog};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator for one independent random stream of a seed.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
