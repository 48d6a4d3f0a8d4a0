//! Model and training hyperparameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::NegativeStrategy;
use crate::subword::SubwordConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// One input unit per keyword.
    Keywords2Vec,
    /// Keyword, word and character n-gram input units.
    FastKeywords,
}

impl Variant {
    pub fn default_batch_size(self) -> usize {
        match self {
            Variant::Keywords2Vec => 1 << 17,
            Variant::FastKeywords => 1 << 15,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Variant::Keywords2Vec => 0,
            Variant::FastKeywords => 1,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Variant::Keywords2Vec),
            1 => Some(Variant::FastKeywords),
            _ => None,
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "keywords2vec" => Ok(Variant::Keywords2Vec),
            "fastkeywords" => Ok(Variant::FastKeywords),
            other => Err(Error::InvalidArgument(format!("unknown variant {other:?}"))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Keywords2Vec => "keywords2vec",
            Variant::FastKeywords => "fastkeywords",
        })
    }
}

/// Which documents feed the example generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainScope {
    /// Training split only.
    #[default]
    Train,
    /// Every document, test split included.
    All,
}

impl std::str::FromStr for TrainScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(TrainScope::Train),
            "all" => Ok(TrainScope::All),
            other => Err(Error::InvalidArgument(format!("unknown train scope {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopping {
    pub enabled: bool,
    pub patience: usize,
    pub min_delta: f64,
}

impl Default for EarlyStopping {
    fn default() -> Self {
        EarlyStopping {
            enabled: true,
            patience: 3,
            min_delta: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub dim: usize,
    /// Combination size plus one: contexts hold `w - 1` keywords.
    pub w: usize,
    pub ns: usize,
    pub subword: SubwordConfig,
    pub lr_initial: f64,
    pub lr_final: f64,
    /// Fixed epoch count, or the cap when early stopping is on.
    pub epochs: usize,
    pub batch_size: usize,
    pub early_stopping: EarlyStopping,
    pub seed: u64,
    pub negatives: NegativeStrategy,
    pub train_scope: TrainScope,
    pub min_count: u32,
    pub test_fraction: f64,
    /// Single-threaded, bit-reproducible updates.
    pub strict: bool,
    pub threads: usize,
}

impl ModelConfig {
    pub fn new(variant: Variant) -> Self {
        ModelConfig {
            variant,
            dim: 300,
            w: 3,
            ns: 4,
            subword: SubwordConfig::default(),
            lr_initial: 0.05,
            lr_final: 1e-4,
            epochs: 20,
            batch_size: variant.default_batch_size(),
            early_stopping: EarlyStopping::default(),
            seed: 42,
            negatives: NegativeStrategy::Components,
            train_scope: TrainScope::Train,
            min_count: 1,
            test_fraction: 0.2,
            strict: false,
            threads: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.dim < 1 {
            return bad("dim must be >= 1".into());
        }
        if self.w < 2 {
            return bad(format!("w must be >= 2, got {}", self.w));
        }
        if self.ns < 1 {
            return bad("ns must be >= 1".into());
        }
        if !(self.lr_initial > 0.0 && self.lr_final > 0.0 && self.lr_final <= self.lr_initial) {
            return bad(format!(
                "need 0 < lr_final <= lr_initial, got {} and {}",
                self.lr_final, self.lr_initial
            ));
        }
        if self.batch_size < 1 {
            return bad("batch_size must be >= 1".into());
        }
        if self.min_count < 1 {
            return bad("min_count must be >= 1".into());
        }
        if self.threads < 1 {
            return bad("threads must be >= 1".into());
        }
        if self.variant == Variant::FastKeywords {
            self.subword.validate()?;
        }
        Ok(())
    }

    /// Every settable key with its current value, in a stable order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let s = &self.subword;
        let es = &self.early_stopping;
        vec![
            ("variant", self.variant.to_string()),
            ("dim", self.dim.to_string()),
            ("w", self.w.to_string()),
            ("ns", self.ns.to_string()),
            ("n_min", s.n_min.to_string()),
            ("n_max", s.n_max.to_string()),
            ("max_ngrams", s.max_ngrams.to_string()),
            ("max_words", s.max_words.to_string()),
            ("buckets", s.buckets.to_string()),
            ("lr_initial", self.lr_initial.to_string()),
            ("lr_final", self.lr_final.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("early_stopping", es.enabled.to_string()),
            ("patience", es.patience.to_string()),
            ("min_delta", es.min_delta.to_string()),
            ("seed", self.seed.to_string()),
            ("negatives", self.negatives.to_string()),
            (
                "train_scope",
                match self.train_scope {
                    TrainScope::Train => "train",
                    TrainScope::All => "all",
                }
                .to_string(),
            ),
            ("min_count", self.min_count.to_string()),
            ("test_fraction", self.test_fraction.to_string()),
            ("strict", self.strict.to_string()),
            ("threads", self.threads.to_string()),
        ]
    }

    /// Sets one key from its text form. Unknown keys are rejected.
    ///
    /// Setting `variant` also resets `batch_size` to that variant's default;
    /// set `batch_size` afterwards to override it.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad value {value:?} for {key}")))
        }
        let v = value.trim();
        match key {
            "variant" => {
                self.variant = v.parse()?;
                self.batch_size = self.variant.default_batch_size();
            }
            "dim" => self.dim = parse(key, v)?,
            "w" => self.w = parse(key, v)?,
            "ns" => self.ns = parse(key, v)?,
            "n_min" => self.subword.n_min = parse(key, v)?,
            "n_max" => self.subword.n_max = parse(key, v)?,
            "max_ngrams" => self.subword.max_ngrams = parse(key, v)?,
            "max_words" => self.subword.max_words = parse(key, v)?,
            "buckets" => self.subword.buckets = parse(key, v)?,
            "lr_initial" => self.lr_initial = parse(key, v)?,
            "lr_final" => self.lr_final = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "early_stopping" => self.early_stopping.enabled = parse(key, v)?,
            "patience" => self.early_stopping.patience = parse(key, v)?,
            "min_delta" => self.early_stopping.min_delta = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "negatives" => self.negatives = v.parse()?,
            "train_scope" => self.train_scope = v.parse()?,
            "min_count" => self.min_count = parse(key, v)?,
            "test_fraction" => self.test_fraction = parse(key, v)?,
            "strict" => self.strict = parse(key, v)?,
            "threads" => self.threads = parse(key, v)?,
            other => {
                return Err(Error::InvalidArgument(format!("unknown config key {other:?}")))
            }
        }
        Ok(())
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::new(Variant::FastKeywords)
    }
}
