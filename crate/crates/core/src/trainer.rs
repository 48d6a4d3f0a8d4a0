//! Epoch loop: example generation, batching, learning-rate decay, early
//! stopping on a held-out slice of the training pairs.

use std::io::Write;

use rand::seq::SliceRandom;

use crate::config::{ModelConfig, TrainScope};
use crate::corpus::{build_vocab, split_corpus, Corpus, Split, Vocab};
use crate::error::{Error, Result};
use crate::graph::{build_graph, connected_components, ComponentLabeling, CooccurrenceGraph};
use crate::model::EmbeddingModel;
use crate::sampling::{ExampleGenerator, SamplingConfig, TrainingExample};
use crate::seeded_rng;

/// Share of training pairs held out for early stopping.
pub const VALIDATION_FRACTION: f64 = 0.1;

const STREAM_VALIDATION: u64 = 7;
const STREAM_VALIDATION_NEGATIVES: u64 = 8;

/// Everything derived from a corpus before training.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub corpus: Corpus,
    pub vocab: Vocab,
    pub graph: CooccurrenceGraph,
    pub labeling: ComponentLabeling,
    pub split: Split,
}

impl Dataset {
    pub fn prepare(corpus: Corpus, min_count: u32, test_fraction: f64, seed: u64) -> Result<Self> {
        let vocab = build_vocab(&corpus, min_count)?;
        let graph = build_graph(&corpus, &vocab)?;
        let labeling = connected_components(&graph);
        let split = split_corpus(&corpus, test_fraction, seed)?;
        Ok(Dataset {
            corpus,
            vocab,
            graph,
            labeling,
            split,
        })
    }

    pub fn for_config(corpus: Corpus, config: &ModelConfig) -> Result<Self> {
        Self::prepare(corpus, config.min_count, config.test_fraction, config.seed)
    }

    pub fn training_documents(&self, scope: TrainScope) -> Vec<usize> {
        match scope {
            TrainScope::Train => self.split.train.clone(),
            TrainScope::All => (0..self.corpus.len()).collect(),
        }
    }
}

/// Linear decay from `initial` to `last` over `planned` examples.
#[derive(Debug, Clone, Copy)]
pub struct LrSchedule {
    pub initial: f64,
    pub last: f64,
    pub planned: usize,
}

impl LrSchedule {
    pub fn at(&self, seen: usize) -> f64 {
        if self.planned == 0 {
            return self.initial;
        }
        if seen >= self.planned {
            return self.last;
        }
        let progress = seen as f64 / self.planned as f64;
        (self.initial - (self.initial - self.last) * progress).clamp(self.last, self.initial)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Improved,
    Stalled,
    Stop,
}

/// Patience counter over validation losses.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    patience: usize,
    min_delta: f64,
    best: f64,
    since_improvement: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        EarlyStopper {
            patience,
            min_delta,
            best: f64::INFINITY,
            since_improvement: 0,
        }
    }

    pub fn observe(&mut self, val_loss: f64) -> Verdict {
        if val_loss < self.best - self.min_delta {
            self.best = val_loss;
            self.since_improvement = 0;
            Verdict::Improved
        } else {
            self.since_improvement += 1;
            if self.since_improvement >= self.patience {
                Verdict::Stop
            } else {
                Verdict::Stalled
            }
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn epochs_since_improvement(&self) -> usize {
        self.since_improvement
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub epoch: usize,
    pub examples_seen: usize,
    pub current_lr: f64,
    pub best_val_loss: f64,
    pub epochs_since_improvement: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    /// Learning rate at the end of the epoch.
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept, when early stopping ran.
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
    pub train_pairs: usize,
    pub validation_pairs: usize,
    pub fallback_examples: usize,
}

impl TrainingLog {
    /// Header plus one `epoch<TAB>train_loss<TAB>val_loss<TAB>lr` line per epoch.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "epoch\ttrain_loss\tval_loss\tlr")?;
        for r in &self.epochs {
            let val = r.val_loss.map_or_else(|| "nan".to_string(), |v| v.to_string());
            writeln!(out, "{}\t{}\t{}\t{}", r.epoch, r.train_loss, val, r.lr)?;
        }
        Ok(())
    }
}

fn run_batch(model: &mut EmbeddingModel, batch: &[TrainingExample], lr: f64) -> Result<f64> {
    let cfg = model.config();
    if cfg.strict || cfg.threads <= 1 {
        return model.train_step(batch, lr);
    }
    #[cfg(feature = "parallel")]
    {
        let workers = cfg.threads;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        pool.install(|| model.train_step_concurrent(batch, lr, workers))
    }
    #[cfg(not(feature = "parallel"))]
    model.train_step(batch, lr)
}

/// Trains a model on the dataset's training documents (or all documents,
/// per `config.train_scope`).
///
/// With early stopping, 10% of the positive pairs are held out with fixed
/// negatives; training stops once the validation loss has failed to improve
/// by `min_delta` for `patience` epochs, and the best epoch's parameters are
/// returned. Otherwise exactly `config.epochs` epochs run.
pub fn train(data: &Dataset, config: &ModelConfig) -> Result<(EmbeddingModel, TrainingLog)> {
    config.validate()?;
    let docs = data.training_documents(config.train_scope);
    let sampling = SamplingConfig {
        strategy: config.negatives,
        ..SamplingConfig::new(config.w, config.ns)
    };
    let generator = ExampleGenerator::new(
        &data.corpus,
        &docs,
        &data.vocab,
        &data.graph,
        &data.labeling,
        sampling,
        config.seed,
    )?;
    let mut model = EmbeddingModel::new(config.clone(), data.vocab.clone())?;

    let mut pairs: Vec<usize> = (0..generator.pair_count()).collect();
    let mut validation = Vec::new();
    let es = config.early_stopping;
    if es.enabled && pairs.len() >= 2 {
        pairs.shuffle(&mut seeded_rng(config.seed, STREAM_VALIDATION));
        let n_val = ((pairs.len() as f64 * VALIDATION_FRACTION).ceil() as usize).clamp(1, pairs.len() - 1);
        let held: Vec<usize> = pairs.drain(..n_val).collect();
        validation = generator.examples(&held, &mut seeded_rng(config.seed, STREAM_VALIDATION_NEGATIVES))?;
        pairs.sort_unstable();
    }

    let mut log = TrainingLog {
        train_pairs: pairs.len(),
        validation_pairs: validation.len(),
        ..Default::default()
    };
    let schedule = LrSchedule {
        initial: config.lr_initial,
        last: config.lr_final,
        planned: config.epochs * pairs.len(),
    };
    let mut state = TrainState {
        epoch: 0,
        examples_seen: 0,
        current_lr: config.lr_initial,
        best_val_loss: f64::INFINITY,
        epochs_since_improvement: 0,
    };
    let mut stopper = EarlyStopper::new(es.patience, es.min_delta);
    let mut best: Option<(usize, EmbeddingModel)> = None;

    for epoch in 0..config.epochs {
        let examples = generator.epoch(&pairs, epoch as u64)?;
        log.fallback_examples += examples.iter().filter(|e| e.fallback).count();
        let mut total = 0.0;
        for batch in examples.chunks(config.batch_size) {
            state.current_lr = schedule.at(state.examples_seen);
            let mean = run_batch(&mut model, batch, state.current_lr)?;
            total += mean * batch.len() as f64;
            state.examples_seen += batch.len();
        }
        let train_loss = total / examples.len().max(1) as f64;
        if !train_loss.is_finite() {
            return Err(Error::NonFinite {
                what: "epoch loss",
                index: epoch,
                target: 0,
            });
        }
        state.epoch = epoch + 1;
        state.current_lr = schedule.at(state.examples_seen);

        let mut record = EpochRecord {
            epoch: epoch + 1,
            train_loss,
            val_loss: None,
            lr: state.current_lr,
        };
        let mut stop = false;
        if !validation.is_empty() {
            let val = model.mean_loss(&validation);
            record.val_loss = Some(val);
            match stopper.observe(val) {
                Verdict::Improved => best = Some((epoch + 1, model.clone())),
                Verdict::Stalled => {}
                Verdict::Stop => stop = true,
            }
            state.best_val_loss = stopper.best();
            state.epochs_since_improvement = stopper.epochs_since_improvement();
        }
        log::info!(
            "epoch {} train_loss {:.6} val_loss {:?} lr {:.6}",
            record.epoch,
            record.train_loss,
            record.val_loss,
            record.lr
        );
        log.epochs.push(record);
        if stop {
            log.stopped_early = true;
            break;
        }
    }

    if let Some((epoch, kept)) = best {
        log.best_epoch = Some(epoch);
        model = kept;
    }
    if !model.is_finite() {
        return Err(Error::NonFinite {
            what: "parameter",
            index: state.examples_seen,
            target: 0,
        });
    }
    Ok((model, log))
}
