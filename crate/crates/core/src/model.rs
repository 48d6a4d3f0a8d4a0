//! Embedding tables and the CBOW negative-sampling objective.
//!
//! For a training example with context keywords `C`, target `t` and
//! negatives `N`, the hidden vector is the mean of the context keywords'
//! input embeddings, `h`, and the loss is
//!
//! ```text
//! L = -ln σ(h·o_t) - Σ_{n∈N} ln σ(-h·o_n)
//! ```
//!
//! where `o` are rows of the output matrix. A keyword's input embedding is
//! the weighted mean of its input-unit rows (one unit for Keywords2Vec).
//! Storage is `f32`; every dot product and gradient is computed in `f64`.
//! The math functions are generic over [`RowStore`], so the same code runs
//! against `f64` tables in the gradient tests.

use std::sync::atomic::{AtomicU32, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{ModelConfig, Variant};
use crate::corpus::Vocab;
use crate::error::{Error, Result};
use crate::sampling::TrainingExample;
use crate::subword::{decompose, UnitDecomposition, UnitSpace};

/// Row-addressable parameter table.
pub trait RowStore {
    fn dim(&self) -> usize;
    fn row_count(&self) -> usize;
    fn read_row(&self, row: usize, out: &mut [f64]);
    /// `row += scale * delta`
    fn add_to_row(&mut self, row: usize, scale: f64, delta: &[f64]);
}

pub trait Scalar: Copy + Default + Send + Sync + 'static {
    fn to_f64(self) -> f64;
    fn from_f64(v: f64) -> Self;
}

impl Scalar for f32 {
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn from_f64(v: f64) -> Self {
        v as f32
    }
}

impl Scalar for f64 {
    fn to_f64(self) -> f64 {
        self
    }
    fn from_f64(v: f64) -> Self {
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        Matrix {
            rows,
            dim,
            data: vec![T::default(); rows * dim],
        }
    }

    pub fn from_vec(rows: usize, dim: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * dim, "matrix shape");
        Matrix { rows, dim, data }
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.dim..(r + 1) * self.dim]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.dim..(r + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
}

impl<T: Scalar> RowStore for Matrix<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn row_count(&self) -> usize {
        self.rows
    }

    fn read_row(&self, row: usize, out: &mut [f64]) {
        for (o, &x) in out.iter_mut().zip(self.row(row)) {
            *o = x.to_f64();
        }
    }

    fn add_to_row(&mut self, row: usize, scale: f64, delta: &[f64]) {
        for (x, &d) in self.row_mut(row).iter_mut().zip(delta) {
            *x = T::from_f64(x.to_f64() + scale * d);
        }
    }
}

impl Matrix<f32> {
    /// Shared view for lock-free concurrent updates. Reads and writes are
    /// relaxed atomics on the `f32` bit patterns; concurrent updates to one
    /// row may overwrite each other, which sparse SGD tolerates.
    pub fn atomic_view(&mut self) -> AtomicRows<'_> {
        let data: &mut [f32] = &mut self.data;
        // SAFETY: AtomicU32 has the size and alignment of u32, which match
        // f32, and the exclusive borrow guarantees no non-atomic access
        // while the view lives.
        let cells = unsafe { &*(data as *mut [f32] as *const [AtomicU32]) };
        AtomicRows {
            cells,
            dim: self.dim,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AtomicRows<'a> {
    cells: &'a [AtomicU32],
    dim: usize,
}

impl RowStore for AtomicRows<'_> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn row_count(&self) -> usize {
        self.cells.len() / self.dim
    }

    fn read_row(&self, row: usize, out: &mut [f64]) {
        let cells = &self.cells[row * self.dim..(row + 1) * self.dim];
        for (o, c) in out.iter_mut().zip(cells) {
            *o = f32::from_bits(c.load(Ordering::Relaxed)) as f64;
        }
    }

    fn add_to_row(&mut self, row: usize, scale: f64, delta: &[f64]) {
        let cells = &self.cells[row * self.dim..(row + 1) * self.dim];
        for (c, &d) in cells.iter().zip(delta) {
            let x = f32::from_bits(c.load(Ordering::Relaxed)) as f64;
            c.store(((x + scale * d) as f32).to_bits(), Ordering::Relaxed);
        }
    }
}

/// Per-keyword input units with their mean coefficients
/// (`weight / Σ weights`); zero-weight slots are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitTable {
    offsets: Vec<u32>,
    units: Vec<u32>,
    coeffs: Vec<f64>,
}

impl UnitTable {
    pub fn from_decompositions<'a, I>(decomps: I) -> Self
    where
        I: IntoIterator<Item = &'a UnitDecomposition>,
    {
        let mut table = UnitTable {
            offsets: vec![0],
            units: Vec::new(),
            coeffs: Vec::new(),
        };
        for d in decomps {
            table.push(d);
        }
        table
    }

    /// Keywords2Vec layout: keyword `k` is input row `k`.
    pub fn identity(keywords: usize) -> Self {
        UnitTable {
            offsets: (0..=keywords as u32).collect(),
            units: (0..keywords as u32).collect(),
            coeffs: vec![1.0; keywords],
        }
    }

    fn push(&mut self, d: &UnitDecomposition) {
        let total = d.weight_sum();
        for (u, w) in d.active() {
            self.units.push(u);
            self.coeffs.push(w as f64 / total);
        }
        self.offsets.push(self.units.len() as u32);
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn units_of(&self, keyword: u32) -> (&[u32], &[f64]) {
        let (a, b) = (
            self.offsets[keyword as usize] as usize,
            self.offsets[keyword as usize + 1] as usize,
        );
        (&self.units[a..b], &self.coeffs[a..b])
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Scratch buffers reused across examples.
#[derive(Debug, Clone)]
pub struct Workspace {
    hidden: Vec<f64>,
    grad_hidden: Vec<f64>,
    row: Vec<f64>,
    /// dL/d(score) for the target followed by each negative.
    score_grads: Vec<f64>,
}

impl Workspace {
    pub fn new(dim: usize) -> Self {
        Workspace {
            hidden: vec![0.0; dim],
            grad_hidden: vec![0.0; dim],
            row: vec![0.0; dim],
            score_grads: Vec::new(),
        }
    }

    pub fn hidden(&self) -> &[f64] {
        &self.hidden
    }
}

/// Mean of the context keywords' input embeddings, written to `out`.
pub fn context_vector<S: RowStore>(
    input: &S,
    units: &UnitTable,
    context: &[u32],
    row: &mut [f64],
    out: &mut [f64],
) {
    out.iter_mut().for_each(|x| *x = 0.0);
    let scale = 1.0 / context.len() as f64;
    for &c in context {
        let (us, cs) = units.units_of(c);
        for (&u, &a) in us.iter().zip(cs) {
            input.read_row(u as usize, row);
            for (o, r) in out.iter_mut().zip(row.iter()) {
                *o += scale * a * r;
            }
        }
    }
}

fn output_rows(ex: &TrainingExample) -> impl Iterator<Item = (u32, f64)> + '_ {
    std::iter::once((ex.target, 1.0)).chain(ex.negatives.iter().map(|&n| (n, 0.0)))
}

/// Loss of one example; leaves `h` and dL/dh in the workspace along with
/// dL/d(score) per output row.
pub fn forward_backward<S: RowStore, O: RowStore>(
    input: &S,
    output: &O,
    units: &UnitTable,
    ex: &TrainingExample,
    ws: &mut Workspace,
) -> f64 {
    context_vector(input, units, &ex.context, &mut ws.row, &mut ws.hidden);
    ws.grad_hidden.iter_mut().for_each(|x| *x = 0.0);
    ws.score_grads.clear();
    let mut loss = 0.0;
    for (row, label) in output_rows(ex) {
        output.read_row(row as usize, &mut ws.row);
        let score = dot(&ws.hidden, &ws.row);
        // label 1: -ln σ(s) = softplus(-s); label 0: -ln σ(-s) = softplus(s)
        loss += if label == 1.0 { softplus(-score) } else { softplus(score) };
        let g = sigmoid(score) - label;
        ws.score_grads.push(g);
        for (gh, o) in ws.grad_hidden.iter_mut().zip(&ws.row) {
            *gh += g * o;
        }
    }
    loss
}

pub fn example_loss<S: RowStore, O: RowStore>(
    input: &S,
    output: &O,
    units: &UnitTable,
    ex: &TrainingExample,
) -> f64 {
    let mut ws = Workspace::new(input.dim());
    forward_backward(input, output, units, ex, &mut ws)
}

/// One SGD step on a single example, using gradients taken at the
/// pre-update parameters. Returns the pre-update loss.
pub fn sgd_example<S: RowStore, O: RowStore>(
    input: &mut S,
    output: &mut O,
    units: &UnitTable,
    ex: &TrainingExample,
    lr: f64,
    ws: &mut Workspace,
    index: usize,
) -> Result<f64> {
    let loss = forward_backward(input, output, units, ex, ws);
    if !loss.is_finite() || ws.grad_hidden.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite {
            what: "gradient",
            index,
            target: ex.target,
        });
    }
    if lr == 0.0 {
        return Ok(loss);
    }
    for ((row, _), &g) in output_rows(ex).zip(&ws.score_grads) {
        output.add_to_row(row as usize, -lr * g, &ws.hidden);
    }
    let ctx_scale = 1.0 / ex.context.len() as f64;
    for &c in &ex.context {
        let (us, cs) = units.units_of(c);
        for (&u, &a) in us.iter().zip(cs) {
            input.add_to_row(u as usize, -lr * ctx_scale * a, &ws.grad_hidden);
        }
    }
    Ok(loss)
}

/// Sparse analytic gradient of one example: `(row, dL/drow)` entries for
/// the input and output tables. A row reached twice appears twice.
#[derive(Debug, Clone, Default)]
pub struct SparseGradient {
    pub input: Vec<(u32, Vec<f64>)>,
    pub output: Vec<(u32, Vec<f64>)>,
}

pub fn example_gradient<S: RowStore, O: RowStore>(
    input: &S,
    output: &O,
    units: &UnitTable,
    ex: &TrainingExample,
) -> (f64, SparseGradient) {
    let mut ws = Workspace::new(input.dim());
    let loss = forward_backward(input, output, units, ex, &mut ws);
    let mut grad = SparseGradient::default();
    for ((row, _), &g) in output_rows(ex).zip(&ws.score_grads) {
        grad.output
            .push((row, ws.hidden.iter().map(|h| g * h).collect()));
    }
    let ctx_scale = 1.0 / ex.context.len() as f64;
    for &c in &ex.context {
        let (us, cs) = units.units_of(c);
        for (&u, &a) in us.iter().zip(cs) {
            grad.input.push((
                u,
                ws.grad_hidden.iter().map(|g| ctx_scale * a * g).collect(),
            ));
        }
    }
    (loss, grad)
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    let (na, nb) = (dot(a, a).sqrt(), dot(b, b).sqrt());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Trained (or freshly initialized) keyword embedding model.
#[derive(Debug, Clone)]
pub struct EmbeddingModel {
    config: ModelConfig,
    vocab: Vocab,
    space: Option<UnitSpace>,
    units: UnitTable,
    input: Matrix<f32>,
    output: Matrix<f32>,
}

impl EmbeddingModel {
    /// Input rows uniform in `[-0.5/dim, 0.5/dim]`, output rows zero, fill
    /// row zero.
    pub fn new(config: ModelConfig, vocab: Vocab) -> Result<Self> {
        config.validate()?;
        if vocab.is_empty() {
            return Err(Error::Empty("keyword vocabulary".into()));
        }
        let (space, units) = Self::layout(&config, &vocab)?;
        let rows = space.map_or(vocab.len(), |s| s.rows());
        let dim = config.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let bound = 0.5 / dim as f64;
        let mut input = Matrix::<f32>::zeros(rows, dim);
        for x in input.as_mut_slice() {
            *x = rng.gen_range(-bound..bound) as f32;
        }
        if let Some(s) = space {
            input.row_mut(s.fill_unit() as usize).fill(0.0);
        }
        let output = Matrix::zeros(vocab.len(), dim);
        Ok(EmbeddingModel {
            config,
            vocab,
            space,
            units,
            input,
            output,
        })
    }

    pub(crate) fn from_parts(
        config: ModelConfig,
        vocab: Vocab,
        input: Matrix<f32>,
        output: Matrix<f32>,
    ) -> Result<Self> {
        let (space, units) = Self::layout(&config, &vocab)?;
        let rows = space.map_or(vocab.len(), |s| s.rows());
        if input.rows() != rows || output.rows() != vocab.len() {
            return Err(Error::InvalidArgument("matrix shapes do not match vocabulary".into()));
        }
        Ok(EmbeddingModel {
            config,
            vocab,
            space,
            units,
            input,
            output,
        })
    }

    fn layout(config: &ModelConfig, vocab: &Vocab) -> Result<(Option<UnitSpace>, UnitTable)> {
        Ok(match config.variant {
            Variant::Keywords2Vec => (None, UnitTable::identity(vocab.len())),
            Variant::FastKeywords => {
                let space = UnitSpace::new(config.subword.buckets, vocab);
                if space.rows() as u64 > u32::MAX as u64 {
                    return Err(Error::InvalidArgument("too many input units".into()));
                }
                let decomps = vocab
                    .keywords()
                    .iter()
                    .map(|k| decompose(k, vocab, &space, &config.subword))
                    .collect::<Result<Vec<_>>>()?;
                (Some(space), UnitTable::from_decompositions(&decomps))
            }
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn unit_space(&self) -> Option<&UnitSpace> {
        self.space.as_ref()
    }

    pub fn units(&self) -> &UnitTable {
        &self.units
    }

    pub fn input_matrix(&self) -> &Matrix<f32> {
        &self.input
    }

    pub fn output_matrix(&self) -> &Matrix<f32> {
        &self.output
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn is_finite(&self) -> bool {
        self.input.as_slice().iter().chain(self.output.as_slice()).all(|x| x.is_finite())
    }

    fn embed_units(&self, units: &[u32], coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        let mut row = vec![0.0; self.dim()];
        for (&u, &a) in units.iter().zip(coeffs) {
            self.input.read_row(u as usize, &mut row);
            for (o, r) in out.iter_mut().zip(&row) {
                *o += a * r;
            }
        }
        out
    }

    pub fn keyword_embedding_by_id(&self, id: u32) -> Vec<f64> {
        let (us, cs) = self.units.units_of(id);
        self.embed_units(us, cs)
    }

    /// Input embedding of an arbitrary keyword string. In-vocabulary
    /// keywords use their cached units; FastKeywords composes unseen ones
    /// from n-grams and known words.
    pub fn keyword_embedding(&self, keyword: &str) -> Result<Vec<f64>> {
        let norm = crate::corpus::normalize_keyword(keyword);
        if let Some(id) = self.vocab.keyword_id(&norm) {
            return Ok(self.keyword_embedding_by_id(id));
        }
        match self.space {
            None => Err(Error::OutOfVocabulary(norm)),
            Some(space) => {
                let d = self.decompose(&norm, &space)?;
                self.embedding_of(&d).ok_or(Error::NoInputUnits(norm))
            }
        }
    }

    fn decompose(&self, keyword: &str, space: &UnitSpace) -> Result<UnitDecomposition> {
        decompose(keyword, &self.vocab, space, &self.config.subword)
    }

    /// Weighted mean over non-fill slots; `None` when every slot is fill.
    pub fn embedding_of(&self, d: &UnitDecomposition) -> Option<Vec<f64>> {
        let total = d.weight_sum();
        if total == 0.0 {
            return None;
        }
        let (us, cs): (Vec<u32>, Vec<f64>) = d.active().map(|(u, w)| (u, w as f64 / total)).unzip();
        Some(self.embed_units(&us, &cs))
    }

    /// Decomposition of a keyword under this model's unit layout.
    pub fn decomposition(&self, keyword: &str) -> Result<Option<UnitDecomposition>> {
        match self.space {
            None => Ok(None),
            Some(space) => self.decompose(keyword, &space).map(Some),
        }
    }

    pub fn context_embedding(&self, context: &[u32]) -> Result<Vec<f64>> {
        if context.is_empty() {
            return Err(Error::Empty("context".into()));
        }
        let mut out = vec![0.0; self.dim()];
        let mut row = vec![0.0; self.dim()];
        context_vector(&self.input, &self.units, context, &mut row, &mut out);
        Ok(out)
    }

    pub fn example_loss(&self, ex: &TrainingExample) -> f64 {
        example_loss(&self.input, &self.output, &self.units, ex)
    }

    pub fn mean_loss(&self, examples: &[TrainingExample]) -> f64 {
        if examples.is_empty() {
            return 0.0;
        }
        let mut ws = Workspace::new(self.dim());
        let total: f64 = examples
            .iter()
            .map(|ex| forward_backward(&self.input, &self.output, &self.units, ex, &mut ws))
            .sum();
        total / examples.len() as f64
    }

    /// Sequential SGD over the batch, one example at a time. Returns the
    /// mean of the per-example pre-update losses.
    pub fn train_step(&mut self, batch: &[TrainingExample], lr: f64) -> Result<f64> {
        if lr.is_nan() || lr < 0.0 {
            return Err(Error::InvalidArgument(format!("learning rate must be >= 0, got {lr}")));
        }
        let mut ws = Workspace::new(self.dim());
        let mut total = 0.0;
        for (i, ex) in batch.iter().enumerate() {
            total += sgd_example(&mut self.input, &mut self.output, &self.units, ex, lr, &mut ws, i)?;
        }
        Ok(if batch.is_empty() { 0.0 } else { total / batch.len() as f64 })
    }

    /// Lock-free concurrent SGD: the batch is cut into one contiguous shard
    /// per worker and rows are updated without synchronization. Not
    /// bit-reproducible; use [`train_step`](Self::train_step) for that.
    #[cfg(feature = "parallel")]
    pub fn train_step_concurrent(
        &mut self,
        batch: &[TrainingExample],
        lr: f64,
        workers: usize,
    ) -> Result<f64> {
        use rayon::prelude::*;

        if workers <= 1 || batch.len() < 2 * workers {
            return self.train_step(batch, lr);
        }
        if lr.is_nan() || lr < 0.0 {
            return Err(Error::InvalidArgument(format!("learning rate must be >= 0, got {lr}")));
        }
        let dim = self.dim();
        let units = &self.units;
        let input = self.input.atomic_view();
        let output = self.output.atomic_view();
        let shard = batch.len().div_ceil(workers);
        let total = batch
            .par_chunks(shard)
            .enumerate()
            .map(|(s, chunk)| {
                let (mut input, mut output) = (input, output);
                let mut ws = Workspace::new(dim);
                let mut sum = 0.0;
                for (i, ex) in chunk.iter().enumerate() {
                    sum += sgd_example(&mut input, &mut output, units, ex, lr, &mut ws, s * shard + i)?;
                }
                Ok(sum)
            })
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .sum::<f64>();
        Ok(total / batch.len() as f64)
    }
}
