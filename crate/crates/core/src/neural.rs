//! Convolutional occurrence classifier.
//!
//! Architecture, for a window of `L` token indices:
//!
//! 1. embedding lookup, `L x D`;
//! 2. one valid 1-D convolution with `F` filters of width `K`, giving
//!    `L - K + 1` positions per filter, followed by a rectifier;
//! 3. inverted dropout on the convolution activations (training only);
//! 4. 1-max pooling per filter;
//! 5. an affine head and a logistic output.
//!
//! Training minimises binary cross-entropy with Adam. Every random draw
//! (initialisation, shuffling, dropout masks) comes from one ChaCha stream
//! seeded by [`CnnConfig::seed`], so a run is reproducible bit-for-bit.

use std::collections::BTreeSet;
use std::ops::Range;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::{precision_at_recall, ScoredItem};
use crate::model_file::{self, ModelKind};
use crate::scalar::{sigmoid, softplus, Real};
use crate::vectorize::{EncodedWindow, Vocabulary};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPSILON: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CnnConfig {
    pub embed_dim: usize,
    pub n_filters: usize,
    pub kernel_size: usize,
    pub dropout_rate: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for CnnConfig {
    fn default() -> Self {
        Self {
            embed_dim: 64,
            n_filters: 64,
            kernel_size: 2,
            dropout_rate: 0.5,
            epochs: 5,
            learning_rate: 1e-3,
            batch_size: 64,
            seed: 0,
        }
    }
}

impl CnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.n_filters == 0 || self.kernel_size == 0 {
            return Err(Error::Config(
                "embed_dim, n_filters and kernel_size must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout_rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// Offsets of each tensor inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub vocab_rows: usize,
    pub seq_len: usize,
    pub embed_dim: usize,
    pub n_filters: usize,
    pub kernel_size: usize,
}

impl Shape {
    pub fn positions(&self) -> usize {
        self.seq_len + 1 - self.kernel_size
    }

    fn filter_width(&self) -> usize {
        self.kernel_size * self.embed_dim
    }

    pub fn embedding(&self) -> Range<usize> {
        0..self.vocab_rows * self.embed_dim
    }

    pub fn conv_weights(&self) -> Range<usize> {
        let s = self.embedding().end;
        s..s + self.n_filters * self.filter_width()
    }

    pub fn conv_bias(&self) -> Range<usize> {
        let s = self.conv_weights().end;
        s..s + self.n_filters
    }

    pub fn dense_weights(&self) -> Range<usize> {
        let s = self.conv_bias().end;
        s..s + self.n_filters
    }

    pub fn dense_bias(&self) -> usize {
        self.dense_weights().end
    }

    pub fn n_params(&self) -> usize {
        self.dense_bias() + 1
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: CnnConfig,
    shape: Shape,
    vocab_fingerprint: u64,
}

/// Trained weights for one keyword.
#[derive(Debug, Clone, PartialEq)]
pub struct OccurrenceModel<T> {
    pub config: CnnConfig,
    pub shape: Shape,
    pub vocab_fingerprint: u64,
    params: Vec<T>,
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
struct Trace<T> {
    /// Convolution pre-activations, `F x P`.
    z: Vec<T>,
    /// Dropout multipliers, `F x P`; empty at inference.
    mask: Vec<T>,
    pooled: Vec<T>,
    argmax: Vec<usize>,
    logit: T,
}

#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    // Four partial sums in a fixed order; deterministic and vectorisable.
    let mut acc = [T::zero(); 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for l in 0..4 {
            acc[l] += a[4 * c + l] * b[4 * c + l];
        }
    }
    let mut tail = T::zero();
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

impl<T: Real> OccurrenceModel<T> {
    /// All-zero parameters; scores every window 0.5.
    pub fn zeros(config: CnnConfig, shape: Shape, vocab_fingerprint: u64) -> Result<Self> {
        Self::check_shape(&config, &shape)?;
        Ok(Self {
            params: vec![T::zero(); shape.n_params()],
            config,
            shape,
            vocab_fingerprint,
        })
    }

    /// Uniform initialisation in `±1/sqrt(fan_in)`, biases zero.
    ///
    /// Fan-in is `D` for the embedding table, `K * D` for the filters and
    /// `F` for the head.
    pub fn initialized<R: Rng>(
        config: CnnConfig,
        shape: Shape,
        vocab_fingerprint: u64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut m = Self::zeros(config, shape, vocab_fingerprint)?;
        let fill = |rng: &mut R, dst: &mut [T], fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for p in dst {
                *p = T::of(rng.gen_range(-bound..bound));
            }
        };
        fill(rng, &mut m.params[shape.embedding()], shape.embed_dim);
        fill(
            rng,
            &mut m.params[shape.conv_weights()],
            shape.filter_width(),
        );
        fill(rng, &mut m.params[shape.dense_weights()], shape.n_filters);
        Ok(m)
    }

    fn check_shape(config: &CnnConfig, shape: &Shape) -> Result<()> {
        config.validate()?;
        if shape.embed_dim != config.embed_dim
            || shape.n_filters != config.n_filters
            || shape.kernel_size != config.kernel_size
        {
            return Err(Error::validation(
                "model shape disagrees with its configuration",
            ));
        }
        if shape.seq_len < shape.kernel_size {
            return Err(Error::validation(format!(
                "sequence length {} shorter than kernel {}",
                shape.seq_len, shape.kernel_size
            )));
        }
        if shape.vocab_rows < 2 {
            return Err(Error::validation("embedding needs the two reserved rows"));
        }
        Ok(())
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn embedding(&self) -> &[T] {
        &self.params[self.shape.embedding()]
    }

    pub fn conv_weights(&self) -> &[T] {
        &self.params[self.shape.conv_weights()]
    }

    pub fn conv_bias(&self) -> &[T] {
        &self.params[self.shape.conv_bias()]
    }

    pub fn dense_weights(&self) -> &[T] {
        &self.params[self.shape.dense_weights()]
    }

    pub fn dense_bias(&self) -> T {
        self.params[self.shape.dense_bias()]
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    fn check_input(&self, indices: &[u32]) -> Result<()> {
        if indices.len() != self.shape.seq_len {
            return Err(Error::DimensionMismatch {
                expected: self.shape.seq_len,
                actual: indices.len(),
            });
        }
        if let Some(&bad) = indices
            .iter()
            .find(|&&i| i as usize >= self.shape.vocab_rows)
        {
            return Err(Error::validation(format!(
                "token index {bad} outside embedding of {} rows",
                self.shape.vocab_rows
            )));
        }
        Ok(())
    }

    /// Gathers the embedding rows of `indices` into one contiguous `L x D` block.
    fn embed(&self, indices: &[u32], out: &mut Vec<T>) {
        let d = self.shape.embed_dim;
        let table = self.embedding();
        out.clear();
        for &i in indices {
            let r = i as usize * d;
            out.extend_from_slice(&table[r..r + d]);
        }
    }

    fn run(&self, indices: &[u32], dropout: Option<&mut ChaCha8Rng>, emb: &mut Vec<T>) -> Trace<T> {
        let s = self.shape;
        let (p_count, fw) = (s.positions(), s.filter_width());
        self.embed(indices, emb);
        let weights = self.conv_weights();
        let bias = self.conv_bias();
        let mut z = vec![T::zero(); s.n_filters * p_count];
        for f in 0..s.n_filters {
            let w = &weights[f * fw..(f + 1) * fw];
            for t in 0..p_count {
                let x = &emb[t * s.embed_dim..t * s.embed_dim + fw];
                z[f * p_count + t] = bias[f] + dot(w, x);
            }
        }
        let mask = match dropout {
            Some(rng) if self.config.dropout_rate > 0.0 => {
                let keep = T::of(1.0 / (1.0 - self.config.dropout_rate));
                (0..z.len())
                    .map(|_| {
                        if rng.gen::<f64>() < self.config.dropout_rate {
                            T::zero()
                        } else {
                            keep
                        }
                    })
                    .collect()
            }
            _ => Vec::new(),
        };
        let mut pooled = vec![T::zero(); s.n_filters];
        let mut argmax = vec![0usize; s.n_filters];
        for f in 0..s.n_filters {
            let mut best = T::neg_infinity();
            for t in 0..p_count {
                let k = f * p_count + t;
                let mut a = z[k].max(T::zero());
                if !mask.is_empty() {
                    a *= mask[k];
                }
                if a > best {
                    best = a;
                    argmax[f] = t;
                }
            }
            pooled[f] = best;
        }
        let logit = self.dense_bias() + dot(self.dense_weights(), &pooled);
        Trace {
            z,
            mask,
            pooled,
            argmax,
            logit,
        }
    }

    /// Inference score in (0, 1). Dropout is never applied.
    pub fn score(&self, indices: &[u32]) -> Result<T> {
        self.check_input(indices)?;
        let mut emb = Vec::with_capacity(indices.len() * self.shape.embed_dim);
        Ok(sigmoid(self.run(indices, None, &mut emb).logit))
    }

    /// Score with optional training-mode dropout drawn from `rng`.
    pub fn forward(&self, window: &EncodedWindow, training: Option<&mut ChaCha8Rng>) -> Result<T> {
        self.check_input(&window.indices)?;
        let mut emb = Vec::new();
        Ok(sigmoid(self.run(&window.indices, training, &mut emb).logit))
    }

    /// Pooled filter values at inference, for inspection.
    pub fn pooled_features(&self, indices: &[u32]) -> Result<Vec<T>> {
        self.check_input(indices)?;
        let mut emb = Vec::new();
        Ok(self.run(indices, None, &mut emb).pooled)
    }

    /// Convolution outputs after the rectifier, `F x P`, at inference.
    pub fn conv_activations(&self, indices: &[u32]) -> Result<Vec<T>> {
        self.check_input(indices)?;
        let mut emb = Vec::new();
        Ok(self
            .run(indices, None, &mut emb)
            .z
            .into_iter()
            .map(|v| v.max(T::zero()))
            .collect())
    }

    /// Scores many windows in parallel, preserving order.
    pub fn score_all(&self, windows: &[EncodedWindow]) -> Result<Vec<T>> {
        windows.par_iter().map(|w| self.score(&w.indices)).collect()
    }

    /// Binary cross-entropy of one example and accumulation of its gradient
    /// (times `scale`) into `grad`.
    fn backprop(
        &self,
        indices: &[u32],
        positive: bool,
        dropout: Option<&mut ChaCha8Rng>,
        scale: T,
        emb: &mut Vec<T>,
        grad: &mut [T],
    ) -> T {
        let s = self.shape;
        let (p_count, fw, d) = (s.positions(), s.filter_width(), s.embed_dim);
        let tr = self.run(indices, dropout, emb);
        let y = if positive { T::one() } else { T::zero() };
        let loss = softplus(tr.logit) - y * tr.logit;
        let dlogit = (sigmoid_exact(tr.logit) - y) * scale;

        grad[s.dense_bias()] += dlogit;
        let dw = s.dense_weights();
        let cw = s.conv_weights();
        let cb = s.conv_bias();
        let weights = self.conv_weights();
        let dense = self.dense_weights();
        for f in 0..s.n_filters {
            grad[dw.start + f] += dlogit * tr.pooled[f];
            let t = tr.argmax[f];
            let k = f * p_count + t;
            if tr.z[k] <= T::zero() {
                continue;
            }
            let m = if tr.mask.is_empty() {
                T::one()
            } else {
                tr.mask[k]
            };
            if m == T::zero() {
                continue;
            }
            let dz = dlogit * dense[f] * m;
            grad[cb.start + f] += dz;
            let x = &emb[t * d..t * d + fw];
            let gw = &mut grad[cw.start + f * fw..cw.start + (f + 1) * fw];
            for (g, &xi) in gw.iter_mut().zip(x) {
                *g += dz * xi;
            }
            let w = &weights[f * fw..(f + 1) * fw];
            for j in 0..s.kernel_size {
                let row = indices[t + j] as usize * d;
                let ge = &mut grad[row..row + d];
                for (g, &wi) in ge.iter_mut().zip(&w[j * d..(j + 1) * d]) {
                    *g += dz * wi;
                }
            }
        }
        loss
    }

    /// Loss and full analytic gradient for one example, without dropout.
    pub fn loss_and_gradient(&self, indices: &[u32], positive: bool) -> Result<(T, Vec<T>)> {
        self.check_input(indices)?;
        let mut grad = vec![T::zero(); self.params.len()];
        let mut emb = Vec::new();
        let loss = self.backprop(indices, positive, None, T::one(), &mut emb, &mut grad);
        Ok((loss, grad))
    }

    /// Loss of one example without dropout.
    pub fn loss(&self, indices: &[u32], positive: bool) -> Result<T> {
        self.check_input(indices)?;
        let mut emb = Vec::new();
        let logit = self.run(indices, None, &mut emb).logit;
        let y = if positive { T::one() } else { T::zero() };
        Ok(softplus(logit) - y * logit)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            config: self.config.clone(),
            shape: self.shape,
            vocab_fingerprint: self.vocab_fingerprint,
        };
        model_file::encode(ModelKind::Cnn, &header, &self.params)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (h, params): (Header, Vec<T>) = model_file::decode(bytes, ModelKind::Cnn)?;
        Self::check_shape(&h.config, &h.shape)?;
        if params.len() != h.shape.n_params() {
            return Err(Error::ModelFormat(format!(
                "expected {} parameters, found {}",
                h.shape.n_params(),
                params.len()
            )));
        }
        Ok(Self {
            config: h.config,
            shape: h.shape,
            vocab_fingerprint: h.vocab_fingerprint,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        model_file::write_file(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&model_file::read_file(path)?)
    }
}

/// Logistic function without the open-interval clamp, for gradients.
#[inline]
fn sigmoid_exact<T: Real>(x: T) -> T {
    let one = T::one();
    if x >= T::zero() {
        one / (one + (-x).exp())
    } else {
        let e = x.exp();
        e / (one + e)
    }
}

/// Adam state over a flat parameter vector.
struct Adam<T> {
    m: Vec<T>,
    v: Vec<T>,
    step: i32,
    lr: T,
    b1: T,
    b2: T,
    eps: T,
}

impl<T: Real> Adam<T> {
    fn new(n: usize, lr: f64) -> Self {
        Self {
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            step: 0,
            lr: T::of(lr),
            b1: T::of(ADAM_BETA1),
            b2: T::of(ADAM_BETA2),
            eps: T::of(ADAM_EPSILON),
        }
    }

    fn update(&mut self, params: &mut [T], grad: &[T]) {
        self.step += 1;
        let one = T::one();
        let c1 = one - self.b1.powi(self.step);
        let c2 = one - self.b2.powi(self.step);
        let step = self.lr * c2.sqrt() / c1;
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.b1 * self.m[i] + (one - self.b1) * g;
            self.v[i] = self.b2 * self.v[i] + (one - self.b2) * g * g;
            params[i] -= step * self.m[i] / (self.v[i].sqrt() + self.eps);
        }
    }
}

/// Loss history of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    /// Mean training loss of each epoch, measured during that epoch.
    pub epoch_losses: Vec<f64>,
}

/// Checks a training set and returns its sequence length.
fn validate_training_set(windows: &[EncodedWindow]) -> Result<usize> {
    let first = windows
        .first()
        .ok_or_else(|| Error::validation("empty training set"))?;
    let len = first.indices.len();
    if windows.iter().any(|w| w.indices.len() != len) {
        return Err(Error::validation("training windows differ in length"));
    }
    let pos = windows.iter().filter(|w| w.positive()).count();
    if pos == 0 || pos == windows.len() {
        return Err(Error::validation(
            "training set has a single class; both negative and candidate-positive windows are required",
        ));
    }
    Ok(len)
}

/// Trains a model, calling `on_epoch(epoch, model)` after each pass
/// (1-based). Returning `false` from the callback stops training early.
pub fn train_with<T, F>(
    config: &CnnConfig,
    vocab: &Vocabulary,
    windows: &[EncodedWindow],
    mut on_epoch: F,
) -> Result<(OccurrenceModel<T>, TrainHistory)>
where
    T: Real,
    F: FnMut(usize, &OccurrenceModel<T>) -> Result<bool>,
{
    config.validate()?;
    let seq_len = validate_training_set(windows)?;
    let shape = Shape {
        vocab_rows: vocab.table_rows(),
        seq_len,
        embed_dim: config.embed_dim,
        n_filters: config.n_filters,
        kernel_size: config.kernel_size,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model =
        OccurrenceModel::<T>::initialized(config.clone(), shape, vocab.fingerprint(), &mut rng)?;
    for w in windows {
        model.check_input(&w.indices)?;
    }
    let n = model.params.len();
    let mut adam = Adam::<T>::new(n, config.learning_rate);
    let mut grad = vec![T::zero(); n];
    let mut emb = Vec::with_capacity(seq_len * config.embed_dim);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut history = TrainHistory {
        epoch_losses: Vec::with_capacity(config.epochs),
    };
    let mut step = 0usize;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            grad.iter_mut().for_each(|g| *g = T::zero());
            let scale = T::one() / T::of_count(batch.len());
            for &i in batch {
                let w = &windows[i];
                let loss = model.backprop(
                    &w.indices,
                    w.positive(),
                    Some(&mut rng),
                    scale,
                    &mut emb,
                    &mut grad,
                );
                epoch_loss += loss.to_f64_lossless();
            }
            adam.update(&mut model.params, &grad);
            step += 1;
            if !model.is_finite() {
                return Err(Error::NonFinite { step });
            }
        }
        history.epoch_losses.push(epoch_loss / windows.len() as f64);
        if !on_epoch(epoch, &model)? {
            break;
        }
    }
    Ok((model, history))
}

/// Trains for `config.epochs` passes.
pub fn train<T: Real>(
    config: &CnnConfig,
    vocab: &Vocabulary,
    windows: &[EncodedWindow],
) -> Result<OccurrenceModel<T>> {
    Ok(train_with(config, vocab, windows, |_, _| Ok(true))?.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub dropout_candidates: Vec<f64>,
    pub epoch_candidates: Vec<usize>,
    pub selection_recall: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            dropout_candidates: vec![0.2, 0.5],
            epoch_candidates: vec![3, 5, 8],
            selection_recall: 0.75,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub dropout_rate: f64,
    pub epochs: usize,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOutcome {
    pub best: GridCell,
    /// Every evaluated cell, ordered by dropout then epochs.
    pub cells: Vec<GridCell>,
}

/// Picks the (dropout, epochs) pair with the best validation precision at
/// `grid.selection_recall`. Ties go to the smaller dropout, then fewer epochs.
///
/// One run per dropout rate trains to the largest epoch candidate and is
/// evaluated after each candidate epoch count; because the random stream
/// does not depend on the epoch budget, this is the same model a separate
/// run with that budget would produce.
pub fn grid_search<T: Real>(
    grid: &GridSpec,
    base: &CnnConfig,
    vocab: &Vocabulary,
    train_windows: &[EncodedWindow],
    validation: &[EncodedWindow],
) -> Result<GridOutcome> {
    if grid.dropout_candidates.is_empty() || grid.epoch_candidates.is_empty() {
        return Err(Error::Config(
            "grid candidate lists must be non-empty".into(),
        ));
    }
    if grid.epoch_candidates.contains(&0) {
        return Err(Error::Config("epoch candidates must be positive".into()));
    }
    let pos = validation.iter().filter(|w| w.positive()).count();
    if pos == 0 || pos == validation.len() {
        return Err(Error::validation("validation set must contain both labels"));
    }
    let mut dropouts = grid.dropout_candidates.clone();
    dropouts.sort_by(f64::total_cmp);
    dropouts.dedup();
    let epochs: BTreeSet<usize> = grid.epoch_candidates.iter().copied().collect();
    let max_epochs = *epochs.iter().next_back().unwrap();

    let per_dropout: Vec<Vec<GridCell>> = dropouts
        .par_iter()
        .map(|&dropout_rate| {
            let config = CnnConfig {
                dropout_rate,
                epochs: max_epochs,
                ..base.clone()
            };
            let mut cells = Vec::new();
            train_with::<T, _>(&config, vocab, train_windows, |epoch, model| {
                if epochs.contains(&epoch) {
                    let scores = model.score_all(validation)?;
                    let items: Vec<ScoredItem<T>> = scores
                        .into_iter()
                        .zip(validation)
                        .map(|(s, w)| ScoredItem::new(s, w.positive()))
                        .collect();
                    let cut = precision_at_recall(&items, grid.selection_recall)?;
                    cells.push(GridCell {
                        dropout_rate,
                        epochs: epoch,
                        precision: cut.precision,
                    });
                }
                Ok(true)
            })?;
            Ok(cells)
        })
        .collect::<Result<_>>()?;

    let cells: Vec<GridCell> = per_dropout.into_iter().flatten().collect();
    let mut best = cells[0];
    for c in &cells[1..] {
        if c.precision > best.precision {
            best = *c;
        }
    }
    Ok(GridOutcome { best, cells })
}

/// Step used for central differences.
pub const FD_STEP: f64 = 1e-5;
/// Floor on the denominator of the relative error, so that two vanishing
/// gradients do not produce a large ratio of rounding noise.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    /// Index of the parameter with the largest error.
    pub worst_param: usize,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

/// `|a - b| / max(|a|, |b|, REL_ERROR_FLOOR)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_ERROR_FLOOR)
}

/// Compares the analytic gradient of the loss against central differences
/// for every parameter. Dropout is not used.
pub fn gradient_check<T: Real>(
    model: &OccurrenceModel<T>,
    window: &EncodedWindow,
) -> Result<GradientCheck> {
    let positive = window.positive();
    let (_, grad) = model.loss_and_gradient(&window.indices, positive)?;
    let mut probe = model.clone();
    let h = T::of(FD_STEP);
    let mut numeric = Vec::with_capacity(grad.len());
    for i in 0..grad.len() {
        let orig = probe.params[i];
        probe.params[i] = orig + h;
        let up = probe.loss(&window.indices, positive)?;
        probe.params[i] = orig - h;
        let down = probe.loss(&window.indices, positive)?;
        probe.params[i] = orig;
        numeric.push(((up - down) / (h + h)).to_f64_lossless());
    }
    let analytic: Vec<f64> = grad.iter().map(|g| g.to_f64_lossless()).collect();
    let (mut worst, mut max_err) = (0, 0.0);
    for (i, (&a, &n)) in analytic.iter().zip(&numeric).enumerate() {
        let e = relative_error(a, n);
        if e > max_err {
            max_err = e;
            worst = i;
        }
    }
    Ok(GradientCheck {
        max_relative_error: max_err,
        worst_param: worst,
        analytic,
        numeric,
    })
}
