//! Bag-of-words linear baselines: logistic regression and a linear SVM.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model_file::{self, ModelKind};
use crate::scalar::{sigmoid, softplus, Real};
use crate::vectorize::BowVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearKind {
    Logistic,
    Svm,
}

impl LinearKind {
    fn model_kind(self) -> ModelKind {
        match self {
            LinearKind::Logistic => ModelKind::Logistic,
            LinearKind::Svm => ModelKind::Svm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// L2 strength `lambda` in `lambda/2 * |w|^2`.
    pub regularization: f64,
    pub seed: u64,
}

impl Default for LinearConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            epochs: 50,
            regularization: 1e-4,
            seed: 0,
        }
    }
}

impl LinearConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            )));
        }
        if !(self.regularization >= 0.0 && self.regularization * self.learning_rate < 1.0) {
            return Err(Error::Config(format!(
                "regularization {} must be non-negative with lr * lambda < 1",
                self.regularization
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel<T> {
    pub kind: LinearKind,
    pub weights: Vec<T>,
    pub bias: T,
    pub config: LinearConfig,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    kind: LinearKind,
    config: LinearConfig,
    dimension: usize,
}

fn sparse_dot<T: Real>(w: &[T], v: &BowVector) -> T {
    v.entries()
        .iter()
        .map(|&(i, c)| w[i as usize] * T::of_count(c as usize))
        .sum()
}

impl<T: Real> LinearModel<T> {
    pub fn dimension(&self) -> usize {
        self.weights.len()
    }

    fn check_dim(&self, v: &BowVector) -> Result<()> {
        if v.dimension() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                actual: v.dimension(),
            });
        }
        Ok(())
    }

    /// `w . v + b`.
    pub fn margin(&self, v: &BowVector) -> Result<T> {
        self.check_dim(v)?;
        Ok(sparse_dot(&self.weights, v) + self.bias)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            kind: self.kind,
            config: self.config.clone(),
            dimension: self.weights.len(),
        };
        let mut params = self.weights.clone();
        params.push(self.bias);
        model_file::encode(self.kind.model_kind(), &header, &params)
    }

    pub fn from_bytes(bytes: &[u8], kind: LinearKind) -> Result<Self> {
        let (h, mut params): (Header, Vec<T>) = model_file::decode(bytes, kind.model_kind())?;
        if params.len() != h.dimension + 1 || h.kind != kind {
            return Err(Error::ModelFormat(
                "linear model header disagrees with body".into(),
            ));
        }
        let bias = params.pop().unwrap();
        Ok(Self {
            kind,
            weights: params,
            bias,
            config: h.config,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        model_file::write_file(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path, kind: LinearKind) -> Result<Self> {
        Self::from_bytes(&model_file::read_file(path)?, kind)
    }
}

/// Logistic squash of the margin, for either kind. Monotone in the margin,
/// so rankings are those of the raw margin.
pub fn predict_score<T: Real>(model: &LinearModel<T>, v: &BowVector) -> Result<T> {
    Ok(sigmoid(model.margin(v)?))
}

fn check_training_set(vectors: &[BowVector], labels: &[bool]) -> Result<usize> {
    if vectors.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: vectors.len(),
            actual: labels.len(),
        });
    }
    let dim = vectors
        .first()
        .ok_or_else(|| Error::validation("empty training set"))?
        .dimension();
    if let Some(v) = vectors.iter().find(|v| v.dimension() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: v.dimension(),
        });
    }
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::validation("training set has a single class"));
    }
    Ok(dim)
}

/// Regularised mean logistic loss and its gradient `(loss, dw, db)`.
pub fn logistic_objective<T: Real>(
    weights: &[T],
    bias: T,
    vectors: &[BowVector],
    labels: &[bool],
    regularization: f64,
) -> (T, Vec<T>, T) {
    let n = T::of_count(vectors.len());
    let lambda = T::of(regularization);
    let mut loss = T::zero();
    let mut dw = vec![T::zero(); weights.len()];
    let mut db = T::zero();
    for (v, &y) in vectors.iter().zip(labels) {
        let m = sparse_dot(weights, v) + bias;
        let yf = if y { T::one() } else { T::zero() };
        loss += softplus(m) - yf * m;
        let r = sigmoid_unclamped(m) - yf;
        for &(i, c) in v.entries() {
            dw[i as usize] += r * T::of_count(c as usize);
        }
        db += r;
    }
    let half = T::of(0.5);
    let reg = half * lambda * weights.iter().map(|&w| w * w).sum::<T>();
    for (g, &w) in dw.iter_mut().zip(weights) {
        *g = *g / n + lambda * w;
    }
    (loss / n + reg, dw, db / n)
}

fn sigmoid_unclamped<T: Real>(x: T) -> T {
    let one = T::one();
    if x >= T::zero() {
        one / (one + (-x).exp())
    } else {
        let e = x.exp();
        e / (one + e)
    }
}

/// L2-regularised logistic regression by full-batch gradient descent.
///
/// Weights start at zero and the bias at the log-odds of the class prior,
/// which is the optimum when no feature is informative. The procedure is
/// deterministic and does not consume `config.seed`.
pub fn train_logistic<T: Real>(
    vectors: &[BowVector],
    labels: &[bool],
    config: &LinearConfig,
) -> Result<LinearModel<T>> {
    config.validate()?;
    let dim = check_training_set(vectors, labels)?;
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    let neg = labels.len() as f64 - pos;
    let mut weights = vec![T::zero(); dim];
    let mut bias = T::of((pos / neg).ln());
    let lr = T::of(config.learning_rate);
    for _ in 0..config.epochs {
        let (_, dw, db) =
            logistic_objective(&weights, bias, vectors, labels, config.regularization);
        for (w, g) in weights.iter_mut().zip(&dw) {
            *w -= lr * *g;
        }
        bias -= lr * db;
    }
    Ok(LinearModel {
        kind: LinearKind::Logistic,
        weights,
        bias,
        config: config.clone(),
    })
}

/// Regularised mean hinge loss and a subgradient `(loss, dw, db)`.
/// At a kink (`y m == 1`) the zero subgradient is used for that example.
pub fn hinge_objective<T: Real>(
    weights: &[T],
    bias: T,
    vectors: &[BowVector],
    labels: &[bool],
    regularization: f64,
) -> (T, Vec<T>, T) {
    let n = T::of_count(vectors.len());
    let lambda = T::of(regularization);
    let mut loss = T::zero();
    let mut dw = vec![T::zero(); weights.len()];
    let mut db = T::zero();
    for (v, &y) in vectors.iter().zip(labels) {
        let ys = if y { T::one() } else { -T::one() };
        let m = sparse_dot(weights, v) + bias;
        let slack = T::one() - ys * m;
        if slack > T::zero() {
            loss += slack;
            for &(i, c) in v.entries() {
                dw[i as usize] -= ys * T::of_count(c as usize);
            }
            db -= ys;
        }
    }
    let half = T::of(0.5);
    let reg = half * lambda * weights.iter().map(|&w| w * w).sum::<T>();
    for (g, &w) in dw.iter_mut().zip(weights) {
        *g = *g / n + lambda * w;
    }
    (loss / n + reg, dw, db / n)
}

/// L2-regularised hinge loss by stochastic subgradient descent with a fixed
/// step. Example order is reshuffled each epoch from `config.seed`.
///
/// Weights are kept as `scale * v` so the per-step shrinkage costs O(1).
pub fn train_svm<T: Real>(
    vectors: &[BowVector],
    labels: &[bool],
    config: &LinearConfig,
) -> Result<LinearModel<T>> {
    config.validate()?;
    let dim = check_training_set(vectors, labels)?;
    let lr = T::of(config.learning_rate);
    let shrink = T::one() - lr * T::of(config.regularization);
    let mut v = vec![T::zero(); dim];
    let mut scale = T::one();
    let mut bias = T::zero();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..vectors.len()).collect();
    let rescale_below = T::of(1e-6);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let x = &vectors[i];
            let ys = if labels[i] { T::one() } else { -T::one() };
            let m = scale * sparse_dot(&v, x) + bias;
            let violated = ys * m < T::one();
            scale *= shrink;
            if violated {
                let step = lr * ys / scale;
                for &(j, c) in x.entries() {
                    v[j as usize] += step * T::of_count(c as usize);
                }
                bias += lr * ys;
            }
            if scale < rescale_below {
                for w in &mut v {
                    *w *= scale;
                }
                scale = T::one();
            }
        }
    }
    let weights = v.into_iter().map(|w| w * scale).collect();
    Ok(LinearModel {
        kind: LinearKind::Svm,
        weights,
        bias,
        config: config.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bow(pairs: &[(u32, u32)], dim: usize) -> BowVector {
        BowVector::from_pairs(pairs.to_vec(), dim).unwrap()
    }

    fn separable() -> (Vec<BowVector>, Vec<bool>) {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..20u32 {
            let c = 1 + i % 3;
            xs.push(bow(&[(0, c)], 2));
            ys.push(true);
            xs.push(bow(&[(1, c)], 2));
            ys.push(false);
        }
        (xs, ys)
    }

    #[test]
    fn logistic_separable_accuracy() {
        let (xs, ys) = separable();
        let m: LinearModel<f64> = train_logistic(&xs, &ys, &LinearConfig::default()).unwrap();
        let acc = xs
            .iter()
            .zip(&ys)
            .filter(|(x, &y)| (predict_score(&m, x).unwrap() > 0.5) == y)
            .count();
        assert_eq!(acc, xs.len());
    }

    #[test]
    fn logistic_uninformative_features_give_prior_log_odds() {
        let xs = vec![BowVector::zeros(3); 10];
        let ys: Vec<bool> = (0..10).map(|i| i < 3).collect();
        let m: LinearModel<f64> = train_logistic(&xs, &ys, &LinearConfig::default()).unwrap();
        assert!(m.weights.iter().all(|&w| w == 0.0));
        assert!((m.bias - (3.0f64 / 7.0).ln()).abs() < 1e-12, "{}", m.bias);
    }

    #[test]
    fn deterministic_training() {
        let (xs, ys) = separable();
        let cfg = LinearConfig {
            seed: 4,
            ..LinearConfig::default()
        };
        let a: LinearModel<f64> = train_logistic(&xs, &ys, &cfg).unwrap();
        let b: LinearModel<f64> = train_logistic(&xs, &ys, &cfg).unwrap();
        assert_eq!(a, b);
        let a: LinearModel<f64> = train_svm(&xs, &ys, &cfg).unwrap();
        let b: LinearModel<f64> = train_svm(&xs, &ys, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn svm_separable_zero_hinge() {
        let (xs, ys) = separable();
        let cfg = LinearConfig {
            epochs: 100,
            ..LinearConfig::default()
        };
        let m: LinearModel<f64> = train_svm(&xs, &ys, &cfg).unwrap();
        for (x, &y) in xs.iter().zip(&ys) {
            let s = if y { 1.0 } else { -1.0 };
            assert!(s * m.margin(x).unwrap() >= 1.0 - 1e-9);
        }
    }

    #[test]
    fn svm_label_flip_negates_boundary() {
        let (xs, ys) = separable();
        let flipped: Vec<bool> = ys.iter().map(|y| !y).collect();
        let cfg = LinearConfig::default();
        let a: LinearModel<f64> = train_svm(&xs, &ys, &cfg).unwrap();
        let b: LinearModel<f64> = train_svm(&xs, &flipped, &cfg).unwrap();
        for (wa, wb) in a.weights.iter().zip(&b.weights) {
            assert_eq!(*wa, -*wb);
        }
        assert_eq!(a.bias, -b.bias);
    }

    #[test]
    fn single_class_rejected() {
        let xs = vec![bow(&[(0, 1)], 2); 4];
        let ys = vec![true; 4];
        assert!(train_logistic::<f64>(&xs, &ys, &LinearConfig::default()).is_err());
        assert!(train_svm::<f64>(&xs, &ys, &LinearConfig::default()).is_err());
    }

    #[test]
    fn score_examples() {
        let mut m = LinearModel::<f64> {
            kind: LinearKind::Svm,
            weights: vec![0.0, 0.0],
            bias: 0.0,
            config: LinearConfig::default(),
        };
        let v = bow(&[(0, 2)], 2);
        assert_eq!(predict_score(&m, &v).unwrap(), 0.5);
        m.weights[0] = 1.0;
        let s1 = predict_score(&m, &v).unwrap();
        assert!((s1 - 1.0 / (1.0 + (-2.0f64).exp())).abs() < 1e-15);
        assert!((s1 - 0.8808).abs() < 1e-4);
        m.weights[0] = 10.0;
        assert!(predict_score(&m, &v).unwrap() > s1);
        assert!(predict_score(&m, &bow(&[], 3)).is_err());
    }

    #[test]
    fn file_round_trip() {
        let (xs, ys) = separable();
        let m: LinearModel<f64> = train_svm(&xs, &ys, &LinearConfig::default()).unwrap();
        let back = LinearModel::<f64>::from_bytes(&m.to_bytes().unwrap(), LinearKind::Svm).unwrap();
        assert_eq!(back, m);
        assert!(
            LinearModel::<f64>::from_bytes(&m.to_bytes().unwrap(), LinearKind::Logistic).is_err()
        );
    }
}
