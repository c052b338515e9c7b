//! Nearest-neighbour cleaning of candidate positives.
//!
//! Candidate positives (hits in privileged documents) that look like known
//! negatives are probably not privileged. Two scores are supported:
//!
//! * approach one: mean cosine similarity to the `k` most similar negatives;
//! * approach two: that mean divided by the mean similarity to the `k` most
//!   similar *other* candidates.
//!
//! Lower is more likely positive; candidates scoring at or below a cutoff
//! are kept. Similarities are exact (every pair is considered), computed via
//! an inverted index so only pairs sharing a feature are visited.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::vectorize::{cosine_from_dot, BowVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Approach {
    One,
    Two,
}

impl std::fmt::Display for Approach {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Approach::One => "one",
            Approach::Two => "two",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub k: usize,
    pub cutoff: f64,
    pub approach: Approach,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            k: 3,
            cutoff: 0.7,
            approach: Approach::One,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        let ok = match self.approach {
            Approach::One => self.cutoff > 0.0 && self.cutoff <= 1.0,
            Approach::Two => self.cutoff > 0.0 && self.cutoff.is_finite(),
        };
        if !ok {
            return Err(Error::Config(format!(
                "cutoff {} invalid for approach {}",
                self.cutoff, self.approach
            )));
        }
        Ok(())
    }
}

/// A pool of vectors indexed by feature for fast exact similarity.
struct Pool<'a, T> {
    vectors: &'a [BowVector],
    sq_norms: Vec<T>,
    /// `postings[f]` lists `(vector index, count)` for vectors containing `f`.
    postings: Vec<Vec<(u32, u32)>>,
}

impl<'a, T: Real> Pool<'a, T> {
    fn new(vectors: &'a [BowVector], dimension: usize) -> Result<Self> {
        let mut postings = vec![Vec::new(); dimension];
        for (i, v) in vectors.iter().enumerate() {
            if v.dimension() != dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    actual: v.dimension(),
                });
            }
            for &(f, c) in v.entries() {
                postings[f as usize].push((i as u32, c));
            }
        }
        Ok(Self {
            vectors,
            sq_norms: vectors.iter().map(BowVector::sq_norm).collect(),
            postings,
        })
    }

    /// Mean of the `k` largest similarities between `query` and the pool,
    /// skipping index `exclude`. Neighbours are ranked by similarity, then
    /// by lower index, and summed in that order.
    fn mean_top_k(
        &self,
        query: &BowVector,
        k: usize,
        exclude: Option<usize>,
        dots: &mut Vec<T>,
        touched: &mut Vec<u32>,
    ) -> T {
        let q_sq: T = query.sq_norm();
        if dots.len() != self.vectors.len() {
            dots.clear();
            dots.resize(self.vectors.len(), T::zero());
        }
        touched.clear();
        for &(f, qc) in query.entries() {
            let qc = T::of_count(qc as usize);
            for &(i, c) in &self.postings[f as usize] {
                if dots[i as usize] == T::zero() {
                    touched.push(i);
                }
                dots[i as usize] += qc * T::of_count(c as usize);
            }
        }
        // Integer-valued dot products are exact, so accumulation order does
        // not change them.
        let mut top: Vec<(T, u32)> = Vec::with_capacity(k + 1);
        for &i in touched.iter() {
            let dot = dots[i as usize];
            dots[i as usize] = T::zero();
            if Some(i as usize) == exclude {
                continue;
            }
            let sim = cosine_from_dot(dot, q_sq, self.sq_norms[i as usize]);
            push_top(&mut top, k, sim, i);
        }
        // Untouched vectors have similarity 0; zeros contribute nothing to
        // the sum whichever of them fill the remaining slots.
        let mut sum = T::zero();
        for &(s, _) in &top {
            sum += s;
        }
        sum / T::of_count(k)
    }
}

/// Keeps `top` as the best `k` by (similarity desc, index asc).
fn push_top<T: Real>(top: &mut Vec<(T, u32)>, k: usize, sim: T, idx: u32) {
    let better = |a: &(T, u32), b: &(T, u32)| a.0 > b.0 || (a.0 == b.0 && a.1 < b.1);
    let cand = (sim, idx);
    if top.len() == k {
        if !better(&cand, top.last().unwrap()) {
            return;
        }
        top.pop();
    }
    let pos = top
        .iter()
        .position(|e| better(&cand, e))
        .unwrap_or(top.len());
    top.insert(pos, cand);
}

fn common_dimension(candidates: &[BowVector], negatives: &[BowVector]) -> usize {
    candidates
        .first()
        .or_else(|| negatives.first())
        .map(BowVector::dimension)
        .unwrap_or(0)
}

/// Approach one: mean similarity to the `k` nearest negatives, in [0, 1].
pub fn score_candidates_v1<T: Real>(
    candidates: &[BowVector],
    negatives: &[BowVector],
    k: usize,
) -> Result<Vec<T>> {
    if k == 0 {
        return Err(Error::validation("k must be at least 1"));
    }
    if negatives.len() < k {
        return Err(Error::validation(format!(
            "{} negatives, need at least k = {k}",
            negatives.len()
        )));
    }
    let dim = common_dimension(candidates, negatives);
    let neg = Pool::<T>::new(negatives, dim)?;
    if let Some(c) = candidates.iter().find(|c| c.dimension() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: c.dimension(),
        });
    }
    Ok(candidates
        .par_iter()
        .map_init(
            || (Vec::new(), Vec::new()),
            |(dots, touched), c| neg.mean_top_k(c, k, None, dots, touched),
        )
        .collect())
}

/// Approach two: negative-neighbour mean over candidate-neighbour mean.
/// A zero denominator gives `+inf`, which no cutoff selects.
pub fn score_candidates_v2<T: Real>(
    candidates: &[BowVector],
    negatives: &[BowVector],
    k: usize,
) -> Result<Vec<T>> {
    if k == 0 {
        return Err(Error::validation("k must be at least 1"));
    }
    if negatives.len() < k || candidates.len() < k + 1 {
        return Err(Error::validation(format!(
            "approach two with k = {k} needs {k} negatives and {} candidates, got {} and {}",
            k + 1,
            negatives.len(),
            candidates.len()
        )));
    }
    let dim = common_dimension(candidates, negatives);
    let neg = Pool::<T>::new(negatives, dim)?;
    let pos = Pool::<T>::new(candidates, dim)?;
    Ok(candidates
        .par_iter()
        .enumerate()
        .map_init(
            || (Vec::new(), Vec::new(), Vec::new()),
            |(nd, pd, touched), (i, c)| {
                let num = neg.mean_top_k(c, k, None, nd, touched);
                let den = pos.mean_top_k(c, k, Some(i), pd, touched);
                if den == T::zero() {
                    T::infinity()
                } else {
                    num / den
                }
            },
        )
        .collect())
}

/// Scores with the configured approach.
pub fn score_candidates<T: Real>(
    candidates: &[BowVector],
    negatives: &[BowVector],
    config: &SelectionConfig,
) -> Result<Vec<T>> {
    config.validate()?;
    match config.approach {
        Approach::One => score_candidates_v1(candidates, negatives, config.k),
        Approach::Two => score_candidates_v2(candidates, negatives, config.k),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Indices of kept candidates, ascending.
    pub selected: Vec<usize>,
    /// Kept share of all candidates; 0 when there are none.
    pub fraction: f64,
}

/// Keeps candidates with `score <= cutoff`.
pub fn select<T: Real>(scores: &[T], cutoff: f64) -> Selection {
    let cutoff = T::of(cutoff);
    let selected: Vec<usize> = scores
        .iter()
        .enumerate()
        .filter(|(_, &s)| s <= cutoff)
        .map(|(i, _)| i)
        .collect();
    let fraction = if scores.is_empty() {
        0.0
    } else {
        selected.len() as f64 / scores.len() as f64
    };
    Selection { selected, fraction }
}

/// One line of a scored-candidate file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub key: String,
    /// `null` in JSON when the score is infinite.
    pub score: Option<f64>,
    pub selected: bool,
}

impl ScoredCandidate {
    pub fn new(key: String, score: f64, cutoff: f64) -> Self {
        Self {
            key,
            score: score.is_finite().then_some(score),
            selected: score <= cutoff,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bow(pairs: &[(u32, u32)]) -> BowVector {
        BowVector::from_pairs(pairs.to_vec(), 8).unwrap()
    }

    #[test]
    fn identical_negative_scores_one() {
        let c = [bow(&[(0, 2), (3, 1)])];
        let n = [bow(&[(5, 1)]), bow(&[(0, 2), (3, 1)])];
        let s: Vec<f64> = score_candidates_v1(&c, &n, 1).unwrap();
        assert_eq!(s, [1.0]);
    }

    #[test]
    fn orthogonal_candidate_scores_zero() {
        let c = [bow(&[(0, 1)])];
        let n = [bow(&[(1, 1)]), bow(&[(2, 3)]), bow(&[])];
        let s: Vec<f64> = score_candidates_v1(&c, &n, 3).unwrap();
        assert_eq!(s, [0.0]);
    }

    #[test]
    fn worked_top_three_mean() {
        // Unit-norm candidate e0; negatives built to have cosine 0.9, 0.8,
        // 0.1, 0, 0 with it. cos = a / sqrt(a^2 + b^2) for (a e0 + b e1).
        let dim = 8;
        let c = [BowVector::from_pairs(vec![(0, 1)], dim).unwrap()];
        let mk = |a: u32, b: u32| BowVector::from_pairs(vec![(0, a), (1, b)], dim).unwrap();
        let negs = [
            mk(9, 4),
            mk(4, 3),
            mk(1, 10),
            bow(&[(2, 1)]),
            bow(&[(3, 1)]),
        ];
        let sims: Vec<f64> = negs
            .iter()
            .map(|n| crate::vectorize::cosine(&c[0], n).unwrap())
            .collect();
        let mut sorted = sims.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let brute = (sorted[0] + sorted[1] + sorted[2]) / 3.0;
        let s: Vec<f64> = score_candidates_v1(&c, &negs, 3).unwrap();
        assert_eq!(s[0], brute);
        // 9/sqrt(97) ~ 0.914, 4/5 = 0.8, 1/sqrt(101) ~ 0.0995
        assert!((s[0] - 0.6045).abs() < 1e-3, "{}", s[0]);
    }

    #[test]
    fn too_few_negatives() {
        let c = [bow(&[(0, 1)])];
        assert!(score_candidates_v1::<f64>(&c, &[bow(&[(0, 1)])], 3).is_err());
        assert!(score_candidates_v2::<f64>(&c, &vec![bow(&[(0, 1)]); 3], 3).is_err());
    }

    #[test]
    fn approach_two_examples() {
        // All similarities 0.5: candidate e0+e1 against pools of e0 and e1.
        let c0 = bow(&[(0, 1), (2, 1)]);
        let others = [bow(&[(0, 1), (3, 1)]), bow(&[(0, 1), (4, 1)])];
        let negs = [bow(&[(0, 1), (5, 1)]), bow(&[(0, 1), (6, 1)])];
        let cands = [c0, others[0].clone(), others[1].clone()];
        let s: Vec<f64> = score_candidates_v2(&cands, &negs, 2).unwrap();
        assert_eq!(s[0], 1.0);

        // Identical to a negative, orthogonal to other candidates.
        let cands = [bow(&[(7, 1)]), bow(&[(0, 1)]), bow(&[(1, 1)])];
        let negs = [bow(&[(7, 1)])];
        let s: Vec<f64> = score_candidates_v2(&cands, &negs, 1).unwrap();
        assert_eq!(s[0], f64::INFINITY);
        assert!(select(&s, 1.0).selected.iter().all(|&i| i != 0));
    }

    #[test]
    fn approach_two_ratio() {
        // c = 3e0 + 4e1 (norm 5). cos(c, e0+e2+e3+e4) = 3/10, cos(c, e0) = 3/5.
        let c = bow(&[(0, 3), (1, 4)]);
        let neg = bow(&[(0, 1), (2, 1), (3, 1), (4, 1)]);
        let other = bow(&[(0, 1)]);
        let num: f64 = crate::vectorize::cosine(&c, &neg).unwrap();
        let den: f64 = crate::vectorize::cosine(&c, &other).unwrap();
        assert_eq!((num, den), (0.3, 0.6));
        let s: Vec<f64> = score_candidates_v2(&[c, other], std::slice::from_ref(&neg), 1).unwrap();
        assert_eq!(s[0], 0.5);
    }

    #[test]
    fn selection_rules() {
        let s = [0.5, 0.7, 0.9];
        let sel = select(&s, 0.7);
        assert_eq!(sel.selected, [0, 1]);
        assert!((sel.fraction - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(select(&s, 1.0).fraction, 1.0);
        assert_eq!(select(&s, 0.1).fraction, 0.0);
        assert_eq!(select::<f64>(&[], 0.5).fraction, 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(SelectionConfig::default().validate().is_ok());
        let bad = SelectionConfig {
            cutoff: 1.5,
            ..SelectionConfig::default()
        };
        assert!(bad.validate().is_err());
        let ok_two = SelectionConfig {
            cutoff: 1.5,
            approach: Approach::Two,
            ..SelectionConfig::default()
        };
        assert!(ok_two.validate().is_ok());
        let zero_k = SelectionConfig {
            k: 0,
            ..SelectionConfig::default()
        };
        assert!(zero_k.validate().is_err());
    }

    #[test]
    fn scored_candidate_serializes_infinity_as_null() {
        let c = ScoredCandidate::new("d#1".into(), f64::INFINITY, 1.0);
        assert_eq!(
            serde_json::to_string(&c).unwrap(),
            r#"{"key":"d#1","score":null,"selected":false}"#
        );
    }
}
