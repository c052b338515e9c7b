//! Brute-force reference implementations and fixtures shared by the
//! integration suites.
#![allow(dead_code)]

use privsift::evaluate::ScoredItem;
use privsift::keyword::{tokenize, KeywordPattern, OccurrenceLabel};
use privsift::vectorize::{cosine, BowVector};
use rand::Rng;

/// Mean of the `k` largest cosines between `query` and `pool`, skipping
/// `exclude`, ranked by similarity then index and summed in that order.
pub fn brute_mean_top_k(
    query: &BowVector,
    pool: &[BowVector],
    k: usize,
    exclude: Option<usize>,
) -> f64 {
    let mut sims: Vec<(f64, usize)> = pool
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != exclude)
        .map(|(i, v)| (cosine::<f64>(query, v).unwrap(), i))
        .collect();
    sims.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let mut sum = 0.0;
    for (s, _) in sims.iter().take(k) {
        sum += s;
    }
    sum / k as f64
}

pub fn brute_v1(candidates: &[BowVector], negatives: &[BowVector], k: usize) -> Vec<f64> {
    candidates
        .iter()
        .map(|c| brute_mean_top_k(c, negatives, k, None))
        .collect()
}

pub fn brute_v2(candidates: &[BowVector], negatives: &[BowVector], k: usize) -> Vec<f64> {
    candidates
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let num = brute_mean_top_k(c, negatives, k, None);
            let den = brute_mean_top_k(c, candidates, k, Some(i));
            if den == 0.0 {
                f64::INFINITY
            } else {
                num / den
            }
        })
        .collect()
}

/// Random sparse count vector over `dim` features with up to `max_nnz`
/// non-zero entries; may be all zero.
pub fn random_bow<R: Rng>(rng: &mut R, dim: usize, max_nnz: usize) -> BowVector {
    let nnz = rng.gen_range(0..=max_nnz.min(dim));
    let pairs = (0..nnz)
        .map(|_| (rng.gen_range(0..dim as u32), rng.gen_range(1..4u32)))
        .collect();
    BowVector::from_pairs(pairs, dim).unwrap()
}

/// `(recall, precision, tp, fp)` of flagging every item scoring at least `t`.
pub fn counts_at(items: &[ScoredItem<f64>], t: f64) -> (f64, f64, usize, usize) {
    let n_pos = items.iter().filter(|i| i.positive).count();
    let tp = items.iter().filter(|i| i.score >= t && i.positive).count();
    let fp = items.iter().filter(|i| i.score >= t && !i.positive).count();
    (
        tp as f64 / n_pos as f64,
        tp as f64 / (tp + fp) as f64,
        tp,
        fp,
    )
}

/// Distinct scores, descending.
pub fn distinct_desc(items: &[ScoredItem<f64>]) -> Vec<f64> {
    let mut s: Vec<f64> = items.iter().map(|i| i.score).collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s.dedup();
    s
}

/// Occurrence centers found by scanning tokens directly.
pub fn brute_hits(text: &str, pattern: &KeywordPattern) -> Vec<usize> {
    tokenize(text)
        .iter()
        .enumerate()
        .filter(|(_, t)| {
            let s = t.surface.as_str();
            if pattern.prefix_wildcard() {
                s.starts_with(pattern.stem())
            } else {
                s == pattern.stem()
            }
        })
        .map(|(i, _)| i)
        .collect()
}

pub fn label(positive: bool) -> OccurrenceLabel {
    if positive {
        OccurrenceLabel::CandidatePositive
    } else {
        OccurrenceLabel::Negative
    }
}
