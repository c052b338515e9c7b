//! Precision at recall, review savings, PR/ROC curves and fold plans.
//!
//! Thresholds are inclusive throughout: an item whose score equals the
//! threshold counts as reviewed (predicted positive).

use std::cmp::Ordering;
use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Recall levels reported for every model.
pub const RECALL_TARGETS: [f64; 3] = [0.75, 0.85, 0.90];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredItem<T> {
    pub score: T,
    pub positive: bool,
}

impl<T> ScoredItem<T> {
    pub fn new(score: T, positive: bool) -> Self {
        Self { score, positive }
    }
}

/// Items sorted by descending score, grouped into runs of equal score.
/// Each entry is `(score, positives in run, items in run)`.
fn score_runs<T: Real>(items: &[ScoredItem<T>]) -> Result<Vec<(T, usize, usize)>> {
    if items.iter().any(|i| i.score.is_nan()) {
        return Err(Error::validation("NaN score"));
    }
    let mut sorted: Vec<&ScoredItem<T>> = items.iter().collect();
    sorted.sort_unstable_by(|a, b| b.score.partial_cmp(&a.score).unwrap_or(Ordering::Equal));
    let mut runs: Vec<(T, usize, usize)> = Vec::new();
    for it in sorted {
        match runs.last_mut() {
            Some(run) if run.0 == it.score => {
                run.1 += it.positive as usize;
                run.2 += 1;
            }
            _ => runs.push((it.score, it.positive as usize, 1)),
        }
    }
    Ok(runs)
}

/// Result of cutting a ranking at the smallest review set reaching a recall.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecallCut {
    pub target: f64,
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    /// Items scoring at or above the threshold.
    pub reviewed: usize,
    pub total: usize,
}

impl RecallCut {
    pub fn reviewed_fraction(&self) -> f64 {
        self.reviewed as f64 / self.total as f64
    }

    /// Share of items that need no review.
    pub fn savings(&self) -> f64 {
        1.0 - self.reviewed_fraction()
    }
}

/// Largest threshold (taken from the distinct scores) whose recall reaches
/// `target`, with precision over everything scoring at or above it.
pub fn precision_at_recall<T: Real>(items: &[ScoredItem<T>], target: f64) -> Result<RecallCut> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::validation(format!(
            "recall target {target} outside (0, 1]"
        )));
    }
    let n_pos = items.iter().filter(|i| i.positive).count();
    if n_pos == 0 {
        return Err(Error::validation(
            "precision at recall needs at least one positive",
        ));
    }
    let (mut tp, mut n) = (0usize, 0usize);
    for (score, pos, count) in score_runs(items)? {
        tp += pos;
        n += count;
        let recall = tp as f64 / n_pos as f64;
        if recall >= target {
            return Ok(RecallCut {
                target,
                threshold: score.to_f64_lossless(),
                precision: tp as f64 / n as f64,
                recall,
                reviewed: n,
                total: items.len(),
            });
        }
    }
    unreachable!("recall reaches 1 after the last run")
}

/// Fraction of items excluded from review at the `target` recall cut.
pub fn savings<T: Real>(items: &[ScoredItem<T>], target: f64) -> Result<f64> {
    Ok(precision_at_recall(items, target)?.savings())
}

/// Precision of flagging every hit: positives over total.
pub fn keyword_baseline_precision<I>(labels: I) -> Result<f64>
where
    I: IntoIterator<Item = bool>,
{
    let (mut pos, mut n) = (0usize, 0usize);
    for l in labels {
        pos += l as usize;
        n += 1;
    }
    if n == 0 {
        return Err(Error::validation(
            "keyword baseline precision of an empty set",
        ));
    }
    Ok(pos as f64 / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub recall: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Curves {
    pub pr: Vec<PrPoint>,
    pub roc: Vec<RocPoint>,
}

impl Curves {
    /// Trapezoidal ROC area with the origin prepended.
    pub fn roc_auc(&self) -> f64 {
        let mut area = 0.0;
        let (mut x0, mut y0) = (0.0, 0.0);
        for p in &self.roc {
            area += (p.fpr - x0) * (p.tpr + y0) / 2.0;
            x0 = p.fpr;
            y0 = p.tpr;
        }
        area
    }

    /// Step-wise PR area: sum of recall increments times precision.
    pub fn pr_area(&self) -> f64 {
        let mut area = 0.0;
        let mut r0 = 0.0;
        for p in &self.pr {
            area += (p.recall - r0) * p.precision;
            r0 = p.recall;
        }
        area
    }
}

/// One PR and one ROC point per distinct score, thresholds descending.
pub fn curves<T: Real>(items: &[ScoredItem<T>]) -> Result<Curves> {
    let n_pos = items.iter().filter(|i| i.positive).count();
    let n_neg = items.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::validation("curves need both classes"));
    }
    let mut out = Curves::default();
    let (mut tp, mut fp) = (0usize, 0usize);
    for (score, pos, count) in score_runs(items)? {
        tp += pos;
        fp += count - pos;
        let threshold = score.to_f64_lossless();
        out.pr.push(PrPoint {
            threshold,
            recall: tp as f64 / n_pos as f64,
            precision: tp as f64 / (tp + fp) as f64,
        });
        out.roc.push(RocPoint {
            threshold,
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
        });
    }
    Ok(out)
}

/// Occurrence score tagged with its document.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredOccurrence<T> {
    pub doc_id: String,
    pub score: T,
    pub doc_privileged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentScore<T> {
    pub doc_id: String,
    pub score: T,
    pub truth: bool,
}

impl<T: Real> DocumentScore<T> {
    pub fn item(&self) -> ScoredItem<T> {
        ScoredItem::new(self.score, self.truth)
    }
}

/// Scores each document by its highest occurrence score. Documents appear
/// in order of their first occurrence.
pub fn score_documents<T: Real>(
    occurrences: &[ScoredOccurrence<T>],
) -> Result<Vec<DocumentScore<T>>> {
    let mut slot: HashMap<&str, usize> = HashMap::new();
    let mut out: Vec<DocumentScore<T>> = Vec::new();
    for o in occurrences {
        if !(o.score >= T::zero() && o.score <= T::one()) {
            return Err(Error::validation(format!(
                "occurrence score {} for document {:?} outside [0, 1]",
                o.score, o.doc_id
            )));
        }
        match slot.get(o.doc_id.as_str()) {
            Some(&i) => {
                let d = &mut out[i];
                if d.truth != o.doc_privileged {
                    return Err(Error::validation(format!(
                        "document {:?} has conflicting labels",
                        o.doc_id
                    )));
                }
                if o.score > d.score {
                    d.score = o.score;
                }
            }
            None => {
                slot.insert(o.doc_id.as_str(), out.len());
                out.push(DocumentScore {
                    doc_id: o.doc_id.clone(),
                    score: o.score,
                    truth: o.doc_privileged,
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Occurrence,
    Document,
}

impl std::fmt::Display for Level {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Level::Occurrence => "occurrence",
            Level::Document => "document",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub level: Level,
    pub n_items: usize,
    pub n_positive: usize,
    pub keyword_baseline_precision: f64,
    /// One cut per recall target, in the order requested.
    pub cuts: Vec<RecallCut>,
    pub roc_auc: f64,
    pub pr_area: f64,
    /// Empty for fold averages.
    pub curves: Curves,
}

impl MetricsReport {
    pub fn compute<T: Real>(
        level: Level,
        items: &[ScoredItem<T>],
        targets: &[f64],
    ) -> Result<Self> {
        let curves = curves(items)?;
        let cuts = targets
            .iter()
            .map(|&t| precision_at_recall(items, t))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            level,
            n_items: items.len(),
            n_positive: items.iter().filter(|i| i.positive).count(),
            keyword_baseline_precision: keyword_baseline_precision(
                items.iter().map(|i| i.positive),
            )?,
            cuts,
            roc_auc: curves.roc_auc(),
            pr_area: curves.pr_area(),
            curves,
        })
    }

    pub fn precision_at(&self, target: f64) -> Option<f64> {
        self.cuts
            .iter()
            .find(|c| c.target == target)
            .map(|c| c.precision)
    }

    pub fn savings_at(&self, target: f64) -> Option<f64> {
        self.cuts
            .iter()
            .find(|c| c.target == target)
            .map(RecallCut::savings)
    }

    /// Arithmetic mean of every metric across reports of the same level and
    /// targets. Counts are summed; curves are dropped.
    pub fn average(reports: &[MetricsReport]) -> Result<Self> {
        let first = reports
            .first()
            .ok_or_else(|| Error::validation("no reports to average"))?;
        for r in reports {
            let same_targets = r.cuts.len() == first.cuts.len()
                && r.cuts
                    .iter()
                    .zip(&first.cuts)
                    .all(|(a, b)| a.target == b.target);
            if r.level != first.level || !same_targets {
                return Err(Error::validation(
                    "cannot average reports with different shapes",
                ));
            }
        }
        let n = reports.len() as f64;
        let mean = |f: &dyn Fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        let cuts = (0..first.cuts.len())
            .map(|j| {
                let m = |f: &dyn Fn(&RecallCut) -> f64| {
                    reports.iter().map(|r| f(&r.cuts[j])).sum::<f64>() / n
                };
                RecallCut {
                    target: first.cuts[j].target,
                    threshold: m(&|c| c.threshold),
                    precision: m(&|c| c.precision),
                    recall: m(&|c| c.recall),
                    reviewed: reports.iter().map(|r| r.cuts[j].reviewed).sum(),
                    total: reports.iter().map(|r| r.cuts[j].total).sum(),
                }
            })
            .collect();
        Ok(Self {
            level: first.level,
            n_items: reports.iter().map(|r| r.n_items).sum(),
            n_positive: reports.iter().map(|r| r.n_positive).sum(),
            keyword_baseline_precision: mean(&|r| r.keyword_baseline_precision),
            cuts,
            roc_auc: mean(&|r| r.roc_auc),
            pr_area: mean(&|r| r.pr_area),
            curves: Curves::default(),
        })
    }
}

/// Stratified assignment of items to `k` folds.
///
/// Items of each label are shuffled and dealt round-robin, the deal
/// continuing across labels, so per-label and overall fold sizes each
/// differ by at most one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub assignment: Vec<usize>,
}

impl FoldPlan {
    pub fn stratified(labels: &[bool], k: usize, seed: u64) -> Result<Self> {
        if k < 2 {
            return Err(Error::validation(format!("need at least 2 folds, got {k}")));
        }
        if labels.len() < k {
            return Err(Error::validation(format!(
                "{} items cannot fill {k} folds",
                labels.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut assignment = vec![0; labels.len()];
        let mut dealt = 0usize;
        for class in [true, false] {
            let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
            idx.shuffle(&mut rng);
            for i in idx {
                assignment[i] = dealt % k;
                dealt += 1;
            }
        }
        Ok(Self {
            k,
            seed,
            assignment,
        })
    }

    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == fold)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] != fold)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    /// `per_fold[f][j]` is report `j` of fold `f`.
    pub per_fold: Vec<Vec<MetricsReport>>,
    pub mean: Vec<MetricsReport>,
}

/// Runs `evaluate_fold(fold, train, test)` for each fold and averages the
/// returned reports position-wise.
///
/// `labels` are the training labels of the planned items; a fold whose
/// training portion lacks a class is rejected before anything is trained.
pub fn crossvalidate<F>(labels: &[bool], plan: &FoldPlan, mut evaluate_fold: F) -> Result<CvReport>
where
    F: FnMut(usize, &[usize], &[usize]) -> Result<Vec<MetricsReport>>,
{
    if labels.len() != plan.assignment.len() {
        return Err(Error::DimensionMismatch {
            expected: plan.assignment.len(),
            actual: labels.len(),
        });
    }
    let folds: Vec<(Vec<usize>, Vec<usize>)> = (0..plan.k)
        .map(|f| (plan.train_indices(f), plan.test_indices(f)))
        .collect();
    for (f, (train, _)) in folds.iter().enumerate() {
        let pos = train.iter().filter(|&&i| labels[i]).count();
        if pos == 0 || pos == train.len() {
            return Err(Error::validation(format!(
                "fold {f}: training portion has a single class"
            )));
        }
    }
    let mut per_fold = Vec::with_capacity(plan.k);
    for (f, (train, test)) in folds.iter().enumerate() {
        per_fold.push(evaluate_fold(f, train, test)?);
    }
    let width = per_fold[0].len();
    if per_fold.iter().any(|r| r.len() != width) {
        return Err(Error::validation("folds returned different report counts"));
    }
    let mean = (0..width)
        .map(|j| {
            let column: Vec<MetricsReport> = per_fold.iter().map(|r| r[j].clone()).collect();
            MetricsReport::average(&column)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CvReport { per_fold, mean })
}

/// Seeded stratified split; each class contributes `round(fraction * n)`
/// items to training. Both index lists are ascending.
pub fn split_train_test(
    labels: &[bool],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if labels.len() < 10 {
        return Err(Error::validation(format!(
            "split needs at least 10 items, got {}",
            labels.len()
        )));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::validation(format!(
            "train fraction {train_fraction} outside (0, 1)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for class in [true, false] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        let n_train = (idx.len() as f64 * train_fraction).round() as usize;
        train.extend_from_slice(&idx[..n_train]);
        test.extend_from_slice(&idx[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn split_70_30(labels: &[bool], seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    split_train_test(labels, 0.7, seed)
}
