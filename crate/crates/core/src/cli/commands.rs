use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use super::tables::{num, pct, recall_label, Table};
use super::{derive_seed, occurrences_to_jsonl, read_occurrences, Outputs, RunConfig};
use crate::baselines::{predict_score, train_logistic, train_svm, LinearConfig, LinearModel};
use crate::corpus::{generate_synthetic, SynthSpec};
use crate::error::{Error, Result};
use crate::evaluate::{
    crossvalidate, curves, score_documents, split_70_30, Curves, FoldPlan, Level, MetricsReport,
    ScoredItem, ScoredOccurrence, RECALL_TARGETS,
};
use crate::keyword::{derive_labels, extract_corpus, KeywordPattern, Occurrence};
use crate::neural::{grid_search, train, CnnConfig, GridOutcome, OccurrenceModel};
use crate::select::{score_candidates, select, ScoredCandidate};
use crate::vectorize::{
    bow_vectorize, encode_window, fit_vocabulary, BowFeatures, EncodedWindow, Vocabulary,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Cnn,
    Logistic,
    Svm,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Cnn, Algorithm::Logistic, Algorithm::Svm];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Cnn => "cnn",
            Algorithm::Logistic => "logistic",
            Algorithm::Svm => "svm",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cnn" => Ok(Algorithm::Cnn),
            "logistic" => Ok(Algorithm::Logistic),
            "svm" => Ok(Algorithm::Svm),
            other => Err(Error::Config(format!("unknown algorithm {other:?}"))),
        }
    }
}

/// Files written by a command plus progress lines for the operator.
#[derive(Debug, Default)]
pub struct CommandOutcome {
    pub written: Vec<PathBuf>,
    pub log: Vec<String>,
}

fn finish(outputs: Outputs, log: Vec<String>) -> Result<CommandOutcome> {
    Ok(CommandOutcome {
        written: outputs.commit()?,
        log,
    })
}

fn in_keyword(kw: &KeywordPattern, e: Error) -> Error {
    match e {
        Error::Validation(m) => Error::Validation(format!("keyword {kw}: {m}")),
        other => other,
    }
}

fn load_keyword_occurrences(
    cfg: &RunConfig,
    kw: &KeywordPattern,
    selected: bool,
) -> Result<Vec<Occurrence>> {
    let path = if selected {
        cfg.selected_path(kw)
    } else {
        cfg.occurrence_path(kw)
    };
    if !path.exists() {
        let step = if selected { "select" } else { "extract" };
        return Err(Error::Config(format!(
            "{} not found; run `{step}` first",
            path.display()
        )));
    }
    read_occurrences(&path)
}

pub fn cmd_synth(spec: &SynthSpec, out: &Path) -> Result<CommandOutcome> {
    spec.validate()?;
    let corpus = generate_synthetic(spec)?;
    let mut bytes = Vec::new();
    for d in &corpus.documents {
        serde_json::to_writer(&mut bytes, d).map_err(|e| Error::validation(e.to_string()))?;
        bytes.push(b'\n');
    }
    let mut outputs = Outputs::default();
    outputs.add(out.to_path_buf(), bytes);
    let log = vec![format!(
        "{} documents, {} privileged",
        corpus.len(),
        corpus.privileged_count()
    )];
    finish(outputs, log)
}

fn distinct_documents(occ: &[Occurrence]) -> (usize, usize) {
    let mut seen = HashSet::new();
    let mut privileged = 0;
    for o in occ {
        if seen.insert(o.doc_id.as_str()) && o.label.is_positive() {
            privileged += 1;
        }
    }
    (seen.len(), privileged)
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn cmd_extract(cfg: &RunConfig) -> Result<CommandOutcome> {
    cfg.validate()?;
    let corpus = cfg.load_corpus()?;
    let raw = extract_corpus(&corpus, &cfg.keywords, cfg.window_radius)?;
    let per_keyword: Vec<(Vec<Occurrence>, usize)> = raw
        .into_par_iter()
        .map(|occ| {
            let before = occ.len();
            Ok((
                derive_labels(&corpus, occ, cfg.drop_footer_in_privileged)?,
                before,
            ))
        })
        .collect::<Result<_>>()?;

    let mut outputs = Outputs::default();
    let mut summary = Table::new([
        "keyword",
        "occurrences",
        "positive_occurrences",
        "pct_positive_occurrences",
        "documents",
        "privileged_documents",
        "pct_privileged_documents",
        "footer_occurrences_removed",
    ]);
    for (kw, (occ, before)) in cfg.keywords.iter().zip(&per_keyword) {
        outputs.add(cfg.occurrence_path(kw), occurrences_to_jsonl(occ)?);
        let pos = occ.iter().filter(|o| o.label.is_positive()).count();
        let (docs, priv_docs) = distinct_documents(occ);
        summary.push(vec![
            kw.to_string(),
            occ.len().to_string(),
            pos.to_string(),
            pct(ratio(pos, occ.len())),
            docs.to_string(),
            priv_docs.to_string(),
            pct(ratio(priv_docs, docs)),
            (before - occ.len()).to_string(),
        ]);
    }
    outputs.add(
        cfg.output_dir.join("extract_summary.tsv"),
        summary.to_tsv().into_bytes(),
    );
    let log = vec![format!(
        "{} documents, {} keywords extracted",
        corpus.len(),
        cfg.keywords.len()
    )];
    finish(outputs, log)
}

/// Documents in order of first occurrence, with their labels, and the
/// document index of every occurrence.
fn group_documents(occ: &[Occurrence]) -> (Vec<bool>, Vec<usize>) {
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut labels = Vec::new();
    let occ_doc = occ
        .iter()
        .map(|o| {
            *index.entry(o.doc_id.as_str()).or_insert_with(|| {
                labels.push(o.label.is_positive());
                labels.len() - 1
            })
        })
        .collect();
    (labels, occ_doc)
}

fn pick<T: Clone>(items: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| items[i].clone()).collect()
}

fn split_by_label(occ: &[Occurrence]) -> (Vec<usize>, Vec<usize>) {
    (0..occ.len()).partition(|&i| !occ[i].label.is_positive())
}

fn curve_tables(c: &Curves) -> (Table, Table) {
    let mut pr = Table::new(["threshold", "recall", "precision"]);
    pr.extend(
        c.pr.iter()
            .map(|p| vec![num(p.threshold), num(p.recall), num(p.precision)]),
    );
    let mut roc = Table::new(["threshold", "fpr", "tpr"]);
    roc.extend(
        c.roc
            .iter()
            .map(|p| vec![num(p.threshold), num(p.fpr), num(p.tpr)]),
    );
    (pr, roc)
}

fn add_curves(outputs: &mut Outputs, dir: &Path, stem: &str, c: &Curves) {
    let (pr, roc) = curve_tables(c);
    outputs.add(dir.join(format!("{stem}.pr.tsv")), pr.to_tsv().into_bytes());
    outputs.add(
        dir.join(format!("{stem}.roc.tsv")),
        roc.to_tsv().into_bytes(),
    );
}

/// Rows of the cutoff sweep table and the test curves behind them.
type SweepResult = (Vec<Vec<String>>, Vec<(String, Curves)>);

struct SelectResult {
    scores_file: Vec<u8>,
    selected_file: Vec<u8>,
    rows: Vec<Vec<String>>,
    sweep: Option<SweepResult>,
    log: String,
}

fn select_keyword(cfg: &RunConfig, kw: &KeywordPattern) -> Result<SelectResult> {
    let occ = load_keyword_occurrences(cfg, kw, false)?;
    let (neg_idx, cand_idx) = split_by_label(&occ);
    let scores: Vec<f64> = if cand_idx.is_empty() {
        Vec::new()
    } else {
        let features = BowFeatures::fit(&occ, cfg.bow_features)?;
        let vectors = bow_vectorize(&occ, &features);
        score_candidates(
            &pick(&vectors, &cand_idx),
            &pick(&vectors, &neg_idx),
            &cfg.selection,
        )
        .map_err(|e| in_keyword(kw, e))?
    };

    let mut scores_file = Vec::new();
    for (&i, &s) in cand_idx.iter().zip(&scores) {
        let line = ScoredCandidate::new(occ[i].key(), s, cfg.selection.cutoff);
        serde_json::to_writer(&mut scores_file, &line)
            .map_err(|e| Error::validation(e.to_string()))?;
        scores_file.push(b'\n');
    }
    let chosen = select(&scores, cfg.selection.cutoff);
    let mut keep = vec![false; occ.len()];
    for &i in &neg_idx {
        keep[i] = true;
    }
    for &j in &chosen.selected {
        keep[cand_idx[j]] = true;
    }
    let kept: Vec<Occurrence> = occ
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(o, _)| o.clone())
        .collect();

    let mut rows = Vec::new();
    for &c in &cfg.cutoff_sweep {
        let s = select(&scores, c);
        rows.push(vec![
            kw.to_string(),
            cfg.selection.approach.to_string(),
            num(c),
            cand_idx.len().to_string(),
            s.selected.len().to_string(),
            pct(s.fraction),
            pct(if cand_idx.is_empty() {
                0.0
            } else {
                1.0 - s.fraction
            }),
        ]);
    }
    let sweep = selection_sweep(cfg, kw, &occ)?;
    Ok(SelectResult {
        scores_file,
        selected_file: occurrences_to_jsonl(&kept)?,
        rows,
        log: format!(
            "{kw}: kept {} of {} candidate positives at cutoff {}",
            chosen.selected.len(),
            cand_idx.len(),
            cfg.selection.cutoff
        ),
        sweep,
    })
}

fn linear_config(cfg: &RunConfig, tag: &str) -> LinearConfig {
    LinearConfig {
        seed: derive_seed(cfg.seed, tag),
        ..cfg.linear.clone()
    }
}

/// Trains an SVM on a 70/30 document split for each cutoff of the sweep,
/// selecting positives on the training portion only, and scores the
/// untouched test portion. `None` when the keyword is too small to split.
fn selection_sweep(
    cfg: &RunConfig,
    kw: &KeywordPattern,
    occ: &[Occurrence],
) -> Result<Option<SweepResult>> {
    let (doc_labels, occ_doc) = group_documents(occ);
    let n_pos = doc_labels.iter().filter(|&&l| l).count();
    if doc_labels.len() < 10 || n_pos < 2 || n_pos + 2 > doc_labels.len() {
        return Ok(None);
    }
    let (train_docs, _) = split_70_30(&doc_labels, derive_seed(cfg.seed, &format!("sweep/{kw}")))?;
    let mut in_train = vec![false; doc_labels.len()];
    for d in train_docs {
        in_train[d] = true;
    }
    let (train_idx, test_idx): (Vec<usize>, Vec<usize>) =
        (0..occ.len()).partition(|&i| in_train[occ_doc[i]]);
    let train_occ = pick(occ, &train_idx);
    let test_occ = pick(occ, &test_idx);
    let test_pos = test_occ.iter().filter(|o| o.label.is_positive()).count();
    let (neg_idx, cand_idx) = split_by_label(&train_occ);
    if test_pos == 0
        || test_pos == test_occ.len()
        || neg_idx.len() < cfg.selection.k
        || cand_idx.len() <= cfg.selection.k
    {
        return Ok(None);
    }
    let features = BowFeatures::fit(&train_occ, cfg.bow_features)?;
    let train_vecs = bow_vectorize(&train_occ, &features);
    let test_vecs = bow_vectorize(&test_occ, &features);
    let scores: Vec<f64> = score_candidates(
        &pick(&train_vecs, &cand_idx),
        &pick(&train_vecs, &neg_idx),
        &cfg.selection,
    )
    .map_err(|e| in_keyword(kw, e))?;

    let mut variants: Vec<(String, Vec<usize>)> =
        vec![("all".into(), (0..cand_idx.len()).collect())];
    for &c in &cfg.cutoff_sweep {
        variants.push((format!("cutoff{c:.2}"), select(&scores, c).selected));
    }
    let mut rows = Vec::new();
    let mut curve_sets = Vec::new();
    for (name, chosen) in variants {
        let mut idx: Vec<usize> = neg_idx.clone();
        idx.extend(chosen.iter().map(|&j| cand_idx[j]));
        idx.sort_unstable();
        if chosen.is_empty() {
            rows.push(vec![
                kw.to_string(),
                cfg.selection.approach.to_string(),
                name,
                "0".into(),
                num(f64::NAN),
                num(f64::NAN),
                num(f64::NAN),
                num(f64::NAN),
            ]);
            continue;
        }
        let labels: Vec<bool> = idx
            .iter()
            .map(|&i| train_occ[i].label.is_positive())
            .collect();
        let model: LinearModel<f64> = train_svm(
            &pick(&train_vecs, &idx),
            &labels,
            &linear_config(cfg, &format!("sweep/svm/{kw}")),
        )?;
        let items: Vec<ScoredItem<f64>> = test_vecs
            .iter()
            .zip(&test_occ)
            .map(|(v, o)| {
                Ok(ScoredItem::new(
                    predict_score(&model, v)?,
                    o.label.is_positive(),
                ))
            })
            .collect::<Result<_>>()?;
        let neg_scores: Vec<f64> = items
            .iter()
            .filter(|i| !i.positive)
            .map(|i| i.score)
            .collect();
        let report = MetricsReport::compute(Level::Occurrence, &items, &[RECALL_TARGETS[0]])?;
        rows.push(vec![
            kw.to_string(),
            cfg.selection.approach.to_string(),
            name.clone(),
            chosen.len().to_string(),
            num(neg_scores.iter().sum::<f64>() / neg_scores.len() as f64),
            num(report.cuts[0].precision),
            num(report.roc_auc),
            num(report.pr_area),
        ]);
        curve_sets.push((name, report.curves));
    }
    Ok(Some((rows, curve_sets)))
}

pub fn cmd_select(cfg: &RunConfig) -> Result<CommandOutcome> {
    cfg.validate()?;
    let results: Vec<SelectResult> = cfg
        .keywords
        .par_iter()
        .map(|kw| select_keyword(cfg, kw))
        .collect::<Result<_>>()?;

    let approach = cfg.selection.approach;
    let dir = cfg.output_dir.join("select");
    let mut outputs = Outputs::default();
    let mut report = Table::new([
        "keyword",
        "approach",
        "cutoff",
        "candidates",
        "selected",
        "pct_selected",
        "pct_excluded",
    ]);
    let mut sweep = Table::new([
        "keyword",
        "approach",
        "training_positives",
        "positives_used",
        "mean_negative_score",
        "precision_at_75",
        "roc_auc",
        "pr_area",
    ]);
    let mut log = Vec::new();
    for (kw, r) in cfg.keywords.iter().zip(results) {
        outputs.add(
            dir.join(format!("{}.{approach}.scores.jsonl", kw.file_stem())),
            r.scores_file,
        );
        outputs.add(cfg.selected_path(kw), r.selected_file);
        report.extend(r.rows);
        log.push(r.log);
        match r.sweep {
            Some((rows, curve_sets)) => {
                sweep.extend(rows);
                for (name, c) in curve_sets {
                    let stem = format!("{}.{approach}.{name}", kw.file_stem());
                    add_curves(&mut outputs, &dir.join("curves"), &stem, &c);
                }
            }
            None => log.push(format!("{kw}: too few documents for the cutoff sweep")),
        }
    }
    outputs.add(
        cfg.output_dir.join(format!("select_report_{approach}.tsv")),
        report.to_tsv().into_bytes(),
    );
    outputs.add(
        cfg.output_dir.join(format!("select_sweep_{approach}.tsv")),
        sweep.to_tsv().into_bytes(),
    );
    finish(outputs, log)
}

/// A trained model together with the feature space it was fitted on.
enum Trained {
    Cnn(OccurrenceModel<f32>, Vocabulary),
    Linear(LinearModel<f64>, BowFeatures),
}

impl Trained {
    fn score(&self, occ: &[Occurrence], seq_len: usize) -> Result<Vec<f64>> {
        match self {
            Trained::Cnn(model, vocab) => {
                let windows = encode_all(occ, vocab, seq_len)?;
                Ok(model
                    .score_all(&windows)?
                    .into_iter()
                    .map(f64::from)
                    .collect())
            }
            Trained::Linear(model, features) => bow_vectorize(occ, features)
                .iter()
                .map(|v| predict_score(model, v))
                .collect(),
        }
    }
}

fn encode_all(
    occ: &[Occurrence],
    vocab: &Vocabulary,
    seq_len: usize,
) -> Result<Vec<EncodedWindow>> {
    occ.iter()
        .map(|o| encode_window(o, vocab, seq_len))
        .collect()
}

fn check_two_classes(occ: &[Occurrence]) -> Result<()> {
    let pos = occ.iter().filter(|o| o.label.is_positive()).count();
    if occ.is_empty() || pos == 0 || pos == occ.len() {
        return Err(Error::validation(format!(
            "training occurrences have a single class ({pos} positive of {})",
            occ.len()
        )));
    }
    Ok(())
}

/// Fits `algorithm` on `occ`. Seeds derive from `tag`.
fn fit(
    cfg: &RunConfig,
    algorithm: Algorithm,
    occ: &[Occurrence],
    tag: &str,
) -> Result<(Trained, Option<GridOutcome>)> {
    check_two_classes(occ)?;
    match algorithm {
        Algorithm::Cnn => {
            let vocab = fit_vocabulary(occ, cfg.vocab_size)?;
            let windows = encode_all(occ, &vocab, cfg.seq_len())?;
            let mut config = CnnConfig {
                seed: derive_seed(cfg.seed, &format!("cnn/{tag}")),
                ..cfg.cnn.clone()
            };
            let mut outcome = None;
            if cfg.grid_search {
                let labels: Vec<bool> = windows.iter().map(EncodedWindow::positive).collect();
                let (tr, va) = crate::evaluate::split_train_test(
                    &labels,
                    0.8,
                    derive_seed(cfg.seed, &format!("grid/{tag}")),
                )?;
                let g = grid_search::<f32>(
                    &cfg.grid,
                    &config,
                    &vocab,
                    &pick(&windows, &tr),
                    &pick(&windows, &va),
                )?;
                config.dropout_rate = g.best.dropout_rate;
                config.epochs = g.best.epochs;
                outcome = Some(g);
            }
            let model = train::<f32>(&config, &vocab, &windows)?;
            Ok((Trained::Cnn(model, vocab), outcome))
        }
        Algorithm::Logistic | Algorithm::Svm => {
            let features = BowFeatures::fit(occ, cfg.bow_features)?;
            let vectors = bow_vectorize(occ, &features);
            let labels: Vec<bool> = occ.iter().map(|o| o.label.is_positive()).collect();
            let config = linear_config(cfg, &format!("{algorithm}/{tag}"));
            let model = if algorithm == Algorithm::Logistic {
                train_logistic(&vectors, &labels, &config)?
            } else {
                train_svm(&vectors, &labels, &config)?
            };
            Ok((Trained::Linear(model, features), None))
        }
    }
}

fn grid_table(outcome: &GridOutcome) -> Table {
    let mut t = Table::new(["dropout_rate", "epochs", "precision", "chosen"]);
    for c in &outcome.cells {
        let chosen = c.dropout_rate == outcome.best.dropout_rate && c.epochs == outcome.best.epochs;
        t.push(vec![
            num(c.dropout_rate),
            c.epochs.to_string(),
            num(c.precision),
            (if chosen { "yes" } else { "no" }).into(),
        ]);
    }
    t
}

pub fn cmd_train(cfg: &RunConfig, algorithm: Algorithm) -> Result<CommandOutcome> {
    cfg.validate()?;
    let trained: Vec<Option<(Trained, Option<GridOutcome>)>> = cfg
        .keywords
        .par_iter()
        .map(|kw| {
            let occ = load_keyword_occurrences(cfg, kw, cfg.train_on_selected)?;
            if occ.is_empty() {
                return Ok(None);
            }
            fit(cfg, algorithm, &occ, &format!("train/{kw}"))
                .map(Some)
                .map_err(|e| in_keyword(kw, e))
        })
        .collect::<Result<_>>()?;

    let dir = cfg.model_dir();
    let mut outputs = Outputs::default();
    let mut log = Vec::new();
    for (kw, t) in cfg.keywords.iter().zip(trained) {
        let stem = kw.file_stem();
        let Some((model, grid)) = t else {
            log.push(format!("{kw}: no occurrences, skipped"));
            continue;
        };
        match model {
            Trained::Cnn(m, vocab) => {
                outputs.add(dir.join(format!("{stem}.cnn.model")), m.to_bytes()?);
                outputs.add(
                    dir.join(format!("{stem}.vocab.txt")),
                    vocab.to_text().into_bytes(),
                );
            }
            Trained::Linear(m, features) => {
                outputs.add(dir.join(format!("{stem}.{algorithm}.model")), m.to_bytes()?);
                outputs.add(
                    dir.join(format!("{stem}.bow.txt")),
                    features.vocabulary().to_text().into_bytes(),
                );
            }
        }
        if let Some(g) = grid {
            log.push(format!(
                "{kw}: grid search chose dropout {} and {} epochs (precision {:.4} at recall {})",
                g.best.dropout_rate, g.best.epochs, g.best.precision, cfg.grid.selection_recall
            ));
            outputs.add(
                dir.join(format!("{stem}.grid.tsv")),
                grid_table(&g).to_tsv().into_bytes(),
            );
        }
        log.push(format!("{kw}: trained {algorithm}"));
    }
    finish(outputs, log)
}

struct EvalResult {
    cv: crate::evaluate::CvReport,
    pooled: [Vec<ScoredItem<f64>>; 2],
}

fn evaluate_keyword(
    cfg: &RunConfig,
    kw: &KeywordPattern,
    algorithm: Algorithm,
    occ: &[Occurrence],
    selected: Option<&HashSet<String>>,
) -> Result<EvalResult> {
    let (doc_labels, occ_doc) = group_documents(occ);
    let plan = FoldPlan::stratified(
        &doc_labels,
        cfg.folds,
        derive_seed(cfg.seed, &format!("folds/{kw}")),
    )?;
    let mut pooled: [Vec<ScoredItem<f64>>; 2] = [Vec::new(), Vec::new()];
    let cv = crossvalidate(&doc_labels, &plan, |fold, train_docs, test_docs| {
        let mut role = vec![0u8; doc_labels.len()];
        for &d in train_docs {
            role[d] = 1;
        }
        for &d in test_docs {
            role[d] = 2;
        }
        let train_occ: Vec<Occurrence> = occ
            .iter()
            .zip(&occ_doc)
            .filter(|(o, &d)| {
                role[d] == 1
                    && selected.is_none_or(|s| !o.label.is_positive() || s.contains(&o.key()))
            })
            .map(|(o, _)| o.clone())
            .collect();
        let test_occ: Vec<Occurrence> = occ
            .iter()
            .zip(&occ_doc)
            .filter(|(_, &d)| role[d] == 2)
            .map(|(o, _)| o.clone())
            .collect();
        let (model, _) = fit(cfg, algorithm, &train_occ, &format!("eval/{kw}/fold{fold}"))
            .map_err(|e| Error::validation(format!("fold {fold}: {e}")))?;
        let scores = model.score(&test_occ, cfg.seq_len())?;
        let occ_items: Vec<ScoredItem<f64>> = scores
            .iter()
            .zip(&test_occ)
            .map(|(&s, o)| ScoredItem::new(s, o.label.is_positive()))
            .collect();
        let scored: Vec<ScoredOccurrence<f64>> = scores
            .iter()
            .zip(&test_occ)
            .map(|(&s, o)| ScoredOccurrence {
                doc_id: o.doc_id.clone(),
                score: s,
                doc_privileged: o.label.is_positive(),
            })
            .collect();
        let doc_items: Vec<ScoredItem<f64>> =
            score_documents(&scored)?.iter().map(|d| d.item()).collect();
        let reports = vec![
            MetricsReport::compute(Level::Occurrence, &occ_items, &RECALL_TARGETS)
                .map_err(|e| Error::validation(format!("fold {fold}: {e}")))?,
            MetricsReport::compute(Level::Document, &doc_items, &RECALL_TARGETS)
                .map_err(|e| Error::validation(format!("fold {fold}: {e}")))?,
        ];
        pooled[0].extend(occ_items);
        pooled[1].extend(doc_items);
        Ok(reports)
    })?;
    Ok(EvalResult { cv, pooled })
}

fn precision_header() -> Vec<String> {
    let mut h: Vec<String> = ["keyword", "algorithm", "fold", "items", "positives"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend(
        RECALL_TARGETS
            .iter()
            .map(|&t| format!("precision_at_{}", recall_label(t))),
    );
    h.extend(["keyword_search_precision", "roc_auc", "pr_area"].map(String::from));
    h
}

fn precision_row(
    kw: &KeywordPattern,
    algorithm: Algorithm,
    fold: &str,
    r: &MetricsReport,
) -> Vec<String> {
    let mut row = vec![
        kw.to_string(),
        algorithm.to_string(),
        fold.to_string(),
        r.n_items.to_string(),
        r.n_positive.to_string(),
    ];
    row.extend(r.cuts.iter().map(|c| num(c.precision)));
    row.extend([
        num(r.keyword_baseline_precision),
        num(r.roc_auc),
        num(r.pr_area),
    ]);
    row
}

fn savings_row(
    kw: &KeywordPattern,
    algorithm: Algorithm,
    fold: &str,
    r: &MetricsReport,
) -> Vec<String> {
    let mut row = vec![
        kw.to_string(),
        algorithm.to_string(),
        r.level.to_string(),
        fold.to_string(),
    ];
    row.extend(r.cuts.iter().map(|c| num(c.savings())));
    row
}

pub fn cmd_evaluate(cfg: &RunConfig, algorithms: &[Algorithm]) -> Result<CommandOutcome> {
    cfg.validate()?;
    if algorithms.is_empty() {
        return Err(Error::Config("no algorithms to evaluate".into()));
    }
    let mut algs = algorithms.to_vec();
    algs.dedup();
    let data: Vec<(Vec<Occurrence>, Option<HashSet<String>>)> = cfg
        .keywords
        .iter()
        .map(|kw| {
            let occ = load_keyword_occurrences(cfg, kw, false)?;
            let selected = if cfg.train_on_selected {
                Some(
                    load_keyword_occurrences(cfg, kw, true)?
                        .iter()
                        .map(Occurrence::key)
                        .collect(),
                )
            } else {
                None
            };
            Ok((occ, selected))
        })
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, Algorithm)> = (0..cfg.keywords.len())
        .filter(|&k| !data[k].0.is_empty())
        .flat_map(|k| algs.iter().map(move |&a| (k, a)))
        .collect();
    let results: Vec<EvalResult> = jobs
        .par_iter()
        .map(|&(k, a)| {
            let kw = &cfg.keywords[k];
            evaluate_keyword(cfg, kw, a, &data[k].0, data[k].1.as_ref())
                .map_err(|e| in_keyword(kw, e))
        })
        .collect::<Result<_>>()?;

    let dir = cfg.report_dir();
    let mut tables = [
        Table::new(precision_header()),
        Table::new(precision_header()),
    ];
    let mut savings_header: Vec<String> = ["keyword", "algorithm", "level", "fold"]
        .map(String::from)
        .to_vec();
    savings_header.extend(
        RECALL_TARGETS
            .iter()
            .map(|&t| format!("savings_at_{}", recall_label(t))),
    );
    let mut savings = Table::new(savings_header);
    let mut outputs = Outputs::default();
    let mut log = Vec::new();
    for (k, kw) in cfg.keywords.iter().enumerate() {
        if data[k].0.is_empty() {
            log.push(format!("{kw}: no occurrences, skipped"));
        }
    }
    for (&(k, a), r) in jobs.iter().zip(&results) {
        let kw = &cfg.keywords[k];
        for level in 0..2 {
            for (f, fold) in r.cv.per_fold.iter().enumerate() {
                tables[level].push(precision_row(kw, a, &f.to_string(), &fold[level]));
                savings.push(savings_row(kw, a, &f.to_string(), &fold[level]));
            }
            tables[level].push(precision_row(kw, a, "mean", &r.cv.mean[level]));
            savings.push(savings_row(kw, a, "mean", &r.cv.mean[level]));
            let level_name = if level == 0 {
                Level::Occurrence
            } else {
                Level::Document
            };
            let c = curves(&r.pooled[level])?;
            add_curves(
                &mut outputs,
                &dir.join("curves"),
                &format!("{}.{a}.{level_name}", kw.file_stem()),
                &c,
            );
        }
        let m = &r.cv.mean[1];
        log.push(format!(
            "{kw} {a}: document precision at 75% recall {:.4} vs keyword search {:.4}",
            m.cuts[0].precision, m.keyword_baseline_precision
        ));
    }
    let [occ_table, doc_table] = tables;
    outputs.add(
        dir.join("precision_occurrence.tsv"),
        occ_table.to_tsv().into_bytes(),
    );
    outputs.add(
        dir.join("precision_document.tsv"),
        doc_table.to_tsv().into_bytes(),
    );
    outputs.add(dir.join("savings.tsv"), savings.to_tsv().into_bytes());
    finish(outputs, log)
}

fn read_table(path: &Path) -> Result<Option<Table>> {
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Table::parse_tsv(&text).map(Some).map_err(|e| match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

pub fn cmd_report(cfg: &RunConfig) -> Result<CommandOutcome> {
    cfg.validate()?;
    let out = &cfg.output_dir;
    let mut sections: Vec<(String, PathBuf)> = vec![(
        "Keyword occurrences".into(),
        out.join("extract_summary.tsv"),
    )];
    for a in ["one", "two"] {
        sections.push((
            format!("Selected candidate positives, approach {a}"),
            out.join(format!("select_report_{a}.tsv")),
        ));
        sections.push((
            format!("SVM trained on selected positives, approach {a} (scores are logistic-squashed margins)"),
            out.join(format!("select_sweep_{a}.tsv")),
        ));
    }
    for kw in &cfg.keywords {
        sections.push((
            format!("Grid search, {kw}"),
            cfg.model_dir().join(format!("{}.grid.tsv", kw.file_stem())),
        ));
    }
    sections.push((
        "Occurrence-level precision".into(),
        cfg.report_dir().join("precision_occurrence.tsv"),
    ));
    sections.push((
        "Document-level precision".into(),
        cfg.report_dir().join("precision_document.tsv"),
    ));
    sections.push((
        "Review savings".into(),
        cfg.report_dir().join("savings.tsv"),
    ));

    let mut md = String::from("# privsift report\n");
    let mut found = 0;
    for (title, path) in &sections {
        if let Some(t) = read_table(path)? {
            found += 1;
            md.push_str(&format!("\n## {title}\n\n"));
            md.push_str(&t.to_markdown());
        }
    }
    if found == 0 {
        return Err(Error::Config(format!(
            "no result tables under {}",
            out.display()
        )));
    }
    let mut outputs = Outputs::default();
    outputs.add(out.join("report.md"), md.into_bytes());
    finish(outputs, vec![format!("{found} tables rendered")])
}
