mod common;

use common::*;
use privsift::corpus::Document;
use privsift::evaluate::{
    crossvalidate, curves, precision_at_recall, score_documents, FoldPlan, Level, MetricsReport,
    ScoredItem, ScoredOccurrence, RECALL_TARGETS,
};
use privsift::keyword::{extract_occurrences, KeywordPattern};
use privsift::select::{score_candidates_v1, score_candidates_v2, select};
use privsift::vectorize::{cosine, encode_tokens, BowVector, Vocabulary, PAD_INDEX};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const WORDS: [&str; 8] = [
    "legal",
    "legally",
    "privileged",
    "privy",
    "memo",
    "the",
    "counsel",
    "x1",
];

fn text_strategy() -> impl Strategy<Value = String> {
    prop::collection::vec(
        (
            prop::sample::select(WORDS.to_vec()),
            prop::sample::select(vec![" ", ", ", ".\n", "--"]),
        ),
        0..60,
    )
    .prop_map(|parts| parts.into_iter().map(|(w, s)| format!("{w}{s}")).collect())
}

fn pattern_strategy() -> impl Strategy<Value = KeywordPattern> {
    prop::sample::select(vec!["legal", "legal*", "privi*", "counsel", "memo*"])
        .prop_map(|s| s.parse().unwrap())
}

fn scored_items(max: usize) -> impl Strategy<Value = Vec<ScoredItem<f64>>> {
    prop::collection::vec((0u8..12, any::<bool>()), 1..max)
        .prop_map(|v| {
            v.into_iter()
                .map(|(s, p)| ScoredItem::new(s as f64 / 11.0, p))
                .collect()
        })
        .prop_filter("needs both classes", |v: &Vec<ScoredItem<f64>>| {
            v.iter().any(|i| i.positive) && v.iter().any(|i| !i.positive)
        })
}

fn bow_strategy(dim: usize) -> impl Strategy<Value = BowVector> {
    prop::collection::vec((0..dim as u32, 1u32..4), 0..6)
        .prop_map(move |p| BowVector::from_pairs(p, dim).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn windows_are_centered_and_bounded(text in text_strategy(), pattern in pattern_strategy(), radius in 1usize..6) {
        let doc = Document { id: "d".into(), text: text.clone(), privileged: false, footer_start: None };
        let occ = extract_occurrences(&doc, &pattern, radius).unwrap();
        let hits = brute_hits(&text, &pattern);
        prop_assert_eq!(occ.iter().map(|o| o.center_index).collect::<Vec<_>>(), hits.clone());
        let n_tokens = privsift::keyword::tokenize(&text).len();
        for o in &occ {
            let lo = o.center_index.saturating_sub(radius);
            let hi = (o.center_index + radius).min(n_tokens - 1);
            prop_assert_eq!(o.window.len(), hi - lo + 1);
            prop_assert!(o.window.len() <= 2 * radius + 1);
            prop_assert!(pattern.matches(&o.window[o.center_index - lo]));
        }
    }

    #[test]
    fn encoded_windows_have_fixed_length(tokens in prop::collection::vec(prop::sample::select(WORDS.to_vec()), 0..9), len in 9usize..14) {
        let tokens: Vec<String> = tokens.into_iter().map(String::from).collect();
        let vocab = Vocabulary::fit([&tokens], 100).unwrap();
        let enc = encode_tokens(&tokens, &vocab, len).unwrap();
        prop_assert_eq!(enc.len(), len);
        let pad = len - tokens.len();
        prop_assert!(enc[..pad].iter().all(|&i| i == PAD_INDEX));
        prop_assert!(enc[pad..].iter().all(|&i| i >= 2));
    }

    #[test]
    fn vocabulary_ignores_window_order(windows in prop::collection::vec(prop::collection::vec(prop::sample::select(WORDS.to_vec()), 0..8), 1..10), seed in any::<u64>(), max in 1usize..10) {
        let windows: Vec<Vec<String>> = windows.into_iter().map(|w| w.into_iter().map(String::from).collect()).collect();
        let mut shuffled = windows.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let a = Vocabulary::fit(&windows, max).unwrap();
        let b = Vocabulary::fit(&shuffled, max).unwrap();
        prop_assert_eq!(a.tokens(), b.tokens());
        prop_assert_eq!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn cosine_is_symmetric_and_bounded(a in bow_strategy(6), b in bow_strategy(6)) {
        let ab: f64 = cosine(&a, &b).unwrap();
        let ba: f64 = cosine(&b, &a).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!((0.0..=1.0).contains(&ab));
        if !a.is_zero() {
            prop_assert_eq!(cosine::<f64>(&a, &a).unwrap(), 1.0);
        }
    }

    #[test]
    fn knn_scores_match_brute_force(
        cands in prop::collection::vec(bow_strategy(5), 2..12),
        negs in prop::collection::vec(bow_strategy(5), 1..12),
        k in 1usize..4,
    ) {
        if negs.len() >= k {
            let v1: Vec<f64> = score_candidates_v1(&cands, &negs, k).unwrap();
            prop_assert_eq!(v1, brute_v1(&cands, &negs, k));
            if cands.len() > k {
                let v2: Vec<f64> = score_candidates_v2(&cands, &negs, k).unwrap();
                let b2 = brute_v2(&cands, &negs, k);
                prop_assert_eq!(v2.len(), b2.len());
                for (x, y) in v2.iter().zip(&b2) {
                    prop_assert_eq!(x.to_bits(), y.to_bits());
                }
            }
        } else {
            prop_assert!(score_candidates_v1::<f64>(&cands, &negs, k).is_err());
        }
    }

    #[test]
    fn selection_is_monotone_in_cutoff(scores in prop::collection::vec(0.0f64..=1.0, 0..40), c1 in 0.01f64..1.0, c2 in 0.01f64..1.0) {
        let (lo, hi) = if c1 <= c2 { (c1, c2) } else { (c2, c1) };
        let a = select(&scores, lo);
        let b = select(&scores, hi);
        prop_assert!(a.fraction <= b.fraction);
        prop_assert!(a.selected.iter().all(|i| b.selected.contains(i)));
        let all = select(&scores, 1.0);
        prop_assert_eq!(all.selected.len(), scores.len());
    }

    #[test]
    fn precision_at_recall_is_minimal(items in scored_items(60), t in prop::sample::select(vec![0.1, 0.5, 0.75, 0.85, 0.9, 1.0])) {
        let cut = precision_at_recall(&items, t).unwrap();
        let (recall, precision, tp, fp) = counts_at(&items, cut.threshold);
        prop_assert!(cut.recall >= t);
        prop_assert_eq!(cut.recall, recall);
        prop_assert_eq!(cut.precision, precision);
        prop_assert_eq!(cut.reviewed, tp + fp);
        let higher: Vec<f64> = distinct_desc(&items).into_iter().filter(|&s| s > cut.threshold).collect();
        if let Some(&next) = higher.last() {
            prop_assert!(counts_at(&items, next).0 < t);
        }
        prop_assert_eq!(cut.savings() + cut.reviewed_fraction(), 1.0);
    }

    #[test]
    fn curves_match_enumeration(items in scored_items(50)) {
        let c = curves(&items).unwrap();
        let thresholds = distinct_desc(&items);
        prop_assert_eq!(c.pr.len(), thresholds.len());
        let n_neg = items.iter().filter(|i| !i.positive).count() as f64;
        for ((p, r), &t) in c.pr.iter().zip(&c.roc).zip(&thresholds) {
            let (recall, precision, _, fp) = counts_at(&items, t);
            prop_assert_eq!(p.threshold, t);
            prop_assert_eq!(p.recall, recall);
            prop_assert_eq!(p.precision, precision);
            prop_assert_eq!(r.tpr, recall);
            prop_assert_eq!(r.fpr, fp as f64 / n_neg);
        }
        prop_assert!((0.0..=1.0).contains(&c.roc_auc()));
        prop_assert!((0.0..=1.0).contains(&c.pr_area()));
    }

    #[test]
    fn adding_an_occurrence_never_lowers_a_document(
        occ in prop::collection::vec((0usize..5, 0.0f64..=1.0), 1..20),
        extra in (0usize..5, 0.0f64..=1.0),
    ) {
        let make = |v: &[(usize, f64)]| -> Vec<ScoredOccurrence<f64>> {
            v.iter().map(|&(d, s)| ScoredOccurrence { doc_id: format!("d{d}"), score: s, doc_privileged: d % 2 == 0 }).collect()
        };
        let before = score_documents(&make(&occ)).unwrap();
        let mut more = occ.clone();
        more.push(extra);
        let after = score_documents(&make(&more)).unwrap();
        for d in &before {
            let a = after.iter().find(|x| x.doc_id == d.doc_id).unwrap();
            prop_assert!(a.score >= d.score);
        }
    }

    #[test]
    fn fold_means_stay_inside_envelope(labels in prop::collection::vec(any::<bool>(), 20..60), seed in any::<u64>(), k in 2usize..5) {
        let pos = labels.iter().filter(|&&l| l).count();
        prop_assume!(pos >= 2 * k && labels.len() - pos >= 2 * k);
        let plan = FoldPlan::stratified(&labels, k, seed).unwrap();
        let report = crossvalidate(&labels, &plan, |f, _train, test| {
            let items: Vec<ScoredItem<f64>> = test
                .iter()
                .map(|&i| ScoredItem::new(((i * 7 + f * 3) % 11) as f64 / 10.0, labels[i]))
                .collect();
            Ok(vec![MetricsReport::compute(Level::Occurrence, &items, &RECALL_TARGETS)?])
        })
        .unwrap();
        let mean = &report.mean[0];
        let within = |get: &dyn Fn(&MetricsReport) -> f64| {
            let vals: Vec<f64> = report.per_fold.iter().map(|r| get(&r[0])).collect();
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let m = get(mean);
            m >= lo - 1e-12 && m <= hi + 1e-12
        };
        for j in 0..RECALL_TARGETS.len() {
            prop_assert!(within(&|r| r.cuts[j].precision));
            prop_assert!(within(&|r| r.cuts[j].savings()));
        }
        prop_assert!(within(&|r| r.roc_auc));
        prop_assert!(within(&|r| r.keyword_baseline_precision));
    }
}
