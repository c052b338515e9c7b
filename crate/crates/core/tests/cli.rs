use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use privsift::cli::{
    cmd_evaluate, cmd_extract, cmd_report, cmd_select, cmd_train, read_occurrences, Algorithm,
    RunConfig, Table,
};
use privsift::corpus::{generate_synthetic, write_corpus, SynthSpec};
use privsift::neural::CnnConfig;
use privsift::select::Approach;
use privsift::CnnModel;

fn small_config(dir: &Path, n_docs: usize) -> RunConfig {
    let spec = SynthSpec {
        n_docs,
        seed: 11,
        ..SynthSpec::default()
    };
    let corpus = generate_synthetic(&spec).unwrap();
    let path = dir.join("corpus.jsonl");
    write_corpus(&corpus, &path).unwrap();
    RunConfig {
        corpus: path,
        output_dir: dir.join("out"),
        keywords: vec!["privi*".parse().unwrap(), "legal".parse().unwrap()],
        folds: 3,
        cnn: CnnConfig {
            embed_dim: 8,
            n_filters: 8,
            epochs: 2,
            ..CnnConfig::default()
        },
        ..RunConfig::default()
    }
}

fn table(path: &Path) -> Table {
    Table::parse_tsv(&fs::read_to_string(path).unwrap()).unwrap()
}

fn all_files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn absent_keyword_gives_empty_file_and_zero_row() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path(), 60);
    cfg.keywords.push("zzzunused".parse().unwrap());
    cmd_extract(&cfg).unwrap();
    let kw = cfg.keywords[2].clone();
    assert_eq!(fs::read(cfg.occurrence_path(&kw)).unwrap(), b"");
    let t = table(&cfg.output_dir.join("extract_summary.tsv"));
    assert_eq!(t.rows.len(), 3);
    assert_eq!(t.rows[2][..3], ["zzzunused", "0", "0"]);
    assert_eq!(
        t.header[..4],
        [
            "keyword",
            "occurrences",
            "positive_occurrences",
            "pct_positive_occurrences"
        ]
    );
}

#[test]
fn invalid_config_leaves_no_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path(), 30);
    cfg.window_radius = 0;
    assert!(cmd_extract(&cfg).is_err());
    assert!(!cfg.output_dir.exists());

    let mut cfg = small_config(dir.path(), 30);
    cfg.corpus = dir.path().join("missing.jsonl");
    let e = cmd_extract(&cfg).unwrap_err();
    assert_eq!(e.kind(), "config");
    assert!(!cfg.output_dir.exists());
}

#[test]
fn selection_report_follows_cutoff_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path(), 300);
    cmd_extract(&cfg).unwrap();
    cmd_select(&cfg).unwrap();
    let t = table(&cfg.output_dir.join("select_report_one.tsv"));
    for kw in ["privi*", "legal"] {
        let rows: Vec<&Vec<String>> = t.rows.iter().filter(|r| r[0] == kw).collect();
        assert_eq!(rows.len(), 5);
        let pct: Vec<f64> = rows.iter().map(|r| r[5].parse().unwrap()).collect();
        assert!(pct.windows(2).all(|w| w[0] <= w[1]), "{pct:?}");
        assert_eq!(rows[4][2], "1.000000");
        assert_eq!(rows[4][5], "100.00");
    }
    let selected = read_occurrences(&cfg.selected_path(&cfg.keywords[0])).unwrap();
    let all = read_occurrences(&cfg.occurrence_path(&cfg.keywords[0])).unwrap();
    let negatives =
        |v: &[privsift::keyword::Occurrence]| v.iter().filter(|o| !o.label.is_positive()).count();
    assert_eq!(negatives(&selected), negatives(&all));
    assert!(selected.len() <= all.len());

    cfg.selection.approach = Approach::Two;
    cfg.selection.cutoff = 1.0;
    cmd_select(&cfg).unwrap();
    assert!(cfg.output_dir.join("select_report_two.tsv").exists());
    assert!(cfg.output_dir.join("select_report_one.tsv").exists());
}

#[test]
fn cnn_model_file_round_trips_and_grid_choice_is_logged() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path(), 200);
    cfg.grid_search = true;
    cfg.grid.epoch_candidates = vec![1, 2];
    cmd_extract(&cfg).unwrap();
    let out = cmd_train(&cfg, Algorithm::Cnn).unwrap();
    assert!(
        out.log
            .iter()
            .any(|l| l.contains("grid search chose dropout")),
        "{:?}",
        out.log
    );
    let path = cfg.model_dir().join("privi_w.cnn.model");
    let bytes = fs::read(&path).unwrap();
    let model = CnnModel::load(&path).unwrap();
    assert_eq!(model.to_bytes().unwrap(), bytes);
    let grid = table(&cfg.model_dir().join("privi_w.grid.tsv"));
    assert_eq!(grid.rows.len(), 4);
    assert_eq!(grid.rows.iter().filter(|r| r[3] == "yes").count(), 1);
}

#[test]
fn single_class_occurrences_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 60);
    let kw = cfg.keywords[0].clone();
    let occ_dir = cfg.output_dir.join("occurrences");
    fs::create_dir_all(&occ_dir).unwrap();
    let line = r#"{"doc_id":"a","keyword":"privi*","center_index":0,"window":["privileged","memo"],"label":"negative","in_footer":false}"#;
    fs::write(cfg.occurrence_path(&kw), format!("{line}\n{line}\n")).unwrap();
    let cfg = RunConfig {
        keywords: vec![kw],
        ..cfg
    };
    for alg in Algorithm::ALL {
        let e = cmd_train(&cfg, alg).unwrap_err();
        assert_eq!(e.kind(), "validation");
        assert!(e.to_string().contains("single class"), "{e}");
    }
    assert!(!cfg.model_dir().exists());
}

#[test]
fn evaluation_tables_have_fold_and_mean_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 300);
    cmd_extract(&cfg).unwrap();
    cmd_evaluate(&cfg, &[Algorithm::Cnn, Algorithm::Logistic]).unwrap();
    let reports = cfg.report_dir();
    for level in ["occurrence", "document"] {
        let t = table(&reports.join(format!("precision_{level}.tsv")));
        assert_eq!(
            t.header,
            [
                "keyword",
                "algorithm",
                "fold",
                "items",
                "positives",
                "precision_at_75",
                "precision_at_85",
                "precision_at_90",
                "keyword_search_precision",
                "roc_auc",
                "pr_area"
            ]
        );
        assert_eq!(t.rows.len(), 2 * 2 * 4);
        assert_eq!(t.rows.iter().filter(|r| r[2] == "mean").count(), 4);
        for alg in ["cnn", "logistic"] {
            assert!(reports
                .join(format!("curves/privi_w.{alg}.{level}.pr.tsv"))
                .exists());
            assert!(reports
                .join(format!("curves/privi_w.{alg}.{level}.roc.tsv"))
                .exists());
        }
    }
    let savings = table(&reports.join("savings.tsv"));
    assert_eq!(
        savings.header[4..],
        ["savings_at_75", "savings_at_85", "savings_at_90"]
    );
    cmd_report(&cfg).unwrap();
    let md = fs::read_to_string(cfg.output_dir.join("report.md")).unwrap();
    assert!(md.contains("## Document-level precision"));
}

#[test]
fn identical_configs_give_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let run = |dir: &Path| {
        let mut cfg = small_config(dir, 250);
        cfg.train_on_selected = true;
        cmd_extract(&cfg).unwrap();
        cmd_select(&cfg).unwrap();
        cmd_train(&cfg, Algorithm::Cnn).unwrap();
        cmd_train(&cfg, Algorithm::Svm).unwrap();
        cmd_evaluate(&cfg, &[Algorithm::Cnn, Algorithm::Svm]).unwrap();
        cmd_report(&cfg).unwrap();
        cfg.output_dir
    };
    let (da, db) = (run(a.path()), run(b.path()));
    let files = all_files(&da);
    assert_eq!(files, all_files(&db));
    assert!(files.len() > 20);
    for f in files {
        assert_eq!(
            fs::read(da.join(&f)).unwrap(),
            fs::read(db.join(&f)).unwrap(),
            "{}",
            f.display()
        );
    }
}

#[test]
fn binary_reports_errors_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_privsift"))
        .args(["extract", "--corpus"])
        .arg(dir.path().join("nope.jsonl"))
        .arg("--output-dir")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    let record: serde_json::Value = serde_json::from_str(stderr.trim()).unwrap();
    assert_eq!(record["error"]["kind"], "config");
    assert!(record["error"]["message"]
        .as_str()
        .unwrap()
        .contains("nope.jsonl"));
    assert!(!dir.path().join("out").exists());

    let out = Command::new(env!("CARGO_BIN_EXE_privsift"))
        .args(["train", "--algorithm", "forest"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let record: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(record["error"]["kind"], "config");
}

#[test]
fn binary_runs_synth_and_extract_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.jsonl");
    let status = Command::new(env!("CARGO_BIN_EXE_privsift"))
        .args(["synth", "--n-docs", "40", "--out"])
        .arg(&corpus)
        .output()
        .unwrap();
    assert!(status.status.success());
    let cfg_path = dir.path().join("run.toml");
    fs::write(&cfg_path, "corpus = \"c.jsonl\"\noutput_dir = \"o\"\n").unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_privsift"))
        .args([
            "extract",
            "--keywords",
            "legal",
            "--window-radius",
            "3",
            "--config",
        ])
        .arg(&cfg_path)
        .output()
        .unwrap();
    assert!(
        status.status.success(),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    let occ = read_occurrences(&dir.path().join("o/occurrences/legal.jsonl")).unwrap();
    assert!(occ.iter().all(|o| o.window.len() <= 7));
    assert!(!dir.path().join("o/occurrences/privi_w.jsonl").exists());
}
