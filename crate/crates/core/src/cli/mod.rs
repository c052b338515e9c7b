//! Run configuration and the pipeline commands behind the `privsift` binary.
//!
//! Every command validates its inputs and computes all of its outputs in
//! memory before writing anything, so a failed run leaves no partial files.

mod commands;
mod tables;

pub use commands::{
    cmd_evaluate, cmd_extract, cmd_report, cmd_select, cmd_synth, cmd_train, Algorithm,
    CommandOutcome,
};
pub use tables::Table;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::LinearConfig;
use crate::corpus::{self, Corpus, CorpusFormat, FooterDetector, DEFAULT_FOOTER_MARKERS};
use crate::error::{Error, Result};
use crate::keyword::{KeywordPattern, Occurrence};
use crate::neural::{CnnConfig, GridSpec};
use crate::select::SelectionConfig;

fn default_keywords() -> Vec<KeywordPattern> {
    ["privi*", "legal", "counsel*", "attorney*"]
        .iter()
        .map(|k| k.parse().expect("valid keyword"))
        .collect()
}

/// Everything a pipeline run needs. Loaded from TOML; every field has a
/// default, and paths are relative to the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: PathBuf,
    pub corpus_format: String,
    pub keywords: Vec<KeywordPattern>,
    pub window_radius: usize,
    pub vocab_size: usize,
    /// Bag-of-words feature cap for the linear models and KNN selection.
    pub bow_features: usize,
    pub drop_footer_in_privileged: bool,
    /// Fill a missing `footer_start` by marker detection.
    pub detect_footers: bool,
    pub footer_markers: Vec<String>,
    pub footer_trailing_fraction: f64,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub cnn: CnnConfig,
    pub grid_search: bool,
    pub grid: GridSpec,
    pub selection: SelectionConfig,
    pub cutoff_sweep: Vec<f64>,
    /// Train on the KNN-selected occurrence files instead of all occurrences.
    pub train_on_selected: bool,
    pub folds: usize,
    pub linear: LinearConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            corpus: PathBuf::from("corpus.jsonl"),
            corpus_format: "jsonl".into(),
            keywords: default_keywords(),
            window_radius: 20,
            vocab_size: 20_000,
            bow_features: 2_000,
            drop_footer_in_privileged: true,
            detect_footers: true,
            footer_markers: DEFAULT_FOOTER_MARKERS
                .iter()
                .map(|s| s.to_string())
                .collect(),
            footer_trailing_fraction: 0.25,
            output_dir: PathBuf::from("out"),
            seed: 42,
            cnn: CnnConfig::default(),
            grid_search: false,
            grid: GridSpec::default(),
            selection: SelectionConfig::default(),
            cutoff_sweep: vec![0.6, 0.7, 0.8, 0.9, 1.0],
            train_on_selected: false,
            folds: 5,
            linear: LinearConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file; relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if cfg.corpus.is_relative() {
            cfg.corpus = base.join(&cfg.corpus);
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.keywords.is_empty() {
            return Err(Error::Config("no keywords configured".into()));
        }
        let mut names: Vec<String> = self
            .keywords
            .iter()
            .map(KeywordPattern::file_stem)
            .collect();
        names.sort();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("duplicate keyword".into()));
        }
        if self.window_radius == 0 {
            return Err(Error::Config("window_radius must be at least 1".into()));
        }
        if self.vocab_size == 0 || self.bow_features == 0 {
            return Err(Error::Config(
                "vocab_size and bow_features must be positive".into(),
            ));
        }
        if self.window_radius * 2 + 1 < self.cnn.kernel_size {
            return Err(Error::Config(
                "window shorter than the convolution kernel".into(),
            ));
        }
        if self.folds < 2 {
            return Err(Error::Config("folds must be at least 2".into()));
        }
        self.corpus_format.parse::<CorpusFormat>()?;
        self.cnn.validate()?;
        self.linear.validate()?;
        self.selection.validate()?;
        if self.cutoff_sweep.is_empty()
            || self
                .cutoff_sweep
                .iter()
                .any(|c| !(c.is_finite() && *c > 0.0))
        {
            return Err(Error::Config(
                "cutoff_sweep must hold positive cutoffs".into(),
            ));
        }
        if self.grid_search {
            if self.grid.dropout_candidates.is_empty() || self.grid.epoch_candidates.is_empty() {
                return Err(Error::Config(
                    "grid candidate lists must be non-empty".into(),
                ));
            }
            if self
                .grid
                .dropout_candidates
                .iter()
                .any(|d| !(0.0..1.0).contains(d))
            {
                return Err(Error::Config(
                    "dropout candidates must lie in [0, 1)".into(),
                ));
            }
        }
        if self.detect_footers {
            FooterDetector::new(&self.footer_markers, self.footer_trailing_fraction)?;
        }
        Ok(())
    }

    /// Sequence length fed to the network.
    pub fn seq_len(&self) -> usize {
        2 * self.window_radius + 1
    }

    pub fn load_corpus(&self) -> Result<Corpus> {
        if !self.corpus.exists() {
            return Err(Error::Config(format!(
                "corpus {} does not exist",
                self.corpus.display()
            )));
        }
        let mut c = corpus::load_corpus(&self.corpus, self.corpus_format.parse()?)?;
        if self.detect_footers {
            let det = FooterDetector::new(&self.footer_markers, self.footer_trailing_fraction)?;
            c.detect_footers(&det);
        }
        Ok(c)
    }

    pub fn occurrence_path(&self, kw: &KeywordPattern) -> PathBuf {
        self.output_dir
            .join("occurrences")
            .join(format!("{}.jsonl", kw.file_stem()))
    }

    pub fn selected_path(&self, kw: &KeywordPattern) -> PathBuf {
        self.output_dir
            .join("select")
            .join(format!("{}.selected.jsonl", kw.file_stem()))
    }

    pub fn model_dir(&self) -> PathBuf {
        self.output_dir.join("models")
    }

    pub fn report_dir(&self) -> PathBuf {
        self.output_dir.join("reports")
    }
}

/// Seed for one pipeline stage, derived from the global seed and a tag.
pub fn derive_seed(global: u64, tag: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(global.to_le_bytes());
    h.update(tag.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

/// Files produced by a command, written only once the command has succeeded.
#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, path: PathBuf, bytes: Vec<u8>) {
        self.files.push((path, bytes));
    }

    pub fn paths(&self) -> impl Iterator<Item = &Path> {
        self.files.iter().map(|(p, _)| p.as_path())
    }

    pub fn get(&self, path: &Path) -> Option<&[u8]> {
        self.files
            .iter()
            .find(|(p, _)| p == path)
            .map(|(_, b)| b.as_slice())
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    /// Writes every file, creating parent directories, in insertion order.
    pub fn commit(self) -> Result<Vec<PathBuf>> {
        let mut written = Vec::with_capacity(self.files.len());
        for (path, bytes) in self.files {
            if let Some(dir) = path.parent() {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }
}

pub fn occurrences_to_jsonl(occ: &[Occurrence]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for o in occ {
        serde_json::to_writer(&mut out, o).map_err(|e| Error::validation(e.to_string()))?;
        out.push(b'\n');
    }
    Ok(out)
}

pub fn read_occurrences(path: &Path) -> Result<Vec<Occurrence>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                line: i + 1,
                message: format!("{}: {e}", path.display()),
            })
        })
        .collect()
}
