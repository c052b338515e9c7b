//! Labelled documents, footer detection and synthetic corpora.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::keyword::KeywordPattern;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub privileged: bool,
    /// Character offset where the e-mail footer begins, if known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub footer_start: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub name: String,
    pub documents: Vec<Document>,
}

impl Corpus {
    /// Builds a corpus, rejecting duplicate ids and out-of-range footers.
    pub fn new(name: impl Into<String>, documents: Vec<Document>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(documents.len());
        for d in &documents {
            if !seen.insert(d.id.as_str()) {
                return Err(Error::DuplicateId(d.id.clone()));
            }
            if let Some(f) = d.footer_start {
                let len = d.text.chars().count();
                if f > len {
                    return Err(Error::validation(format!(
                        "document {:?}: footer_start {f} beyond text length {len}",
                        d.id
                    )));
                }
            }
        }
        Ok(Self {
            name: name.into(),
            documents,
        })
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn privileged_count(&self) -> usize {
        self.documents.iter().filter(|d| d.privileged).count()
    }

    pub fn non_privileged_count(&self) -> usize {
        self.len() - self.privileged_count()
    }

    /// Share of privileged documents; 0 for an empty corpus.
    pub fn privileged_fraction(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.privileged_count() as f64 / self.len() as f64
        }
    }

    /// Fills `footer_start` with `detector` for documents that lack one.
    pub fn detect_footers(&mut self, detector: &FooterDetector) {
        for d in &mut self.documents {
            if d.footer_start.is_none() {
                d.footer_start = detector.detect(d);
            }
        }
    }
}

/// On-disk corpus formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorpusFormat {
    /// One JSON object per line: `id`, `text`, `privileged`, optional `footer_start`.
    #[default]
    JsonLines,
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" | "json-lines" | "ndjson" => Ok(CorpusFormat::JsonLines),
            other => Err(Error::Config(format!("unknown corpus format {other:?}"))),
        }
    }
}

/// Reads a corpus, preserving record order. Blank lines are skipped.
pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus> {
    let CorpusFormat::JsonLines = format;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut documents = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        documents.push(doc);
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Corpus::new(name, documents)
}

pub fn write_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for d in &corpus.documents {
        serde_json::to_writer(&mut w, d).map_err(|e| Error::validation(e.to_string()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub const DEFAULT_FOOTER_MARKERS: [&str; 4] = [
    "this email may contain",
    "this message may contain",
    "confidentiality notice",
    "if you are not the intended recipient",
];

/// Finds e-mail disclaimers by marker phrase within the tail of a document.
#[derive(Debug, Clone, PartialEq)]
pub struct FooterDetector {
    markers: Vec<Vec<char>>,
    trailing_fraction: f64,
}

impl Default for FooterDetector {
    fn default() -> Self {
        Self::new(DEFAULT_FOOTER_MARKERS.iter().copied(), 0.25).expect("default markers are valid")
    }
}

impl FooterDetector {
    pub fn new<I, S>(markers: I, trailing_fraction: f64) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let markers: Vec<Vec<char>> = markers
            .into_iter()
            .map(|m| m.as_ref().chars().flat_map(char::to_lowercase).collect())
            .filter(|m: &Vec<char>| !m.is_empty())
            .collect();
        if markers.is_empty() {
            return Err(Error::validation("footer marker list is empty"));
        }
        if !(trailing_fraction > 0.0 && trailing_fraction <= 1.0) {
            return Err(Error::validation(format!(
                "trailing fraction {trailing_fraction} outside (0, 1]"
            )));
        }
        Ok(Self {
            markers,
            trailing_fraction,
        })
    }

    /// First character offset of the trailing region searched for markers.
    pub fn region_start(&self, char_len: usize) -> usize {
        let keep = (char_len as f64 * self.trailing_fraction).ceil() as usize;
        char_len - keep.min(char_len)
    }

    /// Earliest marker match starting inside the trailing region.
    pub fn detect(&self, doc: &Document) -> Option<usize> {
        let text: Vec<char> = doc.text.chars().collect();
        let start = self.region_start(text.len());
        (start..text.len())
            .find(|&pos| self.markers.iter().any(|m| matches_folded(&text[pos..], m)))
    }
}

fn matches_folded(text: &[char], marker: &[char]) -> bool {
    let mut folded = text.iter().flat_map(|c| c.to_lowercase());
    marker.iter().all(|m| folded.next() == Some(*m))
}

/// Detects a footer with the given markers and the default 25% tail.
pub fn detect_footer<S: AsRef<str>>(doc: &Document, markers: &[S]) -> Result<Option<usize>> {
    Ok(FooterDetector::new(markers.iter().map(AsRef::as_ref), 0.25)?.detect(doc))
}

/// Parameters of a synthetic review corpus.
///
/// Privileged documents carry at least one keyword hit whose surrounding
/// tokens mix in words from `planted_context_vocab`. Every other hit is
/// surrounded by background words, often copied from a small set of
/// boilerplate templates so that near-duplicate contexts appear in both
/// classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_docs: usize,
    pub privileged_fraction: f64,
    pub keywords: Vec<KeywordPattern>,
    pub footer_probability: f64,
    pub planted_context_vocab: Vec<String>,
    pub background_vocab: Vec<String>,
    pub seed: u64,
    /// Inclusive range of background body length in tokens.
    pub body_tokens: (usize, usize),
    /// Tokens on each side of a hit that form its planted or template context.
    pub context_radius: usize,
    /// Probability that a context token of a planted hit is a planted word.
    pub planted_density: f64,
    /// Inclusive range of planted hits in a privileged document.
    pub planted_hits: (usize, usize),
    /// Probability that a non-privileged document has keyword hits in its body.
    pub negative_hit_probability: f64,
    /// Inclusive range of body hits in a non-privileged document that has any.
    pub negative_hits: (usize, usize),
    /// Probability that a privileged document also has a non-planted hit.
    pub incidental_hit_probability: f64,
    pub template_count: usize,
    /// Probability that a non-planted hit reuses a boilerplate template.
    pub template_probability: f64,
    /// Per-token replacement probability when a template is reused.
    pub template_mutation: f64,
    pub footer_markers: Vec<String>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_docs: 1000,
            privileged_fraction: 0.1,
            keywords: ["privi*", "legal", "counsel*", "attorney*"]
                .iter()
                .map(|k| k.parse().expect("valid keyword"))
                .collect(),
            footer_probability: 0.3,
            planted_context_vocab: generated_pool("adv", 300),
            background_vocab: generated_pool("w", 3000),
            seed: 7,
            body_tokens: (80, 200),
            context_radius: 20,
            planted_density: 0.5,
            planted_hits: (1, 2),
            negative_hit_probability: 0.8,
            negative_hits: (1, 3),
            incidental_hit_probability: 0.3,
            template_count: 40,
            template_probability: 0.5,
            template_mutation: 0.05,
            footer_markers: vec![
                "this email may contain".into(),
                "confidentiality notice".into(),
            ],
        }
    }
}

/// Word pool `prefix0000`, `prefix0001`, ...
pub fn generated_pool(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i:04}")).collect()
}

const WILDCARD_SUFFIXES: [&str; 4] = ["", "s", "ed", "ing"];

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let frac = self.privileged_fraction;
        if !(frac > 0.0 && frac < 1.0) {
            return Err(Error::validation(format!(
                "privileged_fraction {frac} outside (0, 1)"
            )));
        }
        let probs = [
            ("footer_probability", self.footer_probability),
            ("planted_density", self.planted_density),
            ("negative_hit_probability", self.negative_hit_probability),
            (
                "incidental_hit_probability",
                self.incidental_hit_probability,
            ),
            ("template_probability", self.template_probability),
            ("template_mutation", self.template_mutation),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::validation(format!("{name} {p} outside [0, 1]")));
            }
        }
        if self.keywords.is_empty() {
            return Err(Error::validation(
                "synthetic corpus needs at least one keyword",
            ));
        }
        if self.planted_context_vocab.is_empty() || self.background_vocab.is_empty() {
            return Err(Error::validation("vocabulary pools must be non-empty"));
        }
        let planted: HashSet<&str> = self
            .planted_context_vocab
            .iter()
            .map(String::as_str)
            .collect();
        if let Some(w) = self
            .background_vocab
            .iter()
            .find(|w| planted.contains(w.as_str()))
        {
            return Err(Error::validation(format!(
                "word {w:?} is in both planted and background vocabularies"
            )));
        }
        for w in self
            .planted_context_vocab
            .iter()
            .chain(&self.background_vocab)
        {
            let is_single_token = !w.is_empty()
                && w.chars().all(char::is_alphanumeric)
                && w.chars().all(|c| !c.is_uppercase());
            if !is_single_token {
                return Err(Error::validation(format!(
                    "vocabulary word {w:?} is not a single lowercase token"
                )));
            }
            if self.keywords.iter().any(|k| k.matches(w)) {
                return Err(Error::validation(format!(
                    "vocabulary word {w:?} matches a keyword"
                )));
            }
        }
        let ranges = [
            ("body_tokens", self.body_tokens),
            ("planted_hits", self.planted_hits),
            ("negative_hits", self.negative_hits),
        ];
        for (name, (lo, hi)) in ranges {
            if lo > hi {
                return Err(Error::validation(format!(
                    "{name} range ({lo}, {hi}) is empty"
                )));
            }
        }
        if self.planted_hits.0 == 0 {
            return Err(Error::validation(
                "privileged documents need at least one planted hit",
            ));
        }
        if self.template_probability > 0.0 && self.template_count == 0 {
            return Err(Error::validation(
                "template_probability > 0 needs templates",
            ));
        }
        if self.footer_probability > 0.0 && self.footer_markers.is_empty() {
            return Err(Error::validation("footers need at least one marker phrase"));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

struct Generator<'a> {
    spec: &'a SynthSpec,
    rng: ChaCha8Rng,
    templates: Vec<Vec<String>>,
}

impl<'a> Generator<'a> {
    fn background(&mut self) -> String {
        self.spec
            .background_vocab
            .choose(&mut self.rng)
            .unwrap()
            .clone()
    }

    fn keyword_surface(&mut self) -> String {
        let k = self.spec.keywords.choose(&mut self.rng).unwrap();
        if k.prefix_wildcard() {
            let suffix = WILDCARD_SUFFIXES.choose(&mut self.rng).unwrap();
            format!("{}{}", k.stem(), suffix)
        } else {
            k.stem().to_string()
        }
    }

    fn range(&mut self, (lo, hi): (usize, usize)) -> usize {
        self.rng.gen_range(lo..=hi)
    }

    fn planted_segment(&mut self) -> Vec<String> {
        let r = self.spec.context_radius;
        let mut seg = Vec::with_capacity(2 * r + 1);
        for i in 0..=2 * r {
            if i == r {
                seg.push(self.keyword_surface());
            } else if self.rng.gen_bool(self.spec.planted_density) {
                seg.push(
                    self.spec
                        .planted_context_vocab
                        .choose(&mut self.rng)
                        .unwrap()
                        .clone(),
                );
            } else {
                seg.push(self.background());
            }
        }
        seg
    }

    fn plain_segment(&mut self) -> Vec<String> {
        let r = self.spec.context_radius;
        let use_template =
            !self.templates.is_empty() && self.rng.gen_bool(self.spec.template_probability);
        let mut seg: Vec<String> = if use_template {
            let t = self.rng.gen_range(0..self.templates.len());
            let mut seg = self.templates[t].clone();
            for w in &mut seg {
                if self.rng.gen_bool(self.spec.template_mutation) {
                    *w = self.background();
                }
            }
            seg
        } else {
            (0..2 * r).map(|_| self.background()).collect()
        };
        seg.insert(r, self.keyword_surface());
        seg
    }

    fn footer(&mut self) -> Vec<String> {
        let marker = self
            .spec
            .footer_markers
            .choose(&mut self.rng)
            .unwrap()
            .clone();
        let mut words: Vec<String> = marker.split_whitespace().map(str::to_string).collect();
        // Fixed boilerplate drawn from the head of the background pool.
        let pool = &self.spec.background_vocab;
        let boiler: Vec<String> = pool.iter().take(12.min(pool.len())).cloned().collect();
        for (i, w) in boiler.into_iter().enumerate() {
            words.push(w);
            if i % 4 == 1 {
                words.push(self.keyword_surface());
            }
        }
        words
    }

    fn document(&mut self, index: usize, privileged: bool) -> Document {
        let mut segments: Vec<Vec<String>> = Vec::new();
        if privileged {
            for _ in 0..self.range(self.spec.planted_hits) {
                segments.push(self.planted_segment());
            }
            if self.rng.gen_bool(self.spec.incidental_hit_probability) {
                segments.push(self.plain_segment());
            }
        } else if self.rng.gen_bool(self.spec.negative_hit_probability) {
            for _ in 0..self.range(self.spec.negative_hits) {
                segments.push(self.plain_segment());
            }
        }
        segments.shuffle(&mut self.rng);

        // Background filler around and between hit segments.
        let body_len = self.range(self.spec.body_tokens);
        let gaps = segments.len() + 1;
        let mut cuts: Vec<usize> = (0..gaps - 1)
            .map(|_| self.rng.gen_range(0..=body_len))
            .collect();
        cuts.sort_unstable();
        cuts.push(body_len);
        let mut tokens: Vec<String> = Vec::new();
        let mut prev = 0;
        for (i, cut) in cuts.into_iter().enumerate() {
            for _ in prev..cut {
                tokens.push(self.background());
            }
            prev = cut;
            if let Some(seg) = segments.get_mut(i) {
                tokens.append(seg);
            }
        }

        let mut text = String::new();
        for (i, w) in tokens.iter().enumerate() {
            if i > 0 {
                text.push_str(if i % 13 == 0 { ". " } else { " " });
            }
            text.push_str(w);
        }
        text.push('.');

        let footer_start = if self.rng.gen_bool(self.spec.footer_probability) {
            text.push_str("\n\n");
            let start = text.chars().count();
            let footer = self.footer();
            let mut first = true;
            for w in footer {
                if !first {
                    text.push(' ');
                }
                first = false;
                text.push_str(&w);
            }
            text.push('.');
            Some(start)
        } else {
            None
        };

        Document {
            id: format!("doc{index:06}"),
            text,
            privileged,
            footer_start,
        }
    }
}

/// Generates a corpus that is a pure function of `spec`.
///
/// Exactly `round(n_docs * privileged_fraction)` documents are privileged,
/// placed at seeded random positions.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<Corpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let r = spec.context_radius;
    let templates: Vec<Vec<String>> = (0..spec.template_count)
        .map(|_| {
            (0..2 * r)
                .map(|_| spec.background_vocab.choose(&mut rng).unwrap().clone())
                .collect()
        })
        .collect();
    let n_priv = (spec.n_docs as f64 * spec.privileged_fraction).round() as usize;
    let mut labels: Vec<bool> = (0..spec.n_docs).map(|i| i < n_priv).collect();
    labels.shuffle(&mut rng);

    let mut gen = Generator {
        spec,
        rng,
        templates,
    };
    let documents = labels
        .into_iter()
        .enumerate()
        .map(|(i, p)| gen.document(i, p))
        .collect();
    Corpus::new(format!("synthetic-{}", spec.seed), documents)
}
