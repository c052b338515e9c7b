//! Tokenization, wildcard keyword matching and occurrence windows.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};

/// A search term. `privi*` matches any token starting with `privi`;
/// `legal` matches only `legal`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KeywordPattern {
    stem: String,
    prefix_wildcard: bool,
}

impl KeywordPattern {
    pub fn new(stem: &str, prefix_wildcard: bool) -> Result<Self> {
        let stem = stem.to_lowercase();
        if stem.is_empty() {
            return Err(Error::validation("keyword stem is empty"));
        }
        if stem.chars().any(|c| c.is_whitespace() || c == '*') {
            return Err(Error::validation(format!(
                "keyword stem {stem:?} contains whitespace or '*'"
            )));
        }
        Ok(Self {
            stem,
            prefix_wildcard,
        })
    }

    pub fn stem(&self) -> &str {
        &self.stem
    }

    pub fn prefix_wildcard(&self) -> bool {
        self.prefix_wildcard
    }

    /// Returns `true` when `token` (already lowercase) is a hit.
    pub fn matches(&self, token: &str) -> bool {
        if self.prefix_wildcard {
            token.starts_with(&self.stem)
        } else {
            token == self.stem
        }
    }

    /// Name safe to use in file names: the stem, plus `_w` for wildcards.
    pub fn file_stem(&self) -> String {
        if self.prefix_wildcard {
            format!("{}_w", self.stem)
        } else {
            self.stem.clone()
        }
    }
}

impl FromStr for KeywordPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.strip_suffix('*') {
            Some(stem) => Self::new(stem, true),
            None => Self::new(s, false),
        }
    }
}

impl fmt::Display for KeywordPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.prefix_wildcard {
            write!(f, "{}*", self.stem)
        } else {
            f.write_str(&self.stem)
        }
    }
}

impl Serialize for KeywordPattern {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for KeywordPattern {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Checks a token against a pattern.
pub fn match_keyword(pattern: &KeywordPattern, token: &Token) -> bool {
    pattern.matches(&token.surface)
}

/// A lowercase word with its character span in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    pub char_start: usize,
    pub char_end: usize,
}

/// Splits on maximal runs of non-alphanumeric characters and lowercases.
/// Offsets count characters, not bytes.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut start = 0;
    let mut pos = 0;
    for c in text.chars() {
        if c.is_alphanumeric() {
            if current.is_empty() {
                start = pos;
            }
            current.extend(c.to_lowercase());
        } else if !current.is_empty() {
            tokens.push(Token {
                surface: std::mem::take(&mut current),
                char_start: start,
                char_end: pos,
            });
        }
        pos += 1;
    }
    if !current.is_empty() {
        tokens.push(Token {
            surface: current,
            char_start: start,
            char_end: pos,
        });
    }
    tokens
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OccurrenceLabel {
    Negative,
    CandidatePositive,
}

impl OccurrenceLabel {
    pub fn from_privileged(privileged: bool) -> Self {
        if privileged {
            OccurrenceLabel::CandidatePositive
        } else {
            OccurrenceLabel::Negative
        }
    }

    pub fn is_positive(self) -> bool {
        self == OccurrenceLabel::CandidatePositive
    }
}

/// One keyword hit and the tokens around it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Occurrence {
    pub doc_id: String,
    pub keyword: KeywordPattern,
    /// Token index of the hit within the document.
    pub center_index: usize,
    /// Tokens `center_index - n ..= center_index + n`, clipped to the document.
    pub window: Vec<String>,
    pub label: OccurrenceLabel,
    pub in_footer: bool,
}

impl Occurrence {
    /// Position of the hit inside `window`.
    pub fn center_offset(&self, radius: usize) -> usize {
        self.center_index.min(radius)
    }

    /// Stable identifier, `doc_id#center_index`.
    pub fn key(&self) -> String {
        format!("{}#{}", self.doc_id, self.center_index)
    }
}

/// Extracts every hit of `pattern` in `doc`, in document order.
pub fn extract_occurrences(
    doc: &Document,
    pattern: &KeywordPattern,
    radius: usize,
) -> Result<Vec<Occurrence>> {
    if radius == 0 {
        return Err(Error::validation("window radius must be at least 1"));
    }
    let tokens = tokenize(&doc.text);
    Ok(occurrences_from_tokens(doc, &tokens, pattern, radius))
}

fn occurrences_from_tokens(
    doc: &Document,
    tokens: &[Token],
    pattern: &KeywordPattern,
    radius: usize,
) -> Vec<Occurrence> {
    let label = OccurrenceLabel::from_privileged(doc.privileged);
    tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| match_keyword(pattern, t))
        .map(|(i, t)| {
            let lo = i.saturating_sub(radius);
            let hi = (i + radius).min(tokens.len() - 1);
            Occurrence {
                doc_id: doc.id.clone(),
                keyword: pattern.clone(),
                center_index: i,
                window: tokens[lo..=hi].iter().map(|t| t.surface.clone()).collect(),
                label,
                in_footer: doc.footer_start.is_some_and(|f| t.char_start >= f),
            }
        })
        .collect()
}

/// Extracts occurrences of several patterns over a whole corpus.
///
/// Documents are tokenized once and processed in parallel; the output for
/// each pattern is in corpus order, then token order.
pub fn extract_corpus(
    corpus: &Corpus,
    patterns: &[KeywordPattern],
    radius: usize,
) -> Result<Vec<Vec<Occurrence>>> {
    if radius == 0 {
        return Err(Error::validation("window radius must be at least 1"));
    }
    let per_doc: Vec<Vec<Vec<Occurrence>>> = corpus
        .documents
        .par_iter()
        .map(|doc| {
            let tokens = tokenize(&doc.text);
            patterns
                .iter()
                .map(|p| occurrences_from_tokens(doc, &tokens, p, radius))
                .collect()
        })
        .collect();
    let mut out = vec![Vec::new(); patterns.len()];
    for doc_occ in per_doc {
        for (slot, occ) in out.iter_mut().zip(doc_occ) {
            slot.extend(occ);
        }
    }
    Ok(out)
}

/// Assigns labels from the parent document and optionally drops footer hits
/// in privileged documents. Footer hits in non-privileged documents stay as
/// negatives.
pub fn derive_labels(
    corpus: &Corpus,
    occurrences: Vec<Occurrence>,
    drop_footer_in_privileged: bool,
) -> Result<Vec<Occurrence>> {
    let privileged: HashMap<&str, bool> = corpus
        .documents
        .iter()
        .map(|d| (d.id.as_str(), d.privileged))
        .collect();
    let mut out = Vec::with_capacity(occurrences.len());
    for mut occ in occurrences {
        let Some(&priv_doc) = privileged.get(occ.doc_id.as_str()) else {
            return Err(Error::UnknownDocument(occ.doc_id));
        };
        if priv_doc && drop_footer_in_privileged && occ.in_footer {
            continue;
        }
        occ.label = OccurrenceLabel::from_privileged(priv_doc);
        out.push(occ);
    }
    Ok(out)
}
