//! Vocabularies, fixed-length window encodings and bag-of-words vectors.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::keyword::{Occurrence, OccurrenceLabel};
use crate::scalar::Real;

pub const PAD_INDEX: u32 = 0;
pub const OOV_INDEX: u32 = 1;
const RESERVED: u32 = 2;

/// Token-to-index map. Index 0 is padding, 1 is out-of-vocabulary, learned
/// tokens start at 2 in order of descending training frequency.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Keeps the `max_size` most frequent tokens; ties go to the
    /// lexicographically smaller token.
    pub fn fit<'a, I, W>(windows: I, max_size: usize) -> Result<Self>
    where
        I: IntoIterator<Item = W>,
        W: IntoIterator<Item = &'a String>,
    {
        let mut counts: HashMap<&'a str, usize> = HashMap::new();
        let mut n_windows = 0usize;
        for w in windows {
            n_windows += 1;
            for t in w {
                *counts.entry(t.as_str()).or_default() += 1;
            }
        }
        if n_windows == 0 {
            return Err(Error::validation("cannot fit a vocabulary on zero windows"));
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(max_size);
        Ok(Self::from_tokens(
            ranked.into_iter().map(|(t, _)| t.to_string()).collect(),
        ))
    }

    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32 + RESERVED))
            .collect();
        Self { tokens, index }
    }

    /// Number of learned tokens, excluding the two reserved indices.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Rows an embedding table needs: learned tokens plus padding and OOV.
    pub fn table_rows(&self) -> usize {
        self.tokens.len() + RESERVED as usize
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn index_of(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token_at(&self, index: u32) -> Option<&str> {
        index
            .checked_sub(RESERVED)
            .and_then(|i| self.tokens.get(i as usize))
            .map(String::as_str)
    }

    /// First 8 bytes of SHA-256 over the newline-joined token list.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        let digest = h.finalize();
        let mut b = [0u8; 8];
        b.copy_from_slice(&digest[..8]);
        u64::from_le_bytes(b)
    }

    /// One token per line; line `i` has index `i + 2`.
    pub fn to_text(&self) -> String {
        let mut text = String::new();
        for t in &self.tokens {
            text.push_str(t);
            text.push('\n');
        }
        text
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_tokens(
            text.lines().map(str::to_string).collect(),
        ))
    }
}

pub fn fit_vocabulary(windows: &[Occurrence], max_size: usize) -> Result<Vocabulary> {
    Vocabulary::fit(windows.iter().map(|o| &o.window), max_size)
}

/// Window as exactly `L` vocabulary indices, left-padded with 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedWindow {
    pub indices: Vec<u32>,
    pub label: OccurrenceLabel,
}

impl EncodedWindow {
    pub fn positive(&self) -> bool {
        self.label.is_positive()
    }
}

pub fn encode_tokens(tokens: &[String], vocab: &Vocabulary, len: usize) -> Result<Vec<u32>> {
    if tokens.len() > len {
        return Err(Error::validation(format!(
            "window of {} tokens exceeds sequence length {len}",
            tokens.len()
        )));
    }
    let mut indices = vec![PAD_INDEX; len - tokens.len()];
    indices.extend(
        tokens
            .iter()
            .map(|t| vocab.index_of(t).unwrap_or(OOV_INDEX)),
    );
    Ok(indices)
}

pub fn encode_window(occ: &Occurrence, vocab: &Vocabulary, len: usize) -> Result<EncodedWindow> {
    Ok(EncodedWindow {
        indices: encode_tokens(&occ.window, vocab, len)?,
        label: occ.label,
    })
}

/// Tokens for the non-reserved indices, in order.
pub fn decode_window(indices: &[u32], vocab: &Vocabulary) -> Vec<String> {
    indices
        .iter()
        .filter_map(|&i| vocab.token_at(i))
        .map(str::to_string)
        .collect()
}

/// Sparse term counts. Entries are sorted by feature index.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BowVector {
    entries: Vec<(u32, u32)>,
    dimension: usize,
}

impl BowVector {
    /// Builds from `(index, count)` pairs; duplicate indices are summed and
    /// zero counts dropped.
    pub fn from_pairs(mut pairs: Vec<(u32, u32)>, dimension: usize) -> Result<Self> {
        pairs.sort_unstable_by_key(|p| p.0);
        let mut entries: Vec<(u32, u32)> = Vec::with_capacity(pairs.len());
        for (i, c) in pairs {
            if i as usize >= dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    actual: i as usize + 1,
                });
            }
            if c == 0 {
                continue;
            }
            match entries.last_mut() {
                Some(last) if last.0 == i => last.1 += c,
                _ => entries.push((i, c)),
            }
        }
        Ok(Self { entries, dimension })
    }

    pub fn zeros(dimension: usize) -> Self {
        Self {
            entries: Vec::new(),
            dimension,
        }
    }

    pub fn entries(&self) -> &[(u32, u32)] {
        &self.entries
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, index: u32) -> u32 {
        self.entries
            .binary_search_by_key(&index, |e| e.0)
            .map(|p| self.entries[p].1)
            .unwrap_or(0)
    }

    pub fn dot<T: Real>(&self, other: &BowVector) -> T {
        let (mut i, mut j) = (0, 0);
        let mut acc = T::zero();
        while i < self.entries.len() && j < other.entries.len() {
            let (a, b) = (self.entries[i], other.entries[j]);
            match a.0.cmp(&b.0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += T::of_count(a.1 as usize) * T::of_count(b.1 as usize);
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    /// Squared Euclidean norm.
    pub fn sq_norm<T: Real>(&self) -> T {
        self.entries
            .iter()
            .map(|&(_, c)| {
                let c = T::of_count(c as usize);
                c * c
            })
            .sum::<T>()
    }

    /// Dense copy, for linear models.
    pub fn to_dense<T: Real>(&self) -> Vec<T> {
        let mut v = vec![T::zero(); self.dimension];
        for &(i, c) in &self.entries {
            v[i as usize] = T::of_count(c as usize);
        }
        v
    }
}

/// Feature space for bag-of-words vectors: the most frequent training
/// tokens, feature `i` being the `i`-th most frequent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BowFeatures {
    vocab: Vocabulary,
}

impl BowFeatures {
    pub fn fit(windows: &[Occurrence], max_features: usize) -> Result<Self> {
        Ok(Self {
            vocab: fit_vocabulary(windows, max_features)?,
        })
    }

    pub fn fit_tokens<'a, I, W>(windows: I, max_features: usize) -> Result<Self>
    where
        I: IntoIterator<Item = W>,
        W: IntoIterator<Item = &'a String>,
    {
        Ok(Self {
            vocab: Vocabulary::fit(windows, max_features)?,
        })
    }

    pub fn from_vocabulary(vocab: Vocabulary) -> Self {
        Self { vocab }
    }

    pub fn dimension(&self) -> usize {
        self.vocab.len()
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn vectorize(&self, tokens: &[String]) -> BowVector {
        let mut counts: HashMap<u32, u32> = HashMap::new();
        for t in tokens {
            if let Some(i) = self.vocab.index_of(t) {
                *counts.entry(i - RESERVED).or_default() += 1;
            }
        }
        let mut entries: Vec<(u32, u32)> = counts.into_iter().collect();
        entries.sort_unstable_by_key(|e| e.0);
        BowVector {
            entries,
            dimension: self.dimension(),
        }
    }
}

/// Raw term counts over `features`; tokens outside it are dropped.
pub fn bow_vectorize(windows: &[Occurrence], features: &BowFeatures) -> Vec<BowVector> {
    windows
        .iter()
        .map(|o| features.vectorize(&o.window))
        .collect()
}

/// Cosine similarity; 0 when either vector is all-zero.
pub fn cosine<T: Real>(a: &BowVector, b: &BowVector) -> Result<T> {
    if a.dimension != b.dimension {
        return Err(Error::DimensionMismatch {
            expected: a.dimension,
            actual: b.dimension,
        });
    }
    let (sa, sb) = (a.sq_norm(), b.sq_norm());
    if sa == T::zero() || sb == T::zero() {
        return Ok(T::zero());
    }
    Ok(cosine_from_dot(a.dot(b), sa, sb))
}

/// `dot / sqrt(|a|^2 |b|^2)`, capped at 1; 0 when either norm is 0.
///
/// Taking one square root of the product keeps `cosine(x, x)` exactly 1.
#[inline]
pub fn cosine_from_dot<T: Real>(dot: T, sq_norm_a: T, sq_norm_b: T) -> T {
    if sq_norm_a == T::zero() || sq_norm_b == T::zero() {
        return T::zero();
    }
    (dot / (sq_norm_a * sq_norm_b).sqrt()).min(T::one())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keyword::KeywordPattern;

    fn occ(words: &[&str]) -> Occurrence {
        Occurrence {
            doc_id: "d".into(),
            keyword: "legal".parse::<KeywordPattern>().unwrap(),
            center_index: 0,
            window: words.iter().map(|w| w.to_string()).collect(),
            label: OccurrenceLabel::Negative,
            in_footer: false,
        }
    }

    #[test]
    fn vocab_smaller_than_cap() {
        let v = fit_vocabulary(&[occ(&["a", "b"]), occ(&["c", "a"])], 20_000).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v.table_rows(), 5);
        assert_eq!(v.index_of("a"), Some(2));
    }

    #[test]
    fn vocab_tie_break_and_cap() {
        // a:5, b:5, c:1 -- brute-force ranking gives a, b.
        let windows = vec![
            occ(&["b", "a", "b", "a", "c"]),
            occ(&["a", "b", "a", "b", "a", "b"]),
        ];
        let v = fit_vocabulary(&windows, 2).unwrap();
        assert_eq!(v.tokens(), ["a", "b"]);
        assert_eq!(fit_vocabulary(&windows, 2).unwrap(), v);
    }

    #[test]
    fn vocab_empty_input_rejected() {
        assert!(fit_vocabulary(&[], 10).is_err());
    }

    #[test]
    fn vocab_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.txt");
        let v = fit_vocabulary(&[occ(&["x", "y", "y"])], 10).unwrap();
        v.save(&path).unwrap();
        let back = Vocabulary::load(&path).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.fingerprint(), v.fingerprint());
        assert_ne!(
            Vocabulary::from_tokens(vec!["y".into()]).fingerprint(),
            v.fingerprint()
        );
    }

    #[test]
    fn encode_full_truncated_and_oov() {
        let full: Vec<String> = (0..41).map(|i| format!("t{i}")).collect();
        let o = Occurrence {
            window: full.clone(),
            ..occ(&[])
        };
        let v = fit_vocabulary(std::slice::from_ref(&o), 100).unwrap();
        let e = encode_window(&o, &v, 41).unwrap();
        assert_eq!(e.indices.len(), 41);
        assert!(e.indices.iter().all(|&i| i >= 2));

        let short = Occurrence {
            window: full[..21].to_vec(),
            ..occ(&[])
        };
        let e = encode_window(&short, &v, 41).unwrap();
        assert!(e.indices[..20].iter().all(|&i| i == 0));
        assert!(e.indices[20..].iter().all(|&i| i >= 2));

        let e = encode_window(&occ(&["t0", "unseen"]), &v, 41).unwrap();
        assert_eq!(e.indices[40], OOV_INDEX);
        assert_eq!(decode_window(&e.indices, &v), ["t0"]);

        assert!(encode_window(&o, &v, 40).is_err());
    }

    #[test]
    fn bow_counts() {
        let features = BowFeatures::from_vocabulary(Vocabulary::from_tokens(vec![
            "legal".into(),
            "advice".into(),
        ]));
        let v = features.vectorize(&["legal".into(), "legal".into(), "advice".into()]);
        assert_eq!(v.entries(), [(0, 2), (1, 1)]);
        assert!(features.vectorize(&["lunch".into()]).is_zero());
        let w = bow_vectorize(&[occ(&["legal", "x"]), occ(&["legal", "x"])], &features);
        assert_eq!(w[0], w[1]);
    }

    #[test]
    fn cosine_examples() {
        let a = BowVector::from_pairs(vec![(0, 1), (1, 1)], 3).unwrap();
        let b = BowVector::from_pairs(vec![(0, 1)], 3).unwrap();
        let c = BowVector::from_pairs(vec![(2, 4)], 3).unwrap();
        assert_eq!(cosine::<f64>(&a, &a).unwrap(), 1.0);
        assert_eq!(cosine::<f64>(&a, &c).unwrap(), 0.0);
        let s: f64 = cosine(&a, &b).unwrap();
        assert!((s - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert_eq!(cosine::<f64>(&a, &BowVector::zeros(3)).unwrap(), 0.0);
        assert!(cosine::<f64>(&a, &BowVector::zeros(4)).is_err());
    }

    #[test]
    fn from_pairs_merges_and_checks_bounds() {
        let v = BowVector::from_pairs(vec![(2, 1), (0, 0), (2, 3)], 3).unwrap();
        assert_eq!(v.entries(), [(2, 4)]);
        assert_eq!(v.get(2), 4);
        assert_eq!(v.get(1), 0);
        assert!(BowVector::from_pairs(vec![(3, 1)], 3).is_err());
    }
}
