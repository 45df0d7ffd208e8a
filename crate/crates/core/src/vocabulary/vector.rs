use crate::error::{Error, Result};

/// Sparse, L1-normalized word-weight vector of one image.
///
/// Entries are sorted by word id and every stored weight is strictly
/// positive.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VisualVector {
    entries: Vec<(u32, f64)>,
}

impl VisualVector {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a vector from raw non-negative weights, merging repeated words,
    /// dropping zeros and normalizing to unit L1 norm.
    pub fn from_weights(weights: impl IntoIterator<Item = (u32, f64)>) -> Result<Self> {
        let mut entries: Vec<(u32, f64)> = Vec::new();
        for (w, v) in weights {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvariantViolation(format!(
                    "word {w} has invalid weight {v}"
                )));
            }
            entries.push((w, v));
        }
        entries.sort_by_key(|e| e.0);
        let mut merged: Vec<(u32, f64)> = Vec::with_capacity(entries.len());
        for (w, v) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == w => last.1 += v,
                _ => merged.push((w, v)),
            }
        }
        merged.retain(|e| e.1 > 0.0);
        let total: f64 = merged.iter().map(|e| e.1).sum();
        if total > 0.0 {
            for e in &mut merged {
                e.1 /= total;
            }
        }
        merged.retain(|e| e.1 > 0.0);
        Ok(Self { entries: merged })
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, word: u32) -> f64 {
        self.entries
            .binary_search_by_key(&word, |e| e.0)
            .map_or(0.0, |i| self.entries[i].1)
    }

    pub fn l1_norm(&self) -> f64 {
        self.entries.iter().map(|e| e.1.abs()).sum()
    }

    /// Largest word id in the support, if any.
    pub fn max_word(&self) -> Option<u32> {
        self.entries.last().map(|e| e.0)
    }
}

/// Similarity term contributed by one word present in both vectors.
#[inline]
pub(crate) fn shared_term(a: f64, b: f64) -> f64 {
    a.abs() + b.abs() - (a - b).abs()
}

/// Bag-of-words similarity `sum_i |a_i| + |b_i| - |a_i - b_i|` over the
/// union of both supports. Ranges over `[0, 2]` for L1-normalized inputs.
pub fn similarity(a: &VisualVector, b: &VisualVector) -> f64 {
    let (x, y) = (a.entries(), b.entries());
    let (mut i, mut j) = (0, 0);
    let mut score = 0.0;
    while i < x.len() && j < y.len() {
        match x[i].0.cmp(&y[j].0) {
            std::cmp::Ordering::Less => {
                score += shared_term(x[i].1, 0.0);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                score += shared_term(0.0, y[j].1);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                score += shared_term(x[i].1, y[j].1);
                i += 1;
                j += 1;
            }
        }
    }
    for e in &x[i..] {
        score += shared_term(e.1, 0.0);
    }
    for e in &y[j..] {
        score += shared_term(0.0, e.1);
    }
    score
}
