use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::num::Real;

/// Sparse bag-of-tokens vector: lowercased alphanumeric token to count.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(BTreeMap<String, u32>);

impl FeatureVector {
    pub fn from_counts(counts: BTreeMap<String, u32>) -> Self {
        FeatureVector(counts.into_iter().filter(|(_, c)| *c > 0).collect())
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn get(&self, token: &str) -> u32 {
        self.0.get(token).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u32)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn counts(&self) -> &BTreeMap<String, u32> {
        &self.0
    }

    /// Every count multiplied by `c`.
    pub fn scaled(&self, c: u32) -> Self {
        FeatureVector(
            self.0
                .iter()
                .map(|(k, v)| (k.clone(), v * c))
                .filter(|(_, v)| *v > 0)
                .collect(),
        )
    }

    fn add(&mut self, token: String) {
        *self.0.entry(token).or_insert(0) += 1;
    }
}

/// Lowercased alphanumeric tokens of `text`.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

pub fn encode(text: &str) -> FeatureVector {
    encode_all([text])
}

pub fn encode_all<'a>(parts: impl IntoIterator<Item = &'a str>) -> FeatureVector {
    let mut v = FeatureVector::default();
    for part in parts {
        for tok in tokenize(part) {
            v.add(tok);
        }
    }
    v
}

/// Cosine similarity; zero when either vector is empty.
pub fn cosine<T: Real>(a: &FeatureVector, b: &FeatureVector) -> T {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let dot: u64 = small
        .iter()
        .map(|(t, c)| c as u64 * large.get(t) as u64)
        .sum();
    if dot == 0 {
        return T::zero();
    }
    let norm = |v: &FeatureVector| -> T {
        let sq: u64 = v.iter().map(|(_, c)| (c as u64) * (c as u64)).sum();
        T::from_u64(sq).expect("finite").sqrt()
    };
    T::from_u64(dot).expect("finite") / (norm(a) * norm(b))
}
