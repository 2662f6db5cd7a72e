use std::fmt;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use super::feature::{cosine, FeatureVector};
use super::MemoryError;
use crate::geom::Action;
use crate::Pose;

pub const BANK_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CauseCategory {
    Misperception,
    SpatialMisjudgment,
    Oscillation,
    Stagnation,
    Other,
}

impl CauseCategory {
    pub fn name(self) -> &'static str {
        match self {
            CauseCategory::Misperception => "misperception",
            CauseCategory::SpatialMisjudgment => "spatial-misjudgment",
            CauseCategory::Oscillation => "oscillation",
            CauseCategory::Stagnation => "stagnation",
            CauseCategory::Other => "other",
        }
    }
}

impl fmt::Display for CauseCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cause {
    pub category: CauseCategory,
    pub text: String,
}

/// Corrective behavior: one action, an action pattern, or nothing known.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Correction {
    Action(Action),
    Pattern(Vec<Action>),
    NoCorrection,
}

const NO_CORRECTION: &str = "NoCorrection";

impl Correction {
    /// First action of the correction, if any.
    pub fn first(&self) -> Option<Action> {
        match self {
            Correction::Action(a) => Some(*a),
            Correction::Pattern(p) => p.first().copied(),
            Correction::NoCorrection => None,
        }
    }
}

impl Serialize for Correction {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Correction::Action(a) => a.serialize(s),
            Correction::Pattern(p) => p.serialize(s),
            Correction::NoCorrection => s.serialize_str(NO_CORRECTION),
        }
    }
}

impl<'de> Deserialize<'de> for Correction {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Many(Vec<Action>),
            One(String),
        }
        match Raw::deserialize(d)? {
            Raw::Many(p) if p.is_empty() => {
                Err(serde::de::Error::custom("empty correction pattern"))
            }
            Raw::Many(p) => Ok(Correction::Pattern(p)),
            Raw::One(s) if s == NO_CORRECTION => Ok(Correction::NoCorrection),
            Raw::One(s) => Action::parse(&s)
                .map(Correction::Action)
                .ok_or_else(|| serde::de::Error::custom(format!("unknown action {s:?}"))),
        }
    }
}

/// Erroneous scene features, the wrong action, its cause and the fix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReflectiveTuple {
    pub f_err_tokens: Vec<String>,
    pub a_err: Action,
    pub cause: Cause,
    pub a_corr: Correction,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperienceContext {
    pub poses: Vec<Pose>,
    pub actions: Vec<Action>,
    pub observations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperienceEntry {
    pub id: String,
    pub tokens: FeatureVector,
    pub context: ExperienceContext,
    pub reflective: ReflectiveTuple,
}

impl ExperienceEntry {
    /// Builds an entry whose id is derived from its content.
    pub fn new(
        tokens: FeatureVector,
        context: ExperienceContext,
        reflective: ReflectiveTuple,
    ) -> Self {
        let body = serde_json::to_vec(&(&tokens, &context, &reflective)).expect("entry serializes");
        let id = format!("exp-{}", &hex::encode(Sha256::digest(&body))[..12]);
        ExperienceEntry {
            id,
            tokens,
            context,
            reflective,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        if self.tokens.is_empty() {
            return Err(format!("{}: empty feature vector", self.id));
        }
        if self.tokens.iter().any(|(_, c)| c == 0) {
            return Err(format!("{}: zero token count", self.id));
        }
        let r = &self.reflective;
        if r.a_corr == Correction::Action(r.a_err) && r.cause.category != CauseCategory::Other {
            return Err(format!(
                "{}: correction equals the erroneous action",
                self.id
            ));
        }
        Ok(())
    }
}

/// Entry paired with its similarity to a query.
#[derive(Debug, Clone, Copy)]
pub struct Scored<'a> {
    pub entry: &'a ExperienceEntry,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperienceBank {
    pub version: u32,
    pub entries: Vec<ExperienceEntry>,
}

impl Default for ExperienceBank {
    fn default() -> Self {
        ExperienceBank {
            version: BANK_VERSION,
            entries: vec![],
        }
    }
}

impl ExperienceBank {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ExperienceEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    /// Inserts `entry`, replacing any entry with the same id. Returns true when new.
    pub fn store(&mut self, entry: ExperienceEntry) -> Result<bool, MemoryError> {
        entry.validate().map_err(MemoryError::InvalidEntry)?;
        match self.entries.iter_mut().find(|e| e.id == entry.id) {
            Some(slot) => {
                *slot = entry;
                Ok(false)
            }
            None => {
                self.entries.push(entry);
                Ok(true)
            }
        }
    }

    /// Entries ranked by cosine similarity (descending), ties by id.
    pub fn retrieve(
        &self,
        query: &FeatureVector,
        top_k: usize,
    ) -> Result<Vec<Scored<'_>>, MemoryError> {
        if top_k == 0 {
            return Err(MemoryError::InvalidTopK);
        }
        if self.entries.is_empty() {
            return Err(MemoryError::EmptyBank);
        }
        let mut scored: Vec<Scored<'_>> = self
            .entries
            .iter()
            .map(|entry| Scored {
                entry,
                score: cosine(query, &entry.tokens),
            })
            .collect();
        scored.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.entry.id.cmp(&b.entry.id))
        });
        scored.truncate(top_k);
        Ok(scored)
    }

    /// Head of the ranking, if the bank is nonempty.
    pub fn best(&self, query: &FeatureVector) -> Option<Scored<'_>> {
        self.retrieve(query, 1)
            .ok()
            .and_then(|v| v.into_iter().next())
    }

    pub fn validate(&self) -> Result<(), MemoryError> {
        if self.version != BANK_VERSION {
            return Err(MemoryError::CorruptBank(format!(
                "unsupported version {}",
                self.version
            )));
        }
        let mut ids = std::collections::BTreeSet::new();
        for e in &self.entries {
            e.validate().map_err(MemoryError::CorruptBank)?;
            if !ids.insert(e.id.as_str()) {
                return Err(MemoryError::CorruptBank(format!("duplicate id {}", e.id)));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bank serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, MemoryError> {
        let bank: ExperienceBank =
            serde_json::from_str(text).map_err(|e| MemoryError::CorruptBank(e.to_string()))?;
        bank.validate()?;
        Ok(bank)
    }

    pub fn persist(&self, path: impl AsRef<Path>) -> Result<(), MemoryError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json())
            .map_err(|e| MemoryError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MemoryError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| MemoryError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
