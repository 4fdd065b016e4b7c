//! Per-class hint registry and the positive/negative lexicon.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

/// Used for any class without a dedicated hint.
pub const DEFAULT_CLASS_HINT: &str = "Please describe this object's color, size, condition, motion, and any distinctive features in detail.";

pub const DEFAULT_CLASS_HINTS_JSON: &str = include_str!("../../../prompts/class_hints.json");
pub const DEFAULT_POSITIVE_LEXICON: &str = include_str!("../../../prompts/lexicon/positive.txt");
pub const DEFAULT_NEGATIVE_LEXICON: &str = include_str!("../../../prompts/lexicon/negative.txt");

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PackError {
    #[error("class hint pack is not a JSON object of strings: {0}")]
    HintPack(String),
    #[error("lexicon entries appear in both lists: {0:?}")]
    LexiconOverlap(Vec<String>),
}

/// Lowercase, trim, and collapse runs of whitespace/underscores to a space,
/// so "Traffic_Light" and "traffic light" share an entry.
pub fn normalize_class_name(name: &str) -> String {
    let mut out = String::new();
    for part in name
        .split(|c: char| c.is_whitespace() || c == '_')
        .filter(|p| !p.is_empty())
    {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&part.to_lowercase());
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassHintRegistry {
    hints: BTreeMap<String, String>,
}

impl Default for ClassHintRegistry {
    fn default() -> Self {
        Self::from_json(DEFAULT_CLASS_HINTS_JSON).expect("shipped hint pack is valid")
    }
}

impl ClassHintRegistry {
    pub fn from_map(map: BTreeMap<String, String>) -> Self {
        let hints = map
            .into_iter()
            .map(|(k, v)| (normalize_class_name(&k), v))
            .filter(|(k, v)| !k.is_empty() && !v.trim().is_empty())
            .collect();
        Self { hints }
    }

    pub fn from_json(doc: &str) -> Result<Self, PackError> {
        let map: BTreeMap<String, String> =
            serde_json::from_str(doc).map_err(|e| PackError::HintPack(alloc::format!("{e}")))?;
        Ok(Self::from_map(map))
    }

    /// Registry entry for the class, or [`DEFAULT_CLASS_HINT`]. Never empty.
    pub fn lookup_hint(&self, class_name: &str) -> &str {
        self.hints
            .get(&normalize_class_name(class_name))
            .map(String::as_str)
            .unwrap_or(DEFAULT_CLASS_HINT)
    }

    pub fn len(&self) -> usize {
        self.hints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hints.is_empty()
    }

    pub fn classes(&self) -> impl Iterator<Item = &str> {
        self.hints.keys().map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    positive: Vec<String>,
    negative: Vec<String>,
}

fn word_list(text: &str) -> Vec<String> {
    let mut seen = BTreeSet::new();
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .filter(|w| seen.insert(w.clone()))
        .collect()
}

impl Default for Lexicon {
    fn default() -> Self {
        Self::from_lists(DEFAULT_POSITIVE_LEXICON, DEFAULT_NEGATIVE_LEXICON)
            .expect("shipped lexicon is disjoint")
    }
}

impl Lexicon {
    /// Parses two newline-delimited word files. Blank lines and `#` comments
    /// are skipped; entries are lowercased and deduplicated in file order.
    pub fn from_lists(positive: &str, negative: &str) -> Result<Self, PackError> {
        let positive = word_list(positive);
        let negative = word_list(negative);
        let pos: BTreeSet<&String> = positive.iter().collect();
        let overlap: Vec<String> = negative.iter().filter(|w| pos.contains(w)).cloned().collect();
        if !overlap.is_empty() {
            return Err(PackError::LexiconOverlap(overlap));
        }
        Ok(Self { positive, negative })
    }

    pub fn positive(&self) -> &[String] {
        &self.positive
    }

    pub fn negative(&self) -> &[String] {
        &self.negative
    }
}
