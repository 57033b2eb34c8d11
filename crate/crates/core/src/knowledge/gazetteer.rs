//! Offline address gazetteer.
//!
//! Addresses are compared after a fixed normalisation: lower-case, punctuation
//! replaced by spaces, whitespace collapsed and common street abbreviations
//! expanded. A raw string matches iff its normal form equals the normal form
//! of a gazetteer line.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::KnowledgeError;

/// Bumped whenever [`normalize_address`] changes behaviour.
pub const NORMALIZATION_VERSION: u32 = 1;

const ABBREVIATIONS: &[(&str, &str)] = &[
    ("apt", "apartment"),
    ("av", "avenue"),
    ("ave", "avenue"),
    ("bldg", "building"),
    ("blvd", "boulevard"),
    ("cir", "circle"),
    ("ct", "court"),
    ("dr", "drive"),
    ("e", "east"),
    ("hwy", "highway"),
    ("ln", "lane"),
    ("n", "north"),
    ("pkwy", "parkway"),
    ("pl", "place"),
    ("rd", "road"),
    ("s", "south"),
    ("st", "street"),
    ("ste", "suite"),
    ("ter", "terrace"),
    ("terr", "terrace"),
    ("w", "west"),
];

const UNIT_WORDS: &[&str] = &["apartment", "suite", "unit", "room", "building", "lot"];

fn expand(token: &str) -> &str {
    ABBREVIATIONS.binary_search_by(|(abbr, _)| abbr.cmp(&token)).map(|i| ABBREVIATIONS[i].1).unwrap_or(token)
}

fn normalized_tokens(raw: &str) -> Vec<String> {
    raw.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| expand(t).to_string())
        .collect()
}

/// Canonical form used for gazetteer comparison.
pub fn normalize_address(raw: &str) -> String {
    normalized_tokens(raw).join(" ")
}

/// A gazetteer line split into its parts. Parts are normalised; `canonical`
/// is the full normal form used as the lookup key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AddressRecord {
    pub raw: String,
    pub canonical: String,
    pub street_number: Option<String>,
    pub street_name: String,
    pub unit: Option<String>,
    pub locality: Option<String>,
}

impl AddressRecord {
    pub fn parse(raw: &str) -> Option<Self> {
        let canonical = normalize_address(raw);
        if canonical.is_empty() {
            return None;
        }
        let mut segments = raw.split(',').map(normalized_tokens).filter(|s| !s.is_empty());
        let mut head = segments.next()?;
        let mut unit = None;
        if let Some(pos) = head.iter().position(|t| UNIT_WORDS.contains(&t.as_str())) {
            unit = Some(head.split_off(pos).join(" "));
        }
        let street_number = match head.first() {
            Some(t) if t.chars().next().is_some_and(|c| c.is_ascii_digit()) => Some(head.remove(0)),
            _ => None,
        };
        let mut locality = Vec::new();
        for seg in segments {
            if unit.is_none() && UNIT_WORDS.contains(&seg[0].as_str()) {
                unit = Some(seg.join(" "));
            } else {
                locality.push(seg.join(" "));
            }
        }
        Some(Self {
            raw: raw.trim().to_string(),
            canonical,
            street_number,
            street_name: head.join(" "),
            unit,
            locality: (!locality.is_empty()).then(|| locality.join(" ")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AddressMatch {
    pub matched: bool,
    pub canonical: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct AddressGazetteer {
    entries: Vec<AddressRecord>,
    by_canonical: HashMap<String, usize>,
}

impl AddressGazetteer {
    pub fn load(path: &Path) -> Result<Self, KnowledgeError> {
        let text = std::fs::read_to_string(path).map_err(|e| KnowledgeError::io(path, e))?;
        Ok(Self::from_lines(&text))
    }

    /// One address per line; blank lines and `#` comments are ignored and
    /// lines that normalise to an existing entry are dropped.
    pub fn from_lines(text: &str) -> Self {
        let mut g = Self::default();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rec) = AddressRecord::parse(line) {
                g.insert(rec);
            }
        }
        g
    }

    fn insert(&mut self, rec: AddressRecord) -> bool {
        if self.by_canonical.contains_key(&rec.canonical) {
            return false;
        }
        self.by_canonical.insert(rec.canonical.clone(), self.entries.len());
        self.entries.push(rec);
        true
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[AddressRecord] {
        &self.entries
    }

    pub fn normalization_version(&self) -> u32 {
        NORMALIZATION_VERSION
    }

    pub fn get(&self, raw: &str) -> Option<&AddressRecord> {
        self.by_canonical.get(&normalize_address(raw)).map(|&i| &self.entries[i])
    }

    pub fn contains(&self, raw: &str) -> bool {
        self.get(raw).is_some()
    }
}

pub fn lookup_address(gazetteer: &AddressGazetteer, raw: &str) -> AddressMatch {
    match gazetteer.get(raw) {
        Some(rec) => AddressMatch { matched: true, canonical: Some(rec.canonical.clone()) },
        None => AddressMatch { matched: false, canonical: None },
    }
}
