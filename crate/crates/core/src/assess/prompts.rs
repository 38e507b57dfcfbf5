use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{DeclipError, Result};

pub const DEFAULT_ATTRIBUTE_TABLE: &str = include_str!("../../data/attribute_prompts.tsv");

/// Positive and negative prompt texts, optionally tied to an attribute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AntonymPromptPair {
    pub positive: String,
    pub negative: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribute: Option<String>,
}

impl AntonymPromptPair {
    pub fn new(positive: impl Into<String>, negative: impl Into<String>) -> Result<Self> {
        let pair = Self {
            positive: positive.into(),
            negative: negative.into(),
            attribute: None,
        };
        pair.validate()?;
        Ok(pair)
    }

    /// The stock quality pair.
    pub fn quality() -> Self {
        Self::new("Good photo.", "Bad photo.").expect("valid stock prompts")
    }

    pub fn with_attribute(mut self, attribute: impl Into<String>) -> Self {
        self.attribute = Some(attribute.into());
        self
    }

    /// A pair that skips the distinctness check; identical texts score 0.5.
    pub fn degenerate(text: impl Into<String>) -> Self {
        let text = text.into();
        Self {
            positive: text.clone(),
            negative: text,
            attribute: None,
        }
    }

    pub fn check_non_empty(&self) -> Result<()> {
        if self.positive.trim().is_empty() || self.negative.trim().is_empty() {
            return Err(DeclipError::InvalidPrompt("prompts must be non-empty".into()));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.check_non_empty()?;
        if self.positive == self.negative {
            return Err(DeclipError::InvalidPrompt(format!(
                "positive and negative prompts are both `{}`",
                self.positive
            )));
        }
        Ok(())
    }
}

/// Attribute name to antonym prompts, read from `attribute<TAB>positive<TAB>negative` lines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeTable {
    pairs: BTreeMap<String, AntonymPromptPair>,
}

impl AttributeTable {
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let malformed = |reason: &str| DeclipError::MalformedLine {
                line: idx + 1,
                reason: reason.to_string(),
            };
            if cols.len() != 3 {
                return Err(malformed("expected attribute, positive and negative columns"));
            }
            let pair = AntonymPromptPair::new(cols[1].trim(), cols[2].trim())
                .map_err(|e| malformed(&e.to_string()))?
                .with_attribute(cols[0].trim());
            if pairs.insert(cols[0].trim().to_string(), pair).is_some() {
                return Err(malformed("duplicate attribute"));
            }
        }
        Ok(Self { pairs })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| DeclipError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn get(&self, attribute: &str) -> Result<&AntonymPromptPair> {
        self.pairs
            .get(attribute)
            .ok_or_else(|| DeclipError::UnknownAttribute(attribute.to_string()))
    }

    pub fn attributes(&self) -> impl Iterator<Item = &str> {
        self.pairs.keys().map(String::as_str)
    }
}

impl Default for AttributeTable {
    fn default() -> Self {
        Self::parse(DEFAULT_ATTRIBUTE_TABLE).expect("shipped attribute table is valid")
    }
}
