//! The closed tag vocabulary shared by annotation and text conditioning.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub const SEMANTIC_TAGS: &[&str] = &[
    "child",
    "young adult",
    "middle-aged",
    "elderly",
    "glasses",
    "no accessories",
    "smiling",
    "neutral expression",
];

pub const PHOTOGRAPHIC_TAGS: &[&str] = &[
    "soft lighting",
    "hard lighting",
    "sharp focus",
    "soft focus",
    "smooth skin",
    "detailed skin texture",
    "no makeup",
    "natural makeup",
    "red lipstick",
];

/// A set of prompt tags. The empty set is the null prompt.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TagSet(pub Vec<String>);

impl TagSet {
    pub fn null() -> Self {
        Self(Vec::new())
    }

    pub fn is_null(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }
}

impl<S: Into<String>> FromIterator<S> for TagSet {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Self(iter.into_iter().map(Into::into).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagVocab {
    tags: Vec<String>,
}

impl Default for TagVocab {
    fn default() -> Self {
        Self::new(SEMANTIC_TAGS.iter().chain(PHOTOGRAPHIC_TAGS).map(|s| s.to_string()).collect())
    }
}

impl TagVocab {
    pub fn new(tags: Vec<String>) -> Self {
        Self { tags }
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    pub fn contains(&self, tag: &str) -> bool {
        self.tags.iter().any(|t| t == tag)
    }

    /// Embedding-table rows for `set`; row 0 is the null embedding, so
    /// vocabulary entry `i` maps to row `i + 1`.
    pub fn rows(&self, set: &TagSet) -> Result<Vec<usize>> {
        if set.is_null() {
            return Ok(vec![0]);
        }
        set.iter()
            .map(|tag| {
                self.tags
                    .iter()
                    .position(|t| t == tag)
                    .map(|i| i + 1)
                    .ok_or_else(|| invalid(format!("tag {tag:?} not in vocabulary")))
            })
            .collect()
    }

    pub fn validate(&self, set: &TagSet) -> Result<()> {
        self.rows(set).map(|_| ())
    }
}
