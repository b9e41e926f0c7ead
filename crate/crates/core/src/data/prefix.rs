//! Task-type prefixes prepended to texts before encoding.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrefixKind {
    SearchQuery,
    SearchDocument,
    Classification,
    Clustering,
    /// No prefix. Only meaningful when prefix conditioning is switched off.
    None,
}

impl PrefixKind {
    pub fn name(self) -> Option<&'static str> {
        match self {
            PrefixKind::SearchQuery => Some("search_query"),
            PrefixKind::SearchDocument => Some("search_document"),
            PrefixKind::Classification => Some("classification"),
            PrefixKind::Clustering => Some("clustering"),
            PrefixKind::None => None,
        }
    }

    /// Returns `self` when `enabled`, otherwise [`PrefixKind::None`].
    pub fn if_enabled(self, enabled: bool) -> PrefixKind {
        if enabled {
            self
        } else {
            PrefixKind::None
        }
    }
}

impl fmt::Display for PrefixKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name().unwrap_or("none"))
    }
}

impl FromStr for PrefixKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "search_query" => Ok(PrefixKind::SearchQuery),
            "search_document" => Ok(PrefixKind::SearchDocument),
            "classification" => Ok(PrefixKind::Classification),
            "clustering" => Ok(PrefixKind::Clustering),
            "none" | "" => Ok(PrefixKind::None),
            other => Err(Error::InvalidInput(format!("unknown prefix `{other}`"))),
        }
    }
}

/// How the two sides of a training pair relate to each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairRole {
    /// Question or query against an answer or relevant passage.
    Retrieval,
    /// Title or summary against the document it describes.
    TitleToDocument,
    /// Paraphrase-like symmetric pairs (STS, NLI, bitext).
    Symmetric,
}

impl FromStr for PairRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "retrieval" => Ok(PairRole::Retrieval),
            "title-to-document" | "title-document" => Ok(PairRole::TitleToDocument),
            "symmetric" => Ok(PairRole::Symmetric),
            other => Err(Error::InvalidInput(format!("unknown pair role `{other}`"))),
        }
    }
}

/// Query-side and document-side prefixes for a pair role.
pub fn assign_prefix(role: PairRole) -> (PrefixKind, PrefixKind) {
    match role {
        PairRole::Retrieval => (PrefixKind::SearchQuery, PrefixKind::SearchDocument),
        PairRole::TitleToDocument => (PrefixKind::Clustering, PrefixKind::Clustering),
        PairRole::Symmetric => (PrefixKind::Classification, PrefixKind::Classification),
    }
}

/// Renders `<name>: <text>`; [`PrefixKind::None`] leaves the text untouched.
pub fn apply_prefix(prefix: PrefixKind, text: &str) -> String {
    match prefix.name() {
        Some(name) => {
            if text.is_empty() {
                log::warn!("applying prefix `{name}` to an empty text");
            }
            let mut out = String::with_capacity(name.len() + 2 + text.len());
            out.push_str(name);
            out.push_str(": ");
            out.push_str(text);
            out
        }
        None => text.to_string(),
    }
}
