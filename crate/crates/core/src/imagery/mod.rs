//! Image retrieval and labeling.
//!
//! Two pluggable seams: [`ImageSource`] turns a word query into a ranked list
//! of images and [`Labeler`] produces (label, confidence) pairs for an image.
//! The [`corpus`] module backs both with a local manifest; [`remote`] holds
//! HTTP adapters for hosted search and labeling services.

pub mod corpus;
pub mod remote;

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{mean_vector, EmbeddingStore, WordVector};

pub use corpus::{load_corpus, CorpusManifest, FixtureLabeler, FixtureSource, ManifestEntry};

/// Labels retained per image by default.
pub const DEFAULT_LABELS_PER_IMAGE: usize = 5;

#[derive(Debug, Error)]
pub enum ImageryError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest is not valid JSON: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("manifest entry {id:?}: {reason}")]
    InvalidEntry { id: String, reason: String },
    #[error("duplicate image id {0:?} in manifest")]
    DuplicateId(String),
    #[error("image not found: {0:?}")]
    NotFound(String),
    #[error("no query word is in the vocabulary: {0:?}")]
    UnknownQuery(Vec<String>),
    #[error("query must contain at least one word and limit must be >= 1")]
    EmptyQuery,
    #[error("transport error talking to {service}: {message}")]
    Transport { service: String, message: String },
    #[error("{service} returned an unexpected response: {message}")]
    BadResponse { service: String, message: String },
}

pub type Result<T, E = ImageryError> = std::result::Result<T, E>;

/// Design fields an image can belong to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    IndustrialDesign,
    Architecture,
    Fashion,
}

impl Field {
    pub const ALL: [Field; 3] = [Field::IndustrialDesign, Field::Architecture, Field::Fashion];

    pub fn as_str(&self) -> &'static str {
        match self {
            Field::IndustrialDesign => "industrial_design",
            Field::Architecture => "architecture",
            Field::Fashion => "fashion",
        }
    }

    pub fn all() -> BTreeSet<Field> {
        Self::ALL.into_iter().collect()
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Field {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Field::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| format!("unknown field {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelScore {
    pub label: String,
    pub score: f64,
}

impl LabelScore {
    pub fn new(label: impl Into<String>, score: f64) -> Self {
        Self {
            label: label.into(),
            score,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledImage {
    pub id: String,
    pub uri: String,
    pub field: Field,
    pub labels: Vec<LabelScore>,
    pub source_rank: usize,
}

/// A search backend.
pub trait ImageSource: Send + Sync {
    /// Ranked images for `query`, restricted to `fields`, never returning an
    /// id in `exclude`, at most `limit` long.
    fn search(
        &self,
        query: &[String],
        fields: &BTreeSet<Field>,
        limit: usize,
        exclude: &HashSet<String>,
    ) -> Result<Vec<LabeledImage>>;
}

/// A labeling backend.
pub trait Labeler: Send + Sync {
    fn label(&self, image: &LabeledImage) -> Result<Vec<LabelScore>>;
}

/// Stable sort by descending score, then keep the first `keep`.
pub fn rank_labels(mut labels: Vec<LabelScore>, keep: usize) -> Vec<LabelScore> {
    labels.sort_by(|a, b| b.score.total_cmp(&a.score));
    labels.truncate(keep);
    labels
}

/// Lowercase and collapse internal whitespace.
pub fn normalize_label(label: &str) -> String {
    label
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Map a label to an embedding vector.
///
/// Tries the normalized label, then its underscore-joined form, then the
/// unit-normalized mean of its individual words (every word must be known).
pub fn resolve_label(store: &EmbeddingStore, label: &str) -> Option<WordVector> {
    let normalized = normalize_label(label);
    if normalized.is_empty() {
        return None;
    }
    if let Ok(v) = store.vector_of(&normalized) {
        return Some(v);
    }
    if !normalized.contains(' ') {
        return None;
    }
    let joined = normalized.replace(' ', "_");
    if let Ok(v) = store.vector_of(&joined) {
        return Some(v);
    }
    let parts: Vec<WordVector> = normalized
        .split(' ')
        .map(|w| store.vector_of(w).ok())
        .collect::<Option<_>>()?;
    let mean = mean_vector(parts.iter().map(|v| (v, 1.0))).ok()?;
    let n = mean.norm();
    if n == 0.0 {
        return None;
    }
    Some(WordVector::named(
        joined,
        mean.values.iter().map(|x| x / n).collect(),
    ))
}

/// Resolved label vectors paired with their confidences. OOV labels are
/// dropped with a warning.
pub fn resolved_labels(
    store: &EmbeddingStore,
    image_id: &str,
    labels: &[LabelScore],
) -> Vec<(LabelScore, WordVector)> {
    labels
        .iter()
        .filter_map(|ls| match resolve_label(store, &ls.label) {
            Some(v) => Some((ls.clone(), v)),
            None => {
                tracing::warn!(image = image_id, label = %ls.label, "label not in vocabulary, skipped");
                None
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> EmbeddingStore {
        EmbeddingStore::from_rows([
            ("chair", vec![1.0, 0.0, 0.0]),
            ("wooden", vec![0.0, 1.0, 0.0]),
            ("living_room", vec![0.0, 0.0, 1.0]),
        ])
        .unwrap()
    }

    #[test]
    fn ranks_labels_stably() {
        let labels = vec![
            LabelScore::new("a", 0.83),
            LabelScore::new("b", 0.97),
            LabelScore::new("c", 0.83),
        ];
        let ranked = rank_labels(labels, 5);
        let names: Vec<_> = ranked.iter().map(|l| l.label.as_str()).collect();
        assert_eq!(names, ["b", "a", "c"]);
    }

    #[test]
    fn truncates_to_keep() {
        let labels = (0..7)
            .map(|i| LabelScore::new(format!("l{i}"), 0.9 - i as f64 * 0.1))
            .collect();
        let ranked = rank_labels(labels, 5);
        assert_eq!(ranked.len(), 5);
        assert_eq!(ranked[4].label, "l4");
    }

    #[test]
    fn label_resolution_fallbacks() {
        let s = store();
        assert_eq!(
            resolve_label(&s, "  Chair ").unwrap().values,
            vec![1.0, 0.0, 0.0]
        );
        assert_eq!(
            resolve_label(&s, "Living   Room").unwrap().values,
            vec![0.0, 0.0, 1.0]
        );
        let phrase = resolve_label(&s, "wooden chair").unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((phrase.values[0] - h).abs() < 1e-12);
        assert!((phrase.values[1] - h).abs() < 1e-12);
        assert!(resolve_label(&s, "plastic chair").is_none());
        assert!(resolve_label(&s, "sofa").is_none());
        assert!(resolve_label(&s, "   ").is_none());
    }

    #[test]
    fn field_round_trips_through_str() {
        for f in Field::ALL {
            assert_eq!(f.as_str().parse::<Field>().unwrap(), f);
        }
        assert!("graphic".parse::<Field>().is_err());
    }
}
