//! Local fixture corpus: a JSON manifest of labeled images on disk.
//!
//! ```json
//! {"version": "demo-1",
//!  "entries": [{"id": "id-001", "file": "images/id-001.png",
//!               "field": "industrial_design",
//!               "labels": [{"label": "chair", "score": 0.94}]}]}
//! ```
//!
//! `file` is resolved relative to the manifest's directory.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    normalize_label, rank_labels, resolve_label, resolved_labels, Field, ImageSource, ImageryError,
    LabelScore, LabeledImage, Labeler, Result, DEFAULT_LABELS_PER_IMAGE,
};
use crate::embedding::{cosine, mean_vector, EmbeddingStore, WordVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub file: String,
    pub field: Field,
    pub labels: Vec<LabelScore>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestFile {
    version: String,
    entries: Vec<ManifestEntry>,
}

/// A validated manifest.
#[derive(Debug, Clone)]
pub struct CorpusManifest {
    pub version: String,
    pub entries: Vec<ManifestEntry>,
    base_dir: PathBuf,
    by_id: HashMap<String, usize>,
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<CorpusManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ImageryError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    CorpusManifest::from_json(&text, base_dir)
}

impl CorpusManifest {
    /// Parse and validate manifest JSON whose files live under `base_dir`.
    pub fn from_json(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let file: ManifestFile = serde_json::from_str(text)?;
        let base_dir = base_dir.into();
        let mut by_id = HashMap::with_capacity(file.entries.len());
        for (i, entry) in file.entries.iter().enumerate() {
            if entry.id.is_empty() {
                return Err(invalid(&entry.id, "empty id"));
            }
            if by_id.insert(entry.id.clone(), i).is_some() {
                return Err(ImageryError::DuplicateId(entry.id.clone()));
            }
            let mut labels = HashSet::new();
            for ls in &entry.labels {
                if ls.label.trim().is_empty() {
                    return Err(invalid(&entry.id, "empty label"));
                }
                if !labels.insert(normalize_label(&ls.label)) {
                    return Err(invalid(
                        &entry.id,
                        &format!("duplicate label {:?}", ls.label),
                    ));
                }
                if !(ls.score > 0.0 && ls.score <= 1.0) {
                    return Err(invalid(
                        &entry.id,
                        &format!("score {} for {:?} outside (0, 1]", ls.score, ls.label),
                    ));
                }
            }
            let resolved = base_dir.join(&entry.file);
            if !resolved.is_file() {
                return Err(invalid(
                    &entry.id,
                    &format!("file {} does not exist", resolved.display()),
                ));
            }
        }
        Ok(Self {
            version: file.version,
            entries: file.entries,
            base_dir,
            by_id,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ManifestEntry> {
        self.by_id.get(id).map(|&i| &self.entries[i])
    }

    pub fn image_path(&self, id: &str) -> Result<PathBuf> {
        self.get(id)
            .map(|e| self.base_dir.join(&e.file))
            .ok_or_else(|| ImageryError::NotFound(id.to_string()))
    }

    pub fn image_bytes(&self, id: &str) -> Result<Vec<u8>> {
        let path = self.image_path(id)?;
        std::fs::read(&path).map_err(|source| ImageryError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// Location the session service serves the image bytes from.
    pub fn uri_for(id: &str) -> String {
        format!("/images/{id}")
    }
}

fn invalid(id: &str, reason: &str) -> ImageryError {
    ImageryError::InvalidEntry {
        id: id.to_string(),
        reason: reason.to_string(),
    }
}

/// Labels straight from the manifest, ranked and truncated.
#[derive(Debug, Clone)]
pub struct FixtureLabeler {
    corpus: Arc<CorpusManifest>,
    keep: usize,
}

impl FixtureLabeler {
    pub fn new(corpus: Arc<CorpusManifest>) -> Self {
        Self::with_keep(corpus, DEFAULT_LABELS_PER_IMAGE)
    }

    pub fn with_keep(corpus: Arc<CorpusManifest>, keep: usize) -> Self {
        Self { corpus, keep }
    }
}

impl Labeler for FixtureLabeler {
    fn label(&self, image: &LabeledImage) -> Result<Vec<LabelScore>> {
        let entry = self
            .corpus
            .get(&image.id)
            .ok_or_else(|| ImageryError::NotFound(image.id.clone()))?;
        Ok(rank_labels(entry.labels.clone(), self.keep))
    }
}

/// Ranks manifest images by cosine between each image's confidence-weighted
/// label mean and the mean of the query word vectors.
#[derive(Debug, Clone)]
pub struct FixtureSource {
    corpus: Arc<CorpusManifest>,
    store: Arc<EmbeddingStore>,
    keep: usize,
    // Per-entry label mean; None when no label resolves.
    vectors: Vec<Option<WordVector>>,
}

impl FixtureSource {
    pub fn new(corpus: Arc<CorpusManifest>, store: Arc<EmbeddingStore>) -> Self {
        Self::with_keep(corpus, store, DEFAULT_LABELS_PER_IMAGE)
    }

    pub fn with_keep(corpus: Arc<CorpusManifest>, store: Arc<EmbeddingStore>, keep: usize) -> Self {
        let vectors = corpus
            .entries
            .iter()
            .map(|e| {
                let labels = rank_labels(e.labels.clone(), keep);
                let resolved = resolved_labels(&store, &e.id, &labels);
                if resolved.is_empty() {
                    return None;
                }
                mean_vector(resolved.iter().map(|(ls, v)| (v, ls.score))).ok()
            })
            .collect();
        Self {
            corpus,
            store,
            keep,
            vectors,
        }
    }

    pub fn corpus(&self) -> &Arc<CorpusManifest> {
        &self.corpus
    }

    fn query_vector(&self, query: &[String]) -> Result<WordVector> {
        let words: Vec<WordVector> = query
            .iter()
            .filter_map(|w| resolve_label(&self.store, w))
            .collect();
        if words.is_empty() {
            return Err(ImageryError::UnknownQuery(query.to_vec()));
        }
        mean_vector(words.iter().map(|v| (v, 1.0))).map_err(|_| ImageryError::EmptyQuery)
    }
}

impl ImageSource for FixtureSource {
    fn search(
        &self,
        query: &[String],
        fields: &BTreeSet<Field>,
        limit: usize,
        exclude: &HashSet<String>,
    ) -> Result<Vec<LabeledImage>> {
        if query.is_empty() || limit == 0 {
            return Err(ImageryError::EmptyQuery);
        }
        let q = self.query_vector(query)?;
        if q.is_zero() {
            return Err(ImageryError::UnknownQuery(query.to_vec()));
        }
        let mut scored: Vec<(f64, &ManifestEntry)> = self
            .corpus
            .entries
            .iter()
            .zip(&self.vectors)
            .filter(|(e, _)| fields.contains(&e.field) && !exclude.contains(&e.id))
            .filter_map(|(e, v)| {
                let v = v.as_ref()?;
                cosine(&v.values, &q.values).ok().map(|s| (s, e))
            })
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.id.cmp(&b.1.id)));
        Ok(scored
            .into_iter()
            .take(limit)
            .enumerate()
            .map(|(rank, (_, e))| LabeledImage {
                id: e.id.clone(),
                uri: CorpusManifest::uri_for(&e.id),
                field: e.field,
                labels: rank_labels(e.labels.clone(), self.keep),
                source_rank: rank + 1,
            })
            .collect())
    }
}
