//! Relevance feedback: turning a user-arranged board into the next query.
//!
//! Each image contributes the confidence-weighted mean of its label vectors.
//! Before averaging, a label is scaled by the cell's `beta` when it sits
//! closer to the y-axis word `w1` and by `alpha` otherwise, so dragging an
//! image upward or rightward pulls the board mean toward that axis word.
//! The board mean (minus any struck labels) is then turned into a query by
//! taking its nearest vocabulary words.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::board::{BoardError, BoardState, GridCoord, PositionWeights};
use crate::config::Config;
use crate::embedding::{cos_sim, EmbeddingError, EmbeddingStore, SimilarityResult, WordVector};
use crate::imagery::{
    normalize_label, resolve_label, resolved_labels, CorpusManifest, FixtureLabeler, FixtureSource,
    ImageSource, ImageryError, LabeledImage, Labeler,
};

#[derive(Debug, Error)]
pub enum FeedbackError {
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Imagery(#[from] ImageryError),
    #[error(transparent)]
    Board(#[from] BoardError),
    #[error("image {0:?} has no label in the vocabulary")]
    ImageSkipped(String),
    #[error("the board has no usable images; keep at least one image on the board")]
    EmptyBoard,
    #[error("{action} is not supported by the {kind} algorithm")]
    Unsupported { kind: AlgorithmKind, action: String },
    #[error("invalid axis words: {0}")]
    InvalidAxis(String),
    #[error("the image search returned no images for {0:?}")]
    NoImages(Vec<String>),
    #[error("unknown image {0:?}")]
    UnknownImage(String),
    #[error("cannot strike {label:?}: {reason}")]
    InvalidStrike { label: String, reason: String },
}

pub type Result<T, E = FeedbackError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgorithmKind {
    /// One search, no iteration.
    Baseline,
    /// Delete and refill with the original query.
    Reference1,
    /// Position-weighted query update.
    Proposed,
    /// Position-weighted query update with struck labels subtracted.
    Reference2,
}

impl AlgorithmKind {
    pub const ALL: [AlgorithmKind; 4] = [
        AlgorithmKind::Baseline,
        AlgorithmKind::Reference1,
        AlgorithmKind::Proposed,
        AlgorithmKind::Reference2,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            AlgorithmKind::Baseline => "baseline",
            AlgorithmKind::Reference1 => "reference1",
            AlgorithmKind::Proposed => "proposed",
            AlgorithmKind::Reference2 => "reference2",
        }
    }

    pub fn capabilities(&self) -> Capabilities {
        use AlgorithmKind::*;
        Capabilities {
            move_image: matches!(self, Proposed | Reference2),
            delete: !matches!(self, Baseline),
            strike: matches!(self, Reference2),
            next: !matches!(self, Baseline),
            export: true,
        }
    }
}

impl fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AlgorithmKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown algorithm {s:?}"))
    }
}

/// Which user actions an algorithm accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    #[serde(rename = "move")]
    pub move_image: bool,
    pub delete: bool,
    pub strike: bool,
    pub next: bool,
    pub export: bool,
}

/// The fixed axis words and the evolving query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptSpace {
    pub w1: String,
    pub w2: String,
    pub current_query: Vec<String>,
    pub negative_words: BTreeSet<String>,
}

impl ConceptSpace {
    pub fn new(store: &EmbeddingStore, w1: &str, w2: &str) -> Result<Self> {
        let (w1, w2) = (w1.trim().to_string(), w2.trim().to_string());
        for w in [&w1, &w2] {
            if !store.contains(w) {
                return Err(FeedbackError::InvalidAxis(format!(
                    "query word unknown: {w:?}"
                )));
            }
        }
        if w1 == w2 {
            return Err(FeedbackError::InvalidAxis(format!(
                "w1 and w2 must differ (both {w1:?})"
            )));
        }
        Ok(Self {
            current_query: vec![w1.clone(), w2.clone()],
            w1,
            w2,
            negative_words: BTreeSet::new(),
        })
    }

    pub fn initial_query(&self) -> Vec<String> {
        vec![self.w1.clone(), self.w2.clone()]
    }

    /// Record a struck label. Returns false when it was already struck.
    pub fn strike(&mut self, store: &EmbeddingStore, label: &str) -> Result<bool> {
        let normalized = normalize_label(label);
        let reject = |reason: &str| FeedbackError::InvalidStrike {
            label: label.to_string(),
            reason: reason.to_string(),
        };
        if normalized == self.w1 || normalized == self.w2 {
            return Err(reject("axis words cannot be struck"));
        }
        if resolve_label(store, &normalized).is_none() {
            return Err(reject("label is not in the vocabulary"));
        }
        Ok(self.negative_words.insert(normalized))
    }

    fn axis_vectors(&self, store: &EmbeddingStore) -> Result<(WordVector, WordVector)> {
        Ok((store.vector_of(&self.w1)?, store.vector_of(&self.w2)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelClass {
    W1,
    W2,
}

/// `W1` iff the label is strictly closer to `w1` than to `w2`.
pub fn classify_label(label: &WordVector, w1: &WordVector, w2: &WordVector) -> Result<LabelClass> {
    if cos_sim(label, w1)? > cos_sim(label, w2)? {
        Ok(LabelClass::W1)
    } else {
        Ok(LabelClass::W2)
    }
}

/// Board mean, with the counts that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoardVector {
    pub values: Vec<f64>,
    pub images_used: usize,
    pub negatives_used: usize,
    /// Images on the board whose labels were all out of vocabulary.
    pub skipped: Vec<String>,
}

impl BoardVector {
    pub fn as_word_vector(&self) -> WordVector {
        WordVector::new(self.values.clone())
    }
}

/// Position-weighted image vector: `Σⱼ sⱼ vⱼ wⱼ / k`, with `wⱼ` the cell's
/// beta for `w1`-class labels and alpha otherwise, `k` the number of labels
/// that resolved.
pub fn image_weighted_vector(
    image: &LabeledImage,
    at: GridCoord,
    pw: &PositionWeights,
    space: &ConceptSpace,
    store: &EmbeddingStore,
) -> Result<WordVector> {
    let (w1, w2) = space.axis_vectors(store)?;
    weighted_vector(image, at, pw, &w1, &w2, store)
}

fn weighted_vector(
    image: &LabeledImage,
    at: GridCoord,
    pw: &PositionWeights,
    w1: &WordVector,
    w2: &WordVector,
    store: &EmbeddingStore,
) -> Result<WordVector> {
    let resolved = resolved_labels(store, &image.id, &image.labels);
    if resolved.is_empty() {
        return Err(FeedbackError::ImageSkipped(image.id.clone()));
    }
    let (alpha, beta) = pw.weights_at(at);
    let mut acc = vec![0.0; store.dim()];
    for (ls, v) in &resolved {
        let weight = match classify_label(v, w1, w2)? {
            LabelClass::W1 => beta,
            LabelClass::W2 => alpha,
        };
        let coef = ls.score * weight;
        for (a, x) in acc.iter_mut().zip(&v.values) {
            *a += coef * x;
        }
    }
    let k = resolved.len() as f64;
    acc.iter_mut().for_each(|a| *a /= k);
    Ok(WordVector::new(acc))
}

struct WeightedSum {
    sum: Vec<f64>,
    used: usize,
    skipped: Vec<String>,
}

fn weighted_sum(
    board: &BoardState,
    images: &HashMap<String, LabeledImage>,
    pw: &PositionWeights,
    space: &ConceptSpace,
    store: &EmbeddingStore,
) -> Result<WeightedSum> {
    let (w1, w2) = space.axis_vectors(store)?;
    let mut sum = vec![0.0; store.dim()];
    let mut used = 0;
    let mut skipped = Vec::new();
    for (at, id) in board.occupied() {
        let image = images
            .get(id)
            .ok_or_else(|| FeedbackError::UnknownImage(id.to_string()))?;
        match weighted_vector(image, at, pw, &w1, &w2, store) {
            Ok(v) => {
                for (a, x) in sum.iter_mut().zip(&v.values) {
                    *a += x;
                }
                used += 1;
            }
            Err(FeedbackError::ImageSkipped(id)) => {
                tracing::warn!(image = %id, "no usable labels; image ignored in board mean");
                skipped.push(id);
            }
            Err(e) => return Err(e),
        }
    }
    if used == 0 {
        return Err(FeedbackError::EmptyBoard);
    }
    Ok(WeightedSum { sum, used, skipped })
}

/// `U = Σᵢ weighted v̄ᵢ / m` over the usable images on the board.
pub fn board_mean(
    board: &BoardState,
    images: &HashMap<String, LabeledImage>,
    pw: &PositionWeights,
    space: &ConceptSpace,
    store: &EmbeddingStore,
) -> Result<BoardVector> {
    let WeightedSum {
        mut sum,
        used,
        skipped,
    } = weighted_sum(board, images, pw, space, store)?;
    let m = used as f64;
    sum.iter_mut().for_each(|a| *a /= m);
    Ok(BoardVector {
        values: sum,
        images_used: used,
        negatives_used: 0,
        skipped,
    })
}

/// `U = (Σᵢ weighted v̄ᵢ − Σ v_neg) / (m + n)` over the usable images and the
/// distinct struck words.
pub fn board_mean_with_negatives(
    board: &BoardState,
    images: &HashMap<String, LabeledImage>,
    pw: &PositionWeights,
    space: &ConceptSpace,
    store: &EmbeddingStore,
    negatives: &BTreeSet<String>,
) -> Result<BoardVector> {
    let WeightedSum {
        mut sum,
        used,
        skipped,
    } = weighted_sum(board, images, pw, space, store)?;
    for word in negatives {
        let v = resolve_label(store, word)
            .ok_or_else(|| EmbeddingError::OutOfVocabulary(word.clone()))?;
        for (a, x) in sum.iter_mut().zip(&v.values) {
            *a -= x;
        }
    }
    let total = (used + negatives.len()) as f64;
    sum.iter_mut().for_each(|a| *a /= total);
    Ok(BoardVector {
        values: sum,
        images_used: used,
        negatives_used: negatives.len(),
        skipped,
    })
}

/// Board mean for `kind`: struck labels only count for reference2.
pub fn board_vector_for(
    kind: AlgorithmKind,
    board: &BoardState,
    images: &HashMap<String, LabeledImage>,
    pw: &PositionWeights,
    space: &ConceptSpace,
    store: &EmbeddingStore,
) -> Result<BoardVector> {
    match kind {
        AlgorithmKind::Reference2 => {
            board_mean_with_negatives(board, images, pw, space, store, &space.negative_words)
        }
        _ => board_mean(board, images, pw, space, store),
    }
}

/// Tokens made only of letters and underscores.
pub fn is_query_token(word: &str) -> bool {
    !word.is_empty() && word.chars().all(|c| c.is_alphabetic() || c == '_')
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryUpdate {
    pub query: Vec<String>,
    pub top_n: Vec<SimilarityResult>,
    /// No candidate survived exclusion; `query` is the previous query.
    pub stalled: bool,
}

/// Nearest words to `u`, excluding the axis words, the current query, struck
/// labels and non-alphabetic tokens. The first `new_query_size` survivors
/// become the next query.
pub fn new_query(
    space: &ConceptSpace,
    u: &BoardVector,
    store: &EmbeddingStore,
    config: &Config,
) -> Result<QueryUpdate> {
    let mut exclude: HashSet<String> = HashSet::new();
    exclude.insert(space.w1.clone());
    exclude.insert(space.w2.clone());
    exclude.extend(space.current_query.iter().cloned());
    for neg in &space.negative_words {
        exclude.insert(neg.clone());
        exclude.insert(neg.replace(' ', "_"));
    }
    let top_n = store.most_similar_by(&[u.as_word_vector()], &[], config.top_n_words, |w| {
        is_query_token(w) && !exclude.contains(w)
    })?;
    if top_n.is_empty() {
        tracing::warn!("query update stalled: every candidate word was excluded");
        return Ok(QueryUpdate {
            query: space.current_query.clone(),
            top_n,
            stalled: true,
        });
    }
    let query = top_n
        .iter()
        .take(config.new_query_size)
        .map(|s| s.word.clone())
        .collect();
    Ok(QueryUpdate {
        query,
        top_n,
        stalled: false,
    })
}

/// Shared, read-only backends.
#[derive(Clone)]
pub struct Services {
    pub store: Arc<EmbeddingStore>,
    pub source: Arc<dyn ImageSource>,
    pub labeler: Arc<dyn Labeler>,
}

impl Services {
    /// Services backed by a local fixture corpus.
    pub fn fixture(
        store: Arc<EmbeddingStore>,
        corpus: Arc<CorpusManifest>,
        labels_per_image: usize,
    ) -> Self {
        Self {
            source: Arc::new(FixtureSource::with_keep(
                corpus.clone(),
                store.clone(),
                labels_per_image,
            )),
            labeler: Arc::new(FixtureLabeler::with_keep(corpus, labels_per_image)),
            store,
        }
    }
}

impl fmt::Debug for Services {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Services")
            .field("words", &self.store.len())
            .field("dim", &self.store.dim())
            .finish_non_exhaustive()
    }
}

/// Mutable per-session state the algorithms operate on.
#[derive(Debug, Clone, PartialEq)]
pub struct BoardSession {
    pub board: BoardState,
    pub space: ConceptSpace,
    /// Every image ever placed, by id.
    pub catalog: HashMap<String, LabeledImage>,
    /// Ids ever shown; refills never repeat them.
    pub seen: BTreeSet<String>,
}

impl BoardSession {
    pub fn new(space: ConceptSpace) -> Self {
        Self {
            board: BoardState::new(space.w1.clone(), space.w2.clone()),
            space,
            catalog: HashMap::new(),
            seen: BTreeSet::new(),
        }
    }

    pub fn image(&self, id: &str) -> Option<&LabeledImage> {
        self.catalog.get(id)
    }

    fn fetch(
        &mut self,
        services: &Services,
        query: &[String],
        config: &Config,
        limit: usize,
    ) -> Result<Vec<LabeledImage>> {
        let exclude: HashSet<String> = self.seen.iter().cloned().collect();
        let found = services
            .source
            .search(query, &config.fields, limit, &exclude)?;
        let mut out = Vec::with_capacity(found.len());
        for mut image in found {
            image.labels = services.labeler.label(&image)?;
            image.labels.truncate(config.labels_per_image);
            self.seen.insert(image.id.clone());
            self.catalog.insert(image.id.clone(), image.clone());
            out.push(image);
        }
        Ok(out)
    }

    /// Search with `(w1, w2)` and place the top nine at random.
    pub fn initial_search(
        &mut self,
        services: &Services,
        config: &Config,
        seed: u64,
    ) -> Result<Vec<(GridCoord, String)>> {
        let query = self.space.initial_query();
        let images = self.fetch(services, &query, config, crate::board::CELL_COUNT)?;
        if images.is_empty() {
            return Err(FeedbackError::NoImages(query));
        }
        self.board.place_initial(&images, seed)?;
        Ok(self
            .board
            .occupied()
            .map(|(c, id)| (c, id.to_string()))
            .collect())
    }

    fn refill(
        &mut self,
        services: &Services,
        config: &Config,
        query: &[String],
    ) -> Result<Vec<(GridCoord, String)>> {
        let empty = self.board.empty_cells().count();
        if empty == 0 {
            return Ok(Vec::new());
        }
        let images = self.fetch(services, query, config, empty)?;
        Ok(self.board.fill(images.into_iter().map(|i| i.id))?)
    }
}

/// What one iteration did.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationOutcome {
    /// The query used for this iteration's refill.
    pub query: Vec<String>,
    pub top_n: Vec<SimilarityResult>,
    pub stalled: bool,
    pub filled: Vec<(GridCoord, String)>,
    /// Board mean the query was derived from (proposed and reference2).
    pub feedback_vector: Option<BoardVector>,
}

/// Advance a session one iteration after the user has arranged the board.
pub fn run_iteration(
    kind: AlgorithmKind,
    state: &mut BoardSession,
    services: &Services,
    config: &Config,
) -> Result<IterationOutcome> {
    match kind {
        AlgorithmKind::Baseline => Err(FeedbackError::Unsupported {
            kind,
            action: "next".into(),
        }),
        AlgorithmKind::Reference1 => {
            let query = state.space.initial_query();
            let filled = state.refill(services, config, &query)?;
            Ok(IterationOutcome {
                query,
                top_n: Vec::new(),
                stalled: false,
                filled,
                feedback_vector: None,
            })
        }
        AlgorithmKind::Proposed | AlgorithmKind::Reference2 => {
            let u = board_vector_for(
                kind,
                &state.board,
                &state.catalog,
                &config.position_weights,
                &state.space,
                &services.store,
            )?;
            let update = new_query(&state.space, &u, &services.store, config)?;
            state.space.current_query = update.query.clone();
            let filled = state.refill(services, config, &update.query)?;
            Ok(IterationOutcome {
                query: update.query,
                top_n: update.top_n,
                stalled: update.stalled,
                filled,
                feedback_vector: Some(u),
            })
        }
    }
}
