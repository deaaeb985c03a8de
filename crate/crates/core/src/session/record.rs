use std::collections::{BTreeSet, HashMap};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::board::{BoardState, GridCoord, PositionWeights};
use crate::embedding::{cosine, EmbeddingStore, SimilarityResult};
use crate::feedback::{
    board_vector_for, image_weighted_vector, AlgorithmKind, BoardSession, BoardVector,
    ConceptSpace, FeedbackError,
};
use crate::imagery::{Field, LabelScore, LabeledImage};

/// One image as it sat on the board when the iteration closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageEntry {
    pub id: String,
    pub x: u8,
    pub y: u8,
    pub labels: Vec<String>,
    pub scores: Vec<f64>,
    /// Cosine between `w1` and the image's position-weighted vector; null
    /// when no label resolved.
    pub cos_w1: Option<f64>,
    pub cos_w2: Option<f64>,
}

/// One line of the session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub session_id: String,
    pub kind: AlgorithmKind,
    pub iteration_id: u32,
    pub w1: String,
    pub w2: String,
    /// Query that produced this iteration's new images.
    pub query: Vec<String>,
    pub images: Vec<ImageEntry>,
    pub cos_w1_u: Option<f64>,
    pub cos_w2_u: Option<f64>,
    /// Ranked candidates the query was drawn from (empty when the query was
    /// not updated).
    pub top_n_words: Vec<SimilarityResult>,
    pub negative_words: Vec<String>,
    /// Ids placed during this iteration.
    pub filled: Vec<String>,
    #[serde(default)]
    pub stalled: bool,
    pub timestamp: DateTime<Utc>,
}

impl IterationRecord {
    /// Recompute the board mean from the logged labels, scores and cells.
    pub fn board_vector(
        &self,
        store: &EmbeddingStore,
        pw: &PositionWeights,
    ) -> Result<BoardVector, FeedbackError> {
        let (board, catalog, space) = self.reconstruct(store)?;
        board_vector_for(self.kind, &board, &catalog, pw, &space, store)
    }

    fn reconstruct(
        &self,
        store: &EmbeddingStore,
    ) -> Result<(BoardState, HashMap<String, LabeledImage>, ConceptSpace), FeedbackError> {
        let mut space = ConceptSpace::new(store, &self.w1, &self.w2)?;
        space.negative_words = self.negative_words.iter().cloned().collect();
        let mut board = BoardState::new(&self.w1, &self.w2);
        let mut catalog = HashMap::new();
        for entry in &self.images {
            let at = GridCoord::new(entry.x as i64, entry.y as i64)?;
            board.put(at, entry.id.clone())?;
            catalog.insert(
                entry.id.clone(),
                LabeledImage {
                    id: entry.id.clone(),
                    uri: String::new(),
                    // Not logged and not needed for the vector math.
                    field: Field::IndustrialDesign,
                    labels: entry
                        .labels
                        .iter()
                        .zip(&entry.scores)
                        .map(|(l, s)| LabelScore::new(l.clone(), *s))
                        .collect(),
                    source_rank: 0,
                },
            );
        }
        Ok((board, catalog, space))
    }

    /// Same record with the timestamp zeroed, for replay comparisons.
    pub fn without_timestamp(&self) -> Self {
        Self {
            timestamp: DateTime::<Utc>::UNIX_EPOCH,
            ..self.clone()
        }
    }
}

pub(crate) struct RecordInputs<'a> {
    pub session_id: &'a str,
    pub kind: AlgorithmKind,
    pub iteration_id: u32,
    pub state: &'a BoardSession,
    pub query: Vec<String>,
    pub top_n: Vec<SimilarityResult>,
    pub filled: Vec<String>,
    pub stalled: bool,
    pub timestamp: DateTime<Utc>,
}

/// Build the record for the board as it stands, returning the board mean
/// used for the `cos(w, U)` fields alongside it.
pub(crate) fn build_record(
    inputs: RecordInputs<'_>,
    store: &EmbeddingStore,
    pw: &PositionWeights,
) -> Result<(IterationRecord, Option<Vec<f64>>), FeedbackError> {
    let state = inputs.state;
    let w1 = store.vector_of(&state.space.w1)?;
    let w2 = store.vector_of(&state.space.w2)?;
    let mut images = Vec::new();
    for (at, id) in state.board.occupied() {
        let image = state
            .image(id)
            .ok_or_else(|| FeedbackError::UnknownImage(id.to_string()))?;
        let (cos_w1, cos_w2) = match image_weighted_vector(image, at, pw, &state.space, store) {
            Ok(v) if !v.is_zero() => (
                Some(cosine(&w1.values, &v.values)?),
                Some(cosine(&w2.values, &v.values)?),
            ),
            Ok(_) | Err(FeedbackError::ImageSkipped(_)) => (None, None),
            Err(e) => return Err(e),
        };
        images.push(ImageEntry {
            id: id.to_string(),
            x: at.x(),
            y: at.y(),
            labels: image.labels.iter().map(|l| l.label.clone()).collect(),
            scores: image.labels.iter().map(|l| l.score).collect(),
            cos_w1,
            cos_w2,
        });
    }

    let u = match board_vector_for(
        inputs.kind,
        &state.board,
        &state.catalog,
        pw,
        &state.space,
        store,
    ) {
        Ok(u) => Some(u.values),
        Err(FeedbackError::EmptyBoard) => None,
        Err(e) => return Err(e),
    };
    let (cos_w1_u, cos_w2_u) = match &u {
        Some(values) => (
            cosine(&w1.values, values).ok(),
            cosine(&w2.values, values).ok(),
        ),
        None => (None, None),
    };
    let negative_words = match inputs.kind {
        AlgorithmKind::Reference2 => state.space.negative_words.iter().cloned().collect(),
        _ => Vec::new(),
    };

    let record = IterationRecord {
        session_id: inputs.session_id.to_string(),
        kind: inputs.kind,
        iteration_id: inputs.iteration_id,
        w1: state.space.w1.clone(),
        w2: state.space.w2.clone(),
        query: inputs.query,
        images,
        cos_w1_u,
        cos_w2_u,
        top_n_words: inputs.top_n,
        negative_words,
        filled: inputs.filled,
        stalled: inputs.stalled,
        timestamp: inputs.timestamp,
    };
    Ok((record, u))
}

/// Distinct ids across a set of records' fill lists; used by replay checks.
pub fn filled_ids(records: &[IterationRecord]) -> BTreeSet<String> {
    records
        .iter()
        .flat_map(|r| r.filled.iter().cloned())
        .collect()
}
