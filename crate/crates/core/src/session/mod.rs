//! Session lifecycle: creation, user actions, iteration logging and export.
//!
//! A [`Session`] is single-writer; callers serialize access (the HTTP layer
//! holds one mutex per session). Every accepted action is appended to the
//! journal, and every iteration, including the initial search, appends one
//! [`IterationRecord`] to the log.

pub mod export;
pub mod record;
pub mod script;
pub mod storage;

use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::board::{BoardError, GridCoord};
use crate::config::Config;
use crate::embedding::EmbeddingError;
use crate::feedback::{
    run_iteration, AlgorithmKind, BoardSession, Capabilities, FeedbackError, Services,
};
use crate::imagery::{normalize_label, ImageryError, LabeledImage};

pub use export::{BoardDocument, ExportCell};
pub use record::{ImageEntry, IterationRecord};
pub use script::{run_script, ScriptError, SessionScript};
pub use storage::{DirStorage, NullStorage, SessionMeta, SessionStorage};

/// How an error should be surfaced to a client.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    NotFound,
    Unsupported,
    Upstream,
    Internal,
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{action} is not supported for {kind} sessions")]
    Unsupported { kind: AlgorithmKind, action: String },
    #[error(transparent)]
    Feedback(#[from] FeedbackError),
    #[error("session storage failed: {0}")]
    Storage(#[from] std::io::Error),
}

impl SessionError {
    pub fn class(&self) -> ErrorClass {
        match self {
            SessionError::Validation(_) => ErrorClass::Validation,
            SessionError::NotFound(_) => ErrorClass::NotFound,
            SessionError::Unsupported { .. } => ErrorClass::Unsupported,
            SessionError::Storage(_) => ErrorClass::Internal,
            SessionError::Feedback(e) => match e {
                FeedbackError::Unsupported { .. } => ErrorClass::Unsupported,
                FeedbackError::UnknownImage(_)
                | FeedbackError::Board(BoardError::NotOnBoard(_))
                | FeedbackError::Imagery(ImageryError::NotFound(_)) => ErrorClass::NotFound,
                FeedbackError::Imagery(
                    ImageryError::Transport { .. } | ImageryError::BadResponse { .. },
                ) => ErrorClass::Upstream,
                FeedbackError::Imagery(ImageryError::Io { .. }) => ErrorClass::Internal,
                FeedbackError::Embedding(EmbeddingError::Io(_)) => ErrorClass::Internal,
                _ => ErrorClass::Validation,
            },
        }
    }
}

pub type Result<T, E = SessionError> = std::result::Result<T, E>;

/// Refers to an image by id or by the cell it occupies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ImageRef {
    Id { image: String },
    Cell { cell: GridCoord },
}

impl ImageRef {
    pub fn id(image: impl Into<String>) -> Self {
        ImageRef::Id {
            image: image.into(),
        }
    }

    pub fn cell(x: u8, y: u8) -> Self {
        ImageRef::Cell {
            cell: GridCoord::at(x, y),
        }
    }
}

/// A user action. JSON form: `{"type": "move", "image": "id-001", "to": {"x": 3, "y": 3}}`,
/// `{"type": "delete", "cell": {"x": 1, "y": 1}}`, `{"type": "strike", "image": .., "label": ..}`,
/// `{"type": "next"}`, `{"type": "export"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Action {
    Move {
        #[serde(flatten)]
        target: ImageRef,
        to: GridCoord,
    },
    Delete {
        #[serde(flatten)]
        target: ImageRef,
    },
    Strike {
        #[serde(flatten)]
        target: ImageRef,
        label: String,
    },
    Next,
    Export,
}

impl Action {
    pub fn name(&self) -> &'static str {
        match self {
            Action::Move { .. } => "move",
            Action::Delete { .. } => "delete",
            Action::Strike { .. } => "strike",
            Action::Next => "next",
            Action::Export => "export",
        }
    }

    pub fn allowed(&self, caps: &Capabilities) -> bool {
        match self {
            Action::Move { .. } => caps.move_image,
            Action::Delete { .. } => caps.delete,
            Action::Strike { .. } => caps.strike,
            Action::Next => caps.next,
            Action::Export => caps.export,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Result of applying an action.
#[derive(Debug, Clone, PartialEq)]
pub enum ActionOutcome {
    Updated,
    Iterated(Box<IterationRecord>),
    Exported(Box<BoardDocument>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateParams {
    pub kind: AlgorithmKind,
    pub w1: String,
    pub w2: String,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub config: Option<Config>,
}

/// Client-facing snapshot of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub kind: AlgorithmKind,
    pub w1: String,
    pub w2: String,
    pub seed: u64,
    pub created_at: DateTime<Utc>,
    pub iteration_count: u32,
    pub query: Vec<String>,
    pub negative_words: Vec<String>,
    pub capabilities: Capabilities,
    pub cells: Vec<ViewCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewCell {
    pub x: u8,
    pub y: u8,
    pub image: Option<LabeledImage>,
}

pub struct Session {
    id: String,
    kind: AlgorithmKind,
    seed: u64,
    created_at: DateTime<Utc>,
    config: Config,
    state: BoardSession,
    iteration_count: u32,
    records: Vec<IterationRecord>,
    board_vectors: Vec<Option<Vec<f64>>>,
    journal: Vec<Action>,
    last_timestamp: DateTime<Utc>,
    storage: Box<dyn SessionStorage>,
}

impl fmt::Debug for Session {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Session")
            .field("id", &self.id)
            .field("kind", &self.kind)
            .field("iteration_count", &self.iteration_count)
            .field("board", &self.state.board)
            .finish_non_exhaustive()
    }
}

impl Session {
    /// Validate the axis words, run the initial search and write record 0.
    pub fn create(
        services: &Services,
        id: impl Into<String>,
        params: CreateParams,
        mut storage: Box<dyn SessionStorage>,
    ) -> Result<Self> {
        let id = id.into();
        let config = params.config.unwrap_or_default();
        config
            .validate()
            .map_err(|e| SessionError::Validation(e.to_string()))?;
        let seed = params.seed.unwrap_or(0);
        let space = crate::feedback::ConceptSpace::new(&services.store, &params.w1, &params.w2)?;
        let mut state = BoardSession::new(space);
        let placed = state.initial_search(services, &config, seed)?;

        let created_at = Utc::now();
        storage.write_meta(&SessionMeta {
            id: id.clone(),
            kind: params.kind,
            w1: state.space.w1.clone(),
            w2: state.space.w2.clone(),
            seed,
            config: config.clone(),
            created_at,
        })?;
        let mut session = Self {
            id,
            kind: params.kind,
            seed,
            created_at,
            config,
            state,
            iteration_count: 0,
            records: Vec::new(),
            board_vectors: Vec::new(),
            journal: Vec::new(),
            last_timestamp: created_at,
            storage,
        };
        let query = session.state.space.initial_query();
        let filled = placed.into_iter().map(|(_, id)| id).collect();
        session.log_iteration(services, query, Vec::new(), filled, false)?;
        Ok(session)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn kind(&self) -> AlgorithmKind {
        self.kind
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn state(&self) -> &BoardSession {
        &self.state
    }

    pub fn iteration_count(&self) -> u32 {
        self.iteration_count
    }

    pub fn records(&self) -> &[IterationRecord] {
        &self.records
    }

    pub fn journal(&self) -> &[Action] {
        &self.journal
    }

    /// Board means computed live at each record, index-aligned with
    /// [`records`](Self::records).
    pub fn board_vectors(&self) -> &[Option<Vec<f64>>] {
        &self.board_vectors
    }

    pub fn capabilities(&self) -> Capabilities {
        self.kind.capabilities()
    }

    fn resolve(&self, target: &ImageRef) -> Result<String> {
        match target {
            ImageRef::Id { image } => {
                if self.state.board.contains(image) {
                    Ok(image.clone())
                } else {
                    Err(SessionError::NotFound(format!(
                        "image {image:?} is not on the board"
                    )))
                }
            }
            ImageRef::Cell { cell } => self
                .state
                .board
                .get(*cell)
                .map(str::to_string)
                .ok_or_else(|| SessionError::NotFound(format!("cell {cell} is empty"))),
        }
    }

    pub fn apply(&mut self, services: &Services, action: Action) -> Result<ActionOutcome> {
        if !action.allowed(&self.capabilities()) {
            return Err(SessionError::Unsupported {
                kind: self.kind,
                action: action.name().to_string(),
            });
        }
        let (outcome, journaled) = match action {
            Action::Move { target, to } => {
                let id = self.resolve(&target)?;
                self.state
                    .board
                    .move_image(&id, to)
                    .map_err(FeedbackError::from)?;
                (
                    ActionOutcome::Updated,
                    Action::Move {
                        target: ImageRef::id(id),
                        to,
                    },
                )
            }
            Action::Delete { target } => {
                let id = self.resolve(&target)?;
                self.state
                    .board
                    .delete_image(&id)
                    .map_err(FeedbackError::from)?;
                (
                    ActionOutcome::Updated,
                    Action::Delete {
                        target: ImageRef::id(id),
                    },
                )
            }
            Action::Strike { target, label } => {
                let id = self.resolve(&target)?;
                let image = self
                    .state
                    .image(&id)
                    .ok_or_else(|| FeedbackError::UnknownImage(id.clone()))?;
                let wanted = normalize_label(&label);
                if !image
                    .labels
                    .iter()
                    .any(|l| normalize_label(&l.label) == wanted)
                {
                    return Err(SessionError::Validation(format!(
                        "image {id:?} has no label {label:?}"
                    )));
                }
                self.state.space.strike(&services.store, &label)?;
                (
                    ActionOutcome::Updated,
                    Action::Strike {
                        target: ImageRef::id(id),
                        label,
                    },
                )
            }
            Action::Next => {
                let outcome = run_iteration(self.kind, &mut self.state, services, &self.config)?;
                let filled = outcome.filled.into_iter().map(|(_, id)| id).collect();
                let top_n = outcome.top_n;
                self.iteration_count += 1;
                let record =
                    self.log_iteration(services, outcome.query, top_n, filled, outcome.stalled)?;
                (ActionOutcome::Iterated(Box::new(record)), Action::Next)
            }
            Action::Export => {
                let doc = self.export_board();
                self.storage.write_export(&doc)?;
                (ActionOutcome::Exported(Box::new(doc)), Action::Export)
            }
        };
        self.storage.append_action(&journaled)?;
        self.journal.push(journaled);
        Ok(outcome)
    }

    fn log_iteration(
        &mut self,
        services: &Services,
        query: Vec<String>,
        top_n: Vec<crate::embedding::SimilarityResult>,
        filled: Vec<String>,
        stalled: bool,
    ) -> Result<IterationRecord> {
        let now = Utc::now().max(self.last_timestamp);
        self.last_timestamp = now;
        let (record, u) = record::build_record(
            record::RecordInputs {
                session_id: &self.id,
                kind: self.kind,
                iteration_id: self.iteration_count,
                state: &self.state,
                query,
                top_n,
                filled,
                stalled,
                timestamp: now,
            },
            &services.store,
            &self.config.position_weights,
        )?;
        self.storage.append_record(&record)?;
        self.records.push(record.clone());
        self.board_vectors.push(u);
        Ok(record)
    }

    pub fn export_board(&self) -> BoardDocument {
        let cells = export::reading_order()
            .map(|at| {
                let image = self.state.board.get(at).and_then(|id| self.state.image(id));
                ExportCell {
                    x: at.x(),
                    y: at.y(),
                    image_id: image.map(|i| i.id.clone()),
                    uri: image.map(|i| i.uri.clone()),
                    labels: image.map(|i| i.labels.clone()).unwrap_or_default(),
                }
            })
            .collect();
        BoardDocument {
            session_id: self.id.clone(),
            kind: self.kind,
            w1: self.state.space.w1.clone(),
            w2: self.state.space.w2.clone(),
            iteration_id: self.iteration_count,
            query: self.state.space.current_query.clone(),
            negative_words: self.state.space.negative_words.iter().cloned().collect(),
            cells,
        }
    }

    pub fn view(&self) -> SessionView {
        SessionView {
            id: self.id.clone(),
            kind: self.kind,
            w1: self.state.space.w1.clone(),
            w2: self.state.space.w2.clone(),
            seed: self.seed,
            created_at: self.created_at,
            iteration_count: self.iteration_count,
            query: self.state.space.current_query.clone(),
            negative_words: self.state.space.negative_words.iter().cloned().collect(),
            capabilities: self.capabilities(),
            cells: export::reading_order()
                .map(|at| ViewCell {
                    x: at.x(),
                    y: at.y(),
                    image: self
                        .state
                        .board
                        .get(at)
                        .and_then(|id| self.state.image(id))
                        .cloned(),
                })
                .collect(),
        }
    }

    /// The session's history as a script that rebuilds it from scratch.
    pub fn to_script(&self) -> SessionScript {
        SessionScript {
            session_id: Some(self.id.clone()),
            kind: self.kind,
            w1: self.state.space.w1.clone(),
            w2: self.state.space.w2.clone(),
            seed: self.seed,
            config: Some(self.config.clone()),
            steps: self.journal.clone(),
        }
    }

    /// The log as JSON Lines.
    pub fn log_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        }
        out
    }
}
