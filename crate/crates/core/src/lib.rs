//! Mood board composition engine.
//!
//! A session starts from two concept words, `w1` (vertical axis) and `w2`
//! (horizontal axis). Images are fetched and placed on a 3x3 board; the user
//! rearranges, deletes or strikes labels, and each iteration turns the board
//! into a query vector whose nearest vocabulary words become the next search.

pub mod analysis;
pub mod board;
pub mod config;
pub mod embedding;
pub mod feedback;
pub mod imagery;
pub mod session;

pub use board::{BoardState, GridCoord, PositionWeights};
pub use config::Config;
pub use embedding::{EmbeddingStore, SimilarityResult, WordVector};
pub use feedback::{AlgorithmKind, Services};
pub use session::{Action, ImageRef, Session};
