use serde::{Deserialize, Serialize};

use crate::board::GridCoord;
use crate::feedback::AlgorithmKind;
use crate::imagery::LabelScore;

/// Structured export of a board. Cells run top row first, left to right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoardDocument {
    pub session_id: String,
    pub kind: AlgorithmKind,
    /// y-axis word.
    pub w1: String,
    /// x-axis word.
    pub w2: String,
    pub iteration_id: u32,
    pub query: Vec<String>,
    pub negative_words: Vec<String>,
    pub cells: Vec<ExportCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportCell {
    pub x: u8,
    pub y: u8,
    pub image_id: Option<String>,
    pub uri: Option<String>,
    pub labels: Vec<LabelScore>,
}

/// Cells in reading order: y from 3 down to 1, x from 1 to 3.
pub fn reading_order() -> impl Iterator<Item = GridCoord> {
    (1..=3u8)
        .rev()
        .flat_map(|y| (1..=3u8).map(move |x| GridCoord::at(x, y)))
}
