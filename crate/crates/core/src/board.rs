//! The 3×3 mood board: cell coordinates, image placement and the
//! per-cell position weights.
//!
//! `x` runs 1..=3 left to right (toward the x-axis word `w2`), `y` runs
//! 1..=3 bottom to top (toward the y-axis word `w1`), so `(3, 3)` is the
//! top-right cell.

use std::collections::HashSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imagery::LabeledImage;

pub const GRID_SIZE: u8 = 3;
pub const CELL_COUNT: usize = 9;

#[derive(Debug, Error, PartialEq)]
pub enum BoardError {
    #[error("coordinate ({x}, {y}) is outside the 3x3 grid")]
    OutOfRange { x: i64, y: i64 },
    #[error("image {0:?} is not on the board")]
    NotOnBoard(String),
    #[error("cell {0} is empty")]
    EmptyCell(GridCoord),
    #[error("image {0:?} is already on the board")]
    Duplicate(String),
    #[error("initial placement needs an empty board and at least one image")]
    BadInitialPlacement,
    #[error("invalid position weights: {0}")]
    InvalidWeights(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "RawCoord", into = "RawCoord")]
pub struct GridCoord {
    x: u8,
    y: u8,
}

#[derive(Serialize, Deserialize)]
struct RawCoord {
    x: i64,
    y: i64,
}

impl TryFrom<RawCoord> for GridCoord {
    type Error = BoardError;

    fn try_from(raw: RawCoord) -> Result<Self, Self::Error> {
        GridCoord::new(raw.x, raw.y)
    }
}

impl From<GridCoord> for RawCoord {
    fn from(c: GridCoord) -> Self {
        RawCoord {
            x: c.x as i64,
            y: c.y as i64,
        }
    }
}

impl GridCoord {
    pub fn new(x: i64, y: i64) -> Result<Self, BoardError> {
        let ok = |v: i64| (1..=GRID_SIZE as i64).contains(&v);
        if ok(x) && ok(y) {
            Ok(Self {
                x: x as u8,
                y: y as u8,
            })
        } else {
            Err(BoardError::OutOfRange { x, y })
        }
    }

    /// Panics on out-of-range input; for literals in tests and tables.
    pub const fn at(x: u8, y: u8) -> Self {
        assert!(x >= 1 && x <= GRID_SIZE && y >= 1 && y <= GRID_SIZE);
        Self { x, y }
    }

    pub fn x(&self) -> u8 {
        self.x
    }

    pub fn y(&self) -> u8 {
        self.y
    }

    fn slot(&self) -> usize {
        (self.y as usize - 1) * GRID_SIZE as usize + (self.x as usize - 1)
    }
}

impl fmt::Display for GridCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Canonical cell order for initial placement and refills.
pub const GRID_ORDER: [GridCoord; CELL_COUNT] = [
    GridCoord::at(3, 3),
    GridCoord::at(2, 3),
    GridCoord::at(3, 2),
    GridCoord::at(2, 2),
    GridCoord::at(1, 3),
    GridCoord::at(3, 1),
    GridCoord::at(1, 2),
    GridCoord::at(2, 1),
    GridCoord::at(1, 1),
];

/// `(alpha, beta)` per cell. `alpha` scales labels leaning toward `w2`
/// (x axis), `beta` labels leaning toward `w1` (y axis).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[[f64; 2]; 3]; 3]", into = "[[[f64; 2]; 3]; 3]")]
pub struct PositionWeights {
    // [y - 1][x - 1]
    table: [[(f64, f64); 3]; 3],
}

impl Default for PositionWeights {
    /// `alpha = 1 + 0.25 (x - 2)`, `beta = 1 + 0.25 (y - 2)`.
    fn default() -> Self {
        let mut table = [[(0.0, 0.0); 3]; 3];
        for (yi, row) in table.iter_mut().enumerate() {
            for (xi, cell) in row.iter_mut().enumerate() {
                *cell = (
                    1.0 + 0.25 * (xi as f64 - 1.0),
                    1.0 + 0.25 * (yi as f64 - 1.0),
                );
            }
        }
        Self { table }
    }
}

impl TryFrom<[[[f64; 2]; 3]; 3]> for PositionWeights {
    type Error = BoardError;

    fn try_from(raw: [[[f64; 2]; 3]; 3]) -> Result<Self, Self::Error> {
        let table = raw.map(|row| row.map(|[a, b]| (a, b)));
        Self::from_table(table)
    }
}

impl From<PositionWeights> for [[[f64; 2]; 3]; 3] {
    fn from(pw: PositionWeights) -> Self {
        pw.table.map(|row| row.map(|(a, b)| [a, b]))
    }
}

impl PositionWeights {
    /// `table[y - 1][x - 1] = (alpha, beta)`. Weights must be positive and
    /// finite, alpha strictly increasing in x and beta strictly increasing in y.
    pub fn from_table(table: [[(f64, f64); 3]; 3]) -> Result<Self, BoardError> {
        for (yi, row) in table.iter().enumerate() {
            for (xi, &(a, b)) in row.iter().enumerate() {
                if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
                    return Err(BoardError::InvalidWeights(format!(
                        "weights at ({}, {}) must be positive and finite",
                        xi + 1,
                        yi + 1
                    )));
                }
                if xi > 0 && a <= row[xi - 1].0 {
                    return Err(BoardError::InvalidWeights(format!(
                        "alpha must increase with x (row y={})",
                        yi + 1
                    )));
                }
                if yi > 0 && b <= table[yi - 1][xi].1 {
                    return Err(BoardError::InvalidWeights(format!(
                        "beta must increase with y (column x={})",
                        xi + 1
                    )));
                }
            }
        }
        Ok(Self { table })
    }

    pub fn weights_at(&self, at: GridCoord) -> (f64, f64) {
        self.table[at.y as usize - 1][at.x as usize - 1]
    }

    /// Every weight multiplied by `factor` (> 0).
    pub fn scaled(&self, factor: f64) -> Result<Self, BoardError> {
        Self::from_table(
            self.table
                .map(|row| row.map(|(a, b)| (a * factor, b * factor))),
        )
    }
}

/// Which image sits in which cell, plus the axis words.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoardState {
    cells: [Option<String>; CELL_COUNT],
    pub axis_w1: String,
    pub axis_w2: String,
}

impl BoardState {
    pub fn new(axis_w1: impl Into<String>, axis_w2: impl Into<String>) -> Self {
        Self {
            cells: Default::default(),
            axis_w1: axis_w1.into(),
            axis_w2: axis_w2.into(),
        }
    }

    pub fn get(&self, at: GridCoord) -> Option<&str> {
        self.cells[at.slot()].as_deref()
    }

    pub fn position_of(&self, id: &str) -> Option<GridCoord> {
        GRID_ORDER
            .into_iter()
            .find(|c| self.cells[c.slot()].as_deref() == Some(id))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.position_of(id).is_some()
    }

    pub fn len(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Occupied cells in grid order.
    pub fn occupied(&self) -> impl Iterator<Item = (GridCoord, &str)> + '_ {
        GRID_ORDER
            .into_iter()
            .filter_map(|c| self.cells[c.slot()].as_deref().map(|id| (c, id)))
    }

    pub fn empty_cells(&self) -> impl Iterator<Item = GridCoord> + '_ {
        GRID_ORDER
            .into_iter()
            .filter(|c| self.cells[c.slot()].is_none())
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> + '_ {
        self.occupied().map(|(_, id)| id)
    }

    /// Assign up to nine images to the first cells of [`GRID_ORDER`] in a
    /// seeded random order.
    pub fn place_initial(&mut self, images: &[LabeledImage], seed: u64) -> Result<(), BoardError> {
        if !self.is_empty() || images.is_empty() {
            return Err(BoardError::BadInitialPlacement);
        }
        let mut ids: Vec<&str> = images
            .iter()
            .take(CELL_COUNT)
            .map(|i| i.id.as_str())
            .collect();
        let unique: HashSet<&str> = ids.iter().copied().collect();
        if unique.len() != ids.len() {
            let dup = ids
                .iter()
                .find(|id| ids.iter().filter(|o| o == id).count() > 1)
                .unwrap();
            return Err(BoardError::Duplicate(dup.to_string()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ids.shuffle(&mut rng);
        for (cell, id) in GRID_ORDER.iter().zip(ids) {
            self.cells[cell.slot()] = Some(id.to_string());
        }
        Ok(())
    }

    /// Move `id` to `to`; an occupant of `to` swaps into the vacated cell.
    pub fn move_image(&mut self, id: &str, to: GridCoord) -> Result<(), BoardError> {
        let from = self
            .position_of(id)
            .ok_or_else(|| BoardError::NotOnBoard(id.to_string()))?;
        self.cells.swap(from.slot(), to.slot());
        Ok(())
    }

    pub fn delete_image(&mut self, id: &str) -> Result<GridCoord, BoardError> {
        let at = self
            .position_of(id)
            .ok_or_else(|| BoardError::NotOnBoard(id.to_string()))?;
        self.cells[at.slot()] = None;
        Ok(at)
    }

    /// Put `id` into an empty cell.
    pub fn put(&mut self, at: GridCoord, id: impl Into<String>) -> Result<(), BoardError> {
        let id = id.into();
        if self.contains(&id) {
            return Err(BoardError::Duplicate(id));
        }
        match &self.cells[at.slot()] {
            Some(existing) => Err(BoardError::Duplicate(existing.clone())),
            None => {
                self.cells[at.slot()] = Some(id);
                Ok(())
            }
        }
    }

    /// Fill empty cells in grid order; returns the placements made.
    pub fn fill<I, S>(&mut self, ids: I) -> Result<Vec<(GridCoord, String)>, BoardError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let empty: Vec<GridCoord> = self.empty_cells().collect();
        let mut placed = Vec::new();
        for (cell, id) in empty.into_iter().zip(ids) {
            let id = id.into();
            self.put(cell, id.clone())?;
            placed.push((cell, id));
        }
        Ok(placed)
    }
}
