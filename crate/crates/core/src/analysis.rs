//! Convergence analysis over session logs.
//!
//! For each session the series is `cos(U_i, U_{i-1})` between consecutive
//! records, where `U` is recomputed from the logged board. Values near 1 mean
//! the board has stopped changing.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::Serialize;
use thiserror::Error;

use crate::board::PositionWeights;
use crate::embedding::{cosine, EmbeddingStore};
use crate::feedback::{AlgorithmKind, FeedbackError};
use crate::session::IterationRecord;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("cannot read log: {0}")]
    Io(#[from] std::io::Error),
    #[error("log line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("session {session}, iteration {iteration}: {source}")]
    Vector {
        session: String,
        iteration: u32,
        #[source]
        source: FeedbackError,
    },
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
}

/// Parse a JSON Lines log. Blank lines are ignored; line numbers start at 1.
pub fn parse_log(reader: impl BufRead) -> Result<Vec<IterationRecord>, AnalysisError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|source| AnalysisError::Parse {
            line: i + 1,
            source,
        })?;
        out.push(record);
    }
    Ok(out)
}

/// Group records by session id, keeping first-appearance order; records
/// inside a group are sorted by iteration id.
pub fn group_by_session(records: &[IterationRecord]) -> Vec<(String, Vec<&IterationRecord>)> {
    let mut order: Vec<(String, Vec<&IterationRecord>)> = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    for r in records {
        let slot = *index.entry(&r.session_id).or_insert_with(|| {
            order.push((r.session_id.clone(), Vec::new()));
            order.len() - 1
        });
        order[slot].1.push(r);
    }
    for (_, group) in &mut order {
        group.sort_by_key(|r| r.iteration_id);
    }
    order
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceSeries {
    pub session_id: String,
    pub kind: AlgorithmKind,
    /// Number of records the series was built from.
    pub iteration_count: usize,
    /// Iteration id of the later record of each pair.
    pub iterations: Vec<u32>,
    pub values: Vec<f64>,
}

/// Series for one session's records (already in iteration order).
pub fn convergence_series(
    records: &[&IterationRecord],
    store: &EmbeddingStore,
    pw: &PositionWeights,
) -> Result<Option<ConvergenceSeries>, AnalysisError> {
    let Some(first) = records.first() else {
        return Ok(None);
    };
    let mut vectors = Vec::with_capacity(records.len());
    for r in records {
        let v = r
            .board_vector(store, pw)
            .map_err(|source| AnalysisError::Vector {
                session: r.session_id.clone(),
                iteration: r.iteration_id,
                source,
            })?;
        vectors.push(v.values);
    }
    let mut values = Vec::new();
    let mut iterations = Vec::new();
    for (k, pair) in vectors.windows(2).enumerate() {
        let c = cosine(&pair[1], &pair[0]).map_err(|e| AnalysisError::Vector {
            session: first.session_id.clone(),
            iteration: records[k + 1].iteration_id,
            source: e.into(),
        })?;
        values.push(c);
        iterations.push(records[k + 1].iteration_id);
    }
    Ok(Some(ConvergenceSeries {
        session_id: first.session_id.clone(),
        kind: first.kind,
        iteration_count: records.len(),
        iterations,
        values,
    }))
}

/// Series for every session in a log.
pub fn all_series(
    records: &[IterationRecord],
    store: &EmbeddingStore,
    pw: &PositionWeights,
) -> Result<Vec<ConvergenceSeries>, AnalysisError> {
    let mut out = Vec::new();
    for (_, group) in group_by_session(records) {
        if let Some(s) = convergence_series(&group, store, pw)? {
            out.push(s);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionStats {
    pub session_id: String,
    pub kind: AlgorithmKind,
    pub iteration_count: usize,
    /// `cos(U_1, U_0)`: how much the first feedback step changed the board.
    pub first_step_similarity: Option<f64>,
    pub mean: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub std_dev: Option<f64>,
}

impl SessionStats {
    pub fn of(series: &ConvergenceSeries) -> Self {
        let v = &series.values;
        Self {
            session_id: series.session_id.clone(),
            kind: series.kind,
            iteration_count: series.iteration_count,
            first_step_similarity: v.first().copied(),
            mean: mean(v),
            min: v.iter().copied().reduce(f64::min),
            max: v.iter().copied().reduce(f64::max),
            std_dev: std_dev(v),
        }
    }
}

/// Mean and sample SD of a per-session quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Spread {
    pub mean: f64,
    pub std_dev: f64,
    pub n: usize,
}

impl Spread {
    pub fn of(values: &[f64]) -> Option<Self> {
        Some(Self {
            mean: mean(values)?,
            std_dev: std_dev(values)?,
            n: values.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupStats {
    pub sessions: usize,
    pub iteration_count: Option<Spread>,
    pub first_step_similarity: Option<Spread>,
    pub mean_similarity: Option<Spread>,
}

impl GroupStats {
    fn of<'a>(stats: impl Iterator<Item = &'a SessionStats> + Clone) -> Self {
        let counts: Vec<f64> = stats.clone().map(|s| s.iteration_count as f64).collect();
        let first: Vec<f64> = stats
            .clone()
            .filter_map(|s| s.first_step_similarity)
            .collect();
        let means: Vec<f64> = stats.filter_map(|s| s.mean).collect();
        Self {
            sessions: counts.len(),
            iteration_count: Spread::of(&counts),
            first_step_similarity: Spread::of(&first),
            mean_similarity: Spread::of(&means),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KindStats {
    pub kind: AlgorithmKind,
    #[serde(flatten)]
    pub stats: GroupStats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub sessions: Vec<SessionStats>,
    pub overall: GroupStats,
    pub by_kind: Vec<KindStats>,
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Sample standard deviation; 0 for a single value.
pub fn std_dev(values: &[f64]) -> Option<f64> {
    let m = mean(values)?;
    if values.len() == 1 {
        return Some(0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - m).powi(2)).sum();
    Some((ss / (values.len() - 1) as f64).sqrt())
}

pub fn summarize(series: &[ConvergenceSeries]) -> Summary {
    let sessions: Vec<SessionStats> = series.iter().map(SessionStats::of).collect();
    let by_kind = AlgorithmKind::ALL
        .iter()
        .filter(|&&kind| sessions.iter().any(|s| s.kind == kind))
        .map(|&kind| KindStats {
            kind,
            stats: GroupStats::of(sessions.iter().filter(move |s| s.kind == kind)),
        })
        .collect();
    Summary {
        overall: GroupStats::of(sessions.iter()),
        sessions,
        by_kind,
    }
}

/// Long-format CSV: `session_id,iteration_i,cos_sim`.
pub fn write_csv(series: &[ConvergenceSeries], out: impl Write) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["session_id", "iteration_i", "cos_sim"])?;
    for s in series {
        for (i, v) in s.iterations.iter().zip(&s.values) {
            w.write_record([s.session_id.as_str(), &i.to_string(), &v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
