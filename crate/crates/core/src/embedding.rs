//! Word embeddings: loading, lookup, cosine similarity, weighted means and
//! top-N most-similar-words search.
//!
//! Every row of an [`EmbeddingStore`] is renormalized to unit length when the
//! store is built, so the cosine between a stored word and a query `y` reduces
//! to `x · y / ‖y‖`, and scoring the whole vocabulary is a single
//! matrix-vector product.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on stored row norms after normalization.
pub const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("failed to read embedding file: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: malformed header: {reason}")]
    Header { line: usize, reason: String },
    #[error("line {line}: expected {expected} components, found {found}")]
    Dimension {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: invalid component {token:?}")]
    Component { line: usize, token: String },
    #[error("line {line}: duplicate word {word:?}")]
    DuplicateWord { line: usize, word: String },
    #[error("line {line}: zero vector for {word:?} cannot be normalized")]
    ZeroRow { line: usize, word: String },
    #[error("header declares {declared} words but file holds {found}")]
    RowCount { declared: usize, found: usize },
    #[error("embedding store must contain at least one word")]
    Empty,
    #[error("query word unknown: {0:?}")]
    OutOfVocabulary(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("cosine similarity undefined for zero-norm vector")]
    ZeroNorm,
    #[error("cannot average an empty list of vectors")]
    EmptyMean,
    #[error("most_similar needs at least one positive or negative vector and n >= 1")]
    EmptyQuery,
}

pub type Result<T, E = EmbeddingError> = std::result::Result<T, E>;

/// A vector in embedding space, optionally tied to the word it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordVector {
    pub word: Option<String>,
    pub values: Vec<f64>,
}

impl WordVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { word: None, values }
    }

    pub fn named(word: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            word: Some(word.into()),
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.values)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            word: self.word.clone(),
            values: self.values.iter().map(|x| x * factor).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|x| *x == 0.0)
    }
}

/// One entry of a ranked similarity list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityResult {
    pub word: String,
    pub score: f64,
}

/// An immutable vocabulary of unit-normalized word vectors.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    vocab: Vec<String>,
    matrix: Array2<f64>,
    index: HashMap<String, usize>,
}

impl EmbeddingStore {
    /// Load the standard text format: a `N M` header line followed by one
    /// `word c1 .. cM` line per word. At most `limit` words are read.
    pub fn load(path: impl AsRef<Path>, limit: Option<usize>) -> Result<Self> {
        let file = File::open(path.as_ref())?;
        Self::from_reader(BufReader::new(file), limit)
    }

    pub fn from_reader<R: BufRead>(reader: R, limit: Option<usize>) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines.next().ok_or_else(|| EmbeddingError::Header {
            line: 1,
            reason: "file is empty".into(),
        })??;
        let (declared, dim) = parse_header(&header)?;
        let wanted = limit.map_or(declared, |l| l.min(declared));

        let mut vocab = Vec::with_capacity(wanted);
        let mut index = HashMap::with_capacity(wanted);
        let mut data = Vec::with_capacity(wanted * dim);
        let mut row = Vec::with_capacity(dim);
        let mut seen = 0usize;

        for (offset, line) in lines.enumerate() {
            let line_no = offset + 2;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            seen += 1;
            if vocab.len() == wanted {
                if limit.is_some() {
                    break;
                }
                continue;
            }
            let mut tokens = line.split_ascii_whitespace();
            let word = tokens.next().unwrap_or_default().to_string();
            row.clear();
            for token in tokens {
                let value: f64 = token.parse().map_err(|_| EmbeddingError::Component {
                    line: line_no,
                    token: token.to_string(),
                })?;
                if !value.is_finite() {
                    return Err(EmbeddingError::Component {
                        line: line_no,
                        token: token.to_string(),
                    });
                }
                row.push(value);
            }
            if row.len() != dim {
                return Err(EmbeddingError::Dimension {
                    line: line_no,
                    expected: dim,
                    found: row.len(),
                });
            }
            let n = norm(&row);
            if n == 0.0 {
                return Err(EmbeddingError::ZeroRow {
                    line: line_no,
                    word,
                });
            }
            if index.contains_key(&word) {
                return Err(EmbeddingError::DuplicateWord {
                    line: line_no,
                    word,
                });
            }
            index.insert(word.clone(), vocab.len());
            vocab.push(word);
            data.extend(row.iter().map(|x| x / n));
        }

        if limit.is_none() && seen != declared {
            return Err(EmbeddingError::RowCount {
                declared,
                found: seen,
            });
        }
        if vocab.len() < wanted {
            return Err(EmbeddingError::RowCount {
                declared,
                found: vocab.len(),
            });
        }
        if vocab.is_empty() {
            return Err(EmbeddingError::Empty);
        }
        let matrix = Array2::from_shape_vec((vocab.len(), dim), data)
            .expect("row buffer matches declared shape");
        Ok(Self {
            vocab,
            matrix,
            index,
        })
    }

    /// Build a store from in-memory rows, normalizing each row.
    pub fn from_rows<S, I>(rows: I) -> Result<Self>
    where
        S: Into<String>,
        I: IntoIterator<Item = (S, Vec<f64>)>,
    {
        let mut vocab = Vec::new();
        let mut index = HashMap::new();
        let mut data = Vec::new();
        let mut dim = None;
        for (i, (word, values)) in rows.into_iter().enumerate() {
            let word = word.into();
            let line = i + 1;
            let expected = *dim.get_or_insert(values.len());
            if values.len() != expected || expected == 0 {
                return Err(EmbeddingError::Dimension {
                    line,
                    expected,
                    found: values.len(),
                });
            }
            let n = norm(&values);
            if n == 0.0 || !n.is_finite() {
                return Err(EmbeddingError::ZeroRow { line, word });
            }
            if index.contains_key(&word) {
                return Err(EmbeddingError::DuplicateWord { line, word });
            }
            index.insert(word.clone(), vocab.len());
            vocab.push(word);
            data.extend(values.iter().map(|x| x / n));
        }
        let dim = dim.ok_or(EmbeddingError::Empty)?;
        let matrix = Array2::from_shape_vec((vocab.len(), dim), data)
            .expect("row buffer matches declared shape");
        Ok(Self {
            vocab,
            matrix,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn row_index(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn row(&self, index: usize) -> ArrayView1<'_, f64> {
        self.matrix.row(index)
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    /// The stored unit vector for `word`.
    pub fn vector_of(&self, word: &str) -> Result<WordVector> {
        let idx = self
            .row_index(word)
            .ok_or_else(|| EmbeddingError::OutOfVocabulary(word.to_string()))?;
        Ok(WordVector::named(word, self.matrix.row(idx).to_vec()))
    }

    /// Largest deviation of any row norm from 1.
    pub fn max_norm_deviation(&self) -> f64 {
        self.matrix
            .rows()
            .into_iter()
            .map(|r| (r.dot(&r).sqrt() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Cosine of every stored word against `query`: `X · q / ‖q‖`.
    pub fn scores(&self, query: &[f64]) -> Result<Array1<f64>> {
        self.check_dim(query.len())?;
        let n = norm(query);
        if n == 0.0 {
            return Err(EmbeddingError::ZeroNorm);
        }
        let unit: Array1<f64> = query.iter().map(|x| x / n).collect();
        Ok(self.matrix.dot(&unit))
    }

    /// Top-`n` words for the combined query `(Σ positives − Σ negatives) / count`,
    /// skipping any word in `exclude`.
    pub fn most_similar(
        &self,
        positives: &[WordVector],
        negatives: &[WordVector],
        n: usize,
        exclude: &HashSet<String>,
    ) -> Result<Vec<SimilarityResult>> {
        self.most_similar_by(positives, negatives, n, |word| !exclude.contains(word))
    }

    /// Like [`most_similar`](Self::most_similar) with an arbitrary keep predicate.
    pub fn most_similar_by<F>(
        &self,
        positives: &[WordVector],
        negatives: &[WordVector],
        n: usize,
        keep: F,
    ) -> Result<Vec<SimilarityResult>>
    where
        F: Fn(&str) -> bool,
    {
        let combined = combine(positives, negatives, self.dim())?;
        if n == 0 {
            return Err(EmbeddingError::EmptyQuery);
        }
        let scores = self.scores(&combined)?;
        let mut candidates: Vec<usize> =
            (0..self.len()).filter(|&i| keep(&self.vocab[i])).collect();
        let by_rank =
            |a: &usize, b: &usize| scores[*b].total_cmp(&scores[*a]).then_with(|| a.cmp(b));
        if candidates.len() > n {
            candidates.select_nth_unstable_by(n - 1, by_rank);
            candidates.truncate(n);
        }
        candidates.sort_unstable_by(by_rank);
        Ok(candidates
            .into_iter()
            .map(|i| SimilarityResult {
                word: self.vocab[i].clone(),
                score: scores[i],
            })
            .collect())
    }

    fn check_dim(&self, found: usize) -> Result<()> {
        if found != self.dim() {
            return Err(EmbeddingError::DimensionMismatch {
                expected: self.dim(),
                found,
            });
        }
        Ok(())
    }
}

fn parse_header(line: &str) -> Result<(usize, usize)> {
    let bad = |reason: &str| EmbeddingError::Header {
        line: 1,
        reason: reason.to_string(),
    };
    let mut parts = line.split_ascii_whitespace();
    let count = parts
        .next()
        .ok_or_else(|| bad("missing word count"))?
        .parse::<usize>()
        .map_err(|_| bad("word count is not an integer"))?;
    let dim = parts
        .next()
        .ok_or_else(|| bad("missing dimension"))?
        .parse::<usize>()
        .map_err(|_| bad("dimension is not an integer"))?;
    if parts.next().is_some() {
        return Err(bad("expected exactly two fields"));
    }
    if count == 0 || dim == 0 {
        return Err(bad("word count and dimension must be positive"));
    }
    Ok((count, dim))
}

/// `(Σ positives − Σ negatives) / (|positives| + |negatives|)`.
fn combine(positives: &[WordVector], negatives: &[WordVector], dim: usize) -> Result<Vec<f64>> {
    let count = positives.len() + negatives.len();
    if count == 0 {
        return Err(EmbeddingError::EmptyQuery);
    }
    let mut acc = vec![0.0; dim];
    for (vectors, sign) in [(positives, 1.0), (negatives, -1.0)] {
        for v in vectors {
            if v.dim() != dim {
                return Err(EmbeddingError::DimensionMismatch {
                    expected: dim,
                    found: v.dim(),
                });
            }
            for (a, x) in acc.iter_mut().zip(&v.values) {
                *a += sign * x;
            }
        }
    }
    let count = count as f64;
    acc.iter_mut().for_each(|a| *a /= count);
    Ok(acc)
}

pub fn norm(values: &[f64]) -> f64 {
    values.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `a · b / (‖a‖ ‖b‖)`.
pub fn cos_sim(a: &WordVector, b: &WordVector) -> Result<f64> {
    cosine(&a.values, &b.values)
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(EmbeddingError::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(EmbeddingError::ZeroNorm);
    }
    Ok(dot(a, b) / (na * nb))
}

/// Weighted mean `Σ wⱼ vⱼ / count`. The divisor is the number of entries, not
/// the sum of weights, and the result is not renormalized.
pub fn mean_vector<'a, I>(items: I) -> Result<WordVector>
where
    I: IntoIterator<Item = (&'a WordVector, f64)>,
{
    let mut acc: Option<Vec<f64>> = None;
    let mut count = 0usize;
    for (v, weight) in items {
        let sum = acc.get_or_insert_with(|| vec![0.0; v.dim()]);
        if sum.len() != v.dim() {
            return Err(EmbeddingError::DimensionMismatch {
                expected: sum.len(),
                found: v.dim(),
            });
        }
        for (a, x) in sum.iter_mut().zip(&v.values) {
            *a += weight * x;
        }
        count += 1;
    }
    let mut sum = acc.ok_or(EmbeddingError::EmptyMean)?;
    let k = count as f64;
    sum.iter_mut().for_each(|a| *a /= k);
    Ok(WordVector::new(sum))
}
