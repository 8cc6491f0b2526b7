//! Utterance-level aggregation kernels over frame-level feature sequences.
//!
//! Two kernels are provided: temporal statistics pooling (per-dimension mean
//! and population standard deviation, concatenated) and softmax-attentive
//! pooling (a scalar attention score per frame, softmax over time, weighted
//! sum of projected frames). Both are pure functions and permutation
//! invariant over the frame axis.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PoolingError {
    #[error("frame matrix needs at least one frame")]
    EmptyFrames,
    #[error("frame {row} has {found} features, expected {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("non-finite feature at frame {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("parameter shape mismatch: {what}")]
    ShapeMismatch { what: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: cannot parse {token:?}")]
    Parse {
        path: PathBuf,
        line: usize,
        token: String,
    },
    #[error("{path}: expected {expected} frame rows, found {found}")]
    RowCount {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("{path}: missing `T F` header line")]
    MissingHeader { path: PathBuf },
}

/// A T x F matrix of frame-level features, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeatures {
    frames: usize,
    dim: usize,
    data: Vec<f64>,
}

impl FrameFeatures {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, PoolingError> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(PoolingError::EmptyFrames);
        }
        let dim = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (row, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(PoolingError::RaggedRow {
                    row,
                    expected: dim,
                    found: r.len(),
                });
            }
            if let Some(col) = r.iter().position(|v| !v.is_finite()) {
                return Err(PoolingError::NonFinite { row, col });
            }
            data.extend_from_slice(r);
        }
        Ok(FrameFeatures {
            frames: rows.len(),
            dim,
            data,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }
}

/// Reads a frame matrix from a text file: a `T F` header line followed by
/// T rows of F space-separated values.
pub fn read_frame_features(path: &Path) -> Result<FrameFeatures, PoolingError> {
    let io = |e| PoolingError::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let file = File::open(path).map_err(io)?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(line) => line.map_err(io)?,
        None => {
            return Err(PoolingError::MissingHeader {
                path: path.to_path_buf(),
            })
        }
    };
    let parse =
        |line: usize, token: &str| -> Result<f64, PoolingError> {
            token.parse().map_err(|_| PoolingError::Parse {
                path: path.to_path_buf(),
                line,
                token: token.to_string(),
            })
        };
    let dims: Vec<&str> = header.split_whitespace().collect();
    if dims.len() != 2 {
        return Err(PoolingError::MissingHeader {
            path: path.to_path_buf(),
        });
    }
    let t = parse(1, dims[0])? as usize;
    let f = parse(1, dims[1])? as usize;
    let mut rows = Vec::with_capacity(t);
    for (lineno, line) in lines.enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::with_capacity(f);
        for token in line.split_whitespace() {
            row.push(parse(lineno + 2, token)?);
        }
        if row.len() != f {
            return Err(PoolingError::RaggedRow {
                row: rows.len(),
                expected: f,
                found: row.len(),
            });
        }
        rows.push(row);
    }
    if rows.len() != t {
        return Err(PoolingError::RowCount {
            path: path.to_path_buf(),
            expected: t,
            found: rows.len(),
        });
    }
    FrameFeatures::new(rows)
}

/// Parameters of the attentive pooling head: a scalar score per frame
/// (`w1 . h_t + b1`) and an affine value projection (`W2 h_t + b2`).
#[derive(Debug, Clone, PartialEq)]
pub struct AttentivePoolingParams {
    pub w1: Vec<f64>,
    pub b1: f64,
    pub w2: Vec<Vec<f64>>,
    pub b2: Vec<f64>,
}

impl AttentivePoolingParams {
    pub fn output_dim(&self) -> usize {
        self.w2.len()
    }

    fn validate(&self, feature_dim: usize) -> Result<(), PoolingError> {
        if self.w1.len() != feature_dim {
            return Err(PoolingError::ShapeMismatch {
                what: format!("w1 has len {}, features have dim {feature_dim}", self.w1.len()),
            });
        }
        if self.w2.len() != self.b2.len() {
            return Err(PoolingError::ShapeMismatch {
                what: format!("w2 has {} rows but b2 has len {}", self.w2.len(), self.b2.len()),
            });
        }
        if self.w2.is_empty() {
            return Err(PoolingError::ShapeMismatch {
                what: "w2 must have at least one output row".to_string(),
            });
        }
        for (i, row) in self.w2.iter().enumerate() {
            if row.len() != feature_dim {
                return Err(PoolingError::ShapeMismatch {
                    what: format!(
                        "w2 row {i} has len {}, features have dim {feature_dim}",
                        row.len()
                    ),
                });
            }
        }
        let finite = self.w1.iter().all(|v| v.is_finite())
            && self.b1.is_finite()
            && self.b2.iter().all(|v| v.is_finite())
            && self.w2.iter().flatten().all(|v| v.is_finite());
        if !finite {
            return Err(PoolingError::ShapeMismatch {
                what: "parameters contain non-finite entries".to_string(),
            });
        }
        Ok(())
    }
}

/// Attentive-pooling result: the pooled vector and the attention weights.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentivePooled {
    pub output: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Temporal statistics pooling: `[mean_1..mean_F, std_1..std_F]` over the
/// frame axis, with the population (divide-by-T) standard deviation.
pub fn tstp(frames: &FrameFeatures) -> Vec<f64> {
    let t = frames.frames() as f64;
    let f = frames.dim();
    let mut mean = vec![0.0; f];
    for row in frames.rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= t;
    }
    let mut var = vec![0.0; f];
    for row in frames.rows() {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            let d = v - m;
            *s += d * d;
        }
    }
    let mut out = mean;
    out.extend(var.into_iter().map(|s| (s / t).sqrt()));
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Softmax over the scalar frame scores, with max-subtraction so that a
/// constant shift of all scores leaves the weights unchanged.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|e| (e - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Attentive pooling: score each frame, softmax over time, and return the
/// attention-weighted sum of the projected frames.
pub fn attentive_pool(
    frames: &FrameFeatures,
    params: &AttentivePoolingParams,
) -> Result<AttentivePooled, PoolingError> {
    params.validate(frames.dim())?;
    let scores: Vec<f64> = frames.rows().map(|h| dot(&params.w1, h) + params.b1).collect();
    let weights = softmax(&scores);
    let out_dim = params.output_dim();
    let mut output = vec![0.0; out_dim];
    for (h, &alpha) in frames.rows().zip(&weights) {
        for (o, (w_row, b)) in output.iter_mut().zip(params.w2.iter().zip(&params.b2)) {
            *o += alpha * (dot(w_row, h) + b);
        }
    }
    Ok(AttentivePooled { output, weights })
}
