//! Sentence-embedding matrices and the backends that produce them.
//!
//! The encoder itself (e.g. LaBSE) is consumed as an external service; this
//! module only fetches, validates and persists its output. Storage is 32-bit
//! floats; all downstream math accumulates in 64-bit.

mod backend;
mod format;

pub use backend::{BackendError, EmbeddingBackend, FileBackend, HttpBackend};
pub use format::{load_matrix, save_matrix};

use std::collections::HashSet;
use std::time::Duration;

use futures::stream::{self, StreamExt, TryStreamExt};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedding backend unavailable: {reason}")]
    BackendUnavailable { reason: String },
    #[error("batch {batch}: embedding dimension {got}, expected {expected}")]
    DimensionMismatch { batch: usize, expected: usize, got: usize },
    #[error("row {row}: non-finite embedding component")]
    NonFiniteEmbedding { row: usize },
    #[error("row {row} has zero norm")]
    ZeroRow { row: usize },
    #[error("corrupt matrix header")]
    CorruptHeader,
    #[error("matrix payload truncated")]
    TruncatedPayload,
    #[error("matrix shape invalid: {reason}")]
    Shape { reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Row-aligned dense embedding matrix: one row per post id.
///
/// Invariants (enforced at construction): ids are unique and one per row,
/// every component is finite.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    ids: Vec<String>,
    data: Vec<f32>,
    dim: usize,
}

impl EmbeddingMatrix {
    pub fn new(ids: Vec<String>, data: Vec<f32>, dim: usize) -> Result<Self, EmbedError> {
        if dim == 0 {
            return Err(EmbedError::Shape { reason: "dimension must be at least 1".into() });
        }
        if data.len() != ids.len() * dim {
            return Err(EmbedError::Shape {
                reason: format!(
                    "{} values cannot form {} rows of dimension {dim}",
                    data.len(),
                    ids.len()
                ),
            });
        }
        let mut seen = HashSet::with_capacity(ids.len());
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(EmbedError::Shape { reason: format!("duplicate id `{id}`") });
            }
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(EmbedError::NonFiniteEmbedding { row: pos / dim });
        }
        Ok(Self { ids, data, dim })
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    /// New matrix holding the given rows in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<EmbeddingMatrix, EmbedError> {
        let mut ids = Vec::with_capacity(indices.len());
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            if i >= self.n() {
                return Err(EmbedError::Shape { reason: format!("row index {i} out of range") });
            }
            ids.push(self.ids[i].clone());
            data.extend_from_slice(self.row(i));
        }
        EmbeddingMatrix::new(ids, data, self.dim)
    }
}

/// Connection settings for an embedding service.
#[derive(Clone, Debug)]
pub struct BackendConfig {
    /// Full URL of the embedding endpoint.
    pub endpoint: String,
    pub batch_size: usize,
    pub timeout: Duration,
    /// Name of the environment variable holding the bearer token, if any.
    pub auth_env: Option<String>,
    /// Batch requests issued concurrently.
    pub max_concurrent_batches: usize,
}

impl BackendConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            batch_size: 32,
            timeout: Duration::from_secs(30),
            auth_env: None,
            max_concurrent_batches: 4,
        }
    }
}

/// Embeds `texts[i]` into row `i`, batching transparently.
///
/// Batches are issued with at most `cfg.max_concurrent_batches` in flight and
/// reassembled in input order. The first batch fixes the dimension; any later
/// deviation is a contract violation.
pub async fn fetch_embeddings<B: EmbeddingBackend>(
    ids: &[String],
    texts: &[String],
    cfg: &BackendConfig,
    backend: &B,
) -> Result<EmbeddingMatrix, EmbedError> {
    if texts.is_empty() {
        return Err(EmbedError::Shape { reason: "no texts to embed".into() });
    }
    if ids.len() != texts.len() {
        return Err(EmbedError::Shape {
            reason: format!("{} ids for {} texts", ids.len(), texts.len()),
        });
    }
    if cfg.batch_size == 0 {
        return Err(EmbedError::Shape { reason: "batch_size must be at least 1".into() });
    }

    let concurrency = cfg.max_concurrent_batches.max(1);
    let batches: Vec<Vec<Vec<f32>>> = stream::iter(
        texts
            .chunks(cfg.batch_size)
            .map(|chunk| async move {
                tokio::time::timeout(cfg.timeout, backend.embed_batch(chunk))
                    .await
                    .map_err(|_| EmbedError::BackendUnavailable { reason: "request timed out".into() })?
                    .map_err(|e| EmbedError::BackendUnavailable { reason: e.to_string() })
            }),
    )
    .buffered(concurrency)
    .try_collect()
    .await?;

    let mut dim: Option<usize> = None;
    let mut data: Vec<f32> = Vec::new();
    let mut row = 0usize;
    for (batch_idx, (batch, chunk)) in batches.iter().zip(texts.chunks(cfg.batch_size)).enumerate() {
        if batch.len() != chunk.len() {
            return Err(EmbedError::BackendUnavailable {
                reason: format!(
                    "batch {batch_idx} returned {} rows for {} texts",
                    batch.len(),
                    chunk.len()
                ),
            });
        }
        for vec in batch {
            let d = *dim.get_or_insert(vec.len());
            if vec.len() != d {
                return Err(EmbedError::DimensionMismatch {
                    batch: batch_idx,
                    expected: d,
                    got: vec.len(),
                });
            }
            if vec.iter().any(|v| !v.is_finite()) {
                return Err(EmbedError::NonFiniteEmbedding { row });
            }
            data.extend_from_slice(vec);
            row += 1;
        }
    }
    let dim = dim.expect("at least one batch");
    EmbeddingMatrix::new(ids.to_vec(), data, dim)
}

/// Scales every row to unit Euclidean norm. Norms are accumulated in f64.
pub fn l2_normalize(m: &EmbeddingMatrix) -> Result<EmbeddingMatrix, EmbedError> {
    let mut data = Vec::with_capacity(m.data.len());
    for (i, row) in m.rows().enumerate() {
        let norm = row.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(EmbedError::ZeroRow { row: i });
        }
        data.extend(row.iter().map(|&v| (v as f64 / norm) as f32));
    }
    EmbeddingMatrix::new(m.ids.clone(), data, m.dim)
}
