//! Embedding providers behind a minimal batch contract.
//!
//! The HTTP contract is deliberately provider-agnostic: POST
//! `{"texts": [...]}`, receive `{"embeddings": [[...], ...]}`. A file-backed
//! implementation serves precomputed vectors keyed by exact text, which keeps
//! offline runs and fixtures deterministic.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{BackendConfig, EmbedError};

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("status {code}: {body}")]
    Status { code: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("no embedding on file for text starting `{0}`")]
    Missing(String),
}

#[allow(async_fn_in_trait)]
pub trait EmbeddingBackend {
    async fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, BackendError>;
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    embeddings: Vec<Vec<f32>>,
}

/// Talks to an embedding service over HTTP; bearer auth comes from the
/// environment variable named in the config.
pub struct HttpBackend {
    client: reqwest::Client,
    endpoint: String,
    token: Option<String>,
}

impl HttpBackend {
    pub fn new(cfg: &BackendConfig) -> Result<Self, EmbedError> {
        let token = match &cfg.auth_env {
            Some(var) => Some(std::env::var(var).map_err(|_| EmbedError::BackendUnavailable {
                reason: format!("auth environment variable `{var}` is not set"),
            })?),
            None => None,
        };
        let client = reqwest::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| EmbedError::BackendUnavailable { reason: e.to_string() })?;
        Ok(Self { client, endpoint: cfg.endpoint.clone(), token })
    }
}

impl EmbeddingBackend for HttpBackend {
    async fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, BackendError> {
        let mut req = self.client.post(&self.endpoint).json(&EmbedRequest { texts });
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().await.map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().await.unwrap_or_default();
            return Err(BackendError::Status { code: status.as_u16(), body });
        }
        let parsed: EmbedResponse = resp
            .json()
            .await
            .map_err(|e| BackendError::Malformed(e.to_string()))?;
        Ok(parsed.embeddings)
    }
}

#[derive(Deserialize)]
struct FileEntry {
    text: String,
    embedding: Vec<f32>,
}

/// Serves embeddings from a JSONL map of `{"text": ..., "embedding": [...]}`
/// lines. Later entries for the same text win.
pub struct FileBackend {
    map: HashMap<String, Vec<f32>>,
}

impl FileBackend {
    pub fn load(path: &Path) -> Result<Self, EmbedError> {
        let file = File::open(path)?;
        let reader = BufReader::new(file);
        let mut map = HashMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: FileEntry =
                serde_json::from_str(&line).map_err(|e| EmbedError::BackendUnavailable {
                    reason: format!("embedding map line {}: {e}", idx + 1),
                })?;
            map.insert(entry.text, entry.embedding);
        }
        Ok(Self { map })
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

impl EmbeddingBackend for FileBackend {
    async fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, BackendError> {
        texts
            .iter()
            .map(|t| {
                self.map.get(t).cloned().ok_or_else(|| {
                    let prefix: String = t.chars().take(32).collect();
                    BackendError::Missing(prefix)
                })
            })
            .collect()
    }
}
