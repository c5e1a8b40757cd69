//! Cross-lingual similarity diagnostics on aligned embedding matrices:
//! per-pair cosine statistics and linear centered kernel alignment.
//!
//! Both operate on row-aligned matrices (same ids in the same order). All
//! accumulation happens in f64 regardless of the f32 storage.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::EmbeddingMatrix;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("matrices are not aligned on the same ids")]
    MisalignedIds,
    #[error("dimension mismatch: {src} vs {tgt}")]
    DimensionMismatch { src: usize, tgt: usize },
    #[error("row {row} has zero norm")]
    ZeroRow { row: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("degenerate input: a centered matrix is all zeros")]
    DegenerateInput,
}

/// Distribution summary of per-pair cosine values (one table row).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilaritySummary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n-1 denominator); 0 for a single value.
    pub std: f64,
    pub p05: f64,
    pub p95: f64,
}

/// Linear CKA between two embedding spaces, in [0, 1].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CkaResult {
    pub value: f64,
    pub n: usize,
    pub d_src: usize,
    pub d_tgt: usize,
}

fn check_alignment(src: &EmbeddingMatrix, tgt: &EmbeddingMatrix) -> Result<(), MetricError> {
    if src.ids() != tgt.ids() {
        return Err(MetricError::MisalignedIds);
    }
    Ok(())
}

/// Cosine similarity of each aligned row pair.
pub fn pairwise_cosine(
    src: &EmbeddingMatrix,
    tgt: &EmbeddingMatrix,
) -> Result<Vec<f64>, MetricError> {
    check_alignment(src, tgt)?;
    if src.dim() != tgt.dim() {
        return Err(MetricError::DimensionMismatch { src: src.dim(), tgt: tgt.dim() });
    }
    let mut values = Vec::with_capacity(src.n());
    for (i, (a, b)) in src.rows().zip(tgt.rows()).enumerate() {
        let mut dot = 0.0f64;
        let mut na = 0.0f64;
        let mut nb = 0.0f64;
        for (&x, &y) in a.iter().zip(b) {
            let (x, y) = (x as f64, y as f64);
            dot += x * y;
            na += x * x;
            nb += y * y;
        }
        if na == 0.0 || nb == 0.0 {
            return Err(MetricError::ZeroRow { row: i });
        }
        values.push((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0));
    }
    Ok(values)
}

/// Mean, sample std, and 5th/95th percentiles of a value list.
///
/// Percentiles interpolate linearly between order statistics at rank
/// `q * (n - 1)`.
pub fn summarize(values: &[f64]) -> Result<SimilaritySummary, MetricError> {
    if values.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let n = values.len();
    // A constant list summarizes exactly, with no accumulation fuzz.
    let first = values[0];
    if values.iter().all(|&v| v == first) {
        return Ok(SimilaritySummary { n, mean: first, std: 0.0, p05: first, p95: first });
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n == 1 {
        0.0
    } else {
        let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
        (ss / (n - 1) as f64).sqrt()
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("cosine values are finite"));
    Ok(SimilaritySummary {
        n,
        mean,
        std,
        p05: percentile(&sorted, 0.05),
        p95: percentile(&sorted, 0.95),
    })
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let rank = q * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Linear CKA between two aligned matrices; dimensions may differ.
///
/// With X, Y the column-mean-centered matrices, the value is
/// `||Y'X||_F^2 / (||X'X||_F * ||Y'Y||_F)`. This feature-space form costs
/// O(n * d^2) instead of the O(n^2) Gram form, which matters at corpus scale.
pub fn linear_cka(src: &EmbeddingMatrix, tgt: &EmbeddingMatrix) -> Result<CkaResult, MetricError> {
    check_alignment(src, tgt)?;
    let n = src.n();
    if n < 2 {
        return Err(MetricError::EmptyInput);
    }

    let x = centered(src);
    let y = centered(tgt);
    let (dx, dy) = (src.dim(), tgt.dim());

    let cross = frob_sq_product(&x, dx, &y, dy, n);
    let xx = frob_sq_product(&x, dx, &x, dx, n).sqrt();
    let yy = frob_sq_product(&y, dy, &y, dy, n).sqrt();
    if xx == 0.0 || yy == 0.0 {
        return Err(MetricError::DegenerateInput);
    }
    Ok(CkaResult { value: cross / (xx * yy), n, d_src: dx, d_tgt: dy })
}

/// Column-mean-centered copy in f64, row-major.
fn centered(m: &EmbeddingMatrix) -> Vec<f64> {
    let (n, d) = (m.n(), m.dim());
    let mut means = vec![0.0f64; d];
    for row in m.rows() {
        for (s, &v) in means.iter_mut().zip(row) {
            *s += v as f64;
        }
    }
    for s in &mut means {
        *s /= n as f64;
    }
    let mut out = Vec::with_capacity(n * d);
    for row in m.rows() {
        for (&mean, &v) in means.iter().zip(row) {
            out.push(v as f64 - mean);
        }
    }
    out
}

/// `||A'B||_F^2` for row-major A (n x da) and B (n x db).
fn frob_sq_product(a: &[f64], da: usize, b: &[f64], db: usize, n: usize) -> f64 {
    let mut total = 0.0f64;
    for i in 0..da {
        for j in 0..db {
            let mut dot = 0.0f64;
            for k in 0..n {
                dot += a[k * da + i] * b[k * db + j];
            }
            total += dot * dot;
        }
    }
    total
}

/// Cosine summaries per group plus an overall summary over the pooled
/// values. The overall row is always recomputed from the concatenation of
/// all pairs, never averaged over group summaries.
pub fn grouped_cosine_summaries(
    src: &EmbeddingMatrix,
    tgt: &EmbeddingMatrix,
    groups: &[(String, Vec<usize>)],
) -> Result<(Vec<(String, SimilaritySummary)>, SimilaritySummary), MetricError> {
    let values = pairwise_cosine(src, tgt)?;
    let mut rows = Vec::with_capacity(groups.len());
    for (name, indices) in groups {
        let subset: Vec<f64> = indices.iter().map(|&i| values[i]).collect();
        rows.push((name.clone(), summarize(&subset)?));
    }
    let overall = summarize(&values)?;
    Ok((rows, overall))
}
