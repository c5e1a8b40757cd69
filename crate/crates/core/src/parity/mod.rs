//! Classifier-parity evaluation: per-foundation logistic heads on frozen
//! embeddings, stratified k-fold cross-validation shared between the two
//! languages, ROC-AUC per fold, and two one-sided paired t-tests per
//! foundation (gap > 0 and gap < threshold).

mod auc;
mod folds;
mod logistic;
mod ttest;

pub use auc::roc_auc;
pub use folds::{stratified_kfold, FoldAssignment};
pub use logistic::{
    logistic_gradient, logistic_loss, train_logistic, train_logistic_traced, LogisticHead,
    TrainConfig,
};
pub use ttest::{paired_t_onesided, student_t_cdf, Direction, TTestResult};

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Foundation, Labels};
use crate::embed::EmbeddingMatrix;

#[derive(Debug, Error)]
pub enum ParityError {
    #[error("{n} samples cannot support {need} folds")]
    TooFewSamples { n: usize, need: usize },
    #[error("labels contain a single class")]
    SingleClass,
    #[error("optimization diverged to a non-finite loss")]
    Diverged,
    #[error("paired differences have zero variance")]
    ZeroVariance,
    #[error("matrices are not aligned on the same ids")]
    MisalignedIds,
    #[error("foundation {foundation}, fold {fold}: a split lost one class")]
    FoldClassCollapse { foundation: Foundation, fold: usize },
    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("foundation {foundation}: incomplete folds: {detail}")]
    MissingFolds { foundation: Foundation, detail: String },
    #[error("invalid shape: {reason}")]
    Shape { reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One parity table row: per-foundation AUCs for both languages, the mean
/// per-fold gap, and the two one-sided p-values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParityRow {
    pub foundation: Foundation,
    pub en_auc: f64,
    pub pl_auc: f64,
    /// Mean over folds of (en - pl).
    pub gap: f64,
    /// One-sided paired test of H1: gap > 0.
    pub p_gt0: f64,
    /// One-sided paired test of H1: gap < threshold.
    pub p_lt_thresh: f64,
    pub threshold: f64,
    pub per_fold: Vec<(f64, f64)>,
    /// True when the fold differences had zero variance; both p-values are
    /// then reported as 0.5 rather than failing the whole table.
    pub degenerate: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParityConfig {
    pub k: usize,
    pub seed: u64,
    pub train: TrainConfig,
    /// Practical-equivalence margin for the second test (gap < threshold).
    pub threshold: f64,
}

impl Default for ParityConfig {
    fn default() -> Self {
        Self { k: 10, seed: 42, train: TrainConfig::default(), threshold: 0.02 }
    }
}

// Distinct, stable stream per foundation derived from the user seed.
fn fold_seed(seed: u64, foundation: Foundation) -> u64 {
    seed.wrapping_add((foundation.index() as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Runs the full parity protocol on aligned source/target matrices.
///
/// Per foundation, one fold assignment is drawn from the foundation's labels
/// and shared by both languages so the per-fold AUC differences are paired
/// observations. Folds are evaluated in parallel; results are identical to a
/// sequential run because every fold's computation is independent and
/// deterministic.
pub fn run_parity(
    src: &EmbeddingMatrix,
    tgt: &EmbeddingMatrix,
    labels: &[Labels],
    cfg: &ParityConfig,
) -> Result<Vec<ParityRow>, ParityError> {
    if src.ids() != tgt.ids() {
        return Err(ParityError::MisalignedIds);
    }
    if labels.len() != src.n() {
        return Err(ParityError::Shape {
            reason: format!("{} label rows for {} posts", labels.len(), src.n()),
        });
    }

    let mut rows = Vec::with_capacity(Foundation::ALL.len());
    for foundation in Foundation::ALL {
        let y: Vec<bool> = labels.iter().map(|l| l.get(foundation)).collect();
        rows.push(parity_task(src, tgt, &y, foundation, cfg)?);
    }
    Ok(rows)
}

/// One binary parity task: shared stratified folds, two heads per fold,
/// paired t-tests on the per-fold AUC differences. `run_parity` calls this
/// once per foundation.
pub fn parity_task(
    src: &EmbeddingMatrix,
    tgt: &EmbeddingMatrix,
    y: &[bool],
    foundation: Foundation,
    cfg: &ParityConfig,
) -> Result<ParityRow, ParityError> {
    if src.ids() != tgt.ids() {
        return Err(ParityError::MisalignedIds);
    }
    if y.len() != src.n() {
        return Err(ParityError::Shape {
            reason: format!("{} labels for {} posts", y.len(), src.n()),
        });
    }
    let assignment = stratified_kfold(y, cfg.k, fold_seed(cfg.seed, foundation))?;

    let mut per_fold: Vec<Result<(f64, f64), ParityError>> = Vec::with_capacity(cfg.k);
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..cfg.k)
            .map(|fold| {
                let assignment = &assignment;
                scope.spawn(move || {
                    evaluate_fold(src, tgt, y, assignment, fold, foundation, &cfg.train)
                })
            })
            .collect();
        for handle in handles {
            per_fold.push(handle.join().expect("fold worker panicked"));
        }
    });
    let per_fold: Vec<(f64, f64)> = per_fold.into_iter().collect::<Result<_, _>>()?;
    row_from_folds(foundation, per_fold, cfg.threshold)
}

fn evaluate_fold(
    src: &EmbeddingMatrix,
    tgt: &EmbeddingMatrix,
    y: &[bool],
    assignment: &FoldAssignment,
    fold: usize,
    foundation: Foundation,
    train_cfg: &TrainConfig,
) -> Result<(f64, f64), ParityError> {
    let train_idx = assignment.train_indices(fold);
    let test_idx = assignment.test_indices(fold);
    for split in [&train_idx, &test_idx] {
        let pos = split.iter().filter(|&&i| y[i]).count();
        if pos == 0 || pos == split.len() {
            return Err(ParityError::FoldClassCollapse { foundation, fold });
        }
    }
    let train_y: Vec<bool> = train_idx.iter().map(|&i| y[i]).collect();
    let test_y: Vec<bool> = test_idx.iter().map(|&i| y[i]).collect();

    let auc_for = |m: &EmbeddingMatrix| -> Result<f64, ParityError> {
        let rows: Vec<&[f32]> = train_idx.iter().map(|&i| m.row(i)).collect();
        let head = train_logistic(&rows, &train_y, train_cfg)?;
        let scores: Vec<f64> = test_idx.iter().map(|&i| head.score(m.row(i))).collect();
        roc_auc(&scores, &test_y)
    };
    Ok((auc_for(src)?, auc_for(tgt)?))
}

/// Builds a [`ParityRow`] from stored per-fold AUC pairs, applying exactly
/// the t-tests `run_parity` uses.
pub fn row_from_folds(
    foundation: Foundation,
    per_fold: Vec<(f64, f64)>,
    threshold: f64,
) -> Result<ParityRow, ParityError> {
    let n = per_fold.len();
    if n < 2 {
        return Err(ParityError::TooFewSamples { n, need: 2 });
    }
    let diffs: Vec<f64> = per_fold.iter().map(|&(en, pl)| en - pl).collect();
    let en_auc = per_fold.iter().map(|&(en, _)| en).sum::<f64>() / n as f64;
    let pl_auc = per_fold.iter().map(|&(_, pl)| pl).sum::<f64>() / n as f64;
    let gap = diffs.iter().sum::<f64>() / n as f64;

    let (p_gt0, p_lt_thresh, degenerate) =
        match paired_t_onesided(&diffs, 0.0, Direction::Greater) {
            Ok(gt) => {
                let lt = paired_t_onesided(&diffs, threshold, Direction::Less)?;
                (gt.p_value, lt.p_value, false)
            }
            Err(ParityError::ZeroVariance) => (0.5, 0.5, true),
            Err(e) => return Err(e),
        };

    Ok(ParityRow {
        foundation,
        en_auc,
        pl_auc,
        gap,
        p_gt0,
        p_lt_thresh,
        threshold,
        per_fold,
        degenerate,
    })
}

/// Per-fold AUC pairs produced outside this harness (e.g. by a fine-tuned
/// transformer); only the t-tests are applied here.
#[derive(Clone, Debug, PartialEq)]
pub struct ExternalFolds {
    pub foundation: Foundation,
    pub per_fold: Vec<(f64, f64)>,
}

/// Reads a `foundation,fold,en_auc,pl_auc` CSV. Every foundation present
/// must cover folds 0..count without gaps or duplicates.
pub fn import_external_folds(path: &Path) -> Result<Vec<ExternalFolds>, ParityError> {
    let file = File::open(path)?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(BufReader::new(file));
    let headers = reader.headers().map_err(|e| ParityError::MalformedRecord {
        line: 1,
        reason: e.to_string(),
    })?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| ParityError::MalformedRecord {
            line: 1,
            reason: format!("missing column `{name}`"),
        })
    };
    let (ci_f, ci_fold, ci_en, ci_pl) = (col("foundation")?, col("fold")?, col("en_auc")?, col("pl_auc")?);

    type FoldSlots = Vec<Option<(f64, f64)>>;
    let mut per_foundation: Vec<(Foundation, FoldSlots)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| ParityError::MalformedRecord {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            reason: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let malformed = |reason: String| ParityError::MalformedRecord { line, reason };

        let foundation: Foundation =
            record.get(ci_f).unwrap_or("").parse().map_err(malformed)?;
        let fold: usize = record
            .get(ci_fold)
            .unwrap_or("")
            .parse()
            .map_err(|e| malformed(format!("fold: {e}")))?;
        let parse_auc = |i: usize, name: &str| -> Result<f64, ParityError> {
            let v: f64 = record
                .get(i)
                .unwrap_or("")
                .parse()
                .map_err(|e| malformed(format!("{name}: {e}")))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(malformed(format!("{name} = {v} outside [0, 1]")));
            }
            Ok(v)
        };
        let en = parse_auc(ci_en, "en_auc")?;
        let pl = parse_auc(ci_pl, "pl_auc")?;

        let slot = match per_foundation.iter_mut().find(|(f, _)| *f == foundation) {
            Some((_, v)) => v,
            None => {
                per_foundation.push((foundation, Vec::new()));
                &mut per_foundation.last_mut().unwrap().1
            }
        };
        if slot.len() <= fold {
            slot.resize(fold + 1, None);
        }
        if slot[fold].replace((en, pl)).is_some() {
            return Err(malformed(format!("duplicate fold {fold} for {foundation}")));
        }
    }

    per_foundation.sort_by_key(|(f, _)| f.index());
    let mut out = Vec::with_capacity(per_foundation.len());
    for (foundation, slots) in per_foundation {
        let missing: Vec<String> = slots
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_none())
            .map(|(i, _)| i.to_string())
            .collect();
        if !missing.is_empty() {
            return Err(ParityError::MissingFolds {
                foundation,
                detail: format!("missing fold(s) {}", missing.join(", ")),
            });
        }
        out.push(ExternalFolds {
            foundation,
            per_fold: slots.into_iter().map(|s| s.unwrap()).collect(),
        });
    }
    Ok(out)
}

/// Applies the parity t-tests to externally produced fold metrics.
pub fn parity_rows_from_external(
    folds: &[ExternalFolds],
    threshold: f64,
) -> Result<Vec<ParityRow>, ParityError> {
    folds
        .iter()
        .map(|f| row_from_folds(f.foundation, f.per_fold.clone(), threshold))
        .collect()
}
