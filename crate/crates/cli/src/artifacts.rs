//! Stage artifacts on disk. Every stage reads its inputs from the output
//! directory and writes its own files there, so runs are resumable and
//! auditable. Each written artifact gets a `<stage>.meta.json` sidecar
//! carrying the config hash and seed.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use xfid_core::orchestrator::{BatchFailure, JudgeVerdict};
use xfid_core::parity::ParityRow;
use xfid_core::report::ParityTableRow;
use xfid_core::similarity::{CkaResult, SimilaritySummary};

use crate::CliError;

/// Well-known file locations under the output directory.
pub struct Paths {
    out: PathBuf,
}

impl Paths {
    pub fn new(out: &Path) -> Paths {
        Paths { out: out.to_path_buf() }
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    pub fn corpus(&self) -> PathBuf {
        self.out.join("corpus.jsonl")
    }

    pub fn sample(&self) -> PathBuf {
        self.out.join("sample.jsonl")
    }

    pub fn translated(&self) -> PathBuf {
        self.out.join("translated.jsonl")
    }

    pub fn translate_journal(&self) -> PathBuf {
        self.out.join("translate_journal.jsonl")
    }

    pub fn translate_failures(&self) -> PathBuf {
        self.out.join("translate_failures.jsonl")
    }

    pub fn verdicts(&self) -> PathBuf {
        self.out.join("verdicts.jsonl")
    }

    pub fn judge_journal(&self) -> PathBuf {
        self.out.join("judge_journal.jsonl")
    }

    pub fn judge_failures(&self) -> PathBuf {
        self.out.join("judge_failures.jsonl")
    }

    pub fn src_matrix(&self) -> PathBuf {
        self.out.join("src.emb")
    }

    pub fn tgt_matrix(&self) -> PathBuf {
        self.out.join("tgt.emb")
    }

    pub fn cosine(&self) -> PathBuf {
        self.out.join("cosine.json")
    }

    pub fn cka(&self) -> PathBuf {
        self.out.join("cka.json")
    }

    pub fn parity_json(&self) -> PathBuf {
        self.out.join("parity.json")
    }

    pub fn parity_csv(&self) -> PathBuf {
        self.out.join("parity.csv")
    }

    pub fn parity_folds_csv(&self) -> PathBuf {
        self.out.join("parity_folds.csv")
    }

    pub fn report_dir(&self) -> PathBuf {
        self.out.join("report")
    }

    pub fn meta(&self, stage: &str) -> PathBuf {
        self.out.join(format!("{stage}.meta.json"))
    }
}

/// Provenance stamped next to every stage output.
#[derive(Debug, Serialize, Deserialize)]
pub struct StageMeta {
    pub stage: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    /// Corpus file the stage consumed, when it consumed one.
    pub corpus: Option<String>,
}

pub fn write_meta(paths: &Paths, meta: &StageMeta) -> Result<(), CliError> {
    let path = paths.meta(&meta.stage);
    let body = serde_json::to_string_pretty(meta).expect("meta serializes");
    std::fs::write(&path, body + "\n")
        .map_err(|e| CliError::Validation(format!("cannot write {}: {e}", path.display())))
}

pub fn read_meta(paths: &Paths, stage: &str) -> Option<StageMeta> {
    let raw = std::fs::read_to_string(paths.meta(stage)).ok()?;
    serde_json::from_str(&raw).ok()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NamedSummary {
    pub subcorpus: String,
    pub summary: SimilaritySummary,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CosineArtifact {
    pub rows: Vec<NamedSummary>,
    pub overall: SimilaritySummary,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NamedCka {
    pub subcorpus: String,
    pub cka: CkaResult,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CkaArtifact {
    pub rows: Vec<NamedCka>,
    pub overall: CkaResult,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NamedParityRow {
    pub subcorpus: String,
    pub row: ParityRow,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ParityArtifact {
    pub rows: Vec<NamedParityRow>,
}

impl ParityArtifact {
    pub fn table_rows(&self) -> Vec<ParityTableRow> {
        self.rows
            .iter()
            .map(|r| ParityTableRow { subcorpus: r.subcorpus.clone(), row: r.row.clone() })
            .collect()
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let body = serde_json::to_string_pretty(value).expect("artifact serializes");
    std::fs::write(path, body + "\n")
        .map_err(|e| CliError::Validation(format!("cannot write {}: {e}", path.display())))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&raw)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), CliError> {
    let file = File::create(path)
        .map_err(|e| CliError::Validation(format!("cannot write {}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    for item in items {
        let line = serde_json::to_string(item).expect("artifact serializes");
        writeln!(w, "{line}").map_err(|e| CliError::Validation(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Validation(e.to_string()))?;
    Ok(())
}

pub fn read_verdicts(path: &Path) -> Result<Vec<JudgeVerdict>, CliError> {
    let file = File::open(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    let mut verdicts = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::Validation(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let v: JudgeVerdict = serde_json::from_str(&line).map_err(|e| {
            CliError::Validation(format!("{} line {}: {e}", path.display(), i + 1))
        })?;
        verdicts.push(v);
    }
    Ok(verdicts)
}

pub fn write_failures(path: &Path, failures: &[BatchFailure]) -> Result<(), CliError> {
    write_jsonl(path, failures)
}

/// Human-readable parity table, one row per (subcorpus, foundation).
pub fn write_parity_csv(path: &Path, rows: &[NamedParityRow]) -> Result<(), CliError> {
    let file = File::create(path)
        .map_err(|e| CliError::Validation(format!("cannot write {}: {e}", path.display())))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record([
        "subcorpus",
        "foundation",
        "en_auc",
        "pl_auc",
        "gap",
        "p_gt0",
        "p_lt_thresh",
        "threshold",
        "degenerate",
    ])
    .map_err(|e| CliError::Validation(e.to_string()))?;
    for r in rows {
        w.write_record([
            r.subcorpus.as_str(),
            r.row.foundation.name(),
            &format!("{:.6}", r.row.en_auc),
            &format!("{:.6}", r.row.pl_auc),
            &format!("{:.6}", r.row.gap),
            &format!("{:.6}", r.row.p_gt0),
            &format!("{:.6}", r.row.p_lt_thresh),
            &format!("{}", r.row.threshold),
            &r.row.degenerate.to_string(),
        ])
        .map_err(|e| CliError::Validation(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Validation(e.to_string()))?;
    Ok(())
}

/// Per-fold AUC pairs in the same layout `parity --import` accepts.
pub fn write_parity_folds_csv(path: &Path, rows: &[NamedParityRow]) -> Result<(), CliError> {
    let file = File::create(path)
        .map_err(|e| CliError::Validation(format!("cannot write {}: {e}", path.display())))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(["foundation", "fold", "en_auc", "pl_auc"])
        .map_err(|e| CliError::Validation(e.to_string()))?;
    for r in rows {
        for (fold, (en, pl)) in r.row.per_fold.iter().enumerate() {
            w.write_record([
                r.row.foundation.name(),
                &fold.to_string(),
                &format!("{en:.6}"),
                &format!("{pl:.6}"),
            ])
            .map_err(|e| CliError::Validation(e.to_string()))?;
        }
    }
    w.flush().map_err(|e| CliError::Validation(e.to_string()))?;
    Ok(())
}
