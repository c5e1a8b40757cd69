//! Renders the result tables and the final quality verdict.
//!
//! Rendering is a pure function of the bundle: identical bundles produce
//! byte-identical documents. Cosine, CKA and AUC values print with three
//! decimals, percentages with one, and the overall cosine/CKA rows must be
//! computed over the pooled pairs (the metric helpers already guarantee
//! this; renderers never average subcorpus rows).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Foundation;
use crate::orchestrator::JudgeAudit;
use crate::parity::ParityRow;
use crate::similarity::{CkaResult, SimilaritySummary};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("bundle has no populated sections")]
    EmptyBundle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrevalenceRow {
    pub subcorpus: String,
    pub n: usize,
    /// Percentages in canonical foundation order.
    pub pct: [f64; 5],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CosineRow {
    pub subcorpus: String,
    pub summary: SimilaritySummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CkaRow {
    pub subcorpus: String,
    pub cka: CkaResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParityTableRow {
    pub subcorpus: String,
    pub row: ParityRow,
}

/// Seed and config fingerprint stamped into rendered documents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub config_hash: String,
}

/// Everything the report stage can render. Empty sections are simply
/// omitted from the output.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReportBundle {
    pub corpus_label: String,
    pub prevalence: Vec<PrevalenceRow>,
    pub cosine: Vec<CosineRow>,
    /// Summary over the pooled pairs of every subcorpus.
    pub cosine_overall: Option<SimilaritySummary>,
    pub cka: Vec<CkaRow>,
    /// CKA over the concatenated matrices, not an average of rows.
    pub cka_overall: Option<CkaResult>,
    pub parity: Vec<ParityTableRow>,
    pub judge: Vec<JudgeAudit>,
    pub verdict: Option<Verdict>,
    pub provenance: Option<Provenance>,
}

impl ReportBundle {
    fn has_content(&self) -> bool {
        !self.prevalence.is_empty()
            || !self.cosine.is_empty()
            || self.cosine_overall.is_some()
            || !self.cka.is_empty()
            || self.cka_overall.is_some()
            || !self.parity.is_empty()
            || !self.judge.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RenderFormat {
    Markdown,
    Csv,
}

/// One rendered output file.
#[derive(Clone, Debug, PartialEq)]
pub struct Document {
    pub filename: String,
    pub content: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictStatus {
    Pass,
    Warn,
    Fail,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub status: VerdictStatus,
    pub reasons: Vec<String>,
}

/// Pass/warn/fail thresholds; a "family" is one of the three metric groups
/// (cosine, parity, judge).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VerdictThresholds {
    pub cosine_min: f64,
    pub gap_max: f64,
    pub clean_min: f64,
}

impl Default for VerdictThresholds {
    fn default() -> Self {
        Self { cosine_min: 0.80, gap_max: 0.05, clean_min: 90.0 }
    }
}

/// Grades the bundle: pass when every present family meets its threshold,
/// warn when exactly one family breaches, fail on two or more.
pub fn verdict(bundle: &ReportBundle, thresholds: &VerdictThresholds) -> Verdict {
    let mut reasons = Vec::new();
    let mut failed_families = 0usize;

    if let Some(overall) = &bundle.cosine_overall {
        if overall.mean < thresholds.cosine_min {
            failed_families += 1;
            reasons.push(format!(
                "mean cosine {} below {}",
                fmt3(overall.mean),
                fmt2(thresholds.cosine_min)
            ));
        }
    }

    if !bundle.parity.is_empty() {
        let mut breached = false;
        for entry in &bundle.parity {
            if entry.row.gap > thresholds.gap_max {
                breached = true;
                reasons.push(format!(
                    "parity gap {} on {} ({}) exceeds {}",
                    fmt_signed3(entry.row.gap),
                    foundation_label(entry.row.foundation),
                    entry.subcorpus,
                    fmt2(thresholds.gap_max)
                ));
            }
        }
        if breached {
            failed_families += 1;
        }
    }

    if !bundle.judge.is_empty() {
        let total: usize = bundle.judge.iter().map(|a| a.n).sum();
        let clean: f64 = bundle.judge.iter().map(|a| a.clean_pct * a.n as f64).sum::<f64>()
            / total.max(1) as f64;
        if clean < thresholds.clean_min {
            failed_families += 1;
            reasons.push(format!(
                "judge clean rate {:.1}% below {:.0}%",
                clean, thresholds.clean_min
            ));
        }
    }

    let status = match failed_families {
        0 => VerdictStatus::Pass,
        1 => VerdictStatus::Warn,
        _ => VerdictStatus::Fail,
    };
    Verdict { status, reasons }
}

/// Renders every populated section as `<table>_<corpus>.<ext>` documents.
/// The verdict is rendered in markdown form only.
pub fn render(bundle: &ReportBundle, format: RenderFormat) -> Result<Vec<Document>, ReportError> {
    if !bundle.has_content() {
        return Err(ReportError::EmptyBundle);
    }
    let mut docs = Vec::new();
    let ext = match format {
        RenderFormat::Markdown => "md",
        RenderFormat::Csv => "csv",
    };
    let file = |table: &str| format!("{table}_{}.{ext}", bundle.corpus_label);

    if !bundle.prevalence.is_empty() {
        docs.push(Document { filename: file("prevalence"), content: prevalence_doc(bundle, format) });
    }
    if !bundle.judge.is_empty() {
        docs.push(Document { filename: file("judge_audit"), content: judge_doc(bundle, format) });
    }
    if !bundle.cosine.is_empty() || bundle.cosine_overall.is_some() {
        docs.push(Document { filename: file("cosine"), content: cosine_doc(bundle, format) });
    }
    if !bundle.cka.is_empty() || bundle.cka_overall.is_some() {
        docs.push(Document { filename: file("cka"), content: cka_doc(bundle, format) });
    }
    if !bundle.parity.is_empty() {
        docs.push(Document { filename: file("parity"), content: parity_doc(bundle, format) });
    }
    if format == RenderFormat::Markdown {
        if let Some(v) = &bundle.verdict {
            docs.push(Document {
                filename: format!("verdict_{}.md", bundle.corpus_label),
                content: verdict_doc(bundle, v),
            });
        }
    }
    Ok(docs)
}

fn fmt3(v: f64) -> String {
    format!("{:.3}", v)
}

fn fmt2(v: f64) -> String {
    format!("{:.2}", v)
}

fn fmt_signed3(v: f64) -> String {
    format!("{:+.3}", v)
}

fn pct1(v: f64) -> String {
    format!("{:.1}", (v * 10.0).round() / 10.0)
}

fn thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

fn foundation_label(f: Foundation) -> &'static str {
    match f {
        Foundation::Authority => "Authority",
        Foundation::Care => "Care",
        Foundation::Fairness => "Fairness",
        Foundation::Loyalty => "Loyalty",
        Foundation::Sanctity => "Sanctity",
    }
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn markdown(&self, title: &str, footer: Option<&str>) -> String {
        let mut out = format!("# {title}\n\n");
        out.push_str(&format!("| {} |\n", self.header.join(" | ")));
        out.push_str(&format!("|{}\n", "---|".repeat(self.header.len())));
        for row in &self.rows {
            out.push_str(&format!("| {} |\n", row.join(" | ")));
        }
        if let Some(f) = footer {
            out.push_str(&format!("\n{f}\n"));
        }
        out
    }

    fn csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("write header");
        for row in &self.rows {
            w.write_record(row).expect("write row");
        }
        String::from_utf8(w.into_inner().expect("flush csv")).expect("csv is utf-8")
    }
}

fn provenance_footer(bundle: &ReportBundle) -> Option<String> {
    bundle
        .provenance
        .as_ref()
        .map(|p| format!("config {} seed {}", p.config_hash, p.seed))
}

fn finish(table: Table, title: &str, bundle: &ReportBundle, format: RenderFormat) -> String {
    match format {
        RenderFormat::Markdown => table.markdown(title, provenance_footer(bundle).as_deref()),
        RenderFormat::Csv => table.csv(),
    }
}

fn prevalence_doc(bundle: &ReportBundle, format: RenderFormat) -> String {
    let mut header: Vec<String> = vec!["Subcorpus".into()];
    header.extend(Foundation::ALL.iter().map(|f| format!("{}%", f.short())));
    header.push("N".into());
    let rows = bundle
        .prevalence
        .iter()
        .map(|r| {
            let mut row = vec![r.subcorpus.clone()];
            row.extend(r.pct.iter().map(|&p| pct1(p)));
            row.push(match format {
                RenderFormat::Markdown => thousands(r.n),
                RenderFormat::Csv => r.n.to_string(),
            });
            row
        })
        .collect();
    finish(Table { header, rows }, "Per-foundation prevalence", bundle, format)
}

fn judge_doc(bundle: &ReportBundle, format: RenderFormat) -> String {
    let header = ["Subcorpus", "N", "Clean%", "Minor%", "Err%", "Score"]
        .map(String::from)
        .to_vec();
    let rows = bundle
        .judge
        .iter()
        .map(|a| {
            vec![
                a.subcorpus.clone(),
                match format {
                    RenderFormat::Markdown => thousands(a.n),
                    RenderFormat::Csv => a.n.to_string(),
                },
                pct1(a.clean_pct),
                pct1(a.minor_pct),
                pct1(a.error_pct),
                pct1(a.mean_score),
            ]
        })
        .collect();
    finish(Table { header, rows }, "Translation audit", bundle, format)
}

fn summary_cells(name: &str, s: &SimilaritySummary, format: RenderFormat) -> Vec<String> {
    vec![
        name.to_string(),
        match format {
            RenderFormat::Markdown => thousands(s.n),
            RenderFormat::Csv => s.n.to_string(),
        },
        fmt3(s.mean),
        fmt3(s.std),
        fmt3(s.p05),
        fmt3(s.p95),
    ]
}

fn cosine_doc(bundle: &ReportBundle, format: RenderFormat) -> String {
    let header = ["Subcorpus", "N", "Mean", "Std", "P05", "P95"].map(String::from).to_vec();
    let mut rows: Vec<Vec<String>> = bundle
        .cosine
        .iter()
        .map(|r| summary_cells(&r.subcorpus, &r.summary, format))
        .collect();
    if let Some(overall) = &bundle.cosine_overall {
        rows.push(summary_cells("Overall", overall, format));
    }
    finish(Table { header, rows }, "Cosine similarity", bundle, format)
}

fn cka_doc(bundle: &ReportBundle, format: RenderFormat) -> String {
    let header = ["Subcorpus", "N", "CKA"].map(String::from).to_vec();
    let cells = |name: &str, r: &CkaResult| {
        vec![
            name.to_string(),
            match format {
                RenderFormat::Markdown => thousands(r.n),
                RenderFormat::Csv => r.n.to_string(),
            },
            fmt3(r.value),
        ]
    };
    let mut rows: Vec<Vec<String>> =
        bundle.cka.iter().map(|r| cells(&r.subcorpus, &r.cka)).collect();
    if let Some(overall) = &bundle.cka_overall {
        rows.push(cells("Overall", overall));
    }
    finish(Table { header, rows }, "Linear CKA", bundle, format)
}

fn parity_doc(bundle: &ReportBundle, format: RenderFormat) -> String {
    let threshold = bundle.parity.first().map(|r| r.row.threshold).unwrap_or(0.02);
    let mut header = vec![
        "Subcorpus".to_string(),
        "Foundation".to_string(),
        "EN AUC".to_string(),
        "PL AUC".to_string(),
        "Gap".to_string(),
        "p>0".to_string(),
        format!("p<{}", fmt2(threshold)),
    ];
    if format == RenderFormat::Csv {
        header.push("degenerate".into());
    }
    let mut any_degenerate = false;
    let rows = bundle
        .parity
        .iter()
        .map(|entry| {
            let r = &entry.row;
            let star = if r.degenerate {
                any_degenerate = true;
                "*"
            } else {
                ""
            };
            let mut row = vec![
                entry.subcorpus.clone(),
                foundation_label(r.foundation).to_string(),
                fmt3(r.en_auc),
                fmt3(r.pl_auc),
                fmt_signed3(r.gap),
            ];
            match format {
                RenderFormat::Markdown => {
                    row.push(format!("{}{star}", fmt3(r.p_gt0)));
                    row.push(format!("{}{star}", fmt3(r.p_lt_thresh)));
                }
                RenderFormat::Csv => {
                    row.push(fmt3(r.p_gt0));
                    row.push(fmt3(r.p_lt_thresh));
                    row.push(r.degenerate.to_string());
                }
            }
            row
        })
        .collect();
    let table = Table { header, rows };
    match format {
        RenderFormat::Markdown => {
            let mut footer = String::new();
            if any_degenerate {
                footer.push_str("\\* zero-variance fold differences; p fixed at 0.5");
            }
            if let Some(p) = provenance_footer(bundle) {
                if !footer.is_empty() {
                    footer.push_str("\n\n");
                }
                footer.push_str(&p);
            }
            table.markdown(
                "Classifier parity",
                if footer.is_empty() { None } else { Some(&footer) },
            )
        }
        RenderFormat::Csv => table.csv(),
    }
}

fn verdict_doc(bundle: &ReportBundle, v: &Verdict) -> String {
    let status = match v.status {
        VerdictStatus::Pass => "pass",
        VerdictStatus::Warn => "warn",
        VerdictStatus::Fail => "fail",
    };
    let mut out = format!("# Translation quality verdict\n\nStatus: **{status}**\n\n");
    if v.reasons.is_empty() {
        out.push_str("No thresholds breached.\n");
    } else {
        for reason in &v.reasons {
            out.push_str(&format!("- {reason}\n"));
        }
    }
    if let Some(p) = provenance_footer(bundle) {
        out.push_str(&format!("\n{p}\n"));
    }
    out
}
