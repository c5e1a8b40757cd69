//! Parallel annotated corpora: loading, validation, stratified sampling and
//! per-foundation prevalence.
//!
//! The canonical interchange format is JSONL, one record per line:
//!
//! ```json
//! {"id": "p1", "text": "...", "text_tgt": null, "corpus": "MFRC",
//!  "subcorpus": "everyday", "platform": "reddit",
//!  "labels": {"authority": false, "care": true, "fairness": false,
//!             "loyalty": false, "sanctity": false},
//!  "non_moral": false}
//! ```
//!
//! CSV (RFC 4180) is accepted as a secondary format with the same fields in
//! the same order, label columns expanded in canonical foundation order.
//! Labels must arrive pre-binarized; this module does not aggregate
//! multi-annotator votes.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// The five moral foundations in the canonical order used by every table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Foundation {
    Authority,
    Care,
    Fairness,
    Loyalty,
    Sanctity,
}

impl Foundation {
    pub const ALL: [Foundation; 5] = [
        Foundation::Authority,
        Foundation::Care,
        Foundation::Fairness,
        Foundation::Loyalty,
        Foundation::Sanctity,
    ];

    /// Two-letter column label (`Au`, `Ca`, `Fa`, `Lo`, `Sa`).
    pub fn short(self) -> &'static str {
        match self {
            Foundation::Authority => "Au",
            Foundation::Care => "Ca",
            Foundation::Fairness => "Fa",
            Foundation::Loyalty => "Lo",
            Foundation::Sanctity => "Sa",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Foundation::Authority => "authority",
            Foundation::Care => "care",
            Foundation::Fairness => "fairness",
            Foundation::Loyalty => "loyalty",
            Foundation::Sanctity => "sanctity",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Foundation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Foundation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "authority" | "au" => Ok(Foundation::Authority),
            "care" | "ca" => Ok(Foundation::Care),
            "fairness" | "fa" => Ok(Foundation::Fairness),
            "loyalty" | "lo" => Ok(Foundation::Loyalty),
            "sanctity" | "sa" => Ok(Foundation::Sanctity),
            other => Err(format!("unknown foundation `{other}`")),
        }
    }
}

/// Source platform of a post; selects the translation prompt.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Platform {
    Reddit,
    Twitter,
}

impl Platform {
    pub fn as_str(self) -> &'static str {
        match self {
            Platform::Reddit => "reddit",
            Platform::Twitter => "twitter",
        }
    }
}

impl fmt::Display for Platform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Platform {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "reddit" => Ok(Platform::Reddit),
            "twitter" => Ok(Platform::Twitter),
            other => Err(format!("unknown platform `{other}`")),
        }
    }
}

/// Binary foundation labels for one post.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Labels {
    pub authority: bool,
    pub care: bool,
    pub fairness: bool,
    pub loyalty: bool,
    pub sanctity: bool,
}

impl Labels {
    pub fn get(&self, f: Foundation) -> bool {
        match f {
            Foundation::Authority => self.authority,
            Foundation::Care => self.care,
            Foundation::Fairness => self.fairness,
            Foundation::Loyalty => self.loyalty,
            Foundation::Sanctity => self.sanctity,
        }
    }

    pub fn set(&mut self, f: Foundation, value: bool) {
        match f {
            Foundation::Authority => self.authority = value,
            Foundation::Care => self.care = value,
            Foundation::Fairness => self.fairness = value,
            Foundation::Loyalty => self.loyalty = value,
            Foundation::Sanctity => self.sanctity = value,
        }
    }

    /// True when at least one foundation label is set.
    pub fn any(&self) -> bool {
        Foundation::ALL.iter().any(|&f| self.get(f))
    }
}

/// One corpus record; `text_src` is the original, `text_tgt` the translation
/// once phase 2 has produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Post {
    pub id: String,
    #[serde(rename = "text")]
    pub text_src: String,
    pub text_tgt: Option<String>,
    pub corpus: String,
    pub subcorpus: String,
    pub platform: Platform,
    pub labels: Labels,
    pub non_moral: bool,
}

/// An ordered, immutable run of posts. Ordering is the input file order and
/// is stable across loads of the same file.
#[derive(Clone, Debug, PartialEq)]
pub struct CorpusSlice {
    pub name: String,
    pub posts: Vec<Post>,
}

impl CorpusSlice {
    pub fn new(name: impl Into<String>, posts: Vec<Post>) -> Self {
        Self { name: name.into(), posts }
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    /// Subcorpus tags in first-appearance order.
    pub fn subcorpora(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for p in &self.posts {
            if seen.insert(p.subcorpus.clone()) {
                out.push(p.subcorpus.clone());
            }
        }
        out
    }
}

/// On-disk corpus formats.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Jsonl,
    Csv,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" => Ok(Format::Jsonl),
            "csv" => Ok(Format::Csv),
            other => Err(format!("unknown corpus format `{other}`")),
        }
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: missing or empty field `{field}`")]
    MissingField { line: usize, field: &'static str },
    #[error("duplicate post id `{id}`")]
    DuplicateId { id: String },
    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("sample size {n} exceeds corpus size {len}")]
    SampleTooLarge { n: usize, len: usize },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

const CSV_HEADER: [&str; 12] = [
    "id",
    "text",
    "text_tgt",
    "corpus",
    "subcorpus",
    "platform",
    "authority",
    "care",
    "fairness",
    "loyalty",
    "sanctity",
    "non_moral",
];

/// Loads and validates a corpus file. Records come back in file order;
/// labels are coerced to booleans; duplicate ids are rejected.
pub fn load_corpus(path: &Path, format: Format) -> Result<CorpusSlice, CorpusError> {
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "corpus".to_string());
    let posts = match format {
        Format::Jsonl => load_jsonl(path)?,
        Format::Csv => load_csv(path)?,
    };
    let mut seen = HashSet::with_capacity(posts.len());
    for post in &posts {
        if !seen.insert(post.id.as_str()) {
            return Err(CorpusError::DuplicateId { id: post.id.clone() });
        }
    }
    Ok(CorpusSlice::new(name, posts))
}

/// Writes a slice back out; `load_corpus . save_corpus` is the identity.
pub fn save_corpus(slice: &CorpusSlice, path: &Path, format: Format) -> Result<(), CorpusError> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    match format {
        Format::Jsonl => {
            for post in &slice.posts {
                let line = serde_json::to_string(post)
                    .expect("post serialization is infallible");
                writeln!(w, "{line}")?;
            }
        }
        Format::Csv => {
            let mut csvw = csv::Writer::from_writer(w);
            csvw.write_record(CSV_HEADER)
                .map_err(csv_io_error)?;
            for post in &slice.posts {
                csvw.write_record([
                    post.id.as_str(),
                    post.text_src.as_str(),
                    post.text_tgt.as_deref().unwrap_or(""),
                    post.corpus.as_str(),
                    post.subcorpus.as_str(),
                    post.platform.as_str(),
                    bool_str(post.labels.authority),
                    bool_str(post.labels.care),
                    bool_str(post.labels.fairness),
                    bool_str(post.labels.loyalty),
                    bool_str(post.labels.sanctity),
                    bool_str(post.non_moral),
                ])
                .map_err(csv_io_error)?;
            }
            csvw.flush()?;
            return Ok(());
        }
    }
    w.flush()?;
    Ok(())
}

fn bool_str(b: bool) -> &'static str {
    if b {
        "true"
    } else {
        "false"
    }
}

fn csv_io_error(e: csv::Error) -> CorpusError {
    CorpusError::Io(std::io::Error::other(e))
}

fn load_jsonl(path: &Path) -> Result<Vec<Post>, CorpusError> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut posts = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| CorpusError::MalformedRecord {
            line: line_no,
            reason: e.to_string(),
        })?;
        posts.push(post_from_value(&value, line_no)?);
    }
    Ok(posts)
}

fn post_from_value(value: &Value, line: usize) -> Result<Post, CorpusError> {
    let obj = value.as_object().ok_or_else(|| CorpusError::MalformedRecord {
        line,
        reason: "record is not a JSON object".into(),
    })?;

    let req_str = |field: &'static str| -> Result<String, CorpusError> {
        match obj.get(field).and_then(Value::as_str) {
            Some(s) if !s.is_empty() => Ok(s.to_string()),
            _ => Err(CorpusError::MissingField { line, field }),
        }
    };

    let id = req_str("id")?;
    let text_src = req_str("text")?;
    let corpus = req_str("corpus")?;
    let subcorpus = req_str("subcorpus")?;

    let platform: Platform = obj
        .get("platform")
        .and_then(Value::as_str)
        .ok_or(CorpusError::MissingField { line, field: "platform" })?
        .parse()
        .map_err(|reason| CorpusError::MalformedRecord { line, reason })?;

    let labels_obj = obj
        .get("labels")
        .and_then(Value::as_object)
        .ok_or(CorpusError::MissingField { line, field: "labels" })?;
    let mut labels = Labels::default();
    for f in Foundation::ALL {
        let raw = labels_obj
            .get(f.name())
            .ok_or(CorpusError::MissingField { line, field: "labels" })?;
        let b = coerce_bool(raw).ok_or_else(|| CorpusError::MalformedRecord {
            line,
            reason: format!("labels.{} is not a boolean", f.name()),
        })?;
        labels.set(f, b);
    }

    let non_moral = match obj.get("non_moral") {
        None | Some(Value::Null) => false,
        Some(v) => coerce_bool(v).ok_or_else(|| CorpusError::MalformedRecord {
            line,
            reason: "non_moral is not a boolean".into(),
        })?,
    };

    let text_tgt = match obj.get("text_tgt") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) if s.is_empty() => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => {
            return Err(CorpusError::MalformedRecord {
                line,
                reason: "text_tgt is not a string".into(),
            })
        }
    };

    let post = Post {
        id,
        text_src,
        text_tgt,
        corpus,
        subcorpus,
        platform,
        labels,
        non_moral,
    };
    validate_post(&post, line)?;
    Ok(post)
}

fn coerce_bool(v: &Value) -> Option<bool> {
    match v {
        Value::Bool(b) => Some(*b),
        Value::Number(n) => match n.as_i64() {
            Some(0) => Some(false),
            Some(1) => Some(true),
            _ => None,
        },
        Value::String(s) => match s.to_ascii_lowercase().as_str() {
            "true" | "1" => Some(true),
            "false" | "0" => Some(false),
            _ => None,
        },
        _ => None,
    }
}

fn validate_post(post: &Post, line: usize) -> Result<(), CorpusError> {
    if post.non_moral && post.labels.any() {
        return Err(CorpusError::MalformedRecord {
            line,
            reason: "non_moral record carries foundation labels".into(),
        });
    }
    Ok(())
}

fn load_csv(path: &Path) -> Result<Vec<Post>, CorpusError> {
    let file = File::open(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(BufReader::new(file));
    let headers = reader.headers().map_err(csv_io_error)?.clone();
    let col = |name: &'static str| -> Result<usize, CorpusError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or(CorpusError::MissingField { line: 1, field: name })
    };
    let idx_id = col("id")?;
    let idx_text = col("text")?;
    let idx_tgt = col("text_tgt")?;
    let idx_corpus = col("corpus")?;
    let idx_sub = col("subcorpus")?;
    let idx_platform = col("platform")?;
    let idx_labels: Vec<usize> = Foundation::ALL
        .iter()
        .map(|f| col(f.name()))
        .collect::<Result<_, _>>()?;
    let idx_nm = col("non_moral")?;

    let mut posts = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CorpusError::MalformedRecord {
            line: e
                .position()
                .map(|p| p.line() as usize)
                .unwrap_or(0),
            reason: e.to_string(),
        })?;
        let line = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(0);
        let field = |i: usize| record.get(i).unwrap_or("");

        let req = |i: usize, name: &'static str| -> Result<String, CorpusError> {
            let s = field(i);
            if s.is_empty() {
                Err(CorpusError::MissingField { line, field: name })
            } else {
                Ok(s.to_string())
            }
        };

        let platform: Platform = field(idx_platform)
            .parse()
            .map_err(|reason| CorpusError::MalformedRecord { line, reason })?;
        let mut labels = Labels::default();
        for (f, &i) in Foundation::ALL.iter().zip(&idx_labels) {
            let b = parse_bool_str(field(i)).ok_or_else(|| CorpusError::MalformedRecord {
                line,
                reason: format!("{} is not a boolean", f.name()),
            })?;
            labels.set(*f, b);
        }
        let non_moral = parse_bool_str(field(idx_nm)).ok_or_else(|| CorpusError::MalformedRecord {
            line,
            reason: "non_moral is not a boolean".into(),
        })?;
        let tgt = field(idx_tgt);

        let post = Post {
            id: req(idx_id, "id")?,
            text_src: req(idx_text, "text")?,
            text_tgt: if tgt.is_empty() { None } else { Some(tgt.to_string()) },
            corpus: req(idx_corpus, "corpus")?,
            subcorpus: req(idx_sub, "subcorpus")?,
            platform,
            labels,
            non_moral,
        };
        validate_post(&post, line)?;
        posts.push(post);
    }
    Ok(posts)
}

fn parse_bool_str(s: &str) -> Option<bool> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "1" => Some(true),
        "false" | "0" => Some(false),
        _ => None,
    }
}

/// Stratum key used for sampling: (has any foundation label, non-moral).
fn stratum_key(post: &Post) -> (bool, bool) {
    (post.labels.any(), post.non_moral)
}

/// Draws a deterministic stratified sample of `n` posts.
///
/// Strata are `(has-any-foundation-label, non_moral)` pairs. Allocation uses
/// largest remainders, so per-stratum counts differ from the exact
/// proportional share by less than one. Selected posts keep their original
/// relative order.
pub fn stratified_sample(
    slice: &CorpusSlice,
    n: usize,
    seed: u64,
) -> Result<CorpusSlice, CorpusError> {
    let len = slice.len();
    if n > len {
        return Err(CorpusError::SampleTooLarge { n, len });
    }

    // Strata in first-appearance order so allocation is deterministic.
    let mut strata: Vec<((bool, bool), Vec<usize>)> = Vec::new();
    for (i, post) in slice.posts.iter().enumerate() {
        let key = stratum_key(post);
        match strata.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(i),
            None => strata.push((key, vec![i])),
        }
    }

    // Largest-remainder allocation of n across strata.
    let mut alloc: Vec<usize> = Vec::with_capacity(strata.len());
    let mut remainders: Vec<(usize, usize)> = Vec::with_capacity(strata.len());
    let mut assigned = 0usize;
    for (s, (_, members)) in strata.iter().enumerate() {
        let exact_num = n * members.len();
        alloc.push(exact_num / len);
        remainders.push((s, exact_num % len));
        assigned += exact_num / len;
    }
    remainders.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    for &(s, _) in remainders.iter().take(n - assigned) {
        alloc[s] += 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<usize> = Vec::with_capacity(n);
    for ((_, members), take) in strata.iter().zip(&alloc) {
        let mut pool = members.clone();
        pool.shuffle(&mut rng);
        chosen.extend(pool.into_iter().take(*take));
    }
    chosen.sort_unstable();

    let posts = chosen.iter().map(|&i| slice.posts[i].clone()).collect();
    Ok(CorpusSlice::new(slice.name.clone(), posts))
}

/// Per-foundation prevalence over a slice. `n` counts every post, non-moral
/// ones included; percentages are exact and rounded only for display.
#[derive(Clone, Debug, PartialEq)]
pub struct Prevalence {
    pub n: usize,
    counts: [usize; 5],
}

impl Prevalence {
    pub fn count(&self, f: Foundation) -> usize {
        self.counts[f.index()]
    }

    /// 100 * count / n.
    pub fn pct(&self, f: Foundation) -> f64 {
        100.0 * self.counts[f.index()] as f64 / self.n as f64
    }
}

pub fn prevalence(slice: &CorpusSlice) -> Result<Prevalence, CorpusError> {
    if slice.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut counts = [0usize; 5];
    for post in &slice.posts {
        for f in Foundation::ALL {
            if post.labels.get(f) {
                counts[f.index()] += 1;
            }
        }
    }
    Ok(Prevalence { n: slice.len(), counts })
}
