//! Drives translation and judge audits through a rate-limited,
//! bounded-concurrency chat-completion client.
//!
//! At most `policy.max_in_flight` requests are outstanding at any moment.
//! Transient failures (429, 5xx, timeouts) and other transport errors retry
//! with exponential backoff until the retry budget is spent; refusals are
//! recorded immediately. Neither aborts the batch: per-post failures come
//! back as data. Every attempt is appended to a JSONL journal so an
//! interrupted batch resumes without re-billing completed posts.

mod artifact;
mod journal;
mod policy;
mod provider;
mod template;

pub use artifact::{artifact_checks, ArtifactViolation};
pub use journal::{Journal, JournalEntry, JournalStatus};
pub use policy::RequestPolicy;
pub use provider::{
    ChatMessage, ChatProvider, ChatRequest, ChatResponse, HttpChatProvider, ProviderConfig,
    ProviderError, Role,
};
pub use template::{
    PromptTemplate, TemplateName, JUDGE_SOURCE, REDDIT_P1_SOURCE, TWITTER_P2_SOURCE,
};

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CorpusSlice;

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("no input posts or verdicts")]
    EmptyInput,
    #[error("post `{post_id}` has no translation")]
    MissingTranslation { post_id: String },
    #[error("post `{post_id}` does not match template `{template}`")]
    TemplateMismatch { post_id: String, template: TemplateName },
    #[error("verdict references unknown post `{post_id}`")]
    UnknownPostId { post_id: String },
    #[error("template: {reason}")]
    Template { reason: String },
    #[error("configuration: {reason}")]
    Config { reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Judge categories from the audit taxonomy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Clean,
    Minor,
    Error,
}

/// Per-dimension 0-10 scores elicited from the judge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dimensions {
    pub tone: u8,
    pub slang: u8,
    pub formatting: u8,
    pub proper_nouns: u8,
}

/// One judged translation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub post_id: String,
    pub score: u8,
    pub category: Category,
    pub dimensions: Dimensions,
    pub notes: String,
}

/// Audit aggregate for one subcorpus. Percentages and the mean score are
/// rounded to one decimal; the three percentages sum to 100 within 0.1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JudgeAudit {
    pub subcorpus: String,
    pub n: usize,
    pub clean_pct: f64,
    pub minor_pct: f64,
    pub error_pct: f64,
    pub mean_score: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    ExhaustedRetries,
    Refused,
}

/// A post the batch could not complete; recorded, never fatal.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchFailure {
    pub post_id: String,
    pub kind: FailureKind,
}

#[derive(Debug)]
pub struct TranslateOutcome {
    /// Input slice with `text_tgt` filled wherever translation succeeded.
    pub slice: CorpusSlice,
    pub failures: Vec<BatchFailure>,
    /// Provider calls actually issued (excludes journal-resumed posts).
    pub provider_calls: usize,
}

#[derive(Debug)]
pub struct JudgeOutcome {
    /// One verdict per judged post, in input order.
    pub verdicts: Vec<JudgeVerdict>,
    pub failures: Vec<BatchFailure>,
    pub provider_calls: usize,
}

enum Slot {
    Done(String),
    Failed(FailureKind),
}

/// Translates every post in the slice with the given template.
///
/// With `resume` on, posts that already carry `text_tgt` and posts with a
/// final `ok` journal entry are not sent to the provider again. Output order
/// equals input order.
pub async fn translate_batch<P: ChatProvider>(
    slice: &CorpusSlice,
    template: &PromptTemplate,
    policy: &RequestPolicy,
    provider: &P,
    temperature: f64,
    journal: Option<&Journal>,
    resume: bool,
) -> Result<TranslateOutcome, OrchestratorError> {
    if slice.is_empty() {
        return Err(OrchestratorError::EmptyInput);
    }
    let platform = template.name.platform().ok_or_else(|| OrchestratorError::Template {
        reason: format!("`{}` is not a translation template", template.name),
    })?;
    for post in &slice.posts {
        if post.platform != platform {
            return Err(OrchestratorError::TemplateMismatch {
                post_id: post.id.clone(),
                template: template.name,
            });
        }
    }

    let completed = match (journal, resume) {
        (Some(j), true) => j.load_completed()?,
        _ => HashMap::new(),
    };

    let mut slots: Vec<Option<Slot>> = Vec::with_capacity(slice.len());
    for post in &slice.posts {
        if resume {
            if let Some(text) = &post.text_tgt {
                slots.push(Some(Slot::Done(text.clone())));
                continue;
            }
            if let Some(output) = completed.get(&post.id) {
                slots.push(Some(Slot::Done(output.clone())));
                continue;
            }
        }
        slots.push(None);
    }

    let calls = AtomicUsize::new(0);
    let pending: Vec<(usize, &crate::corpus::Post)> = slice
        .posts
        .iter()
        .enumerate()
        .filter(|(i, _)| slots[*i].is_none())
        .collect();

    let results: Vec<Result<(usize, Slot), OrchestratorError>> =
        stream::iter(pending.into_iter().map(|(i, post)| {
            let calls = &calls;
            let request = build_translation_request(template, &post.text_src, temperature);
            async move {
                let slot =
                    run_with_retries(&post.id, &request, policy, provider, journal, calls).await?;
                Ok((i, slot))
            }
        }))
        .buffer_unordered(policy.max_in_flight.max(1))
        .collect()
        .await;

    for result in results {
        let (i, slot) = result?;
        slots[i] = Some(slot);
    }

    let mut posts = slice.posts.clone();
    let mut failures = Vec::new();
    for (post, slot) in posts.iter_mut().zip(slots) {
        match slot.expect("every slot resolved") {
            Slot::Done(text) => post.text_tgt = Some(text),
            Slot::Failed(kind) => failures.push(BatchFailure { post_id: post.id.clone(), kind }),
        }
    }

    Ok(TranslateOutcome {
        slice: CorpusSlice::new(slice.name.clone(), posts),
        failures,
        provider_calls: calls.load(Ordering::SeqCst),
    })
}

fn build_translation_request(
    template: &PromptTemplate,
    text: &str,
    temperature: f64,
) -> ChatRequest {
    let mut messages = vec![ChatMessage::new(Role::System, template.system_text.clone())];
    if let Some((shot_in, shot_out)) = &template.one_shot {
        messages.push(ChatMessage::new(Role::User, shot_in.clone()));
        messages.push(ChatMessage::new(Role::Assistant, shot_out.clone()));
    }
    messages.push(ChatMessage::new(Role::User, text.to_string()));
    ChatRequest { messages, temperature }
}

fn build_judge_request(template: &PromptTemplate, src: &str, tgt: &str) -> ChatRequest {
    let user = format!("ENGLISH SOURCE:\n{src}\n\nPOLISH TRANSLATION:\n{tgt}");
    let messages = vec![
        ChatMessage::new(Role::System, template.system_text.clone()),
        ChatMessage::new(Role::User, user),
    ];
    ChatRequest { messages, temperature: 0.0 }
}

async fn run_with_retries<P: ChatProvider>(
    id: &str,
    request: &ChatRequest,
    policy: &RequestPolicy,
    provider: &P,
    journal: Option<&Journal>,
    calls: &AtomicUsize,
) -> Result<Slot, OrchestratorError> {
    let mut retry = 0usize;
    loop {
        let attempt = retry + 1;
        calls.fetch_add(1, Ordering::SeqCst);
        let outcome = match tokio::time::timeout(policy.timeout, provider.complete(request)).await
        {
            Err(_) => Err(ProviderError::Transient { reason: "request timed out".into() }),
            Ok(r) => r,
        };
        match outcome {
            Ok(resp) => {
                journal_append(journal, id, attempt, JournalStatus::Ok, Some(&resp.content))?;
                return Ok(Slot::Done(resp.content));
            }
            Err(ProviderError::Refusal { .. }) => {
                journal_append(journal, id, attempt, JournalStatus::Refused, None)?;
                return Ok(Slot::Failed(FailureKind::Refused));
            }
            Err(_) => {
                if retry >= policy.max_retries {
                    journal_append(journal, id, attempt, JournalStatus::Exhausted, None)?;
                    return Ok(Slot::Failed(FailureKind::ExhaustedRetries));
                }
                journal_append(journal, id, attempt, JournalStatus::Retry, None)?;
                tokio::time::sleep(policy.backoff_delay(retry)).await;
                retry += 1;
            }
        }
    }
}

fn journal_append(
    journal: Option<&Journal>,
    id: &str,
    attempt: usize,
    status: JournalStatus,
    output: Option<&str>,
) -> Result<(), OrchestratorError> {
    if let Some(j) = journal {
        j.append(&JournalEntry {
            id: id.to_string(),
            attempt,
            status,
            output: output.map(str::to_string),
        })?;
    }
    Ok(())
}

/// Judges every translated pair in the slice.
///
/// Responses are parsed strictly; an unparseable response is retried once
/// and then flagged as `category = error`, `notes = "unparseable"` rather
/// than failing the batch.
pub async fn judge_batch<P: ChatProvider>(
    slice: &CorpusSlice,
    template: &PromptTemplate,
    policy: &RequestPolicy,
    provider: &P,
    journal: Option<&Journal>,
    resume: bool,
) -> Result<JudgeOutcome, OrchestratorError> {
    if slice.is_empty() {
        return Err(OrchestratorError::EmptyInput);
    }
    for post in &slice.posts {
        if post.text_tgt.is_none() {
            return Err(OrchestratorError::MissingTranslation { post_id: post.id.clone() });
        }
    }

    let completed = match (journal, resume) {
        (Some(j), true) => j.load_completed()?,
        _ => HashMap::new(),
    };

    let mut slots: Vec<Option<Slot>> = slice
        .posts
        .iter()
        .map(|post| completed.get(&post.id).map(|output| Slot::Done(output.clone())))
        .collect();

    let calls = AtomicUsize::new(0);
    let pending: Vec<(usize, &crate::corpus::Post)> = slice
        .posts
        .iter()
        .enumerate()
        .filter(|(i, _)| slots[*i].is_none())
        .collect();

    let results: Vec<Result<(usize, Slot), OrchestratorError>> =
        stream::iter(pending.into_iter().map(|(i, post)| {
            let calls = &calls;
            let tgt = post.text_tgt.as_deref().expect("checked above");
            let request = build_judge_request(template, &post.text_src, tgt);
            async move {
                let slot =
                    run_judge_post(&post.id, &request, policy, provider, journal, calls).await?;
                Ok((i, slot))
            }
        }))
        .buffer_unordered(policy.max_in_flight.max(1))
        .collect()
        .await;

    for result in results {
        let (i, slot) = result?;
        slots[i] = Some(slot);
    }

    let mut verdicts = Vec::new();
    let mut failures = Vec::new();
    for (post, slot) in slice.posts.iter().zip(slots) {
        match slot.expect("every slot resolved") {
            Slot::Done(content) => verdicts.push(verdict_or_flag(&post.id, &content)),
            Slot::Failed(kind) => failures.push(BatchFailure { post_id: post.id.clone(), kind }),
        }
    }

    Ok(JudgeOutcome { verdicts, failures, provider_calls: calls.load(Ordering::SeqCst) })
}

/// One transport-level retry loop plus a single parse retry: an unparseable
/// but successfully transported response triggers exactly one fresh call.
async fn run_judge_post<P: ChatProvider>(
    id: &str,
    request: &ChatRequest,
    policy: &RequestPolicy,
    provider: &P,
    journal: Option<&Journal>,
    calls: &AtomicUsize,
) -> Result<Slot, OrchestratorError> {
    let mut retry = 0usize;
    let mut parse_retried = false;
    loop {
        let attempt = retry + 1 + usize::from(parse_retried);
        calls.fetch_add(1, Ordering::SeqCst);
        let outcome = match tokio::time::timeout(policy.timeout, provider.complete(request)).await
        {
            Err(_) => Err(ProviderError::Transient { reason: "request timed out".into() }),
            Ok(r) => r,
        };
        match outcome {
            Ok(resp) => {
                if parse_verdict(id, &resp.content).is_none() && !parse_retried {
                    parse_retried = true;
                    journal_append(journal, id, attempt, JournalStatus::Retry, None)?;
                    continue;
                }
                journal_append(journal, id, attempt, JournalStatus::Ok, Some(&resp.content))?;
                return Ok(Slot::Done(resp.content));
            }
            Err(ProviderError::Refusal { .. }) => {
                journal_append(journal, id, attempt, JournalStatus::Refused, None)?;
                return Ok(Slot::Failed(FailureKind::Refused));
            }
            Err(_) => {
                if retry >= policy.max_retries {
                    journal_append(journal, id, attempt, JournalStatus::Exhausted, None)?;
                    return Ok(Slot::Failed(FailureKind::ExhaustedRetries));
                }
                journal_append(journal, id, attempt, JournalStatus::Retry, None)?;
                tokio::time::sleep(policy.backoff_delay(retry)).await;
                retry += 1;
            }
        }
    }
}

fn verdict_or_flag(post_id: &str, content: &str) -> JudgeVerdict {
    parse_verdict(post_id, content).unwrap_or_else(|| JudgeVerdict {
        post_id: post_id.to_string(),
        score: 0,
        category: Category::Error,
        dimensions: Dimensions { tone: 0, slang: 0, formatting: 0, proper_nouns: 0 },
        notes: "unparseable".into(),
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVerdict {
    score: i64,
    category: Category,
    dimensions: RawDimensions,
    notes: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDimensions {
    tone: i64,
    slang: i64,
    formatting: i64,
    proper_nouns: i64,
}

/// Strict parse: the first balanced JSON object in the text must carry
/// exactly the verdict schema with every score in 0..=10.
pub fn parse_verdict(post_id: &str, content: &str) -> Option<JudgeVerdict> {
    let object = extract_json_object(content)?;
    let raw: RawVerdict = serde_json::from_str(object).ok()?;
    let in_range = |v: i64| -> Option<u8> { (0..=10).contains(&v).then_some(v as u8) };
    Some(JudgeVerdict {
        post_id: post_id.to_string(),
        score: in_range(raw.score)?,
        category: raw.category,
        dimensions: Dimensions {
            tone: in_range(raw.dimensions.tone)?,
            slang: in_range(raw.dimensions.slang)?,
            formatting: in_range(raw.dimensions.formatting)?,
            proper_nouns: in_range(raw.dimensions.proper_nouns)?,
        },
        notes: raw.notes,
    })
}

/// First balanced `{...}` region, string-aware.
fn extract_json_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let bytes = text.as_bytes();
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..=i]);
                }
            }
            _ => {}
        }
    }
    None
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

/// Aggregates verdicts per subcorpus, in the slice's subcorpus order.
/// Category percentages and the mean score are rounded to one decimal.
pub fn aggregate_audit(
    verdicts: &[JudgeVerdict],
    slice: &CorpusSlice,
) -> Result<Vec<JudgeAudit>, OrchestratorError> {
    if verdicts.is_empty() {
        return Err(OrchestratorError::EmptyInput);
    }
    let subcorpus_of: HashMap<&str, &str> = slice
        .posts
        .iter()
        .map(|p| (p.id.as_str(), p.subcorpus.as_str()))
        .collect();

    struct Bucket {
        n: usize,
        clean: usize,
        minor: usize,
        error: usize,
        score_sum: f64,
    }
    let mut order: Vec<&str> = Vec::new();
    let mut buckets: HashMap<&str, Bucket> = HashMap::new();
    for verdict in verdicts {
        let sub = *subcorpus_of.get(verdict.post_id.as_str()).ok_or_else(|| {
            OrchestratorError::UnknownPostId { post_id: verdict.post_id.clone() }
        })?;
        let bucket = buckets.entry(sub).or_insert_with(|| {
            order.push(sub);
            Bucket { n: 0, clean: 0, minor: 0, error: 0, score_sum: 0.0 }
        });
        bucket.n += 1;
        match verdict.category {
            Category::Clean => bucket.clean += 1,
            Category::Minor => bucket.minor += 1,
            Category::Error => bucket.error += 1,
        }
        bucket.score_sum += verdict.score as f64;
    }

    // Subcorpus order follows the corpus, not verdict arrival.
    let corpus_order = slice.subcorpora();
    let mut ordered: Vec<&str> = corpus_order
        .iter()
        .filter_map(|s| order.iter().copied().find(|o| *o == s.as_str()))
        .collect();
    for sub in order {
        if !ordered.contains(&sub) {
            ordered.push(sub);
        }
    }

    Ok(ordered
        .into_iter()
        .map(|sub| {
            let b = &buckets[sub];
            let pct = |count: usize| round1(100.0 * count as f64 / b.n as f64);
            JudgeAudit {
                subcorpus: sub.to_string(),
                n: b.n,
                clean_pct: pct(b.clean),
                minor_pct: pct(b.minor),
                error_pct: pct(b.error),
                mean_score: round1(b.score_sum / b.n as f64),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Labels, Platform, Post};

    fn post(id: &str, subcorpus: &str) -> Post {
        Post {
            id: id.into(),
            text_src: format!("src {id}"),
            text_tgt: Some(format!("tgt {id}")),
            corpus: "C".into(),
            subcorpus: subcorpus.into(),
            platform: Platform::Twitter,
            labels: Labels::default(),
            non_moral: true,
        }
    }

    fn verdict(post_id: &str, score: u8, category: Category) -> JudgeVerdict {
        JudgeVerdict {
            post_id: post_id.into(),
            score,
            category,
            dimensions: Dimensions { tone: score, slang: score, formatting: score, proper_nouns: score },
            notes: String::new(),
        }
    }

    #[test]
    fn parse_valid_verdict() {
        let content = r#"{"score":9,"category":"clean","dimensions":{"tone":9,"slang":9,"formatting":10,"proper_nouns":9},"notes":""}"#;
        let v = parse_verdict("p1", content).unwrap();
        assert_eq!(v.score, 9);
        assert_eq!(v.category, Category::Clean);
        assert_eq!(v.dimensions.formatting, 10);
    }

    #[test]
    fn parse_rejects_out_of_range_score() {
        let content = r#"{"score":11,"category":"clean","dimensions":{"tone":9,"slang":9,"formatting":10,"proper_nouns":9},"notes":""}"#;
        assert!(parse_verdict("p1", content).is_none());
    }

    #[test]
    fn parse_rejects_prose_without_json() {
        assert!(parse_verdict("p1", "The translation looks fine to me.").is_none());
    }

    #[test]
    fn parse_finds_object_inside_prose() {
        let content = r#"Here is my assessment: {"score":7,"category":"minor","dimensions":{"tone":7,"slang":6,"formatting":8,"proper_nouns":8},"notes":"tone softened"} as requested."#;
        let v = parse_verdict("p1", content).unwrap();
        assert_eq!(v.category, Category::Minor);
        assert_eq!(v.notes, "tone softened");
    }

    #[test]
    fn audit_matches_running_example() {
        // 186 clean / 10 minor / 4 error out of 200.
        let mut verdicts = Vec::new();
        let mut posts = Vec::new();
        for i in 0..200 {
            let id = format!("p{i}");
            posts.push(post(&id, "everyday"));
            let category = if i < 186 {
                Category::Clean
            } else if i < 196 {
                Category::Minor
            } else {
                Category::Error
            };
            verdicts.push(verdict(&id, 9, category));
        }
        let slice = CorpusSlice::new("audit", posts);
        let audits = aggregate_audit(&verdicts, &slice).unwrap();
        assert_eq!(audits.len(), 1);
        let a = &audits[0];
        assert_eq!((a.clean_pct, a.minor_pct, a.error_pct), (93.0, 5.0, 2.0));
        assert_eq!(a.n, 200);
    }

    #[test]
    fn audit_all_clean_and_single_minor() {
        let posts = vec![post("a", "s1"), post("b", "s2")];
        let slice = CorpusSlice::new("audit", posts);

        let audits = aggregate_audit(&[verdict("a", 10, Category::Clean)], &slice).unwrap();
        assert_eq!((audits[0].clean_pct, audits[0].minor_pct, audits[0].error_pct), (100.0, 0.0, 0.0));

        let audits = aggregate_audit(&[verdict("b", 6, Category::Minor)], &slice).unwrap();
        assert_eq!((audits[0].clean_pct, audits[0].minor_pct, audits[0].error_pct), (0.0, 100.0, 0.0));
    }

    #[test]
    fn audit_percentages_sum_to_hundred() {
        // 3-way split that cannot be exact: 1/3 each.
        let posts: Vec<Post> = (0..3).map(|i| post(&format!("p{i}"), "s")).collect();
        let slice = CorpusSlice::new("audit", posts);
        let verdicts = vec![
            verdict("p0", 9, Category::Clean),
            verdict("p1", 5, Category::Minor),
            verdict("p2", 1, Category::Error),
        ];
        let audits = aggregate_audit(&verdicts, &slice).unwrap();
        let sum = audits[0].clean_pct + audits[0].minor_pct + audits[0].error_pct;
        assert!((sum - 100.0).abs() <= 0.1 + 1e-9, "sum {sum}");
    }

    #[test]
    fn audit_unknown_id_rejected() {
        let slice = CorpusSlice::new("audit", vec![post("a", "s")]);
        let err = aggregate_audit(&[verdict("ghost", 9, Category::Clean)], &slice).unwrap_err();
        assert!(matches!(err, OrchestratorError::UnknownPostId { .. }));
    }
}
