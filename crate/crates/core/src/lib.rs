//! Cross-lingual corpus fidelity toolkit.
//!
//! Validates whether a machine-translated annotated corpus still carries the
//! label-relevant semantics of its source. The pipeline has three phases:
//! LLM translation driven by platform-specific prompts, LLM-as-judge audits
//! of a stratified sample, and quantitative checks on sentence embeddings
//! (pairwise cosine statistics, linear CKA, and classifier-parity tests with
//! paired one-sided t-tests).
//!
//! Modules map onto the pipeline stages:
//!
//! * [`corpus`] — load, validate, stratify and summarize annotated corpora
//! * [`embed`] — embedding matrices, their on-disk format, and pluggable
//!   embedding backends (the encoder itself is an external service)
//! * [`similarity`] — per-pair cosine summaries and linear CKA
//! * [`parity`] — logistic heads on frozen embeddings, stratified k-fold CV,
//!   ROC-AUC, and paired t statistics
//! * [`orchestrator`] — bounded-concurrency translate/judge batches against a
//!   chat-completion provider, plus mechanical artifact checks
//! * [`report`] — table rendering and the final quality verdict

pub mod corpus;
pub mod embed;
pub mod orchestrator;
pub mod parity;
pub mod report;
pub mod similarity;
