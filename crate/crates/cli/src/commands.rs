//! Subcommand implementations. Each stage reads prior-stage artifacts from
//! the output directory, writes its own, and stamps a meta sidecar, so a
//! pipeline can be re-run from any point.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use xfid_core::corpus::{
    load_corpus, prevalence, save_corpus, stratified_sample, CorpusSlice, Format, Foundation,
    Labels, Post,
};
use xfid_core::embed::{
    fetch_embeddings, load_matrix, save_matrix, BackendError, EmbeddingBackend, EmbeddingMatrix,
    FileBackend, HttpBackend,
};
use xfid_core::orchestrator::{
    aggregate_audit, judge_batch, translate_batch, HttpChatProvider, Journal, PromptTemplate,
    TemplateName,
};
use xfid_core::parity::{import_external_folds, parity_rows_from_external, run_parity};
use xfid_core::report::{
    render, verdict, CkaRow, CosineRow, Document, PrevalenceRow, Provenance, RenderFormat,
    ReportBundle, Verdict,
};
use xfid_core::similarity::{grouped_cosine_summaries, linear_cka};

use crate::artifacts::{
    read_json, read_meta, read_verdicts, write_failures, write_json, write_jsonl, write_meta,
    write_parity_csv, write_parity_folds_csv, CkaArtifact, CosineArtifact, NamedCka,
    NamedParityRow, NamedSummary, ParityArtifact, Paths, StageMeta,
};
use crate::config::{require_file, Config};
use crate::CliError;

/// Everything a stage needs: parsed config, provenance hash, resolved paths
/// and the global flag overrides.
pub struct Ctx {
    pub config: Config,
    pub config_hash: String,
    pub paths: Paths,
    pub corpus_override: Option<PathBuf>,
    pub subcorpus: Option<String>,
    pub seed: Option<u64>,
}

impl Ctx {
    fn ensure_out_dir(&self) -> Result<(), CliError> {
        std::fs::create_dir_all(self.paths.out_dir()).map_err(|e| {
            CliError::Validation(format!(
                "cannot create output directory {}: {e}",
                self.paths.out_dir().display()
            ))
        })
    }

    fn meta(&self, stage: &str, seed: Option<u64>, corpus: Option<&Path>) -> StageMeta {
        StageMeta {
            stage: stage.to_string(),
            config_hash: self.config_hash.clone(),
            seed,
            corpus: corpus.map(|p| p.display().to_string()),
        }
    }

    fn load_slice(&self, path: &Path, format: Format) -> Result<CorpusSlice, CliError> {
        let slice = load_corpus(path, format)?;
        match &self.subcorpus {
            None => Ok(slice),
            Some(tag) => {
                let posts: Vec<Post> =
                    slice.posts.into_iter().filter(|p| &p.subcorpus == tag).collect();
                if posts.is_empty() {
                    return Err(CliError::Validation(format!(
                        "--subcorpus {tag}: no posts with that tag in {}",
                        path.display()
                    )));
                }
                Ok(CorpusSlice::new(slice.name, posts))
            }
        }
    }

    /// Corpus for stages downstream of translation: the explicit flag, the
    /// translated corpus when it exists, the ingested one otherwise.
    fn resolve_processed_corpus(&self) -> Result<PathBuf, CliError> {
        if let Some(p) = &self.corpus_override {
            require_file(p, "--corpus")?;
            return Ok(p.clone());
        }
        let translated = self.paths.translated();
        if translated.is_file() {
            return Ok(translated);
        }
        let corpus = self.paths.corpus();
        if corpus.is_file() {
            return Ok(corpus);
        }
        Err(CliError::Validation(format!(
            "corpus: file not found: {} (run `xfid ingest` first or pass --corpus)",
            corpus.display()
        )))
    }

    /// Corpus the embed stage consumed, for grouping metric rows.
    fn resolve_metric_corpus(&self) -> Result<PathBuf, CliError> {
        if let Some(p) = &self.corpus_override {
            require_file(p, "--corpus")?;
            return Ok(p.clone());
        }
        if let Some(meta) = read_meta(&self.paths, "embed") {
            if let Some(corpus) = meta.corpus {
                let p = PathBuf::from(corpus);
                if p.is_file() {
                    return Ok(p);
                }
            }
        }
        self.resolve_processed_corpus()
    }
}

pub fn run_ingest(
    ctx: &Ctx,
    input: Option<PathBuf>,
    format: Option<String>,
) -> Result<(), CliError> {
    ctx.ensure_out_dir()?;
    let input = input
        .or_else(|| ctx.corpus_override.clone())
        .or_else(|| ctx.config.corpus.input.clone())
        .ok_or_else(|| {
            CliError::Validation(
                "corpus.input: no input corpus configured (set [corpus].input or pass --corpus)"
                    .into(),
            )
        })?;
    require_file(&input, "corpus.input")?;
    let format: Format = format
        .unwrap_or_else(|| ctx.config.corpus.format.clone())
        .parse()
        .map_err(CliError::Validation)?;

    let slice = ctx.load_slice(&input, format)?;
    let out = ctx.paths.corpus();
    save_corpus(&slice, &out, Format::Jsonl)?;
    write_meta(&ctx.paths, &ctx.meta("ingest", None, Some(&input)))?;
    println!(
        "ingested {} posts ({} subcorpora) -> {}",
        slice.len(),
        slice.subcorpora().len(),
        out.display()
    );
    Ok(())
}

pub fn run_sample(ctx: &Ctx, n: Option<usize>) -> Result<(), CliError> {
    ctx.ensure_out_dir()?;
    let input = match &ctx.corpus_override {
        Some(p) => p.clone(),
        None => ctx.paths.corpus(),
    };
    require_file(&input, "corpus")?;
    let slice = ctx.load_slice(&input, Format::Jsonl)?;
    let n = n.unwrap_or(ctx.config.sample.n);
    let seed = ctx.seed.unwrap_or(ctx.config.sample.seed);
    let sample = stratified_sample(&slice, n, seed)?;
    let out = ctx.paths.sample();
    save_corpus(&sample, &out, Format::Jsonl)?;
    write_meta(&ctx.paths, &ctx.meta("sample", Some(seed), Some(&input)))?;
    println!("sampled {} of {} posts -> {}", sample.len(), slice.len(), out.display());
    Ok(())
}

fn template_for(
    name: TemplateName,
    override_path: Option<&PathBuf>,
) -> Result<PromptTemplate, CliError> {
    match override_path {
        Some(path) => {
            require_file(path, "template")?;
            let t = PromptTemplate::from_file(path)?;
            if t.name != name {
                return Err(CliError::Validation(format!(
                    "template {} declares `{}`, expected `{name}`",
                    path.display(),
                    t.name
                )));
            }
            Ok(t)
        }
        None => Ok(PromptTemplate::builtin(name)),
    }
}

pub async fn run_translate(
    ctx: &Ctx,
    template_reddit: Option<PathBuf>,
    template_twitter: Option<PathBuf>,
    no_resume: bool,
) -> Result<(), CliError> {
    ctx.ensure_out_dir()?;
    let input = match &ctx.corpus_override {
        Some(p) => p.clone(),
        None => ctx.paths.corpus(),
    };
    require_file(&input, "corpus")?;
    let slice = ctx.load_slice(&input, Format::Jsonl)?;

    let policy = ctx.config.policy.request_policy();
    let provider = HttpChatProvider::new(&ctx.config.provider.provider_config(), policy.timeout)?;
    let journal = Journal::open(ctx.paths.translate_journal());
    let temperature = ctx.config.provider.temperature_translate;

    // One batch per platform so each post gets its platform's prompt.
    let mut slots: Vec<Option<Post>> = vec![None; slice.len()];
    let mut failures = Vec::new();
    let mut calls = 0usize;
    for (name, override_path) in [
        (TemplateName::RedditP1, template_reddit.as_ref()),
        (TemplateName::TwitterP2, template_twitter.as_ref()),
    ] {
        let platform = name.platform().expect("translation template");
        let indices: Vec<usize> = slice
            .posts
            .iter()
            .enumerate()
            .filter(|(_, p)| p.platform == platform)
            .map(|(i, _)| i)
            .collect();
        if indices.is_empty() {
            continue;
        }
        let template = template_for(name, override_path)?;
        let group = CorpusSlice::new(
            slice.name.clone(),
            indices.iter().map(|&i| slice.posts[i].clone()).collect(),
        );
        let outcome = translate_batch(
            &group,
            &template,
            &policy,
            &provider,
            temperature,
            Some(&journal),
            !no_resume,
        )
        .await?;
        for (&i, post) in indices.iter().zip(outcome.slice.posts) {
            slots[i] = Some(post);
        }
        failures.extend(outcome.failures);
        calls += outcome.provider_calls;
    }

    let posts: Vec<Post> = slots.into_iter().map(|s| s.expect("every post processed")).collect();
    let translated = CorpusSlice::new(slice.name.clone(), posts);
    save_corpus(&translated, &ctx.paths.translated(), Format::Jsonl)?;
    write_failures(&ctx.paths.translate_failures(), &failures)?;
    write_meta(&ctx.paths, &ctx.meta("translate", None, Some(&input)))?;

    let ok = translated.posts.iter().filter(|p| p.text_tgt.is_some()).count();
    println!(
        "translated {ok}/{} posts ({calls} provider calls) -> {}",
        translated.len(),
        ctx.paths.translated().display()
    );
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Transport(format!(
            "{} posts failed; see {}",
            failures.len(),
            ctx.paths.translate_failures().display()
        )))
    }
}

pub async fn run_judge(
    ctx: &Ctx,
    template: Option<PathBuf>,
    no_resume: bool,
) -> Result<(), CliError> {
    ctx.ensure_out_dir()?;
    let input = match &ctx.corpus_override {
        Some(p) => p.clone(),
        None => ctx.paths.translated(),
    };
    require_file(&input, "translated corpus")?;
    let slice = ctx.load_slice(&input, Format::Jsonl)?;

    let policy = ctx.config.policy.request_policy();
    let provider = HttpChatProvider::new(&ctx.config.provider.provider_config(), policy.timeout)?;
    let journal = Journal::open(ctx.paths.judge_journal());
    let template = template_for(TemplateName::Judge, template.as_ref())?;

    let outcome =
        judge_batch(&slice, &template, &policy, &provider, Some(&journal), !no_resume).await?;
    write_jsonl(&ctx.paths.verdicts(), &outcome.verdicts)?;
    write_failures(&ctx.paths.judge_failures(), &outcome.failures)?;
    write_meta(&ctx.paths, &ctx.meta("judge", None, Some(&input)))?;

    println!(
        "judged {} posts ({} provider calls) -> {}",
        outcome.verdicts.len(),
        outcome.provider_calls,
        ctx.paths.verdicts().display()
    );
    if outcome.failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Transport(format!(
            "{} posts failed; see {}",
            outcome.failures.len(),
            ctx.paths.judge_failures().display()
        )))
    }
}

enum AnyBackend {
    File(FileBackend),
    Http(HttpBackend),
}

impl EmbeddingBackend for AnyBackend {
    async fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, BackendError> {
        match self {
            AnyBackend::File(b) => b.embed_batch(texts).await,
            AnyBackend::Http(b) => b.embed_batch(texts).await,
        }
    }
}

pub async fn run_embed(ctx: &Ctx) -> Result<(), CliError> {
    ctx.ensure_out_dir()?;
    let input = ctx.resolve_processed_corpus()?;
    let slice = ctx.load_slice(&input, Format::Jsonl)?;
    if slice.is_empty() {
        return Err(CliError::Validation("corpus has no posts".into()));
    }
    for post in &slice.posts {
        if post.text_tgt.is_none() {
            return Err(CliError::Validation(format!(
                "post `{}` has no translation; run `xfid translate` first",
                post.id
            )));
        }
    }

    let cfg = ctx.config.embedding.backend_config();
    let backend = match ctx.config.embedding.backend.as_str() {
        "file" => {
            let map_file = ctx.config.embedding.map_file.as_ref().ok_or_else(|| {
                CliError::Validation(
                    "embedding.map_file: required when embedding.backend = \"file\"".into(),
                )
            })?;
            require_file(map_file, "embedding.map_file")?;
            AnyBackend::File(FileBackend::load(map_file)?)
        }
        "http" => AnyBackend::Http(HttpBackend::new(&cfg)?),
        other => {
            return Err(CliError::Validation(format!(
                "embedding.backend: `{other}` is not one of `http`, `file`"
            )))
        }
    };

    let ids: Vec<String> = slice.posts.iter().map(|p| p.id.clone()).collect();
    let src_texts: Vec<String> = slice.posts.iter().map(|p| p.text_src.clone()).collect();
    let tgt_texts: Vec<String> =
        slice.posts.iter().map(|p| p.text_tgt.clone().expect("checked above")).collect();

    let src = fetch_embeddings(&ids, &src_texts, &cfg, &backend).await?;
    let tgt = fetch_embeddings(&ids, &tgt_texts, &cfg, &backend).await?;
    save_matrix(&ctx.paths.src_matrix(), &src)?;
    save_matrix(&ctx.paths.tgt_matrix(), &tgt)?;
    write_meta(&ctx.paths, &ctx.meta("embed", None, Some(&input)))?;
    println!(
        "embedded {} pairs at dimension {} -> {}, {}",
        src.n(),
        src.dim(),
        ctx.paths.src_matrix().display(),
        ctx.paths.tgt_matrix().display()
    );
    Ok(())
}

struct MetricInputs {
    src: EmbeddingMatrix,
    tgt: EmbeddingMatrix,
    /// (subcorpus, row indices) in first-appearance order.
    groups: Vec<(String, Vec<usize>)>,
    corpus_path: PathBuf,
}

fn load_metric_inputs(ctx: &Ctx) -> Result<MetricInputs, CliError> {
    for (path, hint) in [
        (ctx.paths.src_matrix(), "embeddings"),
        (ctx.paths.tgt_matrix(), "embeddings"),
    ] {
        if !path.is_file() {
            return Err(CliError::Validation(format!(
                "{hint}: file not found: {} (run `xfid embed` first)",
                path.display()
            )));
        }
    }
    let src = load_matrix(&ctx.paths.src_matrix())?;
    let tgt = load_matrix(&ctx.paths.tgt_matrix())?;

    let corpus_path = ctx.resolve_metric_corpus()?;
    let slice = ctx.load_slice(&corpus_path, Format::Jsonl)?;
    let by_id: HashMap<&str, &Post> =
        slice.posts.iter().map(|p| (p.id.as_str(), p)).collect();

    let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
    for (i, id) in src.ids().iter().enumerate() {
        let post = by_id.get(id.as_str()).ok_or_else(|| {
            CliError::Validation(format!(
                "matrix row `{id}` not found in {}",
                corpus_path.display()
            ))
        })?;
        match groups.iter_mut().find(|(name, _)| *name == post.subcorpus) {
            Some((_, v)) => v.push(i),
            None => groups.push((post.subcorpus.clone(), vec![i])),
        }
    }
    Ok(MetricInputs { src, tgt, groups, corpus_path })
}

pub fn run_cosine(ctx: &Ctx) -> Result<(), CliError> {
    ctx.ensure_out_dir()?;
    let inputs = load_metric_inputs(ctx)?;
    let (rows, overall) = grouped_cosine_summaries(&inputs.src, &inputs.tgt, &inputs.groups)?;
    let artifact = CosineArtifact {
        rows: rows
            .into_iter()
            .map(|(subcorpus, summary)| NamedSummary { subcorpus, summary })
            .collect(),
        overall,
    };
    write_json(&ctx.paths.cosine(), &artifact)?;
    write_meta(&ctx.paths, &ctx.meta("cosine", None, Some(&inputs.corpus_path)))?;
    println!(
        "cosine over {} pairs: mean {:.3} -> {}",
        artifact.overall.n,
        artifact.overall.mean,
        ctx.paths.cosine().display()
    );
    Ok(())
}

pub fn run_cka(ctx: &Ctx) -> Result<(), CliError> {
    ctx.ensure_out_dir()?;
    let inputs = load_metric_inputs(ctx)?;
    let mut rows = Vec::with_capacity(inputs.groups.len());
    for (name, indices) in &inputs.groups {
        let src = inputs.src.select(indices)?;
        let tgt = inputs.tgt.select(indices)?;
        rows.push(NamedCka { subcorpus: name.clone(), cka: linear_cka(&src, &tgt)? });
    }
    // Overall comes from the full matrices, never an average of rows.
    let overall = linear_cka(&inputs.src, &inputs.tgt)?;
    let artifact = CkaArtifact { rows, overall };
    write_json(&ctx.paths.cka(), &artifact)?;
    write_meta(&ctx.paths, &ctx.meta("cka", None, Some(&inputs.corpus_path)))?;
    println!(
        "cka over {} pairs: {:.3} -> {}",
        artifact.overall.n,
        artifact.overall.value,
        ctx.paths.cka().display()
    );
    Ok(())
}

pub fn run_parity_cmd(
    ctx: &Ctx,
    import: Option<PathBuf>,
    per_subcorpus_flag: bool,
) -> Result<(), CliError> {
    ctx.ensure_out_dir()?;
    let threshold = ctx.config.parity.threshold;

    let (named_rows, seed, corpus_path): (Vec<NamedParityRow>, Option<u64>, Option<PathBuf>) =
        match import {
            Some(path) => {
                require_file(&path, "--import")?;
                let folds = import_external_folds(&path)?;
                let rows = parity_rows_from_external(&folds, threshold)?;
                let named = rows
                    .into_iter()
                    .map(|row| NamedParityRow { subcorpus: "imported".into(), row })
                    .collect();
                (named, None, None)
            }
            None => {
                let inputs = load_metric_inputs(ctx)?;
                let slice = ctx.load_slice(&inputs.corpus_path, Format::Jsonl)?;
                let by_id: HashMap<&str, &Post> =
                    slice.posts.iter().map(|p| (p.id.as_str(), p)).collect();
                let labels: Vec<Labels> = inputs
                    .src
                    .ids()
                    .iter()
                    .map(|id| by_id[id.as_str()].labels)
                    .collect();
                let pcfg = ctx.config.parity.parity_config(ctx.seed);

                let per_subcorpus = per_subcorpus_flag || ctx.config.parity.per_subcorpus;
                let mut named = Vec::new();
                if per_subcorpus {
                    for (name, indices) in &inputs.groups {
                        let src = inputs.src.select(indices)?;
                        let tgt = inputs.tgt.select(indices)?;
                        let sub_labels: Vec<Labels> =
                            indices.iter().map(|&i| labels[i]).collect();
                        for row in run_parity(&src, &tgt, &sub_labels, &pcfg)? {
                            named.push(NamedParityRow { subcorpus: name.clone(), row });
                        }
                    }
                } else {
                    for row in run_parity(&inputs.src, &inputs.tgt, &labels, &pcfg)? {
                        named.push(NamedParityRow { subcorpus: "Overall".into(), row });
                    }
                }
                (named, Some(pcfg.seed), Some(inputs.corpus_path))
            }
        };

    write_json(&ctx.paths.parity_json(), &ParityArtifact { rows: clone_rows(&named_rows) })?;
    write_parity_csv(&ctx.paths.parity_csv(), &named_rows)?;
    if named_rows.iter().all(|r| r.subcorpus == "Overall") {
        write_parity_folds_csv(&ctx.paths.parity_folds_csv(), &named_rows)?;
    }
    write_meta(&ctx.paths, &ctx.meta("parity", seed, corpus_path.as_deref()))?;

    for r in &named_rows {
        println!(
            "{} {:<9} en {:.3} pl {:.3} gap {:+.3} p>0 {:.3} p<{:.2} {:.3}{}",
            r.subcorpus,
            r.row.foundation.name(),
            r.row.en_auc,
            r.row.pl_auc,
            r.row.gap,
            r.row.p_gt0,
            r.row.threshold,
            r.row.p_lt_thresh,
            if r.row.degenerate { " (degenerate)" } else { "" }
        );
    }
    println!("-> {}", ctx.paths.parity_csv().display());
    Ok(())
}

fn clone_rows(rows: &[NamedParityRow]) -> Vec<NamedParityRow> {
    rows.iter()
        .map(|r| NamedParityRow { subcorpus: r.subcorpus.clone(), row: r.row.clone() })
        .collect()
}

pub fn run_report(ctx: &Ctx) -> Result<(), CliError> {
    ctx.ensure_out_dir()?;
    let mut bundle = ReportBundle {
        corpus_label: ctx.config.corpus.name.clone(),
        ..ReportBundle::default()
    };

    // Prevalence from the most processed corpus available.
    let corpus_path = ctx.resolve_metric_corpus().ok();
    let slice = match &corpus_path {
        Some(p) => Some(ctx.load_slice(p, Format::Jsonl)?),
        None => None,
    };
    if let Some(slice) = &slice {
        let mut rows = Vec::new();
        for sub in slice.subcorpora() {
            let posts: Vec<Post> =
                slice.posts.iter().filter(|p| p.subcorpus == sub).cloned().collect();
            let sub_slice = CorpusSlice::new(sub.clone(), posts);
            let prev = prevalence(&sub_slice)?;
            rows.push(PrevalenceRow {
                subcorpus: sub,
                n: prev.n,
                pct: Foundation::ALL.map(|f| prev.pct(f)),
            });
        }
        let total = prevalence(slice)?;
        rows.push(PrevalenceRow {
            subcorpus: "Total".into(),
            n: total.n,
            pct: Foundation::ALL.map(|f| total.pct(f)),
        });
        bundle.prevalence = rows;
    }

    if ctx.paths.cosine().is_file() {
        let artifact: CosineArtifact = read_json(&ctx.paths.cosine())?;
        bundle.cosine = artifact
            .rows
            .into_iter()
            .map(|r| CosineRow { subcorpus: r.subcorpus, summary: r.summary })
            .collect();
        bundle.cosine_overall = Some(artifact.overall);
    }
    if ctx.paths.cka().is_file() {
        let artifact: CkaArtifact = read_json(&ctx.paths.cka())?;
        bundle.cka = artifact
            .rows
            .into_iter()
            .map(|r| CkaRow { subcorpus: r.subcorpus, cka: r.cka })
            .collect();
        bundle.cka_overall = Some(artifact.overall);
    }
    if ctx.paths.parity_json().is_file() {
        let artifact: ParityArtifact = read_json(&ctx.paths.parity_json())?;
        bundle.parity = artifact.table_rows();
    }
    if ctx.paths.verdicts().is_file() {
        let verdicts = read_verdicts(&ctx.paths.verdicts())?;
        let slice = slice.as_ref().ok_or_else(|| {
            CliError::Validation(
                "verdicts found but no corpus to map post ids to subcorpora".into(),
            )
        })?;
        bundle.judge = aggregate_audit(&verdicts, slice)?;
    }

    let thresholds = ctx.config.report.thresholds();
    let quality: Verdict = verdict(&bundle, &thresholds);
    bundle.verdict = Some(quality.clone());
    bundle.provenance = Some(Provenance {
        seed: ctx.seed.unwrap_or(ctx.config.parity.seed),
        config_hash: ctx.config_hash.clone(),
    });

    let report_dir = ctx.paths.report_dir();
    std::fs::create_dir_all(&report_dir)
        .map_err(|e| CliError::Validation(format!("cannot create {}: {e}", report_dir.display())))?;
    let mut documents: Vec<Document> = render(&bundle, RenderFormat::Markdown)?;
    documents.extend(render(&bundle, RenderFormat::Csv)?);
    for doc in &documents {
        let path = report_dir.join(&doc.filename);
        std::fs::write(&path, &doc.content)
            .map_err(|e| CliError::Validation(format!("cannot write {}: {e}", path.display())))?;
    }
    write_json(&report_dir.join(format!("verdict_{}.json", bundle.corpus_label)), &quality)?;
    write_meta(&ctx.paths, &ctx.meta("report", bundle.provenance.as_ref().map(|p| p.seed), corpus_path.as_deref()))?;

    let status = match quality.status {
        xfid_core::report::VerdictStatus::Pass => "pass",
        xfid_core::report::VerdictStatus::Warn => "warn",
        xfid_core::report::VerdictStatus::Fail => "fail",
    };
    println!("verdict: {status} ({} tables) -> {}", documents.len(), report_dir.display());
    for reason in &quality.reasons {
        println!("  - {reason}");
    }
    Ok(())
}
