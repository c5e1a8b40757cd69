//! The full pipeline through the binary, provider stages included: sample,
//! translate and judge run against a local mock chat-completion server, so
//! the report ends up with all five tables plus the verdict.

mod common;

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use common::{assert_success, fixture_dir, smoke_fixture, spawn_mock_http, xfid_in};

/// Fixture corpus with translations stripped, so translate has work to do.
fn src_only_corpus() -> String {
    let (corpus, _) = smoke_fixture();
    corpus
        .lines()
        .map(|line| {
            let mut v: serde_json::Value = serde_json::from_str(line).unwrap();
            v["text_tgt"] = serde_json::Value::Null;
            serde_json::to_string(&v).unwrap()
        })
        .collect::<Vec<_>>()
        .join("\n")
        + "\n"
}

/// src text -> fixture translation, the mock "model".
fn translation_table() -> HashMap<String, String> {
    let (corpus, _) = smoke_fixture();
    corpus
        .lines()
        .map(|line| {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            (
                v["text"].as_str().unwrap().to_string(),
                v["text_tgt"].as_str().unwrap().to_string(),
            )
        })
        .collect()
}

fn chat_completion(content: &str) -> String {
    serde_json::json!({
        "choices": [{"message": {"content": content}, "finish_reason": "stop"}]
    })
    .to_string()
}

fn write_config(dir: &Path, provider_port: u16) -> PathBuf {
    let fixtures = fixture_dir();
    let config = format!(
        r#"[corpus]
name = "smoke"
input = "{corpus}"
format = "jsonl"

[output]
dir = "out"

[embedding]
backend = "file"
endpoint = "unused"
map_file = "{map}"
batch_size = 16
timeout_secs = 10
max_concurrent_batches = 4

[provider]
base_url = "http://127.0.0.1:{provider_port}"
path = "/v1/chat/completions"
model = "mock-model"
auth_env = "XFID_PIPELINE_TOKEN"
temperature_translate = 0.3
temperature_judge = 0.0

[policy]
max_in_flight = 20
max_retries = 2
backoff_initial_ms = 5
backoff_multiplier = 2.0
backoff_jitter = 0.0
backoff_cap_ms = 50
timeout_secs = 10

[sample]
n = 20
seed = 11

[parity]
k = 5
seed = 7
l2_lambda = 1e-4
max_iters = 300
tol = 1e-5
threshold = 0.02
per_subcorpus = false

[report]
cosine_threshold = 0.80
gap_threshold = 0.15
clean_threshold = 80.0
"#,
        corpus = dir.join("raw_corpus.jsonl").display(),
        map = fixtures.join("smoke/embeddings.jsonl").display(),
    );
    let path = dir.join("xfid.toml");
    std::fs::write(&path, config).unwrap();
    path
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn full_pipeline_with_mock_provider_produces_all_five_tables() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("raw_corpus.jsonl"), src_only_corpus()).unwrap();

    let table = translation_table();
    let addr = spawn_mock_http(move |headers, body| {
        assert!(
            headers.to_ascii_lowercase().contains("authorization: bearer pipeline-sekret"),
            "missing auth header"
        );
        let req: serde_json::Value = serde_json::from_str(body).unwrap();
        let system = req["messages"][0]["content"].as_str().unwrap_or_default();
        let user = req["messages"]
            .as_array()
            .and_then(|m| m.last())
            .and_then(|m| m["content"].as_str())
            .unwrap_or_default();

        if system.contains("quality auditor") {
            // Deterministic category mix keyed on the text.
            let category = match user.len() % 10 {
                0 => "minor",
                1 => "error",
                _ => "clean",
            };
            let score = match category {
                "clean" => 9,
                "minor" => 6,
                _ => 2,
            };
            let verdict = format!(
                r#"{{"score":{score},"category":"{category}","dimensions":{{"tone":{score},"slang":{score},"formatting":{score},"proper_nouns":{score}}},"notes":""}}"#
            );
            (200, chat_completion(&verdict))
        } else {
            match table.get(user) {
                Some(translation) => (200, chat_completion(translation)),
                None => (400, "{\"error\":\"unknown text\"}".into()),
            }
        }
    })
    .await;

    let config = write_config(dir.path(), addr.port());
    let run = |args: &[&str]| {
        let mut cmd = std::process::Command::new(common::xfid_bin());
        cmd.current_dir(dir.path())
            .env("XFID_PIPELINE_TOKEN", "pipeline-sekret")
            .arg("--config")
            .arg(&config)
            .args(args);
        cmd.output().expect("spawn xfid")
    };

    // Phase 1: ingest, sample, translate the sample, judge it.
    assert_success(&run(&["ingest"]), "ingest");
    assert_success(&run(&["sample"]), "sample");
    assert_success(&run(&["translate", "--corpus", "out/sample.jsonl"]), "translate sample");
    assert_success(&run(&["judge"]), "judge");

    // Phase 2: full translation resumes from the sample's journal.
    assert_success(&run(&["translate"]), "translate full");

    // Phase 3: embeddings and the quantitative checks.
    for stage in ["embed", "cosine", "cka", "parity", "report"] {
        assert_success(&run(&[stage]), stage);
    }

    let out = dir.path().join("out");
    let translated = std::fs::read_to_string(out.join("translated.jsonl")).unwrap();
    assert_eq!(translated.lines().count(), 50);
    for line in translated.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["text_tgt"].is_string(), "untranslated post: {line}");
    }
    let verdicts = std::fs::read_to_string(out.join("verdicts.jsonl")).unwrap();
    assert_eq!(verdicts.lines().count(), 20);

    let report = out.join("report");
    for table in ["prevalence", "judge_audit", "cosine", "cka", "parity"] {
        for ext in ["md", "csv"] {
            let path = report.join(format!("{table}_smoke.{ext}"));
            assert!(path.is_file(), "missing {}", path.display());
        }
    }
    assert!(report.join("verdict_smoke.md").is_file());

    // The audit table aggregates the sample's verdicts per subcorpus.
    let audit = std::fs::read_to_string(report.join("judge_audit_smoke.md")).unwrap();
    assert!(audit.contains("alpha"), "{audit}");
    assert!(audit.contains("beta"), "{audit}");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn parity_import_applies_t_tests_to_external_folds() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("raw_corpus.jsonl"), src_only_corpus()).unwrap();
    let config = write_config(dir.path(), 1);

    let folds = fixture_dir().join("external_folds_care.csv");
    let output = xfid_in(
        dir.path(),
        &config,
        &["parity", "--import", folds.to_str().unwrap()],
    );
    assert_success(&output, "parity --import");
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("care"), "{stdout}");
    assert!(stdout.contains("+0.011"), "{stdout}");

    let csv = std::fs::read_to_string(dir.path().join("out/parity.csv")).unwrap();
    assert!(csv.contains("imported,care"), "{csv}");
}
