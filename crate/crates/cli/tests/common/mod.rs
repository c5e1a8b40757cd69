//! Shared helpers for the CLI test suites: the deterministic smoke-fixture
//! generator, a tiny HTTP mock provider, and pipeline runners.

#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use xfid_core::corpus::{Foundation, Labels, Platform, Post};

pub const SMOKE_SEED: u64 = 4242;
pub const SMOKE_DIM: usize = 16;
pub const SMOKE_POSTS: usize = 50;

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn xfid_bin() -> &'static str {
    env!("CARGO_BIN_EXE_xfid")
}

pub fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

#[derive(Serialize)]
struct EmbeddingEntry {
    text: String,
    embedding: Vec<f32>,
}

const EN_WORDS: [&str; 5] = ["orders", "kindness", "justice", "the team", "ritual"];
const PL_WORDS: [&str; 5] = ["rozkazach", "życzliwości", "sprawiedliwości", "drużynie", "rytuale"];

/// Deterministic 50-post synthetic bilingual corpus plus a text-keyed
/// embedding map covering every source and target text. Labels follow a
/// fixed pattern, embeddings are label-direction mixtures with seeded noise,
/// and targets sit close to their sources.
pub fn smoke_fixture() -> (String, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(SMOKE_SEED);
    let mut corpus = String::new();
    let mut embeddings = String::new();

    for i in 0..SMOKE_POSTS {
        let id = format!("p{i:03}");
        let (subcorpus, platform) =
            if i < SMOKE_POSTS / 2 { ("alpha", Platform::Reddit) } else { ("beta", Platform::Twitter) };

        let non_moral = i % 10 == 9;
        let mut labels = Labels::default();
        if !non_moral {
            for f in Foundation::ALL {
                labels.set(f, (i + 7 * f.index()) % 5 < 2);
            }
        }

        let (text_src, text_tgt) = if non_moral {
            (
                format!("Post {i}: notes about weather and sports"),
                format!("Wpis {i}: notatki o pogodzie i sporcie"),
            )
        } else {
            let en: Vec<&str> = Foundation::ALL
                .iter()
                .filter(|f| labels.get(**f))
                .map(|f| EN_WORDS[f.index()])
                .collect();
            let pl: Vec<&str> = Foundation::ALL
                .iter()
                .filter(|f| labels.get(**f))
                .map(|f| PL_WORDS[f.index()])
                .collect();
            let tag = if platform == Platform::Twitter { format!(" #mft{}", i % 7) } else { String::new() };
            (
                format!("Post {i}: strong feelings about {}{tag}", en.join(" and ")),
                format!("Wpis {i}: silne odczucia o {}{tag}", pl.join(" i ")),
            )
        };

        // Label-direction mixture plus noise; the target is the source
        // nudged slightly, so pairs stay close and labels stay learnable
        // without being trivially separable.
        let mut src_vec = vec![0.0f64; SMOKE_DIM];
        for f in Foundation::ALL {
            if labels.get(f) {
                src_vec[3 * f.index()] += 0.6;
                src_vec[3 * f.index() + 1] += 0.3;
            }
        }
        for v in src_vec.iter_mut() {
            *v += 0.40 * gauss(&mut rng);
        }
        let tgt_vec: Vec<f64> = src_vec.iter().map(|v| v + 0.15 * gauss(&mut rng)).collect();

        let post = Post {
            id,
            text_src: text_src.clone(),
            text_tgt: Some(text_tgt.clone()),
            corpus: "SMOKE".into(),
            subcorpus: subcorpus.into(),
            platform,
            labels,
            non_moral,
        };
        corpus.push_str(&serde_json::to_string(&post).unwrap());
        corpus.push('\n');

        for (text, vec) in [(text_src, &src_vec), (text_tgt, &tgt_vec)] {
            let entry = EmbeddingEntry {
                text,
                embedding: vec.iter().map(|&v| v as f32).collect(),
            };
            embeddings.push_str(&serde_json::to_string(&entry).unwrap());
            embeddings.push('\n');
        }
    }
    (corpus, embeddings)
}

/// Writes a config pointing at the bundled smoke fixture, rooted at `dir`.
/// `out_value` lands verbatim in `[output] dir`, so it may be relative.
pub fn write_smoke_config(dir: &Path, out_value: &str) -> PathBuf {
    let fixtures = fixture_dir();
    let config = format!(
        r#"[corpus]
name = "smoke"
input = "{corpus}"
format = "jsonl"

[output]
dir = "{out}"

[embedding]
backend = "file"
endpoint = "unused"
map_file = "{map}"
batch_size = 16
timeout_secs = 10
max_concurrent_batches = 4

[parity]
k = 5
seed = 7
l2_lambda = 1e-4
max_iters = 300
tol = 1e-5
threshold = 0.02
per_subcorpus = false

# Fold-level AUC on a 50-post fixture carries ~0.1 of estimation noise,
# so the gap margin is wider than the production default.
[report]
cosine_threshold = 0.80
gap_threshold = 0.15
clean_threshold = 90.0
"#,
        corpus = fixtures.join("smoke/corpus.jsonl").display(),
        out = out_value,
        map = fixtures.join("smoke/embeddings.jsonl").display(),
    );
    let path = dir.join("xfid.toml");
    std::fs::write(&path, config).unwrap();
    path
}

/// Runs the xfid binary with the given config and args.
pub fn xfid(config: &Path, args: &[&str]) -> Output {
    xfid_in(Path::new("."), config, args)
}

/// As [`xfid`], with an explicit working directory (relative paths in the
/// config resolve against it).
pub fn xfid_in(dir: &Path, config: &Path, args: &[&str]) -> Output {
    Command::new(xfid_bin())
        .current_dir(dir)
        .arg("--config")
        .arg(config)
        .args(args)
        .output()
        .expect("spawn xfid")
}

pub fn assert_success(output: &Output, what: &str) {
    assert!(
        output.status.success(),
        "{what} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

/// Minimal HTTP/1.1 chat-completion mock. Each connection handles one POST
/// and answers with a canned JSON body produced by `reply`, where `reply`
/// receives the request headers and body and returns (status, body).
pub async fn spawn_mock_http<F>(reply: F) -> SocketAddr
where
    F: Fn(&str, &str) -> (u16, String) + Send + Sync + 'static,
{
    use tokio::io::{AsyncReadExt, AsyncWriteExt};

    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        let reply = std::sync::Arc::new(reply);
        loop {
            let Ok((mut stream, _)) = listener.accept().await else {
                break;
            };
            let reply = reply.clone();
            tokio::spawn(async move {
                let mut buf = Vec::new();
                let mut chunk = [0u8; 4096];
                // Read until the full body per Content-Length is in.
                loop {
                    let Ok(n) = stream.read(&mut chunk).await else {
                        return;
                    };
                    if n == 0 {
                        break;
                    }
                    buf.extend_from_slice(&chunk[..n]);
                    if let Some(body_start) = find_body(&buf) {
                        let headers = String::from_utf8_lossy(&buf[..body_start]);
                        let len = content_length(&headers).unwrap_or(0);
                        if buf.len() >= body_start + len {
                            break;
                        }
                    }
                }
                let body_start = find_body(&buf).unwrap_or(buf.len());
                let headers = String::from_utf8_lossy(&buf[..body_start]).into_owned();
                let body = String::from_utf8_lossy(&buf[body_start..]).into_owned();
                let (status, reply_body) = reply(&headers, &body);
                let reason = match status {
                    200 => "OK",
                    429 => "Too Many Requests",
                    500 => "Internal Server Error",
                    _ => "Status",
                };
                let response = format!(
                    "HTTP/1.1 {status} {reason}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{reply_body}",
                    reply_body.len()
                );
                let _ = stream.write_all(response.as_bytes()).await;
                let _ = stream.shutdown().await;
            });
        }
    });
    addr
}

fn find_body(buf: &[u8]) -> Option<usize> {
    buf.windows(4).position(|w| w == b"\r\n\r\n").map(|p| p + 4)
}

fn content_length(headers: &str) -> Option<usize> {
    headers
        .lines()
        .find(|l| l.to_ascii_lowercase().starts_with("content-length:"))
        .and_then(|l| l.split(':').nth(1))
        .and_then(|v| v.trim().parse().ok())
}
