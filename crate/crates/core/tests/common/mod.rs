//! Helpers shared by the integration suites: corpus builders and a minimal
//! HTTP/1.1 server for exercising the real network clients.

#![allow(dead_code)]

use std::net::SocketAddr;
use std::sync::Arc;

use xfid_core::corpus::{CorpusSlice, Labels, Platform, Post};

pub fn post(id: &str, platform: Platform) -> Post {
    Post {
        id: id.to_string(),
        text_src: format!("source text {id}"),
        text_tgt: None,
        corpus: "T".into(),
        subcorpus: "s".into(),
        platform,
        labels: Labels::default(),
        non_moral: true,
    }
}

pub fn slice(n: usize, platform: Platform) -> CorpusSlice {
    CorpusSlice::new(
        "test",
        (0..n).map(|i| post(&format!("p{i:03}"), platform)).collect(),
    )
}

/// One-request-per-connection HTTP mock. `reply` maps the request (headers,
/// body) to (status, response body).
pub async fn spawn_mock_http<F>(reply: F) -> SocketAddr
where
    F: Fn(&str, &str) -> (u16, String) + Send + Sync + 'static,
{
    use tokio::io::{AsyncReadExt, AsyncWriteExt};

    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        let reply = Arc::new(reply);
        loop {
            let Ok((mut stream, _)) = listener.accept().await else {
                break;
            };
            let reply = reply.clone();
            tokio::spawn(async move {
                let mut buf = Vec::new();
                let mut chunk = [0u8; 4096];
                loop {
                    let Ok(n) = stream.read(&mut chunk).await else {
                        return;
                    };
                    if n == 0 {
                        break;
                    }
                    buf.extend_from_slice(&chunk[..n]);
                    if let Some(split) = find_body(&buf) {
                        let headers = String::from_utf8_lossy(&buf[..split]);
                        let len = content_length(&headers).unwrap_or(0);
                        if buf.len() >= split + len {
                            break;
                        }
                    }
                }
                let split = find_body(&buf).unwrap_or(buf.len());
                let headers = String::from_utf8_lossy(&buf[..split]).into_owned();
                let body = String::from_utf8_lossy(&buf[split..]).into_owned();
                let (status, reply_body) = reply(&headers, &body);
                let reason = match status {
                    200 => "OK",
                    400 => "Bad Request",
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
