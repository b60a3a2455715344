#![allow(dead_code)]

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use lexiscope::admin::client::completion_body;
use serde_json::Value;
use sha2::{Digest, Sha256};

/// A scripted chat-completions server on a random local port. Every reply
/// is a pure function of the request body.
pub struct MockChat {
    pub base_url: String,
    pub requests: Arc<AtomicUsize>,
    server: Arc<tiny_http::Server>,
    handle: Option<JoinHandle<()>>,
}

pub type Script = Arc<dyn Fn(&Value) -> (u16, String) + Send + Sync>;

impl MockChat {
    pub fn start(script: Script) -> Self {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").expect("bind mock"));
        let port = server.server_addr().to_ip().expect("ip addr").port();
        let requests = Arc::new(AtomicUsize::new(0));
        let (srv, count) = (server.clone(), requests.clone());
        let handle = std::thread::spawn(move || {
            for mut req in srv.incoming_requests() {
                count.fetch_add(1, Ordering::SeqCst);
                let mut body = String::new();
                let _ = req.as_reader().read_to_string(&mut body);
                let json: Value = serde_json::from_str(&body).unwrap_or(Value::Null);
                let (status, reply) = script(&json);
                let header = tiny_http::Header::from_bytes("Content-Type", "application/json").unwrap();
                let _ = req.respond(
                    tiny_http::Response::from_string(reply)
                        .with_status_code(status)
                        .with_header(header),
                );
            }
        });
        Self {
            base_url: format!("http://127.0.0.1:{port}/v1"),
            requests,
            server,
            handle: Some(handle),
        }
    }

    /// Answers every prompt with ten lexicon nouns chosen by hashing the
    /// request.
    pub fn word_lists() -> Self {
        Self::start(Arc::new(|req| (200, completion_body(&words_for(req)))))
    }

    pub fn count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }
}

impl Drop for MockChat {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

pub fn words_for(req: &Value) -> String {
    let nouns = lexiscope::data::nouns();
    let digest = Sha256::digest(req.to_string().as_bytes());
    let words: Vec<&str> = (0..10)
        .map(|i| {
            let b = &digest[i * 3..i * 3 + 3];
            let idx = ((b[0] as usize) << 16 | (b[1] as usize) << 8 | b[2] as usize) % nouns.len();
            nouns[idx]
        })
        .collect();
    format!(
        "Here you go:\n```json\n{}\n```",
        serde_json::to_string(&words).unwrap()
    )
}

/// A small deterministic static provider over the shipped noun list.
pub fn hashed_provider(dim: usize) -> lexiscope::embedding::StaticVectors {
    let nouns = lexiscope::data::nouns();
    lexiscope::embedding::StaticVectors::from_pairs(
        "hashed",
        nouns.iter().map(|w| {
            let mut v = Vec::with_capacity(dim);
            let mut seed = Sha256::digest(w.as_bytes()).to_vec();
            while v.len() < dim {
                for chunk in seed.chunks(2) {
                    if v.len() < dim {
                        v.push((u16::from_be_bytes([chunk[0], chunk[1]]) as f64) / 65535.0 - 0.5);
                    }
                }
                seed = Sha256::digest(&seed).to_vec();
            }
            (w.to_string(), v)
        }),
    )
    .expect("hashed provider")
}

pub fn fixture(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}
