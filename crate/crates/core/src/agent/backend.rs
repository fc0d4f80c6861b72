use std::collections::{HashMap, VecDeque};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::seed::fingerprint;
use crate::{Error, Result};

pub const DEFAULT_TEMPERATURE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendRequest {
    pub prompt: String,
    pub temperature: f64,
    pub model: String,
}

impl BackendRequest {
    pub fn new(prompt: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            temperature: DEFAULT_TEMPERATURE,
            model: model.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendReply {
    pub text: String,
    pub latency_ms: f64,
    #[serde(default)]
    pub prompt_tokens: Option<u64>,
    #[serde(default)]
    pub completion_tokens: Option<u64>,
}

impl BackendReply {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            latency_ms: 0.0,
            prompt_tokens: None,
            completion_tokens: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("authentication rejected: {0}")]
    Auth(String),
    #[error("rate limit not lifted after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("request timed out after {attempts} attempts")]
    Timeout { attempts: u32 },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    Protocol(String),
    #[error("scripted backend has no replies left")]
    Exhausted,
    #[error("no recorded reply for prompt digest {0}")]
    UnknownPrompt(String),
    #[error("backend misconfigured: {0}")]
    Config(String),
}

/// A completion service. Implementations are shared between parallel trials
/// and synchronize internally.
pub trait Backend: Send + Sync {
    fn complete(&self, request: &BackendRequest) -> std::result::Result<BackendReply, BackendError>;

    /// Short identity string folded into agent fingerprints.
    fn describe(&self) -> String;
}

/// Digest used to key recorded replies.
pub fn prompt_digest(prompt: &str) -> String {
    fingerprint(prompt.as_bytes())
}

/// Replays a fixed list of replies in order.
#[derive(Debug)]
pub struct ScriptedBackend {
    replies: Mutex<VecDeque<String>>,
    cycle: bool,
}

impl ScriptedBackend {
    pub fn new<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            replies: Mutex::new(replies.into_iter().map(Into::into).collect()),
            cycle: false,
        }
    }

    /// Starts over from the first reply once the script runs out.
    pub fn cycling(mut self) -> Self {
        self.cycle = true;
        self
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, _request: &BackendRequest) -> std::result::Result<BackendReply, BackendError> {
        let mut q = self.replies.lock().expect("scripted backend lock");
        let next = q.pop_front().ok_or(BackendError::Exhausted)?;
        if self.cycle {
            q.push_back(next.clone());
        }
        Ok(BackendReply::text(next))
    }

    fn describe(&self) -> String {
        "scripted".into()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CassetteEntry {
    digest: String,
    reply: String,
}

/// Offline replay of recorded (prompt digest, reply) pairs.
#[derive(Debug, Default)]
pub struct CassetteBackend {
    entries: HashMap<String, String>,
}

impl CassetteBackend {
    pub fn from_pairs<I: IntoIterator<Item = (String, String)>>(pairs: I) -> Self {
        Self {
            entries: pairs
                .into_iter()
                .map(|(prompt, reply)| (prompt_digest(&prompt), reply))
                .collect(),
        }
    }

    /// Reads a JSON-lines cassette of `{"digest": ..., "reply": ...}`.
    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut entries = HashMap::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let e: CassetteEntry = serde_json::from_str(&line).map_err(|e| Error::Ingest {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
            entries.insert(e.digest, e.reply);
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Backend for CassetteBackend {
    fn complete(&self, request: &BackendRequest) -> std::result::Result<BackendReply, BackendError> {
        let digest = prompt_digest(&request.prompt);
        self.entries
            .get(&digest)
            .map(|r| BackendReply::text(r.clone()))
            .ok_or(BackendError::UnknownPrompt(digest))
    }

    fn describe(&self) -> String {
        format!("cassette:{}", self.entries.len())
    }
}

/// Wraps a backend and keeps every exchange so it can be saved as a cassette.
pub struct RecordingBackend<B> {
    inner: B,
    log: Mutex<Vec<CassetteEntry>>,
}

impl<B: Backend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        for e in self.log.lock().expect("recording lock").iter() {
            let line = serde_json::to_string(e)?;
            writeln!(file, "{line}").map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

impl<B: Backend> Backend for RecordingBackend<B> {
    fn complete(&self, request: &BackendRequest) -> std::result::Result<BackendReply, BackendError> {
        let reply = self.inner.complete(request)?;
        self.log.lock().expect("recording lock").push(CassetteEntry {
            digest: prompt_digest(&request.prompt),
            reply: reply.text.clone(),
        });
        Ok(reply)
    }

    fn describe(&self) -> String {
        self.inner.describe()
    }
}

/// Generic chat-completions endpoint settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    pub base_url: String,
    pub path: String,
    pub model: String,
    pub auth_header: String,
    pub auth_prefix: String,
    /// Environment variable holding the credential.
    pub api_key_env: Option<String>,
    pub timeout_secs: u64,
    pub max_attempts: u32,
    pub backoff_ms: u64,
    /// Minimum spacing between requests, shared by all callers.
    pub min_interval_ms: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            base_url: "http://localhost:8000".into(),
            path: "/v1/chat/completions".into(),
            model: "default".into(),
            auth_header: "Authorization".into(),
            auth_prefix: "Bearer ".into(),
            api_key_env: None,
            timeout_secs: 60,
            max_attempts: 5,
            backoff_ms: 500,
            min_interval_ms: 0,
        }
    }
}

pub struct HttpBackend {
    config: HttpConfig,
    agent: ureq::Agent,
    api_key: Option<String>,
    next_slot: Mutex<Instant>,
}

enum Attempt {
    Done(BackendReply),
    Retry(BackendError),
    Fatal(BackendError),
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> std::result::Result<Self, BackendError> {
        let api_key = match &config.api_key_env {
            Some(var) => Some(
                std::env::var(var).map_err(|_| BackendError::Config(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            config,
            agent,
            api_key,
            next_slot: Mutex::new(Instant::now()),
        })
    }

    fn wait_for_slot(&self) {
        let interval = Duration::from_millis(self.config.min_interval_ms);
        let wait = {
            let mut slot = self.next_slot.lock().expect("rate limiter lock");
            let now = Instant::now();
            let start = (*slot).max(now);
            *slot = start + interval;
            start - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }

    fn attempt(&self, request: &BackendRequest) -> Attempt {
        let url = format!("{}{}", self.config.base_url.trim_end_matches('/'), self.config.path);
        let body = serde_json::json!({
            "model": request.model,
            "temperature": request.temperature,
            "messages": [{"role": "user", "content": request.prompt}],
        });
        let mut call = self.agent.post(&url);
        if let Some(key) = &self.api_key {
            call = call.header(self.config.auth_header.as_str(), format!("{}{key}", self.config.auth_prefix));
        }
        let started = Instant::now();
        let mut response = match call.send_json(&body) {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => return Attempt::Retry(BackendError::Timeout { attempts: 1 }),
            Err(e) => return Attempt::Retry(BackendError::Transport(e.to_string())),
        };
        let status = response.status().as_u16();
        match status {
            200..=299 => {}
            401 | 403 => return Attempt::Fatal(BackendError::Auth(format!("HTTP {status}"))),
            429 => return Attempt::Retry(BackendError::RateLimited { attempts: 1 }),
            500..=599 => return Attempt::Retry(BackendError::Transport(format!("HTTP {status}"))),
            _ => return Attempt::Fatal(BackendError::Protocol(format!("HTTP {status}"))),
        }
        let json: serde_json::Value = match response.body_mut().read_json() {
            Ok(v) => v,
            Err(e) => return Attempt::Fatal(BackendError::Protocol(e.to_string())),
        };
        let Some(text) = json["choices"][0]["message"]["content"].as_str() else {
            return Attempt::Fatal(BackendError::Protocol("no choices[0].message.content".into()));
        };
        Attempt::Done(BackendReply {
            text: text.to_string(),
            latency_ms: started.elapsed().as_secs_f64() * 1e3,
            prompt_tokens: json["usage"]["prompt_tokens"].as_u64(),
            completion_tokens: json["usage"]["completion_tokens"].as_u64(),
        })
    }
}

impl Backend for HttpBackend {
    fn complete(&self, request: &BackendRequest) -> std::result::Result<BackendReply, BackendError> {
        let attempts = self.config.max_attempts.max(1);
        let mut last = BackendError::Transport("no attempt made".into());
        for i in 0..attempts {
            self.wait_for_slot();
            match self.attempt(request) {
                Attempt::Done(reply) => return Ok(reply),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(e) => last = e,
            }
            if i + 1 < attempts {
                std::thread::sleep(Duration::from_millis(self.config.backoff_ms << i.min(16)));
            }
        }
        Err(match last {
            BackendError::RateLimited { .. } => BackendError::RateLimited { attempts },
            BackendError::Timeout { .. } => BackendError::Timeout { attempts },
            other => other,
        })
    }

    fn describe(&self) -> String {
        format!("http:{}", self.config.model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripted_replays_in_order() {
        let b = ScriptedBackend::new(["x", "y"]);
        let req = BackendRequest::new("p", "m");
        assert_eq!(b.complete(&req).unwrap().text, "x");
        assert_eq!(b.complete(&req).unwrap().text, "y");
        assert_eq!(b.complete(&req), Err(BackendError::Exhausted));
    }

    #[test]
    fn cassette_round_trip() {
        let rec = RecordingBackend::new(ScriptedBackend::new(["B"]));
        rec.complete(&BackendRequest::new("prompt one", "m")).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        rec.save(&path).unwrap();
        let cas = CassetteBackend::load(&path).unwrap();
        assert_eq!(cas.complete(&BackendRequest::new("prompt one", "m")).unwrap().text, "B");
        assert!(matches!(
            cas.complete(&BackendRequest::new("other", "m")),
            Err(BackendError::UnknownPrompt(_))
        ));
    }

    #[test]
    fn unreachable_endpoint_is_a_transport_error() {
        let b = HttpBackend::new(HttpConfig {
            base_url: "http://127.0.0.1:9".into(),
            max_attempts: 2,
            backoff_ms: 1,
            timeout_secs: 2,
            ..HttpConfig::default()
        })
        .unwrap();
        let err = b.complete(&BackendRequest::new("p", "m")).unwrap_err();
        assert!(matches!(err, BackendError::Transport(_) | BackendError::Timeout { .. }));
    }
}
