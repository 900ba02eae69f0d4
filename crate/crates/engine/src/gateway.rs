//! Provider-agnostic chat completion with images.
//!
//! Live providers speak the common chat-completions JSON shape over HTTPS;
//! [`MockModel`] replays a script and records every request.

use std::collections::VecDeque;
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::PathBuf;
use std::sync::{Arc, Condvar, Mutex, OnceLock};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use strokelab_core::render::RasterImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Part {
    Text(String),
    Image(RasterImage),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatMessage {
    pub role: Role,
    pub parts: Vec<Part>,
}

impl ChatMessage {
    pub fn system(text: impl Into<String>) -> Self {
        Self { role: Role::System, parts: vec![Part::Text(text.into())] }
    }

    pub fn user(parts: Vec<Part>) -> Self {
        Self { role: Role::User, parts }
    }

    pub fn text(&self) -> String {
        self.parts
            .iter()
            .filter_map(|p| match p {
                Part::Text(t) => Some(t.as_str()),
                Part::Image(_) => None,
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn images(&self) -> impl Iterator<Item = &RasterImage> {
        self.parts.iter().filter_map(|p| match p {
            Part::Image(i) => Some(i),
            Part::Text(_) => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum GatewayError {
    #[error("credential missing: environment variable {0} is not set")]
    Auth(String),
    #[error("request timed out")]
    Timeout,
    #[error("rate limited after {0} attempts")]
    RateLimited(u32),
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error("mock script exhausted")]
    ScriptExhausted,
    #[error("invalid provider config: {0}")]
    Config(String),
    #[error("system messages may only carry text")]
    SystemImage,
}

/// Anything that can answer a chat request.
pub trait ChatModel: Send + Sync {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, GatewayError>;
    fn name(&self) -> &str;
}

fn check_messages(messages: &[ChatMessage]) -> Result<(), GatewayError> {
    if messages.iter().any(|m| m.role == Role::System && m.images().next().is_some()) {
        return Err(GatewayError::SystemImage);
    }
    Ok(())
}

// ---------------------------------------------------------------- mock

#[derive(Debug, Clone, PartialEq)]
pub enum MockReply {
    Text(String),
    Fail(GatewayError),
}

/// Replays canned replies in order and records every request.
#[derive(Debug, Default)]
pub struct MockModel {
    name: String,
    script: Mutex<VecDeque<MockReply>>,
    requests: Mutex<Vec<Vec<ChatMessage>>>,
}

impl MockModel {
    pub fn new<S: Into<String>>(script: impl IntoIterator<Item = S>) -> Self {
        Self::with_replies(script.into_iter().map(|s| MockReply::Text(s.into())))
    }

    pub fn with_replies(script: impl IntoIterator<Item = MockReply>) -> Self {
        Self { name: "mock".into(), script: Mutex::new(script.into_iter().collect()), requests: Mutex::new(vec![]) }
    }

    pub fn named(mut self, name: &str) -> Self {
        self.name = name.into();
        self
    }

    /// Every request received so far, in order.
    pub fn requests(&self) -> Vec<Vec<ChatMessage>> {
        self.requests.lock().expect("mock lock").clone()
    }

    pub fn remaining(&self) -> usize {
        self.script.lock().expect("mock lock").len()
    }

    pub fn push(&self, reply: MockReply) {
        self.script.lock().expect("mock lock").push_back(reply);
    }
}

impl ChatModel for MockModel {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, GatewayError> {
        check_messages(messages)?;
        self.requests.lock().expect("mock lock").push(messages.to_vec());
        match self.script.lock().expect("mock lock").pop_front() {
            Some(MockReply::Text(t)) => Ok(t),
            Some(MockReply::Fail(e)) => Err(e),
            None => Err(GatewayError::ScriptExhausted),
        }
    }

    fn name(&self) -> &str {
        &self.name
    }
}

// ---------------------------------------------------------------- limiter

/// Counting semaphore bounding in-flight live calls.
#[derive(Debug)]
pub struct Limiter {
    max: usize,
    used: Mutex<usize>,
    cv: Condvar,
}

pub const DEFAULT_IN_FLIGHT: usize = 8;

impl Limiter {
    pub fn new(max: usize) -> Self {
        Self { max: max.max(1), used: Mutex::new(0), cv: Condvar::new() }
    }

    pub fn acquire(&self) -> LimiterGuard<'_> {
        let mut used = self.used.lock().expect("limiter lock");
        while *used >= self.max {
            used = self.cv.wait(used).expect("limiter lock");
        }
        *used += 1;
        LimiterGuard { limiter: self }
    }

    pub fn in_flight(&self) -> usize {
        *self.used.lock().expect("limiter lock")
    }

    pub fn capacity(&self) -> usize {
        self.max
    }
}

pub struct LimiterGuard<'a> {
    limiter: &'a Limiter,
}

impl Drop for LimiterGuard<'_> {
    fn drop(&mut self) {
        *self.limiter.used.lock().expect("limiter lock") -= 1;
        self.limiter.cv.notify_one();
    }
}

static GLOBAL_LIMITER: OnceLock<Arc<Limiter>> = OnceLock::new();

/// Process-wide limiter shared by every live model, sized on first use
/// (default [`DEFAULT_IN_FLIGHT`]).
pub fn global_limiter() -> Arc<Limiter> {
    GLOBAL_LIMITER.get_or_init(|| Arc::new(Limiter::new(DEFAULT_IN_FLIGHT))).clone()
}

/// Sizes the process-wide limiter; only effective before the first call.
pub fn init_global_limiter(max: usize) -> Arc<Limiter> {
    GLOBAL_LIMITER.get_or_init(|| Arc::new(Limiter::new(max))).clone()
}

// ---------------------------------------------------------------- live provider

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub name: String,
    /// Full chat-completions URL.
    pub endpoint: String,
    pub model_id: String,
    /// Environment variable holding the API key; defaults to
    /// `SKETCH_<NAME>_API_KEY`.
    #[serde(default)]
    pub credential: Option<String>,
    /// Sent only when set; providers otherwise use their own default.
    #[serde(default)]
    pub temperature: Option<f64>,
    #[serde(default = "default_timeout")]
    pub request_timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// First retry delay; doubles on each further attempt.
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
}

fn default_timeout() -> u64 {
    120
}
fn default_retries() -> u32 {
    3
}
fn default_backoff() -> u64 {
    500
}

/// `SKETCH_<PROVIDER>_API_KEY` with the name upper-cased and every
/// non-alphanumeric character replaced by `_`.
pub fn credential_var(provider: &str) -> String {
    let up: String = provider.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_uppercase() } else { '_' }).collect();
    format!("SKETCH_{up}_API_KEY")
}

impl ProviderConfig {
    pub fn new(name: &str, endpoint: &str, model_id: &str) -> Self {
        Self {
            name: name.into(),
            endpoint: endpoint.into(),
            model_id: model_id.into(),
            credential: None,
            temperature: None,
            request_timeout_secs: default_timeout(),
            max_retries: default_retries(),
            backoff_ms: default_backoff(),
        }
    }

    pub fn credential_var(&self) -> String {
        self.credential.clone().unwrap_or_else(|| credential_var(&self.name))
    }

    pub fn check(&self) -> Result<(), GatewayError> {
        let u = url::Url::parse(&self.endpoint).map_err(|e| GatewayError::Config(format!("endpoint {:?}: {e}", self.endpoint)))?;
        if !matches!(u.scheme(), "http" | "https") {
            return Err(GatewayError::Config(format!("endpoint scheme {} is not http(s)", u.scheme())));
        }
        if self.model_id.is_empty() {
            return Err(GatewayError::Config("model_id is empty".into()));
        }
        Ok(())
    }
}

/// Outcome of one HTTP exchange.
#[derive(Debug, Clone, PartialEq)]
pub enum TransportError {
    Timeout,
    Other(String),
}

/// Minimal HTTP seam so retry logic is testable without a network.
pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, bearer: &str, body: &Value, timeout: Duration) -> Result<(u16, String), TransportError>;
}

/// Blocking `reqwest` transport.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl Default for HttpTransport {
    fn default() -> Self {
        Self { client: reqwest::blocking::Client::new() }
    }
}

impl Transport for HttpTransport {
    fn post_json(&self, url: &str, bearer: &str, body: &Value, timeout: Duration) -> Result<(u16, String), TransportError> {
        let resp = self.client.post(url).bearer_auth(bearer).timeout(timeout).json(body).send().map_err(|e| {
            if e.is_timeout() {
                TransportError::Timeout
            } else {
                TransportError::Other(e.to_string())
            }
        })?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(|e| TransportError::Other(e.to_string()))?;
        Ok((status, text))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptLog {
    pub attempt: u32,
    pub status: Option<u16>,
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// One audit line per `complete` call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub request_id: String,
    pub provider: String,
    pub model: String,
    pub request_sha256: String,
    pub attempts: Vec<AttemptLog>,
    pub latency_ms: u64,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_tokens: Option<u64>,
}

/// Append-only newline-delimited JSON sink; in-memory when no path is set.
#[derive(Debug, Default)]
pub struct AuditLog {
    path: Option<PathBuf>,
    records: Mutex<Vec<AuditRecord>>,
}

impl AuditLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn to_file(path: impl Into<PathBuf>) -> Self {
        Self { path: Some(path.into()), records: Mutex::new(vec![]) }
    }

    pub fn append(&self, rec: AuditRecord) {
        if let Some(p) = &self.path {
            if let Ok(mut f) = OpenOptions::new().create(true).append(true).open(p) {
                let _ = writeln!(f, "{}", serde_json::to_string(&rec).expect("audit record serializes"));
            }
        }
        self.records.lock().expect("audit lock").push(rec);
    }

    pub fn records(&self) -> Vec<AuditRecord> {
        self.records.lock().expect("audit lock").clone()
    }
}

/// Chat-completions request body. Images travel as PNG data URLs; the
/// temperature key is present only when configured.
pub fn request_body(cfg: &ProviderConfig, messages: &[ChatMessage]) -> Value {
    let msgs: Vec<Value> = messages
        .iter()
        .map(|m| {
            let role = serde_json::to_value(m.role).expect("role serializes");
            if m.role == Role::System || m.images().next().is_none() {
                json!({ "role": role, "content": m.text() })
            } else {
                let parts: Vec<Value> = m
                    .parts
                    .iter()
                    .map(|p| match p {
                        Part::Text(t) => json!({ "type": "text", "text": t }),
                        Part::Image(img) => json!({
                            "type": "image_url",
                            "image_url": { "url": img.to_png_data_url().unwrap_or_default() }
                        }),
                    })
                    .collect();
                json!({ "role": role, "content": parts })
            }
        })
        .collect();
    let mut body = json!({ "model": cfg.model_id, "messages": msgs });
    if let Some(t) = cfg.temperature {
        body["temperature"] = json!(t);
    }
    body
}

/// Assistant text and token usage from a chat-completions response.
pub fn parse_response(text: &str) -> Result<(String, Option<u64>, Option<u64>), GatewayError> {
    let v: Value = serde_json::from_str(text).map_err(|e| GatewayError::MalformedResponse(e.to_string()))?;
    let content = &v["choices"][0]["message"]["content"];
    let out = match content {
        Value::String(s) => s.clone(),
        Value::Array(parts) => parts.iter().filter_map(|p| p["text"].as_str()).collect::<Vec<_>>().join(""),
        _ => return Err(GatewayError::MalformedResponse("no choices[0].message.content".into())),
    };
    Ok((out, v["usage"]["prompt_tokens"].as_u64(), v["usage"]["completion_tokens"].as_u64()))
}

/// Live chat-completions provider.
pub struct HttpModel {
    cfg: ProviderConfig,
    transport: Box<dyn Transport>,
    audit: Arc<AuditLog>,
    limiter: Arc<Limiter>,
    env: Box<dyn Fn(&str) -> Option<String> + Send + Sync>,
}

impl HttpModel {
    pub fn new(cfg: ProviderConfig) -> Result<Self, GatewayError> {
        cfg.check()?;
        Ok(Self {
            cfg,
            transport: Box::new(HttpTransport::default()),
            audit: Arc::new(AuditLog::in_memory()),
            limiter: global_limiter(),
            env: Box::new(|k| std::env::var(k).ok()),
        })
    }

    pub fn with_transport(mut self, t: impl Transport + 'static) -> Self {
        self.transport = Box::new(t);
        self
    }

    pub fn with_audit(mut self, audit: Arc<AuditLog>) -> Self {
        self.audit = audit;
        self
    }

    pub fn with_limiter(mut self, limiter: Arc<Limiter>) -> Self {
        self.limiter = limiter;
        self
    }

    /// Overrides environment lookup (tests).
    pub fn with_env(mut self, f: impl Fn(&str) -> Option<String> + Send + Sync + 'static) -> Self {
        self.env = Box::new(f);
        self
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.cfg
    }

    pub fn audit(&self) -> Arc<AuditLog> {
        self.audit.clone()
    }
}

fn retryable(status: u16) -> bool {
    status == 429 || status >= 500
}

impl ChatModel for HttpModel {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, GatewayError> {
        check_messages(messages)?;
        let var = self.cfg.credential_var();
        let key = (self.env)(&var).filter(|k| !k.is_empty()).ok_or(GatewayError::Auth(var))?;
        let body = request_body(&self.cfg, messages);
        let body_text = serde_json::to_string(&body).expect("body serializes");
        let mut rec = AuditRecord {
            request_id: uuid::Uuid::new_v4().to_string(),
            provider: self.cfg.name.clone(),
            model: self.cfg.model_id.clone(),
            request_sha256: sha256_hex(body_text.as_bytes()),
            attempts: vec![],
            latency_ms: 0,
            ok: false,
            response: None,
            error: None,
            prompt_tokens: None,
            completion_tokens: None,
        };
        let started = Instant::now();
        let timeout = Duration::from_secs(self.cfg.request_timeout_secs.max(1));
        let mut last = GatewayError::Transport("no attempt made".into());
        let _slot = self.limiter.acquire();
        for attempt in 0..=self.cfg.max_retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(self.cfg.backoff_ms.saturating_mul(1 << (attempt - 1).min(16))));
            }
            let t0 = Instant::now();
            let res = self.transport.post_json(&self.cfg.endpoint, &key, &body, timeout);
            let latency_ms = t0.elapsed().as_millis() as u64;
            let (retry, outcome) = match res {
                Err(TransportError::Timeout) => (true, Err(GatewayError::Timeout)),
                Err(TransportError::Other(e)) => (true, Err(GatewayError::Transport(e))),
                Ok((status, text)) if (200..300).contains(&status) => (false, parse_response(&text).map(|r| (status, r))),
                Ok((401 | 403, text)) => (false, Err(GatewayError::Http { status: 401, body: text })),
                Ok((429, _)) => (true, Err(GatewayError::RateLimited(attempt + 1))),
                Ok((status, text)) => (retryable(status), Err(GatewayError::Http { status, body: text })),
            };
            match outcome {
                Ok((status, (text, pt, ct))) => {
                    rec.attempts.push(AttemptLog { attempt: attempt + 1, status: Some(status), latency_ms, error: None });
                    rec.ok = true;
                    rec.response = Some(text.clone());
                    rec.prompt_tokens = pt;
                    rec.completion_tokens = ct;
                    rec.latency_ms = started.elapsed().as_millis() as u64;
                    self.audit.append(rec);
                    return Ok(text);
                }
                Err(e) => {
                    let status = match &e {
                        GatewayError::Http { status, .. } => Some(*status),
                        GatewayError::RateLimited(_) => Some(429),
                        _ => None,
                    };
                    rec.attempts.push(AttemptLog { attempt: attempt + 1, status, latency_ms, error: Some(e.to_string()) });
                    last = e;
                    if !retry {
                        break;
                    }
                }
            }
        }
        if let GatewayError::RateLimited(_) = last {
            last = GatewayError::RateLimited(rec.attempts.len() as u32);
        }
        rec.error = Some(last.to_string());
        rec.latency_ms = started.elapsed().as_millis() as u64;
        self.audit.append(rec);
        Err(last)
    }

    fn name(&self) -> &str {
        &self.cfg.name
    }
}

/// Named models available to sessions and runs.
#[derive(Clone, Default)]
pub struct ProviderRegistry {
    models: std::collections::BTreeMap<String, Arc<dyn ChatModel>>,
}

impl std::fmt::Debug for ProviderRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.models.keys()).finish()
    }
}

impl ProviderRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: impl Into<String>, model: Arc<dyn ChatModel>) -> &mut Self {
        self.models.insert(name.into(), model);
        self
    }

    /// Live providers from their configs, sharing one audit log.
    pub fn from_configs(configs: &[ProviderConfig], audit: Arc<AuditLog>) -> Result<Self, GatewayError> {
        let mut r = Self::new();
        for c in configs {
            r.register(c.name.clone(), Arc::new(HttpModel::new(c.clone())?.with_audit(audit.clone())));
        }
        Ok(r)
    }

    /// Reads a JSON array of provider configs.
    pub fn load_configs(path: &std::path::Path) -> Result<Vec<ProviderConfig>, GatewayError> {
        let text = std::fs::read_to_string(path).map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        let cfgs: Vec<ProviderConfig> = serde_json::from_str(&text).map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        for c in &cfgs {
            c.check()?;
        }
        Ok(cfgs)
    }

    pub fn get(&self, name: &str) -> Option<Arc<dyn ChatModel>> {
        self.models.get(name).cloned()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.models.contains_key(name)
    }

    pub fn names(&self) -> Vec<String> {
        self.models.keys().cloned().collect()
    }
}

/// SHA-256 hex of arbitrary bytes (request hashing).
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
