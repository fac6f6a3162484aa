//! Chat-completion transport with record/replay and token accounting.

mod cassette;
mod ledger;
mod live;
mod scripted;

use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

pub use cassette::{load_cassette, Cassette, CassetteEntry, RecordingBackend, ReplayBackend,
    CASSETTE_SCHEMA_VERSION};
pub use ledger::{StageTotals, UsageEntry, UsageLedger};
pub use live::{Attempt, HttpBackend, HttpConfig, ENV_API_BASE, ENV_API_KEY};
pub use scripted::ScriptedBackend;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    Discovery,
    Expansion,
    Verification,
    Audit,
}

impl Stage {
    pub const ALL: [Stage; 4] = [
        Stage::Discovery,
        Stage::Expansion,
        Stage::Verification,
        Stage::Audit,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Discovery => "Discovery",
            Stage::Expansion => "Expansion",
            Stage::Verification => "Verification",
            Stage::Audit => "Audit",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Sampling temperature; `ProviderDefault` omits the field from live requests.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Temperature {
    #[default]
    ProviderDefault,
    Fixed(f64),
}

impl Temperature {
    fn key(self) -> String {
        match self {
            Temperature::ProviderDefault => "default".into(),
            Temperature::Fixed(t) => format!("{t}"),
        }
    }
}

impl fmt::Display for Temperature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

impl Serialize for Temperature {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Temperature::ProviderDefault => s.serialize_str("default"),
            Temperature::Fixed(t) => s.serialize_f64(*t),
        }
    }
}

impl<'de> Deserialize<'de> for Temperature {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(t) if t >= 0.0 => Ok(Temperature::Fixed(t)),
            Raw::Num(t) => Err(serde::de::Error::custom(format!("negative temperature {t}"))),
            Raw::Text(s) if s == "default" => Ok(Temperature::ProviderDefault),
            Raw::Text(s) => Err(serde::de::Error::custom(format!("bad temperature `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system: String,
    pub user: String,
    pub temperature: Temperature,
    pub model: String,
    pub stage: Stage,
}

impl ChatRequest {
    /// Content hash over system, user, temperature and model.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.system.as_bytes());
        h.update([0]);
        h.update(self.user.as_bytes());
        h.update([0]);
        h.update(self.temperature.key().as_bytes());
        h.update([0]);
        h.update(self.model.as_bytes());
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub estimated: bool,
}

impl ChatResponse {
    /// A response whose usage is estimated from byte lengths.
    pub fn estimated(request: &ChatRequest, text: &str) -> Self {
        ChatResponse {
            text: text.to_string(),
            input_tokens: estimate_tokens(request.system.len() + request.user.len()),
            output_tokens: estimate_tokens(text.len()),
            estimated: true,
        }
    }
}

/// `ceil(bytes / 4)`.
pub fn estimate_tokens(bytes: usize) -> u64 {
    (bytes as u64).div_ceil(4)
}

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("transport failed after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("no recorded response for request hash {hash}")]
    ReplayMiss { hash: String },
    #[error("cassette schema violation: {0}")]
    SchemaViolation(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("scripted backend exhausted at request {0}")]
    ScriptExhausted(usize),
}

/// A blocking chat-completion provider, shareable across threads.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError>;
}

impl<B: ChatBackend + ?Sized> ChatBackend for Arc<B> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        (**self).complete(request)
    }
}

impl<B: ChatBackend + ?Sized> ChatBackend for &B {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        (**self).complete(request)
    }
}

pub fn complete(request: &ChatRequest, backend: &dyn ChatBackend) -> Result<ChatResponse, LlmError> {
    backend.complete(request)
}

/// Per-stage sampling temperatures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Temperatures {
    pub discovery: Temperature,
    pub expansion: Temperature,
    pub verification: Temperature,
    pub audit: Temperature,
}

impl Default for Temperatures {
    fn default() -> Self {
        Temperatures {
            discovery: Temperature::ProviderDefault,
            expansion: Temperature::ProviderDefault,
            verification: Temperature::ProviderDefault,
            audit: Temperature::Fixed(0.0),
        }
    }
}

impl Temperatures {
    pub fn for_stage(&self, stage: Stage) -> Temperature {
        match stage {
            Stage::Discovery => self.discovery,
            Stage::Expansion => self.expansion,
            Stage::Verification => self.verification,
            Stage::Audit => self.audit,
        }
    }
}

/// A backend bound to a model, temperature table, sample id, and ledger.
#[derive(Clone)]
pub struct LlmClient {
    backend: Arc<dyn ChatBackend>,
    ledger: Arc<UsageLedger>,
    pub model: String,
    pub temperatures: Temperatures,
    pub sample_id: String,
}

impl LlmClient {
    pub fn new(backend: Arc<dyn ChatBackend>, model: &str) -> Self {
        LlmClient {
            backend,
            ledger: Arc::new(UsageLedger::new()),
            model: model.to_string(),
            temperatures: Temperatures::default(),
            sample_id: String::new(),
        }
    }

    pub fn with_ledger(mut self, ledger: Arc<UsageLedger>) -> Self {
        self.ledger = ledger;
        self
    }

    pub fn with_temperatures(mut self, temperatures: Temperatures) -> Self {
        self.temperatures = temperatures;
        self
    }

    /// A copy that attributes usage to `sample_id`.
    pub fn for_sample(&self, sample_id: &str) -> Self {
        let mut c = self.clone();
        c.sample_id = sample_id.to_string();
        c
    }

    pub fn ledger(&self) -> &Arc<UsageLedger> {
        &self.ledger
    }

    pub fn request(&self, stage: Stage, system: &str, user: &str) -> ChatRequest {
        ChatRequest {
            system: system.to_string(),
            user: user.to_string(),
            temperature: self.temperatures.for_stage(stage),
            model: self.model.clone(),
            stage,
        }
    }

    /// Sends one request and accrues its usage.
    pub fn send(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let start = Instant::now();
        let response = self.backend.complete(request)?;
        let wall_ms = start.elapsed().as_millis() as u64;
        self.ledger
            .accrue(&self.sample_id, request.stage, &response, wall_ms);
        Ok(response)
    }
}
