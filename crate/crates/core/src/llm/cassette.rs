use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ChatBackend, ChatRequest, ChatResponse, LlmError};

pub const CASSETTE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub hash: String,
    pub request: ChatRequest,
    pub response: ChatResponse,
}

impl CassetteEntry {
    pub fn new(request: ChatRequest, response: ChatResponse) -> Self {
        CassetteEntry {
            hash: request.hash(),
            request,
            response,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cassette {
    pub schema_version: u32,
    pub entries: Vec<CassetteEntry>,
}

impl Default for Cassette {
    fn default() -> Self {
        Cassette {
            schema_version: CASSETTE_SCHEMA_VERSION,
            entries: Vec::new(),
        }
    }
}

impl Cassette {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("cassette serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, LlmError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| LlmError::SchemaViolation(e.to_string()))?;
        match value.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == CASSETTE_SCHEMA_VERSION as u64 => {}
            Some(v) => {
                return Err(LlmError::SchemaViolation(format!(
                    "unsupported schema_version {v}"
                )))
            }
            None => return Err(LlmError::SchemaViolation("missing schema_version".into())),
        }
        let cassette: Cassette =
            serde_json::from_value(value).map_err(|e| LlmError::SchemaViolation(e.to_string()))?;
        for e in &cassette.entries {
            if e.hash != e.request.hash() {
                return Err(LlmError::SchemaViolation(format!(
                    "entry hash {} does not match its request",
                    e.hash
                )));
            }
        }
        Ok(cassette)
    }

    pub fn save(&self, path: &Path) -> Result<(), LlmError> {
        std::fs::write(path, self.to_json()).map_err(|source| LlmError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path).map_err(|source| LlmError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }
}

/// Serves recorded responses by request hash. Entries sharing a hash are
/// returned in recorded order; the last one repeats once the rest are used.
#[derive(Debug)]
pub struct ReplayBackend {
    responses: HashMap<String, Vec<ChatResponse>>,
    cursor: Mutex<HashMap<String, usize>>,
}

impl ReplayBackend {
    pub fn new(cassette: &Cassette) -> Self {
        let mut responses: HashMap<String, Vec<ChatResponse>> = HashMap::new();
        for e in &cassette.entries {
            responses
                .entry(e.hash.clone())
                .or_default()
                .push(e.response.clone());
        }
        ReplayBackend {
            responses,
            cursor: Mutex::new(HashMap::new()),
        }
    }

    pub fn contains(&self, hash: &str) -> bool {
        self.responses.contains_key(hash)
    }
}

impl ChatBackend for ReplayBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let hash = request.hash();
        let list = self
            .responses
            .get(&hash)
            .ok_or_else(|| LlmError::ReplayMiss { hash: hash.clone() })?;
        let mut cursor = self.cursor.lock().expect("cursor lock");
        let i = cursor.entry(hash).or_insert(0);
        let response = list[(*i).min(list.len() - 1)].clone();
        *i += 1;
        Ok(response)
    }
}

pub fn load_cassette(path: &Path) -> Result<ReplayBackend, LlmError> {
    Ok(ReplayBackend::new(&Cassette::load(path)?))
}

/// Wraps a backend and keeps every exchange for later saving.
pub struct RecordingBackend<B> {
    inner: B,
    entries: Mutex<Vec<CassetteEntry>>,
}

impl<B: ChatBackend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        RecordingBackend {
            inner,
            entries: Mutex::new(Vec::new()),
        }
    }

    pub fn cassette(&self) -> Cassette {
        Cassette {
            schema_version: CASSETTE_SCHEMA_VERSION,
            entries: self.entries.lock().expect("recording lock").clone(),
        }
    }
}

impl<B: ChatBackend> ChatBackend for RecordingBackend<B> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let response = self.inner.complete(request)?;
        self.entries
            .lock()
            .expect("recording lock")
            .push(CassetteEntry::new(request.clone(), response.clone()));
        Ok(response)
    }
}
