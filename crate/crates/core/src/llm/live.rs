use std::sync::Mutex;
use std::time::Duration;

use serde_json::{json, Value};

use super::{ChatBackend, ChatRequest, ChatResponse, LlmError, Temperature};

/// Base URL of an OpenAI-compatible API, e.g. `https://api.deepseek.com/v1`.
pub const ENV_API_BASE: &str = "AEGIS_API_BASE";
/// Bearer token for the API.
pub const ENV_API_KEY: &str = "AEGIS_API_KEY";

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub api_base: String,
    pub api_key: Option<String>,
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
    pub timeout: Duration,
}

impl HttpConfig {
    pub fn new(api_base: &str) -> Self {
        HttpConfig {
            api_base: api_base.trim_end_matches('/').to_string(),
            api_key: None,
            max_attempts: 5,
            initial_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(30),
            timeout: Duration::from_secs(300),
        }
    }

    /// Reads the endpoint and key from the environment.
    pub fn from_env() -> Result<Self, LlmError> {
        let base = std::env::var(ENV_API_BASE).map_err(|_| LlmError::Transport {
            attempts: 0,
            message: format!("{ENV_API_BASE} is not set"),
        })?;
        let mut cfg = HttpConfig::new(&base);
        cfg.api_key = std::env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty());
        Ok(cfg)
    }
}

/// One HTTP attempt, kept for diagnostics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Attempt {
    pub status: Option<u16>,
    pub error: Option<String>,
}

/// Posts to `<api_base>/chat/completions` with bounded exponential backoff
/// on 429 and 5xx responses.
pub struct HttpBackend {
    config: HttpConfig,
    agent: ureq::Agent,
    attempts: Mutex<Vec<Attempt>>,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(config.timeout).build();
        HttpBackend {
            config,
            agent,
            attempts: Mutex::new(Vec::new()),
        }
    }

    pub fn attempts(&self) -> Vec<Attempt> {
        self.attempts.lock().expect("attempt lock").clone()
    }

    fn body(request: &ChatRequest) -> Value {
        let mut body = json!({
            "model": request.model,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
        });
        if let Temperature::Fixed(t) = request.temperature {
            body["temperature"] = json!(t);
        }
        body
    }

    fn record(&self, status: Option<u16>, error: Option<String>) {
        tracing::info!(?status, ?error, "chat completion attempt");
        self.attempts
            .lock()
            .expect("attempt lock")
            .push(Attempt { status, error });
    }

    fn parse(request: &ChatRequest, value: &Value) -> Result<ChatResponse, String> {
        let text = value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or("response lacks choices[0].message.content")?;
        let usage = (
            value.pointer("/usage/prompt_tokens").and_then(Value::as_u64),
            value.pointer("/usage/completion_tokens").and_then(Value::as_u64),
        );
        Ok(match usage {
            (Some(i), Some(o)) => ChatResponse {
                text: text.to_string(),
                input_tokens: i,
                output_tokens: o,
                estimated: false,
            },
            _ => ChatResponse::estimated(request, text),
        })
    }
}

impl ChatBackend for HttpBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let url = format!("{}/chat/completions", self.config.api_base);
        let body = Self::body(request);
        let mut delay = self.config.initial_backoff;
        let mut last = String::new();
        for attempt in 1..=self.config.max_attempts {
            let mut req = self.agent.post(&url).set("Content-Type", "application/json");
            if let Some(key) = &self.config.api_key {
                req = req.set("Authorization", &format!("Bearer {key}"));
            }
            let retryable = match req.send_json(body.clone()) {
                Ok(resp) => {
                    let status = resp.status();
                    match resp.into_json::<Value>() {
                        Ok(v) => match Self::parse(request, &v) {
                            Ok(r) => {
                                self.record(Some(status), None);
                                return Ok(r);
                            }
                            Err(e) => {
                                self.record(Some(status), Some(e.clone()));
                                return Err(LlmError::Transport {
                                    attempts: attempt,
                                    message: e,
                                });
                            }
                        },
                        Err(e) => {
                            last = e.to_string();
                            self.record(Some(status), Some(last.clone()));
                            true
                        }
                    }
                }
                Err(ureq::Error::Status(code, resp)) => {
                    last = format!("HTTP {code}: {}", resp.into_string().unwrap_or_default());
                    self.record(Some(code), Some(last.clone()));
                    code == 429 || code >= 500
                }
                Err(e) => {
                    last = e.to_string();
                    self.record(None, Some(last.clone()));
                    true
                }
            };
            if !retryable {
                return Err(LlmError::Transport {
                    attempts: attempt,
                    message: last,
                });
            }
            if attempt < self.config.max_attempts {
                std::thread::sleep(delay);
                delay = (delay * 2).min(self.config.max_backoff);
            }
        }
        Err(LlmError::Transport {
            attempts: self.config.max_attempts,
            message: last,
        })
    }
}
