//! OpenAI-compatible HTTP backend.
//!
//! Instruct models are called through `/chat/completions` with a single user
//! message. Base models can use the same endpoint or the legacy
//! `/completions` endpoint, which takes a raw prompt. Credentials are read
//! from an environment variable named in the configuration.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    BackendError, Generation, GenerationBackend, GenerationRequest, Role, TokenLogprobs, TopLogprob,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum WireApi {
    #[default]
    Chat,
    Completions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpBackendConfig {
    /// Base URL up to and including the API version, e.g. `http://host:8000/v1`.
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable that holds the bearer token.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub api: WireApi,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_retries() -> u32 {
    3
}
fn default_backoff() -> u64 {
    500
}
fn default_timeout() -> u64 {
    120
}

impl HttpBackendConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            api_key_env: None,
            api: WireApi::Chat,
            max_retries: default_retries(),
            backoff_ms: default_backoff(),
            timeout_secs: default_timeout(),
        }
    }
}

pub struct ChatCompletionsBackend {
    role: Role,
    config: HttpBackendConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl ChatCompletionsBackend {
    pub fn new(role: Role, config: HttpBackendConfig) -> Result<Self, BackendError> {
        let api_key = match &config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                BackendError::Config(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(Self {
            role,
            config,
            api_key,
            client,
        })
    }

    fn url(&self) -> String {
        let base = self.config.base_url.trim_end_matches('/');
        match self.config.api {
            WireApi::Chat => format!("{base}/chat/completions"),
            WireApi::Completions => format!("{base}/completions"),
        }
    }

    pub fn request_body(&self, request: &GenerationRequest) -> Value {
        let p = &request.params;
        let mut body = match self.config.api {
            WireApi::Chat => json!({
                "model": self.config.model,
                "messages": [{"role": "user", "content": request.prompt}],
            }),
            WireApi::Completions => json!({
                "model": self.config.model,
                "prompt": request.prompt,
            }),
        };
        let obj = body.as_object_mut().expect("object literal");
        obj.insert("temperature".into(), json!(p.temperature));
        obj.insert("max_tokens".into(), json!(p.max_tokens));
        obj.insert("seed".into(), json!(p.seed));
        if !p.stop.is_empty() {
            obj.insert("stop".into(), json!(p.stop));
        }
        if let Some(k) = p.top_logprobs {
            match self.config.api {
                WireApi::Chat => {
                    obj.insert("logprobs".into(), json!(true));
                    obj.insert("top_logprobs".into(), json!(k));
                }
                WireApi::Completions => {
                    obj.insert("logprobs".into(), json!(k));
                }
            }
        }
        body
    }

    fn send_once(&self, body: &Value) -> Result<Value, BackendError> {
        let mut req = self.client.post(self.url()).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .text()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(BackendError::Status { status, body: text });
        }
        serde_json::from_str(&text).map_err(|e| BackendError::Malformed(e.to_string()))
    }
}

/// Extracts text and optional logprobs from a chat or completions response.
pub fn parse_response(api: WireApi, value: &Value) -> Result<Generation, BackendError> {
    let choice = value
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| BackendError::Malformed("missing choices[0]".into()))?;
    let text = match api {
        WireApi::Chat => choice.pointer("/message/content"),
        WireApi::Completions => choice.get("text"),
    }
    .and_then(Value::as_str)
    .ok_or_else(|| BackendError::Malformed("missing completion text".into()))?
    .to_string();

    let logprobs = match api {
        WireApi::Chat => choice
            .pointer("/logprobs/content")
            .and_then(Value::as_array)
            .map(|items| items.iter().map(parse_chat_token).collect::<Result<Vec<_>, _>>())
            .transpose()?,
        WireApi::Completions => choice
            .get("logprobs")
            .filter(|v| !v.is_null())
            .map(parse_completion_logprobs)
            .transpose()?,
    };
    Ok(Generation { text, logprobs })
}

fn malformed(what: &str) -> BackendError {
    BackendError::Malformed(format!("bad logprobs entry: {what}"))
}

fn parse_chat_token(item: &Value) -> Result<TokenLogprobs, BackendError> {
    let token = item.get("token").and_then(Value::as_str).ok_or_else(|| malformed("token"))?;
    let logprob = item.get("logprob").and_then(Value::as_f64).ok_or_else(|| malformed("logprob"))?;
    let top = item
        .get("top_logprobs")
        .and_then(Value::as_array)
        .map(|alts| {
            alts.iter()
                .map(|a| {
                    Ok(TopLogprob {
                        token: a.get("token").and_then(Value::as_str).ok_or_else(|| malformed("top token"))?.into(),
                        logprob: a.get("logprob").and_then(Value::as_f64).ok_or_else(|| malformed("top logprob"))?,
                    })
                })
                .collect::<Result<Vec<_>, BackendError>>()
        })
        .transpose()?
        .unwrap_or_default();
    Ok(TokenLogprobs {
        token: token.into(),
        logprob,
        top,
    })
}

fn parse_completion_logprobs(lp: &Value) -> Result<Vec<TokenLogprobs>, BackendError> {
    let tokens = lp.get("tokens").and_then(Value::as_array).ok_or_else(|| malformed("tokens"))?;
    let chosen = lp
        .get("token_logprobs")
        .and_then(Value::as_array)
        .ok_or_else(|| malformed("token_logprobs"))?;
    let tops = lp.get("top_logprobs").and_then(Value::as_array);
    tokens
        .iter()
        .zip(chosen)
        .enumerate()
        .map(|(i, (t, l))| {
            let mut top: Vec<TopLogprob> = tops
                .and_then(|t| t.get(i))
                .and_then(Value::as_object)
                .map(|m| {
                    m.iter()
                        .filter_map(|(k, v)| v.as_f64().map(|lp| TopLogprob { token: k.clone(), logprob: lp }))
                        .collect()
                })
                .unwrap_or_default();
            top.sort_by(|a, b| b.logprob.total_cmp(&a.logprob).then_with(|| a.token.cmp(&b.token)));
            Ok(TokenLogprobs {
                token: t.as_str().ok_or_else(|| malformed("token"))?.into(),
                logprob: l.as_f64().unwrap_or(f64::NEG_INFINITY),
                top,
            })
        })
        .collect()
}

impl GenerationBackend for ChatCompletionsBackend {
    fn role(&self) -> Role {
        self.role
    }

    fn generate(&self, request: &GenerationRequest) -> Result<Generation, BackendError> {
        let body = self.request_body(request);
        let mut attempt = 0;
        loop {
            match self.send_once(&body) {
                Ok(value) => return parse_response(self.config.api, &value),
                Err(e) if e.is_transient() && attempt < self.config.max_retries => {
                    let wait = self.config.backoff_ms.saturating_mul(1 << attempt.min(16));
                    log::warn!("request failed ({e}); retry {} in {wait} ms", attempt + 1);
                    std::thread::sleep(Duration::from_millis(wait));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn name(&self) -> String {
        format!("http-{}-{}", self.role.as_str(), self.config.model)
    }
}
