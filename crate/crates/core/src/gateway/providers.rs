//! HTTPS adapters for hosted chat-completion APIs.
//!
//! Each adapter is split into a pure request builder and a pure response
//! classifier so the wire shapes can be tested without a network. Keys are
//! read from `AGENTCROWD_API_KEY_<PROVIDER>`.

use std::time::Duration;

use serde_json::{json, Value};

use super::{Backend, BackendError, ChatRequest, Completion, GatewayError, Role, Usage};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provider {
    OpenAi,
    Anthropic,
    Gemini,
}

impl Provider {
    pub fn parse(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "openai" => Some(Self::OpenAi),
            "anthropic" => Some(Self::Anthropic),
            "gemini" => Some(Self::Gemini),
            _ => None,
        }
    }

    pub fn env_var(self) -> &'static str {
        match self {
            Self::OpenAi => "AGENTCROWD_API_KEY_OPENAI",
            Self::Anthropic => "AGENTCROWD_API_KEY_ANTHROPIC",
            Self::Gemini => "AGENTCROWD_API_KEY_GEMINI",
        }
    }

    fn default_base(self) -> &'static str {
        match self {
            Self::OpenAi => "https://api.openai.com/v1",
            Self::Anthropic => "https://api.anthropic.com/v1",
            Self::Gemini => "https://generativelanguage.googleapis.com/v1beta",
        }
    }
}

/// Request body in the provider's native shape.
pub fn request_body(provider: Provider, model: &str, req: &ChatRequest) -> Value {
    match provider {
        Provider::OpenAi => {
            let mut messages = vec![json!({"role": "system", "content": req.system_prompt})];
            messages.extend(
                req.messages
                    .iter()
                    .map(|m| json!({"role": role_name(m.role, "assistant"), "content": m.text})),
            );
            json!({
                "model": model,
                "messages": messages,
                "temperature": req.temperature,
                "max_tokens": req.max_output,
            })
        }
        Provider::Anthropic => json!({
            "model": model,
            "system": req.system_prompt,
            "messages": req.messages.iter().map(|m| {
                json!({"role": role_name(m.role, "assistant"), "content": m.text})
            }).collect::<Vec<_>>(),
            "temperature": req.temperature,
            "max_tokens": req.max_output,
        }),
        Provider::Gemini => json!({
            "systemInstruction": {"parts": [{"text": req.system_prompt}]},
            "contents": req.messages.iter().map(|m| {
                json!({"role": role_name(m.role, "model"), "parts": [{"text": m.text}]})
            }).collect::<Vec<_>>(),
            "generationConfig": {
                "temperature": req.temperature,
                "maxOutputTokens": req.max_output,
            },
        }),
    }
}

fn role_name(role: Role, assistant: &'static str) -> &'static str {
    match role {
        Role::User => "user",
        Role::Assistant => assistant,
    }
}

/// Map an HTTP status and body to a completion or a classified failure.
/// Rate limits, timeouts and server errors are transport failures; other
/// client errors and safety stops are content refusals.
pub fn parse_response(provider: Provider, status: u16, body: &str) -> Result<Completion, BackendError> {
    let parsed: Option<Value> = serde_json::from_str(body).ok();
    if status != 200 {
        let msg = parsed
            .as_ref()
            .and_then(|v| v.pointer("/error/message").and_then(Value::as_str))
            .map(str::to_string)
            .unwrap_or_else(|| body.chars().take(200).collect());
        return Err(if status == 408 || status == 429 || status >= 500 {
            BackendError::Transport(format!("HTTP {status}: {msg}"))
        } else {
            BackendError::Content(format!("HTTP {status}: {msg}"))
        });
    }
    let v = parsed.ok_or_else(|| BackendError::Transport("unparseable response body".into()))?;
    let tokens = |ptr: &str| v.pointer(ptr).and_then(Value::as_u64).unwrap_or(0);
    match provider {
        Provider::OpenAi => {
            let choice = v
                .pointer("/choices/0")
                .ok_or_else(|| BackendError::Transport("response without choices".into()))?;
            if let Some(refusal) = choice.pointer("/message/refusal").and_then(Value::as_str) {
                return Err(BackendError::Content(refusal.to_string()));
            }
            if choice.get("finish_reason").and_then(Value::as_str) == Some("content_filter") {
                return Err(BackendError::Content("content_filter".into()));
            }
            let text = choice.pointer("/message/content").and_then(Value::as_str).unwrap_or("");
            Ok(Completion {
                text: text.to_string(),
                usage: Usage {
                    input_tokens: tokens("/usage/prompt_tokens"),
                    output_tokens: tokens("/usage/completion_tokens"),
                },
            })
        }
        Provider::Anthropic => {
            if v.get("stop_reason").and_then(Value::as_str) == Some("refusal") {
                return Err(BackendError::Content("refusal".into()));
            }
            let text: String = v
                .get("content")
                .and_then(Value::as_array)
                .map(|blocks| {
                    blocks
                        .iter()
                        .filter(|b| b.get("type").and_then(Value::as_str) == Some("text"))
                        .filter_map(|b| b.get("text").and_then(Value::as_str))
                        .collect()
                })
                .unwrap_or_default();
            Ok(Completion {
                text,
                usage: Usage {
                    input_tokens: tokens("/usage/input_tokens"),
                    output_tokens: tokens("/usage/output_tokens"),
                },
            })
        }
        Provider::Gemini => {
            if let Some(reason) = v.pointer("/promptFeedback/blockReason").and_then(Value::as_str) {
                return Err(BackendError::Content(reason.to_string()));
            }
            let finish = v.pointer("/candidates/0/finishReason").and_then(Value::as_str);
            if let Some(r @ ("SAFETY" | "RECITATION" | "BLOCKLIST" | "PROHIBITED_CONTENT")) = finish {
                return Err(BackendError::Content(r.to_string()));
            }
            let text: String = v
                .pointer("/candidates/0/content/parts")
                .and_then(Value::as_array)
                .map(|parts| {
                    parts
                        .iter()
                        .filter_map(|p| p.get("text").and_then(Value::as_str))
                        .collect()
                })
                .unwrap_or_default();
            Ok(Completion {
                text,
                usage: Usage {
                    input_tokens: tokens("/usageMetadata/promptTokenCount"),
                    output_tokens: tokens("/usageMetadata/candidatesTokenCount"),
                },
            })
        }
    }
}

pub struct HttpBackend {
    provider: Provider,
    api_key: String,
    base_url: String,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn from_env(provider: Provider, base_url: Option<String>) -> Result<Self, GatewayError> {
        let api_key = std::env::var(provider.env_var())
            .map_err(|_| GatewayError::Config(format!("{} is not set", provider.env_var())))?;
        Ok(Self::new(provider, api_key, base_url))
    }

    pub fn new(provider: Provider, api_key: String, base_url: Option<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(180)))
            .build()
            .into();
        Self {
            provider,
            api_key,
            base_url: base_url.unwrap_or_else(|| provider.default_base().to_string()),
            agent,
        }
    }

    fn endpoint(&self, model: &str) -> String {
        let base = self.base_url.trim_end_matches('/');
        match self.provider {
            Provider::OpenAi => format!("{base}/chat/completions"),
            Provider::Anthropic => format!("{base}/messages"),
            Provider::Gemini => format!("{base}/models/{model}:generateContent"),
        }
    }
}

impl Backend for HttpBackend {
    fn send(&self, model: &str, request: &ChatRequest) -> Result<Completion, BackendError> {
        let body = request_body(self.provider, model, request);
        let mut call = self
            .agent
            .post(&self.endpoint(model))
            .header("content-type", "application/json");
        call = match self.provider {
            Provider::OpenAi => call.header("authorization", &format!("Bearer {}", self.api_key)),
            Provider::Anthropic => call
                .header("x-api-key", &self.api_key)
                .header("anthropic-version", "2023-06-01"),
            Provider::Gemini => call.header("x-goog-api-key", &self.api_key),
        };
        let mut resp = call
            .send_json(&body)
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        parse_response(self.provider, status, &text)
    }
}
