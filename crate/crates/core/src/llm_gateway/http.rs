//! HTTPS chat-completion transports for the supported provider APIs.
//!
//! API keys come from `<PROVIDER_ID>_API_KEY` and are read per request; they
//! never enter configs or run artifacts.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ChatRequest, MessagePlacement, Transport, TransportFailure};

const ANTHROPIC_VERSION: &str = "2023-06-01";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApiFlavor {
    /// `/chat/completions` style; also used by Together, DeepSeek and xAI.
    OpenAi,
    Anthropic,
    Gemini,
}

impl ApiFlavor {
    pub fn default_base_url(self) -> &'static str {
        match self {
            ApiFlavor::OpenAi => "https://api.openai.com/v1",
            ApiFlavor::Anthropic => "https://api.anthropic.com",
            ApiFlavor::Gemini => "https://generativelanguage.googleapis.com",
        }
    }
}

pub fn api_key_env(provider_id: &str) -> String {
    let id: String = provider_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_uppercase()
            } else {
                '_'
            }
        })
        .collect();
    format!("{id}_API_KEY")
}

/// JSON body sent for `request` under the given API flavor.
pub fn request_body(flavor: ApiFlavor, request: &ChatRequest) -> Value {
    match flavor {
        ApiFlavor::OpenAi => {
            let role = match request.placement {
                MessagePlacement::User => "user",
                MessagePlacement::System => "system",
            };
            let mut body = json!({
                "model": request.api_model,
                "messages": [{"role": role, "content": request.prompt}],
                "temperature": request.temperature,
                "max_tokens": request.max_output_tokens,
            });
            if let Some(p) = request.top_p {
                body["top_p"] = json!(p);
            }
            body
        }
        ApiFlavor::Anthropic => {
            let mut body = json!({
                "model": request.api_model,
                "max_tokens": request.max_output_tokens,
                "temperature": request.temperature,
            });
            match request.placement {
                MessagePlacement::User => {
                    body["messages"] = json!([{"role": "user", "content": request.prompt}]);
                }
                MessagePlacement::System => {
                    body["system"] = json!(request.prompt);
                    body["messages"] = json!([{"role": "user", "content": "Generate the NFRs as instructed."}]);
                }
            }
            if let Some(p) = request.top_p {
                body["top_p"] = json!(p);
            }
            body
        }
        ApiFlavor::Gemini => {
            let mut config = json!({
                "temperature": request.temperature,
                "maxOutputTokens": request.max_output_tokens,
            });
            if let Some(p) = request.top_p {
                config["topP"] = json!(p);
            }
            let mut body = json!({ "generationConfig": config });
            match request.placement {
                MessagePlacement::User => {
                    body["contents"] = json!([{"role": "user", "parts": [{"text": request.prompt}]}]);
                }
                MessagePlacement::System => {
                    body["systemInstruction"] = json!({"parts": [{"text": request.prompt}]});
                    body["contents"] =
                        json!([{"role": "user", "parts": [{"text": "Generate the NFRs as instructed."}]}]);
                }
            }
            body
        }
    }
}

/// Pulls the generated text out of a provider response body.
pub fn extract_text(flavor: ApiFlavor, body: &Value) -> Option<String> {
    let join = |parts: &Vec<Value>, key: &str| {
        let texts: Vec<&str> = parts.iter().filter_map(|p| p.get(key)?.as_str()).collect();
        (!texts.is_empty()).then(|| texts.concat())
    };
    match flavor {
        ApiFlavor::OpenAi => body.pointer("/choices/0/message/content")?.as_str().map(str::to_string),
        ApiFlavor::Anthropic => join(body.get("content")?.as_array()?, "text"),
        ApiFlavor::Gemini => join(body.pointer("/candidates/0/content/parts")?.as_array()?, "text"),
    }
}

pub struct HttpTransport {
    provider_id: String,
    flavor: ApiFlavor,
    base_url: String,
}

impl HttpTransport {
    pub fn new(provider_id: &str, flavor: ApiFlavor, base_url: Option<String>) -> Self {
        HttpTransport {
            provider_id: provider_id.to_string(),
            flavor,
            base_url: base_url
                .unwrap_or_else(|| flavor.default_base_url().to_string())
                .trim_end_matches('/')
                .to_string(),
        }
    }

    pub fn endpoint(&self, request: &ChatRequest) -> String {
        match self.flavor {
            ApiFlavor::OpenAi => format!("{}/chat/completions", self.base_url),
            ApiFlavor::Anthropic => format!("{}/v1/messages", self.base_url),
            ApiFlavor::Gemini => format!("{}/v1beta/models/{}:generateContent", self.base_url, request.api_model),
        }
    }
}

impl Transport for HttpTransport {
    fn send(&self, request: &ChatRequest) -> Result<String, TransportFailure> {
        let env = api_key_env(&self.provider_id);
        let key = std::env::var(&env)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| TransportFailure::Auth(format!("environment variable {env} is not set")))?;

        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(request.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        let mut req = agent
            .post(&self.endpoint(request))
            .header("content-type", "application/json");
        req = match self.flavor {
            ApiFlavor::OpenAi => req.header("authorization", &format!("Bearer {key}")),
            ApiFlavor::Anthropic => req
                .header("x-api-key", &key)
                .header("anthropic-version", ANTHROPIC_VERSION),
            ApiFlavor::Gemini => req.header("x-goog-api-key", &key),
        };

        let mut response = req.send_json(request_body(self.flavor, request)).map_err(|e| match e {
            ureq::Error::Timeout(_) => TransportFailure::Timeout,
            other => TransportFailure::Network(other.to_string()),
        })?;
        let status = response.status().as_u16();
        let text = response.body_mut().read_to_string().map_err(|e| match e {
            ureq::Error::Timeout(_) => TransportFailure::Timeout,
            other => TransportFailure::Network(other.to_string()),
        })?;
        if !(200..300).contains(&status) {
            let body: String = text.chars().take(500).collect();
            return Err(match status {
                401 | 403 => TransportFailure::Auth(format!("HTTP {status}: {body}")),
                _ => TransportFailure::Status { code: status, body },
            });
        }
        let json: Value =
            serde_json::from_str(&text).map_err(|e| TransportFailure::Network(format!("response is not JSON: {e}")))?;
        extract_text(self.flavor, &json).ok_or(TransportFailure::EmptyResponse)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm_gateway::{reference_models, ModelConfig};

    #[test]
    fn temperature_passes_through_every_flavor() {
        for model in reference_models() {
            let req = ChatRequest::new(&model, "prompt", &[]);
            for flavor in [ApiFlavor::OpenAi, ApiFlavor::Anthropic, ApiFlavor::Gemini] {
                let body = request_body(flavor, &req);
                let text = serde_json::to_string(&body).unwrap();
                assert!(text.contains("\"temperature\":0.4"), "{flavor:?}: {text}");
                assert!(text.contains("4096"));
            }
        }
    }

    #[test]
    fn openai_body_shape() {
        let mut cfg = ModelConfig::new("deepSeek-V3", "deepseek", 0.4);
        cfg.api_model = Some("deepseek-chat".into());
        cfg.top_p = Some(0.9);
        let body = request_body(ApiFlavor::OpenAi, &ChatRequest::new(&cfg, "hi", &[]));
        assert_eq!(body["model"], "deepseek-chat");
        assert_eq!(body["messages"][0]["role"], "user");
        assert_eq!(body["messages"][0]["content"], "hi");
        assert_eq!(body["top_p"], 0.9);
    }

    #[test]
    fn system_placement() {
        let mut cfg = ModelConfig::new("c", "anthropic", 0.4);
        cfg.placement = MessagePlacement::System;
        let req = ChatRequest::new(&cfg, "instructions", &[]);
        assert_eq!(request_body(ApiFlavor::Anthropic, &req)["system"], "instructions");
        assert_eq!(
            request_body(ApiFlavor::Gemini, &req)["systemInstruction"]["parts"][0]["text"],
            "instructions"
        );
        assert_eq!(request_body(ApiFlavor::OpenAi, &req)["messages"][0]["role"], "system");
    }

    #[test]
    fn extracts_text_from_each_flavor() {
        let openai = json!({"choices": [{"message": {"content": "a"}}]});
        let anthropic = json!({"content": [{"type": "text", "text": "b"}, {"type": "text", "text": "c"}]});
        let gemini = json!({"candidates": [{"content": {"parts": [{"text": "d"}]}}]});
        assert_eq!(extract_text(ApiFlavor::OpenAi, &openai).as_deref(), Some("a"));
        assert_eq!(extract_text(ApiFlavor::Anthropic, &anthropic).as_deref(), Some("bc"));
        assert_eq!(extract_text(ApiFlavor::Gemini, &gemini).as_deref(), Some("d"));
        assert_eq!(extract_text(ApiFlavor::Gemini, &json!({})), None);
    }

    #[test]
    fn env_names_and_endpoints() {
        assert_eq!(api_key_env("openai"), "OPENAI_API_KEY");
        assert_eq!(api_key_env("x-ai"), "X_AI_API_KEY");
        let t = HttpTransport::new("gemini", ApiFlavor::Gemini, Some("http://h/".into()));
        let req = ChatRequest::new(&ModelConfig::new("gemini-1.5-pro", "gemini", 0.4), "p", &[]);
        assert_eq!(
            t.endpoint(&req),
            "http://h/v1beta/models/gemini-1.5-pro:generateContent"
        );
    }

    #[test]
    fn missing_key_is_a_credential_failure() {
        let t = HttpTransport::new(
            "nfrgen-test-missing",
            ApiFlavor::OpenAi,
            Some("http://127.0.0.1:9".into()),
        );
        let req = ChatRequest::new(&ModelConfig::new("m", "nfrgen-test-missing", 0.4), "p", &[]);
        assert!(matches!(t.send(&req), Err(TransportFailure::Auth(_))));
    }
}
