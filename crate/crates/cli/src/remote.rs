//! HTTP chat adapters for the three wire dialects the roster can use.
//!
//! All three adapters share the same failure taxonomy: 401/403 map to
//! `Auth` (never retried), 429 to `RateLimited`, 5xx and socket errors to
//! `Transport` (both retried by the gateway), anything else the server says
//! and every malformed body to `Protocol`.

use labelcrew_core::provider::{
    CallContext, ChatProvider, ChatRequest, ProviderError, ProviderReply, Role, TokenUsage,
};
use serde_json::{json, Value};
use std::time::Duration;

fn http_agent() -> ureq::Agent {
    ureq::AgentBuilder::new()
        .timeout(Duration::from_secs(120))
        .build()
}

fn classify(provider_id: &str, err: ureq::Error) -> (ProviderError, Option<ureq::Response>) {
    match err {
        ureq::Error::Status(code, resp) => {
            let detail = format!("HTTP {code}");
            let mapped = match code {
                401 | 403 => ProviderError::Auth { provider_id: provider_id.into(), detail },
                429 => ProviderError::RateLimited { provider_id: provider_id.into(), detail },
                500..=599 => ProviderError::Transport { provider_id: provider_id.into(), detail },
                _ => ProviderError::Protocol { provider_id: provider_id.into(), detail },
            };
            (mapped, Some(resp))
        }
        ureq::Error::Transport(t) => (
            ProviderError::Transport { provider_id: provider_id.into(), detail: t.to_string() },
            None,
        ),
    }
}

fn post_json(
    agent: &ureq::Agent,
    provider_id: &str,
    url: &str,
    headers: &[(&str, &str)],
    body: Value,
) -> Result<Value, ProviderError> {
    let mut req = agent.post(url);
    for (k, v) in headers {
        req = req.set(k, v);
    }
    let resp = req.send_json(body).map_err(|e| classify(provider_id, e).0)?;
    resp.into_json::<Value>().map_err(|e| ProviderError::Protocol {
        provider_id: provider_id.into(),
        detail: format!("body is not JSON: {e}"),
    })
}

fn require_str<'v>(v: &'v Value, path: &str, provider_id: &str) -> Result<&'v str, ProviderError> {
    v.as_str().ok_or_else(|| ProviderError::Protocol {
        provider_id: provider_id.into(),
        detail: format!("missing or non-string field {path}"),
    })
}

fn u64_at(v: &Value, pointer: &str) -> Option<u64> {
    v.pointer(pointer).and_then(Value::as_u64)
}

/// `POST {base}/chat/completions` with bearer auth.
pub struct OpenAiProvider {
    provider_id: String,
    base_url: String,
    api_key: String,
    agent: ureq::Agent,
}

impl OpenAiProvider {
    pub fn new(provider_id: &str, base_url: &str, api_key: &str) -> Self {
        Self {
            provider_id: provider_id.into(),
            base_url: base_url.trim_end_matches('/').into(),
            api_key: api_key.into(),
            agent: http_agent(),
        }
    }
}

impl ChatProvider for OpenAiProvider {
    fn complete(&self, req: &ChatRequest, _ctx: &CallContext) -> Result<ProviderReply, ProviderError> {
        let messages: Vec<Value> = req
            .messages
            .iter()
            .map(|m| {
                let role = match m.role {
                    Role::System => "system",
                    Role::User => "user",
                    Role::Assistant => "assistant",
                };
                json!({"role": role, "content": m.content})
            })
            .collect();
        let body = json!({
            "model": req.model_id,
            "messages": messages,
            "temperature": req.temperature,
            "max_tokens": req.max_output_tokens,
        });
        let auth = format!("Bearer {}", self.api_key);
        let url = format!("{}/chat/completions", self.base_url);
        let v = post_json(&self.agent, &self.provider_id, &url, &[("authorization", &auth)], body)?;
        let text = require_str(
            v.pointer("/choices/0/message/content").unwrap_or(&Value::Null),
            "choices[0].message.content",
            &self.provider_id,
        )?
        .to_string();
        let usage = TokenUsage {
            input_tokens: u64_at(&v, "/usage/prompt_tokens").unwrap_or(0),
            output_tokens: u64_at(&v, "/usage/completion_tokens").unwrap_or(0),
        };
        Ok(ProviderReply { text, usage })
    }
}

/// `POST {base}/v1/messages` with `x-api-key` auth. The system message is
/// hoisted into the top-level `system` field.
pub struct AnthropicProvider {
    provider_id: String,
    base_url: String,
    api_key: String,
    agent: ureq::Agent,
}

impl AnthropicProvider {
    pub fn new(provider_id: &str, base_url: &str, api_key: &str) -> Self {
        Self {
            provider_id: provider_id.into(),
            base_url: base_url.trim_end_matches('/').into(),
            api_key: api_key.into(),
            agent: http_agent(),
        }
    }
}

impl ChatProvider for AnthropicProvider {
    fn complete(&self, req: &ChatRequest, _ctx: &CallContext) -> Result<ProviderReply, ProviderError> {
        let mut system = String::new();
        let mut messages = Vec::new();
        for m in &req.messages {
            match m.role {
                Role::System => {
                    if !system.is_empty() {
                        system.push('\n');
                    }
                    system.push_str(&m.content);
                }
                Role::User => messages.push(json!({"role": "user", "content": m.content})),
                Role::Assistant => {
                    messages.push(json!({"role": "assistant", "content": m.content}))
                }
            }
        }
        let mut body = json!({
            "model": req.model_id,
            "max_tokens": req.max_output_tokens,
            "temperature": req.temperature,
            "messages": messages,
        });
        if !system.is_empty() {
            body["system"] = Value::String(system);
        }
        let url = format!("{}/v1/messages", self.base_url);
        let headers = [
            ("x-api-key", self.api_key.as_str()),
            ("anthropic-version", "2023-06-01"),
        ];
        let v = post_json(&self.agent, &self.provider_id, &url, &headers, body)?;
        let text = require_str(
            v.pointer("/content/0/text").unwrap_or(&Value::Null),
            "content[0].text",
            &self.provider_id,
        )?
        .to_string();
        let usage = TokenUsage {
            input_tokens: u64_at(&v, "/usage/input_tokens").unwrap_or(0),
            output_tokens: u64_at(&v, "/usage/output_tokens").unwrap_or(0),
        };
        Ok(ProviderReply { text, usage })
    }
}

/// `POST {base}/v1beta/models/{model}:generateContent` with the key in a
/// header. System messages ride in `system_instruction`.
pub struct GoogleProvider {
    provider_id: String,
    base_url: String,
    api_key: String,
    agent: ureq::Agent,
}

impl GoogleProvider {
    pub fn new(provider_id: &str, base_url: &str, api_key: &str) -> Self {
        Self {
            provider_id: provider_id.into(),
            base_url: base_url.trim_end_matches('/').into(),
            api_key: api_key.into(),
            agent: http_agent(),
        }
    }
}

impl ChatProvider for GoogleProvider {
    fn complete(&self, req: &ChatRequest, _ctx: &CallContext) -> Result<ProviderReply, ProviderError> {
        let mut system_parts = Vec::new();
        let mut contents = Vec::new();
        for m in &req.messages {
            match m.role {
                Role::System => system_parts.push(json!({"text": m.content})),
                Role::User => {
                    contents.push(json!({"role": "user", "parts": [{"text": m.content}]}))
                }
                Role::Assistant => {
                    contents.push(json!({"role": "model", "parts": [{"text": m.content}]}))
                }
            }
        }
        let mut body = json!({
            "contents": contents,
            "generationConfig": {
                "temperature": req.temperature,
                "maxOutputTokens": req.max_output_tokens,
            },
        });
        if !system_parts.is_empty() {
            body["system_instruction"] = json!({"parts": system_parts});
        }
        let url = format!(
            "{}/v1beta/models/{}:generateContent",
            self.base_url, req.model_id
        );
        let v = post_json(
            &self.agent,
            &self.provider_id,
            &url,
            &[("x-goog-api-key", self.api_key.as_str())],
            body,
        )?;
        let parts = v
            .pointer("/candidates/0/content/parts")
            .and_then(Value::as_array)
            .ok_or_else(|| ProviderError::Protocol {
                provider_id: self.provider_id.clone(),
                detail: "missing candidates[0].content.parts".into(),
            })?;
        let text: String = parts
            .iter()
            .filter_map(|p| p.get("text").and_then(Value::as_str))
            .collect::<Vec<_>>()
            .join("");
        if text.is_empty() {
            return Err(ProviderError::Protocol {
                provider_id: self.provider_id.clone(),
                detail: "candidate has no text parts".into(),
            });
        }
        let usage = TokenUsage {
            input_tokens: u64_at(&v, "/usageMetadata/promptTokenCount").unwrap_or(0),
            output_tokens: u64_at(&v, "/usageMetadata/candidatesTokenCount").unwrap_or(0),
        };
        Ok(ProviderReply { text, usage })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use labelcrew_core::model::MethodName;
    use labelcrew_core::prompt::TemplateId;
    use labelcrew_core::provider::ChatMessage;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::thread;

    /// Tiny single-request HTTP server: returns the canned status/body and
    /// hands back what the client sent.
    fn one_shot_server(status: u16, body: &'static str) -> (String, thread::JoinHandle<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut request = String::new();
            let mut content_length = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(rest) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    content_length = rest.trim().parse().unwrap();
                }
                request.push_str(&line);
                if line == "\r\n" {
                    break;
                }
            }
            let mut payload = vec![0u8; content_length];
            reader.read_exact(&mut payload).unwrap();
            request.push_str(std::str::from_utf8(&payload).unwrap());
            let mut stream = reader.into_inner();
            let reply = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
            request
        });
        (format!("http://{addr}"), handle)
    }

    fn request() -> ChatRequest {
        ChatRequest {
            provider_id: "api".into(),
            model_id: "judge-1".into(),
            messages: vec![
                ChatMessage::system("You are an expert annotator."),
                ChatMessage::user("Classify this.\nAnswer: <label>"),
            ],
            temperature: 0.0,
            sample_index: 0,
            max_output_tokens: 64,
        }
    }

    fn ctx() -> CallContext {
        CallContext {
            run_id: "r".into(),
            instance_id: "i".into(),
            agent_id: "a".into(),
            method: MethodName::Vanilla,
            round: 0,
            template: TemplateId::Vanilla,
        }
    }

    #[test]
    fn openai_dialect_round_trip() {
        let (base, handle) = one_shot_server(
            200,
            r#"{"choices":[{"message":{"role":"assistant","content":"Answer: hawkish"}}],"usage":{"prompt_tokens":42,"completion_tokens":3}}"#,
        );
        let provider = OpenAiProvider::new("api", &base, "test-key");
        let reply = provider.complete(&request(), &ctx()).unwrap();
        assert_eq!(reply.text, "Answer: hawkish");
        assert_eq!(reply.usage, TokenUsage { input_tokens: 42, output_tokens: 3 });

        let seen = handle.join().unwrap();
        assert!(seen.starts_with("POST /chat/completions"));
        assert!(seen.contains("authorization: Bearer test-key"));
        assert!(seen.contains(r#""model":"judge-1""#));
        assert!(seen.contains(r#""max_tokens":64"#));
    }

    #[test]
    fn anthropic_dialect_hoists_system_prompt() {
        let (base, handle) = one_shot_server(
            200,
            r#"{"content":[{"type":"text","text":"Answer: dovish"}],"usage":{"input_tokens":40,"output_tokens":2}}"#,
        );
        let provider = AnthropicProvider::new("api", &base, "test-key");
        let reply = provider.complete(&request(), &ctx()).unwrap();
        assert_eq!(reply.text, "Answer: dovish");
        assert_eq!(reply.usage.input_tokens, 40);

        let seen = handle.join().unwrap();
        assert!(seen.starts_with("POST /v1/messages"));
        assert!(seen.contains("x-api-key: test-key"));
        assert!(seen.contains("anthropic-version: 2023-06-01"));
        assert!(seen.contains(r#""system":"You are an expert annotator.""#));
        // the messages array must not carry a system role
        assert!(!seen.contains(r#"{"role":"system""#));
    }

    #[test]
    fn google_dialect_concatenates_parts() {
        let (base, handle) = one_shot_server(
            200,
            r#"{"candidates":[{"content":{"parts":[{"text":"Answer: "},{"text":"neutral"}]}}],"usageMetadata":{"promptTokenCount":41,"candidatesTokenCount":2}}"#,
        );
        let provider = GoogleProvider::new("api", &base, "test-key");
        let reply = provider.complete(&request(), &ctx()).unwrap();
        assert_eq!(reply.text, "Answer: neutral");
        assert_eq!(reply.usage.output_tokens, 2);

        let seen = handle.join().unwrap();
        assert!(seen.starts_with("POST /v1beta/models/judge-1:generateContent"));
        assert!(seen.contains("x-goog-api-key: test-key"));
        assert!(seen.contains("system_instruction"));
    }

    #[test]
    fn status_codes_map_to_the_right_errors() {
        for (status, retryable, auth) in [(401, false, true), (429, true, false), (503, true, false), (400, false, false)] {
            let (base, handle) = one_shot_server(status, r#"{"error":"nope"}"#);
            let provider = OpenAiProvider::new("api", &base, "k");
            let err = provider.complete(&request(), &ctx()).unwrap_err();
            assert_eq!(err.is_retryable(), retryable, "status {status}");
            assert_eq!(matches!(err, ProviderError::Auth { .. }), auth, "status {status}");
            handle.join().unwrap();
        }
    }

    #[test]
    fn malformed_bodies_are_protocol_errors() {
        let (base, handle) = one_shot_server(200, r#"{"choices":[]}"#);
        let provider = OpenAiProvider::new("api", &base, "k");
        let err = provider.complete(&request(), &ctx()).unwrap_err();
        assert!(matches!(err, ProviderError::Protocol { .. }));
        assert!(!err.is_retryable());
        handle.join().unwrap();
    }
}
