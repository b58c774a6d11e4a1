use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::prompt::Prompt;
use super::CriticError;

/// Environment variable holding the bearer token for remote critics.
pub const API_KEY_ENV: &str = "PWF_API_KEY";
const REDACTED: &str = "Bearer [REDACTED]";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    /// Extra attempts after the first failed one.
    #[serde(default = "default_retries")]
    pub retries: u32,
    /// First retry delay; doubles on every further retry.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: f64,
}

fn default_retries() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    500
}

fn default_timeout_s() -> f64 {
    60.0
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            retries: default_retries(),
            backoff_ms: default_backoff_ms(),
            timeout_s: default_timeout_s(),
        }
    }
}

/// One HTTP round trip as sent and received. The credential is never
/// stored; the authorization header is recorded in redacted form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub op: String,
    pub attempt: u32,
    pub request_headers: BTreeMap<String, String>,
    pub request: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub(crate) struct RemoteClient {
    config: RemoteConfig,
    http: reqwest::blocking::Client,
}

/// Assistant text from a chat-completions response body.
fn reply_text(body: &str) -> Option<String> {
    let v: Value = serde_json::from_str(body).ok()?;
    let content = &v["choices"][0]["message"]["content"];
    match content {
        Value::String(s) => Some(s.clone()),
        Value::Array(parts) => Some(
            parts
                .iter()
                .filter_map(|p| p["text"].as_str())
                .collect::<Vec<_>>()
                .join("\n"),
        ),
        _ => None,
    }
}

impl RemoteClient {
    pub fn new(config: RemoteConfig) -> Result<Self, CriticError> {
        if config.endpoint.trim().is_empty() {
            return Err(CriticError::InvalidConfig("remote critic requires an endpoint".into()));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_s.max(0.001)))
            .build()
            .map_err(|e| CriticError::InvalidConfig(e.to_string()))?;
        Ok(Self { config, http })
    }

    /// Sends `prompt` until `parse` accepts a reply, retrying transport
    /// errors, non-2xx statuses and unparsable replies with exponential
    /// backoff.
    pub fn ask<T>(
        &self,
        op: &str,
        prompt: &Prompt,
        parse: impl Fn(&str) -> Option<T>,
        log: &mut Vec<Exchange>,
    ) -> Result<(T, String), CriticError> {
        let body = prompt.request_body(&self.config.model);
        let bytes = serde_json::to_vec(&body).expect("request body serializes");
        let key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        let mut headers = BTreeMap::from([("content-type".to_string(), "application/json".to_string())]);
        if key.is_some() {
            headers.insert("authorization".into(), REDACTED.into());
        }
        let mut last_error = String::new();
        for attempt in 0..=self.config.retries {
            if attempt > 0 {
                let delay = self.config.backoff_ms.saturating_mul(1 << (attempt - 1).min(20));
                std::thread::sleep(Duration::from_millis(delay));
            }
            let mut exchange = Exchange {
                op: op.to_string(),
                attempt,
                request_headers: headers.clone(),
                request: body.clone(),
                status: None,
                response: None,
                error: None,
            };
            let mut req = self
                .http
                .post(&self.config.endpoint)
                .header("content-type", "application/json")
                .body(bytes.clone());
            if let Some(k) = &key {
                req = req.bearer_auth(k);
            }
            match req.send() {
                Err(e) => last_error = format!("transport: {e}"),
                Ok(resp) => {
                    let status = resp.status();
                    exchange.status = Some(status.as_u16());
                    match resp.text() {
                        Err(e) => last_error = format!("reading body: {e}"),
                        Ok(text) => {
                            exchange.response = Some(text.clone());
                            if !status.is_success() {
                                last_error = format!("status {}", status.as_u16());
                            } else if let Some(reply) = reply_text(&text) {
                                if let Some(value) = parse(&reply) {
                                    log.push(exchange);
                                    return Ok((value, reply));
                                }
                                last_error = format!("unparsable reply: {reply:?}");
                            } else {
                                last_error = "response has no message content".into();
                            }
                        }
                    }
                }
            }
            exchange.error = Some(last_error.clone());
            log.push(exchange);
        }
        Err(CriticError::RemoteFailed(format!(
            "{op} failed after {} attempts: {last_error}",
            self.config.retries + 1
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reply_text_shapes() {
        let s = r#"{"choices":[{"message":{"role":"assistant","content":"ANSWER: 1"}}]}"#;
        assert_eq!(reply_text(s).as_deref(), Some("ANSWER: 1"));
        let parts = r#"{"choices":[{"message":{"content":[{"type":"text","text":"a"},{"type":"text","text":"b"}]}}]}"#;
        assert_eq!(reply_text(parts).as_deref(), Some("a\nb"));
        assert_eq!(reply_text("{}"), None);
        assert_eq!(reply_text("not json"), None);
    }

    #[test]
    fn empty_endpoint_rejected() {
        assert!(matches!(
            RemoteClient::new(RemoteConfig::new("  ", "m")),
            Err(CriticError::InvalidConfig(_))
        ));
    }
}
