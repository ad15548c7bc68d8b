//! OpenAI-compatible chat-completions provider.

use std::sync::Arc;

use serde_json::{json, Value};

use super::transport::{HttpRequest, InstrumentedTransport, Transport, TransportError};
use super::{GatewayError, Provider, ProviderCall, ProviderReply};

pub struct RemoteProvider {
    model: String,
    endpoint: String,
    api_key: String,
    transport: InstrumentedTransport,
}

impl RemoteProvider {
    pub fn new(
        model: impl Into<String>,
        endpoint: impl Into<String>,
        api_key: impl Into<String>,
        transport: Arc<dyn Transport>,
    ) -> Self {
        Self {
            model: model.into(),
            endpoint: endpoint.into(),
            api_key: api_key.into(),
            transport: InstrumentedTransport::new(transport),
        }
    }

    pub fn operations(&self) -> u64 {
        self.transport.operations()
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.endpoint.trim_end_matches('/'))
    }
}

impl Provider for RemoteProvider {
    fn name(&self) -> &str {
        &self.model
    }

    fn complete(&self, call: &ProviderCall<'_>) -> Result<ProviderReply, GatewayError> {
        let mut body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": call.prompt}],
            "temperature": call.params.temperature,
            "top_p": call.params.top_p,
            "max_tokens": call.params.max_tokens,
        });
        if let Some(k) = call.params.top_k {
            body["top_k"] = json!(k);
        }
        let request = HttpRequest {
            url: self.url(),
            headers: vec![
                ("Content-Type".into(), "application/json".into()),
                ("Authorization".into(), format!("Bearer {}", self.api_key)),
            ],
            body: body.to_string(),
        };
        let response = self.transport.post(&request).map_err(|e| match e {
            TransportError::Timeout => GatewayError::Timeout,
            TransportError::Io(msg) => GatewayError::Provider {
                message: msg,
                retryable: true,
            },
        })?;
        match response.status {
            200..=299 => {}
            429 => {
                return Err(GatewayError::RateLimited {
                    retry_after_ms: response.retry_after_secs.map(|s| s * 1000),
                })
            }
            408 | 504 => return Err(GatewayError::Timeout),
            s => {
                return Err(GatewayError::Provider {
                    message: format!("HTTP {s}: {}", response.body),
                    retryable: s >= 500,
                })
            }
        }
        let parsed: Value = serde_json::from_str(&response.body).map_err(|e| GatewayError::Provider {
            message: format!("invalid response JSON: {e}"),
            retryable: false,
        })?;
        let text = parsed["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| GatewayError::Provider {
                message: "response has no choices[0].message.content".into(),
                retryable: false,
            })?
            .to_string();
        Ok(ProviderReply {
            text,
            generated_tokens: parsed["usage"]["completion_tokens"].as_u64(),
            latency_ms: None,
        })
    }
}
