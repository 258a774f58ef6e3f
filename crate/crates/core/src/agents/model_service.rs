use std::time::{Duration, Instant};

use serde::Deserialize;
use serde_json::json;

use super::{render_prompt, Agent, AgentOutput, DispatchError};
use crate::canonical;
use crate::playbook::ContextPack;

/// Environment variable holding the bearer token for the model service.
pub const API_KEY_ENV: &str = "AUDIT_MODEL_API_KEY";

#[derive(Deserialize)]
struct ServiceResponse {
    text: String,
}

/// Sends `{model, prompt}` as JSON and expects `{text}` back.
pub struct ModelServiceAgent {
    name: String,
    endpoint: String,
    model: String,
    max_retries: u32,
    http: ureq::Agent,
}

impl ModelServiceAgent {
    pub fn new(name: &str, endpoint: &str, model: &str, timeout_secs: u64, max_retries: u32) -> Self {
        let http: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(timeout_secs.max(1))))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            name: name.to_string(),
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            max_retries,
            http,
        }
    }

    /// Sets the timeout with sub-second precision; used by tests.
    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.http = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        self
    }

    fn attempt(&self, body: &[u8]) -> Result<String, String> {
        let mut req = self.http.post(&self.endpoint).content_type("application/json");
        if let Ok(key) = std::env::var(API_KEY_ENV) {
            req = req.header("authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send(body).map_err(|e| e.to_string())?;
        let status = resp.status();
        let text = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
        if !status.is_success() {
            return Err(format!("HTTP {status}"));
        }
        let parsed: ServiceResponse = serde_json::from_str(&text).map_err(|e| format!("response body: {e}"))?;
        Ok(parsed.text)
    }
}

impl Agent for ModelServiceAgent {
    fn name(&self) -> &str {
        &self.name
    }

    fn dispatch(&mut self, pack: &ContextPack) -> Result<AgentOutput, DispatchError> {
        let prompt = render_prompt(pack);
        let body = canonical::value_to_canonical_bytes(&json!({"model": self.model, "prompt": prompt}))
            .expect("request body is canonical");
        let attempts = 1 + self.max_retries;
        let mut last_error = String::new();
        for attempt in 1..=attempts {
            let started = Instant::now();
            match self.attempt(&body) {
                Ok(raw_text) => {
                    return Ok(AgentOutput {
                        raw_text,
                        latency_ms: started.elapsed().as_millis() as u64,
                        attempt,
                    })
                }
                Err(e) => last_error = e,
            }
        }
        Err(DispatchError::Service { attempts, last_error })
    }
}
