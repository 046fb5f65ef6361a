use std::time::Duration;

use base64::Engine;
use image::imageops::FilterType;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ImageRef, Message, Part, QueryContext, Result, VlmClient, VlmError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VlmConfig {
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_secs: f64,
    pub retries: u32,
    /// First backoff delay; doubles after each failed attempt.
    pub backoff_ms: u64,
    pub max_image_side: u32,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
}

impl Default for VlmConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4o".into(),
            temperature: 0.0,
            max_tokens: 2048,
            timeout_secs: 120.0,
            retries: 3,
            backoff_ms: 1000,
            max_image_side: 1024,
            api_key_env: "OPENAI_API_KEY".into(),
        }
    }
}

impl VlmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.timeout_secs > 0.0) {
            return Err(VlmError::Config("timeout_secs must be positive".into()));
        }
        if self.endpoint.is_empty() {
            return Err(VlmError::Config("endpoint is empty".into()));
        }
        Ok(())
    }
}

/// Client for a chat-completion endpoint taking interleaved text and
/// base64 PNG images.
pub struct WireClient {
    cfg: VlmConfig,
    agent: ureq::Agent,
    api_key: Option<String>,
}

impl WireClient {
    pub fn new(cfg: VlmConfig) -> Result<Self> {
        cfg.validate()?;
        let api_key = std::env::var(&cfg.api_key_env).ok().filter(|k| !k.is_empty());
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self { cfg, agent, api_key })
    }

    pub fn config(&self) -> &VlmConfig {
        &self.cfg
    }

    /// The JSON request body, images inlined as data URLs.
    pub fn request_body(&self, messages: &[Message]) -> Result<Value> {
        let mut out = Vec::with_capacity(messages.len());
        for m in messages {
            let mut content = Vec::with_capacity(m.parts.len());
            for p in &m.parts {
                content.push(match p {
                    Part::Text(t) => json!({"type": "text", "text": t}),
                    Part::Image(img) => {
                        let url = data_url(img, self.cfg.max_image_side)?;
                        json!({"type": "image_url", "image_url": {"url": url}})
                    }
                });
            }
            out.push(json!({"role": m.role, "content": content}));
        }
        Ok(json!({
            "model": self.cfg.model,
            "temperature": self.cfg.temperature,
            "max_tokens": self.cfg.max_tokens,
            "messages": out,
        }))
    }

    fn attempt(&self, body: &str) -> Result<String> {
        let mut req = self
            .agent
            .post(&self.cfg.endpoint)
            .header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send(body).map_err(map_transport)?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(map_transport)?;
        if !(200..300).contains(&status) {
            return Err(VlmError::ApiError { status, body: text });
        }
        first_choice_text(&text)
    }
}

fn map_transport(e: ureq::Error) -> VlmError {
    match e {
        ureq::Error::Timeout(_) => VlmError::Timeout,
        ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => VlmError::Timeout,
        other => VlmError::TransportError(other.to_string()),
    }
}

fn retryable(e: &VlmError) -> bool {
    match e {
        VlmError::Timeout | VlmError::TransportError(_) => true,
        VlmError::ApiError { status, .. } => *status == 429 || *status >= 500,
        _ => false,
    }
}

fn first_choice_text(body: &str) -> Result<String> {
    let v: Value = serde_json::from_str(body)
        .map_err(|e| VlmError::BadResponse(format!("response is not JSON: {e}")))?;
    let content = &v["choices"][0]["message"]["content"];
    match content {
        Value::String(s) => Ok(s.clone()),
        Value::Array(parts) => Ok(parts
            .iter()
            .filter_map(|p| p["text"].as_str())
            .collect::<Vec<_>>()
            .join("")),
        _ => Err(VlmError::BadResponse("no choices[0].message.content".into())),
    }
}

/// Base64 PNG data URL, downscaled so the long side is at most `max_side`.
pub fn data_url(img: &ImageRef, max_side: u32) -> Result<String> {
    let decoded = img
        .decode()
        .map_err(|e| VlmError::BadRequest(format!("image {}: {e}", img.name)))?;
    let (w, h) = decoded.dimensions();
    let png = if w.max(h) > max_side {
        let s = max_side as f64 / w.max(h) as f64;
        let nw = ((w as f64 * s).round() as u32).max(1);
        let nh = ((h as f64 * s).round() as u32).max(1);
        let small = image::imageops::resize(&decoded, nw, nh, FilterType::Triangle);
        crate::marks::encode_png(&small)
    } else {
        img.png().to_vec()
    };
    Ok(format!(
        "data:image/png;base64,{}",
        base64::engine::general_purpose::STANDARD.encode(png)
    ))
}

impl VlmClient for WireClient {
    fn query(&self, messages: &[Message], _ctx: &QueryContext) -> Result<String> {
        if messages.is_empty() || messages.iter().any(|m| m.parts.is_empty()) {
            return Err(VlmError::BadRequest("empty message".into()));
        }
        let body = self.request_body(messages)?.to_string();
        let mut delay = Duration::from_millis(self.cfg.backoff_ms);
        let mut attempt = 0;
        loop {
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(e) if retryable(&e) && attempt < self.cfg.retries => {
                    tracing::warn!(attempt, error = %e, "vlm request failed, retrying");
                    std::thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}
