use std::collections::HashMap;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::prompt::{parse_response, PromptTemplate};
use super::{Comparator, ComparatorQuery};
use crate::error::{Error, Result};
use crate::types::{Observation, ObservationKind, Verdict};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteConfig {
    pub endpoint_url: String,
    pub api_key_env_var: String,
    pub model_name: String,
    pub timeout_seconds: f64,
    pub max_retries: u32,
    /// Uses the built-in template when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prompt_template_path: Option<PathBuf>,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            endpoint_url: "http://127.0.0.1:8080/v1/compare".into(),
            api_key_env_var: "VLM_API_KEY".into(),
            model_name: "gemini-2.0-flash".into(),
            timeout_seconds: 30.0,
            max_retries: 2,
            prompt_template_path: None,
        }
    }
}

impl RemoteConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.timeout_seconds > 0.0 && self.timeout_seconds.is_finite()) {
            return Err(Error::Config("remote timeout_seconds must be positive".into()));
        }
        if self.endpoint_url.is_empty() {
            return Err(Error::Config("remote endpoint_url is empty".into()));
        }
        Ok(())
    }

    /// Upper bound on the wall time one query may take.
    pub fn query_budget(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_seconds * f64::from(self.max_retries + 1))
    }
}

/// 8-bit PNG of an image observation (grayscale or RGB).
pub fn encode_png(obs: &Observation) -> Result<Vec<u8>> {
    if obs.kind() != ObservationKind::Image {
        return Err(Error::Comparator("remote comparisons need image observations".into()));
    }
    let (h, w, c) = (obs.shape()[0], obs.shape()[1], obs.shape()[2]);
    let color = match c {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        _ => return Err(Error::Comparator(format!("cannot encode {c}-channel image"))),
    };
    let pixels: Vec<u8> = obs.data().iter().map(|v| (v * 255.0).round() as u8).collect();
    let mut out = Vec::new();
    let mut enc = png::Encoder::new(&mut out, w as u32, h as u32);
    enc.set_color(color);
    enc.set_depth(png::BitDepth::Eight);
    enc.write_header()
        .and_then(|mut wr| wr.write_image_data(&pixels))
        .map_err(|e| Error::Comparator(format!("png encoding failed: {e}")))?;
    Ok(out)
}

/// HTTP client for a vision-language model. Any transport or format failure
/// becomes `NoDecision` once the retry budget is spent.
#[derive(Clone)]
pub struct Remote {
    config: RemoteConfig,
    template: PromptTemplate,
    api_key: String,
    agent: ureq::Agent,
}

impl Remote {
    /// Reads the API key from the configured environment variable.
    pub fn new(config: RemoteConfig) -> Result<Self> {
        let key = std::env::var(&config.api_key_env_var)
            .map_err(|_| Error::Config(format!("environment variable {} is not set", config.api_key_env_var)))?;
        Self::with_api_key(config, key)
    }

    pub fn with_api_key(config: RemoteConfig, api_key: String) -> Result<Self> {
        config.validate()?;
        let template = match &config.prompt_template_path {
            Some(p) => PromptTemplate::load(p)?,
            None => PromptTemplate::default(),
        };
        let agent = ureq::Agent::config_builder().http_status_as_error(true).build().into();
        Ok(Self {
            config,
            template,
            api_key,
            agent,
        })
    }

    pub fn request_body(&self, query: &ComparatorQuery) -> Result<Value> {
        let b64 = base64::engine::general_purpose::STANDARD;
        let images: Vec<Value> = [&query.first, &query.second]
            .iter()
            .map(|o| encode_png(o).map(|png| json!({"mime_type": "image/png", "data": b64.encode(png)})))
            .collect::<Result<_>>()?;
        Ok(json!({
            "model": self.config.model_name,
            "prompt": self.template.render(&query.instruction),
            "images": images,
        }))
    }

    fn attempt(&self, body: &Value, timeout: Duration) -> std::result::Result<String, String> {
        let mut resp = self
            .agent
            .post(&self.config.endpoint_url)
            .config()
            .timeout_global(Some(timeout))
            .build()
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(body)
            .map_err(|e| e.to_string())?;
        let v: Value = resp.body_mut().read_json().map_err(|e| e.to_string())?;
        v.get("text")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| format!("response has no text field: {v}"))
    }

    /// Retries until success or until the query budget runs out.
    pub fn query_text(&self, query: &ComparatorQuery) -> Result<String> {
        let body = self.request_body(query)?;
        let per_attempt = Duration::from_secs_f64(self.config.timeout_seconds);
        let deadline = Instant::now() + self.config.query_budget();
        let mut last_err = String::new();
        for attempt in 0..=self.config.max_retries {
            let remaining = deadline.saturating_duration_since(Instant::now());
            if remaining.is_zero() {
                break;
            }
            match self.attempt(&body, per_attempt.min(remaining)) {
                Ok(text) => return Ok(text),
                Err(e) => {
                    log::warn!("query {} attempt {} failed: {e}", query.query_id, attempt + 1);
                    last_err = e;
                }
            }
        }
        Err(Error::Comparator(format!("query {} failed: {last_err}", query.query_id)))
    }

    fn verdict(&self, query: &ComparatorQuery) -> Result<Verdict> {
        match self.query_text(query) {
            Ok(text) => Ok(parse_response(&text)),
            Err(Error::Comparator(msg)) => {
                log::error!("{msg}; treating as no decision");
                Ok(Verdict::NoDecision)
            }
            Err(e) => Err(e),
        }
    }
}

impl Comparator for Remote {
    fn compare(&mut self, query: &ComparatorQuery) -> Result<Verdict> {
        self.verdict(query)
    }

    /// Issues the queries concurrently and merges them back by query id.
    fn compare_batch(&mut self, queries: &[ComparatorQuery]) -> Result<Vec<Verdict>> {
        let this = &*self;
        let tagged: Vec<(u64, Result<Verdict>)> = std::thread::scope(|s| {
            let handles: Vec<_> = queries
                .iter()
                .map(|q| s.spawn(move || (q.query_id, this.verdict(q))))
                .collect();
            handles.into_iter().map(|h| h.join().expect("comparator thread panicked")).collect()
        });
        let mut by_id = HashMap::new();
        for (id, v) in tagged {
            by_id.insert(id, v?);
        }
        Ok(queries.iter().map(|q| by_id[&q.query_id]).collect())
    }
}
