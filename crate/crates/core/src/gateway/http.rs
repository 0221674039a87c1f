//! HTTP backend speaking the common chat-completion JSON convention.
//!
//! The profile url is the full endpoint path, so paths are configurable per
//! profile. Request/response shapes:
//! - completion: `{model, messages, temperature, max_tokens, seed}` →
//!   `choices[0].message.content` (also accepts bare `content` or `text`).
//! - embedding: `{model, input}` → `data[0].embedding` (or bare `embedding`).
//! - pair score: `{model, query, documents:[doc]}` →
//!   `results[0].relevance_score` (or `scores[0]`).
//! - sequence loss: `{model, messages:[user context, assistant target],
//!   logprobs: true, max_tokens: 0}` → either a direct `{"loss": x}` or
//!   `choices[0].logprobs.content[].logprob`, averaged and negated.
//! - category distribution: completion request; the JSON object is parsed
//!   out of the returned text.

use std::collections::BTreeMap;
use std::time::Duration;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::gateway::backend::Backend;
use crate::gateway::types::{parse_distribution_text, Decoding, EmbeddingVector};

#[derive(Debug, Clone)]
pub struct HttpBackend {
    client: reqwest::Client,
    url: String,
    model: String,
    profile: String,
}

impl HttpBackend {
    pub fn new(profile_name: &str, url: &str, model: &str, timeout_ms: u64) -> Result<Self> {
        let client = reqwest::Client::builder()
            .timeout(Duration::from_millis(timeout_ms))
            .build()
            .map_err(|e| Error::Config(format!("http client for `{profile_name}`: {e}")))?;
        Ok(HttpBackend {
            client,
            url: url.to_string(),
            model: model.to_string(),
            profile: profile_name.to_string(),
        })
    }

    async fn post(&self, body: Value) -> Result<Value> {
        let response = self
            .client
            .post(&self.url)
            .json(&body)
            .send()
            .await
            .map_err(|e| Error::Transport {
                profile: self.profile.clone(),
                message: e.to_string(),
            })?;
        let status = response.status();
        if !status.is_success() {
            return Err(Error::BackendRefused {
                profile: self.profile.clone(),
                status: status.as_u16(),
            });
        }
        response.json::<Value>().await.map_err(|e| Error::Transport {
            profile: self.profile.clone(),
            message: format!("invalid JSON body: {e}"),
        })
    }

    fn bad_shape(&self, what: &str, value: &Value) -> Error {
        Error::Transport {
            profile: self.profile.clone(),
            message: format!("unexpected {what} response shape: {value}"),
        }
    }
}

fn first_choice_content(value: &Value) -> Option<&str> {
    value
        .get("choices")
        .and_then(|c| c.get(0))
        .and_then(|c| c.get("message"))
        .and_then(|m| m.get("content"))
        .and_then(Value::as_str)
        .or_else(|| value.get("content").and_then(Value::as_str))
        .or_else(|| value.get("text").and_then(Value::as_str))
}

#[async_trait::async_trait]
impl Backend for HttpBackend {
    async fn complete(&self, prompt: &str, decoding: &Decoding) -> Result<String> {
        let body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": decoding.temperature,
            "max_tokens": decoding.max_tokens,
            "seed": decoding.seed,
        });
        let value = self.post(body).await?;
        first_choice_content(&value)
            .map(str::to_string)
            .ok_or_else(|| self.bad_shape("completion", &value))
    }

    async fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        let body = json!({ "model": self.model, "input": text });
        let value = self.post(body).await?;
        let raw = value
            .get("data")
            .and_then(|d| d.get(0))
            .and_then(|d| d.get("embedding"))
            .or_else(|| value.get("embedding"))
            .and_then(Value::as_array)
            .ok_or_else(|| self.bad_shape("embedding", &value))?;
        let mut values = Vec::with_capacity(raw.len());
        for v in raw {
            values.push(v.as_f64().ok_or_else(|| self.bad_shape("embedding", &value))? as f32);
        }
        Ok(EmbeddingVector::new(values))
    }

    async fn pair_score(&self, query: &str, doc: &str) -> Result<f64> {
        let body = json!({ "model": self.model, "query": query, "documents": [doc] });
        let value = self.post(body).await?;
        value
            .get("results")
            .and_then(|r| r.get(0))
            .and_then(|r| r.get("relevance_score"))
            .and_then(Value::as_f64)
            .or_else(|| value.get("scores").and_then(|s| s.get(0)).and_then(Value::as_f64))
            .ok_or_else(|| self.bad_shape("pair score", &value))
    }

    async fn sequence_loss(&self, context: &str, target: &str) -> Result<f64> {
        let body = json!({
            "model": self.model,
            "messages": [
                {"role": "user", "content": context},
                {"role": "assistant", "content": target},
            ],
            "logprobs": true,
            "max_tokens": 0,
            "temperature": 0.0,
        });
        let value = self.post(body).await?;
        if let Some(loss) = value.get("loss").and_then(Value::as_f64) {
            return Ok(loss);
        }
        let logprobs = value
            .get("choices")
            .and_then(|c| c.get(0))
            .and_then(|c| c.get("logprobs"))
            .and_then(|l| l.get("content"))
            .and_then(Value::as_array)
            .ok_or_else(|| Error::BackendNoLogprobs { profile: self.profile.clone() })?;
        let values: Vec<f64> = logprobs
            .iter()
            .filter_map(|t| t.get("logprob").and_then(Value::as_f64))
            .collect();
        if values.is_empty() {
            return Err(Error::BackendNoLogprobs { profile: self.profile.clone() });
        }
        Ok(-(values.iter().sum::<f64>()) / values.len() as f64)
    }

    async fn classify_distribution(&self, text: &str) -> Result<BTreeMap<String, f64>> {
        let completion = self.complete(text, &Decoding::text()).await?;
        parse_distribution_text(&completion)
            .ok_or(Error::UnparseableDistribution { raw: completion })
    }
}
