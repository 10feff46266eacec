//! HTTP client for the model service.
//!
//! Every endpoint is a JSON POST. Images travel as base64 PNG, feature
//! tensors as base64 little-endian `f32` with explicit shape fields, and
//! failures as `{"error": {"code", "message"}}` with a non-2xx status.

use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use misc_core::map::FeatureKind;
use misc_core::{Backend, BackendError, DescribeResult, FeatureTensor, MetricRecord, RgbImage};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::io;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);
pub const DEFAULT_RETRIES: u32 = 2;
const BODY_LIMIT: u64 = 256 << 20;

#[derive(Clone, Debug)]
pub struct RemoteConfig {
    /// Base URL, e.g. `http://127.0.0.1:8080`.
    pub endpoint: String,
    pub token: Option<String>,
    pub timeout: Duration,
    /// Extra attempts after a transport failure.
    pub retries: u32,
    pub seed: u64,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self { endpoint: endpoint.into(), token: None, timeout: DEFAULT_TIMEOUT, retries: DEFAULT_RETRIES, seed: 0 }
    }
}

pub struct RemoteBackend {
    agent: ureq::Agent,
    config: RemoteConfig,
}

#[derive(Deserialize)]
struct ErrorBody {
    error: ErrorDetail,
}

#[derive(Deserialize)]
struct ErrorDetail {
    code: String,
    message: String,
}

#[derive(Deserialize)]
struct DescribeBody {
    items: Vec<ItemBody>,
    detail_all: String,
}

#[derive(Deserialize)]
struct ItemBody {
    name: String,
    detail: String,
}

#[derive(Deserialize)]
struct TensorBody {
    rows: usize,
    cols: usize,
    channels: usize,
    data: String,
}

#[derive(Deserialize)]
struct ImageBody {
    image: String,
}

#[derive(Deserialize)]
struct BytesBody {
    bytes: String,
}

#[derive(Deserialize)]
struct MetricsBody {
    metrics: serde_json::Map<String, serde_json::Value>,
}

fn schema(msg: impl std::fmt::Display) -> BackendError {
    BackendError::Schema(msg.to_string())
}

fn png_field(img: &RgbImage) -> Result<String, BackendError> {
    let png = io::encode_png(img).map_err(|e| BackendError::InvalidRequest(e.to_string()))?;
    Ok(B64.encode(png))
}

fn decode_image_field(field: &str) -> Result<RgbImage, BackendError> {
    let png = B64.decode(field).map_err(|e| schema(format!("image is not base64: {e}")))?;
    io::decode_png(&png).map_err(|e| schema(format!("image is not a PNG: {e}")))
}

fn decode_tensor(body: TensorBody, kind: FeatureKind) -> Result<FeatureTensor, BackendError> {
    let raw = B64.decode(&body.data).map_err(|e| schema(format!("tensor data is not base64: {e}")))?;
    let count = body
        .rows
        .checked_mul(body.cols)
        .and_then(|n| n.checked_mul(body.channels))
        .filter(|&n| n > 0)
        .ok_or_else(|| schema("empty or oversized tensor shape"))?;
    if raw.len() != count * 4 {
        return Err(schema(format!("tensor data has {} bytes, shape needs {}", raw.len(), count * 4)));
    }
    let data: Vec<f64> = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(schema("tensor holds non-finite values"));
    }
    FeatureTensor::new(kind, body.rows, body.cols, body.channels, data).map_err(schema)
}

fn transient(e: &ureq::Error) -> bool {
    matches!(
        e,
        ureq::Error::Io(_) | ureq::Error::ConnectionFailed | ureq::Error::HostNotFound | ureq::Error::Protocol(_)
    )
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .new_agent();
        Self { agent, config }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.config.endpoint.trim_end_matches('/'), path)
    }

    fn post<T: DeserializeOwned, R: Serialize>(&self, path: &str, request: &R) -> Result<T, BackendError> {
        let body = serde_json::to_vec(request).map_err(|e| BackendError::InvalidRequest(e.to_string()))?;
        let url = self.url(path);
        let mut attempt = 0;
        let (status, bytes) = loop {
            let mut req = self.agent.post(&url).header("content-type", "application/json");
            if let Some(token) = &self.config.token {
                req = req.header("authorization", format!("Bearer {token}"));
            }
            let result = req
                .send(&body[..])
                .and_then(|mut resp| Ok((resp.status().as_u16(), resp.body_mut().with_config().limit(BODY_LIMIT).read_to_vec()?)));
            match result {
                Ok(ok) => break ok,
                Err(ureq::Error::Timeout(_)) => return Err(BackendError::Timeout),
                Err(e) if transient(&e) && attempt < self.config.retries => attempt += 1,
                Err(e) if transient(&e) => return Err(BackendError::Transport(format!("{url}: {e}"))),
                Err(e) => return Err(BackendError::InvalidRequest(format!("{url}: {e}"))),
            }
        };
        if !(200..300).contains(&status) {
            return Err(match serde_json::from_slice::<ErrorBody>(&bytes) {
                Ok(b) => BackendError::Service { code: b.error.code, message: b.error.message },
                Err(_) => schema(format!("status {status} without an error body")),
            });
        }
        serde_json::from_slice(&bytes).map_err(|e| schema(format!("{path}: {e}")))
    }
}

impl Backend for RemoteBackend {
    fn describe(&self, image: &RgbImage) -> Result<DescribeResult, BackendError> {
        let req = json!({ "image": png_field(image)?, "seed": self.config.seed });
        let body: DescribeBody = self.post("/v1/describe", &req)?;
        if body.detail_all.trim().is_empty() {
            return Err(schema("describe returned an empty detail_all"));
        }
        Ok(DescribeResult {
            items: body.items.into_iter().map(|i| (i.name, i.detail)).collect(),
            detail_all: body.detail_all,
        })
    }

    fn embed_image(&self, image: &RgbImage) -> Result<FeatureTensor, BackendError> {
        let req = json!({ "image": png_field(image)?, "seed": self.config.seed });
        decode_tensor(self.post("/v1/embed/image", &req)?, FeatureKind::Image)
    }

    fn embed_text(&self, text: &str) -> Result<FeatureTensor, BackendError> {
        let req = json!({ "text": text, "seed": self.config.seed });
        let body: TensorBody = self.post("/v1/embed/text", &req)?;
        if (body.rows, body.cols) != (1, 1) {
            return Err(schema(format!("text embedding has grid {}x{}", body.rows, body.cols)));
        }
        decode_tensor(body, FeatureKind::Text)
    }

    fn diffuse(&self, image: &RgbImage, prompt: &str, steps: u32) -> Result<RgbImage, BackendError> {
        if steps == 0 {
            return Err(BackendError::InvalidRequest("steps must be at least 1".into()));
        }
        let req = json!({ "image": png_field(image)?, "prompt": prompt, "steps": steps });
        let body: ImageBody = self.post("/v1/diffuse", &req)?;
        let out = decode_image_field(&body.image)?;
        if out.dimensions() != image.dimensions() {
            return Err(schema(format!("diffuse changed size {:?} -> {:?}", image.dimensions(), out.dimensions())));
        }
        Ok(out)
    }

    fn neural_encode(&self, image: &RgbImage, quality: u8) -> Result<Vec<u8>, BackendError> {
        let req = json!({ "image": png_field(image)?, "quality": quality });
        let body: BytesBody = self.post("/v1/codec/encode", &req)?;
        B64.decode(&body.bytes).map_err(|e| schema(format!("bytes is not base64: {e}")))
    }

    fn neural_decode(&self, bytes: &[u8]) -> Result<RgbImage, BackendError> {
        let req = json!({ "bytes": B64.encode(bytes) });
        let body: ImageBody = self.post("/v1/codec/decode", &req)?;
        decode_image_field(&body.image)
    }

    fn metrics(&self, image: &RgbImage, reference: &RgbImage) -> Result<MetricRecord, BackendError> {
        let req = json!({ "image": png_field(image)?, "reference": png_field(reference)? });
        let body: MetricsBody = self.post("/v1/metrics", &req)?;
        let mut rec = MetricRecord::default();
        for (name, value) in body.metrics {
            let v = value.as_f64().filter(|v| v.is_finite()).ok_or_else(|| schema(format!("metric {name} is not a number")))?;
            rec.push(name, v);
        }
        Ok(rec)
    }
}
