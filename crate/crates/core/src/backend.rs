//! Model backend contract: description, embeddings, guided diffusion, the
//! learned pixel codec and perceptual metrics.

use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::map::FeatureTensor;
use crate::raster::RgbImage;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("request timed out")]
    Timeout,
    #[error("response violates schema: {0}")]
    Schema(String),
    #[error("service error {code}: {message}")]
    Service { code: String, message: String },
    #[error("payload format error: {0}")]
    Format(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

/// Raw describer output. Untrusted: callers run it through
/// [`crate::semantic::sanitize`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DescribeResult {
    pub items: Vec<(String, String)>,
    pub detail_all: String,
}

/// Named metric values in the order the backend reported them.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricRecord {
    pub values: Vec<(String, f64)>,
}

impl MetricRecord {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.iter().find(|(k, _)| k == name).map(|&(_, v)| v)
    }

    pub fn push(&mut self, name: impl Into<String>, value: f64) {
        self.values.push((name.into(), value));
    }
}

/// Every method is a pure request: implementations must tolerate concurrent
/// independent calls.
pub trait Backend: Send + Sync {
    fn describe(&self, image: &RgbImage) -> Result<DescribeResult, BackendError>;

    /// Image features as a `rows x cols x channels` grid.
    fn embed_image(&self, image: &RgbImage) -> Result<FeatureTensor, BackendError>;

    /// Text features as a `1 x 1 x channels` vector.
    fn embed_text(&self, text: &str) -> Result<FeatureTensor, BackendError>;

    /// Runs `steps` guided generation iterations; output has the input's
    /// dimensions.
    fn diffuse(&self, image: &RgbImage, prompt: &str, steps: u32) -> Result<RgbImage, BackendError>;

    fn neural_encode(&self, image: &RgbImage, quality: u8) -> Result<Vec<u8>, BackendError>;

    fn neural_decode(&self, bytes: &[u8]) -> Result<RgbImage, BackendError>;

    fn metrics(&self, image: &RgbImage, reference: &RgbImage) -> Result<MetricRecord, BackendError>;

    /// Size of the all-black image used to probe the text encoder's bias.
    fn null_image_size(&self) -> (u32, u32) {
        (224, 224)
    }
}

impl<B: Backend + ?Sized> Backend for &B {
    fn describe(&self, image: &RgbImage) -> Result<DescribeResult, BackendError> {
        (**self).describe(image)
    }
    fn embed_image(&self, image: &RgbImage) -> Result<FeatureTensor, BackendError> {
        (**self).embed_image(image)
    }
    fn embed_text(&self, text: &str) -> Result<FeatureTensor, BackendError> {
        (**self).embed_text(text)
    }
    fn diffuse(&self, image: &RgbImage, prompt: &str, steps: u32) -> Result<RgbImage, BackendError> {
        (**self).diffuse(image, prompt, steps)
    }
    fn neural_encode(&self, image: &RgbImage, quality: u8) -> Result<Vec<u8>, BackendError> {
        (**self).neural_encode(image, quality)
    }
    fn neural_decode(&self, bytes: &[u8]) -> Result<RgbImage, BackendError> {
        (**self).neural_decode(bytes)
    }
    fn metrics(&self, image: &RgbImage, reference: &RgbImage) -> Result<MetricRecord, BackendError> {
        (**self).metrics(image, reference)
    }
    fn null_image_size(&self) -> (u32, u32) {
        (**self).null_image_size()
    }
}
