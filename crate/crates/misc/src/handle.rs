use misc_core::{Backend, BackendError, DescribeResult, FeatureTensor, MetricRecord, MockBackend, RgbImage};

use crate::remote::{RemoteBackend, RemoteConfig};

/// Either the in-process mock or a model-service client. Mock mode never
/// touches the network.
pub enum BackendHandle {
    Mock(MockBackend),
    Remote(RemoteBackend),
}

impl BackendHandle {
    pub fn mock(seed: u64) -> Self {
        Self::Mock(MockBackend::new(seed))
    }

    pub fn remote(config: RemoteConfig) -> Self {
        Self::Remote(RemoteBackend::new(config))
    }

    fn inner(&self) -> &dyn Backend {
        match self {
            Self::Mock(b) => b,
            Self::Remote(b) => b,
        }
    }
}

impl Backend for BackendHandle {
    fn describe(&self, image: &RgbImage) -> Result<DescribeResult, BackendError> {
        self.inner().describe(image)
    }
    fn embed_image(&self, image: &RgbImage) -> Result<FeatureTensor, BackendError> {
        self.inner().embed_image(image)
    }
    fn embed_text(&self, text: &str) -> Result<FeatureTensor, BackendError> {
        self.inner().embed_text(text)
    }
    fn diffuse(&self, image: &RgbImage, prompt: &str, steps: u32) -> Result<RgbImage, BackendError> {
        self.inner().diffuse(image, prompt, steps)
    }
    fn neural_encode(&self, image: &RgbImage, quality: u8) -> Result<Vec<u8>, BackendError> {
        self.inner().neural_encode(image, quality)
    }
    fn neural_decode(&self, bytes: &[u8]) -> Result<RgbImage, BackendError> {
        self.inner().neural_decode(bytes)
    }
    fn metrics(&self, image: &RgbImage, reference: &RgbImage) -> Result<MetricRecord, BackendError> {
        self.inner().metrics(image, reference)
    }
    fn null_image_size(&self) -> (u32, u32) {
        self.inner().null_image_size()
    }
}
