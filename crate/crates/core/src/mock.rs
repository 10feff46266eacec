//! Deterministic in-process backend.
//!
//! Every output is a pure function of the request content and the seed, so
//! encode/decode runs are byte-reproducible on any platform. The rules below
//! are shared with the model service's stub mode:
//!
//! - digest: 64-bit FNV-1a. Images hash their canonical bytes (width and
//!   height as u32 LE, then raw RGB); text hashes its UTF-8 bytes.
//! - stream seed: `digest ^ seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)`, fed to
//!   SplitMix64.
//! - features: each value is `(next >> 40) as f32 / 2^24 * 2 - 1`, row-major
//!   `(row, col, channel)`; images give a 16x16x32 grid, text a 1x1x32 vector.
//! - diffuse: 3x3 box blur with edge clamping and `(sum + 4) / 9` rounding,
//!   repeated `min(steps, 3)` times, then every channel shifted by
//!   `digest(prompt) % 7 - 3` and clipped to [0, 255].
//! - codec: `"MNC1"`, width u16 LE, height u16 LE, bits u8 (the requested
//!   quality clamped to 1..8), then quantized indices packed as in the MSCB
//!   pixel section. Not a learned codec.
//! - metrics: `mse` over all channels and `psnr` in dB, capped at 99.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::backend::{Backend, BackendError, DescribeResult, MetricRecord};
use crate::map::{FeatureKind, FeatureTensor};
use crate::pixel::{dequantize, quantize, QuantizedPixels};
use crate::raster::RgbImage;

pub const MOCK_GRID: usize = 16;
pub const MOCK_CHANNELS: usize = 32;
pub const MOCK_ITEMS: usize = 3;
pub const PSNR_CAP: f64 = 99.0;
const CODEC_MAGIC: &[u8; 4] = b"MNC1";
const SEED_MIX: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// SplitMix64 stream.
#[derive(Clone, Debug)]
pub struct SplitMix64(u64);

impl SplitMix64 {
    pub fn new(state: u64) -> Self {
        Self(state)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(SEED_MIX);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[-1, 1)`, exactly representable as `f32`.
    pub fn next_unit(&mut self) -> f64 {
        let v = (self.next_u64() >> 40) as f32 / (1u32 << 24) as f32;
        (v * 2.0 - 1.0) as f64
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }
}

/// Shift applied by the mock diffuse rule for a prompt, in `-3..=3`.
pub fn prompt_delta(prompt: &str) -> i32 {
    (fnv1a64(prompt.as_bytes()) % 7) as i32 - 3
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MockBackend {
    seed: u64,
    item_count: usize,
}

impl Default for MockBackend {
    fn default() -> Self {
        Self::new(0)
    }
}

impl MockBackend {
    pub fn new(seed: u64) -> Self {
        Self { seed, item_count: MOCK_ITEMS }
    }

    /// Number of items `describe` reports. Values above 3 exercise the
    /// client-side item cap.
    pub fn with_item_count(mut self, n: usize) -> Self {
        self.item_count = n;
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn stream(&self, digest: u64) -> SplitMix64 {
        SplitMix64::new(digest ^ self.seed.wrapping_mul(SEED_MIX))
    }

    fn features(&self, digest: u64, kind: FeatureKind, rows: usize, cols: usize) -> FeatureTensor {
        let mut rng = self.stream(digest);
        let data = (0..rows * cols * MOCK_CHANNELS).map(|_| rng.next_unit()).collect();
        FeatureTensor::new(kind, rows, cols, MOCK_CHANNELS, data).expect("mock shape is consistent")
    }
}

const NOUNS: &[&str] = &[
    "bike", "door", "tree", "car", "dog", "cat", "bench", "lamp", "window", "boat", "house",
    "flower", "chair", "table", "cup", "bird", "cloud", "rock", "sign", "fence",
];
const COLORS: &[&str] = &["red", "green", "blue", "white", "black", "yellow", "grey", "brown"];
const ADJECTIVES: &[&str] = &["old", "small", "large", "wooden", "bright", "dark"];
const STATES: &[&str] = &["standing", "resting", "leaning", "parked", "lying"];
const PLACES: &[&str] =
    &["near the center", "on the left", "on the right", "in the background", "in the foreground"];
const MOODS: &[&str] = &["quiet", "busy", "sunny", "calm", "cozy", "rainy"];
const SETTINGS: &[&str] = &["street", "garden", "room", "harbor", "park", "yard"];
const BACKDROPS: &[&str] = &["a brick wall", "open sky", "tall trees", "a white wall", "distant hills"];
const LIGHTS: &[&str] = &["soft daylight", "warm evening", "bright noon", "cool morning"];

/// Named palette entries for the image's mean colour.
const PALETTE: &[(&str, [i32; 3])] = &[
    ("black", [0, 0, 0]),
    ("white", [255, 255, 255]),
    ("grey", [128, 128, 128]),
    ("red", [200, 40, 40]),
    ("green", [40, 160, 60]),
    ("blue", [40, 70, 200]),
    ("yellow", [220, 200, 50]),
    ("brown", [130, 90, 50]),
];

fn palette_name(image: &RgbImage) -> &'static str {
    let n = image.pixel_count() as u64;
    let mut sum = [0u64; 3];
    for px in image.as_raw().chunks_exact(3) {
        for c in 0..3 {
            sum[c] += px[c] as u64;
        }
    }
    let mean = sum.map(|s| (s / n) as i32);
    PALETTE
        .iter()
        .min_by_key(|(_, rgb)| (0..3).map(|c| (rgb[c] - mean[c]).pow(2)).sum::<i32>())
        .map(|&(name, _)| name)
        .expect("palette is non-empty")
}

impl Backend for MockBackend {
    fn describe(&self, image: &RgbImage) -> Result<DescribeResult, BackendError> {
        let mut rng = self.stream(fnv1a64(&image.canonical_bytes()));
        let mut pick = |list: &[&'static str]| list[rng.below(list.len())];

        struct Drawn {
            noun: &'static str,
            color: &'static str,
            state: &'static str,
            place: &'static str,
        }
        let mut items = Vec::with_capacity(self.item_count);
        let mut drawn = Vec::with_capacity(self.item_count);
        for i in 0..self.item_count {
            let d = Drawn { noun: pick(NOUNS), color: pick(COLORS), state: pick(STATES), place: pick(PLACES) };
            let name = match i % 3 {
                0 => String::from(d.noun),
                1 => format!("{} {}", d.color, d.noun),
                _ => format!("{} {} {}", pick(ADJECTIVES), d.color, d.noun),
            };
            let detail = format!("a {} {} {} {}", d.color, d.noun, d.state, d.place);
            items.push((name, detail));
            drawn.push(d);
        }

        let mut text = format!("A {} {} scene", pick(MOODS), pick(SETTINGS));
        if !drawn.is_empty() {
            let listed: Vec<String> =
                drawn.iter().take(3).map(|d| format!("a {} {}", d.color, d.noun)).collect();
            text.push_str(" with ");
            text.push_str(&listed.join(", "));
        }
        text.push_str(&format!(". The overall palette is {}", palette_name(image)));
        for d in drawn.iter().take(2) {
            text.push_str(&format!(". The {} is {} {}", d.noun, d.state, d.place));
        }
        text.push_str(&format!(". The background shows {} under {}.", pick(BACKDROPS), pick(LIGHTS)));
        Ok(DescribeResult { items, detail_all: text })
    }

    fn embed_image(&self, image: &RgbImage) -> Result<FeatureTensor, BackendError> {
        let digest = fnv1a64(&image.canonical_bytes());
        Ok(self.features(digest, FeatureKind::Image, MOCK_GRID, MOCK_GRID))
    }

    fn embed_text(&self, text: &str) -> Result<FeatureTensor, BackendError> {
        Ok(self.features(fnv1a64(text.as_bytes()), FeatureKind::Text, 1, 1))
    }

    fn diffuse(&self, image: &RgbImage, prompt: &str, steps: u32) -> Result<RgbImage, BackendError> {
        if steps == 0 {
            return Err(BackendError::InvalidRequest("steps must be at least 1".into()));
        }
        let mut out = image.clone();
        for _ in 0..steps.min(3) {
            out = box_blur3(&out);
        }
        let delta = prompt_delta(prompt);
        for v in out.as_raw_mut() {
            *v = (*v as i32 + delta).clamp(0, 255) as u8;
        }
        Ok(out)
    }

    fn neural_encode(&self, image: &RgbImage, quality: u8) -> Result<Vec<u8>, BackendError> {
        let bits = quality.clamp(1, 8);
        let q = quantize(image, bits).map_err(|e| BackendError::InvalidRequest(format!("{e}")))?;
        let mut out = Vec::with_capacity(9 + q.packed_len());
        out.extend_from_slice(CODEC_MAGIC);
        out.extend_from_slice(&(q.width() as u16).to_le_bytes());
        out.extend_from_slice(&(q.height() as u16).to_le_bytes());
        out.push(bits);
        out.extend_from_slice(&q.pack());
        Ok(out)
    }

    fn neural_decode(&self, bytes: &[u8]) -> Result<RgbImage, BackendError> {
        let foreign = || BackendError::Format("not a mock codec stream".into());
        if bytes.len() < 9 || &bytes[..4] != CODEC_MAGIC {
            return Err(foreign());
        }
        let w = u16::from_le_bytes([bytes[4], bytes[5]]);
        let h = u16::from_le_bytes([bytes[6], bytes[7]]);
        if w > u8::MAX as u16 || h > u8::MAX as u16 {
            return Err(foreign());
        }
        let q = QuantizedPixels::unpack(w as u8, h as u8, bytes[8], &bytes[9..])
            .map_err(|e| BackendError::Format(format!("{e}")))?;
        Ok(dequantize(&q))
    }

    fn metrics(&self, image: &RgbImage, reference: &RgbImage) -> Result<MetricRecord, BackendError> {
        if image.dimensions() != reference.dimensions() {
            return Err(BackendError::InvalidRequest("image and reference sizes differ".into()));
        }
        let sse: u64 = image
            .as_raw()
            .iter()
            .zip(reference.as_raw())
            .map(|(&a, &b)| (a as i64 - b as i64).pow(2) as u64)
            .sum();
        let mse = sse as f64 / image.as_raw().len() as f64;
        let psnr = if mse == 0.0 { PSNR_CAP } else { (10.0 * libm::log10(255.0 * 255.0 / mse)).min(PSNR_CAP) };
        let mut rec = MetricRecord::default();
        rec.push("mse", mse);
        rec.push("psnr", psnr);
        Ok(rec)
    }
}

/// 3x3 mean with edge clamping, rounded half up.
fn box_blur3(image: &RgbImage) -> RgbImage {
    let (w, h) = (image.width() as i64, image.height() as i64);
    let src = image.as_raw();
    let mut data = Vec::with_capacity(src.len());
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0u32; 3];
            for dy in -1..=1 {
                let yy = (y + dy).clamp(0, h - 1);
                for dx in -1..=1 {
                    let xx = (x + dx).clamp(0, w - 1);
                    let i = ((yy * w + xx) * 3) as usize;
                    for c in 0..3 {
                        acc[c] += src[i + c] as u32;
                    }
                }
            }
            data.extend(acc.map(|a| ((a + 4) / 9) as u8));
        }
    }
    RgbImage::from_raw(image.width(), image.height(), data).expect("same dimensions")
}
