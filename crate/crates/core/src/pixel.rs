//! The extreme pixel pathway.
//!
//! The image is box-downsampled to a tiny raster. If that raster is still at
//! least `en_th` pixels on its longest side it goes to the backend's learned
//! codec; otherwise each channel value is uniformly quantized and stored as
//! packed indices. Decoding inverts whichever branch was taken and
//! bicubic-upsamples back to the original size.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::backend::{Backend, BackendError};
use crate::raster::RgbImage;
use crate::resample::{bicubic_upsample, downsample};

/// Canvas used when the pixel payload was dropped.
pub const MID_GRAY: [u8; 3] = [128, 128, 128];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PixelError {
    #[error("bits per channel {0} outside 1..8")]
    Bits(u8),
    #[error("zero-size target")]
    ZeroTarget,
    #[error("unknown level {0}")]
    Level(u8),
    #[error("downsampled side {0} does not fit the quantized payload (max 255)")]
    TooLarge(u32),
    #[error("packed pixels have {got} bytes, expected {expected}")]
    PackedLength { got: usize, expected: usize },
    #[error("packed pixels have non-zero padding bits")]
    Padding,
    #[error("index {index} out of range for {bits} bits")]
    IndexRange { index: u8, bits: u8 },
    #[error("neural payload is empty")]
    EmptyNeural,
    #[error("payload {payload:?} inconsistent with target {target:?}")]
    Inconsistent { payload: (u32, u32), target: (u32, u32) },
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Branch {
    Neural,
    Quantized,
}

/// Uniformly quantized raster: one index per channel, `bits` wide.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct QuantizedPixels {
    width: u8,
    height: u8,
    bits: u8,
    indices: Vec<u8>,
}

impl QuantizedPixels {
    pub fn new(width: u8, height: u8, bits: u8, indices: Vec<u8>) -> Result<Self, PixelError> {
        check_bits(bits)?;
        if width == 0 || height == 0 {
            return Err(PixelError::ZeroTarget);
        }
        let expected = width as usize * height as usize * 3;
        if indices.len() != expected {
            return Err(PixelError::PackedLength { got: indices.len(), expected });
        }
        let max = levels(bits) as u8;
        if let Some(&index) = indices.iter().find(|&&i| i > max) {
            return Err(PixelError::IndexRange { index, bits });
        }
        Ok(Self { width, height, bits, indices })
    }

    pub fn width(&self) -> u8 {
        self.width
    }

    pub fn height(&self) -> u8 {
        self.height
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn indices(&self) -> &[u8] {
        &self.indices
    }

    pub fn packed_len(&self) -> usize {
        packed_len(self.width, self.height, self.bits)
    }

    /// Channel-interleaved, row-major, most significant bit first.
    pub fn pack(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.packed_len()];
        let b = self.bits as usize;
        for (i, &idx) in self.indices.iter().enumerate() {
            for k in 0..b {
                if idx >> (b - 1 - k) & 1 == 1 {
                    let pos = i * b + k;
                    out[pos / 8] |= 0x80 >> (pos % 8);
                }
            }
        }
        out
    }

    pub fn unpack(width: u8, height: u8, bits: u8, bytes: &[u8]) -> Result<Self, PixelError> {
        check_bits(bits)?;
        if width == 0 || height == 0 {
            return Err(PixelError::ZeroTarget);
        }
        let expected = packed_len(width, height, bits);
        if bytes.len() != expected {
            return Err(PixelError::PackedLength { got: bytes.len(), expected });
        }
        let b = bits as usize;
        let count = width as usize * height as usize * 3;
        let used = count * b;
        if !used.is_multiple_of(8) && bytes[expected - 1] & (0xFF >> (used % 8)) != 0 {
            return Err(PixelError::Padding);
        }
        let indices = (0..count)
            .map(|i| {
                (0..b).fold(0u8, |acc, k| {
                    let pos = i * b + k;
                    (acc << 1) | ((bytes[pos / 8] >> (7 - pos % 8)) & 1)
                })
            })
            .collect();
        Ok(Self { width, height, bits, indices })
    }
}

pub(crate) fn packed_len(width: u8, height: u8, bits: u8) -> usize {
    (width as usize * height as usize * 3 * bits as usize).div_ceil(8)
}

/// The pixel section's payload.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum PixelPayload {
    /// Content dropped; decodes to a flat mid-gray canvas.
    Empty,
    Quantized(QuantizedPixels),
    /// Opaque learned-codec bitstream.
    Neural(Vec<u8>),
}

impl PixelPayload {
    pub fn branch(&self) -> Option<Branch> {
        match self {
            Self::Empty => None,
            Self::Quantized(_) => Some(Branch::Quantized),
            Self::Neural(_) => Some(Branch::Neural),
        }
    }

    pub fn is_neural(&self) -> bool {
        matches!(self, Self::Neural(_))
    }

    /// Downsample factor: original longest side over stored longest side.
    /// Unknown for neural and empty payloads.
    pub fn downsample_factor(&self, width: u32, height: u32) -> Option<f64> {
        match self {
            Self::Quantized(q) => Some(width.max(height) as f64 / q.width.max(q.height) as f64),
            _ => None,
        }
    }
}

/// Downsample target and bit depth for one level.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PixelDefaults {
    pub target_longest: u32,
    pub bits: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CodecPolicy {
    /// Smallest longest side (pixels) the learned codec accepts.
    pub en_th: u32,
    /// Defaults for levels 1, 2 and 3.
    pub levels: [PixelDefaults; 3],
}

impl Default for CodecPolicy {
    fn default() -> Self {
        Self {
            en_th: 64,
            levels: [
                PixelDefaults { target_longest: 16, bits: 4 },
                PixelDefaults { target_longest: 24, bits: 4 },
                PixelDefaults { target_longest: 32, bits: 3 },
            ],
        }
    }
}

impl CodecPolicy {
    pub fn defaults(&self, level: u8) -> Result<PixelDefaults, PixelError> {
        match level {
            1..=3 => Ok(self.levels[level as usize - 1]),
            _ => Err(PixelError::Level(level)),
        }
    }
}

/// Neural iff the downsampled longest side still reaches `en_th`.
pub fn choose_branch(orig_longest: u32, x: f64, policy: &CodecPolicy) -> Branch {
    if orig_longest as f64 / x >= policy.en_th as f64 {
        Branch::Neural
    } else {
        Branch::Quantized
    }
}

fn check_bits(bits: u8) -> Result<(), PixelError> {
    if (1..=8).contains(&bits) {
        Ok(())
    } else {
        Err(PixelError::Bits(bits))
    }
}

#[inline]
fn levels(bits: u8) -> u32 {
    (1u32 << bits) - 1
}

/// `round(v * (2^b - 1) / 255)`, half up.
#[inline]
pub fn quantize_value(v: u8, bits: u8) -> u8 {
    let m = levels(bits);
    ((2 * v as u32 * m + 255) / 510) as u8
}

/// `round(index * 255 / (2^b - 1))`, half up.
#[inline]
pub fn dequantize_value(index: u8, bits: u8) -> u8 {
    let m = levels(bits);
    ((2 * index as u32 * 255 + m) / (2 * m)) as u8
}

pub fn quantize(image: &RgbImage, bits: u8) -> Result<QuantizedPixels, PixelError> {
    check_bits(bits)?;
    let (w, h) = image.dimensions();
    if w > u8::MAX as u32 || h > u8::MAX as u32 {
        return Err(PixelError::TooLarge(w.max(h)));
    }
    let indices = image.as_raw().iter().map(|&v| quantize_value(v, bits)).collect();
    Ok(QuantizedPixels { width: w as u8, height: h as u8, bits, indices })
}

pub fn dequantize(q: &QuantizedPixels) -> RgbImage {
    let data = q.indices.iter().map(|&i| dequantize_value(i, q.bits)).collect();
    RgbImage::from_raw(q.width as u32, q.height as u32, data).expect("validated dimensions")
}

pub fn encode_pixels<B: Backend + ?Sized>(
    image: &RgbImage,
    level: u8,
    policy: &CodecPolicy,
    backend: &B,
) -> Result<PixelPayload, PixelError> {
    let defaults = policy.defaults(level)?;
    let small = downsample(image, defaults.target_longest).ok_or(PixelError::ZeroTarget)?;
    let x = image.longest_side() as f64 / small.longest_side() as f64;
    match choose_branch(image.longest_side(), x, policy) {
        Branch::Neural => {
            let blob = backend.neural_encode(&small, defaults.bits)?;
            if blob.is_empty() {
                return Err(PixelError::EmptyNeural);
            }
            Ok(PixelPayload::Neural(blob))
        }
        Branch::Quantized => Ok(PixelPayload::Quantized(quantize(&small, defaults.bits)?)),
    }
}

/// Reference canvas at the original size.
pub fn decode_pixels<B: Backend + ?Sized>(
    payload: &PixelPayload,
    width: u32,
    height: u32,
    backend: &B,
) -> Result<RgbImage, PixelError> {
    if width == 0 || height == 0 {
        return Err(PixelError::ZeroTarget);
    }
    let small = match payload {
        PixelPayload::Empty => return Ok(RgbImage::filled(width, height, MID_GRAY)),
        PixelPayload::Quantized(q) => dequantize(q),
        PixelPayload::Neural(blob) => backend.neural_decode(blob)?,
    };
    if small.width() > width || small.height() > height {
        return Err(PixelError::Inconsistent { payload: small.dimensions(), target: (width, height) });
    }
    Ok(bicubic_upsample(&small, width, height).expect("non-zero target"))
}
