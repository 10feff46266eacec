//! Per-item semantic maps.
//!
//! An item's map is derived from image/text embedding grids. The image grid
//! is multiplied by the text vector (broadcast over positions), a redundancy
//! bias is taken from the same product against an empty image, and the
//! channel sum of the de-biased product gives a scalar field. That field is
//! area-pooled to an 8..16 square-ish grid and thresholded into a
//! [`BinaryMap`], which the decoder expands back into a full-resolution mask.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::resample::area_pool_plane;

pub const MAP_MIN_DIM: u8 = 8;
pub const MAP_MAX_DIM: u8 = 16;

/// Fields whose range is below this are treated as constant.
const DEGENERATE_RANGE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MapError {
    #[error("channel mismatch: image has {image}, text has {text}")]
    ChannelMismatch { image: usize, text: usize },
    #[error("grid mismatch: {left:?} vs {right:?}")]
    GridMismatch { left: (usize, usize), right: (usize, usize) },
    #[error("expected a {expected:?} tensor")]
    WrongKind { expected: FeatureKind },
    #[error("tensor shape {rows}x{cols}x{channels} does not match {len} values")]
    Shape { rows: usize, cols: usize, channels: usize, len: usize },
    #[error("tensor contains non-finite values")]
    NonFinite,
    #[error("map dimensions {rows}x{cols} outside 8..16")]
    MapDims { rows: usize, cols: usize },
    #[error("map target {target:?} larger than source grid {grid:?}")]
    TargetTooLarge { target: (usize, usize), grid: (usize, usize) },
    #[error("mask {width}x{height} smaller than map {rows}x{cols}")]
    MaskTooSmall { width: u32, height: u32, rows: usize, cols: usize },
    #[error("packed map has {got} bytes, expected {expected}")]
    PackedLength { got: usize, expected: usize },
    #[error("packed map has non-zero padding bits")]
    Padding,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FeatureKind {
    Image,
    Text,
}

/// Dense features, row-major `(row, col, channel)`. Text tensors are 1x1.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTensor {
    kind: FeatureKind,
    rows: usize,
    cols: usize,
    channels: usize,
    data: Vec<f64>,
}

impl FeatureTensor {
    pub fn new(
        kind: FeatureKind,
        rows: usize,
        cols: usize,
        channels: usize,
        data: Vec<f64>,
    ) -> Result<Self, MapError> {
        let shape_err = MapError::Shape { rows, cols, channels, len: data.len() };
        if channels == 0 || rows == 0 || cols == 0 {
            return Err(shape_err);
        }
        if kind == FeatureKind::Text && (rows, cols) != (1, 1) {
            return Err(shape_err);
        }
        if rows.checked_mul(cols).and_then(|n| n.checked_mul(channels)) != Some(data.len()) {
            return Err(shape_err);
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(MapError::NonFinite);
        }
        Ok(Self { kind, rows, cols, channels, data })
    }

    pub fn text(data: Vec<f64>) -> Result<Self, MapError> {
        let n = data.len();
        Self::new(FeatureKind::Text, 1, 1, n, data)
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[(row * self.cols + col) * self.channels + channel]
    }

    fn positions(&self) -> core::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.channels)
    }

    fn expect_kind(&self, expected: FeatureKind) -> Result<(), MapError> {
        if self.kind == expected {
            Ok(())
        } else {
            Err(MapError::WrongKind { expected })
        }
    }
}

/// Real-valued map over a feature grid, before pooling.
#[derive(Clone, Debug, PartialEq)]
pub struct RawMap {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl RawMap {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self, MapError> {
        if rows == 0 || cols == 0 || rows * cols != values.len() {
            return Err(MapError::Shape { rows, cols, channels: 1, len: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(MapError::NonFinite);
        }
        Ok(Self { rows, cols, values })
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `a * value + b` at every position.
    pub fn affine(&self, a: f64, b: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, values: self.values.iter().map(|v| a * v + b).collect() }
    }
}

/// Binary item map, 8..16 cells per side.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryMap {
    rows: u8,
    cols: u8,
    bits: Vec<bool>,
}

impl BinaryMap {
    pub fn new(rows: u8, cols: u8, bits: Vec<bool>) -> Result<Self, MapError> {
        check_map_dims(rows as usize, cols as usize)?;
        if bits.len() != rows as usize * cols as usize {
            return Err(MapError::Shape { rows: rows as usize, cols: cols as usize, channels: 1, len: bits.len() });
        }
        Ok(Self { rows, cols, bits })
    }

    pub fn filled(rows: u8, cols: u8, value: bool) -> Result<Self, MapError> {
        Self::new(rows, cols, vec![value; rows as usize * cols as usize])
    }

    pub fn rows(&self) -> u8 {
        self.rows
    }

    pub fn cols(&self) -> u8 {
        self.cols
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.cols as usize + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.cols as usize + col] = value;
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Byte length of the packed bit payload.
    pub fn packed_len(&self) -> usize {
        self.bits.len().div_ceil(8)
    }

    /// Row-major, most significant bit first; trailing pad bits are zero.
    pub fn pack(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.packed_len()];
        for (i, &b) in self.bits.iter().enumerate() {
            if b {
                out[i / 8] |= 0x80 >> (i % 8);
            }
        }
        out
    }

    pub fn unpack(rows: u8, cols: u8, bytes: &[u8]) -> Result<Self, MapError> {
        check_map_dims(rows as usize, cols as usize)?;
        let n = rows as usize * cols as usize;
        let expected = n.div_ceil(8);
        if bytes.len() != expected {
            return Err(MapError::PackedLength { got: bytes.len(), expected });
        }
        if !n.is_multiple_of(8) && bytes[expected - 1] & (0xFF >> (n % 8)) != 0 {
            return Err(MapError::Padding);
        }
        let bits = (0..n).map(|i| bytes[i / 8] & (0x80 >> (i % 8)) != 0).collect();
        Ok(Self { rows, cols, bits })
    }
}

fn check_map_dims(rows: usize, cols: usize) -> Result<(), MapError> {
    let ok = |d: usize| (MAP_MIN_DIM as usize..=MAP_MAX_DIM as usize).contains(&d);
    if ok(rows) && ok(cols) {
        Ok(())
    } else {
        Err(MapError::MapDims { rows, cols })
    }
}

fn check_channels(img: &FeatureTensor, txt: &FeatureTensor) -> Result<(), MapError> {
    img.expect_kind(FeatureKind::Image)?;
    txt.expect_kind(FeatureKind::Text)?;
    if img.channels != txt.channels {
        return Err(MapError::ChannelMismatch { image: img.channels, text: txt.channels });
    }
    Ok(())
}

/// Image features scaled channel-wise by the text vector at every position.
pub fn feature_product(img: &FeatureTensor, txt: &FeatureTensor) -> Result<FeatureTensor, MapError> {
    check_channels(img, txt)?;
    let data = img
        .positions()
        .flat_map(|px| px.iter().zip(&txt.data).map(|(a, b)| a * b))
        .collect();
    Ok(FeatureTensor { data, ..*img })
}

/// Per-position bias: channel sum of the empty-image features times the text
/// vector.
pub fn redundancy_bias(null_img: &FeatureTensor, txt: &FeatureTensor) -> Result<RawMap, MapError> {
    check_channels(null_img, txt)?;
    let values = null_img
        .positions()
        .map(|px| px.iter().zip(&txt.data).map(|(a, b)| a * b).sum())
        .collect();
    Ok(RawMap { rows: null_img.rows, cols: null_img.cols, values })
}

/// Channel sum of the product minus its bias-scaled redundant part.
pub fn raw_map(product: &FeatureTensor, bias: &RawMap) -> Result<RawMap, MapError> {
    product.expect_kind(FeatureKind::Image)?;
    if product.grid() != bias.grid() {
        return Err(MapError::GridMismatch { left: product.grid(), right: bias.grid() });
    }
    let values = product
        .positions()
        .zip(&bias.values)
        .map(|(px, &w)| px.iter().map(|&f| f - f * w).sum())
        .collect();
    Ok(RawMap { rows: product.rows, cols: product.cols, values })
}

/// Area-pools the field onto `rows x cols`, min-max normalizes, and keeps
/// cells at or above 0.5. A constant field maps to all ones.
pub fn binarize_pool(map: &RawMap, rows: u8, cols: u8) -> Result<BinaryMap, MapError> {
    check_map_dims(rows as usize, cols as usize)?;
    if rows as usize > map.rows || cols as usize > map.cols {
        return Err(MapError::TargetTooLarge {
            target: (rows as usize, cols as usize),
            grid: map.grid(),
        });
    }
    let bits = pool_threshold(map, rows as usize, cols as usize);
    Ok(BinaryMap { rows, cols, bits })
}

pub(crate) fn pool_threshold(map: &RawMap, rows: usize, cols: usize) -> Vec<bool> {
    let pooled = area_pool_plane(&map.values, map.cols, map.rows, cols, rows);
    let min = pooled.iter().copied().fold(f64::INFINITY, f64::min);
    let max = pooled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    if range.is_nan() || range < DEGENERATE_RANGE {
        return vec![true; pooled.len()];
    }
    pooled.iter().map(|&v| (v - min) / range >= 0.5).collect()
}

/// The whole chain for one item: embeddings in, binary map out.
pub fn semantic_map(
    img: &FeatureTensor,
    null_img: &FeatureTensor,
    txt: &FeatureTensor,
    rows: u8,
    cols: u8,
) -> Result<BinaryMap, MapError> {
    let product = feature_product(img, txt)?;
    let bias = redundancy_bias(null_img, txt)?;
    let field = raw_map(&product, &bias)?;
    binarize_pool(&field, rows, cols)
}

/// Full-resolution binary mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl Mask {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Nearest-neighbour expansion: each pixel takes the cell containing its
/// centre.
pub fn upsample_mask(map: &BinaryMap, width: u32, height: u32) -> Result<Mask, MapError> {
    if width < map.cols as u32 || height < map.rows as u32 {
        return Err(MapError::MaskTooSmall {
            width,
            height,
            rows: map.rows as usize,
            cols: map.cols as usize,
        });
    }
    Ok(expand_bits(&map.bits, map.rows as usize, map.cols as usize, width, height))
}

pub(crate) fn expand_bits(bits: &[bool], rows: usize, cols: usize, width: u32, height: u32) -> Mask {
    let (w, h) = (width as u64, height as u64);
    let col_of: Vec<usize> = (0..w).map(|x| ((2 * x + 1) * cols as u64 / (2 * w)) as usize).collect();
    let mut out = Vec::with_capacity((w * h) as usize);
    for y in 0..h {
        let r = ((2 * y + 1) * rows as u64 / (2 * h)) as usize;
        out.extend(col_of.iter().map(|&c| bits[r * cols + c]));
    }
    Mask { width, height, bits: out }
}
