//! Encode/decode orchestration.
//!
//! Encode: describe the image, sanitize the text, compute one binary map per
//! kept item from the backend's embeddings, compress the pixels, and assemble
//! the container. Decode: upsample the pixel payload into a reference canvas,
//! run one diffusion pass per item and keep its result only inside that
//! item's mask, then run a longer global pass prompted by the whole-image
//! description plus an aesthetic suffix.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::backend::{Backend, BackendError};
use crate::container::{ContainerError, MiscContainer, RateReport, VERSION};
use crate::map::{semantic_map, upsample_mask, BinaryMap, MapError, Mask};
use crate::pixel::{decode_pixels, encode_pixels, CodecPolicy, PixelError, PixelPayload};
use crate::raster::RgbImage;
use crate::semantic::{pack_text, sanitize, ItemBudget, SemanticError, SemanticPayload, MAX_ITEMS};

pub const DEFAULT_STEPS: u32 = 10;
pub const DEFAULT_FINAL_MULTIPLIER: u32 = 6;
pub const DEFAULT_AESTHETIC: &str = "hyper detail, masterpiece, 4K";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PipelineError {
    #[error("backend: {0}")]
    Backend(#[from] BackendError),
    #[error("map: {0}")]
    Map(#[from] MapError),
    #[error("pixel: {0}")]
    Pixel(#[from] PixelError),
    #[error("container: {0}")]
    Container(#[from] ContainerError),
    #[error("semantic: {0}")]
    Semantic(#[from] SemanticError),
    #[error("image {width}x{height} exceeds 65535 px per side")]
    ImageTooLarge { width: u32, height: u32 },
    #[error("invalid policy: {0}")]
    Policy(String),
    #[error("backend returned a {got:?} image for a {expected:?} canvas")]
    DimensionMismatch { got: (u32, u32), expected: (u32, u32) },
}

/// Per-level operating point.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelPolicy {
    pub level: u8,
    pub j_max: usize,
    /// Rows and cols of each item map; unused at level 3.
    pub map_size: u8,
    pub codec: CodecPolicy,
    pub budget: ItemBudget,
    /// Diffusion steps per item pass.
    pub steps: u32,
    /// Final pass runs `final_multiplier * steps` steps.
    pub final_multiplier: u32,
    pub aesthetic: String,
    /// Box-feather radius for item masks in pixels; 0 keeps hard masks.
    pub feather_radius: u32,
}

impl LevelPolicy {
    pub fn for_level(level: u8) -> Result<Self, PipelineError> {
        let (j_max, map_size) = match level {
            1 => (MAX_ITEMS, 8),
            2 => (MAX_ITEMS, 16),
            3 => (0, 8),
            _ => return Err(PipelineError::Policy(format!("unknown level {level}"))),
        };
        Ok(Self {
            level,
            j_max,
            map_size,
            codec: CodecPolicy::default(),
            budget: ItemBudget::default(),
            steps: DEFAULT_STEPS,
            final_multiplier: DEFAULT_FINAL_MULTIPLIER,
            aesthetic: String::from(DEFAULT_AESTHETIC),
            feather_radius: 0,
        })
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let fail = |m: &str| Err(PipelineError::Policy(String::from(m)));
        if !(1..=3).contains(&self.level) {
            return fail("level must be 1, 2 or 3");
        }
        if self.level == 3 && self.j_max != 0 {
            return fail("level 3 carries no items");
        }
        if self.j_max > MAX_ITEMS {
            return fail("j_max above 3");
        }
        if !(4..=8).contains(&self.final_multiplier) {
            return fail("final multiplier outside 4..8");
        }
        if self.steps == 0 {
            return fail("steps must be at least 1");
        }
        if self.j_max > 0 && !(8..=16).contains(&self.map_size) {
            return fail("map size outside 8..16");
        }
        if self.codec.en_th == 0 {
            return fail("en_th must be at least 1");
        }
        Ok(())
    }

    pub fn final_steps(&self) -> u32 {
        self.steps * self.final_multiplier
    }

    /// Prompt for the global pass: description, comma, aesthetic suffix.
    pub fn final_prompt(&self, detail_all: &str) -> String {
        match (detail_all.is_empty(), self.aesthetic.is_empty()) {
            (true, _) => self.aesthetic.clone(),
            (false, true) => String::from(detail_all),
            (false, false) => format!("{detail_all}, {}", self.aesthetic),
        }
    }

    fn effective_items(&self, ablation: &AblationFlags) -> usize {
        if ablation.drop_ndm {
            return 0;
        }
        let cap = self.j_max.min(self.budget.j_max);
        ablation.ndm_keep.map_or(cap, |k| cap.min(k as usize))
    }
}

/// Content to leave out of the container.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AblationFlags {
    pub drop_ndm: bool,
    pub drop_detail_all: bool,
    pub drop_bitstream: bool,
    /// Keep at most this many name-detail-map groups; `None` keeps all.
    pub ndm_keep: Option<u8>,
}

impl AblationFlags {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn validate(&self, policy: &LevelPolicy) -> Result<(), PipelineError> {
        match self.ndm_keep {
            Some(k) if k as usize > policy.j_max => {
                Err(PipelineError::Policy(format!("ndm_keep {k} above level cap {}", policy.j_max)))
            }
            _ => Ok(()),
        }
    }
}

pub fn encode<B: Backend + ?Sized>(
    image: &RgbImage,
    policy: &LevelPolicy,
    ablation: &AblationFlags,
    backend: &B,
) -> Result<MiscContainer, PipelineError> {
    policy.validate()?;
    ablation.validate(policy)?;
    let (width, height) = image.dimensions();
    if width > u16::MAX as u32 || height > u16::MAX as u32 {
        return Err(PipelineError::ImageTooLarge { width, height });
    }

    let j = policy.effective_items(ablation);
    let semantic = if j == 0 && ablation.drop_detail_all {
        SemanticPayload::default()
    } else {
        let raw = backend.describe(image)?;
        let budget = ItemBudget { j_max: j, ..policy.budget };
        let detail_all = if ablation.drop_detail_all { "" } else { raw.detail_all.as_str() };
        sanitize(&raw.items, detail_all, &budget).payload
    };

    let maps = if semantic.items.is_empty() {
        Vec::new()
    } else {
        let img_feat = backend.embed_image(image)?;
        let (nw, nh) = backend.null_image_size();
        let null = RgbImage::filled(nw.max(1), nh.max(1), [0, 0, 0]);
        let null_feat = backend.embed_image(&null)?;
        semantic
            .items
            .iter()
            .map(|item| {
                let txt = backend.embed_text(&item.name)?;
                Ok(semantic_map(&img_feat, &null_feat, &txt, policy.map_size, policy.map_size)?)
            })
            .collect::<Result<Vec<BinaryMap>, PipelineError>>()?
    };

    let pixel = if ablation.drop_bitstream {
        PixelPayload::Empty
    } else {
        encode_pixels(image, policy.level, &policy.codec, backend)?
    };

    let raw_len = pack_text(&semantic, false)?.len();
    let packed_len = pack_text(&semantic, true)?.len();
    let container = MiscContainer {
        version: VERSION,
        level: policy.level,
        text_compressed: packed_len < raw_len,
        width: width as u16,
        height: height as u16,
        semantic,
        maps,
        pixel,
    };
    container.validate()?;
    Ok(container)
}

/// Intermediate canvases of one decode.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecodeTrace {
    /// Canvas rebuilt from the pixel payload.
    pub reference: RgbImage,
    /// Canvas after each item pass, in item order.
    pub item_passes: Vec<RgbImage>,
    pub masks: Vec<Mask>,
    pub output: RgbImage,
}

impl DecodeTrace {
    /// Canvas entering the global pass.
    pub fn before_final(&self) -> &RgbImage {
        self.item_passes.last().unwrap_or(&self.reference)
    }
}

pub fn decode<B: Backend + ?Sized>(
    container: &MiscContainer,
    policy: &LevelPolicy,
    backend: &B,
) -> Result<RgbImage, PipelineError> {
    decode_trace(container, policy, backend).map(|t| t.output)
}

pub fn decode_trace<B: Backend + ?Sized>(
    container: &MiscContainer,
    policy: &LevelPolicy,
    backend: &B,
) -> Result<DecodeTrace, PipelineError> {
    policy.validate()?;
    container.validate()?;
    let (w, h) = (container.width as u32, container.height as u32);
    let reference = decode_pixels(&container.pixel, w, h, backend)?;

    let mut canvas = reference.clone();
    let mut item_passes = Vec::with_capacity(container.maps.len());
    let mut masks = Vec::with_capacity(container.maps.len());
    for (item, map) in container.semantic.items.iter().zip(&container.maps) {
        let mask = upsample_mask(map, w, h)?;
        let diffused = backend.diffuse(&canvas, &item.detail, policy.steps)?;
        check_dims(&diffused, (w, h))?;
        canvas = composite(&diffused, &canvas, &mask, policy.feather_radius);
        item_passes.push(canvas.clone());
        masks.push(mask);
    }

    let prompt = policy.final_prompt(&container.semantic.detail_all);
    let output = backend.diffuse(&canvas, &prompt, policy.final_steps())?;
    check_dims(&output, (w, h))?;
    Ok(DecodeTrace { reference, item_passes, masks, output })
}

fn check_dims(image: &RgbImage, expected: (u32, u32)) -> Result<(), PipelineError> {
    if image.dimensions() == expected {
        Ok(())
    } else {
        Err(PipelineError::DimensionMismatch { got: image.dimensions(), expected })
    }
}

/// `fg * mask + bg * (1 - mask)` per pixel. With `feather_radius > 0` the
/// mask is box-blurred first and the blend rounds half up.
pub fn composite(fg: &RgbImage, bg: &RgbImage, mask: &Mask, feather_radius: u32) -> RgbImage {
    let mut out = bg.clone();
    if feather_radius == 0 {
        for (i, &keep) in mask.bits().iter().enumerate() {
            if keep {
                out.as_raw_mut()[i * 3..i * 3 + 3].copy_from_slice(&fg.as_raw()[i * 3..i * 3 + 3]);
            }
        }
        return out;
    }
    let (weights, den) = feathered_weights(mask, feather_radius);
    for (i, &wt) in weights.iter().enumerate() {
        for c in 0..3 {
            let k = i * 3 + c;
            let v = wt * fg.as_raw()[k] as u64 + (den - wt) * bg.as_raw()[k] as u64;
            out.as_raw_mut()[k] = ((2 * v + den) / (2 * den)) as u8;
        }
    }
    out
}

/// Integer mask weights out of `den` from a clamped box blur.
fn feathered_weights(mask: &Mask, radius: u32) -> (Vec<u64>, u64) {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let r = radius as i64;
    let side = (2 * r + 1) as u64;
    let den = side * side;
    let mut out = Vec::with_capacity((w * h) as usize);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0u64;
            for dy in -r..=r {
                let yy = (y + dy).clamp(0, h - 1);
                for dx in -r..=r {
                    let xx = (x + dx).clamp(0, w - 1);
                    acc += mask.get(xx as u32, yy as u32) as u64;
                }
            }
            out.push(acc);
        }
    }
    (out, den)
}

/// Output of [`roundtrip_report`].
#[derive(Clone, Debug)]
pub struct Roundtrip {
    pub container: MiscContainer,
    pub bytes: Vec<u8>,
    pub reconstruction: RgbImage,
    pub report: RateReport,
}

/// Encode, serialize, reparse, decode and account rate in one call.
pub fn roundtrip_report<B: Backend + ?Sized>(
    image: &RgbImage,
    policy: &LevelPolicy,
    ablation: &AblationFlags,
    backend: &B,
) -> Result<Roundtrip, PipelineError> {
    let container = encode(image, policy, ablation, backend)?;
    let bytes = container.serialize()?;
    let parsed = MiscContainer::parse(&bytes)?;
    let reconstruction = decode(&parsed, policy, backend)?;
    let report = parsed.rate_report()?;
    Ok(Roundtrip { container: parsed, bytes, reconstruction, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mock::MockBackend;
    use alloc::vec;

    #[test]
    fn level_defaults() {
        let l1 = LevelPolicy::for_level(1).unwrap();
        assert_eq!((l1.j_max, l1.map_size, l1.steps, l1.final_steps()), (3, 8, 10, 60));
        assert_eq!(LevelPolicy::for_level(2).unwrap().map_size, 16);
        assert_eq!(LevelPolicy::for_level(3).unwrap().j_max, 0);
        assert!(LevelPolicy::for_level(4).is_err());
        let mut bad = l1.clone();
        bad.final_multiplier = 9;
        assert!(bad.validate().is_err());
        let mut bad = LevelPolicy::for_level(3).unwrap();
        bad.j_max = 1;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn final_prompt_joins_with_comma() {
        let p = LevelPolicy::for_level(1).unwrap();
        assert_eq!(p.final_prompt("a red bike"), "a red bike, hyper detail, masterpiece, 4K");
        assert_eq!(p.final_prompt(""), "hyper detail, masterpiece, 4K");
    }

    #[test]
    fn dropping_text_and_maps_leaves_empty_semantic() {
        let img = RgbImage::from_fn(64, 48, |x, y| [x as u8 * 3, y as u8 * 5, 77]);
        let p = LevelPolicy::for_level(1).unwrap();
        let ab = AblationFlags { drop_ndm: true, drop_detail_all: true, ..AblationFlags::none() };
        let c = encode(&img, &p, &ab, &MockBackend::new(0)).unwrap();
        assert_eq!(c.semantic, SemanticPayload::default());
        assert!(c.maps.is_empty());
        assert_eq!(pack_text(&c.semantic, c.text_compressed).unwrap(), vec![0, 0, 0]);
    }

    #[test]
    fn ndm_keep_above_cap_rejected() {
        let p = LevelPolicy::for_level(3).unwrap();
        let ab = AblationFlags { ndm_keep: Some(1), ..AblationFlags::none() };
        assert!(encode(&RgbImage::filled(8, 8, [0; 3]), &p, &ab, &MockBackend::new(0)).is_err());
    }

    #[test]
    fn feathered_composite_blends() {
        let fg = RgbImage::filled(5, 1, [200; 3]);
        let bg = RgbImage::filled(5, 1, [100; 3]);
        let mask = crate::map::expand_bits(&[false, false, true, true, true], 1, 5, 5, 1);
        let hard = composite(&fg, &bg, &mask, 0);
        assert_eq!(hard.as_raw().chunks(3).map(|p| p[0]).collect::<Vec<_>>(), [100, 100, 200, 200, 200]);
        let soft = composite(&fg, &bg, &mask, 1);
        let row: Vec<u8> = soft.as_raw().chunks(3).map(|p| p[0]).collect();
        assert_eq!(row[0], 100);
        assert!(row[1] > 100 && row[1] < 200);
        assert_eq!(row[4], 200);
    }

    #[test]
    fn oversized_image_rejected() {
        let p = LevelPolicy::for_level(1).unwrap();
        let img = RgbImage::filled(65_536, 1, [0; 3]);
        let err = encode(&img, &p, &AblationFlags::none(), &MockBackend::new(0)).unwrap_err();
        assert_eq!(err, PipelineError::ImageTooLarge { width: 65_536, height: 1 });
    }
}
