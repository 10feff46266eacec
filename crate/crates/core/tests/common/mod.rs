#![allow(dead_code)]

use misc_core::mock::SplitMix64;
use misc_core::RgbImage;

/// Ten deterministic 512x512 test rasters of varied content.
pub fn test_rasters() -> Vec<RgbImage> {
    (0..10).map(|k| test_raster(k, 512, 512)).collect()
}

pub fn test_raster(kind: u64, w: u32, h: u32) -> RgbImage {
    let mut rng = SplitMix64::new(0xC0FFEE ^ kind);
    let noise: Vec<u8> = (0..(w * h * 3)).map(|_| rng.next_u64() as u8).collect();
    let blobs: Vec<(f64, f64, f64, [u8; 3])> = (0..6)
        .map(|_| {
            let cx = rng.below(w as usize) as f64;
            let cy = rng.below(h as usize) as f64;
            let r = 20.0 + rng.below(120) as f64;
            (cx, cy, r, [rng.next_u64() as u8, rng.next_u64() as u8, rng.next_u64() as u8])
        })
        .collect();
    RgbImage::from_fn(w, h, |x, y| {
        let i = ((y * w + x) * 3) as usize;
        let shift = (kind * 37) as u32;
        let grad = [
            ((x * 255 / w + shift) % 256) as u8,
            ((y * 255 / h + 2 * shift) % 256) as u8,
            ((x + y) * 127 / (w + h)) as u8,
        ];
        match kind % 5 {
            0 => grad,
            1 => [noise[i], noise[i + 1], noise[i + 2]],
            2 => if (x / 32 + y / 32) % 2 == 0 { [230, 220, 200] } else { [30, 40, 60] },
            3 => {
                let mut px = [90, 140, 200];
                for &(cx, cy, r, c) in &blobs {
                    if (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) < r * r {
                        px = c;
                    }
                }
                px
            }
            _ => [grad[0] / 2 + noise[i] / 4, grad[1] / 2 + noise[i + 1] / 4, 100],
        }
    })
}

use misc_core::map::BinaryMap;
use misc_core::pixel::{PixelPayload, QuantizedPixels};
use misc_core::semantic::{Item, SemanticPayload};
use misc_core::MiscContainer;

const WORDS: &[&str] = &[
    "red", "bike", "door", "tree", "a", "the", "leaning", "on", "café", "日本", "state-of-the-art",
    "x", "grey", "sky", "über", "window",
];

fn words(rng: &mut SplitMix64, max: usize) -> String {
    let n = rng.below(max + 1);
    (0..n).map(|_| WORDS[rng.below(WORDS.len())]).collect::<Vec<_>>().join(" ")
}

/// A random container satisfying every invariant.
pub fn random_container(seed: u64) -> MiscContainer {
    let mut rng = SplitMix64::new(seed);
    let level = 1 + rng.below(3) as u8;
    let j = if level == 3 { 0 } else { rng.below(4) };
    let items = (0..j).map(|_| Item::new(words(&mut rng, 3), words(&mut rng, 10))).collect();
    let semantic = SemanticPayload::new(items, words(&mut rng, 60));
    let maps = (0..j)
        .map(|_| {
            let rows = 8 + rng.below(9) as u8;
            let cols = 8 + rng.below(9) as u8;
            let bits = (0..rows as usize * cols as usize).map(|_| rng.next_u64() & 1 == 1).collect();
            BinaryMap::new(rows, cols, bits).unwrap()
        })
        .collect();
    let pixel = match rng.below(3) {
        0 => PixelPayload::Empty,
        1 => {
            let w = 1 + rng.below(40) as u8;
            let h = 1 + rng.below(40) as u8;
            let bits = 1 + rng.below(8) as u8;
            let max = (1u32 << bits) - 1;
            let idx = (0..w as usize * h as usize * 3).map(|_| (rng.next_u64() % (max as u64 + 1)) as u8).collect();
            PixelPayload::Quantized(QuantizedPixels::new(w, h, bits, idx).unwrap())
        }
        _ => PixelPayload::Neural((0..1 + rng.below(100)).map(|_| rng.next_u64() as u8).collect()),
    };
    MiscContainer {
        version: 1,
        level,
        text_compressed: rng.next_u64() & 1 == 1,
        width: 1 + rng.below(65535) as u16,
        height: 1 + rng.below(65535) as u16,
        semantic,
        maps,
        pixel,
    }
}
