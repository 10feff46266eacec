//! Area-weighted box resampling and cubic-convolution upsampling.
//!
//! Box weights are exact integers: with source length `s` and target length
//! `d`, source pixel `k` spans `[k*d, (k+1)*d)` and target cell `i` spans
//! `[i*s, (i+1)*s)` on a common integer axis, so each weight is an integer
//! overlap and every cell's weights sum to `s`.

use alloc::vec;
use alloc::vec::Vec;

use crate::raster::RgbImage;

/// Cubic convolution parameter.
pub const CUBIC_A: f64 = -0.5;

/// For each target index, the `(source index, integer weight)` pairs. The
/// weights of each entry sum to `src`.
pub(crate) fn box_weights(src: usize, dst: usize) -> Vec<Vec<(usize, u64)>> {
    debug_assert!(src > 0 && dst > 0);
    (0..dst)
        .map(|i| {
            let lo = (i * src) as u64;
            let hi = ((i + 1) * src) as u64;
            let first = lo as usize / dst;
            let last = ((hi - 1) as usize / dst).min(src - 1);
            (first..=last)
                .filter_map(|k| {
                    let a = (k * dst) as u64;
                    let b = ((k + 1) * dst) as u64;
                    let w = hi.min(b).saturating_sub(lo.max(a));
                    (w > 0).then_some((k, w))
                })
                .collect()
        })
        .collect()
}

/// Area-weighted average pooling of a row-major plane.
pub fn area_pool_plane(src: &[f64], sw: usize, sh: usize, dw: usize, dh: usize) -> Vec<f64> {
    assert_eq!(src.len(), sw * sh);
    let wx = box_weights(sw, dw);
    let wy = box_weights(sh, dh);
    let norm = (sw * sh) as f64;
    let mut out = Vec::with_capacity(dw * dh);
    for row in &wy {
        for col in &wx {
            let mut acc = 0.0;
            for &(y, wyv) in row {
                for &(x, wxv) in col {
                    acc += (wyv * wxv) as f64 * src[y * sw + x];
                }
            }
            out.push(acc / norm);
        }
    }
    out
}

/// Target dimensions with the longest side set to `target_longest` and the
/// other side scaled with round-half-up, never below 1.
pub fn scaled_dims(width: u32, height: u32, target_longest: u32) -> (u32, u32) {
    let scale = |short: u32, long: u32| -> u32 {
        let num = 2 * short as u64 * target_longest as u64 + long as u64;
        ((num / (2 * long as u64)) as u32).max(1)
    };
    if width >= height {
        (target_longest, scale(height, width))
    } else {
        (scale(width, height), target_longest)
    }
}

/// Box-filter downsample so the longest side equals `target_longest`.
/// Integer arithmetic throughout; cell means round half up.
pub fn downsample(image: &RgbImage, target_longest: u32) -> Option<RgbImage> {
    if target_longest == 0 {
        return None;
    }
    let (dw, dh) = scaled_dims(image.width(), image.height(), target_longest);
    Some(box_resize(image, dw, dh))
}

pub(crate) fn box_resize(image: &RgbImage, dw: u32, dh: u32) -> RgbImage {
    let (sw, sh) = (image.width() as usize, image.height() as usize);
    let wx = box_weights(sw, dw as usize);
    let wy = box_weights(sh, dh as usize);
    let den = (sw * sh) as u64;
    let src = image.as_raw();
    let mut data = Vec::with_capacity(dw as usize * dh as usize * 3);
    for row in &wy {
        for col in &wx {
            let mut acc = [0u64; 3];
            for &(y, wyv) in row {
                for &(x, wxv) in col {
                    let i = (y * sw + x) * 3;
                    let w = wyv * wxv;
                    for c in 0..3 {
                        acc[c] += w * src[i + c] as u64;
                    }
                }
            }
            for a in acc {
                data.push(((2 * a + den) / (2 * den)) as u8);
            }
        }
    }
    RgbImage::from_raw(dw, dh, data).expect("dimensions match")
}

/// Keys cubic convolution kernel with parameter [`CUBIC_A`].
pub fn cubic_kernel(t: f64) -> f64 {
    let a = CUBIC_A;
    let t = t.abs();
    if t <= 1.0 {
        ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a
    } else {
        0.0
    }
}

/// Four-tap indices and weights for each target sample along one axis.
/// Sample centres are aligned: target `i` maps to source `(i+0.5)*s/d - 0.5`;
/// out-of-range taps clamp to the edge.
fn cubic_taps(src: usize, dst: usize) -> Vec<[(usize, f64); 4]> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let pos = (i as f64 + 0.5) * scale - 0.5;
            let base = libm::floor(pos);
            let frac = pos - base;
            let base = base as i64;
            let mut taps = [(0usize, 0.0); 4];
            for (k, tap) in taps.iter_mut().enumerate() {
                let idx = (base - 1 + k as i64).clamp(0, src as i64 - 1) as usize;
                *tap = (idx, cubic_kernel(frac - (k as f64 - 1.0)));
            }
            taps
        })
        .collect()
}

/// Separable cubic-convolution resize of a row-major `f64` plane, unclipped.
pub fn bicubic_resize_plane(src: &[f64], sw: usize, sh: usize, dw: usize, dh: usize) -> Vec<f64> {
    assert_eq!(src.len(), sw * sh);
    let tx = cubic_taps(sw, dw);
    let ty = cubic_taps(sh, dh);
    let mut horiz = vec![0.0; dw * sh];
    for y in 0..sh {
        let row = &src[y * sw..(y + 1) * sw];
        for (x, taps) in tx.iter().enumerate() {
            horiz[y * dw + x] = taps.iter().map(|&(i, w)| w * row[i]).sum();
        }
    }
    let mut out = vec![0.0; dw * dh];
    for (y, taps) in ty.iter().enumerate() {
        for x in 0..dw {
            out[y * dw + x] = taps.iter().map(|&(i, w)| w * horiz[i * dw + x]).sum();
        }
    }
    out
}

/// Bicubic upsample of an 8-bit raster; output clipped to [0, 255] and
/// rounded half up.
pub fn bicubic_upsample(image: &RgbImage, width: u32, height: u32) -> Option<RgbImage> {
    if width == 0 || height == 0 {
        return None;
    }
    let (sw, sh) = (image.width() as usize, image.height() as usize);
    let (dw, dh) = (width as usize, height as usize);
    let planes: Vec<Vec<f64>> = (0..3)
        .map(|c| bicubic_resize_plane(&image.channel_plane(c), sw, sh, dw, dh))
        .collect();
    let mut data = Vec::with_capacity(dw * dh * 3);
    for i in 0..dw * dh {
        for plane in &planes {
            data.push(libm::floor(plane[i].clamp(0.0, 255.0) + 0.5) as u8);
        }
    }
    RgbImage::from_raw(width, height, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_weights_partition() {
        for src in 1..20 {
            for dst in 1..20 {
                for cell in box_weights(src, dst) {
                    assert_eq!(cell.iter().map(|&(_, w)| w).sum::<u64>(), src as u64);
                }
            }
        }
    }

    #[test]
    fn checkerboard_downsamples_to_mid_gray() {
        let img = RgbImage::from_fn(4, 4, |x, y| if (x + y) % 2 == 0 { [0; 3] } else { [255; 3] });
        let small = downsample(&img, 2).unwrap();
        assert_eq!(small, RgbImage::filled(2, 2, [128; 3]));
    }

    #[test]
    fn scaled_dims_rounds_half_up() {
        assert_eq!(scaled_dims(512, 512, 16), (16, 16));
        assert_eq!(scaled_dims(512, 384, 16), (16, 12));
        assert_eq!(scaled_dims(100, 10, 5), (5, 1));
        assert_eq!(scaled_dims(100, 1, 5), (5, 1));
        assert_eq!(scaled_dims(30, 45, 2), (1, 2));
        assert_eq!(scaled_dims(4, 6, 4), (3, 4));
    }

    #[test]
    fn kernel_partition_of_unity() {
        for i in 0..100 {
            let f = i as f64 / 100.0;
            let s: f64 = (-1..=2).map(|k| cubic_kernel(f - k as f64)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert_eq!(cubic_kernel(0.0), 1.0);
        assert_eq!(cubic_kernel(1.0), 0.0);
        assert_eq!(cubic_kernel(2.0), 0.0);
    }

    #[test]
    fn constant_survives_resampling() {
        let img = RgbImage::filled(7, 5, [13, 200, 77]);
        assert_eq!(bicubic_upsample(&img, 31, 19).unwrap(), RgbImage::filled(31, 19, [13, 200, 77]));
        assert_eq!(downsample(&img, 3).unwrap(), RgbImage::filled(3, 2, [13, 200, 77]));
    }

    #[test]
    fn zero_targets_rejected() {
        let img = RgbImage::filled(2, 2, [0; 3]);
        assert!(downsample(&img, 0).is_none());
        assert!(bicubic_upsample(&img, 0, 3).is_none());
    }
}
