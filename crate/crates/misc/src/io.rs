//! Raster files. PNG and binary PPM in, PNG out.

use std::io::Cursor;
use std::path::Path;

use image::{ImageError, ImageFormat};
use misc_core::RgbImage;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Format(String),
}

fn classify(e: ImageError, path: Option<&Path>) -> RasterError {
    let name = path.map(|p| p.display().to_string()).unwrap_or_else(|| "<memory>".into());
    match e {
        ImageError::IoError(source) => RasterError::Io { path: name, source },
        other => RasterError::Format(format!("{name}: {other}")),
    }
}

fn from_dynamic(img: image::DynamicImage) -> RgbImage {
    let rgb = img.into_rgb8();
    let (w, h) = rgb.dimensions();
    RgbImage::from_raw(w, h, rgb.into_raw()).expect("rgb8 buffer matches its dimensions")
}

/// Reads a PNG or PPM file, sniffing the format from its contents.
pub fn read_image(path: &Path) -> Result<RgbImage, RasterError> {
    let bytes = std::fs::read(path).map_err(|source| RasterError::Io { path: path.display().to_string(), source })?;
    let img = image::load_from_memory(&bytes).map_err(|e| classify(e, Some(path)))?;
    Ok(from_dynamic(img))
}

pub fn write_png(path: &Path, img: &RgbImage) -> Result<(), RasterError> {
    let bytes = encode_png(img)?;
    std::fs::write(path, bytes).map_err(|source| RasterError::Io { path: path.display().to_string(), source })
}

pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>, RasterError> {
    let buf = image::RgbImage::from_raw(img.width(), img.height(), img.as_raw().to_vec())
        .ok_or_else(|| RasterError::Format("raster buffer does not match its dimensions".into()))?;
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png).map_err(|e| classify(e, None))?;
    Ok(out.into_inner())
}

pub fn decode_png(bytes: &[u8]) -> Result<RgbImage, RasterError> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png).map_err(|e| classify(e, None))?;
    Ok(from_dynamic(img))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_roundtrip_is_lossless() {
        let img = RgbImage::from_fn(13, 7, |x, y| [(x * 19) as u8, (y * 31) as u8, (x ^ y) as u8]);
        assert_eq!(decode_png(&encode_png(&img).unwrap()).unwrap(), img);
    }

    #[test]
    fn reads_ppm() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ppm");
        let mut bytes = b"P6\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3, 250, 251, 252]);
        std::fs::write(&path, bytes).unwrap();
        let img = read_image(&path).unwrap();
        assert_eq!(img.pixel(1, 0), [250, 251, 252]);
    }

    #[test]
    fn missing_and_garbage_files_are_distinguished() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(read_image(&dir.path().join("nope.png")), Err(RasterError::Io { .. })));
        let junk = dir.path().join("junk.png");
        std::fs::write(&junk, b"not an image").unwrap();
        assert!(matches!(read_image(&junk), Err(RasterError::Format(_))));
    }
}
