//! Image files: 8-bit PNG and a lossless raw `f64` format (`.rgbf`).
//!
//! Raw layout: the 8 bytes `RGBF64\0\0`, width and height as little-endian
//! `u64`, then `width * height * 3` little-endian `f64` values, row-major,
//! interleaved RGB.

use std::fs;
use std::path::Path;

use resgs_core::Image;

use crate::error::{Error, Result};

pub const RAW_MAGIC: &[u8; 8] = b"RGBF64\0\0";
pub const RAW_EXTENSION: &str = "rgbf";

fn is_raw(path: &Path) -> bool {
    path.extension().and_then(|e| e.to_str()) == Some(RAW_EXTENSION)
}

pub fn encode_raw(img: &Image) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + img.data().len() * 8);
    out.extend_from_slice(RAW_MAGIC);
    out.extend_from_slice(&(img.width() as u64).to_le_bytes());
    out.extend_from_slice(&(img.height() as u64).to_le_bytes());
    for v in img.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_raw(bytes: &[u8], path: &Path) -> Result<Image> {
    if bytes.len() < 24 || &bytes[..8] != RAW_MAGIC {
        return Err(Error::format(path, "not a raw float image"));
    }
    let word = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"));
    let (w, h) = (word(8) as usize, word(16) as usize);
    let n = w
        .checked_mul(h)
        .and_then(|p| p.checked_mul(3))
        .ok_or_else(|| Error::format(path, "image dimensions overflow"))?;
    let body = &bytes[24..];
    if body.len() != n * 8 {
        return Err(Error::format(
            path,
            format!(
                "expected {} bytes of pixel data, found {}",
                n * 8,
                body.len()
            ),
        ));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(Image::from_data(w, h, data)?)
}

/// Quantize to 8 bits: clamp to [0, 1], scale by 255, round.
pub fn to_rgb8(img: &Image) -> image::RgbImage {
    let bytes = img
        .data()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    image::RgbImage::from_raw(img.width() as u32, img.height() as u32, bytes)
        .expect("buffer sized from the image")
}

pub fn from_rgb8(img: &image::RgbImage) -> Image {
    let data = img.as_raw().iter().map(|&b| b as f64 / 255.0).collect();
    Image::from_data(img.width() as usize, img.height() as usize, data)
        .expect("buffer sized from the image")
}

/// Write by extension: `.rgbf` raw, anything else PNG.
pub fn save_image(img: &Image, path: &Path) -> Result<()> {
    if is_raw(path) {
        fs::write(path, encode_raw(img)).map_err(|e| Error::io(path, e))
    } else {
        to_rgb8(img)
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| Error::format(path, e.to_string()))
    }
}

pub fn load_image(path: &Path) -> Result<Image> {
    if is_raw(path) {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        decode_raw(&bytes, path)
    } else {
        if !path.exists() {
            return Err(Error::io(path, std::io::ErrorKind::NotFound.into()));
        }
        let img = image::open(path).map_err(|e| Error::format(path, e.to_string()))?;
        Ok(from_rgb8(&img.to_rgb8()))
    }
}
