//! JSON wire forms: images as base64 PNG, regions as base64 bitmaps
//! (one bit per pixel, row-major, most significant bit first, the whole
//! bitmap zero-padded to a byte boundary).

use std::io::Cursor;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use image::{ImageFormat, RgbImage};
use serde::{Deserialize, Serialize};
use slidebo::{EditOp, Image, Region};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WireError {
    #[error("invalid base64: {0}")]
    Base64(#[from] base64::DecodeError),
    #[error("invalid png: {0}")]
    Png(String),
    #[error("malformed edit: {0}")]
    Edit(String),
}

pub fn encode_png(img: &Image) -> Vec<u8> {
    let buf = RgbImage::from_raw(img.width() as u32, img.height() as u32, img.to_rgb8())
        .expect("buffer length matches dimensions");
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png).expect("in-memory png encoding");
    out.into_inner()
}

pub fn decode_png(bytes: &[u8]) -> Result<Image, WireError> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| WireError::Png(e.to_string()))?
        .to_rgb8();
    Image::from_rgb8(img.width() as usize, img.height() as usize, img.as_raw())
        .map_err(|e| WireError::Png(e.to_string()))
}

pub fn png_base64(img: &Image) -> String {
    STANDARD.encode(encode_png(img))
}

pub fn image_from_base64(s: &str) -> Result<Image, WireError> {
    decode_png(&STANDARD.decode(s)?)
}

pub fn encode_region(region: &Region) -> String {
    let bits = region.bits();
    let mut bytes = vec![0u8; bits.len().div_ceil(8)];
    for (i, b) in bits.iter().enumerate() {
        if *b {
            bytes[i / 8] |= 0x80 >> (i % 8);
        }
    }
    STANDARD.encode(bytes)
}

pub fn decode_region(s: &str, width: usize, height: usize) -> Result<Region, WireError> {
    let bytes = STANDARD.decode(s)?;
    let n = width * height;
    if bytes.len() != n.div_ceil(8) {
        return Err(WireError::Edit(format!(
            "region bitmap has {} bytes, expected {} for {width}x{height}",
            bytes.len(),
            n.div_ceil(8)
        )));
    }
    let bits = (0..n).map(|i| bytes[i / 8] & (0x80 >> (i % 8)) != 0).collect();
    Region::new(width, height, bits).map_err(|e| WireError::Edit(e.to_string()))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditKind {
    Paint,
    Erase,
    Keep,
    Paste,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WireEdit {
    pub kind: EditKind,
    pub region_bitmap_base64: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patch_png_base64: Option<String>,
}

impl WireEdit {
    pub fn decode(&self, width: usize, height: usize) -> Result<EditOp, WireError> {
        let region = decode_region(&self.region_bitmap_base64, width, height)?;
        Ok(match self.kind {
            EditKind::Paint => {
                let color = self
                    .color
                    .ok_or_else(|| WireError::Edit("paint needs a color".into()))?;
                if color.iter().any(|c| !(0.0..=1.0).contains(c)) {
                    return Err(WireError::Edit("paint color must lie in [0, 1]".into()));
                }
                EditOp::Paint { region, color }
            }
            EditKind::Erase => EditOp::Erase { region },
            EditKind::Keep => EditOp::Keep { region },
            EditKind::Paste => {
                let patch = self
                    .patch_png_base64
                    .as_deref()
                    .ok_or_else(|| WireError::Edit("paste needs patch_png_base64".into()))?;
                let patch = image_from_base64(patch)?;
                match region.bounding_box() {
                    Some((x0, y0, x1, y1)) if patch.shape() != (x1 - x0, y1 - y0) => {
                        return Err(WireError::Edit(format!(
                            "patch is {:?}, region bounding box is {:?}",
                            patch.shape(),
                            (x1 - x0, y1 - y0)
                        )));
                    }
                    _ => {}
                }
                EditOp::Paste { region, patch }
            }
        })
    }
}
