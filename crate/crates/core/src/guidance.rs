//! Guidance image and per-channel mask built from the user's edits, and the
//! mask-weighted squared difference used to bias candidate selection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mask weight for untouched pixels.
pub const MASK_DEFAULT: f64 = 0.2;
/// Mask weight inside painted, pasted and kept regions.
pub const MASK_EDITED: f64 = 1.0;
/// Mask weight inside erased regions.
pub const MASK_ERASED: f64 = 0.0;

/// RGB image, row-major, channel-interleaved, values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        if data.len() != width * height * 3 {
            return Err(Error::invalid(format!(
                "image data has {} values, expected {}",
                data.len(),
                width * height * 3
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Result<Self> {
        let data = (0..width * height).flat_map(|_| rgb).collect();
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let o = (y * self.width + x) * 3;
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Quantizes to 8-bit RGB, row-major.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data.iter().map(|v| (v * 255.0).round() as u8).collect()
    }

    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(width, height, bytes.iter().map(|b| *b as f64 / 255.0).collect())
    }

    fn set_pixel(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let o = (y * self.width + x) * 3;
        self.data[o..o + 3].copy_from_slice(&rgb);
    }
}

/// Pixel membership bitmap at image resolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Region {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::invalid(format!(
                "region has {} bits, expected {}",
                bits.len(),
                width * height
            )));
        }
        Ok(Self { width, height, bits })
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![true; width * height],
        }
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    /// Axis-aligned rectangle `[x0, x1) × [y0, y1)`, clipped to the canvas.
    pub fn rect(width: usize, height: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> Self {
        let mut r = Self::empty(width, height);
        for y in y0.min(height)..y1.min(height) {
            for x in x0.min(width)..x1.min(width) {
                r.bits[y * width + x] = true;
            }
        }
        r
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Inclusive-exclusive bounding box `(x0, y0, x1, y1)`, `None` if empty.
    pub fn bounding_box(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bb: Option<(usize, usize, usize, usize)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.contains(x, y) {
                    bb = Some(match bb {
                        None => (x, y, x + 1, y + 1),
                        Some((a, b, c, d)) => (a.min(x), b.min(y), c.max(x + 1), d.max(y + 1)),
                    });
                }
            }
        }
        bb
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EditOp {
    Paint { region: Region, color: [f64; 3] },
    Erase { region: Region },
    Keep { region: Region },
    /// `patch` covers the bounding box of `region`.
    Paste { region: Region, patch: Image },
}

impl EditOp {
    pub fn region(&self) -> &Region {
        match self {
            EditOp::Paint { region, .. }
            | EditOp::Erase { region }
            | EditOp::Keep { region }
            | EditOp::Paste { region, .. } => region,
        }
    }
}

/// Guidance image `I*` and mask `M`, both `width·height·3` long.
#[derive(Clone, Debug, PartialEq)]
pub struct GuidanceState {
    guidance: Image,
    mask: Vec<f64>,
}

impl GuidanceState {
    /// Guidance equal to `blended`, mask 0.2 everywhere.
    pub fn new(blended: &Image) -> Self {
        Self {
            guidance: blended.clone(),
            mask: vec![MASK_DEFAULT; blended.data.len()],
        }
    }

    pub fn guidance(&self) -> &Image {
        &self.guidance
    }

    pub fn mask(&self) -> &[f64] {
        &self.mask
    }

    pub fn shape(&self) -> (usize, usize) {
        self.guidance.shape()
    }

    /// Returns the state after `op`; pixels outside the region are untouched
    /// and later edits overwrite earlier ones.
    pub fn apply_edit(&self, op: &EditOp) -> Result<Self> {
        let (w, h) = self.shape();
        let region = op.region();
        if region.shape() != (w, h) {
            return Err(Error::ShapeMismatch {
                expected: (w, h),
                got: region.shape(),
            });
        }
        let mut next = self.clone();
        let (weight, origin) = match op {
            EditOp::Paint { color, .. } => {
                if color.iter().any(|c| !(0.0..=1.0).contains(c)) {
                    return Err(Error::invalid("paint color must lie in [0, 1]"));
                }
                (MASK_EDITED, None)
            }
            EditOp::Erase { .. } => (MASK_ERASED, None),
            EditOp::Keep { .. } => (MASK_EDITED, None),
            EditOp::Paste { patch, .. } => match region.bounding_box() {
                None => (MASK_EDITED, None),
                Some((x0, y0, x1, y1)) => {
                    if patch.shape() != (x1 - x0, y1 - y0) {
                        return Err(Error::ShapeMismatch {
                            expected: (x1 - x0, y1 - y0),
                            got: patch.shape(),
                        });
                    }
                    (MASK_EDITED, Some((x0, y0)))
                }
            },
        };
        for y in 0..h {
            for x in 0..w {
                if !region.contains(x, y) {
                    continue;
                }
                match op {
                    EditOp::Paint { color, .. } => next.guidance.set_pixel(x, y, *color),
                    EditOp::Paste { patch, .. } => {
                        let (x0, y0) = origin.expect("non-empty region has a bounding box");
                        next.guidance.set_pixel(x, y, patch.pixel(x - x0, y - y0));
                    }
                    EditOp::Erase { .. } | EditOp::Keep { .. } => {}
                }
                let o = (y * w + x) * 3;
                next.mask[o..o + 3].fill(weight);
            }
        }
        Ok(next)
    }

    pub fn apply_all<'a>(&self, ops: impl IntoIterator<Item = &'a EditOp>) -> Result<Self> {
        let mut state = self.clone();
        for op in ops {
            state = state.apply_edit(op)?;
        }
        Ok(state)
    }

    /// `Σ (I* - I)² · M` over pixels and channels.
    pub fn content_term(&self, image: &Image) -> Result<f64> {
        if image.shape() != self.shape() {
            return Err(Error::ShapeMismatch {
                expected: self.shape(),
                got: image.shape(),
            });
        }
        Ok(self
            .guidance
            .data
            .iter()
            .zip(&image.data)
            .zip(&self.mask)
            .map(|((g, i), m)| (g - i) * (g - i) * m)
            .sum())
    }
}
