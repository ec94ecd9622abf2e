//! In-memory images and their on-disk formats.
//!
//! Color images are 8-bit PNG. Stored bytes are `round(255 · v)` of the
//! linear values in `[0, 1]`, i.e. renders are written as if they were
//! already sRGB-encoded and read back without conversion, so a save/load
//! round trip changes values by at most `0.5 / 255`.
//!
//! Depth maps use a small raster format (little-endian):
//!
//! ```text
//! magic   8 bytes  "OBJFDPT1"
//! width   u32
//! height  u32
//! depth   width*height f32, row-major, meters (0 where invalid)
//! valid   width*height u8, 1 where alpha ≥ the validity threshold
//! ```

use std::path::Path;

use crate::error::{invalid, Error, Result};

pub const DEPTH_MAGIC: &[u8; 8] = b"OBJFDPT1";

/// Row-major RGB image with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(invalid("image dimensions must be positive"));
        }
        if data.len() != width * height * 3 {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} image needs {} values, got {}",
                width,
                height,
                width * height * 3,
                data.len()
            )));
        }
        if data.iter().any(|v| v.is_nan()) {
            return Err(Error::NonFinite("image contains NaN".into()));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        let data = (0..width * height).flat_map(|_| rgb).collect();
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, index: usize) -> [f64; 3] {
        let p = &self.data[3 * index..3 * index + 3];
        [p[0], p[1], p[2]]
    }

    pub fn set_pixel(&mut self, index: usize, rgb: [f64; 3]) {
        self.data[3 * index..3 * index + 3].copy_from_slice(&rgb);
    }

    /// Same image after an 8-bit round trip.
    pub fn quantized(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| to_u8(v) as f64 / 255.0).collect(),
        }
    }

    pub fn to_png_bytes(&self) -> Result<Vec<u8>> {
        let buf: Vec<u8> = self.data.iter().map(|&v| to_u8(v)).collect();
        let img = image::RgbImage::from_raw(self.width as u32, self.height as u32, buf)
            .ok_or_else(|| Error::Format("image buffer size".into()))?;
        let mut out = std::io::Cursor::new(Vec::new());
        img.write_to(&mut out, image::ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_png_bytes()?)?;
        Ok(())
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)?.to_rgb8();
        let (w, h) = img.dimensions();
        let data = img
            .into_raw()
            .into_iter()
            .map(|b| b as f64 / 255.0)
            .collect();
        Self::new(w as usize, h as usize, data)
    }
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Depth raster with a per-pixel validity flag.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f64>,
    pub valid: Vec<bool>,
}

impl DepthMap {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.depth.len() * 5);
        out.extend_from_slice(DEPTH_MAGIC);
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        for &d in &self.depth {
            out.extend_from_slice(&(d as f32).to_le_bytes());
        }
        out.extend(self.valid.iter().map(|&v| v as u8));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != DEPTH_MAGIC {
            return Err(Error::Format("not a depth raster".into()));
        }
        let width = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let height = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let n = width * height;
        if bytes.len() != 16 + 5 * n {
            return Err(Error::Format(format!(
                "depth raster {width}x{height} has {} bytes",
                bytes.len()
            )));
        }
        let depth = bytes[16..16 + 4 * n]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        let valid = bytes[16 + 4 * n..].iter().map(|&b| b != 0).collect();
        Ok(Self {
            width,
            height,
            depth,
            valid,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
