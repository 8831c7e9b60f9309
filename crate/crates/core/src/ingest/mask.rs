use std::path::Path;

use crate::error::{Error, Result};

/// Per-pixel glass labels; `true` marks a transparent-surface pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlassMask {
    pub width: u32,
    pub height: u32,
    bits: Vec<bool>,
}

impl GlassMask {
    pub fn new(width: u32, height: u32, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != (width as usize) * (height as usize) {
            return Err(Error::Mismatch(format!(
                "mask {width}x{height} needs {} bits, got {}",
                width as usize * height as usize,
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn get(&self, u: u32, v: u32) -> bool {
        self.bits[(v * self.width + u) as usize]
    }

    pub fn set(&mut self, u: u32, v: u32, value: bool) {
        self.bits[(v * self.width + u) as usize] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Loads a PNG; any non-zero luma marks glass.
    pub fn read_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path)
            .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?
            .to_luma8();
        let (w, h) = img.dimensions();
        Self::new(w, h, img.into_raw().into_iter().map(|p| p != 0).collect())
    }

    /// Writes a single-channel 8-bit PNG (255 = glass).
    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let raw: Vec<u8> = self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        image::GrayImage::from_raw(self.width, self.height, raw)
            .expect("buffer size matches dimensions")
            .save(path)
            .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        let mut m = GlassMask::empty(5, 3);
        m.set(4, 2, true);
        m.set(0, 1, true);
        m.write_png(&p).unwrap();
        let back = GlassMask::read_png(&p).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.count(), 2);
    }

    #[test]
    fn size_mismatch_rejected() {
        assert!(GlassMask::new(2, 2, vec![true; 3]).is_err());
    }
}
