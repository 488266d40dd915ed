//! 8-bit RGB rasters (the in-memory form of a patch image).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Interleaved RGB8 image, row-major. Exactly three channels by
/// construction; decoders must reject anything else before building one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Raster {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Format(format!(
                "raster dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height * 3 {
            return Err(Error::Format(format!(
                "raster byte count {} does not match {}x{}x3",
                data.len(),
                width,
                height
            )));
        }
        Ok(Raster { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self> {
        let mut data = vec![0u8; width * height * 3];
        for px in data.chunks_exact_mut(3) {
            px.copy_from_slice(&rgb);
        }
        Raster::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Channel value as f64 in [0,1], with clamp-to-edge out-of-range access.
    #[inline]
    pub fn sample_clamped(&self, x: isize, y: isize, c: usize) -> f64 {
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        let yc = y.clamp(0, self.height as isize - 1) as usize;
        f64::from(self.data[(yc * self.width + xc) * 3 + c]) / 255.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_byte_count() {
        assert!(Raster::new(2, 2, vec![0; 11]).is_err());
        assert!(Raster::new(2, 2, vec![0; 12]).is_ok());
    }

    #[test]
    fn clamped_sampling_extends_edges() {
        let mut r = Raster::filled(2, 2, [0, 0, 0]).unwrap();
        r.set_pixel(0, 0, [255, 0, 0]);
        assert_eq!(r.sample_clamped(-5, -5, 0), 1.0);
        assert_eq!(r.sample_clamped(-5, -5, 1), 0.0);
    }
}
