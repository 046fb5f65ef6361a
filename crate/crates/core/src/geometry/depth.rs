use std::path::Path;

use image::{ImageBuffer, Luma};

use super::{GeometryError, Pixel, Result};

/// Default far plane in meters; valid depths lie in `(0, far)`.
pub const DEFAULT_FAR_PLANE: f64 = 5.0;

/// Row-major z-depth image in meters. `0.0` marks an invalid reading.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f64>,
}

impl DepthImage {
    pub fn new(width: u32, height: u32, data: Vec<f64>) -> Result<Self> {
        if data.len() != width as usize * height as usize {
            return Err(GeometryError::DimensionMismatch(format!(
                "{} depth values for {width}x{height}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: u32, height: u32, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width as usize * height as usize],
        }
    }

    pub fn get(&self, u: u32, v: u32) -> f64 {
        self.data[v as usize * self.width as usize + u as usize]
    }

    pub fn set(&mut self, u: u32, v: u32, d: f64) {
        let w = self.width as usize;
        self.data[v as usize * w + u as usize] = d;
    }

    pub fn is_valid(d: f64, far: f64) -> bool {
        d > 0.0 && d < far
    }

    /// Checks that every non-sentinel depth lies in `(0, far)`.
    pub fn validate(&self, far: f64) -> Result<()> {
        match self
            .data
            .iter()
            .find(|d| **d != 0.0 && !Self::is_valid(**d, far))
        {
            Some(d) => Err(GeometryError::InvalidDepth(*d)),
            None => Ok(()),
        }
    }

    /// Depth at `p`, falling back to the median of the valid readings in the
    /// surrounding 5x5 window when `p` itself is invalid. Even-sized samples
    /// use the mean of the two middle values.
    pub fn depth_at(&self, p: Pixel) -> Result<f64> {
        if p.u >= self.width || p.v >= self.height {
            return Err(GeometryError::DimensionMismatch(format!(
                "pixel ({}, {}) outside {}x{}",
                p.u, p.v, self.width, self.height
            )));
        }
        let d = self.get(p.u, p.v);
        if Self::is_valid(d, DEFAULT_FAR_PLANE) {
            return Ok(d);
        }
        let mut window = Vec::with_capacity(25);
        for dv in -2i64..=2 {
            for du in -2i64..=2 {
                let (u, v) = (p.u as i64 + du, p.v as i64 + dv);
                if u < 0 || v < 0 || u >= self.width as i64 || v >= self.height as i64 {
                    continue;
                }
                let x = self.get(u as u32, v as u32);
                if Self::is_valid(x, DEFAULT_FAR_PLANE) {
                    window.push(x);
                }
            }
        }
        if window.is_empty() {
            return Err(GeometryError::InvalidDepth(d));
        }
        window.sort_by(|a, b| a.total_cmp(b));
        let n = window.len();
        Ok(if n % 2 == 1 {
            window[n / 2]
        } else {
            0.5 * (window[n / 2 - 1] + window[n / 2])
        })
    }

    /// 16-bit binary PGM in millimeters, rounded to the nearest millimeter.
    pub fn save_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let img: ImageBuffer<Luma<u16>, Vec<u16>> =
            ImageBuffer::from_fn(self.width, self.height, |u, v| {
                Luma([(self.get(u, v) * 1000.0).round().clamp(0.0, 65535.0) as u16])
            });
        img.save_with_format(path, image::ImageFormat::Pnm)
            .map_err(|e| GeometryError::Io(e.to_string()))
    }

    pub fn load_pgm(path: impl AsRef<Path>) -> Result<Self> {
        let img = image::open(path)
            .map_err(|e| GeometryError::Io(e.to_string()))?
            .into_luma16();
        let data = img.pixels().map(|p| p[0] as f64 / 1000.0).collect();
        Self::new(img.width(), img.height(), data)
    }
}
