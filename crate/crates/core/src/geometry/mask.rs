use std::collections::VecDeque;
use std::path::Path;

use image::{GrayImage, Luma};

use super::{GeometryError, Pixel, Result};

/// Row-major boolean raster, one bit per pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; (width as usize) * (height as usize)],
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut bits = Vec::with_capacity((width as usize) * (height as usize));
        for v in 0..height {
            for u in 0..width {
                bits.push(f(u, v));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn from_pixels(width: u32, height: u32, pixels: impl IntoIterator<Item = Pixel>) -> Self {
        let mut mask = Self::new(width, height);
        for p in pixels {
            mask.set(p.u, p.v, true);
        }
        mask
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    fn index(&self, u: u32, v: u32) -> usize {
        v as usize * self.width as usize + u as usize
    }

    /// Out-of-bounds coordinates read as background.
    #[inline]
    pub fn get(&self, u: i64, v: i64) -> bool {
        if u < 0 || v < 0 || u >= self.width as i64 || v >= self.height as i64 {
            return false;
        }
        self.bits[self.index(u as u32, v as u32)]
    }

    #[inline]
    pub fn contains(&self, p: Pixel) -> bool {
        self.get(p.u as i64, p.v as i64)
    }

    pub fn set(&mut self, u: u32, v: u32, value: bool) {
        let i = self.index(u, v);
        self.bits[i] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    /// Foreground pixels in raster order.
    pub fn pixels(&self) -> impl Iterator<Item = Pixel> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(move |(i, _)| Pixel::new(i as u32 % w, i as u32 / w))
    }

    /// Inclusive bounding box `(u_min, v_min, u_max, v_max)` of the foreground.
    pub fn bounding_box(&self) -> Option<(u32, u32, u32, u32)> {
        let mut it = self.pixels();
        let first = it.next()?;
        let init = (first.u, first.v, first.u, first.v);
        Some(it.fold(init, |(u0, v0, u1, v1), p| {
            (u0.min(p.u), v0.min(p.v), u1.max(p.u), v1.max(p.v))
        }))
    }

    /// 8-connected components, each as a list of pixels in discovery order.
    /// Components are returned in raster order of their first pixel.
    pub fn components(&self) -> Vec<Vec<Pixel>> {
        let mut seen = vec![false; self.bits.len()];
        let mut out = Vec::new();
        for start in self.pixels() {
            let si = self.index(start.u, start.v);
            if seen[si] {
                continue;
            }
            seen[si] = true;
            let mut comp = Vec::new();
            let mut queue = VecDeque::from([start]);
            while let Some(p) = queue.pop_front() {
                comp.push(p);
                for dv in -1i64..=1 {
                    for du in -1i64..=1 {
                        let (nu, nv) = (p.u as i64 + du, p.v as i64 + dv);
                        if self.get(nu, nv) {
                            let ni = self.index(nu as u32, nv as u32);
                            if !seen[ni] {
                                seen[ni] = true;
                                queue.push_back(Pixel::new(nu as u32, nv as u32));
                            }
                        }
                    }
                }
            }
            out.push(comp);
        }
        out
    }

    /// The largest 8-connected component as its own mask. Ties go to the
    /// component that appears first in raster order.
    pub fn largest_component(&self) -> Result<BinaryMask> {
        let comps = self.components();
        let best = comps
            .iter()
            .enumerate()
            .max_by(|(ia, a), (ib, b)| a.len().cmp(&b.len()).then(ib.cmp(ia)))
            .map(|(_, c)| c)
            .ok_or(GeometryError::EmptyMask)?;
        Ok(BinaryMask::from_pixels(
            self.width,
            self.height,
            best.iter().copied(),
        ))
    }

    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask> {
        if self.width != other.width || self.height != other.height {
            return Err(GeometryError::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(BinaryMask {
            width: self.width,
            height: self.height,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(a, b)| *a || *b)
                .collect(),
        })
    }

    pub fn to_gray(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |u, v| {
            Luma([if self.bits[self.index(u, v)] { 255 } else { 0 }])
        })
    }

    /// Any nonzero gray level counts as foreground.
    pub fn from_gray(img: &GrayImage) -> Self {
        Self::from_fn(img.width(), img.height(), |u, v| img.get_pixel(u, v)[0] > 0)
    }

    /// Writes an 8-bit PNG with foreground 255 and background 0.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_gray()
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| GeometryError::Io(e.to_string()))
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let img = image::open(path).map_err(|e| GeometryError::Io(e.to_string()))?;
        Ok(Self::from_gray(&img.to_luma8()))
    }
}

/// Mean of the foreground coordinates, rounded to the nearest pixel. When the
/// rounded pixel is background (non-convex shapes) the foreground pixel
/// nearest to the unrounded mean is returned instead, ties in raster order.
pub fn mask_centroid(mask: &BinaryMask) -> Result<Pixel> {
    let (mut su, mut sv, mut n) = (0.0f64, 0.0f64, 0usize);
    for p in mask.pixels() {
        su += p.u as f64;
        sv += p.v as f64;
        n += 1;
    }
    if n == 0 {
        return Err(GeometryError::EmptyMask);
    }
    let (mu, mv) = (su / n as f64, sv / n as f64);
    let rounded = (mu.round(), mv.round());
    if mask.get(rounded.0 as i64, rounded.1 as i64) {
        return Ok(Pixel::new(rounded.0 as u32, rounded.1 as u32));
    }
    let mut best: Option<(f64, Pixel)> = None;
    for p in mask.pixels() {
        let d = (p.u as f64 - mu).powi(2) + (p.v as f64 - mv).powi(2);
        if best.map_or(true, |(bd, _)| d < bd) {
            best = Some((d, p));
        }
    }
    Ok(best.expect("non-empty mask").1)
}
