use std::io::Cursor;

use image::{Rgb, RgbImage};

use super::font::{rasterize, text_size};
use super::grid::{tile_bounds, PixelRect};
use super::{MarkSet, MarksError, ObjectRole, Result};

pub const DOT_RADIUS: i64 = 6;
/// Captions are the 7 px font doubled: 14 px tall.
pub const CAPTION_SCALE: u32 = 2;
const TILE_LABEL_SCALE: u32 = 1;
const PAD: u32 = 1;

const RED: Rgb<u8> = Rgb([230, 20, 20]);
const BLUE: Rgb<u8> = Rgb([20, 40, 230]);
const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
const GRID: Rgb<u8> = Rgb([32, 32, 32]);

/// An observation with marks drawn on it.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotatedImage {
    pub pixels: RgbImage,
    pub markset: MarkSet,
    /// Caption boxes in candidate order, including padding.
    pub caption_boxes: Vec<PixelRect>,
}

impl AnnotatedImage {
    pub fn to_png(&self) -> Vec<u8> {
        encode_png(&self.pixels)
    }
}

pub(crate) fn encode_png(img: &RgbImage) -> Vec<u8> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png)
        .expect("in-memory png encoding");
    buf.into_inner()
}

fn color(role: ObjectRole) -> Rgb<u8> {
    match role {
        ObjectRole::Grasped => RED,
        ObjectRole::Unattached => BLUE,
    }
}

/// Draws the grid with per-tile names, then a dot and caption per candidate.
///
/// Captions start to the upper right of their dot and are kept inside the
/// frame. A caption that would overlap an earlier caption or any dot is moved
/// along a fixed spiral of offsets until it fits. When a `Q` candidate sits on
/// the same pixel as an earlier candidate, only the right half of its dot is
/// painted so both colors stay visible.
pub fn render_marks(image: &RgbImage, markset: &MarkSet) -> Result<AnnotatedImage> {
    let grid = &markset.grid;
    if image.width() != grid.width || image.height() != grid.height {
        return Err(MarksError::DimensionMismatch(format!(
            "image {}x{} vs grid {}x{}",
            image.width(),
            image.height(),
            grid.width,
            grid.height
        )));
    }
    if let Some(c) = markset
        .candidates
        .iter()
        .find(|c| c.pixel.u >= grid.width || c.pixel.v >= grid.height)
    {
        return Err(MarksError::DimensionMismatch(format!(
            "candidate {} at ({}, {}) lies outside the image",
            c.label, c.pixel.u, c.pixel.v
        )));
    }
    let mut img = image.clone();
    let (w, h) = (img.width(), img.height());

    for tile in grid.tiles() {
        let r = tile_bounds(grid, tile)?;
        if r.u0 > 0 {
            for v in 0..h {
                img.put_pixel(r.u0, v, GRID);
            }
        }
        if r.v0 > 0 {
            for u in 0..w {
                img.put_pixel(u, r.v0, GRID);
            }
        }
    }
    for tile in grid.tiles() {
        let r = tile_bounds(grid, tile)?;
        let name = tile.to_string();
        let (tw, th) = text_size(&name, TILE_LABEL_SCALE);
        let (x0, y0) = (r.u0 + 2, r.v0 + 2);
        fill_rect(&mut img, x0 - PAD, y0 - PAD, tw + 2 * PAD, th + 2 * PAD, WHITE);
        draw_text(&mut img, &name, x0, y0, TILE_LABEL_SCALE, GRID);
    }

    let dots: Vec<PixelRect> = markset
        .candidates
        .iter()
        .map(|c| {
            let (u, v) = (c.pixel.u as i64, c.pixel.v as i64);
            PixelRect {
                u0: (u - DOT_RADIUS).max(0) as u32,
                v0: (v - DOT_RADIUS).max(0) as u32,
                u1: (u + DOT_RADIUS + 1).min(w as i64) as u32,
                v1: (v + DOT_RADIUS + 1).min(h as i64) as u32,
            }
        })
        .collect();

    for (i, c) in markset.candidates.iter().enumerate() {
        let shared = markset.candidates[..i].iter().any(|o| o.pixel == c.pixel);
        let (cu, cv) = (c.pixel.u as i64, c.pixel.v as i64);
        for dv in -DOT_RADIUS..=DOT_RADIUS {
            for du in -DOT_RADIUS..=DOT_RADIUS {
                if du * du + dv * dv > DOT_RADIUS * DOT_RADIUS || (shared && du < 0) {
                    continue;
                }
                let (x, y) = (cu + du, cv + dv);
                if x >= 0 && y >= 0 && x < w as i64 && y < h as i64 {
                    img.put_pixel(x as u32, y as u32, color(c.role));
                }
            }
        }
    }

    let mut boxes: Vec<PixelRect> = Vec::with_capacity(markset.candidates.len());
    for c in &markset.candidates {
        let (tw, th) = text_size(&c.label, CAPTION_SCALE);
        let (bw, bh) = (tw + 2 * PAD, th + 2 * PAD);
        let base = (c.pixel.u as i64 + DOT_RADIUS + 2, c.pixel.v as i64 - bh as i64);
        let place = |x: i64, y: i64| -> PixelRect {
            let x = x.clamp(0, w.saturating_sub(bw) as i64) as u32;
            let y = y.clamp(0, h.saturating_sub(bh) as i64) as u32;
            PixelRect { u0: x, v0: y, u1: (x + bw).min(w), v1: (y + bh).min(h) }
        };
        let free = |r: &PixelRect| !boxes.iter().chain(dots.iter()).any(|o| o.intersects(r));
        let chosen = spiral_offsets()
            .map(|(dx, dy)| place(base.0 + dx, base.1 + dy))
            .find(|r| free(r))
            .unwrap_or_else(|| place(base.0, base.1));
        fill_rect(&mut img, chosen.u0, chosen.v0, chosen.u1 - chosen.u0, chosen.v1 - chosen.v0, WHITE);
        draw_text(&mut img, &c.label, chosen.u0 + PAD, chosen.v0 + PAD, CAPTION_SCALE, color(c.role));
        boxes.push(chosen);
    }

    Ok(AnnotatedImage {
        pixels: img,
        markset: markset.clone(),
        caption_boxes: boxes,
    })
}

/// Offsets on rings of growing radius, eight directions per ring, starting
/// with no offset.
fn spiral_offsets() -> impl Iterator<Item = (i64, i64)> {
    const DIRS: [(i64, i64); 8] = [(1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1)];
    std::iter::once((0, 0)).chain(
        (1..=16i64).flat_map(|ring| DIRS.iter().map(move |(dx, dy)| (dx * ring * 6, dy * ring * 6))),
    )
}

fn fill_rect(img: &mut RgbImage, x: u32, y: u32, w: u32, h: u32, c: Rgb<u8>) {
    for yy in y..(y + h).min(img.height()) {
        for xx in x..(x + w).min(img.width()) {
            img.put_pixel(xx, yy, c);
        }
    }
}

fn draw_text(img: &mut RgbImage, text: &str, x: u32, y: u32, scale: u32, c: Rgb<u8>) {
    let (w, h) = (img.width(), img.height());
    rasterize(text, scale, |dx, dy| {
        let (px, py) = (x + dx, y + dy);
        if px < w && py < h {
            img.put_pixel(px, py, c);
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pixel;
    use crate::marks::{build_grid, CandidateSource, KeypointCandidate};

    fn blank(w: u32, h: u32) -> RgbImage {
        RgbImage::from_pixel(w, h, Rgb([128, 128, 128]))
    }

    fn cand(label: &str, u: u32, v: u32, role: ObjectRole) -> KeypointCandidate {
        KeypointCandidate {
            label: label.into(),
            pixel: Pixel::new(u, v),
            role,
            source: CandidateSource::Boundary,
            object: "o".into(),
        }
    }

    #[test]
    fn empty_candidates_draw_grid_only() {
        let grid = build_grid(100, 100, 5, 5).unwrap();
        let ms = MarkSet { candidates: vec![], grid, base_image_id: String::new() };
        let out = render_marks(&blank(100, 100), &ms).unwrap();
        assert_eq!(*out.pixels.get_pixel(20, 50), GRID);
        assert_eq!(*out.pixels.get_pixel(50, 80), GRID);
        assert!(out.caption_boxes.is_empty());
        assert!(!out.pixels.pixels().any(|p| *p == RED || *p == BLUE));
    }

    #[test]
    fn deterministic_png() {
        let grid = build_grid(160, 120, 5, 5).unwrap();
        let ms = MarkSet {
            candidates: vec![cand("P0", 40, 40, ObjectRole::Grasped), cand("Q0", 44, 42, ObjectRole::Unattached)],
            grid,
            base_image_id: "x".into(),
        };
        let a = render_marks(&blank(160, 120), &ms).unwrap().to_png();
        let b = render_marks(&blank(160, 120), &ms).unwrap().to_png();
        assert_eq!(a, b);
    }

    #[test]
    fn corner_captions_stay_in_frame() {
        let grid = build_grid(120, 90, 5, 5).unwrap();
        let corners = [(0, 0), (119, 0), (0, 89), (119, 89)];
        let ms = MarkSet {
            candidates: corners
                .iter()
                .enumerate()
                .map(|(i, (u, v))| cand(&format!("P{i}"), *u, *v, ObjectRole::Grasped))
                .collect(),
            grid,
            base_image_id: String::new(),
        };
        let out = render_marks(&blank(120, 90), &ms).unwrap();
        for b in &out.caption_boxes {
            assert!(b.u1 <= 120 && b.v1 <= 90, "{b:?}");
            let (tw, th) = text_size("P0", CAPTION_SCALE);
            assert_eq!((b.u1 - b.u0, b.v1 - b.v0), (tw + 2, th + 2));
        }
    }

    #[test]
    fn crowded_captions_do_not_overlap() {
        let grid = build_grid(200, 200, 5, 5).unwrap();
        let ms = MarkSet {
            candidates: (0..6).map(|i| cand(&format!("P{i}"), 100 + i * 3, 100, ObjectRole::Grasped)).collect(),
            grid,
            base_image_id: String::new(),
        };
        let out = render_marks(&blank(200, 200), &ms).unwrap();
        for (i, a) in out.caption_boxes.iter().enumerate() {
            for b in &out.caption_boxes[..i] {
                assert!(!a.intersects(b), "{a:?} overlaps {b:?}");
            }
        }
    }

    #[test]
    fn dimension_mismatch() {
        let grid = build_grid(100, 100, 5, 5).unwrap();
        let ms = MarkSet { candidates: vec![], grid, base_image_id: String::new() };
        assert!(matches!(render_marks(&blank(90, 100), &ms), Err(MarksError::DimensionMismatch(_))));
    }

    #[test]
    fn shared_pixel_shows_both_colors() {
        let grid = build_grid(100, 100, 5, 5).unwrap();
        let ms = MarkSet {
            candidates: vec![cand("P0", 50, 50, ObjectRole::Grasped), cand("Q0", 50, 50, ObjectRole::Unattached)],
            grid,
            base_image_id: String::new(),
        };
        let out = render_marks(&blank(100, 100), &ms).unwrap();
        assert_eq!(*out.pixels.get_pixel(46, 50), RED);
        assert_eq!(*out.pixels.get_pixel(54, 50), BLUE);
    }
}
