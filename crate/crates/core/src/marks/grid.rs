use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{MarksError, Result};
use crate::geometry::{ImagePoint, Pixel};

/// An `m x n` tiling of the image. Chess notation: columns are letters from
/// the left, rows are numbers from the bottom.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    #[serde(rename = "m")]
    pub rows: u32,
    #[serde(rename = "n")]
    pub cols: u32,
    #[serde(rename = "w")]
    pub width: u32,
    #[serde(rename = "h")]
    pub height: u32,
}

pub const DEFAULT_GRID_ROWS: u32 = 5;
pub const DEFAULT_GRID_COLS: u32 = 5;

/// Uniform grid over the image. Remainder pixels go to the last column and
/// to the bottom band (row 1), so every tile is non-empty and the tiles
/// partition the image exactly.
pub fn build_grid(width: u32, height: u32, m: u32, n: u32) -> Result<GridSpec> {
    if m == 0 || n == 0 || width < n || height < m || n > 26 {
        return Err(MarksError::InvalidGrid(format!(
            "{m}x{n} grid over {width}x{height} image"
        )));
    }
    Ok(GridSpec {
        rows: m,
        cols: n,
        width,
        height,
    })
}

/// Grid cell: zero-based column, one-based row counted from the bottom.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TileId {
    pub col: u32,
    pub row: u32,
}

impl TileId {
    pub fn new(col: u32, row: u32) -> Self {
        Self { col, row }
    }
}

impl fmt::Display for TileId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", (b'a' + self.col as u8) as char, self.row)
    }
}

impl FromStr for TileId {
    type Err = MarksError;

    /// Format only: one letter then a positive integer, case-insensitive.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let mut chars = t.chars();
        let letter = chars.next().filter(|c| c.is_ascii_alphabetic());
        let digits = chars.as_str();
        match (letter, digits.parse::<u32>()) {
            (Some(c), Ok(row)) if !digits.is_empty() && digits.chars().all(|d| d.is_ascii_digit()) && row >= 1 => {
                Ok(TileId::new(c.to_ascii_lowercase() as u32 - 'a' as u32, row))
            }
            _ => Err(MarksError::MalformedTile(s.to_string())),
        }
    }
}

impl Serialize for TileId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TileId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Half-open pixel rectangle `[u0, u1) x [v0, v1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelRect {
    pub u0: u32,
    pub v0: u32,
    pub u1: u32,
    pub v1: u32,
}

impl PixelRect {
    pub fn contains(&self, p: Pixel) -> bool {
        p.u >= self.u0 && p.u < self.u1 && p.v >= self.v0 && p.v < self.v1
    }

    pub fn center(&self) -> ImagePoint {
        ImagePoint::new(
            (self.u0 as f64 + self.u1 as f64) / 2.0,
            (self.v0 as f64 + self.v1 as f64) / 2.0,
        )
    }

    pub fn intersects(&self, o: &PixelRect) -> bool {
        self.u0 < o.u1 && o.u0 < self.u1 && self.v0 < o.v1 && o.v0 < self.v1
    }
}

impl GridSpec {
    fn col_width(&self) -> u32 {
        self.width / self.cols
    }

    fn band_height(&self) -> u32 {
        self.height / self.rows
    }

    pub fn check(&self, tile: TileId) -> Result<()> {
        if tile.col >= self.cols || tile.row == 0 || tile.row > self.rows {
            return Err(MarksError::TileOutOfRange(tile.to_string()));
        }
        Ok(())
    }

    pub fn tiles(&self) -> impl Iterator<Item = TileId> + '_ {
        (1..=self.rows).flat_map(move |r| (0..self.cols).map(move |c| TileId::new(c, r)))
    }

    /// Tile containing the pixel, or `None` outside the image.
    pub fn tile_of(&self, p: Pixel) -> Option<TileId> {
        if p.u >= self.width || p.v >= self.height {
            return None;
        }
        let col = (p.u / self.col_width()).min(self.cols - 1);
        let band = (p.v / self.band_height()).min(self.rows - 1);
        Some(TileId::new(col, self.rows - band))
    }

    pub fn tile_of_point(&self, p: ImagePoint) -> Option<TileId> {
        if !(p.u >= 0.0 && p.v >= 0.0) {
            return None;
        }
        self.tile_of(Pixel::new(p.u.floor() as u32, p.v.floor() as u32))
    }
}

/// Pixel rectangle of a tile. Row 1 is the bottom band of the image, which
/// has the largest `v` values.
pub fn tile_bounds(grid: &GridSpec, tile: TileId) -> Result<PixelRect> {
    grid.check(tile)?;
    let cw = grid.col_width();
    let bh = grid.band_height();
    let u0 = tile.col * cw;
    let u1 = if tile.col == grid.cols - 1 { grid.width } else { u0 + cw };
    let band = grid.rows - tile.row;
    let v0 = band * bh;
    let v1 = if band == grid.rows - 1 { grid.height } else { v0 + bh };
    Ok(PixelRect { u0, v0, u1, v1 })
}

/// Parses a tile name such as `c4` (case-insensitive) and checks it against
/// the grid.
pub fn parse_tile_name(s: &str, grid: &GridSpec) -> Result<TileId> {
    let tile: TileId = s.parse()?;
    grid.check(tile).map_err(|_| MarksError::TileOutOfRange(s.to_string()))?;
    Ok(tile)
}

/// Uniformly random pixel inside the tile, reproducible for a given seed.
pub fn sample_point_in_tile(grid: &GridSpec, tile: TileId, seed: u64) -> Result<Pixel> {
    let r = tile_bounds(grid, tile)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(Pixel::new(rng.gen_range(r.u0..r.u1), rng.gen_range(r.v0..r.v1)))
}
