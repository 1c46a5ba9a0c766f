//! Viewing directions, tiles and field-of-view coverage on an equirectangular
//! frame.
//!
//! The frame spans 360° horizontally (with wraparound) and 180° vertically
//! (clamped at the poles). It is cut into `v_h` columns and `v_v` rows of equal
//! tiles. Tiles are half-open angular intervals and a tile is delivered when its
//! interior overlaps the field of view (plus margin) with positive area, so a
//! field of view whose edge lies exactly on a tile boundary does not pull in the
//! neighbouring tile.
//!
//! Overlap tests are done in scaled coordinates where tile boundaries are
//! integers multiples of a common unit, which keeps integer-degree inputs free of
//! rounding at the boundaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tiling and viewing-direction grids plus field-of-view extents, in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VideoConfig {
    /// Tile columns (horizontal segments).
    pub v_h: u32,
    /// Tile rows (vertical segments).
    pub v_v: u32,
    /// Horizontal viewing directions.
    pub m_h: u32,
    /// Vertical viewing directions.
    pub m_v: u32,
    pub fov_h_deg: f64,
    pub fov_v_deg: f64,
    /// Extra angle added on each of the four sides of the field of view.
    pub margin_deg: f64,
}

impl VideoConfig {
    pub fn new(
        v_h: u32,
        v_v: u32,
        m_h: u32,
        m_v: u32,
        fov_h_deg: f64,
        fov_v_deg: f64,
        margin_deg: f64,
    ) -> Result<Self> {
        let cfg = VideoConfig {
            v_h,
            v_v,
            m_h,
            m_v,
            fov_h_deg,
            fov_v_deg,
            margin_deg,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("v_h", self.v_h),
            ("v_v", self.v_v),
            ("m_h", self.m_h),
            ("m_v", self.m_v),
        ] {
            if v == 0 {
                return Err(Error::invalid(name, "must be at least 1"));
            }
        }
        for (name, v) in [("fov_h_deg", self.fov_h_deg), ("fov_v_deg", self.fov_v_deg)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, format!("must be finite and > 0, got {v}")));
            }
        }
        if !(self.margin_deg.is_finite() && self.margin_deg >= 0.0) {
            return Err(Error::invalid(
                "margin_deg",
                format!("must be finite and >= 0, got {}", self.margin_deg),
            ));
        }
        Ok(())
    }

    pub fn n_tiles(&self) -> u32 {
        self.v_h * self.v_v
    }

    pub fn n_directions(&self) -> u32 {
        self.m_h * self.m_v
    }

    /// Horizontal extent of the delivered region (field of view plus margins).
    pub fn effective_fov_h(&self) -> f64 {
        self.fov_h_deg + 2.0 * self.margin_deg
    }

    pub fn effective_fov_v(&self) -> f64 {
        self.fov_v_deg + 2.0 * self.margin_deg
    }

    /// All viewing directions in row-major order: `(1,1), (1,2), ..., (m_h, m_v)`.
    pub fn directions(&self) -> impl Iterator<Item = ViewDirection> + '_ {
        (1..=self.m_h).flat_map(move |row| (1..=self.m_v).map(move |col| ViewDirection { row, col }))
    }
}

/// A viewing direction on the `m_h x m_v` grid. Both indices are 1-based:
/// `row` selects the horizontal position, `col` the vertical one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ViewDirection {
    pub row: u32,
    pub col: u32,
}

impl ViewDirection {
    pub fn new(row: u32, col: u32) -> Self {
        ViewDirection { row, col }
    }

    pub fn check(&self, cfg: &VideoConfig) -> Result<()> {
        if self.row == 0 || self.row > cfg.m_h || self.col == 0 || self.col > cfg.m_v {
            return Err(Error::InvalidDirection {
                row: self.row,
                col: self.col,
                m_h: cfg.m_h,
                m_v: cfg.m_v,
            });
        }
        Ok(())
    }

    /// Position in row-major order, 0-based.
    pub fn linear_index(&self, cfg: &VideoConfig) -> usize {
        ((self.row - 1) * cfg.m_v + (self.col - 1)) as usize
    }
}

/// Sorted set of 1-based tile indices; tile `(r, c)` (row `r` in `1..=v_v`,
/// column `c` in `1..=v_h`) has index `(r - 1) * v_h + c`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TileSet(Vec<u32>);

impl TileSet {
    /// Builds a set from arbitrary indices, sorting and removing duplicates.
    pub fn new(indices: impl IntoIterator<Item = u32>) -> Self {
        let mut v: Vec<u32> = indices.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        TileSet(v)
    }

    /// Like [`TileSet::new`] but rejects indices outside `1..=n_tiles`.
    pub fn checked(indices: impl IntoIterator<Item = u32>, n_tiles: u32) -> Result<Self> {
        let set = TileSet::new(indices);
        if let Some(&bad) = set.0.iter().find(|&&t| t == 0 || t > n_tiles) {
            return Err(Error::invalid("tile index", format!("{bad} outside 1..={n_tiles}")));
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, tile: u32) -> bool {
        self.0.binary_search(&tile).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = u32> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn is_subset(&self, other: &TileSet) -> bool {
        self.0.iter().all(|&t| other.contains(t))
    }
}

impl FromIterator<u32> for TileSet {
    fn from_iter<I: IntoIterator<Item = u32>>(iter: I) -> Self {
        TileSet::new(iter)
    }
}

/// Angular center `(azimuth, elevation)` of a viewing direction, in degrees.
/// Azimuth lies in `[0, 360)`, elevation in `(0, 180)` measured from the top.
pub fn direction_center(dir: ViewDirection, cfg: &VideoConfig) -> Result<(f64, f64)> {
    dir.check(cfg)?;
    let az = (2 * dir.row - 1) as f64 * 180.0 / cfg.m_h as f64;
    let el = (2 * dir.col - 1) as f64 * 90.0 / cfg.m_v as f64;
    Ok((az, el))
}

/// Tiles that must be delivered for a viewing direction.
pub fn fov_tiles(dir: ViewDirection, cfg: &VideoConfig) -> Result<TileSet> {
    dir.check(cfg)?;
    // Horizontal coordinates scaled by 720 * m_h per tile width, vertical by
    // 360 * m_v, so centers and boundaries are exact for integral inputs.
    let (m_h, m_v) = (cfg.m_h as f64, cfg.m_v as f64);
    let (v_h, v_v) = (cfg.v_h as f64, cfg.v_v as f64);
    let cols = covered_columns(
        (2 * dir.row - 1) as f64 * 360.0 * v_h,
        cfg.effective_fov_h() * v_h * m_h,
        720.0 * m_h,
        cfg.v_h,
    );
    let rows = covered_rows(
        (2 * dir.col - 1) as f64 * 180.0 * v_v,
        cfg.effective_fov_v() * v_v * m_v,
        360.0 * m_v,
        cfg.v_v,
    );
    Ok(tiles_from_spans(&rows, &cols, cfg.v_h))
}

/// Tiles covering a field of view centered at an arbitrary angle. The azimuth
/// is taken modulo 360°; the elevation must lie in `[0, 180]`.
pub fn fov_tiles_at(azimuth_deg: f64, elevation_deg: f64, cfg: &VideoConfig) -> Result<TileSet> {
    cfg.validate()?;
    if !azimuth_deg.is_finite() {
        return Err(Error::invalid("azimuth_deg", "must be finite"));
    }
    if !(0.0..=180.0).contains(&elevation_deg) {
        return Err(Error::invalid("elevation_deg", "must lie in [0, 180]"));
    }
    let az = azimuth_deg.rem_euclid(360.0);
    let (v_h, v_v) = (cfg.v_h as f64, cfg.v_v as f64);
    let cols = covered_columns(2.0 * az * v_h, cfg.effective_fov_h() * v_h, 720.0, cfg.v_h);
    let rows = covered_rows(2.0 * elevation_deg * v_v, cfg.effective_fov_v() * v_v, 360.0, cfg.v_v);
    Ok(tiles_from_spans(&rows, &cols, cfg.v_h))
}

/// 0-based columns overlapping `[center - half, center + half]` on a circle of
/// `count` tiles of width `unit`.
fn covered_columns(center: f64, half: f64, unit: f64, count: u32) -> Vec<u32> {
    let period = unit * count as f64;
    if 2.0 * half >= period {
        return (0..count).collect();
    }
    let (lo, hi) = (center - half, center + half);
    (0..count)
        .filter(|&j| {
            [-period, 0.0, period].iter().any(|shift| {
                let a = j as f64 * unit + shift;
                lo < a + unit && a < hi
            })
        })
        .collect()
}

/// 0-based rows overlapping the interval after clamping it to the frame.
fn covered_rows(center: f64, half: f64, unit: f64, count: u32) -> Vec<u32> {
    let top = unit * count as f64;
    let lo = (center - half).max(0.0);
    let hi = (center + half).min(top);
    (0..count)
        .filter(|&r| {
            let a = r as f64 * unit;
            lo < a + unit && a < hi
        })
        .collect()
}

fn tiles_from_spans(rows: &[u32], cols: &[u32], v_h: u32) -> TileSet {
    TileSet::new(
        rows.iter()
            .flat_map(|&r| cols.iter().map(move |&c| r * v_h + c + 1)),
    )
}
