//! Road raster, nearest-road offset field, and translation rectification.

use std::collections::VecDeque;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::semantic_map::{ClassRegistry, SemanticPointCloud};

/// Default road raster cell edge in meters.
pub const DEFAULT_ROAD_CELL: f64 = 0.05;
/// Margin added around the map's x-y bounding box.
pub const ROAD_MARGIN: f64 = 1.0;

/// Boolean road occupancy over a regular x-y grid.
#[derive(Clone, Debug, PartialEq)]
pub struct RoadGrid {
    pub origin: [f64; 2],
    pub cell: f64,
    pub width: usize,
    pub height: usize,
    /// Row-major; row index grows with world y, column index with world x.
    pub road: Vec<bool>,
}

impl RoadGrid {
    pub fn new(origin: [f64; 2], cell: f64, width: usize, height: usize) -> Self {
        RoadGrid {
            origin,
            cell,
            width,
            height,
            road: vec![false; width * height],
        }
    }

    #[inline]
    pub fn is_road(&self, col: usize, row: usize) -> bool {
        self.road[row * self.width + col]
    }

    pub fn set(&mut self, col: usize, row: usize, road: bool) {
        self.road[row * self.width + col] = road;
    }

    pub fn road_count(&self) -> usize {
        self.road.iter().filter(|&&r| r).count()
    }
}

/// Rasterizes the road-class points of `map`.
pub fn build_road_raster(map: &SemanticPointCloud, registry: &ClassRegistry, cell: f64) -> Result<RoadGrid> {
    if !(cell.is_finite() && cell > 0.0) {
        return Err(Error::invalid(format!("road cell size must be positive, got {cell}")));
    }
    let road: Vec<[f64; 2]> = map
        .points
        .iter()
        .filter(|p| registry.is_road(p.class_id))
        .map(|p| [p.position.x as f64, p.position.y as f64])
        .collect();
    if road.is_empty() {
        return Err(Error::NoRoad);
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in &map.points {
        lo[0] = lo[0].min(p.position.x as f64);
        lo[1] = lo[1].min(p.position.y as f64);
        hi[0] = hi[0].max(p.position.x as f64);
        hi[1] = hi[1].max(p.position.y as f64);
    }
    let origin = [lo[0] - ROAD_MARGIN, lo[1] - ROAD_MARGIN];
    let width = ((hi[0] + ROAD_MARGIN - origin[0]) / cell).floor() as usize + 1;
    let height = ((hi[1] + ROAD_MARGIN - origin[1]) / cell).floor() as usize + 1;
    if width > i16::MAX as usize || height > i16::MAX as usize {
        return Err(Error::invalid(format!(
            "road raster of {width}x{height} cells is too large"
        )));
    }
    let mut grid = RoadGrid::new(origin, cell, width, height);
    for p in road {
        let col = ((p[0] - origin[0]) / cell).floor() as usize;
        let row = ((p[1] - origin[1]) / cell).floor() as usize;
        grid.set(col.min(width - 1), row.min(height - 1), true);
    }
    Ok(grid)
}

/// Per-cell integer offset to the nearest road cell.
#[derive(Clone, Debug, PartialEq)]
pub struct RoadOffsetField {
    pub origin: [f64; 2],
    pub cell: f64,
    pub width: usize,
    pub height: usize,
    /// Row-major `(dx, dy)` in cells; `dx` moves along columns.
    pub offsets: Vec<(i16, i16)>,
    pub road: Vec<bool>,
}

const NEIGHBORS: [(isize, isize); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

/// Multi-source 4-connected BFS from every road cell.
///
/// Sources are enqueued in row-major order and each cell keeps the source
/// that reached it first, so ties resolve deterministically.
pub fn build_offset_field(grid: &RoadGrid) -> Result<RoadOffsetField> {
    let (w, h) = (grid.width, grid.height);
    if w > i16::MAX as usize || h > i16::MAX as usize {
        return Err(Error::invalid(format!("{w}x{h} grid exceeds the i16 offset range")));
    }
    let mut source: Vec<u32> = vec![u32::MAX; w * h];
    let mut queue = VecDeque::new();
    for (n, &r) in grid.road.iter().enumerate() {
        if r {
            source[n] = n as u32;
            queue.push_back(n);
        }
    }
    if queue.is_empty() {
        return Err(Error::NoRoad);
    }
    while let Some(n) = queue.pop_front() {
        let (col, row) = ((n % w) as isize, (n / w) as isize);
        for (dc, dr) in NEIGHBORS {
            let (c, r) = (col + dc, row + dr);
            if c < 0 || r < 0 || c >= w as isize || r >= h as isize {
                continue;
            }
            let m = r as usize * w + c as usize;
            if source[m] == u32::MAX {
                source[m] = source[n];
                queue.push_back(m);
            }
        }
    }
    let offsets = source
        .iter()
        .enumerate()
        .map(|(n, &s)| {
            let s = s as usize;
            ((s % w) as i16 - (n % w) as i16, (s / w) as i16 - (n / w) as i16)
        })
        .collect();
    Ok(RoadOffsetField {
        origin: grid.origin,
        cell: grid.cell,
        width: w,
        height: h,
        offsets,
        road: grid.road.clone(),
    })
}

impl RoadOffsetField {
    /// Cell containing world `(x, y)`, clamped to the grid.
    pub fn cell_of(&self, x: f64, y: f64) -> (usize, usize) {
        let clamp = |v: f64, n: usize| {
            if v.is_nan() || v < 0.0 {
                0
            } else {
                (v as usize).min(n - 1)
            }
        };
        (
            clamp(((x - self.origin[0]) / self.cell).floor(), self.width),
            clamp(((y - self.origin[1]) / self.cell).floor(), self.height),
        )
    }

    pub fn cell_center(&self, col: usize, row: usize) -> [f64; 2] {
        [
            self.origin[0] + (col as f64 + 0.5) * self.cell,
            self.origin[1] + (row as f64 + 0.5) * self.cell,
        ]
    }

    #[inline]
    pub fn offset(&self, col: usize, row: usize) -> (i16, i16) {
        self.offsets[row * self.width + col]
    }

    #[inline]
    pub fn is_road(&self, col: usize, row: usize) -> bool {
        self.road[row * self.width + col]
    }

    fn inside(&self, x: f64, y: f64) -> bool {
        let u = (x - self.origin[0]) / self.cell;
        let v = (y - self.origin[1]) / self.cell;
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }

    /// Nearest road cell for a (clamped) query cell.
    pub fn target_cell(&self, col: usize, row: usize) -> (usize, usize) {
        let (dx, dy) = self.offset(col, row);
        (
            (col as isize + dx as isize) as usize,
            (row as isize + dy as isize) as usize,
        )
    }
}

/// Moves the x-y part of `t` onto the road. Points already in a road cell
/// are returned unchanged; everything else snaps to the center of its
/// nearest road cell. Queries outside the grid clamp to the border first.
/// The z coordinate is never touched.
pub fn rectify_translation(t: &Vector3<f64>, field: &RoadOffsetField) -> Vector3<f64> {
    let (col, row) = field.cell_of(t.x, t.y);
    if field.inside(t.x, t.y) && field.is_road(col, row) {
        return *t;
    }
    let (tc, tr) = field.target_cell(col, row);
    let c = field.cell_center(tc, tr);
    Vector3::new(c[0], c[1], t.z)
}
