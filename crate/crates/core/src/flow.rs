//! Coarse global motion: exhaustive block matching on a `G x G` grid.
//!
//! Each block of `frame_a` is compared (sum of absolute luma differences)
//! against every displacement within the search radius in `frame_b`.
//! Sampling in `frame_b` wraps around the frame edges. Ties go to the
//! shortest displacement, so textureless blocks report zero motion.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::image::{check_dims, DimensionMismatch, RgbImage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    /// Blocks per side.
    pub grid: u32,
    /// Largest displacement searched, in pixels, along each axis.
    pub search_radius: u32,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            grid: 16,
            search_radius: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FlowError {
    #[error(transparent)]
    Dimensions(#[from] DimensionMismatch),
    #[error("grid must be at least 2, got {0}")]
    GridTooSmall(u32),
    #[error("{width}x{height} frame cannot hold a {grid}x{grid} block grid")]
    FrameTooSmall { width: u32, height: u32, grid: u32 },
    #[error("expected {expected} vectors for the grid, got {got}")]
    VectorCount { expected: usize, got: usize },
    #[error("flow vectors must be finite")]
    NonFinite,
}

/// Per-block `(dx, dy)` displacement in pixels, row-major over the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    grid: u32,
    width: u32,
    height: u32,
    vectors: Vec<[f32; 2]>,
}

impl FlowField {
    /// Wraps externally produced vectors (e.g. from an adapter or a test
    /// pattern) for a `width x height` frame.
    pub fn from_vectors(
        grid: u32,
        width: u32,
        height: u32,
        vectors: Vec<[f32; 2]>,
    ) -> Result<Self, FlowError> {
        if grid < 2 {
            return Err(FlowError::GridTooSmall(grid));
        }
        let expected = (grid * grid) as usize;
        if vectors.len() != expected {
            return Err(FlowError::VectorCount {
                expected,
                got: vectors.len(),
            });
        }
        if vectors.iter().flatten().any(|v| !v.is_finite()) {
            return Err(FlowError::NonFinite);
        }
        Ok(Self {
            grid,
            width,
            height,
            vectors,
        })
    }

    /// Builds a field by evaluating `f` at every block centre.
    pub fn from_fn(grid: u32, width: u32, height: u32, mut f: impl FnMut(f32, f32) -> [f32; 2]) -> Result<Self, FlowError> {
        let mut vectors = Vec::with_capacity((grid * grid) as usize);
        for by in 0..grid {
            for bx in 0..grid {
                let (cx, cy) = block_center(grid, width, height, bx, by);
                vectors.push(f(cx, cy));
            }
        }
        Self::from_vectors(grid, width, height, vectors)
    }

    pub fn grid(&self) -> u32 {
        self.grid
    }

    pub fn frame_size(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn vectors(&self) -> &[[f32; 2]] {
        &self.vectors
    }

    pub fn get(&self, bx: u32, by: u32) -> [f32; 2] {
        self.vectors[(by * self.grid + bx) as usize]
    }

    /// Block centres in pixel coordinates, same order as [`vectors`](Self::vectors).
    pub fn centers(&self) -> impl Iterator<Item = (f32, f32)> + '_ {
        (0..self.grid).flat_map(move |by| {
            (0..self.grid).map(move |bx| block_center(self.grid, self.width, self.height, bx, by))
        })
    }

    /// Mean vector length in px/frame.
    pub fn mean_magnitude(&self) -> f64 {
        let sum: f64 = self
            .vectors
            .iter()
            .map(|v| libm::hypot(f64::from(v[0]), f64::from(v[1])))
            .sum();
        sum / self.vectors.len() as f64
    }

    pub fn scaled(&self, s: f32) -> Self {
        Self {
            vectors: self.vectors.iter().map(|v| [v[0] * s, v[1] * s]).collect(),
            ..self.clone()
        }
    }
}

fn block_center(grid: u32, width: u32, height: u32, bx: u32, by: u32) -> (f32, f32) {
    let bw = (width / grid).max(1) as f32;
    let bh = (height / grid).max(1) as f32;
    ((bx as f32 + 0.5) * bw, (by as f32 + 0.5) * bh)
}

fn luma_u8(img: &RgbImage) -> Vec<u8> {
    img.as_raw()
        .chunks_exact(3)
        .map(|p| {
            let y = 299 * u32::from(p[0]) + 587 * u32::from(p[1]) + 114 * u32::from(p[2]);
            ((y + 500) / 1000) as u8
        })
        .collect()
}

pub fn estimate_global_flow(
    frame_a: &RgbImage,
    frame_b: &RgbImage,
    cfg: &FlowConfig,
) -> Result<FlowField, FlowError> {
    check_dims(frame_a.dimensions(), frame_b.dimensions())?;
    let (w, h) = frame_a.dimensions();
    let g = cfg.grid;
    if g < 2 {
        return Err(FlowError::GridTooSmall(g));
    }
    let (bw, bh) = (w / g, h / g);
    if bw == 0 || bh == 0 {
        return Err(FlowError::FrameTooSmall {
            width: w,
            height: h,
            grid: g,
        });
    }
    let a = luma_u8(frame_a);
    let b = luma_u8(frame_b);
    let (wi, hi) = (w as i64, h as i64);
    let r = cfg.search_radius as i64;

    // Candidate displacements ordered by length so the first minimum wins ties.
    let mut candidates: Vec<(i64, i64)> = Vec::with_capacity(((2 * r + 1) * (2 * r + 1)) as usize);
    for dy in -r..=r {
        for dx in -r..=r {
            candidates.push((dx, dy));
        }
    }
    candidates.sort_by_key(|&(dx, dy)| (dx * dx + dy * dy, dy, dx));

    let mut vectors = Vec::with_capacity((g * g) as usize);
    for by in 0..g {
        for bx in 0..g {
            let x0 = i64::from(bx * bw);
            let y0 = i64::from(by * bh);
            let mut best = (u64::MAX, 0i64, 0i64);
            for &(dx, dy) in &candidates {
                let mut sad = 0u64;
                for y in y0..y0 + i64::from(bh) {
                    let yb = (y + dy).rem_euclid(hi);
                    let row_a = (y * wi) as usize;
                    let row_b = (yb * wi) as usize;
                    for x in x0..x0 + i64::from(bw) {
                        let xb = (x + dx).rem_euclid(wi);
                        sad += u64::from(a[row_a + x as usize].abs_diff(b[row_b + xb as usize]));
                    }
                    if sad >= best.0 {
                        break;
                    }
                }
                if sad < best.0 {
                    best = (sad, dx, dy);
                }
            }
            vectors.push([best.1 as f32, best.2 as f32]);
        }
    }
    FlowField::from_vectors(g, w, h, vectors)
}
