//! Integer coordinate algebra for dynamic-resolution tiling.
//!
//! An image is resized onto a grid of `n_w × n_h` fixed-size blocks and the
//! blocks are flattened row-major into a sequence. A point can then be written
//! either globally as `(x, y)` or block-locally as `[block, x', y']`, where
//! `block` is the position of its block in the flattened sequence. The
//! block-local form is only meaningful together with the grid: the same
//! triple maps to different global points under different grids.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default block edge in pixels.
pub const DEFAULT_BLOCK: u32 = 448;
/// Default upper bound on the number of blocks per image.
pub const DEFAULT_MAX_BLOCKS: u32 = 12;
/// Largest value produced by [`normalize_coord`].
pub const NORM_MAX: u32 = 999;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("{axis} coordinate {value} outside [0, {limit})")]
    OutOfBounds { axis: Axis, value: u32, limit: u32 },
    #[error("block index {index} outside grid of {blocks} blocks")]
    BlockOverflow { index: u32, blocks: u32 },
    #[error("invalid grid {n_w}x{n_h} with {block_w}x{block_h} px blocks")]
    InvalidGrid {
        n_w: u32,
        n_h: u32,
        block_w: u32,
        block_h: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Axis::X => "x",
            Axis::Y => "y",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelPoint {
    pub x: u32,
    pub y: u32,
}

impl PixelPoint {
    pub const fn new(x: u32, y: u32) -> Self {
        Self { x, y }
    }
}

/// Width/height pair of an image or viewport.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[u32; 2]", into = "[u32; 2]")]
pub struct Extent {
    pub w: u32,
    pub h: u32,
}

impl Extent {
    pub const fn new(w: u32, h: u32) -> Self {
        Self { w, h }
    }

    pub fn contains(&self, p: PixelPoint) -> bool {
        p.x < self.w && p.y < self.h
    }
}

impl From<[u32; 2]> for Extent {
    fn from([w, h]: [u32; 2]) -> Self {
        Self { w, h }
    }
}

impl From<Extent> for [u32; 2] {
    fn from(e: Extent) -> Self {
        [e.w, e.h]
    }
}

/// Axis-aligned box given by its center and extent, serialized as
/// `[cx, cy, w, h]`.
///
/// The box covers the closed interval `[cx - w/2, cx + w/2]` on each axis;
/// the half-extents may be half-integers, so containment is evaluated on
/// doubled coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[u32; 4]", into = "[u32; 4]")]
pub struct PixelBox {
    pub cx: u32,
    pub cy: u32,
    pub w: u32,
    pub h: u32,
}

impl From<[u32; 4]> for PixelBox {
    fn from([cx, cy, w, h]: [u32; 4]) -> Self {
        Self { cx, cy, w, h }
    }
}

impl From<PixelBox> for [u32; 4] {
    fn from(b: PixelBox) -> Self {
        [b.cx, b.cy, b.w, b.h]
    }
}

impl PixelBox {
    pub const fn new(cx: u32, cy: u32, w: u32, h: u32) -> Self {
        Self { cx, cy, w, h }
    }

    /// Box spanning the whole of `extent`.
    pub fn full(extent: Extent) -> Self {
        Self::new(extent.w / 2, extent.h / 2, extent.w, extent.h)
    }

    pub fn center(&self) -> PixelPoint {
        PixelPoint::new(self.cx, self.cy)
    }

    pub fn area(&self) -> u64 {
        u64::from(self.w) * u64::from(self.h)
    }

    /// Closed-boundary containment.
    pub fn contains(&self, p: PixelPoint) -> bool {
        let (px, py) = (2 * i64::from(p.x), 2 * i64::from(p.y));
        let (cx, cy) = (2 * i64::from(self.cx), 2 * i64::from(self.cy));
        let (w, h) = (i64::from(self.w), i64::from(self.h));
        px >= cx - w && px <= cx + w && py >= cy - h && py <= cy + h
    }

    /// True when the box touches the half-open region `[0, w) × [0, h)`.
    pub fn intersects(&self, extent: Extent) -> bool {
        let (cx, cy) = (2 * i64::from(self.cx), 2 * i64::from(self.cy));
        let (w, h) = (i64::from(self.w), i64::from(self.h));
        cx - w < 2 * i64::from(extent.w) && cx + w >= 0 && cy - h < 2 * i64::from(extent.h) && cy + h >= 0
    }

    /// True when the whole box lies inside `[0, w] × [0, h]`.
    pub fn within(&self, extent: Extent) -> bool {
        let (cx, cy) = (2 * i64::from(self.cx), 2 * i64::from(self.cy));
        let (w, h) = (i64::from(self.w), i64::from(self.h));
        cx - w >= 0 && cx + w <= 2 * i64::from(extent.w) && cy - h >= 0 && cy + h <= 2 * i64::from(extent.h)
    }
}

/// Tiling of a resized image into `n_w × n_h` blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockGrid {
    pub n_w: u32,
    pub n_h: u32,
    pub block_w: u32,
    pub block_h: u32,
}

impl BlockGrid {
    pub fn new(n_w: u32, n_h: u32, block_w: u32, block_h: u32) -> Result<Self, GeometryError> {
        if n_w == 0 || n_h == 0 || block_w == 0 || block_h == 0 {
            return Err(GeometryError::InvalidGrid {
                n_w,
                n_h,
                block_w,
                block_h,
            });
        }
        Ok(Self {
            n_w,
            n_h,
            block_w,
            block_h,
        })
    }

    /// Grid with the default 448 px blocks.
    pub fn with_default_blocks(n_w: u32, n_h: u32) -> Self {
        Self::new(n_w, n_h, DEFAULT_BLOCK, DEFAULT_BLOCK).expect("grid dimensions must be positive")
    }

    pub fn blocks(&self) -> u32 {
        self.n_w * self.n_h
    }

    /// Pixel extent of the resized image the grid covers.
    pub fn extent(&self) -> Extent {
        Extent::new(self.n_w * self.block_w, self.n_h * self.block_h)
    }
}

impl std::fmt::Display for BlockGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.n_w, self.n_h)
    }
}

/// A point written as `[block, x', y']`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockLocalPoint {
    pub block: u32,
    pub x: u32,
    pub y: u32,
}

impl BlockLocalPoint {
    pub const fn new(block: u32, x: u32, y: u32) -> Self {
        Self { block, x, y }
    }
}

/// Column/row position of a block; feeds block-wise row and column
/// position embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockIndex2D {
    pub col: u32,
    pub row: u32,
}

/// Picks the tiling whose aspect ratio is closest to the image's, in log
/// space, among all grids with at most `max_blocks` blocks.
///
/// Candidates are scanned by increasing block count, then increasing `n_w`.
/// On a ratio tie a grid with more blocks replaces the incumbent only when
/// the image area exceeds half the candidate's resized pixel area, so small
/// images are not blown up onto large grids.
pub fn select_grid(image_w: u32, image_h: u32, max_blocks: u32, block_w: u32, block_h: u32) -> BlockGrid {
    const TIE_EPS: f64 = 1e-12;
    let image_w = image_w.max(1);
    let image_h = image_h.max(1);
    let max_blocks = max_blocks.max(1);
    let block_w = block_w.max(1);
    let block_h = block_h.max(1);

    let mut candidates: Vec<(u32, u32)> = (1..=max_blocks)
        .flat_map(|n_w| (1..=max_blocks / n_w).map(move |n_h| (n_w, n_h)))
        .collect();
    candidates.sort_by_key(|&(n_w, n_h)| (n_w * n_h, n_w));

    let target = (f64::from(image_w) / f64::from(image_h)).ln();
    let image_area = u64::from(image_w) * u64::from(image_h);
    let mut best = (1u32, 1u32);
    let mut best_dist = f64::INFINITY;
    for (n_w, n_h) in candidates {
        let dist = (target - (f64::from(n_w) / f64::from(n_h)).ln()).abs();
        if dist < best_dist - TIE_EPS {
            best = (n_w, n_h);
            best_dist = dist;
        } else if (dist - best_dist).abs() <= TIE_EPS && n_w * n_h > best.0 * best.1 {
            let grid_area = u64::from(n_w * block_w) * u64::from(n_h * block_h);
            if 2 * image_area > grid_area {
                best = (n_w, n_h);
                best_dist = dist;
            }
        }
    }
    BlockGrid {
        n_w: best.0,
        n_h: best.1,
        block_w,
        block_h,
    }
}

/// Global pixel → block-local triple.
pub fn to_block_local(p: PixelPoint, g: &BlockGrid) -> Result<BlockLocalPoint, GeometryError> {
    let extent = g.extent();
    if p.x >= extent.w {
        return Err(GeometryError::OutOfBounds {
            axis: Axis::X,
            value: p.x,
            limit: extent.w,
        });
    }
    if p.y >= extent.h {
        return Err(GeometryError::OutOfBounds {
            axis: Axis::Y,
            value: p.y,
            limit: extent.h,
        });
    }
    let bx = p.x / g.block_w;
    let by = p.y / g.block_h;
    Ok(BlockLocalPoint {
        block: by * g.n_w + bx,
        x: p.x % g.block_w,
        y: p.y % g.block_h,
    })
}

/// Block-local triple → global pixel. Exact inverse of [`to_block_local`].
pub fn from_block_local(q: BlockLocalPoint, g: &BlockGrid) -> Result<PixelPoint, GeometryError> {
    let idx = block_indices_2d(q.block, g)?;
    if q.x >= g.block_w {
        return Err(GeometryError::OutOfBounds {
            axis: Axis::X,
            value: q.x,
            limit: g.block_w,
        });
    }
    if q.y >= g.block_h {
        return Err(GeometryError::OutOfBounds {
            axis: Axis::Y,
            value: q.y,
            limit: g.block_h,
        });
    }
    Ok(PixelPoint {
        x: q.x + idx.col * g.block_w,
        y: q.y + idx.row * g.block_h,
    })
}

pub fn block_indices_2d(block: u32, g: &BlockGrid) -> Result<BlockIndex2D, GeometryError> {
    if block >= g.blocks() {
        return Err(GeometryError::BlockOverflow {
            index: block,
            blocks: g.blocks(),
        });
    }
    Ok(BlockIndex2D {
        col: block % g.n_w,
        row: block / g.n_w,
    })
}

/// Maps `v ∈ [0, extent]` onto `0..=999`, rounding half up.
pub fn normalize_coord(v: u32, extent: u32) -> u32 {
    let extent = u64::from(extent.max(1));
    let scaled = (2 * u64::from(v) * u64::from(NORM_MAX) + extent) / (2 * extent);
    scaled.min(u64::from(NORM_MAX)) as u32
}

/// Inverse of [`normalize_coord`] up to quantization, rounding half up.
pub fn denormalize_coord(n: u32, extent: u32) -> u32 {
    let n = u64::from(n.min(NORM_MAX));
    let extent = u64::from(extent);
    ((2 * n * extent + u64::from(NORM_MAX)) / (2 * u64::from(NORM_MAX))) as u32
}

/// Scaling between a source image (e.g. a viewport) and the resized image a
/// grid covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResizeMap {
    pub source: Extent,
    pub grid: BlockGrid,
}

impl ResizeMap {
    pub fn new(source: Extent, grid: BlockGrid) -> Self {
        Self { source, grid }
    }

    /// Selects the grid for `source` and builds the mapping.
    pub fn for_image(source: Extent, max_blocks: u32, block_w: u32, block_h: u32) -> Self {
        let grid = select_grid(source.w, source.h, max_blocks, block_w, block_h);
        Self { source, grid }
    }

    fn scale(v: u32, from: u32, to: u32) -> u32 {
        let from = u64::from(from.max(1));
        ((2 * u64::from(v) * u64::from(to) + from) / (2 * from)) as u32
    }

    /// Source pixel → resized pixel, clamped into the resized image.
    pub fn point_to_grid(&self, p: PixelPoint) -> PixelPoint {
        let e = self.grid.extent();
        PixelPoint {
            x: Self::scale(p.x, self.source.w, e.w).min(e.w - 1),
            y: Self::scale(p.y, self.source.h, e.h).min(e.h - 1),
        }
    }

    pub fn point_to_source(&self, p: PixelPoint) -> PixelPoint {
        let e = self.grid.extent();
        PixelPoint {
            x: Self::scale(p.x, e.w, self.source.w).min(self.source.w.saturating_sub(1)),
            y: Self::scale(p.y, e.h, self.source.h).min(self.source.h.saturating_sub(1)),
        }
    }

    /// Source box → resized box. The center is clamped into the resized
    /// image and the extent into `[1, extent]`.
    pub fn box_to_grid(&self, b: PixelBox) -> PixelBox {
        let e = self.grid.extent();
        let c = self.point_to_grid(b.center());
        PixelBox {
            cx: c.x,
            cy: c.y,
            w: Self::scale(b.w, self.source.w, e.w).clamp(1, e.w),
            h: Self::scale(b.h, self.source.h, e.h).clamp(1, e.h),
        }
    }
}
