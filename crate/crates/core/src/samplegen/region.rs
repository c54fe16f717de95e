//! Coarse location names and annotation-box color choice for function
//! description prompts.

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::geometry::{Extent, PixelBox};

pub const REGION_NAMES: [[&str; 3]; 3] = [
    ["top-left corner", "top", "top-right corner"],
    ["left", "center", "right"],
    ["bottom-left corner", "bottom", "bottom-right corner"],
];

// Cell index along one axis; a center on a boundary belongs to the lower cell.
fn third(v: u32, extent: u32) -> usize {
    let extent = u64::from(extent.max(1));
    let k = (3 * u64::from(v)).div_ceil(extent);
    k.saturating_sub(1).min(2) as usize
}

/// Which cell of a 3×3 partition of the viewport holds the box center.
pub fn region_name(b: &PixelBox, viewport: Extent) -> &'static str {
    REGION_NAMES[third(b.cy, viewport.h)][third(b.cx, viewport.w)]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnnotationColor {
    Red,
    Green,
    Blue,
}

impl AnnotationColor {
    pub const ALL: [AnnotationColor; 3] = [AnnotationColor::Red, AnnotationColor::Green, AnnotationColor::Blue];

    pub fn rgb(self) -> [u8; 3] {
        match self {
            AnnotationColor::Red => [255, 0, 0],
            AnnotationColor::Green => [0, 255, 0],
            AnnotationColor::Blue => [0, 0, 255],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AnnotationColor::Red => "red",
            AnnotationColor::Green => "green",
            AnnotationColor::Blue => "blue",
        }
    }
}

fn rgb_distance(a: [u8; 3], b: [u8; 3]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// The candidate color farthest on average from the surrounding pixels.
/// Ties resolve in the order red, green, blue.
pub fn annotation_color(surround: &[[u8; 3]]) -> AnnotationColor {
    let mut best = AnnotationColor::Red;
    let mut best_score = f64::NEG_INFINITY;
    for c in AnnotationColor::ALL {
        let score = surround.iter().map(|&p| rgb_distance(p, c.rgb())).sum::<f64>() / surround.len().max(1) as f64;
        if score > best_score {
            best = c;
            best_score = score;
        }
    }
    best
}

const RING_GAP: i64 = 2;
const RING_OUTER: i64 = 4;
const RING_STRIDE: usize = 4;

/// Pixels of a 2 px ring lying 3–4 px outside the box, every fourth pixel
/// in raster order. Falls back to the box interior when the ring is clipped
/// away entirely.
pub fn surround_pixels(img: &RgbImage, b: &PixelBox) -> Vec<[u8; 3]> {
    let (iw, ih) = (i64::from(img.width()), i64::from(img.height()));
    let left = i64::from(b.cx) - i64::from(b.w) / 2;
    let top = i64::from(b.cy) - i64::from(b.h) / 2;
    let right = left + i64::from(b.w) - 1;
    let bottom = top + i64::from(b.h) - 1;

    let mut ring = Vec::new();
    for y in (top - RING_OUTER)..=(bottom + RING_OUTER) {
        if y < 0 || y >= ih {
            continue;
        }
        for x in (left - RING_OUTER)..=(right + RING_OUTER) {
            if x < 0 || x >= iw {
                continue;
            }
            let inner = x >= left - RING_GAP && x <= right + RING_GAP && y >= top - RING_GAP && y <= bottom + RING_GAP;
            if !inner {
                ring.push(img.get_pixel(x as u32, y as u32).0);
            }
        }
    }
    if ring.is_empty() {
        for y in top.max(0)..=bottom.min(ih - 1) {
            for x in left.max(0)..=right.min(iw - 1) {
                ring.push(img.get_pixel(x as u32, y as u32).0);
            }
        }
    }
    ring.into_iter().step_by(RING_STRIDE).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn region_examples() {
        let vp = Extent::new(1000, 600);
        assert_eq!(region_name(&PixelBox::new(100, 60, 10, 10), vp), "top-left corner");
        assert_eq!(region_name(&PixelBox::new(500, 300, 10, 10), vp), "center");
        assert_eq!(region_name(&PixelBox::new(900, 300, 10, 10), vp), "right");
        assert_eq!(region_name(&PixelBox::new(0, 599, 10, 10), vp), "bottom-left corner");
    }

    #[test]
    fn region_boundaries_go_to_lower_cell() {
        let vp = Extent::new(300, 300);
        assert_eq!(region_name(&PixelBox::new(100, 100, 2, 2), vp), "top-left corner");
        assert_eq!(region_name(&PixelBox::new(101, 100, 2, 2), vp), "top");
        assert_eq!(region_name(&PixelBox::new(200, 200, 2, 2), vp), "center");
        assert_eq!(region_name(&PixelBox::new(201, 201, 2, 2), vp), "bottom-right corner");
    }

    #[test]
    fn region_partition_covers_viewport() {
        let vp = Extent::new(37, 23);
        let mut counts = std::collections::HashMap::new();
        for y in 0..vp.h {
            for x in 0..vp.w {
                *counts.entry(region_name(&PixelBox::new(x, y, 1, 1), vp)).or_insert(0) += 1;
            }
        }
        assert_eq!(counts.len(), 9);
        assert_eq!(counts.values().sum::<u32>(), vp.w * vp.h);
    }

    #[test]
    fn color_examples() {
        assert_eq!(annotation_color(&[[255, 0, 0]; 5]), AnnotationColor::Green);
        assert_eq!(annotation_color(&[[0, 0, 255]; 5]), AnnotationColor::Red);
        assert_eq!(annotation_color(&[[128, 128, 128]; 5]), AnnotationColor::Red);
        assert_eq!(annotation_color(&[[0, 255, 0]; 3]), AnnotationColor::Red);
        assert_eq!(annotation_color(&[[255, 255, 0]]), AnnotationColor::Blue);
    }

    #[test]
    fn surround_ring_sampling() {
        let mut img = RgbImage::from_pixel(40, 40, image::Rgb([255, 0, 0]));
        // Paint the box interior blue; the ring must not see it.
        for y in 15..25 {
            for x in 15..25 {
                img.put_pixel(x, y, image::Rgb([0, 0, 255]));
            }
        }
        let px = surround_pixels(&img, &PixelBox::new(20, 20, 10, 10));
        assert!(!px.is_empty());
        assert!(px.iter().all(|&p| p == [255, 0, 0]));
        // 18x18 outer minus 14x14 inner = 128 ring pixels, every 4th kept.
        assert_eq!(px.len(), 32);
        assert_eq!(annotation_color(&px), AnnotationColor::Green);
    }

    #[test]
    fn surround_falls_back_to_interior() {
        let img = RgbImage::from_pixel(8, 8, image::Rgb([0, 0, 255]));
        let px = surround_pixels(&img, &PixelBox::new(4, 4, 8, 8));
        assert!(!px.is_empty());
    }
}
