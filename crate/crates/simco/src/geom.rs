//! Axis-aligned integer pixel boxes.
//!
//! Boxes use inclusive corners: a box spans pixels `x0..=x1` and `y0..=y1`,
//! so its pixel width is `x1 - x0 + 1`.

use serde::{Deserialize, Serialize};

/// Inclusive axis-aligned bounding box in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[i32; 4]", into = "[i32; 4]")]
pub struct BBox {
    pub x0: i32,
    pub y0: i32,
    pub x1: i32,
    pub y1: i32,
}

impl From<[i32; 4]> for BBox {
    fn from(v: [i32; 4]) -> Self {
        BBox {
            x0: v[0],
            y0: v[1],
            x1: v[2],
            y1: v[3],
        }
    }
}

impl From<BBox> for [i32; 4] {
    fn from(b: BBox) -> Self {
        [b.x0, b.y0, b.x1, b.y1]
    }
}

impl BBox {
    pub fn new(x0: i32, y0: i32, x1: i32, y1: i32) -> Self {
        BBox { x0, y0, x1, y1 }
    }

    /// Pixel width (inclusive corners).
    pub fn width(&self) -> i32 {
        self.x1 - self.x0 + 1
    }

    /// Pixel height (inclusive corners).
    pub fn height(&self) -> i32 {
        self.y1 - self.y0 + 1
    }

    /// Pixel area; zero for inverted boxes.
    pub fn area(&self) -> i64 {
        if self.x1 < self.x0 || self.y1 < self.y0 {
            return 0;
        }
        self.width() as i64 * self.height() as i64
    }

    /// True when both sides span at least two pixels.
    pub fn is_proper(&self) -> bool {
        self.x1 > self.x0 && self.y1 > self.y0
    }

    /// True when the box lies fully inside a `width`x`height` image.
    pub fn inside(&self, width: u32, height: u32) -> bool {
        self.x0 >= 0 && self.y0 >= 0 && self.x1 < width as i32 && self.y1 < height as i32
    }

    pub fn intersection_area(&self, other: &BBox) -> i64 {
        let x0 = self.x0.max(other.x0);
        let y0 = self.y0.max(other.y0);
        let x1 = self.x1.min(other.x1);
        let y1 = self.y1.min(other.y1);
        if x1 < x0 || y1 < y0 {
            return 0;
        }
        (x1 - x0 + 1) as i64 * (y1 - y0 + 1) as i64
    }

    /// Intersection over union; 0 when either box is empty.
    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union <= 0 {
            return 0.0;
        }
        inter as f64 / union as f64
    }

    pub fn center(&self) -> (f64, f64) {
        (
            (self.x0 + self.x1) as f64 / 2.0,
            (self.y0 + self.y1) as f64 / 2.0,
        )
    }
}
