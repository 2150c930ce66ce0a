//! Axis-aligned bounding-box arithmetic.
//!
//! Boxes are stored as `(left, top, width, height)` in continuous pixel units.
//! Construction rejects zero-area and non-finite boxes, so every function here
//! can assume `w > 0` and `h > 0`.

use serde::{Deserialize, Serialize};

use crate::error::GeometryError;

/// Axis-aligned rectangle in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox", into = "RawBox")]
pub struct BoundingBox {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

#[derive(Serialize, Deserialize)]
struct RawBox {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

impl TryFrom<RawBox> for BoundingBox {
    type Error = GeometryError;

    fn try_from(raw: RawBox) -> Result<Self, Self::Error> {
        BoundingBox::new(raw.x, raw.y, raw.w, raw.h)
    }
}

impl From<BoundingBox> for RawBox {
    fn from(b: BoundingBox) -> Self {
        RawBox {
            x: b.x,
            y: b.y,
            w: b.w,
            h: b.h,
        }
    }
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        if !(x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(GeometryError::NonFinite { x, y, w, h });
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(GeometryError::Degenerate { w, h });
        }
        Ok(BoundingBox { x, y, w, h })
    }

    /// Builds a box from corner coordinates `(x1, y1)` (top-left) and `(x2, y2)`.
    pub fn from_corners(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, GeometryError> {
        BoundingBox::new(x1, y1, x2 - x1, y2 - y1)
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn width(&self) -> f64 {
        self.w
    }

    pub fn height(&self) -> f64 {
        self.h
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    /// Width over height.
    pub fn aspect_ratio(&self) -> f64 {
        self.w / self.h
    }

    pub fn iou(&self, other: &BoundingBox) -> f64 {
        iou(self, other)
    }
}

/// Intersection over union. Boxes that only share an edge have IoU 0.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = a.right().min(b.right()) - a.x.max(b.x);
    let ih = a.bottom().min(b.bottom()) - a.y.max(b.y);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    // Areas from the same corner differences as the intersection, so that
    // identical boxes give exactly 1.
    let span = |r: &BoundingBox| (r.right() - r.x) * (r.bottom() - r.y);
    let inter = iw * ih;
    let union = span(a) + span(b) - inter;
    (inter / union).clamp(0.0, 1.0)
}

pub fn aspect_ratio(b: &BoundingBox) -> f64 {
    b.aspect_ratio()
}

/// Euclidean distance between box centers, in pixels.
pub fn center_distance(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    (ax - bx).hypot(ay - by)
}

/// Aspect-ratio similarity to the first-frame box, offset by `alpha_ff`.
///
/// The ratio term lies in `(0, 1]` and reaches 1 exactly when both boxes
/// share an aspect ratio.
pub fn ff_score(first: &BoundingBox, b: &BoundingBox, alpha_ff: f64) -> f64 {
    let r = first.aspect_ratio() / b.aspect_ratio();
    r.min(1.0 / r) - alpha_ff
}
