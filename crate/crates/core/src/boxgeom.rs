//! Axis-aligned box arithmetic.
//!
//! Boxes use real-valued pixel coordinates with the half-open convention
//! `[x1, x2) × [y1, y2)`, so a box with integer corners covers exactly
//! `(x2 - x1) * (y2 - y1)` pixels. Zero-area boxes are valid values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned rectangle in image pixels.
///
/// Serialized as `[x1, y1, x2, y2]`; deserialization re-checks validity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    /// Builds a box, rejecting non-finite coordinates and inverted corners.
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let invalid = |reason| Error::InvalidBox {
            x1,
            y1,
            x2,
            y2,
            reason,
        };
        if !(x1.is_finite() && y1.is_finite() && x2.is_finite() && y2.is_finite()) {
            return Err(invalid("non-finite coordinate"));
        }
        if x1 > x2 || y1 > y2 {
            return Err(invalid("corners are inverted"));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    /// Builds a box from its top-left corner and extent.
    pub fn from_xywh(left: f64, top: f64, width: f64, height: f64) -> Result<Self> {
        Self::new(left, top, left + width, top + height)
    }

    #[inline]
    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    #[inline]
    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    #[inline]
    pub fn area(&self) -> f64 {
        area(self)
    }

    #[inline]
    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self {
            x1: self.x1 + dx,
            y1: self.y1 + dy,
            x2: self.x2 + dx,
            y2: self.y2 + dy,
        }
    }

    /// Smallest box containing both `self` and `other`.
    pub fn union_envelope(&self, other: &BBox) -> Self {
        Self {
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
            x2: self.x2.max(other.x2),
            y2: self.y2.max(other.y2),
        }
    }

    /// True when `other` lies inside `self` (as point sets), allowing `slack` pixels.
    pub fn contains(&self, other: &BBox, slack: f64) -> bool {
        other.x1 >= self.x1 - slack
            && other.y1 >= self.y1 - slack
            && other.x2 <= self.x2 + slack
            && other.y2 <= self.y2 + slack
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.to_array()
    }
}

/// A detection: box, class and confidence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredBox {
    pub bbox: BBox,
    pub class_id: u32,
    pub score: f64,
}

impl ScoredBox {
    pub fn new(bbox: BBox, class_id: u32, score: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::Config(format!("score {score} outside [0, 1]")));
        }
        Ok(Self {
            bbox,
            class_id,
            score,
        })
    }
}

/// Image or detector-input dimensions in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageSize {
    pub width: u32,
    pub height: u32,
}

impl ImageSize {
    pub const fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }

    /// The full frame `(0, 0, width, height)`.
    pub fn frame(&self) -> BBox {
        BBox {
            x1: 0.0,
            y1: 0.0,
            x2: f64::from(self.width),
            y2: f64::from(self.height),
        }
    }
}

/// Per-axis scale followed by translation: `x' = scale_x * x + offset_x`.
///
/// Only positive scales are allowed, so the map never flips a box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub scale_x: f64,
    pub scale_y: f64,
    pub offset_x: f64,
    pub offset_y: f64,
}

impl AffineMap {
    pub const IDENTITY: AffineMap = AffineMap {
        scale_x: 1.0,
        scale_y: 1.0,
        offset_x: 0.0,
        offset_y: 0.0,
    };

    pub fn new(scale_x: f64, scale_y: f64, offset_x: f64, offset_y: f64) -> Result<Self> {
        let map = Self {
            scale_x,
            scale_y,
            offset_x,
            offset_y,
        };
        map.validate()?;
        Ok(map)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.scale_x, self.scale_y, self.offset_x, self.offset_y]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidMap("non-finite parameter".into()));
        }
        if self.scale_x <= 0.0 || self.scale_y <= 0.0 {
            return Err(Error::InvalidMap(format!(
                "scales must be positive, got ({}, {})",
                self.scale_x, self.scale_y
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn apply_point(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.scale_x * x + self.offset_x,
            self.scale_y * y + self.offset_y,
        )
    }

    pub fn apply(&self, b: &BBox) -> BBox {
        apply_map(b, self)
    }

    pub fn inverse(&self) -> AffineMap {
        invert_map(self)
    }
}

impl Default for AffineMap {
    fn default() -> Self {
        Self::IDENTITY
    }
}

/// `(x2 - x1) * (y2 - y1)`.
#[inline]
pub fn area(b: &BBox) -> f64 {
    (b.x2 - b.x1) * (b.y2 - b.y1)
}

/// Overlap rectangle, or `None` when the boxes do not overlap with positive
/// extent on both axes.
pub fn intersect(a: &BBox, b: &BBox) -> Option<BBox> {
    let x1 = a.x1.max(b.x1);
    let y1 = a.y1.max(b.y1);
    let x2 = a.x2.min(b.x2);
    let y2 = a.y2.min(b.y2);
    if x1 >= x2 || y1 >= y2 {
        return None;
    }
    Some(BBox { x1, y1, x2, y2 })
}

#[inline]
fn intersection_area(a: &BBox, b: &BBox) -> f64 {
    intersect(a, b).map_or(0.0, |i| area(&i))
}

/// Intersection over union. Two zero-area boxes have IoU 0.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = intersection_area(a, b);
    let union = area(a) + area(b) - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// `b` restricted to `frame`; `None` when nothing of positive area remains.
pub fn clip(b: &BBox, frame: &BBox) -> Option<BBox> {
    intersect(b, frame)
}

pub fn apply_map(b: &BBox, m: &AffineMap) -> BBox {
    let (x1, y1) = m.apply_point(b.x1, b.y1);
    let (x2, y2) = m.apply_point(b.x2, b.y2);
    BBox { x1, y1, x2, y2 }
}

pub fn invert_map(m: &AffineMap) -> AffineMap {
    AffineMap {
        scale_x: 1.0 / m.scale_x,
        scale_y: 1.0 / m.scale_y,
        offset_x: -m.offset_x / m.scale_x,
        offset_y: -m.offset_y / m.scale_y,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    /// Pixels `(i, j)` with `x1 <= i < x2`, `y1 <= j < y2` inside both boxes.
    fn pixel_count(boxes: &[BBox]) -> u64 {
        let mut n = 0;
        for j in -1..80 {
            for i in -1..80 {
                let (x, y) = (f64::from(i), f64::from(j));
                if boxes
                    .iter()
                    .all(|b| b.x1 <= x && x < b.x2 && b.y1 <= y && y < b.y2)
                {
                    n += 1;
                }
            }
        }
        n
    }

    #[test]
    fn area_examples() {
        assert_eq!(area(&bx(0., 0., 10., 10.)), 100.0);
        assert_eq!(area(&bx(5., 5., 5., 9.)), 0.0);
        let b = bx(2., 3., 7., 11.);
        assert_eq!(pixel_count(&[b]), 40);
        assert_eq!(area(&b), 40.0);
    }

    #[test]
    fn intersect_examples() {
        let a = bx(0., 0., 10., 10.);
        assert_eq!(intersect(&a, &a), Some(a));
        assert_eq!(intersect(&a, &bx(20., 20., 30., 30.)), None);
        let b = bx(5., 0., 15., 10.);
        assert_eq!(pixel_count(&[a, b]), 50);
        assert_eq!(intersect(&a, &b), Some(bx(5., 0., 10., 10.)));
        // touching edges share no pixels
        assert_eq!(intersect(&a, &bx(10., 0., 20., 10.)), None);
    }

    #[test]
    fn iou_examples() {
        let a = bx(0., 0., 10., 10.);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bx(20., 20., 30., 30.)), 0.0);
        let b = bx(5., 0., 15., 10.);
        assert!((iou(&a, &b) - 50.0 / 150.0).abs() < 1e-15);
        let z = bx(3., 3., 3., 3.);
        assert_eq!(iou(&z, &z), 0.0);
    }

    #[test]
    fn clip_examples() {
        let frame = bx(0., 0., 100., 100.);
        let inside = bx(10., 10., 20., 20.);
        assert_eq!(clip(&inside, &frame), Some(inside));
        assert_eq!(clip(&bx(200., 200., 210., 210.), &frame), None);
        let b = bx(90., 90., 130., 120.);
        assert_eq!(clip(&b, &frame), Some(bx(90., 90., 100., 100.)));
    }

    #[test]
    fn map_examples() {
        let b = bx(1., 1., 2., 2.);
        assert_eq!(apply_map(&b, &AffineMap::IDENTITY), b);
        let m = AffineMap::new(2.0, 2.0, 0.0, 0.0).unwrap();
        assert_eq!(apply_map(&b, &m), bx(2., 2., 4., 4.));
    }

    #[test]
    fn rejects_invalid() {
        assert!(BBox::new(1.0, 0.0, 0.0, 1.0).is_err());
        assert!(BBox::new(f64::NAN, 0.0, 1.0, 1.0).is_err());
        assert!(AffineMap::new(0.0, 1.0, 0.0, 0.0).is_err());
        assert!(AffineMap::new(-1.0, 1.0, 0.0, 0.0).is_err());
        assert!(serde_json::from_str::<BBox>("[5, 0, 1, 1]").is_err());
        let b: BBox = serde_json::from_str("[1, 2, 3, 4]").unwrap();
        assert_eq!(b, bx(1., 2., 3., 4.));
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (-1e3..1e3f64, -1e3..1e3f64, 0.0..500.0f64, 0.0..500.0f64)
            .prop_map(|(x, y, w, h)| bx(x, y, x + w, y + h))
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let ab = iou(&a, &b);
            prop_assert_eq!(ab, iou(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
            if area(&a) > 0.0 {
                prop_assert_eq!(iou(&a, &a), 1.0);
            }
        }

        #[test]
        fn clip_is_inside_both(b in arb_box(), f in arb_box()) {
            if let Some(c) = clip(&b, &f) {
                prop_assert!(f.contains(&c, 0.0));
                prop_assert!(b.contains(&c, 0.0));
                prop_assert!(area(&c) > 0.0);
            }
        }

        #[test]
        fn map_round_trip(
            x in 0.0..1e6f64, y in 0.0..1e6f64, w in 0.0..1e4f64, h in 0.0..1e4f64,
            sx in 0.1..10.0f64, sy in 0.1..10.0f64,
            fx in 0.0..1.0f64, fy in 0.0..1.0f64,
        ) {
            // offsets of the size a crop origin produces: -scale * origin
            let b = bx(x, y, x + w, y + h);
            let m = AffineMap::new(sx, sy, -sx * fx * 1e6, -sy * fy * 1e6).unwrap();
            let back = apply_map(&apply_map(&b, &m), &invert_map(&m));
            for (u, v) in back.to_array().iter().zip(b.to_array()) {
                prop_assert!((u - v).abs() < 1e-9, "{} vs {}", u, v);
            }
        }
    }
}
