//! Axis-aligned boxes in pixel units, top-left origin `(x, y, w, h)`.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self { x: cx - w / 2.0, y: cy - h / 2.0, w, h }
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn is_valid(&self) -> bool {
        self.w > 0.0 && self.h > 0.0 && [self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite())
    }

    pub fn intersection(&self, other: &BBox) -> f64 {
        let iw = self.right().min(other.right()) - self.x.max(other.x);
        let ih = self.bottom().min(other.bottom()) - self.y.max(other.y);
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }
}

/// Intersection over union; 0 for disjoint or degenerate boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection(b);
    if inter == 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

/// A scored, class-labelled box produced by a detector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class_id: usize,
    pub score: f64,
    #[serde(flatten)]
    pub bbox: BBox,
}

/// A labelled ground-truth box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub class_id: usize,
    #[serde(flatten)]
    pub bbox: BBox,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iou_cases() {
        let a = BBox::new(0.0, 0.0, 2.0, 2.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &BBox::new(5.0, 5.0, 1.0, 1.0)), 0.0);
        assert_eq!(iou(&a, &BBox::new(2.0, 0.0, 2.0, 2.0)), 0.0);
        let b = BBox::new(1.0, 1.0, 2.0, 2.0);
        assert!((iou(&a, &b) - 1.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn center_round_trip() {
        let b = BBox::from_center(10.0, 20.0, 4.0, 6.0);
        assert_eq!(b, BBox::new(8.0, 17.0, 4.0, 6.0));
        assert_eq!(b.center(), (10.0, 20.0));
    }
}
