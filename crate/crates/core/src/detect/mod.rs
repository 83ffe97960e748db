//! Grid detection head: decoding, overlap, suppression, loss and scoring.
//!
//! The head emits a `(15, 7, 7)` tensor. Each of the 7x7 cells covers a
//! 32x32 patch of the 224x224 image and carries
//! `[p0..p4, x1, y1, w1, h1, c1, x2, y2, w2, h2, c2]`: five class scores
//! followed by two boxes. Box centres are offsets inside the cell, sizes
//! are fractions of the image.

mod decode;
mod loss;
mod map;
mod nms;
mod records;

pub use decode::{activate_head, cell_prediction, decode_grid, CellPrediction};
pub use loss::{detection_loss, encode_target, DetectionLoss, EncodedTarget};
pub use map::{mean_average_precision, MapReport};
pub use nms::{nms, rank_order};
pub use records::{
    format_detections, format_ground_truth, parse_detections, parse_ground_truth,
};

use crate::Shape;

pub const NUM_CLASSES: usize = 5;
pub const BOXES_PER_CELL: usize = 2;
pub const BOX_FIELDS: usize = 5;
pub const CELL_DEPTH: usize = NUM_CLASSES + BOXES_PER_CELL * BOX_FIELDS;
pub const GRID_SIZE: usize = 7;
pub const CELL_PIXELS: f32 = 32.0;
pub const IMAGE_PIXELS: f32 = 224.0;
pub const HEAD_SHAPE: Shape = Shape::new(CELL_DEPTH, GRID_SIZE, GRID_SIZE);

pub const DEFAULT_CONF_THRESHOLD: f32 = 0.1;
pub const DEFAULT_NMS_IOU: f32 = 0.5;
pub const DEFAULT_MATCH_IOU: f32 = 0.5;

/// Axis-aligned box in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x_min: f32,
    pub y_min: f32,
    pub x_max: f32,
    pub y_max: f32,
}

impl BBox {
    pub const fn new(x_min: f32, y_min: f32, x_max: f32, y_max: f32) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn from_center(cx: f32, cy: f32, w: f32, h: f32) -> Self {
        Self::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
    }

    pub fn area(&self) -> f64 {
        let w = f64::from(self.x_max) - f64::from(self.x_min);
        let h = f64::from(self.y_max) - f64::from(self.y_min);
        w.max(0.0) * h.max(0.0)
    }

    pub fn clip(&self, limit: f32) -> Self {
        let c = |v: f32| v.clamp(0.0, limit);
        Self::new(c(self.x_min), c(self.y_min), c(self.x_max), c(self.y_max))
    }

    pub fn is_valid(&self) -> bool {
        self.x_min <= self.x_max && self.y_min <= self.y_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub class_id: usize,
    pub score: f32,
    pub bbox: BBox,
}

/// A detection tagged with the image it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageDetection {
    pub image_id: String,
    pub detection: Detection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub image_id: String,
    pub class_id: usize,
    pub bbox: BBox,
}

/// Intersection over union; zero when the union is empty.
pub fn iou(a: &BBox, b: &BBox) -> f32 {
    let iw = f64::from(a.x_max.min(b.x_max)) - f64::from(a.x_min.max(b.x_min));
    let ih = f64::from(a.y_max.min(b.y_max)) - f64::from(a.y_min.max(b.y_min));
    let inter = iw.max(0.0) * ih.max(0.0);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union) as f32
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Counts unit cells covered by both boxes on an integer lattice.
    fn raster_iou(a: (i32, i32, i32, i32), b: (i32, i32, i32, i32)) -> f64 {
        let inside = |r: (i32, i32, i32, i32), x: i32, y: i32| x >= r.0 && x < r.2 && y >= r.1 && y < r.3;
        let (mut inter, mut union) = (0, 0);
        for y in -10..20 {
            for x in -10..20 {
                let (ia, ib) = (inside(a, x, y), inside(b, x, y));
                inter += i32::from(ia && ib);
                union += i32::from(ia || ib);
            }
        }
        if union == 0 {
            0.0
        } else {
            f64::from(inter) / f64::from(union)
        }
    }

    fn as_box(r: (i32, i32, i32, i32)) -> BBox {
        BBox::new(r.0 as f32, r.1 as f32, r.2 as f32, r.3 as f32)
    }

    #[test]
    fn iou_examples() {
        let a = BBox::new(0.0, 0.0, 2.0, 2.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &BBox::new(5.0, 5.0, 6.0, 6.0)), 0.0);
        let b = BBox::new(1.0, 1.0, 3.0, 3.0);
        let expected = raster_iou((0, 0, 2, 2), (1, 1, 3, 3));
        assert!((expected - 1.0 / 7.0).abs() < 1e-12);
        assert!((f64::from(iou(&a, &b)) - expected).abs() < 1e-6);
        let empty = BBox::new(1.0, 1.0, 1.0, 1.0);
        assert_eq!(iou(&empty, &empty), 0.0);
    }

    fn rect() -> impl Strategy<Value = (i32, i32, i32, i32)> {
        (0..10i32, 0..10i32, 0..10i32, 0..10i32).prop_map(|(a, b, c, d)| (a.min(c), b.min(d), a.max(c), b.max(d)))
    }

    proptest! {
        #[test]
        fn iou_matches_raster_count(a in rect(), b in rect()) {
            let got = f64::from(iou(&as_box(a), &as_box(b)));
            prop_assert!((got - raster_iou(a, b)).abs() < 1e-6);
        }

        #[test]
        fn iou_is_symmetric_and_bounded(a in rect(), b in rect()) {
            let (ba, bb) = (as_box(a), as_box(b));
            let v = iou(&ba, &bb);
            prop_assert_eq!(v, iou(&bb, &ba));
            prop_assert!((0.0..=1.0).contains(&v));
            if ba.area() > 0.0 {
                prop_assert_eq!(iou(&ba, &ba), 1.0);
            }
        }
    }
}
