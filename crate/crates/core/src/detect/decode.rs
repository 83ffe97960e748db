use super::{
    BBox, Detection, BOXES_PER_CELL, BOX_FIELDS, CELL_PIXELS, GRID_SIZE, HEAD_SHAPE,
    IMAGE_PIXELS, NUM_CLASSES,
};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// The 15 values of one grid cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellPrediction {
    pub class_probs: [f32; NUM_CLASSES],
    /// `(x_off, y_off, w, h, confidence)` per box.
    pub boxes: [[f32; BOX_FIELDS]; BOXES_PER_CELL],
}

fn check_head(t: &Tensor<f32>) -> Result<()> {
    if t.shape() != HEAD_SHAPE {
        return Err(Error::ShapeMismatch(format!(
            "detection head must be {HEAD_SHAPE}, got {}",
            t.shape()
        )));
    }
    Ok(())
}

pub fn cell_prediction(t: &Tensor<f32>, row: usize, col: usize) -> CellPrediction {
    let v = |c| t.get(c, row, col);
    CellPrediction {
        class_probs: std::array::from_fn(v),
        boxes: std::array::from_fn(|b| {
            std::array::from_fn(|f| v(NUM_CLASSES + b * BOX_FIELDS + f))
        }),
    }
}

/// Turns raw head outputs into decodable values: softmax over the five
/// class logits of each cell. Box fields are linear outputs and pass
/// through unchanged.
pub fn activate_head(raw: &Tensor<f32>) -> Result<Tensor<f32>> {
    check_head(raw)?;
    let mut out = raw.clone();
    let plane = HEAD_SHAPE.plane();
    for cell in 0..plane {
        let logits: [f64; NUM_CLASSES] =
            std::array::from_fn(|c| f64::from(raw.data()[c * plane + cell]));
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps = logits.map(|l| (l - max).exp());
        let sum: f64 = exps.iter().sum();
        for (c, e) in exps.iter().enumerate() {
            out.data_mut()[c * plane + cell] = (e / sum) as f32;
        }
    }
    Ok(out)
}

fn unit(v: f32) -> f32 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// Decodes every box whose `confidence * best class probability` reaches
/// `conf_threshold`. Values are clamped to [0, 1] before the geometry and
/// boxes are clipped to the image. Output order is row-major by cell, then
/// box index.
pub fn decode_grid(head: &Tensor<f32>, conf_threshold: f32) -> Result<Vec<Detection>> {
    check_head(head)?;
    let mut out = Vec::new();
    for row in 0..GRID_SIZE {
        for col in 0..GRID_SIZE {
            let cell = cell_prediction(head, row, col);
            let probs = cell.class_probs.map(unit);
            let (class_id, best) = probs
                .iter()
                .copied()
                .enumerate()
                .fold((0, f32::NEG_INFINITY), |acc, (i, p)| if p > acc.1 { (i, p) } else { acc });
            for b in cell.boxes {
                let [x, y, w, h, conf] = b.map(unit);
                let score = conf * best;
                if score < conf_threshold {
                    continue;
                }
                let cx = (col as f32 + x) * CELL_PIXELS;
                let cy = (row as f32 + y) * CELL_PIXELS;
                let bbox = BBox::from_center(cx, cy, w * IMAGE_PIXELS, h * IMAGE_PIXELS)
                    .clip(IMAGE_PIXELS);
                out.push(Detection {
                    class_id,
                    score,
                    bbox,
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use proptest::prelude::*;

    fn set_cell(t: &mut Tensor<f32>, row: usize, col: usize, values: &[(usize, f32)]) {
        let s = t.shape();
        for &(c, v) in values {
            let i = s.index(c, row, col);
            t.data_mut()[i] = v;
        }
    }

    #[test]
    fn zero_head_decodes_nothing() {
        let t = Tensor::filled(HEAD_SHAPE, 0.0);
        assert!(decode_grid(&t, 0.1).unwrap().is_empty());
    }

    #[test]
    fn centred_full_image_box() {
        let mut t = Tensor::filled(HEAD_SHAPE, 0.0);
        set_cell(&mut t, 3, 3, &[(2, 1.0), (5, 0.5), (6, 0.5), (7, 1.0), (8, 1.0), (9, 1.0)]);
        let d = decode_grid(&t, 0.1).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].class_id, 2);
        assert_eq!(d[0].score, 1.0);
        assert_eq!(d[0].bbox, BBox::new(0.0, 0.0, 224.0, 224.0));
    }

    #[test]
    fn corner_box_is_clipped() {
        let mut t = Tensor::filled(HEAD_SHAPE, 0.0);
        let side = 32.0 / 224.0;
        set_cell(&mut t, 0, 0, &[(0, 0.5), (1, 0.2), (12, side), (13, side), (14, 0.8)]);
        let d = decode_grid(&t, 0.1).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].class_id, 0);
        assert!((d[0].score - 0.4).abs() < 1e-7);
        let b = d[0].bbox;
        assert_eq!((b.x_min, b.y_min), (0.0, 0.0));
        assert!((b.x_max - 16.0).abs() < 1e-4 && (b.y_max - 16.0).abs() < 1e-4);
    }

    #[test]
    fn softmax_of_uniform_logits() {
        let t = Tensor::filled(HEAD_SHAPE, 3.0);
        let a = activate_head(&t).unwrap();
        let cell = cell_prediction(&a, 4, 1);
        assert!(cell.class_probs.iter().all(|&p| (p - 0.2).abs() < 1e-7));
        assert_eq!(cell.boxes[1], [3.0; 5]);
    }

    #[test]
    fn wrong_shape_is_rejected() {
        let t = Tensor::filled(crate::Shape::new(15, 7, 8), 0.0);
        assert!(matches!(decode_grid(&t, 0.1), Err(Error::ShapeMismatch(_))));
    }

    fn head() -> impl Strategy<Value = Tensor<f32>> {
        proptest::collection::vec(-0.2f32..1.2, HEAD_SHAPE.len())
            .prop_map(|d| Tensor::new(HEAD_SHAPE, d).unwrap())
    }

    proptest! {
        #[test]
        fn count_bounded_and_monotone(t in head(), lo in 0.0f32..1.0, delta in 0.0f32..0.5) {
            let low = decode_grid(&t, lo).unwrap();
            let high = decode_grid(&t, lo + delta).unwrap();
            prop_assert!(low.len() <= GRID_SIZE * GRID_SIZE * BOXES_PER_CELL);
            prop_assert!(high.len() <= low.len());
            for d in &high {
                prop_assert!(low.contains(d));
            }
            for d in &low {
                prop_assert!(d.bbox.is_valid());
                prop_assert!((0.0..=1.0).contains(&d.score));
            }
        }

        #[test]
        fn confidence_rescaling_keeps_ordering(t in head(), k in 0.1f32..0.9) {
            let mut scaled = t.clone();
            for row in 0..GRID_SIZE {
                for col in 0..GRID_SIZE {
                    for b in 0..BOXES_PER_CELL {
                        let i = HEAD_SHAPE.index(NUM_CLASSES + b * BOX_FIELDS + 4, row, col);
                        scaled.data_mut()[i] = unit(t.data()[i]) * k;
                    }
                }
            }
            let a = decode_grid(&t, 0.0).unwrap();
            let b = decode_grid(&scaled, 0.0).unwrap();
            prop_assert_eq!(a.len(), b.len());
            for i in 0..a.len() {
                for j in 0..a.len() {
                    if a[i].score > a[j].score {
                        prop_assert!(b[i].score >= b[j].score);
                    }
                }
            }
        }
    }
}
