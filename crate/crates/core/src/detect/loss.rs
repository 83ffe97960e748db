use super::decode::{cell_prediction, CellPrediction};
use super::{
    iou, BBox, GroundTruth, BOX_FIELDS, CELL_PIXELS, GRID_SIZE, HEAD_SHAPE, IMAGE_PIXELS,
    NUM_CLASSES,
};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionLoss {
    /// Mean squared error over `(x_off, y_off, w, h, confidence)` of the
    /// responsible boxes.
    pub coord_mse: f32,
    /// Mean cross entropy of the softmaxed class logits over object cells.
    pub class_ce: f32,
}

/// A ground-truth box in head coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncodedTarget {
    pub row: usize,
    pub col: usize,
    /// `(x_off, y_off, w, h, confidence = 1)`
    pub fields: [f32; BOX_FIELDS],
}

/// Assigns a ground-truth box to the cell containing its centre. Sizes are
/// plain image fractions (no square root).
pub fn encode_target(truth: &GroundTruth) -> Result<EncodedTarget> {
    let b = truth.bbox;
    let inside = |v: f32| (0.0..=IMAGE_PIXELS).contains(&v);
    if !(b.is_valid() && inside(b.x_min) && inside(b.y_min) && inside(b.x_max) && inside(b.y_max))
    {
        return Err(Error::BoxOutsideImage {
            x_min: b.x_min,
            y_min: b.y_min,
            x_max: b.x_max,
            y_max: b.y_max,
        });
    }
    if truth.class_id >= NUM_CLASSES {
        return Err(Error::InvalidClass(truth.class_id));
    }
    let cx = (b.x_min + b.x_max) / 2.0 / CELL_PIXELS;
    let cy = (b.y_min + b.y_max) / 2.0 / CELL_PIXELS;
    let col = (cx.floor() as usize).min(GRID_SIZE - 1);
    let row = (cy.floor() as usize).min(GRID_SIZE - 1);
    Ok(EncodedTarget {
        row,
        col,
        fields: [
            cx - col as f32,
            cy - row as f32,
            (b.x_max - b.x_min) / IMAGE_PIXELS,
            (b.y_max - b.y_min) / IMAGE_PIXELS,
            1.0,
        ],
    })
}

fn predicted_box(row: usize, col: usize, fields: &[f32; BOX_FIELDS]) -> BBox {
    let u = |v: f32| v.clamp(0.0, 1.0);
    BBox::from_center(
        (col as f32 + u(fields[0])) * CELL_PIXELS,
        (row as f32 + u(fields[1])) * CELL_PIXELS,
        u(fields[2]) * IMAGE_PIXELS,
        u(fields[3]) * IMAGE_PIXELS,
    )
}

/// Evaluates the training loss of a raw head output against ground truth.
/// In each object's cell the predicted box with the higher IoU (first on
/// ties) is responsible. Returns zeros when there is no ground truth.
pub fn detection_loss(pred: &Tensor<f32>, truth: &[GroundTruth]) -> Result<DetectionLoss> {
    if pred.shape() != HEAD_SHAPE {
        return Err(Error::ShapeMismatch(format!(
            "detection head must be {HEAD_SHAPE}, got {}",
            pred.shape()
        )));
    }
    if truth.is_empty() {
        return Ok(DetectionLoss {
            coord_mse: 0.0,
            class_ce: 0.0,
        });
    }
    let mut squared = 0.0f64;
    let mut cross_entropy = 0.0f64;
    for t in truth {
        let target = encode_target(t)?;
        let CellPrediction { class_probs, boxes } = cell_prediction(pred, target.row, target.col);
        let overlaps = boxes.map(|b| iou(&predicted_box(target.row, target.col, &b), &t.bbox));
        let responsible = if overlaps[1] > overlaps[0] { 1 } else { 0 };
        squared += boxes[responsible]
            .iter()
            .zip(target.fields)
            .map(|(&p, q)| (f64::from(p) - f64::from(q)).powi(2))
            .sum::<f64>();

        let logits = class_probs.map(f64::from);
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        cross_entropy += log_sum - logits[t.class_id];
    }
    let n = truth.len() as f64;
    Ok(DetectionLoss {
        coord_mse: (squared / (n * BOX_FIELDS as f64)) as f32,
        class_ce: (cross_entropy / n) as f32,
    })
}
