//! Encodes ground-truth boxes into grid targets and evaluates the training
//! loss of a head that predicts them exactly.

use tinydet::detect::{
    detection_loss, encode_target, BBox, GroundTruth, BOX_FIELDS, HEAD_SHAPE, NUM_CLASSES,
};
use tinydet::Tensor;

fn main() -> tinydet::Result<()> {
    let truths = [
        GroundTruth { image_id: "a".into(), class_id: 2, bbox: BBox::new(40.0, 70.0, 100.0, 90.0) },
        GroundTruth { image_id: "a".into(), class_id: 4, bbox: BBox::new(150.0, 10.0, 220.0, 60.0) },
    ];
    let mut pred = Tensor::filled(HEAD_SHAPE, 0.0);
    for t in &truths {
        let target = encode_target(t)?;
        println!("class {} -> cell ({}, {}) target {:?}", t.class_id, target.row, target.col, target.fields);
        for (f, v) in target.fields.iter().enumerate() {
            pred.data_mut()[HEAD_SHAPE.index(NUM_CLASSES + f, target.row, target.col)] = *v;
        }
    }
    let exact = detection_loss(&pred, &truths)?;
    println!("exact boxes, flat logits: {exact:?} (ln 5 = {:.6})", 5f64.ln());

    for t in &truths {
        let target = encode_target(t)?;
        pred.data_mut()[HEAD_SHAPE.index(t.class_id, target.row, target.col)] = 4.0;
        pred.data_mut()[HEAD_SHAPE.index(NUM_CLASSES + BOX_FIELDS - 1, target.row, target.col)] = 0.6;
    }
    println!("confident classes, low confidence: {:?}", detection_loss(&pred, &truths)?);
    Ok(())
}
