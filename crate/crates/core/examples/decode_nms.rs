//! Decodes a hand-written head tensor into boxes and suppresses the
//! overlapping duplicates.

use tinydet::detect::{activate_head, decode_grid, nms, HEAD_SHAPE, NUM_CLASSES};
use tinydet::Tensor;

fn set_cell(t: &mut Tensor<f32>, row: usize, col: usize, class: usize, boxes: [[f32; 5]; 2]) {
    let shape = t.shape();
    t.data_mut()[shape.index(class, row, col)] = 3.0;
    for (b, fields) in boxes.iter().enumerate() {
        for (f, v) in fields.iter().enumerate() {
            t.data_mut()[shape.index(NUM_CLASSES + b * 5 + f, row, col)] = *v;
        }
    }
}

fn main() -> tinydet::Result<()> {
    let mut raw = Tensor::filled(HEAD_SHAPE, 0.0);
    // a car in cell (3, 3) predicted twice, a person in cell (1, 5)
    set_cell(&mut raw, 3, 3, 1, [[0.5, 0.5, 0.3, 0.2, 0.9], [0.55, 0.5, 0.3, 0.2, 0.7]]);
    set_cell(&mut raw, 1, 5, 0, [[0.2, 0.8, 0.1, 0.25, 0.8], [0.0, 0.0, 0.0, 0.0, 0.0]]);

    let decoded = decode_grid(&activate_head(&raw)?, 0.1)?;
    println!("decoded {}", decoded.len());
    for d in &decoded {
        println!("  class {} score {:.3} {:?}", d.class_id, d.score, d.bbox);
    }
    let kept = nms(&decoded, 0.5);
    println!("after nms {}", kept.len());
    for d in &kept {
        println!("  class {} score {:.3} {:?}", d.class_id, d.score, d.bbox);
    }
    Ok(())
}
