use std::cmp::Ordering;

use super::{iou, Detection};

/// Total ranking: score descending, then `x_min`, `y_min`, class, `x_max`,
/// `y_max` ascending.
pub fn rank_order(a: &Detection, b: &Detection) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.bbox.x_min.total_cmp(&b.bbox.x_min))
        .then(a.bbox.y_min.total_cmp(&b.bbox.y_min))
        .then(a.class_id.cmp(&b.class_id))
        .then(a.bbox.x_max.total_cmp(&b.bbox.x_max))
        .then(a.bbox.y_max.total_cmp(&b.bbox.y_max))
}

/// Class-wise greedy non-maximum suppression. Output is in rank order.
pub fn nms(dets: &[Detection], iou_threshold: f32) -> Vec<Detection> {
    let mut ranked = dets.to_vec();
    ranked.sort_by(rank_order);
    let mut suppressed = vec![false; ranked.len()];
    let mut kept = Vec::new();
    for i in 0..ranked.len() {
        if suppressed[i] {
            continue;
        }
        let head = ranked[i];
        kept.push(head);
        for (j, other) in ranked.iter().enumerate().skip(i + 1) {
            if !suppressed[j]
                && other.class_id == head.class_id
                && iou(&head.bbox, &other.bbox) > iou_threshold
            {
                suppressed[j] = true;
            }
        }
    }
    kept
}
