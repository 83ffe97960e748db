use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

use super::nms::rank_order;
use super::{iou, GroundTruth, ImageDetection, NUM_CLASSES};

#[derive(Debug, Clone, PartialEq)]
pub struct MapReport {
    /// Average precision per class; `None` for classes without ground truth.
    pub per_class: [Option<f64>; NUM_CLASSES],
    /// Number of ground-truth boxes per class.
    pub truths: [usize; NUM_CLASSES],
    pub map: f64,
}

impl fmt::Display for MapReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (class, ap) in self.per_class.iter().enumerate() {
            match ap {
                Some(ap) => writeln!(f, "class {class} ap {ap:.6} truths {}", self.truths[class])?,
                None => writeln!(f, "class {class} ap - truths 0")?,
            }
        }
        writeln!(f, "mAP {:.6}", self.map)
    }
}

fn image_then_rank(a: &ImageDetection, b: &ImageDetection) -> Ordering {
    b.detection
        .score
        .total_cmp(&a.detection.score)
        .then_with(|| a.image_id.cmp(&b.image_id))
        .then_with(|| rank_order(&a.detection, &b.detection))
}

/// Area under the monotone precision envelope, integrated at every recall
/// step. `points` are `(recall, precision)` in ranking order.
fn envelope_ap(points: &[(f64, f64)]) -> f64 {
    let mut recall = vec![0.0];
    let mut precision = vec![0.0];
    for &(r, p) in points {
        recall.push(r);
        precision.push(p);
    }
    recall.push(1.0);
    precision.push(0.0);
    for i in (0..precision.len() - 1).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    (1..recall.len())
        .filter(|&i| recall[i] != recall[i - 1])
        .map(|i| (recall[i] - recall[i - 1]) * precision[i])
        .sum()
}

/// Mean average precision over the classes that have ground truth.
///
/// Per class, detections are ranked by score and each is matched to the
/// unmatched ground-truth box in the same image with the highest IoU, if
/// that IoU is at least `iou_match`.
pub fn mean_average_precision(
    dets: &[ImageDetection],
    truths: &[GroundTruth],
    iou_match: f32,
) -> MapReport {
    let mut per_class = [None; NUM_CLASSES];
    let mut counts = [0; NUM_CLASSES];
    for (class, slot) in per_class.iter_mut().enumerate() {
        let mut pool: HashMap<&str, Vec<(&GroundTruth, bool)>> = HashMap::new();
        for t in truths.iter().filter(|t| t.class_id == class) {
            pool.entry(t.image_id.as_str()).or_default().push((t, false));
        }
        let positives = pool.values().map(Vec::len).sum::<usize>();
        counts[class] = positives;
        if positives == 0 {
            continue;
        }
        let mut ranked: Vec<&ImageDetection> =
            dets.iter().filter(|d| d.detection.class_id == class).collect();
        ranked.sort_by(|a, b| image_then_rank(a, b));

        let (mut tp, mut fp) = (0usize, 0usize);
        let mut points = Vec::with_capacity(ranked.len());
        for d in ranked {
            let best = pool.get_mut(d.image_id.as_str()).and_then(|candidates| {
                candidates
                    .iter_mut()
                    .filter(|(_, matched)| !matched)
                    .map(|c| (iou(&c.0.bbox, &d.detection.bbox), c))
                    .fold(None, |best: Option<(f32, &mut (&GroundTruth, bool))>, (o, c)| {
                        match best {
                            Some((bo, _)) if bo >= o => best,
                            _ => Some((o, c)),
                        }
                    })
            });
            match best {
                Some((overlap, candidate)) if overlap >= iou_match => {
                    candidate.1 = true;
                    tp += 1;
                }
                _ => fp += 1,
            }
            points.push((
                tp as f64 / positives as f64,
                tp as f64 / (tp + fp) as f64,
            ));
        }
        *slot = Some(envelope_ap(&points));
    }
    let scored: Vec<f64> = per_class.iter().flatten().copied().collect();
    let map = if scored.is_empty() {
        0.0
    } else {
        scored.iter().sum::<f64>() / scored.len() as f64
    };
    MapReport {
        per_class,
        truths: counts,
        map,
    }
}
