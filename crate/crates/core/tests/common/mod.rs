#![allow(dead_code)]

use rand::rngs::StdRng;
use rand::Rng;

use tinydet::detect::{BBox, Detection, GroundTruth, BOX_FIELDS, HEAD_SHAPE, NUM_CLASSES};
use tinydet::model::{BatchNorm, ConvParams, LayerSpec, ModelGraph};
use tinydet::quant::{QuantParams, QuantizedLayer, QuantizedModel, MAX_SCALE_EXP};
use tinydet::{Shape, Tensor};

pub fn uniform_tensor(rng: &mut StdRng, shape: Shape, range: f32) -> Tensor<f32> {
    let data = (0..shape.len()).map(|_| rng.gen_range(-range..range)).collect();
    Tensor::new(shape, data).unwrap()
}

fn random_spec(rng: &mut StdRng, channels: usize, side: usize, last: bool) -> LayerSpec {
    let out = rng.gen_range(1..=8);
    let pool_ok = !last && side >= 2 && side.is_multiple_of(2);
    let mut spec = match rng.gen_range(0..if pool_ok { 4 } else { 2 }) {
        0 => LayerSpec::conv3x3(channels, out).with_padding(if side < 3 { 1 } else { rng.gen_range(0..=1) }),
        1 => LayerSpec::conv1x1(channels, out),
        2 => return LayerSpec::max_pool(channels),
        _ => return LayerSpec::avg_pool(channels),
    };
    if rng.gen_bool(0.6) {
        spec = spec.with_relu();
    }
    spec
}

fn random_conv_params(rng: &mut StdRng, spec: &LayerSpec, batchnorm: bool) -> ConvParams {
    let n = spec.out_channels;
    let wscale = rng.gen_range(0.05..1.5f32);
    ConvParams {
        weights: (0..spec.weight_count()).map(|_| rng.gen_range(-wscale..wscale)).collect(),
        bias: (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect(),
        batchnorm: batchnorm.then(|| BatchNorm {
            gamma: (0..n).map(|_| rng.gen_range(0.5..1.5)).collect(),
            beta: (0..n).map(|_| rng.gen_range(-0.3..0.3)).collect(),
            running_mean: (0..n).map(|_| rng.gen_range(-0.3..0.3)).collect(),
            running_var: (0..n).map(|_| rng.gen_range(0.2..2.0)).collect(),
            epsilon: 1e-5,
        }),
    }
}

/// A random sequential model on 16x16 input: at most four layers, at most
/// eight channels, ending in a convolution.
pub fn random_small_model(rng: &mut StdRng, batchnorm: bool) -> ModelGraph {
    let input = Shape::new(rng.gen_range(1..=8), 16, 16);
    let depth = rng.gen_range(1..=4);
    let (mut channels, mut side) = (input.channels, 16);
    let mut layers = Vec::new();
    for i in 0..depth {
        let last = i + 1 == depth;
        let mut spec = random_spec(rng, channels, side, last);
        let params = if spec.kind.is_conv() {
            if batchnorm && rng.gen_bool(0.5) {
                spec = spec.with_batchnorm();
            }
            Some(random_conv_params(rng, &spec, spec.has_batchnorm))
        } else {
            None
        };
        let shape = spec.output_shape(i, Shape::new(channels, side, side)).unwrap();
        channels = shape.channels;
        side = shape.height;
        layers.push((spec, params));
    }
    ModelGraph::from_layers(input, layers).unwrap()
}

/// A quantized model with arbitrary in-range integers, not derived from a
/// float model.
pub fn random_quantized_model(rng: &mut StdRng) -> QuantizedModel {
    let float = random_small_model(rng, false);
    let input = QuantParams::new(rng.gen_range(0..=MAX_SCALE_EXP)).unwrap();
    let mut prev = input;
    let layers = float
        .layers
        .iter()
        .map(|&spec| {
            let (weight, activation, weights, bias) = if spec.kind.is_conv() {
                (
                    QuantParams::new(rng.gen_range(0..=MAX_SCALE_EXP)).unwrap(),
                    QuantParams::new(rng.gen_range(0..=MAX_SCALE_EXP)).unwrap(),
                    (0..spec.weight_count()).map(|_| rng.gen::<i8>()).collect(),
                    (0..spec.out_channels).map(|_| rng.gen_range(-i32::MAX..=i32::MAX)).collect(),
                )
            } else {
                (QuantParams::new(0).unwrap(), prev, vec![], vec![])
            };
            prev = activation;
            QuantizedLayer {
                spec,
                weight,
                activation,
                weights,
                bias,
            }
        })
        .collect();
    QuantizedModel {
        input_shape: float.input_shape,
        input,
        layers,
        last_layer_wide: rng.gen_bool(0.5),
    }
}

/// Integer-cornered box in `[0, 224]`.
pub fn lattice_box(rng: &mut StdRng, max_side: i32) -> BBox {
    let x0 = rng.gen_range(0..200);
    let y0 = rng.gen_range(0..200);
    let w = rng.gen_range(1..=max_side).min(224 - x0);
    let h = rng.gen_range(1..=max_side).min(224 - y0);
    BBox::new(x0 as f32, y0 as f32, (x0 + w) as f32, (y0 + h) as f32)
}

pub fn random_detections(rng: &mut StdRng, max: usize) -> Vec<Detection> {
    let n = rng.gen_range(0..=max);
    let scores = [0.3f32, 0.5, 0.5, 0.7, 0.9];
    let mut dets: Vec<Detection> = (0..n)
        .map(|_| Detection {
            class_id: rng.gen_range(0..3),
            score: if rng.gen_bool(0.5) { scores[rng.gen_range(0..scores.len())] } else { rng.gen_range(0.0..1.0) },
            bbox: lattice_box(rng, 120),
        })
        .collect();
    // duplicates and shifted copies of earlier boxes
    for i in 0..n / 4 {
        let mut d = dets[i];
        if rng.gen_bool(0.5) {
            d.bbox.x_max = (d.bbox.x_max + 3.0).min(224.0);
        } else {
            d.score = dets[rng.gen_range(0..n)].score;
        }
        dets.push(d);
    }
    dets
}

/// Exact-arithmetic IoU comparison on integer-cornered boxes:
/// `iou(a, b) > num / den`.
pub fn iou_exceeds(a: &BBox, b: &BBox, num: i64, den: i64) -> bool {
    let c = |v: f32| v as i64;
    let iw = (c(a.x_max).min(c(b.x_max)) - c(a.x_min).max(c(b.x_min))).max(0);
    let ih = (c(a.y_max).min(c(b.y_max)) - c(a.y_min).max(c(b.y_min))).max(0);
    let inter = iw * ih;
    let area = |r: &BBox| (c(r.x_max) - c(r.x_min)) * (c(r.y_max) - c(r.y_min));
    let union = area(a) + area(b) - inter;
    union > 0 && inter * den > num * union
}

/// Brute-force suppression: a detection survives iff no surviving
/// detection of its class that outranks it overlaps it by more than
/// `num / den`. Ranking is a full pairwise comparison count.
pub fn nms_oracle(dets: &[Detection], num: i64, den: i64) -> Vec<Detection> {
    let outranks = |a: &Detection, b: &Detection| {
        let key = |d: &Detection| {
            (
                -(d.score as f64),
                d.bbox.x_min,
                d.bbox.y_min,
                d.class_id,
                d.bbox.x_max,
                d.bbox.y_max,
            )
        };
        let (ka, kb) = (key(a), key(b));
        ka.partial_cmp(&kb) == Some(std::cmp::Ordering::Less)
    };
    let n = dets.len();
    let rank: Vec<usize> = (0..n)
        .map(|i| (0..n).filter(|&j| outranks(&dets[j], &dets[i]) || (j < i && !outranks(&dets[i], &dets[j]))).count())
        .collect();
    let mut by_rank = vec![0; n];
    for (i, &r) in rank.iter().enumerate() {
        by_rank[r] = i;
    }
    let mut kept = vec![false; n];
    for &i in &by_rank {
        kept[i] = !(0..n).any(|j| {
            kept[j]
                && rank[j] < rank[i]
                && dets[j].class_id == dets[i].class_id
                && iou_exceeds(&dets[j].bbox, &dets[i].bbox, num, den)
        });
    }
    by_rank.into_iter().filter(|&i| kept[i]).map(|i| dets[i]).collect()
}

pub fn random_truth(rng: &mut StdRng) -> GroundTruth {
    let b = lattice_box(rng, 200);
    GroundTruth {
        image_id: "img".into(),
        class_id: rng.gen_range(0..NUM_CLASSES),
        bbox: b,
    }
}

/// Loss computed with plain loops in `f64`, written independently of the
/// library.
pub fn loss_oracle(pred: &Tensor<f32>, truths: &[GroundTruth]) -> (f64, f64) {
    assert_eq!(pred.shape(), HEAD_SHAPE);
    if truths.is_empty() {
        return (0.0, 0.0);
    }
    let at = |c: usize, r: usize, k: usize| f64::from(pred.data()[(c * 7 + r) * 7 + k]);
    let (mut sq, mut ce) = (0.0, 0.0);
    for t in truths {
        let b = t.bbox;
        let (x0, y0, x1, y1) = (b.x_min as f64, b.y_min as f64, b.x_max as f64, b.y_max as f64);
        let cx = (x0 + x1) / 2.0 / 32.0;
        let cy = (y0 + y1) / 2.0 / 32.0;
        let col = (cx.floor() as usize).min(6);
        let row = (cy.floor() as usize).min(6);
        let target = [cx - col as f64, cy - row as f64, (x1 - x0) / 224.0, (y1 - y0) / 224.0, 1.0];
        let mut best = (f64::NEG_INFINITY, 0);
        for slot in 0..2 {
            let f = |i: usize| at(5 + slot * BOX_FIELDS + i, row, col).clamp(0.0, 1.0);
            let pcx = (col as f64 + f(0)) * 32.0;
            let pcy = (row as f64 + f(1)) * 32.0;
            let (pw, ph) = (f(2) * 224.0, f(3) * 224.0);
            let (px0, py0, px1, py1) = (pcx - pw / 2.0, pcy - ph / 2.0, pcx + pw / 2.0, pcy + ph / 2.0);
            let iw = (px1.min(x1) - px0.max(x0)).max(0.0);
            let ih = (py1.min(y1) - py0.max(y0)).max(0.0);
            let inter = iw * ih;
            let union = pw * ph + (x1 - x0) * (y1 - y0) - inter;
            let overlap = if union > 0.0 { inter / union } else { 0.0 };
            if overlap > best.0 {
                best = (overlap, slot);
            }
        }
        for (i, target) in target.iter().enumerate() {
            let d = at(5 + best.1 * BOX_FIELDS + i, row, col) - target;
            sq += d * d;
        }
        let mut total = 0.0;
        for c in 0..NUM_CLASSES {
            total += at(c, row, col).exp();
        }
        ce += total.ln() - at(t.class_id, row, col);
    }
    let n = truths.len() as f64;
    (sq / (5.0 * n), ce / n)
}
