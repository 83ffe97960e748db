mod common;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use tinydet::detect::{detection_loss, encode_target, BOX_FIELDS, HEAD_SHAPE, NUM_CLASSES};
use tinydet::Tensor;

use common::{loss_oracle, random_truth, uniform_tensor};

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-5 * b.abs().max(1.0)
}

#[test]
fn matches_scalar_loop_oracle() {
    let mut rng = StdRng::seed_from_u64(51);
    for _ in 0..500 {
        let mut pred = uniform_tensor(&mut rng, HEAD_SHAPE, 2.0);
        for v in pred.data_mut().iter_mut().skip(NUM_CLASSES * 49) {
            *v = (*v + 2.0) / 4.0;
        }
        let truths: Vec<_> = (0..rng.gen_range(0..6)).map(|_| random_truth(&mut rng)).collect();
        let loss = detection_loss(&pred, &truths).unwrap();
        let (mse, ce) = loss_oracle(&pred, &truths);
        assert!(close(f64::from(loss.coord_mse), mse), "{} vs {mse}", loss.coord_mse);
        assert!(close(f64::from(loss.class_ce), ce), "{} vs {ce}", loss.class_ce);
    }
}

#[test]
fn encoded_targets_give_zero_coordinate_loss() {
    let mut rng = StdRng::seed_from_u64(52);
    for _ in 0..100 {
        let truth = random_truth(&mut rng);
        let target = encode_target(&truth).unwrap();
        let mut pred = Tensor::filled(HEAD_SHAPE, 0.0);
        let slot = rng.gen_range(0..2);
        for (f, v) in target.fields.iter().enumerate() {
            let c = NUM_CLASSES + slot * BOX_FIELDS + f;
            pred.data_mut()[HEAD_SHAPE.index(c, target.row, target.col)] = *v;
        }
        let loss = detection_loss(&pred, &[truth]).unwrap();
        assert_eq!(loss.coord_mse, 0.0);
        assert!((f64::from(loss.class_ce) - 5f64.ln()).abs() <= 1e-6);
    }
}
