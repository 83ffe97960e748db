mod common;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use tinydet::infer::forward_int8;
use tinydet::model::{build_reference_model, LayerSpec, ModelGraph, ConvParams};
use tinydet::quant::{fake_quant_forward, quantize_model, quantize_tensor, QuantizedModel};
use tinydet::{Shape, Tensor};

use common::{random_small_model, uniform_tensor};

fn bits(t: &Tensor<f32>) -> Vec<u32> {
    t.data().iter().map(|v| v.to_bits()).collect()
}

fn assert_engines_agree(model: &ModelGraph, qmodel: &QuantizedModel, x: &Tensor<f32>) {
    let xq = quantize_tensor(x, qmodel.input).unwrap();
    let int = forward_int8(qmodel, &xq).unwrap().dequantize();
    let fake = fake_quant_forward(model, x, &qmodel.scale_chain()).unwrap();
    assert_eq!(bits(&int), bits(&fake));
}

#[test]
fn random_models_agree_bitwise_wide_and_narrow() {
    let mut rng = StdRng::seed_from_u64(11);
    for _ in 0..300 {
        let model = random_small_model(&mut rng, true).fold_batchnorm().unwrap();
        let calib: Vec<_> = (0..2).map(|_| uniform_tensor(&mut rng, model.input_shape, 1.0)).collect();
        let mut qmodel = quantize_model(&model, &calib).unwrap();
        let x = uniform_tensor(&mut rng, model.input_shape, 1.2);
        assert_engines_agree(&model, &qmodel, &x);
        qmodel.last_layer_wide = false;
        assert_engines_agree(&model, &qmodel, &x);
    }
}

#[test]
fn saturating_activations_agree() {
    // calibrate on tiny inputs, then run on large ones so every layer clips
    let mut rng = StdRng::seed_from_u64(12);
    for _ in 0..100 {
        let model = random_small_model(&mut rng, false);
        let calib = vec![uniform_tensor(&mut rng, model.input_shape, 0.01)];
        let mut qmodel = quantize_model(&model, &calib).unwrap();
        qmodel.last_layer_wide = rng.gen_bool(0.5);
        let x = uniform_tensor(&mut rng, model.input_shape, 1.0);
        assert_engines_agree(&model, &qmodel, &x);
    }
}

#[test]
fn avg_pool_rounding_ties_agree() {
    // inputs on the 2^-7 grid whose 2x2 sums hit every residue mod 4
    let spec = LayerSpec::conv1x1(1, 1);
    let model = ModelGraph::from_layers(
        Shape::new(1, 4, 4),
        [
            (spec, Some(ConvParams { weights: vec![1.0], bias: vec![0.0], batchnorm: None })),
            (LayerSpec::avg_pool(1), None),
            (LayerSpec::conv1x1(1, 1), Some(ConvParams { weights: vec![1.0], bias: vec![0.0], batchnorm: None })),
        ],
    )
    .unwrap();
    let data: Vec<f32> = [1, 0, 0, 0, 1, 1, 1, 1, -1, 0, -1, -1, 0, -2, -3, -1]
        .iter()
        .map(|&v| v as f32 / 128.0)
        .collect();
    let x = Tensor::new(Shape::new(1, 4, 4), data).unwrap();
    let mut qmodel = quantize_model(&model, std::slice::from_ref(&x)).unwrap();
    assert_engines_agree(&model, &qmodel, &x);
    qmodel.last_layer_wide = false;
    assert_engines_agree(&model, &qmodel, &x);
}

#[test]
fn reference_model_agrees_bitwise() {
    let mut rng = StdRng::seed_from_u64(13);
    let model = build_reference_model().fold_batchnorm().unwrap();
    let calib = vec![uniform_tensor(&mut rng, model.input_shape, 1.0)];
    let qmodel = quantize_model(&model, &calib).unwrap();
    let x = uniform_tensor(&mut rng, model.input_shape, 1.0);
    assert_engines_agree(&model, &qmodel, &x);
}

