//! Runs a small model through the integer engine and the float
//! fake-quantization simulation and shows that the outputs are the same
//! bit patterns.

use tinydet::infer::{forward_float, forward_int8};
use tinydet::model::{ConvParams, LayerSpec, ModelGraph};
use tinydet::quant::{fake_quant_forward, quantize_model, quantize_tensor};
use tinydet::{Shape, Tensor};

fn ramp(n: usize, scale: f32) -> Vec<f32> {
    (0..n).map(|i| ((i * 7919 % 97) as f32 / 48.0 - 1.0) * scale).collect()
}

fn main() -> tinydet::Result<()> {
    let c1 = LayerSpec::conv3x3(2, 4).with_relu();
    let c2 = LayerSpec::conv1x1(4, 3);
    let model = ModelGraph::from_layers(
        Shape::new(2, 8, 8),
        [
            (c1, Some(ConvParams { weights: ramp(c1.weight_count(), 0.4), bias: ramp(4, 0.1), batchnorm: None })),
            (LayerSpec::avg_pool(4), None),
            (c2, Some(ConvParams { weights: ramp(c2.weight_count(), 0.8), bias: ramp(3, 0.2), batchnorm: None })),
        ],
    )?;
    let x = Tensor::new(model.input_shape, ramp(128, 0.9))?;
    let qmodel = quantize_model(&model, std::slice::from_ref(&x))?;

    let int = forward_int8(&qmodel, &quantize_tensor(&x, qmodel.input)?)?;
    let fake = fake_quant_forward(&model, &x, &qmodel.scale_chain())?;
    let float = forward_float(&model, &x)?;
    let deq = int.dequantize();

    println!("{:>12} {:>12} {:>12}", "int8", "fake-quant", "float");
    for i in 0..6 {
        println!("{:>12} {:>12} {:>12.6}", deq.data()[i], fake.data()[i], float.data()[i]);
    }
    let identical = deq.data().iter().zip(fake.data()).all(|(a, b)| a.to_bits() == b.to_bits());
    println!("bit-identical: {identical}");
    Ok(())
}
