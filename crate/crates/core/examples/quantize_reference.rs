//! Folds batch norm into the reference model, quantizes it with a few
//! synthetic calibration images and writes the INT8 checkpoint.
//!
//! `cargo run --release --example quantize_reference [out.bedq]`

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tinydet::model::build_reference_model;
use tinydet::quant::{quantize_model, read_quantized_checkpoint, write_quantized_checkpoint};
use tinydet::Tensor;

fn main() -> tinydet::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "reference.bedq".into());
    let model = build_reference_model().fold_batchnorm()?;

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let calibration: Vec<Tensor<f32>> = (0..4)
        .map(|_| {
            let data = (0..model.input_shape.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            Tensor::new(model.input_shape, data)
        })
        .collect::<Result<_, _>>()?;

    let qmodel = quantize_model(&model, &calibration)?;
    println!("input exponent {}", qmodel.input.scale_exp());
    for (i, layer) in qmodel.layers.iter().enumerate() {
        println!(
            "layer {i:2} {:?}: weight 2^-{} activation 2^-{}",
            layer.spec.kind,
            layer.weight.scale_exp(),
            layer.activation.scale_exp()
        );
    }
    println!("head output exponent 2^-{} (INT32 accumulators)", qmodel.output_exp());

    let bytes = write_quantized_checkpoint(&qmodel)?;
    std::fs::write(&out, &bytes)?;
    assert_eq!(read_quantized_checkpoint(&bytes)?, qmodel);
    println!("wrote {out} ({} bytes)", bytes.len());
    Ok(())
}
