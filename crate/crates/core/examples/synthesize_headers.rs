//! Emits C headers for a small quantized model, writes them with a
//! manifest, reads the directory back and parses the model out again.
//!
//! `cargo run --example synthesize_headers [out_dir]`

use tinydet::model::{ConvParams, LayerSpec, ModelGraph};
use tinydet::quant::{quantize_model, quantize_tensor};
use tinydet::synth::{emit_headers, emit_test_vector, parse_headers, SynthBundle};
use tinydet::{Shape, Tensor};

fn main() -> tinydet::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "headers".into());
    let conv = LayerSpec::conv3x3(3, 4).with_relu();
    let head = LayerSpec::conv1x1(4, 2);
    let wave = |n: usize, k: f32| (0..n).map(|i| (i as f32 * k).sin() * 0.5).collect::<Vec<_>>();
    let model = ModelGraph::from_layers(
        Shape::new(3, 4, 4),
        [
            (conv, Some(ConvParams { weights: wave(conv.weight_count(), 0.7), bias: wave(4, 1.3), batchnorm: None })),
            (LayerSpec::max_pool(4), None),
            (head, Some(ConvParams { weights: wave(head.weight_count(), 0.9), bias: wave(2, 2.1), batchnorm: None })),
        ],
    )?;
    let x = Tensor::new(model.input_shape, wave(48, 0.31))?;
    let qmodel = quantize_model(&model, std::slice::from_ref(&x))?;

    let bundle = emit_headers(&qmodel, "demo")?;
    bundle.write_to(dir.as_ref())?;
    print!("{}", bundle.manifest());
    println!("--- demo_l2.h\n{}", bundle.file("demo_l2.h").unwrap().contents);

    let loaded = SynthBundle::read_from(dir.as_ref())?;
    assert_eq!(parse_headers(&loaded)?, qmodel);
    println!("round trip ok");

    let tv = emit_test_vector(&qmodel, "demo", &quantize_tensor(&x, qmodel.input)?)?;
    std::fs::write(std::path::Path::new(&dir).join("demo_test_vector.h"), tv)?;
    Ok(())
}
