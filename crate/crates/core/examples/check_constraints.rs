//! Builds the reference detector, prints its layer plan and checks it
//! against the accelerator's operator and memory rules. A model with an
//! oversized padding is checked too, to show a violation.

use tinydet::model::{
    build_reference_model, check_constraints, ConvParams, LayerSpec, ModelGraph,
};
use tinydet::Shape;

fn main() -> tinydet::Result<()> {
    let model = build_reference_model();
    let shapes = model.infer_shapes()?;
    println!("input {}", model.input_shape);
    for (i, (spec, shape)) in model.layers.iter().zip(&shapes).enumerate() {
        let kind = format!("{:?}", spec.kind);
        println!("{i:2} {kind:<10} {:>4} -> {:<4} out {shape}", spec.in_channels, spec.out_channels);
    }
    print!("{}", check_constraints(&model)?);

    let wide_pad = LayerSpec::conv3x3(3, 8).with_padding(2);
    let params = ConvParams {
        weights: vec![0.01; wide_pad.weight_count()],
        bias: vec![0.0; 8],
        batchnorm: None,
    };
    let bad = ModelGraph::from_layers(Shape::new(3, 32, 32), [(wide_pad, Some(params))])?;
    println!();
    print!("{}", check_constraints(&bad)?);
    Ok(())
}
