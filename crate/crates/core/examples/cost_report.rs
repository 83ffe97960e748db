//! Prints the latency and energy model for the reference detector and for
//! a slimmer variant with half the channels.

use tinydet::model::{reference_layers, LayerSpec};
use tinydet::pipeline::cost_model;
use tinydet::quant::{QuantParams, QuantizedLayer, QuantizedModel};
use tinydet::Shape;

fn shell(specs: Vec<LayerSpec>) -> QuantizedModel {
    let q = QuantParams::input();
    QuantizedModel {
        input_shape: Shape::new(3, 224, 224),
        input: q,
        layers: specs
            .into_iter()
            .map(|spec| QuantizedLayer {
                spec,
                weight: q,
                activation: q,
                weights: vec![0; spec.weight_count()],
                bias: vec![0; if spec.kind.is_conv() { spec.out_channels } else { 0 }],
            })
            .collect(),
        last_layer_wide: true,
    }
}

fn main() -> tinydet::Result<()> {
    let reference = reference_layers();
    println!("reference\n{}", cost_model(&shell(reference.clone()))?);

    let n = reference.len();
    let halve = |c: usize| (c / 2).max(1);
    let slim: Vec<LayerSpec> = reference
        .iter()
        .enumerate()
        .map(|(i, s)| LayerSpec {
            in_channels: if i == 0 { 3 } else { halve(s.in_channels) },
            out_channels: if i + 1 == n { 15 } else { halve(s.out_channels) },
            ..*s
        })
        .collect();
    println!("half width\n{}", cost_model(&shell(slim))?);
    Ok(())
}
