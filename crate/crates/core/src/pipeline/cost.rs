//! Latency and energy model calibrated on the reference detector.

use std::fmt;

use crate::error::Result;
use crate::model::{conv_macs, reference_layers, weight_bytes_quantized, REFERENCE_INPUT};
use crate::quant::QuantizedModel;

/// Measured end-to-end latency of the reference model, image loading included.
pub const MEASURED_LATENCY_MS: f64 = 91.9;
pub const MEASURED_POWER_MW: f64 = 20.08;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostReport {
    pub total_macs: u64,
    pub weight_bytes: usize,
    pub modeled_latency_ms: f64,
    pub modeled_energy_mj: f64,
    pub measured_latency_ms: f64,
    pub measured_power_mw: f64,
}

impl fmt::Display for CostReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "total_macs {}", self.total_macs)?;
        writeln!(f, "weight_bytes {}", self.weight_bytes)?;
        writeln!(f, "latency_ms {:.3}", self.modeled_latency_ms)?;
        writeln!(f, "power_mw {:.2}", self.measured_power_mw)?;
        writeln!(f, "energy_mj {:.3}", self.modeled_energy_mj)
    }
}

pub fn reference_macs() -> u64 {
    conv_macs(REFERENCE_INPUT, &reference_layers()).expect("reference model shapes infer")
}

/// Latency scales linearly with MACs from the reference measurement.
pub fn cost_model(qmodel: &QuantizedModel) -> Result<CostReport> {
    let specs = qmodel.layer_specs();
    let total_macs = conv_macs(qmodel.input_shape, &specs)?;
    let latency = MEASURED_LATENCY_MS * total_macs as f64 / reference_macs() as f64;
    Ok(CostReport {
        total_macs,
        weight_bytes: weight_bytes_quantized(&specs),
        modeled_latency_ms: latency,
        modeled_energy_mj: MEASURED_POWER_MW * latency / 1000.0,
        measured_latency_ms: MEASURED_LATENCY_MS,
        measured_power_mw: MEASURED_POWER_MW,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LayerSpec;
    use crate::quant::{QuantParams, QuantizedLayer};
    use crate::tensor::Shape;

    fn model(input: Shape, specs: &[LayerSpec]) -> QuantizedModel {
        QuantizedModel {
            input_shape: input,
            input: QuantParams::input(),
            layers: specs
                .iter()
                .map(|&spec| QuantizedLayer {
                    spec,
                    weight: QuantParams::input(),
                    activation: QuantParams::input(),
                    weights: vec![0; spec.weight_count()],
                    bias: vec![0; if spec.kind.is_conv() { spec.out_channels } else { 0 }],
                })
                .collect(),
            last_layer_wide: false,
        }
    }

    #[test]
    fn pointwise_macs_by_hand() {
        let r = cost_model(&model(Shape::new(4, 7, 7), &[LayerSpec::conv1x1(4, 4)])).unwrap();
        assert_eq!(r.total_macs, 4 * 4 * 49);
        assert_eq!(r.weight_bytes, 16 + 4 * 4);
    }

    #[test]
    fn reference_reproduces_measurement() {
        let r = cost_model(&model(REFERENCE_INPUT, &reference_layers())).unwrap();
        assert_eq!(r.total_macs, reference_macs());
        assert!((r.modeled_latency_ms - 91.9).abs() < 1e-9);
        assert!((r.modeled_energy_mj - 1.845_352).abs() < 1e-9);
    }

    #[test]
    fn latency_is_linear_in_macs() {
        let one = cost_model(&model(Shape::new(4, 8, 8), &[LayerSpec::conv1x1(4, 4)])).unwrap();
        let two = cost_model(&model(Shape::new(4, 8, 8), &[LayerSpec::conv1x1(4, 8)])).unwrap();
        assert!((two.modeled_latency_ms - 2.0 * one.modeled_latency_ms).abs() < 1e-12);
    }
}
