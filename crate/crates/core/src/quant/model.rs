use rayon::prelude::*;

use super::{choose_scale_exp, exp_for_max_abs, max_abs, quantize_bias, quantize_value, QuantParams};
use crate::error::{Error, Result};
use crate::infer::forward_float_trace;
use crate::model::{infer_shapes, LayerSpec, ModelGraph};
use crate::tensor::{Shape, Tensor};

/// One deployed layer. Pooling layers carry no weights; their activation
/// exponent equals their input's.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedLayer {
    pub spec: LayerSpec,
    pub weight: QuantParams,
    /// Exponent of this layer's INT8 output.
    pub activation: QuantParams,
    /// `[out][in][kh][kw]`
    pub weights: Vec<i8>,
    /// At scale `2^-(weight + input activation)`.
    pub bias: Vec<i32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedModel {
    pub input_shape: Shape,
    pub input: QuantParams,
    pub layers: Vec<QuantizedLayer>,
    /// The final layer returns raw INT32 accumulators.
    pub last_layer_wide: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerScales {
    pub weight: QuantParams,
    pub activation: QuantParams,
}

/// The scale exponents of a quantized model, detached from its integer
/// parameters, for driving the float simulation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScaleChain {
    pub input: QuantParams,
    pub layers: Vec<LayerScales>,
    pub last_layer_wide: bool,
}

impl ScaleChain {
    /// Exponent of the activation entering `layer`.
    pub fn input_exp(&self, layer: usize) -> i32 {
        match layer {
            0 => self.input.scale_exp(),
            i => self.layers[i - 1].activation.scale_exp(),
        }
    }
}

impl QuantizedModel {
    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn infer_shapes(&self) -> Result<Vec<Shape>> {
        infer_shapes(self.input_shape, &self.layer_specs())
    }

    pub fn output_shape(&self) -> Result<Shape> {
        Ok(self.infer_shapes()?.last().copied().unwrap_or(self.input_shape))
    }

    /// Exponent of the activation entering `layer`.
    pub fn input_exp(&self, layer: usize) -> i32 {
        match layer {
            0 => self.input.scale_exp(),
            i => self.layers[i - 1].activation.scale_exp(),
        }
    }

    /// Exponent of the final output: the accumulator scale for a wide head,
    /// otherwise the last activation exponent.
    pub fn output_exp(&self) -> i32 {
        match self.layers.last() {
            None => self.input.scale_exp(),
            Some(last) if self.last_layer_wide => {
                last.weight.scale_exp() + self.input_exp(self.layers.len() - 1)
            }
            Some(last) => last.activation.scale_exp(),
        }
    }

    pub fn scale_chain(&self) -> ScaleChain {
        ScaleChain {
            input: self.input,
            layers: self
                .layers
                .iter()
                .map(|l| LayerScales {
                    weight: l.weight,
                    activation: l.activation,
                })
                .collect(),
            last_layer_wide: self.last_layer_wide,
        }
    }

    /// Checks parameter sizes, the activation scale chain and the wide head.
    pub fn validate(&self) -> Result<()> {
        self.infer_shapes()?;
        for (i, layer) in self.layers.iter().enumerate() {
            let invalid = |what: String| Error::InvalidWeights { layer: i, what };
            if layer.spec.has_batchnorm {
                return Err(Error::BatchNormNotFolded { layer: i });
            }
            if layer.weights.len() != layer.spec.weight_count() {
                return Err(invalid(format!(
                    "{} weights, expected {}",
                    layer.weights.len(),
                    layer.spec.weight_count()
                )));
            }
            let bias_len = if layer.spec.kind.is_conv() {
                layer.spec.out_channels
            } else {
                0
            };
            if layer.bias.len() != bias_len {
                return Err(invalid(format!(
                    "{} biases, expected {bias_len}",
                    layer.bias.len()
                )));
            }
            if layer.spec.kind.is_pool() && layer.activation.scale_exp() != self.input_exp(i) {
                return Err(invalid("pooling changes the activation scale".into()));
            }
        }
        if self.last_layer_wide && !self.layers.last().is_some_and(|l| l.spec.kind.is_conv()) {
            return Err(Error::HeadNotConv);
        }
        Ok(())
    }
}

/// Post-training quantization of a batch-norm-free float model.
///
/// Weight exponents come from each layer's weights; activation exponents
/// from the max-abs float output of each layer over the calibration set.
/// The final layer is kept wide.
pub fn quantize_model(model: &ModelGraph, calibration: &[Tensor<f32>]) -> Result<QuantizedModel> {
    if calibration.is_empty() {
        return Err(Error::EmptyCalibration);
    }
    model.check_weights()?;
    if let Some(layer) = model.layers.iter().position(|l| l.has_batchnorm) {
        return Err(Error::BatchNormNotFolded { layer });
    }
    if model.layers.last().is_some_and(|l| !l.kind.is_conv()) {
        return Err(Error::HeadNotConv);
    }
    for image in calibration {
        max_abs(image.data())?;
    }

    let per_image: Vec<Vec<f64>> = calibration
        .par_iter()
        .map(|image| {
            let trace = forward_float_trace(model, image)?;
            trace.iter().map(|t| max_abs(t.data())).collect()
        })
        .collect::<Result<_>>()?;
    let layer_max = per_image.iter().fold(vec![0.0f64; model.layers.len()], |mut acc, img| {
        acc.iter_mut().zip(img).for_each(|(a, &m)| *a = a.max(m));
        acc
    });

    let input = QuantParams::input();
    let mut current = input;
    let mut layers = Vec::with_capacity(model.layers.len());
    for (i, spec) in model.layers.iter().enumerate() {
        let layer = match model.params(i) {
            Some(p) => {
                let weight = choose_scale_exp(&p.weights)?;
                let activation = exp_for_max_abs(layer_max[i]);
                let acc_exp = weight.scale_exp() + current.scale_exp();
                if let Some(index) = p.bias.iter().position(|b| !b.is_finite()) {
                    return Err(Error::NonFiniteValue { index });
                }
                QuantizedLayer {
                    spec: *spec,
                    weight,
                    activation,
                    weights: p.weights.iter().map(|&w| quantize_value(w, weight)).collect(),
                    bias: p.bias.iter().map(|&b| quantize_bias(b, acc_exp)).collect(),
                }
            }
            None => QuantizedLayer {
                spec: *spec,
                weight: QuantParams::new(0)?,
                activation: current,
                weights: Vec::new(),
                bias: Vec::new(),
            },
        };
        current = layer.activation;
        layers.push(layer);
    }
    let quantized = QuantizedModel {
        input_shape: model.input_shape,
        input,
        last_layer_wide: !layers.is_empty(),
        layers,
    };
    quantized.validate()?;
    Ok(quantized)
}
