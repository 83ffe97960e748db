use super::{pow2, quantize_bias, quantize_value, QuantParams, ScaleChain};
use crate::error::{Error, Result};
use crate::infer::{conv_planes, pool_at, PoolKind};
use crate::model::{LayerKind, ModelGraph};
use crate::tensor::{Shape, Tensor};

/// `Q`: snap to the `2^-n` grid with INT8 saturation, staying in float.
/// Adding `0.0` turns a rounded `-0.0` into the `+0.0` an integer zero
/// dequantizes to.
fn fake_quant(v: f64, exp: i32) -> f64 {
    (v * pow2(exp)).round().clamp(-128.0, 127.0) * pow2(-exp) + 0.0
}

/// Float simulation of the deployed integer arithmetic:
/// `H_{l+1} = Q[f(W_l H_l + b_l)]` with `W_l` and `b_l` snapped to their
/// quantization grids and `Q` the activation fake-quantizer. The input is
/// fake-quantized first; a wide head skips the final `Q`.
///
/// Accumulation happens in `f64`, where every partial sum of grid values
/// is exact, so the result matches the integer engine bit for bit.
pub fn fake_quant_forward(
    model: &ModelGraph,
    x: &Tensor<f32>,
    scales: &ScaleChain,
) -> Result<Tensor<f32>> {
    model.check_weights()?;
    if scales.layers.len() != model.layers.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} layer scales for {} layers",
            scales.layers.len(),
            model.layers.len()
        )));
    }
    if x.shape() != model.input_shape {
        return Err(Error::ShapeMismatch(format!(
            "model expects input {}, got {}",
            model.input_shape,
            x.shape()
        )));
    }
    if let Some(index) = x.data().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue { index });
    }
    let input_exp = scales.input.scale_exp();
    let mut h = x.map(|&v| fake_quant(f64::from(v), input_exp));
    let last = model.layers.len().saturating_sub(1);

    for (i, spec) in model.layers.iter().enumerate() {
        if spec.has_batchnorm {
            return Err(Error::BatchNormNotFolded { layer: i });
        }
        let in_exp = scales.input_exp(i);
        let out_exp = scales.layers[i].activation.scale_exp();
        if let Some(kind) = PoolKind::of(spec.kind) {
            spec.output_shape(i, h.shape())?;
            h = pool_at(i, &h, kind)?;
            if kind == PoolKind::Avg {
                h = h.map(|&v| fake_quant(v, out_exp));
            }
            continue;
        }
        if let LayerKind::Unsupported(code) = spec.kind {
            return Err(Error::UnsupportedLayer { layer: i, code });
        }
        let params = model.params(i).ok_or(Error::InvalidWeights {
            layer: i,
            what: "convolution without parameters".into(),
        })?;
        let wp: QuantParams = scales.layers[i].weight;
        let weights: Vec<f64> = params
            .weights
            .iter()
            .map(|&w| f64::from(quantize_value(w, wp)) * wp.step())
            .collect();
        let acc_exp = wp.scale_exp() + in_exp;
        let bias: Vec<f64> = params
            .bias
            .iter()
            .map(|&b| f64::from(quantize_bias(b, acc_exp)) * pow2(-acc_exp))
            .collect();
        let out_shape: Shape = spec.output_shape(i, h.shape()).map_err(|e| match e {
            Error::ChannelMismatch { expected, actual, .. } => Error::ShapeMismatch(format!(
                "layer {i}: expected {expected} input channels, got {actual}"
            )),
            other => other,
        })?;
        let mut acc = conv_planes(h.data(), h.shape(), spec, out_shape, &weights, |oc| bias[oc]);
        if spec.has_relu {
            acc.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        if scales.last_layer_wide && i == last {
            let data = acc.into_iter().map(|v| v as f32).collect();
            return Tensor::new(out_shape, data);
        }
        h = Tensor::new(
            out_shape,
            acc.into_iter().map(|v| fake_quant(v, out_exp)).collect(),
        )?;
    }
    Ok(h.map(|&v| v as f32))
}
