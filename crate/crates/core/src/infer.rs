//! Float reference engine and the bit-exact integer engine.
//!
//! Both run the same direct convolution kernel. The float engine
//! accumulates in `f64`; the integer engine accumulates in `i64` and then
//! requires the result to fit INT32.

use std::ops::{AddAssign, Mul};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{ConvParams, LayerKind, LayerSpec, ModelGraph};
use crate::quant::{pow2, saturate_i8, shift_round, QuantizedLayer, QuantizedModel};
use crate::tensor::{Shape, Tensor};

/// Direct zero-padded convolution. Output planes are computed in parallel;
/// each element accumulates bias first, then input channel, ky, kx in
/// order, so results do not depend on the thread count.
pub(crate) fn conv_planes<X, W, A>(
    x: &[X],
    input: Shape,
    spec: &LayerSpec,
    output: Shape,
    weights: &[W],
    bias: impl Fn(usize) -> A + Sync,
) -> Vec<A>
where
    X: Copy + Sync + Into<A>,
    W: Copy + Sync + Into<A>,
    A: Copy + Send + Sync + Default + AddAssign + Mul<Output = A>,
{
    let k = spec.kind.kernel_size().unwrap_or(1);
    let pad = spec.padding;
    let (in_h, in_w) = (input.height, input.width);
    let (out_h, out_w) = (output.height, output.width);
    let mut out = vec![A::default(); output.len()];
    out.par_chunks_mut(output.plane().max(1))
        .enumerate()
        .for_each(|(oc, plane)| {
            plane.fill(bias(oc));
            for ic in 0..input.channels {
                let src = &x[ic * input.plane()..(ic + 1) * input.plane()];
                for ky in 0..k {
                    for kx in 0..k {
                        let w: A = weights[((oc * input.channels + ic) * k + ky) * k + kx].into();
                        let ox_lo = pad.saturating_sub(kx);
                        let ox_hi = out_w.min((in_w + pad).saturating_sub(kx));
                        for oy in 0..out_h {
                            let iy = oy + ky;
                            if iy < pad || iy - pad >= in_h {
                                continue;
                            }
                            let row = &src[(iy - pad) * in_w..];
                            let dst = &mut plane[oy * out_w..(oy + 1) * out_w];
                            for ox in ox_lo..ox_hi {
                                dst[ox] += w * row[ox + kx - pad].into();
                            }
                        }
                    }
                }
            }
        });
    out
}

fn conv_shape(layer: usize, x: Shape, spec: &LayerSpec) -> Result<Shape> {
    if !spec.kind.is_conv() {
        return Err(Error::ShapeMismatch(format!(
            "layer {layer}: {:?} is not a convolution",
            spec.kind
        )));
    }
    spec.output_shape(layer, x).map_err(|e| match e {
        Error::ChannelMismatch {
            expected, actual, ..
        } => Error::ShapeMismatch(format!(
            "layer {layer}: expected {expected} input channels, got {actual}"
        )),
        other => other,
    })
}

fn conv_float_at(
    layer: usize,
    x: &Tensor<f32>,
    spec: &LayerSpec,
    params: &ConvParams,
) -> Result<Tensor<f32>> {
    let out_shape = conv_shape(layer, x.shape(), spec)?;
    if params.weights.len() != spec.weight_count() || params.bias.len() != spec.out_channels {
        return Err(Error::ShapeMismatch(format!(
            "layer {layer}: parameter sizes do not match {:?}",
            spec.kind
        )));
    }
    let xs: Vec<f64> = x.data().iter().map(|&v| f64::from(v)).collect();
    let ws: Vec<f64> = params.weights.iter().map(|&v| f64::from(v)).collect();
    let mut acc = conv_planes(&xs, x.shape(), spec, out_shape, &ws, |oc| {
        f64::from(params.bias[oc])
    });
    if spec.has_batchnorm {
        let bn = params
            .batchnorm
            .as_ref()
            .ok_or(Error::MissingBNParams { layer })?;
        for (oc, plane) in acc.chunks_mut(out_shape.plane().max(1)).enumerate() {
            let (scale, shift) = bn.affine(oc);
            plane.iter_mut().for_each(|v| *v = *v * scale + shift);
        }
    }
    let data = acc
        .into_iter()
        .map(|v| if spec.has_relu { v.max(0.0) } else { v } as f32)
        .collect();
    Tensor::new(out_shape, data)
}

/// Float convolution with optional batch-norm (when flagged) and ReLU.
pub fn conv_float(x: &Tensor<f32>, spec: &LayerSpec, params: &ConvParams) -> Result<Tensor<f32>> {
    conv_float_at(0, x, spec, params)
}

/// Integer tensor produced by the integer engine.
#[derive(Debug, Clone, PartialEq)]
pub enum IntTensor {
    Int8(Tensor<i8>),
    Int32(Tensor<i32>),
}

impl IntTensor {
    pub fn shape(&self) -> Shape {
        match self {
            Self::Int8(t) => t.shape(),
            Self::Int32(t) => t.shape(),
        }
    }

    /// Values widened to `i64`, in CHW order.
    pub fn values(&self) -> Vec<i64> {
        match self {
            Self::Int8(t) => t.data().iter().map(|&v| v.into()).collect(),
            Self::Int32(t) => t.data().iter().map(|&v| v.into()).collect(),
        }
    }
}

/// Integer engine output with the exponent needed to read it as real values.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantOutput {
    pub tensor: IntTensor,
    pub scale_exp: i32,
}

impl QuantOutput {
    pub fn shape(&self) -> Shape {
        self.tensor.shape()
    }

    /// `v * 2^-scale_exp`, rounded once to `f32`.
    pub fn dequantize(&self) -> Tensor<f32> {
        let step = pow2(-self.scale_exp);
        match &self.tensor {
            IntTensor::Int8(t) => t.map(|&v| (f64::from(v) * step) as f32),
            IntTensor::Int32(t) => t.map(|&v| (f64::from(v) * step) as f32),
        }
    }
}

fn conv_int8_at(
    layer: usize,
    x: &Tensor<i8>,
    qlayer: &QuantizedLayer,
    input_exp: i32,
    wide: bool,
) -> Result<IntTensor> {
    let spec = &qlayer.spec;
    let out_shape = conv_shape(layer, x.shape(), spec)?;
    if qlayer.weights.len() != spec.weight_count() || qlayer.bias.len() != spec.out_channels {
        return Err(Error::ShapeMismatch(format!(
            "layer {layer}: parameter sizes do not match {:?}",
            spec.kind
        )));
    }
    let acc: Vec<i64> = conv_planes(x.data(), x.shape(), spec, out_shape, &qlayer.weights, |oc| {
        i64::from(qlayer.bias[oc])
    });
    let mut acc32 = Vec::with_capacity(acc.len());
    for v in acc {
        let v = i32::try_from(v).map_err(|_| Error::AccumulatorOverflow { layer })?;
        acc32.push(if spec.has_relu { v.max(0) } else { v });
    }
    if wide {
        return Ok(IntTensor::Int32(Tensor::new(out_shape, acc32)?));
    }
    let shift = qlayer.weight.scale_exp() + input_exp - qlayer.activation.scale_exp();
    let data = acc32
        .into_iter()
        .map(|v| saturate_i8(shift_round(v.into(), shift)))
        .collect();
    Ok(IntTensor::Int8(Tensor::new(out_shape, data)?))
}

/// Integer convolution: exact INT32 accumulation of `w_q * x_q + bias_q`,
/// ReLU on the accumulator, then requantization by the shift
/// `w_exp + input_exp - act_exp` unless `wide`, in which case the
/// accumulators are returned.
pub fn conv_int8(
    x: &Tensor<i8>,
    qlayer: &QuantizedLayer,
    input_exp: i32,
    wide: bool,
) -> Result<IntTensor> {
    conv_int8_at(0, x, qlayer, input_exp, wide)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolKind {
    Max,
    Avg,
}

impl PoolKind {
    pub fn of(kind: LayerKind) -> Option<Self> {
        match kind {
            LayerKind::MaxPool2x2 => Some(Self::Max),
            LayerKind::AvgPool2x2 => Some(Self::Avg),
            _ => None,
        }
    }
}

/// Element types the 2x2 pooling window understands.
pub trait Poolable: Copy + Send + Sync {
    fn max4(w: [Self; 4]) -> Self;
    fn avg4(w: [Self; 4]) -> Self;
}

impl Poolable for f32 {
    fn max4(w: [Self; 4]) -> Self {
        w[0].max(w[1]).max(w[2]).max(w[3])
    }

    fn avg4(w: [Self; 4]) -> Self {
        (w.iter().map(|&v| f64::from(v)).sum::<f64>() / 4.0) as f32
    }
}

impl Poolable for f64 {
    fn max4(w: [Self; 4]) -> Self {
        w[0].max(w[1]).max(w[2]).max(w[3])
    }

    fn avg4(w: [Self; 4]) -> Self {
        (w[0] + w[1] + w[2] + w[3]) / 4.0
    }
}

impl Poolable for i8 {
    fn max4(w: [Self; 4]) -> Self {
        w.into_iter().max().unwrap_or(i8::MIN)
    }

    /// Rounds half away from zero.
    fn avg4(w: [Self; 4]) -> Self {
        let sum: i64 = w.iter().map(|&v| i64::from(v)).sum();
        saturate_i8(shift_round(sum, 2))
    }
}

pub(crate) fn pool_at<T: Poolable>(layer: usize, x: &Tensor<T>, kind: PoolKind) -> Result<Tensor<T>> {
    let s = x.shape();
    if !s.height.is_multiple_of(2) || !s.width.is_multiple_of(2) {
        return Err(Error::OddSpatialDim {
            layer,
            height: s.height,
            width: s.width,
        });
    }
    let out = Shape::new(s.channels, s.height / 2, s.width / 2);
    let mut data = Vec::with_capacity(out.len());
    for c in 0..s.channels {
        for y in 0..out.height {
            for xx in 0..out.width {
                let (iy, ix) = (2 * y, 2 * xx);
                let window = [
                    x.get(c, iy, ix),
                    x.get(c, iy, ix + 1),
                    x.get(c, iy + 1, ix),
                    x.get(c, iy + 1, ix + 1),
                ];
                data.push(match kind {
                    PoolKind::Max => T::max4(window),
                    PoolKind::Avg => T::avg4(window),
                });
            }
        }
    }
    Tensor::new(out, data)
}

/// 2x2 stride-2 pooling.
pub fn pool<T: Poolable>(x: &Tensor<T>, kind: PoolKind) -> Result<Tensor<T>> {
    pool_at(0, x, kind)
}

fn check_input<T>(expected: Shape, x: &Tensor<T>) -> Result<()> {
    if x.shape() != expected {
        return Err(Error::ShapeMismatch(format!(
            "model expects input {expected}, got {}",
            x.shape()
        )));
    }
    Ok(())
}

/// Float forward pass returning every layer's output.
pub fn forward_float_trace(model: &ModelGraph, x: &Tensor<f32>) -> Result<Vec<Tensor<f32>>> {
    check_input(model.input_shape, x)?;
    let mut outputs: Vec<Tensor<f32>> = Vec::with_capacity(model.layers.len());
    for (i, spec) in model.layers.iter().enumerate() {
        let input = outputs.last().unwrap_or(x);
        let next = match (PoolKind::of(spec.kind), model.params(i)) {
            (Some(kind), _) => {
                spec.output_shape(i, input.shape())?;
                pool_at(i, input, kind)?
            }
            (None, Some(params)) => conv_float_at(i, input, spec, params)?,
            (None, None) => {
                return Err(match spec.kind {
                    LayerKind::Unsupported(code) => Error::UnsupportedLayer { layer: i, code },
                    _ => Error::InvalidWeights {
                        layer: i,
                        what: "convolution without parameters".into(),
                    },
                })
            }
        };
        outputs.push(next);
    }
    Ok(outputs)
}

pub fn forward_float(model: &ModelGraph, x: &Tensor<f32>) -> Result<Tensor<f32>> {
    Ok(forward_float_trace(model, x)?
        .pop()
        .unwrap_or_else(|| x.clone()))
}

/// Integer forward pass. `x` must already be quantized with the model's
/// input exponent.
pub fn forward_int8(qmodel: &QuantizedModel, x: &Tensor<i8>) -> Result<QuantOutput> {
    check_input(qmodel.input_shape, x)?;
    let last = qmodel.layers.len().saturating_sub(1);
    let mut current = x.clone();
    for (i, layer) in qmodel.layers.iter().enumerate() {
        if let Some(kind) = PoolKind::of(layer.spec.kind) {
            layer.spec.output_shape(i, current.shape())?;
            current = pool_at(i, &current, kind)?;
            continue;
        }
        if let LayerKind::Unsupported(code) = layer.spec.kind {
            return Err(Error::UnsupportedLayer { layer: i, code });
        }
        let wide = qmodel.last_layer_wide && i == last;
        match conv_int8_at(i, &current, layer, qmodel.input_exp(i), wide)? {
            IntTensor::Int8(t) => current = t,
            IntTensor::Int32(t) => {
                return Ok(QuantOutput {
                    tensor: IntTensor::Int32(t),
                    scale_exp: qmodel.output_exp(),
                })
            }
        }
    }
    Ok(QuantOutput {
        tensor: IntTensor::Int8(current),
        scale_exp: qmodel.output_exp(),
    })
}
