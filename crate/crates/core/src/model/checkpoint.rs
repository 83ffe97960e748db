//! `BEDC` float checkpoint format.
//!
//! ```text
//! magic "BEDC" | version u16 = 1 | layer_count u16 | input c,h,w u16 x3
//! per layer: kind u8 | flags u8 (bit0 relu, bit1 batchnorm) | in u16 | out u16 | padding u8
//!   conv only: weights f32[out*in*k*k] | bias f32[out]
//!   batchnorm only: gamma, beta, mean, var f32[out] each | epsilon f32
//! ```
//!
//! All multi-byte values are little-endian.

use std::fmt::Write as _;

use super::{BatchNorm, ConvParams, LayerKind, LayerSpec, ModelGraph, WeightStore};
use crate::error::{Error, Result};
use crate::tensor::Shape;
use crate::wire::{Reader, Writer};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"BEDC";
const VERSION: u16 = 1;

pub(crate) const FLAG_RELU: u8 = 1 << 0;
pub(crate) const FLAG_BATCHNORM: u8 = 1 << 1;

pub(crate) fn write_shape(w: &mut Writer, shape: Shape) -> Result<()> {
    w.count("input channels", shape.channels)?;
    w.count("input height", shape.height)?;
    w.count("input width", shape.width)
}

pub(crate) fn read_shape(r: &mut Reader<'_>) -> Result<Shape> {
    Ok(Shape::new(
        r.u16()?.into(),
        r.u16()?.into(),
        r.u16()?.into(),
    ))
}

pub(crate) fn write_layer_header(w: &mut Writer, spec: &LayerSpec, flags: u8) -> Result<()> {
    w.u8(spec.kind.code());
    w.u8(flags);
    w.count("in_channels", spec.in_channels)?;
    w.count("out_channels", spec.out_channels)?;
    let padding = u8::try_from(spec.padding)
        .map_err(|_| Error::Checkpoint(format!("padding {} does not fit in u8", spec.padding)))?;
    w.u8(padding);
    Ok(())
}

/// Returns the layer and its raw flag byte.
pub(crate) fn read_layer_header(r: &mut Reader<'_>) -> Result<(LayerSpec, u8)> {
    let kind = LayerKind::from_code(r.u8()?);
    let flags = r.u8()?;
    let spec = LayerSpec {
        kind,
        has_relu: flags & FLAG_RELU != 0,
        has_batchnorm: flags & FLAG_BATCHNORM != 0,
        in_channels: r.u16()?.into(),
        out_channels: r.u16()?.into(),
        padding: r.u8()?.into(),
    };
    Ok((spec, flags))
}

pub fn write_checkpoint(model: &ModelGraph) -> Result<Vec<u8>> {
    model.check_weights()?;
    let mut w = Writer::default();
    w.bytes(CHECKPOINT_MAGIC);
    w.u16(VERSION);
    w.count("layer count", model.layers.len())?;
    write_shape(&mut w, model.input_shape)?;
    for (spec, params) in model.layers.iter().zip(&model.weights.layers) {
        let mut flags = 0;
        if spec.has_relu {
            flags |= FLAG_RELU;
        }
        if spec.has_batchnorm {
            flags |= FLAG_BATCHNORM;
        }
        write_layer_header(&mut w, spec, flags)?;
        if let Some(p) = params {
            w.f32s(&p.weights);
            w.f32s(&p.bias);
            if spec.has_batchnorm {
                let bn = p.batchnorm.as_ref().expect("checked by check_weights");
                w.f32s(&bn.gamma);
                w.f32s(&bn.beta);
                w.f32s(&bn.running_mean);
                w.f32s(&bn.running_var);
                w.f32(bn.epsilon);
            }
        }
    }
    Ok(w.into_bytes())
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<ModelGraph> {
    let mut r = Reader::new(bytes);
    r.expect_magic(CHECKPOINT_MAGIC)?;
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = r.u16()?;
    let input_shape = read_shape(&mut r)?;
    let mut layers = Vec::with_capacity(count.into());
    let mut params = Vec::with_capacity(count.into());
    for _ in 0..count {
        let (spec, _) = read_layer_header(&mut r)?;
        let p = if spec.kind.is_conv() {
            let weights = r.f32s(spec.weight_count())?;
            let bias = r.f32s(spec.out_channels)?;
            let batchnorm = if spec.has_batchnorm {
                let n = spec.out_channels;
                Some(BatchNorm {
                    gamma: r.f32s(n)?,
                    beta: r.f32s(n)?,
                    running_mean: r.f32s(n)?,
                    running_var: r.f32s(n)?,
                    epsilon: r.f32()?,
                })
            } else {
                None
            };
            Some(ConvParams {
                weights,
                bias,
                batchnorm,
            })
        } else {
            None
        };
        layers.push(spec);
        params.push(p);
    }
    r.finish()?;
    ModelGraph::new(input_shape, layers, WeightStore { layers: params })
}

fn push_values(out: &mut String, label: &str, values: &[f32]) {
    let _ = write!(out, "  {label} {}:", values.len());
    for (i, v) in values.iter().enumerate() {
        if i % 8 == 0 {
            out.push_str("\n   ");
        }
        let _ = write!(out, " {v:?}");
    }
    out.push('\n');
}

/// Line-oriented text rendering of a checkpoint, for diffing.
pub fn to_manifest(model: &ModelGraph) -> String {
    let mut out = String::new();
    let s = model.input_shape;
    let _ = writeln!(out, "BEDC v{VERSION}");
    let _ = writeln!(out, "input {} {} {}", s.channels, s.height, s.width);
    let _ = writeln!(out, "layers {}", model.layers.len());
    for (i, spec) in model.layers.iter().enumerate() {
        let _ = writeln!(
            out,
            "layer {i} {:?} in={} out={} pad={} relu={} bn={}",
            spec.kind,
            spec.in_channels,
            spec.out_channels,
            spec.padding,
            u8::from(spec.has_relu),
            u8::from(spec.has_batchnorm)
        );
        if let Some(p) = model.params(i) {
            push_values(&mut out, "weights", &p.weights);
            push_values(&mut out, "bias", &p.bias);
            if let Some(bn) = p.batchnorm.as_ref().filter(|_| spec.has_batchnorm) {
                push_values(&mut out, "gamma", &bn.gamma);
                push_values(&mut out, "beta", &bn.beta);
                push_values(&mut out, "running_mean", &bn.running_mean);
                push_values(&mut out, "running_var", &bn.running_var);
                let _ = writeln!(out, "  epsilon {:?}", bn.epsilon);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_reference_model;

    #[test]
    fn reference_model_round_trips() {
        let m = build_reference_model();
        let bytes = write_checkpoint(&m).unwrap();
        assert_eq!(&bytes[..4], b"BEDC");
        assert_eq!(read_checkpoint(&bytes).unwrap(), m);
    }

    #[test]
    fn layer_header_layout() {
        let spec = LayerSpec::conv1x1(2, 1).with_relu();
        let m = ModelGraph::from_layers(
            Shape::new(2, 1, 1),
            [(
                spec,
                Some(ConvParams {
                    weights: vec![1.0, -2.0],
                    bias: vec![0.5],
                    batchnorm: None,
                }),
            )],
        )
        .unwrap();
        let bytes = write_checkpoint(&m).unwrap();
        let mut expected = b"BEDC".to_vec();
        expected.extend_from_slice(&[1, 0, 1, 0, 2, 0, 1, 0, 1, 0]);
        expected.extend_from_slice(&[1, FLAG_RELU, 2, 0, 1, 0, 0]);
        for v in [1.0f32, -2.0, 0.5] {
            expected.extend_from_slice(&v.to_le_bytes());
        }
        assert_eq!(bytes, expected);
    }

    #[test]
    fn truncated_and_trailing_bytes_are_rejected() {
        let bytes = write_checkpoint(&build_reference_model()).unwrap();
        assert!(matches!(
            read_checkpoint(&bytes[..bytes.len() - 1]),
            Err(Error::Checkpoint(_))
        ));
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(matches!(read_checkpoint(&longer), Err(Error::Checkpoint(_))));
        assert!(matches!(read_checkpoint(b"BEDQ\x01\x00"), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn unknown_kind_survives_as_unsupported() {
        let mut bytes = b"BEDC".to_vec();
        bytes.extend_from_slice(&[1, 0, 1, 0, 3, 0, 8, 0, 8, 0]);
        bytes.extend_from_slice(&[7, 0, 3, 0, 4, 0, 2]);
        let m = read_checkpoint(&bytes).unwrap();
        assert_eq!(m.layers[0].kind, LayerKind::Unsupported(7));
        assert_eq!(crate::model::validate_operators(&m).len(), 1);
    }

    #[test]
    fn manifest_lists_every_layer() {
        let m = build_reference_model();
        let text = to_manifest(&m);
        assert!(text.starts_with("BEDC v1\ninput 3 224 224\nlayers 12\n"));
        assert_eq!(text.lines().filter(|l| l.starts_with("layer ")).count(), 12);
        assert_eq!(text, to_manifest(&m));
    }
}
