//! `BEDQ` quantized checkpoint format.
//!
//! ```text
//! magic "BEDQ" | version u16 = 1 | layer_count u16 | input c,h,w u16 x3 | input scale_exp i8
//! per layer: kind u8 | flags u8 (bit0 relu, bit2 last_layer_wide) | in u16 | out u16
//!            | padding u8 | weight scale_exp i8 | act scale_exp i8
//!   conv only: weights i8[out*in*k*k] | bias i32[out]
//! ```

use super::{QuantParams, QuantizedLayer, QuantizedModel};
use crate::error::{Error, Result};
use crate::model::checkpoint::{
    read_layer_header, read_shape, write_layer_header, write_shape, FLAG_BATCHNORM, FLAG_RELU,
};
use crate::wire::{Reader, Writer};

pub const QUANTIZED_MAGIC: &[u8; 4] = b"BEDQ";
const VERSION: u16 = 1;
const FLAG_WIDE: u8 = 1 << 2;

fn exp_byte(p: QuantParams) -> i8 {
    p.scale_exp() as i8
}

pub fn write_quantized_checkpoint(model: &QuantizedModel) -> Result<Vec<u8>> {
    model.validate()?;
    let mut w = Writer::default();
    w.bytes(QUANTIZED_MAGIC);
    w.u16(VERSION);
    w.count("layer count", model.layers.len())?;
    write_shape(&mut w, model.input_shape)?;
    w.i8(exp_byte(model.input));
    let last = model.layers.len().saturating_sub(1);
    for (i, layer) in model.layers.iter().enumerate() {
        let mut flags = 0;
        if layer.spec.has_relu {
            flags |= FLAG_RELU;
        }
        if model.last_layer_wide && i == last {
            flags |= FLAG_WIDE;
        }
        write_layer_header(&mut w, &layer.spec, flags)?;
        w.i8(exp_byte(layer.weight));
        w.i8(exp_byte(layer.activation));
        layer.weights.iter().for_each(|&v| w.i8(v));
        layer.bias.iter().for_each(|&v| w.i32(v));
    }
    Ok(w.into_bytes())
}

pub fn read_quantized_checkpoint(bytes: &[u8]) -> Result<QuantizedModel> {
    let mut r = Reader::new(bytes);
    r.expect_magic(QUANTIZED_MAGIC)?;
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = usize::from(r.u16()?);
    let input_shape = read_shape(&mut r)?;
    let input = QuantParams::new(r.i8()?.into())?;
    let mut layers = Vec::with_capacity(count);
    let mut wide = false;
    for i in 0..count {
        let (spec, flags) = read_layer_header(&mut r)?;
        if flags & FLAG_BATCHNORM != 0 {
            return Err(Error::BatchNormNotFolded { layer: i });
        }
        if flags & FLAG_WIDE != 0 {
            if i + 1 != count {
                return Err(Error::Checkpoint(format!(
                    "layer {i} is marked wide but is not the last layer"
                )));
            }
            wide = true;
        }
        let weight = QuantParams::new(r.i8()?.into())?;
        let activation = QuantParams::new(r.i8()?.into())?;
        let weights = r
            .take(spec.weight_count())?
            .iter()
            .map(|&b| b as i8)
            .collect();
        let n_bias = if spec.kind.is_conv() { spec.out_channels } else { 0 };
        let bias = (0..n_bias).map(|_| r.i32()).collect::<Result<_>>()?;
        layers.push(QuantizedLayer {
            spec,
            weight,
            activation,
            weights,
            bias,
        });
    }
    r.finish()?;
    let model = QuantizedModel {
        input_shape,
        input,
        layers,
        last_layer_wide: wide,
    };
    model.validate()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LayerSpec;
    use crate::tensor::Shape;

    fn tiny() -> QuantizedModel {
        let p = |n| QuantParams::new(n).unwrap();
        QuantizedModel {
            input_shape: Shape::new(1, 2, 2),
            input: p(7),
            layers: vec![
                QuantizedLayer {
                    spec: LayerSpec::conv1x1(1, 2).with_relu(),
                    weight: p(6),
                    activation: p(5),
                    weights: vec![64, -3],
                    bias: vec![-70_000, 12],
                },
                QuantizedLayer {
                    spec: LayerSpec::max_pool(2),
                    weight: p(0),
                    activation: p(5),
                    weights: vec![],
                    bias: vec![],
                },
                QuantizedLayer {
                    spec: LayerSpec::conv1x1(2, 1),
                    weight: p(9),
                    activation: p(4),
                    weights: vec![127, -128],
                    bias: vec![i32::MAX],
                },
            ],
            last_layer_wide: true,
        }
    }

    #[test]
    fn round_trip_and_layout() {
        let m = tiny();
        let bytes = write_quantized_checkpoint(&m).unwrap();
        assert_eq!(&bytes[..4], b"BEDQ");
        // header 4 + 2 + 2 + 6 + 1, then conv layer header 7 + 2 exps
        assert_eq!(bytes[15], 1); // Conv1x1
        assert_eq!(bytes[16], FLAG_RELU);
        assert_eq!(bytes[22] as i8, 6);
        assert_eq!(bytes[23] as i8, 5);
        assert_eq!(&bytes[24..26], &[64, (-3i8) as u8]);
        assert_eq!(&bytes[26..30], &(-70_000i32).to_le_bytes());
        assert_eq!(read_quantized_checkpoint(&bytes).unwrap(), m);
    }

    #[test]
    fn wide_flag_sits_on_the_last_layer() {
        let bytes = write_quantized_checkpoint(&tiny()).unwrap();
        let last_header = bytes.len() - 2 - 4 - 9;
        assert_eq!(bytes[last_header + 1], FLAG_WIDE);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = write_quantized_checkpoint(&tiny()).unwrap();
        assert!(read_quantized_checkpoint(&bytes[..bytes.len() - 3]).is_err());
        let mut bad_exp = bytes.clone();
        bad_exp[14] = 40;
        assert!(matches!(
            read_quantized_checkpoint(&bad_exp),
            Err(Error::ScaleOutOfRange(40))
        ));
    }
}
