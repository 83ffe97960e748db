use super::parse::{parse_header, CType};
use super::{check_identifier, HeaderWriter};
use crate::error::{Error, Result};
use crate::infer::{forward_int8, IntTensor, QuantOutput};
use crate::quant::QuantizedModel;
use crate::tensor::{Shape, Tensor};

/// An input image and the integer engine's expected output for it.
#[derive(Debug, Clone, PartialEq)]
pub struct TestVector {
    pub input: Tensor<i8>,
    pub output_shape: Shape,
    pub output_exp: i32,
    pub wide: bool,
    /// INT32 accumulators for a wide head, INT8 activations otherwise.
    pub expected: Vec<i64>,
}

impl TestVector {
    pub fn file_name(model_name: &str) -> String {
        format!("{model_name}_test_vector.h")
    }

    pub fn matches(&self, output: &QuantOutput) -> bool {
        let wide = matches!(output.tensor, IntTensor::Int32(_));
        wide == self.wide
            && output.shape() == self.output_shape
            && output.scale_exp == self.output_exp
            && output.tensor.values() == self.expected
    }

    /// Runs the model on the stored input and compares.
    pub fn check(&self, qmodel: &QuantizedModel) -> Result<bool> {
        Ok(self.matches(&forward_int8(qmodel, &self.input)?))
    }
}

/// Renders a test-vector header holding `input` and the model's output on it.
pub fn emit_test_vector(qmodel: &QuantizedModel, model_name: &str, input: &Tensor<i8>) -> Result<String> {
    check_identifier(model_name)?;
    let output = forward_int8(qmodel, input)?;
    let upper = model_name.to_ascii_uppercase();
    let (ins, outs) = (input.shape(), output.shape());
    let mut h = HeaderWriter::new(format!("{upper}_TEST_VECTOR_H"));
    h.define(&format!("{upper}_TV_INPUT_C"), ins.channels);
    h.define(&format!("{upper}_TV_INPUT_H"), ins.height);
    h.define(&format!("{upper}_TV_INPUT_W"), ins.width);
    h.define(&format!("{upper}_TV_OUTPUT_C"), outs.channels);
    h.define(&format!("{upper}_TV_OUTPUT_H"), outs.height);
    h.define(&format!("{upper}_TV_OUTPUT_W"), outs.width);
    h.define(&format!("{upper}_TV_OUTPUT_EXP"), output.scale_exp);
    h.define(
        &format!("{upper}_TV_OUTPUT_WIDE"),
        u8::from(matches!(output.tensor, IntTensor::Int32(_))),
    );
    h.blank();
    h.array("signed char", &format!("{model_name}_tv_input"), input.data());
    h.blank();
    h.array("long", &format!("{model_name}_tv_expected"), &output.tensor.values());
    Ok(h.finish())
}

pub fn parse_test_vector(text: &str, model_name: &str) -> Result<TestVector> {
    check_identifier(model_name)?;
    let h = parse_header(&TestVector::file_name(model_name), text)?;
    let upper = model_name.to_ascii_uppercase();
    let key = |s: &str| format!("{upper}_TV_{s}");
    let shape = |prefix: &str| -> Result<Shape> {
        Ok(Shape::new(
            h.integer(&key(&format!("{prefix}_C")), "usize")?,
            h.integer(&key(&format!("{prefix}_H")), "usize")?,
            h.integer(&key(&format!("{prefix}_W")), "usize")?,
        ))
    };
    let input_shape = shape("INPUT")?;
    let output_shape = shape("OUTPUT")?;
    let wide_at = h.macro_value(&key("OUTPUT_WIDE"))?;
    let wide = match wide_at.value {
        0 => false,
        1 => true,
        _ => return Err(h.error(wide_at.line, wide_at.column, "expected 0 or 1")),
    };
    let input = h.values::<i8>(
        &format!("{model_name}_tv_input"),
        CType::SignedChar,
        input_shape.len(),
        "int8",
    )?;
    let target = if wide { "int32" } else { "int8" };
    let expected = if wide {
        h.values::<i32>(&format!("{model_name}_tv_expected"), CType::Long, output_shape.len(), target)?
            .into_iter()
            .map(i64::from)
            .collect()
    } else {
        h.values::<i8>(&format!("{model_name}_tv_expected"), CType::Long, output_shape.len(), target)?
            .into_iter()
            .map(i64::from)
            .collect()
    };
    Ok(TestVector {
        input: Tensor::new(input_shape, input).map_err(|e| Error::ShapeMismatch(e.to_string()))?,
        output_shape,
        output_exp: h.integer(&key("OUTPUT_EXP"), "i32")?,
        wide,
        expected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::tests::single_weight_model;

    #[test]
    fn round_trip_and_check() {
        let m = single_weight_model();
        let x = Tensor::new(Shape::new(1, 1, 1), vec![64]).unwrap();
        let text = emit_test_vector(&m, "net", &x).unwrap();
        let tv = parse_test_vector(&text, "net").unwrap();
        // 64 * 64 at exponent 14
        assert_eq!(tv.expected, vec![4096]);
        assert_eq!((tv.output_exp, tv.wide), (14, true));
        assert!(tv.check(&m).unwrap());

        let mut bad = tv.clone();
        bad.expected[0] += 1;
        assert!(!bad.check(&m).unwrap());
    }
}
