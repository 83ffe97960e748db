//! Symmetric power-of-two quantization.
//!
//! A value `v` is stored as `q` with `v ~= q * 2^-n`. Rounding is half away
//! from zero with saturation everywhere, in both the float simulation and
//! the integer engine, which is what makes the two bit-identical.

mod checkpoint;
mod fake;
mod model;

pub use checkpoint::{read_quantized_checkpoint, write_quantized_checkpoint, QUANTIZED_MAGIC};
pub use fake::fake_quant_forward;
pub use model::{quantize_model, LayerScales, QuantizedLayer, QuantizedModel, ScaleChain};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Scale exponent used for camera input: pixels normalized to [-1, 1).
pub const INPUT_SCALE_EXP: i32 = 7;
/// Exponent returned for all-zero data.
pub const DEFAULT_SCALE_EXP: i32 = 7;
pub const MAX_SCALE_EXP: i32 = 30;
/// Bias saturates symmetrically so every value has a plain decimal literal.
pub const BIAS_LIMIT: i64 = i32::MAX as i64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QuantParams {
    scale_exp: u8,
}

impl QuantParams {
    pub fn new(scale_exp: i32) -> Result<Self> {
        if !(0..=MAX_SCALE_EXP).contains(&scale_exp) {
            return Err(Error::ScaleOutOfRange(scale_exp));
        }
        Ok(Self {
            scale_exp: scale_exp as u8,
        })
    }

    pub fn input() -> Self {
        Self {
            scale_exp: INPUT_SCALE_EXP as u8,
        }
    }

    pub fn scale_exp(self) -> i32 {
        self.scale_exp.into()
    }

    pub const fn zero_point(self) -> i32 {
        0
    }

    /// Quantization step `2^-n`.
    pub fn step(self) -> f64 {
        pow2(-self.scale_exp())
    }

    /// Largest representable value, `127 * 2^-n`.
    pub fn max_value(self) -> f64 {
        127.0 * self.step()
    }

    /// Smallest representable value, `-128 * 2^-n`.
    pub fn min_value(self) -> f64 {
        -128.0 * self.step()
    }
}

/// Exact power of two for exponents in the normal `f64` range.
pub(crate) fn pow2(exp: i32) -> f64 {
    debug_assert!((-1022..=1023).contains(&exp));
    f64::from_bits(((1023 + i64::from(exp)) as u64) << 52)
}

/// Largest `n` in `0..=30` with `max|v| <= 127 * 2^-n`; all-zero data gets 7.
pub fn choose_scale_exp(values: &[f32]) -> Result<QuantParams> {
    let max_abs = max_abs(values)?;
    Ok(exp_for_max_abs(max_abs))
}

pub(crate) fn max_abs(values: &[f32]) -> Result<f64> {
    values.iter().enumerate().try_fold(0.0f64, |acc, (index, &v)| {
        if v.is_finite() {
            Ok(acc.max(f64::from(v).abs()))
        } else {
            Err(Error::NonFiniteValue { index })
        }
    })
}

pub(crate) fn exp_for_max_abs(max_abs: f64) -> QuantParams {
    let n = if max_abs == 0.0 {
        DEFAULT_SCALE_EXP
    } else {
        (0..=MAX_SCALE_EXP)
            .rev()
            .find(|&n| max_abs <= 127.0 * pow2(-n))
            .unwrap_or(0)
    };
    QuantParams {
        scale_exp: n as u8,
    }
}

/// `clamp(round_half_away(v * 2^n), -128, 127)` for a finite `v`.
pub fn quantize_value(v: f32, p: QuantParams) -> i8 {
    (f64::from(v) * pow2(p.scale_exp()))
        .round()
        .clamp(-128.0, 127.0) as i8
}

pub fn dequantize_value(q: i8, p: QuantParams) -> f32 {
    (f64::from(q) * p.step()) as f32
}

pub fn quantize_tensor(t: &Tensor<f32>, p: QuantParams) -> Result<Tensor<i8>> {
    if let Some(index) = t.data().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue { index });
    }
    Ok(t.map(|&v| quantize_value(v, p)))
}

pub fn dequantize(q: &Tensor<i8>, p: QuantParams) -> Tensor<f32> {
    q.map(|&v| dequantize_value(v, p))
}

/// Bias at accumulator scale `2^-(w_exp + act_in_exp)`, saturated to
/// `+-(2^31 - 1)`.
pub fn quantize_bias(b: f32, accumulator_exp: i32) -> i32 {
    (f64::from(b) * pow2(accumulator_exp))
        .round()
        .clamp(-(BIAS_LIMIT as f64), BIAS_LIMIT as f64) as i32
}

/// Divides by `2^shift` rounding half away from zero; a negative shift
/// multiplies (saturating).
pub(crate) fn shift_round(acc: i64, shift: i32) -> i64 {
    if shift <= 0 {
        acc.saturating_mul(1i64 << (-shift).min(62))
    } else {
        let half = 1i64 << (shift - 1);
        let magnitude = (acc.unsigned_abs() + half as u64) >> shift;
        if acc < 0 {
            -(magnitude as i64)
        } else {
            magnitude as i64
        }
    }
}

pub(crate) fn saturate_i8(v: i64) -> i8 {
    v.clamp(-128, 127) as i8
}
