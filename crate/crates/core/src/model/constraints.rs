use std::fmt;

use super::{LayerKind, LayerSpec, ModelGraph};
use crate::error::Result;

/// Weight flash available for parameters: 432 KiB.
pub const WEIGHT_BUDGET_BYTES: usize = 432 * 1024;
/// Data memory for feature maps and the streamed image: 896 KiB.
pub const ACTIVATION_BUDGET_BYTES: usize = 896 * 1024;
/// Largest channel count for which the INT32 accumulator bound holds.
pub const MAX_CHANNELS: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    UnsupportedKind(u8),
    Padding { padding: usize, max: usize },
    PoolChannels { in_channels: usize, out_channels: usize },
    ZeroChannels,
    TooManyChannels(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OperatorViolation {
    pub layer: usize,
    pub kind: ViolationKind,
}

impl fmt::Display for OperatorViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "layer {}: ", self.layer)?;
        match self.kind {
            ViolationKind::UnsupportedKind(code) => write!(f, "unsupported operator code {code}"),
            ViolationKind::Padding { padding, max } => {
                write!(f, "padding {padding} exceeds {max}")
            }
            ViolationKind::PoolChannels {
                in_channels,
                out_channels,
            } => write!(f, "pooling changes channels {in_channels} -> {out_channels}"),
            ViolationKind::ZeroChannels => write!(f, "zero channels"),
            ViolationKind::TooManyChannels(n) => {
                write!(f, "{n} channels exceeds {MAX_CHANNELS}")
            }
        }
    }
}

fn max_padding(kind: LayerKind) -> usize {
    match kind {
        LayerKind::Conv3x3 => 1,
        _ => 0,
    }
}

/// Lists every layer whose kind or parameters fall outside the operator
/// whitelist. A layer reports at most one violation, the first rule it breaks.
pub fn validate_operators(model: &ModelGraph) -> Vec<OperatorViolation> {
    model
        .layers
        .iter()
        .enumerate()
        .filter_map(|(layer, spec)| layer_violation(spec).map(|kind| OperatorViolation { layer, kind }))
        .collect()
}

fn layer_violation(spec: &LayerSpec) -> Option<ViolationKind> {
    if let LayerKind::Unsupported(code) = spec.kind {
        return Some(ViolationKind::UnsupportedKind(code));
    }
    if spec.in_channels == 0 || spec.out_channels == 0 {
        return Some(ViolationKind::ZeroChannels);
    }
    let widest = spec.in_channels.max(spec.out_channels);
    if widest > MAX_CHANNELS {
        return Some(ViolationKind::TooManyChannels(widest));
    }
    let max = max_padding(spec.kind);
    if spec.padding > max {
        return Some(ViolationKind::Padding {
            padding: spec.padding,
            max,
        });
    }
    if spec.kind.is_pool() && spec.in_channels != spec.out_channels {
        return Some(ViolationKind::PoolChannels {
            in_channels: spec.in_channels,
            out_channels: spec.out_channels,
        });
    }
    None
}

/// Deployed parameter storage: one byte per INT8 weight plus four bytes per
/// INT32 bias. Batch-norm is folded away and costs nothing.
pub fn weight_bytes_quantized(layers: &[LayerSpec]) -> usize {
    layers
        .iter()
        .filter(|l| l.kind.is_conv())
        .map(|l| l.weight_count() + 4 * l.out_channels)
        .sum()
}

/// Largest input-plus-output feature-map footprint over all layers at one
/// byte per element. An empty model needs just the input buffer.
pub fn activation_peak_bytes(model: &ModelGraph) -> Result<usize> {
    let shapes = model.infer_shapes()?;
    let mut input = model.input_shape.len();
    let mut peak = input;
    for out in shapes {
        peak = peak.max(input + out.len());
        input = out.len();
    }
    Ok(peak)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstraintReport {
    pub operator_violations: Vec<OperatorViolation>,
    pub weight_bytes: usize,
    pub weight_budget: usize,
    pub activation_peak_bytes: usize,
    pub activation_budget: usize,
    pub passed: bool,
}

impl ConstraintReport {
    pub fn weights_fit(&self) -> bool {
        self.weight_bytes <= self.weight_budget
    }

    pub fn activations_fit(&self) -> bool {
        self.activation_peak_bytes <= self.activation_budget
    }
}

pub fn check_constraints(model: &ModelGraph) -> Result<ConstraintReport> {
    let operator_violations = validate_operators(model);
    let activation_peak = activation_peak_bytes(model)?;
    let weight_bytes = weight_bytes_quantized(&model.layers);
    let passed = operator_violations.is_empty()
        && weight_bytes <= WEIGHT_BUDGET_BYTES
        && activation_peak <= ACTIVATION_BUDGET_BYTES;
    Ok(ConstraintReport {
        operator_violations,
        weight_bytes,
        weight_budget: WEIGHT_BUDGET_BYTES,
        activation_peak_bytes: activation_peak,
        activation_budget: ACTIVATION_BUDGET_BYTES,
        passed,
    })
}

impl fmt::Display for ConstraintReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = |ok: bool| if ok { "ok" } else { "FAIL" };
        writeln!(
            f,
            "operators: {} violation(s) {}",
            self.operator_violations.len(),
            verdict(self.operator_violations.is_empty())
        )?;
        for v in &self.operator_violations {
            writeln!(f, "  {v}")?;
        }
        writeln!(
            f,
            "weight_bytes: {} / {} {}",
            self.weight_bytes,
            self.weight_budget,
            verdict(self.weights_fit())
        )?;
        writeln!(
            f,
            "activation_peak_bytes: {} / {} {}",
            self.activation_peak_bytes,
            self.activation_budget,
            verdict(self.activations_fit())
        )?;
        writeln!(f, "passed: {}", self.passed)
    }
}
