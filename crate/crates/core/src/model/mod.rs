//! Sequential layer IR restricted to the accelerator operator set.
//!
//! A [`ModelGraph`] is an input shape plus an ordered list of [`LayerSpec`]s
//! with per-layer float parameters held in a [`WeightStore`]. There are no
//! branches: each layer consumes the previous layer's output.

pub(crate) mod checkpoint;
mod constraints;
mod reference;

pub use checkpoint::{read_checkpoint, to_manifest, write_checkpoint, CHECKPOINT_MAGIC};
pub use constraints::{
    activation_peak_bytes, check_constraints, validate_operators, weight_bytes_quantized,
    ConstraintReport, OperatorViolation, ViolationKind, ACTIVATION_BUDGET_BYTES,
    MAX_CHANNELS, WEIGHT_BUDGET_BYTES,
};
pub use reference::{
    build_reference_model, build_reference_model_seeded, reference_layers, REFERENCE_INPUT,
    REFERENCE_SEED,
};

use crate::error::{Error, Result};
use crate::tensor::Shape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Conv3x3,
    Conv1x1,
    MaxPool2x2,
    AvgPool2x2,
    /// A kind code outside the whitelist, kept so it can be reported.
    Unsupported(u8),
}

impl LayerKind {
    pub fn code(self) -> u8 {
        match self {
            Self::Conv3x3 => 0,
            Self::Conv1x1 => 1,
            Self::MaxPool2x2 => 2,
            Self::AvgPool2x2 => 3,
            Self::Unsupported(code) => code,
        }
    }

    pub fn from_code(code: u8) -> Self {
        match code {
            0 => Self::Conv3x3,
            1 => Self::Conv1x1,
            2 => Self::MaxPool2x2,
            3 => Self::AvgPool2x2,
            other => Self::Unsupported(other),
        }
    }

    /// Square kernel size of a convolution, `None` for pooling.
    pub fn kernel_size(self) -> Option<usize> {
        match self {
            Self::Conv3x3 => Some(3),
            Self::Conv1x1 => Some(1),
            _ => None,
        }
    }

    pub fn is_conv(self) -> bool {
        self.kernel_size().is_some()
    }

    pub fn is_pool(self) -> bool {
        matches!(self, Self::MaxPool2x2 | Self::AvgPool2x2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub has_relu: bool,
    pub has_batchnorm: bool,
    pub padding: usize,
}

impl LayerSpec {
    pub fn conv3x3(in_channels: usize, out_channels: usize) -> Self {
        Self {
            kind: LayerKind::Conv3x3,
            in_channels,
            out_channels,
            has_relu: false,
            has_batchnorm: false,
            padding: 1,
        }
    }

    pub fn conv1x1(in_channels: usize, out_channels: usize) -> Self {
        Self {
            kind: LayerKind::Conv1x1,
            padding: 0,
            ..Self::conv3x3(in_channels, out_channels)
        }
    }

    pub fn max_pool(channels: usize) -> Self {
        Self {
            kind: LayerKind::MaxPool2x2,
            padding: 0,
            ..Self::conv3x3(channels, channels)
        }
    }

    pub fn avg_pool(channels: usize) -> Self {
        Self {
            kind: LayerKind::AvgPool2x2,
            ..Self::max_pool(channels)
        }
    }

    pub fn with_relu(mut self) -> Self {
        self.has_relu = true;
        self
    }

    pub fn with_batchnorm(mut self) -> Self {
        self.has_batchnorm = true;
        self
    }

    pub fn with_padding(mut self, padding: usize) -> Self {
        self.padding = padding;
        self
    }

    /// Number of weights in `[out][in][kh][kw]` order; zero for pooling.
    pub fn weight_count(&self) -> usize {
        self.kind
            .kernel_size()
            .map_or(0, |k| self.out_channels * self.in_channels * k * k)
    }

    /// Output shape for a given input, checking channel chaining.
    pub fn output_shape(&self, layer: usize, input: Shape) -> Result<Shape> {
        if input.channels != self.in_channels {
            return Err(Error::ChannelMismatch {
                layer,
                expected: self.in_channels,
                actual: input.channels,
            });
        }
        match self.kind {
            LayerKind::Conv3x3 | LayerKind::Conv1x1 => {
                let k = self.kind.kernel_size().unwrap_or(1);
                let padded_h = input.height + 2 * self.padding;
                let padded_w = input.width + 2 * self.padding;
                if padded_h < k || padded_w < k {
                    return Err(Error::EmptyOutput { layer });
                }
                Ok(Shape::new(
                    self.out_channels,
                    padded_h - k + 1,
                    padded_w - k + 1,
                ))
            }
            LayerKind::MaxPool2x2 | LayerKind::AvgPool2x2 => {
                if self.out_channels != self.in_channels {
                    return Err(Error::ChannelMismatch {
                        layer,
                        expected: self.in_channels,
                        actual: self.out_channels,
                    });
                }
                if !input.height.is_multiple_of(2) || !input.width.is_multiple_of(2) {
                    return Err(Error::OddSpatialDim {
                        layer,
                        height: input.height,
                        width: input.width,
                    });
                }
                Ok(Shape::new(input.channels, input.height / 2, input.width / 2))
            }
            LayerKind::Unsupported(code) => Err(Error::UnsupportedLayer { layer, code }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
    pub epsilon: f32,
}

impl BatchNorm {
    pub fn identity(channels: usize) -> Self {
        Self {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            epsilon: 0.0,
        }
    }

    fn is_well_formed(&self, channels: usize) -> bool {
        [&self.gamma, &self.beta, &self.running_mean, &self.running_var]
            .iter()
            .all(|v| v.len() == channels)
            && self
                .running_var
                .iter()
                .all(|&var| f64::from(var) + f64::from(self.epsilon) > 0.0)
    }

    /// Per-channel `(scale, shift)` such that `bn(y) = y * scale + shift`.
    pub(crate) fn affine(&self, channel: usize) -> (f64, f64) {
        let scale = f64::from(self.gamma[channel])
            / (f64::from(self.running_var[channel]) + f64::from(self.epsilon)).sqrt();
        let shift = f64::from(self.beta[channel]) - f64::from(self.running_mean[channel]) * scale;
        (scale, shift)
    }
}

/// Float parameters of one convolution layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    /// `[out][in][kh][kw]`
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
    pub batchnorm: Option<BatchNorm>,
}

/// Parameters aligned index-for-index with `ModelGraph::layers`;
/// pooling layers hold `None`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightStore {
    pub layers: Vec<Option<ConvParams>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph {
    pub input_shape: Shape,
    pub layers: Vec<LayerSpec>,
    pub weights: WeightStore,
}

impl ModelGraph {
    pub fn new(input_shape: Shape, layers: Vec<LayerSpec>, weights: WeightStore) -> Result<Self> {
        let model = Self {
            input_shape,
            layers,
            weights,
        };
        model.check_weights()?;
        Ok(model)
    }

    /// Builds a model from `(layer, params)` pairs.
    pub fn from_layers(
        input_shape: Shape,
        layers: impl IntoIterator<Item = (LayerSpec, Option<ConvParams>)>,
    ) -> Result<Self> {
        let (layers, params): (Vec<_>, Vec<_>) = layers.into_iter().unzip();
        Self::new(input_shape, layers, WeightStore { layers: params })
    }

    pub fn params(&self, layer: usize) -> Option<&ConvParams> {
        self.weights.layers.get(layer).and_then(Option::as_ref)
    }

    /// Checks that parameter arrays match the layer dimensions.
    pub fn check_weights(&self) -> Result<()> {
        if self.weights.layers.len() != self.layers.len() {
            return Err(Error::InvalidWeights {
                layer: self.weights.layers.len().min(self.layers.len()),
                what: format!(
                    "{} parameter slots for {} layers",
                    self.weights.layers.len(),
                    self.layers.len()
                ),
            });
        }
        for (i, (spec, params)) in self.layers.iter().zip(&self.weights.layers).enumerate() {
            let invalid = |what: String| Error::InvalidWeights { layer: i, what };
            match (spec.kind.is_conv(), params) {
                (true, Some(p)) => {
                    if p.weights.len() != spec.weight_count() {
                        return Err(invalid(format!(
                            "{} weights, expected {}",
                            p.weights.len(),
                            spec.weight_count()
                        )));
                    }
                    if p.bias.len() != spec.out_channels {
                        return Err(invalid(format!(
                            "{} biases, expected {}",
                            p.bias.len(),
                            spec.out_channels
                        )));
                    }
                    if spec.has_batchnorm
                        && !p
                            .batchnorm
                            .as_ref()
                            .is_some_and(|bn| bn.is_well_formed(spec.out_channels))
                    {
                        return Err(Error::MissingBNParams { layer: i });
                    }
                }
                (true, None) => return Err(invalid("convolution without parameters".into())),
                (false, Some(_)) => return Err(invalid("pooling layer carries weights".into())),
                (false, None) => {}
            }
        }
        Ok(())
    }

    /// Per-layer output shapes.
    pub fn infer_shapes(&self) -> Result<Vec<Shape>> {
        infer_shapes(self.input_shape, &self.layers)
    }

    pub fn output_shape(&self) -> Result<Shape> {
        Ok(self.infer_shapes()?.last().copied().unwrap_or(self.input_shape))
    }

    pub fn has_batchnorm(&self) -> bool {
        self.layers.iter().any(|l| l.has_batchnorm)
    }

    /// Folds every batch-norm into the preceding convolution's weights and
    /// bias: `W' = W * g / sqrt(var + eps)`, `b' = (b - mean) * g / sqrt(var + eps) + beta`.
    pub fn fold_batchnorm(&self) -> Result<ModelGraph> {
        let mut folded = self.clone();
        for (i, (spec, params)) in folded
            .layers
            .iter_mut()
            .zip(folded.weights.layers.iter_mut())
            .enumerate()
        {
            if !spec.has_batchnorm {
                if let Some(p) = params {
                    p.batchnorm = None;
                }
                continue;
            }
            let p = params.as_mut().ok_or(Error::MissingBNParams { layer: i })?;
            let bn = p
                .batchnorm
                .take()
                .filter(|bn| bn.is_well_formed(spec.out_channels))
                .ok_or(Error::MissingBNParams { layer: i })?;
            let per_out = spec.weight_count() / spec.out_channels.max(1);
            for oc in 0..spec.out_channels {
                let (scale, _) = bn.affine(oc);
                for w in &mut p.weights[oc * per_out..(oc + 1) * per_out] {
                    *w = (f64::from(*w) * scale) as f32;
                }
                p.bias[oc] = ((f64::from(p.bias[oc]) - f64::from(bn.running_mean[oc])) * scale
                    + f64::from(bn.beta[oc])) as f32;
            }
            spec.has_batchnorm = false;
        }
        Ok(folded)
    }
}

/// Output shape after each layer, starting from `input`.
pub fn infer_shapes(input: Shape, layers: &[LayerSpec]) -> Result<Vec<Shape>> {
    let mut shapes = Vec::with_capacity(layers.len());
    let mut current = input;
    for (i, layer) in layers.iter().enumerate() {
        current = layer.output_shape(i, current)?;
        shapes.push(current);
    }
    Ok(shapes)
}

/// Multiply-accumulate count of all convolutions: `out * in * k * k * H_out * W_out`.
pub fn conv_macs(input: Shape, layers: &[LayerSpec]) -> Result<u64> {
    let shapes = infer_shapes(input, layers)?;
    Ok(layers
        .iter()
        .zip(&shapes)
        .map(|(layer, out)| (layer.weight_count() * out.plane()) as u64)
        .sum())
}
