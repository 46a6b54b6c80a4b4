//! Composite blocks shared by both architectures: the residual bottleneck,
//! the inverted residual block, and the classification head.
//!
//! A block adds no arithmetic of its own — each forward is exactly a
//! composition of tensor-engine kernels, so a block output can be reproduced
//! by issuing the same kernel calls by hand.

use crate::autograd::{Tape, ValueId};
use crate::error::{Error, Result};
use crate::kernels::norm::BnUpdate;
use crate::kernels::{Activation, BnMode, ConvSpec, Padding, BN_EPSILON, BN_MOMENTUM};
use crate::tensor::{Scalar, Tensor};

/// Execution mode threaded through blocks and graphs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    /// Dropout is active. Batch norm uses batch statistics (and emits running
    /// updates) when `bn_batch_stats` is set, running statistics otherwise.
    Train { bn_batch_stats: bool },
    /// Deterministic inference: dropout is the identity, batch norm uses
    /// running statistics.
    Infer,
}

impl ExecMode {
    pub fn bn_mode(self) -> BnMode {
        match self {
            ExecMode::Train { bn_batch_stats: true } => BnMode::Train,
            _ => BnMode::Infer,
        }
    }

    pub fn is_training(self) -> bool {
        matches!(self, ExecMode::Train { .. })
    }
}

/// Tape handles plus running statistics for one batch-norm layer.
pub struct BnRef<'a, T: Scalar> {
    pub gamma: ValueId,
    pub beta: ValueId,
    pub mean: &'a Tensor<T>,
    pub var: &'a Tensor<T>,
}

fn apply_bn<T: Scalar>(
    tape: &mut Tape<T>,
    x: ValueId,
    bn: &BnRef<'_, T>,
    mode: ExecMode,
    updates: &mut Vec<BnUpdate<T>>,
) -> Result<ValueId> {
    let (out, update) =
        tape.batch_norm(x, bn.gamma, bn.beta, bn.mean, bn.var, mode.bn_mode(), BN_EPSILON, BN_MOMENTUM)?;
    if let Some(u) = update {
        updates.push(u);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Residual bottleneck (1x1 reduce -> 3x3 -> 1x1 expand, with shortcut)
// ---------------------------------------------------------------------------

/// Static shape of one residual bottleneck block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResidualBottleneckSpec {
    pub in_channels: usize,
    pub mid_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
    /// A 1x1 stride-matched projection with batch norm on the shortcut path.
    /// Required whenever the branch changes shape.
    pub projection_shortcut: bool,
    /// Convolutions carry biases when set (matched to the reference weights
    /// this model plan reproduces).
    pub conv_bias: bool,
}

impl ResidualBottleneckSpec {
    /// Shape validation; runs at build time so a bad block never executes.
    pub fn validate(&self) -> Result<()> {
        if self.stride != 1 && self.stride != 2 {
            return Err(Error::Construction {
                what: format!("bottleneck stride must be 1 or 2, got {}", self.stride),
            });
        }
        if !self.projection_shortcut && (self.stride != 1 || self.in_channels != self.out_channels)
        {
            return Err(Error::Construction {
                what: format!(
                    "identity shortcut needs matching shapes: stride {} and {} -> {} channels",
                    self.stride, self.in_channels, self.out_channels
                ),
            });
        }
        Ok(())
    }

    pub fn conv1_spec(&self) -> ConvSpec {
        ConvSpec {
            kernel_h: 1,
            kernel_w: 1,
            in_channels: self.in_channels,
            out_channels: self.mid_channels,
            stride: 1,
            padding: Padding::Same,
            use_bias: self.conv_bias,
        }
    }

    pub fn conv2_spec(&self) -> ConvSpec {
        ConvSpec {
            kernel_h: 3,
            kernel_w: 3,
            in_channels: self.mid_channels,
            out_channels: self.mid_channels,
            stride: self.stride,
            padding: Padding::Same,
            use_bias: self.conv_bias,
        }
    }

    pub fn conv3_spec(&self) -> ConvSpec {
        ConvSpec {
            kernel_h: 1,
            kernel_w: 1,
            in_channels: self.mid_channels,
            out_channels: self.out_channels,
            stride: 1,
            padding: Padding::Same,
            use_bias: self.conv_bias,
        }
    }

    pub fn shortcut_spec(&self) -> ConvSpec {
        ConvSpec {
            kernel_h: 1,
            kernel_w: 1,
            in_channels: self.in_channels,
            out_channels: self.out_channels,
            stride: self.stride,
            padding: Padding::Same,
            use_bias: self.conv_bias,
        }
    }
}

pub struct ConvBnRef<'a, T: Scalar> {
    pub kernel: ValueId,
    pub bias: Option<ValueId>,
    pub bn: BnRef<'a, T>,
}

pub struct BottleneckParams<'a, T: Scalar> {
    pub conv1: ConvBnRef<'a, T>,
    pub conv2: ConvBnRef<'a, T>,
    pub conv3: ConvBnRef<'a, T>,
    /// Present iff `spec.projection_shortcut`.
    pub shortcut: Option<ConvBnRef<'a, T>>,
}

/// `relu(F(x) + shortcut(x))` with
/// `F = conv1x1 -> bn -> relu -> conv3x3(stride) -> bn -> relu -> conv1x1 -> bn`.
///
/// Batch-norm running updates are returned in layer order
/// (bn1, bn2, bn3, shortcut bn).
pub fn residual_bottleneck_forward<T: Scalar>(
    tape: &mut Tape<T>,
    x: ValueId,
    spec: &ResidualBottleneckSpec,
    params: &BottleneckParams<'_, T>,
    mode: ExecMode,
) -> Result<(ValueId, Vec<BnUpdate<T>>)> {
    spec.validate()?;
    let mut updates = Vec::new();

    let c1 = tape.conv2d(x, params.conv1.kernel, params.conv1.bias, spec.conv1_spec())?;
    let b1 = apply_bn(tape, c1, &params.conv1.bn, mode, &mut updates)?;
    let a1 = tape.activation(b1, Activation::Relu)?;

    let c2 = tape.conv2d(a1, params.conv2.kernel, params.conv2.bias, spec.conv2_spec())?;
    let b2 = apply_bn(tape, c2, &params.conv2.bn, mode, &mut updates)?;
    let a2 = tape.activation(b2, Activation::Relu)?;

    let c3 = tape.conv2d(a2, params.conv3.kernel, params.conv3.bias, spec.conv3_spec())?;
    let b3 = apply_bn(tape, c3, &params.conv3.bn, mode, &mut updates)?;

    let shortcut = match (&params.shortcut, spec.projection_shortcut) {
        (Some(p), true) => {
            let sc = tape.conv2d(x, p.kernel, p.bias, spec.shortcut_spec())?;
            apply_bn(tape, sc, &p.bn, mode, &mut updates)?
        }
        (None, false) => x,
        _ => {
            return Err(Error::Construction {
                what: "shortcut parameters do not match projection flag".into(),
            })
        }
    };
    let sum = tape.add(b3, shortcut)?;
    let out = tape.activation(sum, Activation::Relu)?;
    Ok((out, updates))
}

// ---------------------------------------------------------------------------
// Inverted residual (expand -> depthwise -> linear project)
// ---------------------------------------------------------------------------

/// Static shape of one inverted residual block: expansion factor `t`,
/// output channels `c`, stride `s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InvertedResidualSpec {
    pub in_channels: usize,
    pub expansion: usize,
    pub out_channels: usize,
    pub stride: usize,
}

impl InvertedResidualSpec {
    pub fn validate(&self) -> Result<()> {
        if self.stride != 1 && self.stride != 2 {
            return Err(Error::Construction {
                what: format!("inverted residual stride must be 1 or 2, got {}", self.stride),
            });
        }
        if self.expansion == 0 || self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::Construction {
                what: "inverted residual channels and expansion must be positive".into(),
            });
        }
        Ok(())
    }

    /// Shortcut exists iff stride is 1 and input/output channels match.
    pub fn has_shortcut(&self) -> bool {
        self.stride == 1 && self.in_channels == self.out_channels
    }

    pub fn expanded_channels(&self) -> usize {
        self.expansion * self.in_channels
    }

    pub fn expand_spec(&self) -> ConvSpec {
        ConvSpec {
            kernel_h: 1,
            kernel_w: 1,
            in_channels: self.in_channels,
            out_channels: self.expanded_channels(),
            stride: 1,
            padding: Padding::Same,
            use_bias: false,
        }
    }

    pub fn project_spec(&self) -> ConvSpec {
        ConvSpec {
            kernel_h: 1,
            kernel_w: 1,
            in_channels: self.expanded_channels(),
            out_channels: self.out_channels,
            stride: 1,
            padding: Padding::Same,
            use_bias: false,
        }
    }
}

pub struct BnConvRef<'a, T: Scalar> {
    pub kernel: ValueId,
    pub bn: BnRef<'a, T>,
}

pub struct InvertedResidualParams<'a, T: Scalar> {
    /// Absent when `t = 1`: the expansion convolution is omitted.
    pub expand: Option<BnConvRef<'a, T>>,
    pub depthwise: BnConvRef<'a, T>,
    pub project: BnConvRef<'a, T>,
}

/// `expand 1x1 -> relu6 -> depthwise 3x3 (stride) -> relu6 -> linear 1x1`,
/// all convolutions bias-free and batch-normed; shortcut added iff `s = 1`
/// and `c_in = c`. Updates are returned in layer order.
pub fn inverted_residual_forward<T: Scalar>(
    tape: &mut Tape<T>,
    x: ValueId,
    spec: &InvertedResidualSpec,
    params: &InvertedResidualParams<'_, T>,
    mode: ExecMode,
) -> Result<(ValueId, Vec<BnUpdate<T>>)> {
    spec.validate()?;
    let mut updates = Vec::new();

    let expanded = match (&params.expand, spec.expansion > 1) {
        (Some(p), true) => {
            let c = tape.conv2d(x, p.kernel, None, spec.expand_spec())?;
            let b = apply_bn(tape, c, &p.bn, mode, &mut updates)?;
            tape.activation(b, Activation::Relu6)?
        }
        (None, false) => x,
        _ => {
            return Err(Error::Construction {
                what: "expansion parameters do not match expansion factor".into(),
            })
        }
    };

    let dw = tape.depthwise_conv2d(expanded, params.depthwise.kernel, None, spec.stride, Padding::Same)?;
    let dwb = apply_bn(tape, dw, &params.depthwise.bn, mode, &mut updates)?;
    let dwa = tape.activation(dwb, Activation::Relu6)?;

    let proj = tape.conv2d(dwa, params.project.kernel, None, spec.project_spec())?;
    let out = apply_bn(tape, proj, &params.project.bn, mode, &mut updates)?;

    if spec.has_shortcut() {
        Ok((tape.add(out, x)?, updates))
    } else {
        Ok((out, updates))
    }
}

// ---------------------------------------------------------------------------
// Classification head
// ---------------------------------------------------------------------------

/// Two relu dense layers, dropout, then the softmax output layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadSpec {
    pub hidden_units: usize,
    pub hidden_layers: usize,
    pub dropout_rate: f64,
    pub num_classes: usize,
}

impl Default for HeadSpec {
    fn default() -> Self {
        HeadSpec { hidden_units: 512, hidden_layers: 2, dropout_rate: 0.2, num_classes: 5 }
    }
}

impl HeadSpec {
    /// Total parameter elements for a given input feature width.
    pub fn param_count(&self, feature_width: usize) -> usize {
        let mut d = feature_width;
        let mut total = 0;
        for _ in 0..self.hidden_layers {
            total += d * self.hidden_units + self.hidden_units;
            d = self.hidden_units;
        }
        total + d * self.num_classes + self.num_classes
    }
}

pub struct HeadParams {
    /// `(weights, bias)` per hidden layer, in order.
    pub hidden: Vec<(ValueId, ValueId)>,
    pub output: (ValueId, ValueId),
}

/// Head up to the logits (pre-softmax). Training couples the logits with the
/// fused cross-entropy instead of differentiating through softmax.
pub fn head_logits<T: Scalar>(
    tape: &mut Tape<T>,
    features: ValueId,
    spec: &HeadSpec,
    params: &HeadParams,
    mode: ExecMode,
    dropout_seed: u64,
) -> Result<ValueId> {
    if params.hidden.len() != spec.hidden_layers {
        return Err(Error::Construction {
            what: format!(
                "head expects {} hidden layers, got {} parameter pairs",
                spec.hidden_layers,
                params.hidden.len()
            ),
        });
    }
    let mut x = features;
    for &(w, b) in &params.hidden {
        x = tape.dense(x, w, b)?;
        x = tape.activation(x, Activation::Relu)?;
    }
    x = tape.dropout(x, spec.dropout_rate, mode.is_training(), dropout_seed)?;
    tape.dense(x, params.output.0, params.output.1)
}

/// Full head: logits followed by row softmax.
pub fn head_forward<T: Scalar>(
    tape: &mut Tape<T>,
    features: ValueId,
    spec: &HeadSpec,
    params: &HeadParams,
    mode: ExecMode,
    dropout_seed: u64,
) -> Result<ValueId> {
    let logits = head_logits(tape, features, spec, params, mode, dropout_seed)?;
    tape.softmax(logits)
}
