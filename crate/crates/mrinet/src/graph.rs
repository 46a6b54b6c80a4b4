//! Model graphs: an ordered list of typed layer nodes with named parameter
//! slots, plus the executor that runs a graph on a gradient tape.
//!
//! Parameter names are hierarchical and stable (`conv2_x.block1.conv1.kernel`),
//! which is what checkpoints, weight import, and the frozen-backbone filter
//! key on.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Tape, ValueId};
use crate::blocks::{
    head_logits, inverted_residual_forward, residual_bottleneck_forward, BnConvRef, BnRef,
    BottleneckParams, ConvBnRef, ExecMode, HeadParams, HeadSpec, InvertedResidualParams,
    InvertedResidualSpec, ResidualBottleneckSpec,
};
use crate::error::{Error, Result};
use crate::kernels::norm::BnUpdate;
use crate::kernels::{Activation, ConvSpec, Padding};
use crate::seeding::mix_seeds;
use crate::tensor::Tensor;

/// Which side of the fine-tuning boundary a parameter belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    Backbone,
    Head,
}

/// Initialization rule for one slot. Weight matrices and kernels use a
/// fan-in-scaled uniform; biases and batch-norm offsets start at zero,
/// batch-norm scales and running variances at one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    FanInUniform { fan_in: usize },
    Zeros,
    Ones,
}

/// Declaration of one named parameter slot.
#[derive(Debug, Clone)]
pub struct SlotDecl {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
    /// Running statistics are state, not trainable parameters.
    pub trainable: bool,
    pub group: ParamGroup,
}

impl SlotDecl {
    pub fn elements(&self) -> usize {
        self.shape.iter().product()
    }
}

/// One typed layer node.
#[derive(Debug, Clone)]
pub struct Node {
    pub name: String,
    pub kind: NodeKind,
}

#[derive(Debug, Clone)]
pub enum NodeKind {
    Conv(ConvSpec),
    DepthwiseConv { kernel: usize, channels: usize, stride: usize },
    BatchNorm { channels: usize },
    Activation(Activation),
    MaxPool { window: (usize, usize), stride: usize, padding: Padding },
    GlobalAvgPool,
    Bottleneck(ResidualBottleneckSpec),
    InvertedResidual(InvertedResidualSpec),
    Dense { in_dim: usize, out_dim: usize },
    Dropout { rate: f64 },
    Softmax,
}

fn conv_slots(prefix: &str, spec: &ConvSpec, group: ParamGroup, out: &mut Vec<SlotDecl>) {
    let fan_in = spec.kernel_h * spec.kernel_w * spec.in_channels;
    out.push(SlotDecl {
        name: format!("{prefix}.kernel"),
        shape: vec![spec.kernel_h, spec.kernel_w, spec.in_channels, spec.out_channels],
        init: Init::FanInUniform { fan_in },
        trainable: true,
        group,
    });
    if spec.use_bias {
        out.push(SlotDecl {
            name: format!("{prefix}.bias"),
            shape: vec![spec.out_channels],
            init: Init::Zeros,
            trainable: true,
            group,
        });
    }
}

fn bn_slots(prefix: &str, channels: usize, group: ParamGroup, out: &mut Vec<SlotDecl>) {
    for (suffix, init, trainable) in [
        ("gamma", Init::Ones, true),
        ("beta", Init::Zeros, true),
        ("running_mean", Init::Zeros, false),
        ("running_var", Init::Ones, false),
    ] {
        out.push(SlotDecl {
            name: format!("{prefix}.{suffix}"),
            shape: vec![channels],
            init,
            trainable,
            group,
        });
    }
}

impl Node {
    /// Parameter slots this node owns, in a fixed order.
    pub fn slot_decls(&self, group: ParamGroup) -> Vec<SlotDecl> {
        let mut out = Vec::new();
        match &self.kind {
            NodeKind::Conv(spec) => conv_slots(&self.name, spec, group, &mut out),
            NodeKind::DepthwiseConv { kernel, channels, .. } => {
                out.push(SlotDecl {
                    name: format!("{}.kernel", self.name),
                    shape: vec![*kernel, *kernel, *channels, 1],
                    init: Init::FanInUniform { fan_in: kernel * kernel },
                    trainable: true,
                    group,
                });
            }
            NodeKind::BatchNorm { channels } => bn_slots(&self.name, *channels, group, &mut out),
            NodeKind::Bottleneck(spec) => {
                conv_slots(&format!("{}.conv1", self.name), &spec.conv1_spec(), group, &mut out);
                bn_slots(&format!("{}.bn1", self.name), spec.mid_channels, group, &mut out);
                conv_slots(&format!("{}.conv2", self.name), &spec.conv2_spec(), group, &mut out);
                bn_slots(&format!("{}.bn2", self.name), spec.mid_channels, group, &mut out);
                conv_slots(&format!("{}.conv3", self.name), &spec.conv3_spec(), group, &mut out);
                bn_slots(&format!("{}.bn3", self.name), spec.out_channels, group, &mut out);
                if spec.projection_shortcut {
                    conv_slots(
                        &format!("{}.shortcut.conv", self.name),
                        &spec.shortcut_spec(),
                        group,
                        &mut out,
                    );
                    bn_slots(&format!("{}.shortcut.bn", self.name), spec.out_channels, group, &mut out);
                }
            }
            NodeKind::InvertedResidual(spec) => {
                if spec.expansion > 1 {
                    conv_slots(&format!("{}.expand.conv", self.name), &spec.expand_spec(), group, &mut out);
                    bn_slots(
                        &format!("{}.expand.bn", self.name),
                        spec.expanded_channels(),
                        group,
                        &mut out,
                    );
                }
                let ec = spec.expanded_channels();
                out.push(SlotDecl {
                    name: format!("{}.depthwise.kernel", self.name),
                    shape: vec![3, 3, ec, 1],
                    init: Init::FanInUniform { fan_in: 9 },
                    trainable: true,
                    group,
                });
                bn_slots(&format!("{}.depthwise.bn", self.name), ec, group, &mut out);
                conv_slots(&format!("{}.project.conv", self.name), &spec.project_spec(), group, &mut out);
                bn_slots(&format!("{}.project.bn", self.name), spec.out_channels, group, &mut out);
            }
            NodeKind::Dense { in_dim, out_dim } => {
                out.push(SlotDecl {
                    name: format!("{}.weight", self.name),
                    shape: vec![*in_dim, *out_dim],
                    init: Init::FanInUniform { fan_in: *in_dim },
                    trainable: true,
                    group,
                });
                out.push(SlotDecl {
                    name: format!("{}.bias", self.name),
                    shape: vec![*out_dim],
                    init: Init::Zeros,
                    trainable: true,
                    group,
                });
            }
            NodeKind::Activation(_)
            | NodeKind::MaxPool { .. }
            | NodeKind::GlobalAvgPool
            | NodeKind::Dropout { .. }
            | NodeKind::Softmax => {}
        }
        out
    }

    /// Output shape for a given NHWC (or [N, D]) input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        use crate::kernels::padding::out_dim;
        match &self.kind {
            NodeKind::Conv(spec) => spec.output_shape(input),
            NodeKind::DepthwiseConv { kernel, channels, stride } => {
                let oh = out_dim("depthwise_conv2d", input[1], *kernel, *stride, Padding::Same)?;
                let ow = out_dim("depthwise_conv2d", input[2], *kernel, *stride, Padding::Same)?;
                Ok(vec![input[0], oh, ow, *channels])
            }
            NodeKind::BatchNorm { .. }
            | NodeKind::Activation(_)
            | NodeKind::Dropout { .. }
            | NodeKind::Softmax => Ok(input.to_vec()),
            NodeKind::MaxPool { window, stride, padding } => {
                let oh = out_dim("max_pool2d", input[1], window.0, *stride, *padding)?;
                let ow = out_dim("max_pool2d", input[2], window.1, *stride, *padding)?;
                Ok(vec![input[0], oh, ow, input[3]])
            }
            NodeKind::GlobalAvgPool => Ok(vec![input[0], input[3]]),
            NodeKind::Bottleneck(spec) => {
                let oh = out_dim("bottleneck", input[1], 3, spec.stride, Padding::Same)?;
                let ow = out_dim("bottleneck", input[2], 3, spec.stride, Padding::Same)?;
                Ok(vec![input[0], oh, ow, spec.out_channels])
            }
            NodeKind::InvertedResidual(spec) => {
                let oh = out_dim("inverted_residual", input[1], 3, spec.stride, Padding::Same)?;
                let ow = out_dim("inverted_residual", input[2], 3, spec.stride, Padding::Same)?;
                Ok(vec![input[0], oh, ow, spec.out_channels])
            }
            NodeKind::Dense { out_dim, .. } => Ok(vec![input[0], *out_dim]),
        }
    }
}

/// A complete model: ordered nodes, slot declarations, and parameter values.
#[derive(Debug, Clone)]
pub struct NetworkGraph {
    model_id: String,
    input_shape: [usize; 3],
    num_classes: usize,
    feature_width: usize,
    nodes: Vec<Node>,
    slots: Vec<SlotDecl>,
    params: BTreeMap<String, Tensor<f32>>,
}

/// Handles produced by one forward execution on a tape.
pub struct GraphRun {
    /// Pre-softmax output of the final dense layer.
    pub logits: ValueId,
    /// Row-softmax of the logits.
    pub probs: ValueId,
    /// Tape leaf per trainable parameter.
    pub param_ids: BTreeMap<String, ValueId>,
    /// Pending running-statistics updates, `(batch-norm prefix, update)`.
    pub bn_updates: Vec<(String, BnUpdate<f32>)>,
}

impl NetworkGraph {
    pub(crate) fn assemble(
        model_id: &str,
        input_shape: [usize; 3],
        num_classes: usize,
        feature_width: usize,
        nodes: Vec<Node>,
        head_prefix: &str,
    ) -> Result<Self> {
        let mut slots = Vec::new();
        let mut seen = std::collections::BTreeSet::new();
        for node in &nodes {
            let group = if node.name.starts_with(head_prefix) {
                ParamGroup::Head
            } else {
                ParamGroup::Backbone
            };
            for slot in node.slot_decls(group) {
                if !seen.insert(slot.name.clone()) {
                    return Err(Error::Construction {
                        what: format!("duplicate parameter slot {}", slot.name),
                    });
                }
                slots.push(slot);
            }
        }
        let graph = NetworkGraph {
            model_id: model_id.to_string(),
            input_shape,
            num_classes,
            feature_width,
            nodes,
            slots,
            params: BTreeMap::new(),
        };
        // symbolic pass validates block shapes and spatial arithmetic up front
        graph.forward_shapes()?;
        Ok(graph)
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Width of the feature vector entering the head.
    pub fn feature_width(&self) -> usize {
        self.feature_width
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn slots(&self) -> &[SlotDecl] {
        &self.slots
    }

    pub fn slot(&self, name: &str) -> Option<&SlotDecl> {
        self.slots.iter().find(|s| s.name == name)
    }

    pub fn param(&self, name: &str) -> Result<&Tensor<f32>> {
        self.params
            .get(name)
            .ok_or_else(|| Error::Config { what: format!("unknown parameter slot {name}") })
    }

    pub fn params(&self) -> &BTreeMap<String, Tensor<f32>> {
        &self.params
    }

    pub(crate) fn param_mut(&mut self, name: &str) -> Result<&mut Tensor<f32>> {
        self.params
            .get_mut(name)
            .ok_or_else(|| Error::Config { what: format!("unknown parameter slot {name}") })
    }

    /// Overwrite one slot, enforcing its declared shape.
    pub fn set_param(&mut self, name: &str, value: Tensor<f32>) -> Result<()> {
        let decl = self
            .slot(name)
            .ok_or_else(|| Error::Import { slot: name.to_string(), reason: "no such slot".into() })?;
        if decl.shape != value.shape() {
            return Err(Error::Import {
                slot: name.to_string(),
                reason: format!("shape {:?} does not match declared {:?}", value.shape(), decl.shape),
            });
        }
        self.params.insert(name.to_string(), value);
        Ok(())
    }

    /// Deterministic initialization: slots are drawn in declaration order from
    /// a stream seeded by `seed`, so identical seeds give identical models.
    pub fn init_params(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seeds(&[seed, 0x1417]));
        self.params.clear();
        for slot in &self.slots {
            let tensor = match slot.init {
                Init::Zeros => Tensor::zeros(&slot.shape),
                Init::Ones => Tensor::filled(&slot.shape, 1.0),
                Init::FanInUniform { fan_in } => {
                    let limit = (6.0 / fan_in as f64).sqrt();
                    Tensor::from_fn(&slot.shape, |_| rng.gen_range(-limit..limit) as f32)
                }
            };
            self.params.insert(slot.name.clone(), tensor);
        }
    }

    /// Per-node output shapes for a symbolic batch of one.
    pub fn forward_shapes(&self) -> Result<Vec<(String, Vec<usize>)>> {
        let mut shape =
            vec![1, self.input_shape[0], self.input_shape[1], self.input_shape[2]];
        let mut out = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            if let NodeKind::Bottleneck(spec) = &node.kind {
                spec.validate()?;
            }
            if let NodeKind::InvertedResidual(spec) = &node.kind {
                spec.validate()?;
            }
            shape = node.output_shape(&shape)?;
            if shape.iter().any(|&d| d == 0) {
                return Err(Error::Construction {
                    what: format!("node {} produces an empty shape {shape:?}", node.name),
                });
            }
            out.push((node.name.clone(), shape.clone()));
        }
        Ok(out)
    }

    fn bn_ref<'a>(
        &'a self,
        ids: &BTreeMap<String, ValueId>,
        prefix: &str,
    ) -> Result<BnRef<'a, f32>> {
        Ok(BnRef {
            gamma: ids[&format!("{prefix}.gamma")],
            beta: ids[&format!("{prefix}.beta")],
            mean: self.param(&format!("{prefix}.running_mean"))?,
            var: self.param(&format!("{prefix}.running_var"))?,
        })
    }

    fn conv_bn_ref<'a>(
        &'a self,
        ids: &BTreeMap<String, ValueId>,
        conv_prefix: &str,
        bn_prefix: &str,
        with_bias: bool,
    ) -> Result<ConvBnRef<'a, f32>> {
        Ok(ConvBnRef {
            kernel: ids[&format!("{conv_prefix}.kernel")],
            bias: with_bias.then(|| ids[&format!("{conv_prefix}.bias")]),
            bn: self.bn_ref(ids, bn_prefix)?,
        })
    }

    /// Execute the graph on `tape`. `dropout_base` keys the dropout streams;
    /// pass a value derived from `(seed, epoch, step)` during training.
    pub fn run(
        &self,
        tape: &mut Tape<f32>,
        input: Tensor<f32>,
        mode: ExecMode,
        dropout_base: u64,
    ) -> Result<GraphRun> {
        if self.params.is_empty() {
            return Err(Error::Construction {
                what: "graph parameters not initialized (call init_params or load a checkpoint)".into(),
            });
        }
        let ishape = input.shape();
        if ishape.len() != 4
            || ishape[1] != self.input_shape[0]
            || ishape[2] != self.input_shape[1]
            || ishape[3] != self.input_shape[2]
        {
            return Err(Error::Dimension {
                op: "graph::run",
                axis: "input shape",
                expected: self.input_shape[0],
                got: if ishape.len() == 4 { ishape[1] } else { 0 },
            });
        }

        let mut param_ids = BTreeMap::new();
        for slot in &self.slots {
            if slot.trainable {
                param_ids.insert(slot.name.clone(), tape.leaf(self.params[&slot.name].clone()));
            }
        }

        let mut bn_updates: Vec<(String, BnUpdate<f32>)> = Vec::new();
        let mut x = tape.leaf(input);
        let mut logits = None;
        for (ord, node) in self.nodes.iter().enumerate() {
            let name = &node.name;
            match &node.kind {
                NodeKind::Conv(spec) => {
                    let kernel = param_ids[&format!("{name}.kernel")];
                    let bias = spec.use_bias.then(|| param_ids[&format!("{name}.bias")]);
                    x = tape.conv2d(x, kernel, bias, *spec)?;
                }
                NodeKind::DepthwiseConv { stride, .. } => {
                    let kernel = param_ids[&format!("{name}.kernel")];
                    x = tape.depthwise_conv2d(x, kernel, None, *stride, Padding::Same)?;
                }
                NodeKind::BatchNorm { .. } => {
                    let bn = self.bn_ref(&param_ids, name)?;
                    let (out, update) = tape.batch_norm(
                        x,
                        bn.gamma,
                        bn.beta,
                        bn.mean,
                        bn.var,
                        mode.bn_mode(),
                        crate::kernels::BN_EPSILON,
                        crate::kernels::BN_MOMENTUM,
                    )?;
                    if let Some(u) = update {
                        bn_updates.push((name.clone(), u));
                    }
                    x = out;
                }
                NodeKind::Activation(kind) => {
                    x = tape.activation(x, *kind)?;
                }
                NodeKind::MaxPool { window, stride, padding } => {
                    x = tape.max_pool2d(x, *window, *stride, *padding)?;
                }
                NodeKind::GlobalAvgPool => {
                    x = tape.global_average_pool(x)?;
                }
                NodeKind::Bottleneck(spec) => {
                    let params = BottleneckParams {
                        conv1: self.conv_bn_ref(
                            &param_ids,
                            &format!("{name}.conv1"),
                            &format!("{name}.bn1"),
                            spec.conv_bias,
                        )?,
                        conv2: self.conv_bn_ref(
                            &param_ids,
                            &format!("{name}.conv2"),
                            &format!("{name}.bn2"),
                            spec.conv_bias,
                        )?,
                        conv3: self.conv_bn_ref(
                            &param_ids,
                            &format!("{name}.conv3"),
                            &format!("{name}.bn3"),
                            spec.conv_bias,
                        )?,
                        shortcut: if spec.projection_shortcut {
                            Some(self.conv_bn_ref(
                                &param_ids,
                                &format!("{name}.shortcut.conv"),
                                &format!("{name}.shortcut.bn"),
                                spec.conv_bias,
                            )?)
                        } else {
                            None
                        },
                    };
                    let (out, updates) = residual_bottleneck_forward(tape, x, spec, &params, mode)?;
                    let mut bn_names = vec![
                        format!("{name}.bn1"),
                        format!("{name}.bn2"),
                        format!("{name}.bn3"),
                    ];
                    if spec.projection_shortcut {
                        bn_names.push(format!("{name}.shortcut.bn"));
                    }
                    record_block_updates(&mut bn_updates, bn_names, updates)?;
                    x = out;
                }
                NodeKind::InvertedResidual(spec) => {
                    let params = InvertedResidualParams {
                        expand: if spec.expansion > 1 {
                            Some(BnConvRef {
                                kernel: param_ids[&format!("{name}.expand.conv.kernel")],
                                bn: self.bn_ref(&param_ids, &format!("{name}.expand.bn"))?,
                            })
                        } else {
                            None
                        },
                        depthwise: BnConvRef {
                            kernel: param_ids[&format!("{name}.depthwise.kernel")],
                            bn: self.bn_ref(&param_ids, &format!("{name}.depthwise.bn"))?,
                        },
                        project: BnConvRef {
                            kernel: param_ids[&format!("{name}.project.conv.kernel")],
                            bn: self.bn_ref(&param_ids, &format!("{name}.project.bn"))?,
                        },
                    };
                    let (out, updates) = inverted_residual_forward(tape, x, spec, &params, mode)?;
                    let mut bn_names = Vec::new();
                    if spec.expansion > 1 {
                        bn_names.push(format!("{name}.expand.bn"));
                    }
                    bn_names.push(format!("{name}.depthwise.bn"));
                    bn_names.push(format!("{name}.project.bn"));
                    record_block_updates(&mut bn_updates, bn_names, updates)?;
                    x = out;
                }
                NodeKind::Dense { .. } => {
                    let w = param_ids[&format!("{name}.weight")];
                    let b = param_ids[&format!("{name}.bias")];
                    x = tape.dense(x, w, b)?;
                }
                NodeKind::Dropout { rate } => {
                    let seed = mix_seeds(&[dropout_base, ord as u64]);
                    x = tape.dropout(x, *rate, mode.is_training(), seed)?;
                }
                NodeKind::Softmax => {
                    logits = Some(x);
                    x = tape.softmax(x)?;
                }
            }
        }
        let logits = logits.ok_or_else(|| Error::Construction {
            what: "graph has no softmax output layer".into(),
        })?;
        Ok(GraphRun { logits, probs: x, param_ids, bn_updates })
    }

    /// Write pending batch-norm running updates back into the state slots.
    pub fn apply_bn_updates(&mut self, updates: Vec<(String, BnUpdate<f32>)>) {
        for (prefix, update) in updates {
            self.params.insert(format!("{prefix}.running_mean"), update.running_mean);
            self.params.insert(format!("{prefix}.running_var"), update.running_var);
        }
    }
}

fn record_block_updates(
    bn_updates: &mut Vec<(String, BnUpdate<f32>)>,
    names: Vec<String>,
    updates: Vec<BnUpdate<f32>>,
) -> Result<()> {
    if updates.is_empty() {
        return Ok(());
    }
    if names.len() != updates.len() {
        return Err(Error::Construction {
            what: format!("block produced {} running updates for {} layers", updates.len(), names.len()),
        });
    }
    bn_updates.extend(names.into_iter().zip(updates));
    Ok(())
}

/// Head node layout shared by every builder: two relu dense layers, dropout,
/// output dense, softmax. Node names start with `head.`.
pub(crate) fn head_nodes(feature_width: usize, spec: &HeadSpec) -> Vec<Node> {
    let mut nodes = Vec::new();
    let mut d = feature_width;
    for i in 0..spec.hidden_layers {
        nodes.push(Node {
            name: format!("head.dense{}", i + 1),
            kind: NodeKind::Dense { in_dim: d, out_dim: spec.hidden_units },
        });
        nodes.push(Node {
            name: format!("head.relu{}", i + 1),
            kind: NodeKind::Activation(Activation::Relu),
        });
        d = spec.hidden_units;
    }
    nodes.push(Node { name: "head.dropout".into(), kind: NodeKind::Dropout { rate: spec.dropout_rate } });
    nodes.push(Node {
        name: "head.output".into(),
        kind: NodeKind::Dense { in_dim: d, out_dim: spec.num_classes },
    });
    nodes.push(Node { name: "head.softmax".into(), kind: NodeKind::Softmax });
    nodes
}

/// Run the head alone through [`head_logits`] — used to cross-check that the
/// graph layout and the block-level head agree.
pub fn head_forward_from_graph(
    graph: &NetworkGraph,
    tape: &mut Tape<f32>,
    features: Tensor<f32>,
    spec: &HeadSpec,
    mode: ExecMode,
    dropout_seed: u64,
) -> Result<ValueId> {
    let mut hidden = Vec::new();
    for i in 0..spec.hidden_layers {
        let w = tape.leaf(graph.param(&format!("head.dense{}.weight", i + 1))?.clone());
        let b = tape.leaf(graph.param(&format!("head.dense{}.bias", i + 1))?.clone());
        hidden.push((w, b));
    }
    let out_w = tape.leaf(graph.param("head.output.weight")?.clone());
    let out_b = tape.leaf(graph.param("head.output.bias")?.clone());
    let params = HeadParams { hidden, output: (out_w, out_b) };
    let features = tape.leaf(features);
    let logits = head_logits(tape, features, spec, &params, mode, dropout_seed)?;
    tape.softmax(logits)
}
