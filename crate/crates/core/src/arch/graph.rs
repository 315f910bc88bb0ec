//! Layer graph execution: shape planning, forward with activation trace, backward.
//!
//! Every node output carries an affine coordinate map per axis: cell `j` of the map is
//! centred on input-image coordinate `step * j + origin`. Crop offsets between two maps
//! and the extra zero padding of the first convolution are derived from these maps, so no
//! offset is tied to a particular input size.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops::{
    self, conv2d_backward_opt, conv2d_forward, crop, crop_backward, deconv2d_backward,
    deconv2d_forward, maxpool2d_backward, maxpool2d_forward, ConvSpec, UpsampleSpec,
};
use crate::tensor::{Shape, Tensor};

/// Largest extra first-layer pad the planner will try.
const MAX_EXTRA_PAD: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConvRole {
    Body,
    /// Final classifier on the deepest features.
    MainScore,
    /// Classifier on an intermediate pooling output feeding a fuse node.
    SkipScore,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Input,
    Conv {
        spec: ConvSpec,
        relu: bool,
        role: ConvRole,
    },
    Pool {
        k: usize,
        stride: usize,
    },
    Upsample {
        spec: UpsampleSpec,
    },
    /// Crops its input to the extents of `reference`, aligned by coordinate maps.
    Crop {
        reference: usize,
    },
    /// Elementwise sum of all inputs.
    Fuse,
    Dropout {
        rate: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub name: String,
    pub kind: NodeKind,
    pub inputs: Vec<usize>,
}

/// Which summands the fuse nodes see.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FusionMode {
    #[default]
    Full,
    /// Skip-score outputs replaced by zeros (deepest path alone).
    MainOnly,
    /// Main-score output replaced by zeros (skip contribution alone).
    SkipOnly,
}

/// Per-axis placement of a node output.
#[derive(Debug, Clone, Copy, PartialEq)]
struct AxisMap {
    extent: usize,
    step: f64,
    origin: f64,
}

/// Resolved geometry for one input size.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    /// Zero padding added to the first convolution's own pad.
    pub extra_pad: usize,
    /// Output shape per node (batch 1).
    pub shapes: Vec<Shape>,
    /// `(offset_y, offset_x)` for crop nodes, `None` elsewhere.
    pub crop_offsets: Vec<Option<(usize, usize)>>,
    /// Coordinate step (input pixels per cell) of each node output along y.
    pub steps: Vec<f64>,
}

/// Node outputs and routing state recorded by a forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    pub plan: Plan,
    pub outputs: Vec<Tensor>,
    argmax: Vec<Option<Vec<usize>>>,
    dropout_masks: Vec<Option<Vec<f64>>>,
}

impl Trace {
    /// Output of the last node.
    pub fn output(&self) -> &Tensor {
        self.outputs.last().expect("graph has nodes")
    }
}

/// Per-parameter gradients in [`Graph::param_names`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads(pub Vec<Vec<f64>>);

/// Mutable view of one parameter tensor.
pub struct ParamMut<'a> {
    pub name: String,
    pub data: &'a mut [f64],
    pub trainable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    pub nodes: Vec<Node>,
}

impl Graph {
    pub fn first_conv(&self) -> Option<usize> {
        self.nodes
            .iter()
            .position(|n| matches!(n.kind, NodeKind::Conv { .. }))
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for n in &self.nodes {
            match n.kind {
                NodeKind::Conv { .. } => {
                    names.push(format!("{}.weight", n.name));
                    names.push(format!("{}.bias", n.name));
                }
                NodeKind::Upsample { .. } => names.push(format!("{}.weight", n.name)),
                _ => {}
            }
        }
        names
    }

    /// `(name, shape, values)` for every parameter, in order.
    pub fn params(&self) -> Vec<(String, Shape, &[f64])> {
        let mut out = Vec::new();
        for n in &self.nodes {
            match &n.kind {
                NodeKind::Conv { spec, .. } => {
                    out.push((format!("{}.weight", n.name), spec.weight.shape(), spec.weight.data()));
                    out.push((
                        format!("{}.bias", n.name),
                        Shape::new(spec.bias.len(), 1, 1, 1),
                        &spec.bias[..],
                    ));
                }
                NodeKind::Upsample { spec } => {
                    out.push((format!("{}.weight", n.name), spec.weight.shape(), spec.weight.data()))
                }
                _ => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<ParamMut<'_>> {
        let mut out = Vec::new();
        for n in &mut self.nodes {
            match &mut n.kind {
                NodeKind::Conv { spec, .. } => {
                    out.push(ParamMut {
                        name: format!("{}.weight", n.name),
                        data: spec.weight.data_mut(),
                        trainable: true,
                    });
                    out.push(ParamMut {
                        name: format!("{}.bias", n.name),
                        data: &mut spec.bias[..],
                        trainable: true,
                    });
                }
                NodeKind::Upsample { spec } => {
                    let trainable = spec.trainable;
                    out.push(ParamMut {
                        name: format!("{}.weight", n.name),
                        data: spec.weight.data_mut(),
                        trainable,
                    });
                }
                _ => {}
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.2.len()).sum()
    }

    /// Out channels of the last node.
    pub fn output_channels(&self) -> usize {
        for n in self.nodes.iter().rev() {
            match &n.kind {
                NodeKind::Conv { spec, .. } => return spec.out_channels(),
                NodeKind::Upsample { spec } => return spec.out_channels(),
                _ => {}
            }
        }
        0
    }

    fn input_channels(&self) -> usize {
        self.first_conv()
            .map(|i| match &self.nodes[i].kind {
                NodeKind::Conv { spec, .. } => spec.in_channels(),
                _ => unreachable!(),
            })
            .unwrap_or(0)
    }

    fn plan_axis(&self, n: usize, extra_pad: usize) -> Option<(Vec<AxisMap>, Vec<Option<usize>>)> {
        let first = self.first_conv();
        let mut maps: Vec<AxisMap> = Vec::with_capacity(self.nodes.len());
        let mut offsets = vec![None; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            let src = node.inputs.first().map(|&j| maps[j]);
            let m = match &node.kind {
                NodeKind::Input => AxisMap {
                    extent: n,
                    step: 1.0,
                    origin: 0.0,
                },
                NodeKind::Conv { spec, .. } => {
                    let s = src?;
                    let (k, _) = spec.kernel_hw();
                    let pad = spec.pad + if Some(i) == first { extra_pad } else { 0 };
                    AxisMap {
                        extent: ops::conv_out_extent(s.extent, k, spec.stride, pad)?,
                        step: s.step * spec.stride as f64,
                        origin: s.origin + s.step * ((k as f64 - 1.0) / 2.0 - pad as f64),
                    }
                }
                NodeKind::Pool { k, stride } => {
                    let s = src?;
                    AxisMap {
                        extent: ops::conv_out_extent(s.extent, *k, *stride, 0)?,
                        step: s.step * *stride as f64,
                        origin: s.origin + s.step * (*k as f64 - 1.0) / 2.0,
                    }
                }
                NodeKind::Upsample { spec } => {
                    let s = src?;
                    let f = spec.factor as f64;
                    AxisMap {
                        extent: spec.output_extent(s.extent),
                        step: s.step / f,
                        origin: s.origin
                            + s.step * (spec.pad as f64 - (spec.kernel_size as f64 - 1.0) / 2.0)
                                / f,
                    }
                }
                NodeKind::Crop { reference } => {
                    let s = src?;
                    let r = maps[*reference];
                    let offset = ((r.origin - s.origin) / s.step).round();
                    if offset < 0.0 || offset as usize + r.extent > s.extent {
                        return None;
                    }
                    offsets[i] = Some(offset as usize);
                    AxisMap {
                        extent: r.extent,
                        step: s.step,
                        origin: s.origin + offset * s.step,
                    }
                }
                NodeKind::Fuse => {
                    let s = src?;
                    if node.inputs.iter().any(|&j| maps[j].extent != s.extent) {
                        return None;
                    }
                    s
                }
                NodeKind::Dropout { .. } => src?,
            };
            if m.extent == 0 {
                return None;
            }
            maps.push(m);
        }
        Some((maps, offsets))
    }

    /// Resolves extents, crop offsets and the smallest extra first-layer padding for which
    /// every layer is well-defined and the output covers the whole input.
    pub fn plan(&self, height: usize, width: usize, min_extent: usize) -> Result<Plan> {
        if height < min_extent || width < min_extent {
            return Err(Error::shape(format!(
                "input {height}x{width} is below the minimum extent {min_extent}x{min_extent}"
            )));
        }
        let channels = self.input_channels();
        for extra in 0..=MAX_EXTRA_PAD {
            let (Some((ys, oy)), Some((xs, ox))) =
                (self.plan_axis(height, extra), self.plan_axis(width, extra))
            else {
                continue;
            };
            let shapes = self
                .nodes
                .iter()
                .enumerate()
                .map(|(i, node)| {
                    let c = match &node.kind {
                        NodeKind::Input => channels,
                        NodeKind::Conv { spec, .. } => spec.out_channels(),
                        NodeKind::Upsample { spec } => spec.out_channels(),
                        _ => 0,
                    };
                    (i, c)
                })
                .fold(Vec::<Shape>::new(), |mut acc, (i, c)| {
                    let c = if c == 0 {
                        acc[self.nodes[i].inputs[0]].channels()
                    } else {
                        c
                    };
                    acc.push(Shape::new(1, c, ys[i].extent, xs[i].extent));
                    acc
                });
            let crop_offsets = oy
                .iter()
                .zip(&ox)
                .map(|(a, b)| a.zip(*b))
                .collect();
            return Ok(Plan {
                extra_pad: extra,
                shapes,
                crop_offsets,
                steps: ys.iter().map(|m| m.step).collect(),
            });
        }
        Err(Error::shape(format!(
            "no padding up to {MAX_EXTRA_PAD} makes the graph valid for {height}x{width}"
        )))
    }

    pub fn forward_trace<R: Rng + ?Sized>(
        &self,
        input: &Tensor,
        min_extent: usize,
        mode: FusionMode,
        mut dropout_rng: Option<&mut R>,
    ) -> Result<Trace> {
        let in_shape = input.shape();
        if in_shape.channels() != self.input_channels() {
            return Err(Error::shape(format!(
                "input {in_shape} must have {} channels",
                self.input_channels()
            )));
        }
        let plan = self.plan(in_shape.height(), in_shape.width(), min_extent)?;
        let first = self.first_conv();
        let batch = in_shape.batch();
        let mut outputs: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        let mut argmax = vec![None; self.nodes.len()];
        let mut masks = vec![None; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            let out = match &node.kind {
                NodeKind::Input => {
                    let mut t = input.clone();
                    t.clear_grad();
                    t
                }
                NodeKind::Conv { spec, relu, role } => {
                    let x = &outputs[node.inputs[0]];
                    let silenced = matches!(
                        (mode, role),
                        (FusionMode::MainOnly, ConvRole::SkipScore)
                            | (FusionMode::SkipOnly, ConvRole::MainScore)
                    );
                    if silenced {
                        let s = plan.shapes[i];
                        Tensor::zeros(Shape::new(batch, s.channels(), s.height(), s.width()))
                    } else {
                        let y = if Some(i) == first && plan.extra_pad > 0 {
                            let mut padded = spec.clone();
                            padded.pad += plan.extra_pad;
                            conv2d_forward(x, &padded)?
                        } else {
                            conv2d_forward(x, spec)?
                        };
                        if *relu {
                            ops::relu_forward(&y)
                        } else {
                            y
                        }
                    }
                }
                NodeKind::Pool { k, stride } => {
                    let p = maxpool2d_forward(&outputs[node.inputs[0]], *k, *stride)?;
                    argmax[i] = Some(p.argmax);
                    p.output
                }
                NodeKind::Upsample { spec } => deconv2d_forward(&outputs[node.inputs[0]], spec)?,
                NodeKind::Crop { .. } => {
                    let (oy, ox) = plan.crop_offsets[i].expect("planned crop");
                    let s = plan.shapes[i];
                    crop(&outputs[node.inputs[0]], s.height(), s.width(), oy, ox)?
                }
                NodeKind::Fuse => {
                    let mut acc = outputs[node.inputs[0]].clone();
                    for &j in &node.inputs[1..] {
                        let other = &outputs[j];
                        if other.shape() != acc.shape() {
                            return Err(Error::shape(format!(
                                "fuse {} got {} and {}",
                                node.name,
                                acc.shape(),
                                other.shape()
                            )));
                        }
                        for (a, b) in acc.data_mut().iter_mut().zip(other.data()) {
                            *a += b;
                        }
                    }
                    acc
                }
                NodeKind::Dropout { rate } => {
                    let x = &outputs[node.inputs[0]];
                    match dropout_rng.as_deref_mut() {
                        Some(rng) if *rate > 0.0 => {
                            let keep = 1.0 - rate;
                            let mask: Vec<f64> = (0..x.data().len())
                                .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                                .collect();
                            let mut y = x.clone();
                            y.data_mut().iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
                            masks[i] = Some(mask);
                            y
                        }
                        _ => x.clone(),
                    }
                }
            };
            outputs.push(out);
        }
        Ok(Trace {
            plan,
            outputs,
            argmax,
            dropout_masks: masks,
        })
    }

    /// Parameter gradients given the gradient of the last node's output.
    pub fn backward(&self, trace: &Trace, output_grad: &Tensor) -> Result<Grads> {
        let count = self.nodes.len();
        if output_grad.shape() != trace.output().shape() {
            return Err(Error::shape(format!(
                "output gradient {} does not match output {}",
                output_grad.shape(),
                trace.output().shape()
            )));
        }
        let first = self.first_conv();
        let mut upstream: Vec<Option<Tensor>> = vec![None; count];
        upstream[count - 1] = Some(output_grad.clone());
        let mut node_grads: Vec<Vec<Vec<f64>>> = vec![Vec::new(); count];

        fn add_into(slot: &mut Option<Tensor>, g: Tensor) {
            match slot {
                Some(acc) => acc
                    .data_mut()
                    .iter_mut()
                    .zip(g.data())
                    .for_each(|(a, b)| *a += b),
                None => *slot = Some(g),
            }
        }

        for i in (0..count).rev() {
            let Some(dy) = upstream[i].take() else {
                continue;
            };
            let node = &self.nodes[i];
            let needs_input = |j: usize| !matches!(self.nodes[j].kind, NodeKind::Input);
            match &node.kind {
                NodeKind::Input => {}
                NodeKind::Conv { spec, relu, .. } => {
                    let src = node.inputs[0];
                    let dy = if *relu {
                        ops::relu_backward(&trace.outputs[i], &dy)
                    } else {
                        dy
                    };
                    let g = if Some(i) == first && trace.plan.extra_pad > 0 {
                        let mut padded = spec.clone();
                        padded.pad += trace.plan.extra_pad;
                        conv2d_backward_opt(&trace.outputs[src], &padded, &dy, needs_input(src))?
                    } else {
                        conv2d_backward_opt(&trace.outputs[src], spec, &dy, needs_input(src))?
                    };
                    node_grads[i] = vec![g.kernel.into_data(), g.bias];
                    if needs_input(src) {
                        add_into(&mut upstream[src], g.input);
                    }
                }
                NodeKind::Pool { .. } => {
                    let src = node.inputs[0];
                    let am = trace.argmax[i].as_ref().expect("pool argmax recorded");
                    add_into(
                        &mut upstream[src],
                        maxpool2d_backward(trace.outputs[src].shape(), am, &dy)?,
                    );
                }
                NodeKind::Upsample { spec } => {
                    let src = node.inputs[0];
                    let g = deconv2d_backward(&trace.outputs[src], spec, &dy)?;
                    node_grads[i] = vec![g.kernel.into_data()];
                    add_into(&mut upstream[src], g.input);
                }
                NodeKind::Crop { .. } => {
                    let src = node.inputs[0];
                    let (oy, ox) = trace.plan.crop_offsets[i].expect("planned crop");
                    add_into(
                        &mut upstream[src],
                        crop_backward(trace.outputs[src].shape(), &dy, oy, ox)?,
                    );
                }
                NodeKind::Fuse => {
                    for &j in &node.inputs {
                        add_into(&mut upstream[j], dy.clone());
                    }
                }
                NodeKind::Dropout { .. } => {
                    let src = node.inputs[0];
                    let mut dx = dy;
                    if let Some(mask) = &trace.dropout_masks[i] {
                        dx.data_mut().iter_mut().zip(mask).for_each(|(v, m)| *v *= m);
                    }
                    add_into(&mut upstream[src], dx);
                }
            }
        }

        let mut grads = Vec::new();
        for (i, node) in self.nodes.iter().enumerate() {
            match &node.kind {
                NodeKind::Conv { spec, .. } => {
                    let mut g = std::mem::take(&mut node_grads[i]);
                    if g.is_empty() {
                        g = vec![vec![0.0; spec.weight.data().len()], vec![0.0; spec.bias.len()]];
                    }
                    grads.extend(g);
                }
                NodeKind::Upsample { spec } => {
                    let mut g = std::mem::take(&mut node_grads[i]);
                    if g.is_empty() {
                        g = vec![vec![0.0; spec.weight.data().len()]];
                    }
                    grads.extend(g);
                }
                _ => {}
            }
        }
        Ok(Grads(grads))
    }
}
