//! The four FCN variants and their shared entry points.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::{ConvRole, FusionMode, Grads, Graph, Node, NodeKind, ParamMut, Trace};
use crate::error::{Error, Result};
use crate::label::LabelImage;
use crate::ops::{ConvSpec, UpsampleSpec};
use crate::tensor::{Shape, Tensor};

/// Smallest legal input height/width for every variant.
pub const MIN_INPUT_EXTENT: usize = 32;
/// Channel floor applied after width scaling.
pub const MIN_CHANNELS: usize = 4;
/// RGB input.
pub const INPUT_CHANNELS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "fcn-alexnet")]
    FcnAlexNet,
    #[serde(rename = "fcn-32s")]
    Fcn32s,
    #[serde(rename = "fcn-16s")]
    Fcn16s,
    #[serde(rename = "fcn-8s")]
    Fcn8s,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::FcnAlexNet,
        Variant::Fcn32s,
        Variant::Fcn16s,
        Variant::Fcn8s,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Variant::FcnAlexNet => "fcn-alexnet",
            Variant::Fcn32s => "fcn-32s",
            Variant::Fcn16s => "fcn-16s",
            Variant::Fcn8s => "fcn-8s",
        }
    }

    /// Number of fuse-sum nodes in the graph.
    pub fn skip_fusions(&self) -> usize {
        match self {
            Variant::FcnAlexNet | Variant::Fcn32s => 0,
            Variant::Fcn16s => 1,
            Variant::Fcn8s => 2,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "fcn-alexnet" | "alexnet" => Ok(Variant::FcnAlexNet),
            "fcn-32s" | "32s" => Ok(Variant::Fcn32s),
            "fcn-16s" | "16s" => Ok(Variant::Fcn16s),
            "fcn-8s" | "8s" => Ok(Variant::Fcn8s),
            other => Err(Error::Config(format!("unknown FCN variant '{other}'"))),
        }
    }
}

/// Everything needed to rebuild a model's topology.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub variant: Variant,
    pub num_classes: usize,
    pub width_scale: f64,
    /// Dropout after the two convolutionalized fully-connected layers (off by default).
    #[serde(default)]
    pub dropout: Option<f64>,
}

impl ModelSpec {
    pub fn new(variant: Variant, num_classes: usize, width_scale: f64) -> Self {
        ModelSpec {
            variant,
            num_classes,
            width_scale,
            dropout: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width_scale > 0.0 && self.width_scale <= 1.0) {
            return Err(Error::Config(format!(
                "width_scale {} outside (0, 1]",
                self.width_scale
            )));
        }
        if self.num_classes < 2 {
            return Err(Error::Config(format!(
                "num_classes {} must be at least 2",
                self.num_classes
            )));
        }
        if let Some(p) = self.dropout {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Config(format!("dropout rate {p} outside [0, 1)")));
            }
        }
        Ok(())
    }

    fn width(&self, full: usize) -> usize {
        ((full as f64 * self.width_scale).round() as usize).max(MIN_CHANNELS)
    }
}

/// A built FCN: variant metadata plus its layer graph.
#[derive(Debug, Clone, PartialEq)]
pub struct SegModel {
    pub spec: ModelSpec,
    pub graph: Graph,
}

struct Builder<'r> {
    nodes: Vec<Node>,
    rng: &'r mut ChaCha8Rng,
}

impl Builder<'_> {
    fn push(&mut self, name: &str, kind: NodeKind, inputs: Vec<usize>) -> usize {
        self.nodes.push(Node {
            name: name.to_string(),
            kind,
            inputs,
        });
        self.nodes.len() - 1
    }

    fn channels(&self, id: usize) -> usize {
        let mut id = id;
        loop {
            match &self.nodes[id].kind {
                NodeKind::Input => return INPUT_CHANNELS,
                NodeKind::Conv { spec, .. } => return spec.out_channels(),
                NodeKind::Upsample { spec } => return spec.out_channels(),
                _ => id = self.nodes[id].inputs[0],
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn conv(&mut self, name: &str, from: usize, out: usize, k: usize, stride: usize, pad: usize) -> usize {
        let spec = ConvSpec::gaussian(out, self.channels(from), k, stride, pad, self.rng);
        self.push(
            name,
            NodeKind::Conv {
                spec,
                relu: true,
                role: ConvRole::Body,
            },
            vec![from],
        )
    }

    fn score(&mut self, name: &str, from: usize, classes: usize, role: ConvRole) -> usize {
        let in_ch = self.channels(from);
        let spec = match role {
            ConvRole::SkipScore => ConvSpec::zeros(classes, in_ch, 1, 1, 0),
            _ => {
                let mut s = ConvSpec::gaussian(classes, in_ch, 1, 1, 0, self.rng);
                // Linear classifier: unit-variance scaling instead of the ReLU gain.
                s.weight
                    .data_mut()
                    .iter_mut()
                    .for_each(|w| *w *= std::f64::consts::FRAC_1_SQRT_2);
                s
            }
        };
        self.push(
            name,
            NodeKind::Conv {
                spec,
                relu: false,
                role,
            },
            vec![from],
        )
    }

    fn pool(&mut self, name: &str, from: usize, k: usize, stride: usize) -> usize {
        self.push(name, NodeKind::Pool { k, stride }, vec![from])
    }

    fn upsample(&mut self, name: &str, from: usize, factor: usize) -> Result<usize> {
        let spec = UpsampleSpec::bilinear(self.channels(from), factor)?;
        Ok(self.push(name, NodeKind::Upsample { spec }, vec![from]))
    }

    fn crop(&mut self, name: &str, from: usize, reference: usize) -> usize {
        self.push(name, NodeKind::Crop { reference }, vec![from])
    }

    fn dropout(&mut self, name: &str, from: usize, rate: Option<f64>) -> usize {
        match rate {
            Some(rate) => self.push(name, NodeKind::Dropout { rate }, vec![from]),
            None => from,
        }
    }
}

/// Builds one of the four variants with seeded initialization.
pub fn build_model(spec: ModelSpec, seed: u64) -> Result<SegModel> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = Builder {
        nodes: Vec::new(),
        rng: &mut rng,
    };
    let input = b.push("data", NodeKind::Input, vec![]);
    let classes = spec.num_classes;

    let graph_end = match spec.variant {
        Variant::FcnAlexNet => {
            let x = b.conv("conv1", input, spec.width(96), 11, 4, 5);
            let x = b.pool("pool1", x, 3, 2);
            let x = b.conv("conv2", x, spec.width(256), 5, 1, 2);
            let x = b.pool("pool2", x, 3, 2);
            let x = b.conv("conv3", x, spec.width(384), 3, 1, 1);
            let x = b.conv("conv4", x, spec.width(384), 3, 1, 1);
            let x = b.conv("conv5", x, spec.width(256), 3, 1, 1);
            let x = b.pool("pool5", x, 3, 2);
            let x = b.conv("fc6", x, spec.width(4096), 6, 1, 3);
            let x = b.dropout("drop6", x, spec.dropout);
            let x = b.conv("fc7", x, spec.width(4096), 1, 1, 0);
            let x = b.dropout("drop7", x, spec.dropout);
            let score = b.score("score_fr", x, classes, ConvRole::MainScore);
            let up = b.upsample("upscore", score, 32)?;
            b.crop("score", up, input)
        }
        Variant::Fcn32s | Variant::Fcn16s | Variant::Fcn8s => {
            let mut x = input;
            let mut pools = Vec::new();
            for (stage, (full, reps)) in [(64, 2), (128, 2), (256, 3), (512, 3), (512, 3)]
                .into_iter()
                .enumerate()
            {
                for r in 0..reps {
                    x = b.conv(
                        &format!("conv{}_{}", stage + 1, r + 1),
                        x,
                        spec.width(full),
                        3,
                        1,
                        1,
                    );
                }
                x = b.pool(&format!("pool{}", stage + 1), x, 2, 2);
                pools.push(x);
            }
            let x = b.conv("fc6", x, spec.width(4096), 7, 1, 3);
            let x = b.dropout("drop6", x, spec.dropout);
            let x = b.conv("fc7", x, spec.width(4096), 1, 1, 0);
            let x = b.dropout("drop7", x, spec.dropout);
            let score = b.score("score_fr", x, classes, ConvRole::MainScore);
            match spec.variant {
                Variant::Fcn32s => {
                    let up = b.upsample("upscore", score, 32)?;
                    b.crop("score", up, input)
                }
                Variant::Fcn16s => {
                    let up2 = b.upsample("upscore2", score, 2)?;
                    let sp4 = b.score("score_pool4", pools[3], classes, ConvRole::SkipScore);
                    let up2c = b.crop("upscore2c", up2, sp4);
                    let fuse = b.push("fuse_pool4", NodeKind::Fuse, vec![up2c, sp4]);
                    let up = b.upsample("upscore16", fuse, 16)?;
                    b.crop("score", up, input)
                }
                _ => {
                    let up2 = b.upsample("upscore2", score, 2)?;
                    let sp4 = b.score("score_pool4", pools[3], classes, ConvRole::SkipScore);
                    let up2c = b.crop("upscore2c", up2, sp4);
                    let fuse4 = b.push("fuse_pool4", NodeKind::Fuse, vec![up2c, sp4]);
                    let up4 = b.upsample("upscore_pool4", fuse4, 2)?;
                    let sp3 = b.score("score_pool3", pools[2], classes, ConvRole::SkipScore);
                    let up4c = b.crop("upscore_pool4c", up4, sp3);
                    let fuse3 = b.push("fuse_pool3", NodeKind::Fuse, vec![up4c, sp3]);
                    let up = b.upsample("upscore8", fuse3, 8)?;
                    b.crop("score", up, input)
                }
            }
        }
    };
    debug_assert_eq!(graph_end, b.nodes.len() - 1);
    Ok(SegModel {
        spec,
        graph: Graph { nodes: b.nodes },
    })
}

impl SegModel {
    pub fn variant(&self) -> Variant {
        self.spec.variant
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    pub fn fuse_count(&self) -> usize {
        self.graph
            .nodes
            .iter()
            .filter(|n| matches!(n.kind, NodeKind::Fuse))
            .count()
    }

    /// Score map `batch x num_classes x H x W` for a `batch x 3 x H x W` image.
    pub fn forward(&self, image: &Tensor) -> Result<Tensor> {
        self.forward_with(image, FusionMode::Full)
    }

    pub fn forward_with(&self, image: &Tensor, mode: FusionMode) -> Result<Tensor> {
        let trace = self.trace(image, mode, None)?;
        Ok(trace.outputs.into_iter().last().expect("graph has nodes"))
    }

    /// Forward pass keeping every activation for [`SegModel::backward`]. Dropout is active only
    /// when an RNG is supplied.
    pub fn trace(&self, image: &Tensor, mode: FusionMode, rng: Option<&mut ChaCha8Rng>) -> Result<Trace> {
        let trace = self
            .graph
            .forward_trace(image, MIN_INPUT_EXTENT, mode, rng)?;
        let out = trace.output().shape();
        let want = Shape::new(
            image.shape().batch(),
            self.spec.num_classes,
            image.shape().height(),
            image.shape().width(),
        );
        if out != want {
            return Err(Error::shape(format!(
                "graph produced {out}, expected {want}"
            )));
        }
        Ok(trace)
    }

    pub fn backward(&self, trace: &Trace, score_grad: &Tensor) -> Result<Grads> {
        self.graph.backward(trace, score_grad)
    }

    pub fn params_mut(&mut self) -> Vec<ParamMut<'_>> {
        self.graph.params_mut()
    }

    /// Input pixels per score-map cell just before the final upsampling.
    pub fn prediction_stride(&self, height: usize, width: usize) -> Result<f64> {
        let plan = self.graph.plan(height, width, MIN_INPUT_EXTENT)?;
        let last_up = self
            .graph
            .nodes
            .iter()
            .rposition(|n| matches!(n.kind, NodeKind::Upsample { .. }))
            .ok_or_else(|| Error::Config("graph has no upsampling layer".into()))?;
        Ok(plan.steps[self.graph.nodes[last_up].inputs[0]])
    }

    /// Mutable access to a convolution's spec by node name.
    pub fn conv_mut(&mut self, name: &str) -> Option<&mut ConvSpec> {
        self.graph.nodes.iter_mut().find_map(|n| match &mut n.kind {
            NodeKind::Conv { spec, .. } if n.name == name => Some(spec),
            _ => None,
        })
    }

    /// Sets every upsampling kernel's trainable flag.
    pub fn set_upsample_trainable(&mut self, trainable: bool) {
        for n in &mut self.graph.nodes {
            if let NodeKind::Upsample { spec } = &mut n.kind {
                spec.trainable = trainable;
            }
        }
    }
}

/// Per-pixel argmax over channels for a single-image score map; ties go to the lower class.
pub fn predict_labels(score_map: &Tensor) -> Result<LabelImage> {
    let [n, c, h, w] = score_map.shape().0;
    if n != 1 {
        return Err(Error::shape(format!(
            "predict_labels expects a single image, got {}",
            score_map.shape()
        )));
    }
    if c == 0 || c > 256 {
        return Err(Error::shape(format!("cannot label {c} channels")));
    }
    let plane = h * w;
    let s = score_map.data();
    let pixels = (0..plane)
        .map(|p| {
            let mut best = 0;
            for k in 1..c {
                if s[k * plane + p] > s[best * plane + p] {
                    best = k;
                }
            }
            best as u8
        })
        .collect();
    LabelImage::from_pixels(w, h, pixels)
}
