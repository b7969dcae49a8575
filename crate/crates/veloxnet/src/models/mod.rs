//! Declarative model graphs for VeloxNet and SqueezeNet, the published
//! ablation variants, and a uniform forward/backward executor.
//!
//! A [`ModelGraph`] is the source of truth for accounting and execution:
//! per-node expected output shapes are inferred at build time and asserted
//! on every forward pass.

mod exec;

pub use exec::Model;

use crate::error::{Error, Result};
use crate::fire::FireConfig;
use crate::gmlp::GmlpConfig;
use crate::layers::{ActKind, Conv2d, Rounding};
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Veloxnet,
    Squeezenet,
    /// Tiny VeloxNet (d = 12, 27×27 input) for finite-difference checks.
    VeloxnetReduced,
    /// Tiny SqueezeNet for finite-difference checks.
    SqueezenetReduced,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Veloxnet => "veloxnet",
            ModelKind::Squeezenet => "squeezenet",
            ModelKind::VeloxnetReduced => "veloxnet-reduced",
            ModelKind::SqueezenetReduced => "squeezenet-reduced",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "veloxnet" => Ok(ModelKind::Veloxnet),
            "squeezenet" => Ok(ModelKind::Squeezenet),
            "veloxnet-reduced" => Ok(ModelKind::VeloxnetReduced),
            "squeezenet-reduced" => Ok(ModelKind::SqueezenetReduced),
            other => Err(Error::Config(format!("unknown model kind '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Preset {
    #[default]
    TableI,
    PaperEq,
}

impl Preset {
    pub fn as_str(&self) -> &'static str {
        match self {
            Preset::TableI => "table-i",
            Preset::PaperEq => "paper-eq",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "table-i" => Ok(Preset::TableI),
            "paper-eq" => Ok(Preset::PaperEq),
            other => Err(Error::Config(format!("unknown preset '{other}'"))),
        }
    }
}

/// One published ablation variant, applied on top of the base VeloxNet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Ablation {
    #[default]
    Full,
    /// Remove spatial gating; keep channel projections only.
    NoSgu,
    /// Remove the skip connections from the blocks.
    NoResidual,
    /// Remove both block and inner layer norms.
    NoLayernorm,
    /// 4 blocks, allocated 2+1+1 across the three stages.
    Depth4,
    /// 6 blocks, allocated 2+2+2.
    Depth6,
    D96,
    D128,
    D192,
}

impl Ablation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoSgu => "no-sgu",
            Ablation::NoResidual => "no-residual",
            Ablation::NoLayernorm => "no-layernorm",
            Ablation::Depth4 => "depth4",
            Ablation::Depth6 => "depth6",
            Ablation::D96 => "d96",
            Ablation::D128 => "d128",
            Ablation::D192 => "d192",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Ablation::Full),
            "no-sgu" => Ok(Ablation::NoSgu),
            "no-residual" => Ok(Ablation::NoResidual),
            "no-layernorm" => Ok(Ablation::NoLayernorm),
            "depth4" => Ok(Ablation::Depth4),
            "depth6" => Ok(Ablation::Depth6),
            "d96" => Ok(Ablation::D96),
            "d128" => Ok(Ablation::D128),
            "d192" => Ok(Ablation::D192),
            other => Err(Error::Config(format!("unknown ablation '{other}'"))),
        }
    }

    fn d_model(&self) -> usize {
        match self {
            Ablation::D96 => 96,
            Ablation::D128 => 128,
            Ablation::D192 => 192,
            _ => 156,
        }
    }

    fn stage_blocks(&self) -> [usize; 3] {
        match self {
            Ablation::Depth4 => [2, 1, 1],
            Ablation::Depth6 => [2, 2, 2],
            _ => [2, 2, 4],
        }
    }
}

/// Everything needed to rebuild a graph: stored in checkpoints as the model
/// id + preset strings.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GraphSpec {
    pub kind: ModelKind,
    pub classes: usize,
    pub input: usize,
    pub preset: Preset,
    pub ablation: Ablation,
}

impl GraphSpec {
    pub fn new(kind: ModelKind, classes: usize) -> Self {
        let input = match kind {
            ModelKind::Veloxnet | ModelKind::Squeezenet => 224,
            ModelKind::VeloxnetReduced | ModelKind::SqueezenetReduced => 27,
        };
        Self {
            kind,
            classes,
            input,
            preset: Preset::TableI,
            ablation: Ablation::Full,
        }
    }

    pub fn with_input(mut self, input: usize) -> Self {
        self.input = input;
        self
    }

    pub fn with_preset(mut self, preset: Preset) -> Self {
        self.preset = preset;
        self
    }

    pub fn with_ablation(mut self, ablation: Ablation) -> Self {
        self.ablation = ablation;
        self
    }

    pub fn model_id(&self) -> String {
        format!(
            "{};classes={};input={};ablation={}",
            self.kind.as_str(),
            self.classes,
            self.input,
            self.ablation.as_str()
        )
    }

    pub fn from_id(id: &str, preset: &str) -> Result<Self> {
        let mut parts = id.split(';');
        let kind = ModelKind::parse(parts.next().unwrap_or_default())?;
        let mut spec = GraphSpec::new(kind, 0);
        if !preset.is_empty() && preset != "-" {
            spec.preset = Preset::parse(preset)?;
        }
        for part in parts {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::data(format!("malformed model id field '{part}'")))?;
            match key {
                "classes" => {
                    spec.classes = value
                        .parse()
                        .map_err(|_| Error::data(format!("bad class count '{value}'")))?
                }
                "input" => {
                    spec.input = value
                        .parse()
                        .map_err(|_| Error::data(format!("bad input size '{value}'")))?
                }
                "ablation" => spec.ablation = Ablation::parse(value)?,
                other => return Err(Error::data(format!("unknown model id field '{other}'"))),
            }
        }
        if spec.classes < 2 {
            return Err(Error::data(format!(
                "model id '{id}' has fewer than 2 classes"
            )));
        }
        Ok(spec)
    }

    pub fn build_graph(&self) -> Result<ModelGraph> {
        if self.classes < 2 {
            return Err(Error::Config(format!(
                "need at least 2 classes, got {}",
                self.classes
            )));
        }
        match self.kind {
            ModelKind::Veloxnet => {
                veloxnet_graph(*self, self.ablation.d_model(), self.ablation.stage_blocks())
            }
            ModelKind::VeloxnetReduced => veloxnet_reduced_graph(*self),
            ModelKind::Squeezenet => squeezenet_graph(*self),
            ModelKind::SqueezenetReduced => squeezenet_reduced_graph(*self),
        }
    }
}

/// Per-node layer description. Parameter and MAC accounting runs off these
/// alone; the executor instantiates matching layer state.
#[derive(Clone, Debug, PartialEq)]
pub enum LayerSpec {
    Conv2d {
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        bias: bool,
    },
    BatchNorm2d {
        channels: usize,
    },
    GroupAffineNorm {
        channels: usize,
        groups: usize,
    },
    Activation {
        kind: ActKind,
    },
    MaxPool2d {
        kernel: usize,
        stride: usize,
        rounding: Rounding,
    },
    Gmlp {
        cfg: GmlpConfig,
    },
    Fire {
        cfg: FireConfig,
    },
    /// 1×1 classifier convolution, optionally fused with a norm and an
    /// activation (the published table reports them as a single row).
    ClassifierHead {
        c_in: usize,
        classes: usize,
        norm: bool,
        act: Option<ActKind>,
    },
    GlobalAvgPool,
}

pub type Shape3 = (usize, usize, usize); // (C, H, W)

impl LayerSpec {
    pub fn out_shape(&self, input: Shape3) -> Result<Shape3> {
        let (c, h, w) = input;
        match self {
            LayerSpec::Conv2d {
                c_in,
                c_out,
                kernel,
                stride,
                pad,
                ..
            } => {
                if c != *c_in {
                    return Err(Error::dim(format!(
                        "conv expects {c_in} input channels, got {c}"
                    )));
                }
                Ok((
                    *c_out,
                    Conv2d::<f32>::out_extent(h, *kernel, *stride, *pad)?,
                    Conv2d::<f32>::out_extent(w, *kernel, *stride, *pad)?,
                ))
            }
            LayerSpec::BatchNorm2d { channels } | LayerSpec::GroupAffineNorm { channels, .. } => {
                if c != *channels {
                    return Err(Error::dim(format!(
                        "norm expects {channels} channels, got {c}"
                    )));
                }
                if let LayerSpec::GroupAffineNorm { groups, .. } = self {
                    if channels % groups != 0 {
                        return Err(Error::dim(format!(
                            "{channels} channels not divisible by {groups} groups"
                        )));
                    }
                }
                Ok(input)
            }
            LayerSpec::Activation { .. } => Ok(input),
            LayerSpec::MaxPool2d {
                kernel,
                stride,
                rounding,
            } => Ok((
                c,
                crate::layers::pool_out_extent(h, *kernel, *stride, *rounding)?,
                crate::layers::pool_out_extent(w, *kernel, *stride, *rounding)?,
            )),
            LayerSpec::Gmlp { cfg } => {
                if c != cfg.d_model {
                    return Err(Error::dim(format!(
                        "gmlp block expects {} channels, got {c}",
                        cfg.d_model
                    )));
                }
                if h * w != cfg.n_tokens {
                    return Err(Error::dim(format!(
                        "gmlp block configured for {} tokens, map has {}",
                        cfg.n_tokens,
                        h * w
                    )));
                }
                Ok(input)
            }
            LayerSpec::Fire { cfg } => {
                if c != cfg.c_in {
                    return Err(Error::dim(format!(
                        "fire expects {} channels, got {c}",
                        cfg.c_in
                    )));
                }
                Ok((cfg.c_out(), h, w))
            }
            LayerSpec::ClassifierHead { c_in, classes, .. } => {
                if c != *c_in {
                    return Err(Error::dim(format!(
                        "classifier head expects {c_in} channels, got {c}"
                    )));
                }
                Ok((*classes, h, w))
            }
            LayerSpec::GlobalAvgPool => Ok((c, 1, 1)),
        }
    }

    /// Closed-form learnable parameter count.
    pub fn param_count(&self) -> u64 {
        match self {
            LayerSpec::Conv2d {
                c_in,
                c_out,
                kernel,
                bias,
                ..
            } => (kernel * kernel * c_in * c_out + if *bias { *c_out } else { 0 }) as u64,
            LayerSpec::BatchNorm2d { channels } => 2 * *channels as u64,
            LayerSpec::GroupAffineNorm { groups, .. } => 2 * *groups as u64,
            LayerSpec::Gmlp { cfg } => cfg.param_count() as u64,
            LayerSpec::Fire { cfg } => cfg.param_count() as u64,
            LayerSpec::ClassifierHead {
                c_in,
                classes,
                norm,
                ..
            } => (c_in * classes + if *norm { 2 * classes } else { 0 }) as u64,
            _ => 0,
        }
    }

    /// Per-sample multiply-accumulate count. Norms, activations, pooling and
    /// token shifts count as zero.
    pub fn mac_count(&self, out: Shape3) -> u64 {
        let (_, h, w) = out;
        match self {
            LayerSpec::Conv2d {
                c_in,
                c_out,
                kernel,
                ..
            } => (kernel * kernel * c_in * c_out) as u64 * (h * w) as u64,
            LayerSpec::Gmlp { cfg } => cfg.mac_count(),
            LayerSpec::Fire { cfg } => cfg.mac_count(h, w),
            LayerSpec::ClassifierHead { c_in, classes, .. } => {
                (c_in * classes) as u64 * (h * w) as u64
            }
            _ => 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphNode {
    pub name: String,
    pub spec: LayerSpec,
    pub in_shape: Shape3,
    pub out_shape: Shape3,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelGraph {
    pub spec: GraphSpec,
    pub nodes: Vec<GraphNode>,
    pub input_shape: Shape3,
}

impl ModelGraph {
    pub fn classes(&self) -> usize {
        self.spec.classes
    }

    pub fn node(&self, name: &str) -> Option<&GraphNode> {
        self.nodes.iter().find(|n| n.name == name)
    }

    pub fn total_params(&self) -> u64 {
        self.nodes.iter().map(|n| n.spec.param_count()).sum()
    }
}

struct GraphBuilder {
    nodes: Vec<GraphNode>,
    cur: Shape3,
}

impl GraphBuilder {
    fn new(input: Shape3) -> Self {
        Self {
            nodes: Vec::new(),
            cur: input,
        }
    }

    fn push(&mut self, name: impl Into<String>, spec: LayerSpec) -> Result<&mut Self> {
        let out = spec.out_shape(self.cur)?;
        self.nodes.push(GraphNode {
            name: name.into(),
            spec,
            in_shape: self.cur,
            out_shape: out,
        });
        self.cur = out;
        Ok(self)
    }

    fn spatial(&self) -> (usize, usize) {
        (self.cur.1, self.cur.2)
    }
}

/// Largest group count ≤ 3 that divides the stem width. 156, 96 and 192 all
/// take 3 groups; the d = 128 ablation falls back to 2.
fn stem_groups(d: usize) -> usize {
    if d % 3 == 0 {
        3
    } else if d % 2 == 0 {
        2
    } else {
        1
    }
}

fn block_cfg(spec: &GraphSpec, d: usize, n_tokens: usize) -> GmlpConfig {
    let mut cfg = match spec.preset {
        Preset::TableI => GmlpConfig::table_i(d, n_tokens),
        Preset::PaperEq => GmlpConfig::paper_eq(d, n_tokens),
    };
    match spec.ablation {
        Ablation::NoSgu => cfg.spatial_gating = false,
        Ablation::NoResidual => cfg.residual = false,
        Ablation::NoLayernorm => {
            cfg.block_norm = false;
            cfg.inner_norm = false;
        }
        _ => {}
    }
    cfg
}

fn veloxnet_graph(spec: GraphSpec, d: usize, stages: [usize; 3]) -> Result<ModelGraph> {
    let mut b = GraphBuilder::new((3, spec.input, spec.input));
    b.push(
        "conv1 (3x3)",
        LayerSpec::Conv2d {
            c_in: 3,
            c_out: d,
            kernel: 3,
            stride: 2,
            pad: 0,
            bias: false,
        },
    )?;
    b.push(
        "batchnorm1",
        LayerSpec::GroupAffineNorm {
            channels: d,
            groups: stem_groups(d),
        },
    )?;
    b.push("gelu1", LayerSpec::Activation { kind: ActKind::Gelu })?;
    b.push(
        "maxpool1",
        LayerSpec::MaxPool2d {
            kernel: 3,
            stride: 2,
            rounding: Rounding::Floor,
        },
    )?;
    let mut block_no = 2;
    for (stage, &count) in stages.iter().enumerate() {
        if stage > 0 {
            b.push(
                format!("maxpool{}", block_no - 1),
                LayerSpec::MaxPool2d {
                    kernel: 3,
                    stride: 2,
                    rounding: Rounding::Floor,
                },
            )?;
        }
        let (h, w) = b.spatial();
        for _ in 0..count {
            b.push(
                format!("gMLP{block_no}"),
                LayerSpec::Gmlp {
                    cfg: block_cfg(&spec, d, h * w),
                },
            )?;
            block_no += 1;
        }
    }
    b.push(
        "conv10",
        LayerSpec::ClassifierHead {
            c_in: d,
            classes: spec.classes,
            norm: false,
            act: None,
        },
    )?;
    b.push("avgpool10", LayerSpec::GlobalAvgPool)?;
    Ok(ModelGraph {
        spec,
        nodes: b.nodes,
        input_shape: (3, spec.input, spec.input),
    })
}

/// Standard v1.0 fire schedule; reproduces every published per-module count.
const FIRE_SCHEDULE: [(usize, usize, usize, usize); 8] = [
    (96, 16, 64, 64),
    (128, 16, 64, 64),
    (128, 32, 128, 128),
    (256, 32, 128, 128),
    (256, 48, 192, 192),
    (384, 48, 192, 192),
    (384, 64, 256, 256),
    (512, 64, 256, 256),
];

fn squeezenet_graph(spec: GraphSpec) -> Result<ModelGraph> {
    let mut b = GraphBuilder::new((3, spec.input, spec.input));
    b.push(
        "conv1 (7x7)",
        LayerSpec::Conv2d {
            c_in: 3,
            c_out: 96,
            kernel: 7,
            stride: 2,
            pad: 3,
            bias: false,
        },
    )?;
    b.push("batchnorm1", LayerSpec::BatchNorm2d { channels: 96 })?;
    b.push("relu1", LayerSpec::Activation { kind: ActKind::Relu })?;
    let pool = |name: &str| {
        (
            name.to_string(),
            LayerSpec::MaxPool2d {
                kernel: 3,
                stride: 2,
                rounding: Rounding::Ceil,
            },
        )
    };
    let (pn, ps) = pool("maxpool1");
    b.push(pn, ps)?;
    for (i, &(c_in, s, e1, e3)) in FIRE_SCHEDULE.iter().enumerate() {
        let fire_no = i + 2;
        b.push(
            format!("fire{fire_no}"),
            LayerSpec::Fire {
                cfg: FireConfig::new(c_in, s, e1, e3),
            },
        )?;
        if fire_no == 4 || fire_no == 8 {
            let (pn, ps) = pool(&format!("maxpool{fire_no}"));
            b.push(pn, ps)?;
        }
    }
    b.push(
        "conv10",
        LayerSpec::ClassifierHead {
            c_in: 512,
            classes: spec.classes,
            norm: true,
            act: Some(ActKind::Relu),
        },
    )?;
    b.push("avgpool10", LayerSpec::GlobalAvgPool)?;
    Ok(ModelGraph {
        spec,
        nodes: b.nodes,
        input_shape: (3, spec.input, spec.input),
    })
}

/// d = 12, two single-block stages. Small enough that central finite
/// differences over sampled parameters run in seconds.
fn veloxnet_reduced_graph(spec: GraphSpec) -> Result<ModelGraph> {
    let d = 12;
    let mut b = GraphBuilder::new((3, spec.input, spec.input));
    b.push(
        "conv1 (3x3)",
        LayerSpec::Conv2d {
            c_in: 3,
            c_out: d,
            kernel: 3,
            stride: 2,
            pad: 0,
            bias: false,
        },
    )?;
    b.push(
        "batchnorm1",
        LayerSpec::GroupAffineNorm {
            channels: d,
            groups: 3,
        },
    )?;
    b.push("gelu1", LayerSpec::Activation { kind: ActKind::Gelu })?;
    b.push(
        "maxpool1",
        LayerSpec::MaxPool2d {
            kernel: 3,
            stride: 2,
            rounding: Rounding::Floor,
        },
    )?;
    let (h, w) = b.spatial();
    b.push(
        "gMLP2",
        LayerSpec::Gmlp {
            cfg: block_cfg(&spec, d, h * w),
        },
    )?;
    b.push(
        "maxpool2",
        LayerSpec::MaxPool2d {
            kernel: 3,
            stride: 2,
            rounding: Rounding::Floor,
        },
    )?;
    let (h, w) = b.spatial();
    b.push(
        "gMLP3",
        LayerSpec::Gmlp {
            cfg: block_cfg(&spec, d, h * w),
        },
    )?;
    b.push(
        "conv10",
        LayerSpec::ClassifierHead {
            c_in: d,
            classes: spec.classes,
            norm: false,
            act: None,
        },
    )?;
    b.push("avgpool10", LayerSpec::GlobalAvgPool)?;
    Ok(ModelGraph {
        spec,
        nodes: b.nodes,
        input_shape: (3, spec.input, spec.input),
    })
}

fn squeezenet_reduced_graph(spec: GraphSpec) -> Result<ModelGraph> {
    let mut b = GraphBuilder::new((3, spec.input, spec.input));
    b.push(
        "conv1 (7x7)",
        LayerSpec::Conv2d {
            c_in: 3,
            c_out: 8,
            kernel: 7,
            stride: 2,
            pad: 3,
            bias: false,
        },
    )?;
    b.push("batchnorm1", LayerSpec::BatchNorm2d { channels: 8 })?;
    b.push("relu1", LayerSpec::Activation { kind: ActKind::Relu })?;
    b.push(
        "maxpool1",
        LayerSpec::MaxPool2d {
            kernel: 3,
            stride: 2,
            rounding: Rounding::Ceil,
        },
    )?;
    b.push(
        "fire2",
        LayerSpec::Fire {
            cfg: FireConfig::new(8, 2, 4, 4),
        },
    )?;
    b.push(
        "maxpool2",
        LayerSpec::MaxPool2d {
            kernel: 3,
            stride: 2,
            rounding: Rounding::Ceil,
        },
    )?;
    b.push(
        "fire3",
        LayerSpec::Fire {
            cfg: FireConfig::new(8, 3, 6, 6),
        },
    )?;
    b.push(
        "conv10",
        LayerSpec::ClassifierHead {
            c_in: 12,
            classes: spec.classes,
            norm: true,
            act: Some(ActKind::Relu),
        },
    )?;
    b.push("avgpool10", LayerSpec::GlobalAvgPool)?;
    Ok(ModelGraph {
        spec,
        nodes: b.nodes,
        input_shape: (3, spec.input, spec.input),
    })
}

/// Builds the VeloxNet graph at 224×224×3: conv1 → group-affine norm → GeLU
/// → three pooled stages of gMLP blocks → 1×1 classifier → global avg pool.
pub fn build_veloxnet(classes: usize, preset: Preset, ablation: Ablation) -> Result<ModelGraph> {
    GraphSpec::new(ModelKind::Veloxnet, classes)
        .with_preset(preset)
        .with_ablation(ablation)
        .build_graph()
}

/// Builds the reference SqueezeNet graph at 224×224×3.
pub fn build_squeezenet(classes: usize) -> Result<ModelGraph> {
    GraphSpec::new(ModelKind::Squeezenet, classes).build_graph()
}
