//! Uniform forward/backward execution over a [`ModelGraph`].
//!
//! Every node output is checked against the graph's expected shape and
//! scanned for NaN/Inf; a failure names the offending node. Parameter
//! visitation order is the node order, which makes optimizer state and
//! checkpoint layouts deterministic.

use super::{GraphNode, LayerSpec, ModelGraph};
use crate::error::{Error, Result};
use crate::fire::Fire;
use crate::gmlp::{map_from_tokens, tokens_from_map, GmlpBlock};
use crate::layers::{
    ActKind, Activation, BatchNorm2d, Conv2d, GlobalAvgPool, GroupAffineNorm, MaxPool2d, Mode,
};
use crate::tensor::{Scalar, Tensor};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// 1×1 classifier convolution with optional fused norm and activation.
struct Head<T: Scalar> {
    conv: Conv2d<T>,
    bn: Option<BatchNorm2d<T>>,
    act: Option<Activation<T>>,
}

impl<T: Scalar> Head<T> {
    fn init<R: Rng>(c_in: usize, classes: usize, norm: bool, act: Option<ActKind>, rng: &mut R) -> Self {
        Self {
            conv: Conv2d::new(c_in, classes, 1, 1, 0, false, rng),
            bn: norm.then(|| BatchNorm2d::new(classes)),
            act: act.map(Activation::new),
        }
    }

    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let mut y = self.conv.forward(x)?;
        if let Some(bn) = &mut self.bn {
            y = bn.forward(&y, mode)?;
        }
        if let Some(act) = &mut self.act {
            y = act.forward(&y)?;
        }
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let mut d = dy.clone();
        if let Some(act) = &mut self.act {
            d = act.backward(&d)?;
        }
        if let Some(bn) = &mut self.bn {
            d = bn.backward(&d)?;
        }
        self.conv.backward(&d)
    }
}

/// gMLP block lifted to NCHW: maps ↔ tokens at the node boundary.
struct GmlpMap<T: Scalar> {
    block: GmlpBlock<T>,
    h: usize,
    w: usize,
}

enum NodeState<T: Scalar> {
    Conv(Conv2d<T>),
    BatchNorm(BatchNorm2d<T>),
    GroupNorm(GroupAffineNorm<T>),
    Act(Activation<T>),
    Pool(MaxPool2d<T>),
    Gmlp(GmlpMap<T>),
    Fire(Fire<T>),
    Head(Head<T>),
    GlobalAvg(GlobalAvgPool<T>),
}

impl<T: Scalar> NodeState<T> {
    fn instantiate<R: Rng>(node: &GraphNode, rng: &mut R) -> Result<Self> {
        Ok(match &node.spec {
            LayerSpec::Conv2d {
                c_in,
                c_out,
                kernel,
                stride,
                pad,
                bias,
            } => NodeState::Conv(Conv2d::new(*c_in, *c_out, *kernel, *stride, *pad, *bias, rng)),
            LayerSpec::BatchNorm2d { channels } => NodeState::BatchNorm(BatchNorm2d::new(*channels)),
            LayerSpec::GroupAffineNorm { groups, .. } => {
                NodeState::GroupNorm(GroupAffineNorm::new(*groups))
            }
            LayerSpec::Activation { kind } => NodeState::Act(Activation::new(*kind)),
            LayerSpec::MaxPool2d {
                kernel,
                stride,
                rounding,
            } => NodeState::Pool(MaxPool2d::new(*kernel, *stride, *rounding)),
            LayerSpec::Gmlp { cfg } => NodeState::Gmlp(GmlpMap {
                block: GmlpBlock::init(*cfg, rng)?,
                h: node.out_shape.1,
                w: node.out_shape.2,
            }),
            LayerSpec::Fire { cfg } => NodeState::Fire(Fire::init(*cfg, rng)),
            LayerSpec::ClassifierHead {
                c_in,
                classes,
                norm,
                act,
            } => NodeState::Head(Head::init(*c_in, *classes, *norm, *act, rng)),
            LayerSpec::GlobalAvgPool => NodeState::GlobalAvg(GlobalAvgPool::new()),
        })
    }

    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        match self {
            NodeState::Conv(l) => l.forward(x),
            NodeState::BatchNorm(l) => l.forward(x, mode),
            NodeState::GroupNorm(l) => l.forward(x),
            NodeState::Act(l) => l.forward(x),
            NodeState::Pool(l) => l.forward(x),
            NodeState::Gmlp(g) => {
                let tokens = tokens_from_map(x)?;
                let out = g.block.forward(&tokens)?;
                map_from_tokens(&out, g.h, g.w)
            }
            NodeState::Fire(l) => l.forward(x, mode),
            NodeState::Head(l) => l.forward(x, mode),
            NodeState::GlobalAvg(l) => l.forward(x),
        }
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            NodeState::Conv(l) => l.backward(dy),
            NodeState::BatchNorm(l) => l.backward(dy),
            NodeState::GroupNorm(l) => l.backward(dy),
            NodeState::Act(l) => l.backward(dy),
            NodeState::Pool(l) => l.backward(dy),
            NodeState::Gmlp(g) => {
                let dtok = tokens_from_map(dy)?;
                let dx = g.block.backward(&dtok)?;
                map_from_tokens(&dx, g.h, g.w)
            }
            NodeState::Fire(l) => l.backward(dy),
            NodeState::Head(l) => l.backward(dy),
            NodeState::GlobalAvg(l) => l.backward(dy),
        }
    }

    fn zero_grads(&mut self) {
        match self {
            NodeState::Conv(l) => l.zero_grads(),
            NodeState::BatchNorm(l) => l.zero_grads(),
            NodeState::GroupNorm(l) => l.zero_grads(),
            NodeState::Gmlp(g) => g.block.zero_grads(),
            NodeState::Fire(l) => l.zero_grads(),
            NodeState::Head(h) => {
                h.conv.zero_grads();
                if let Some(bn) = &mut h.bn {
                    bn.zero_grads();
                }
            }
            _ => {}
        }
    }

    fn visit_params(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(String, &mut Tensor<T>, &mut Tensor<T>),
    ) {
        match self {
            NodeState::Conv(l) => l.visit_params(prefix, f),
            NodeState::BatchNorm(l) => l.visit_params(prefix, f),
            NodeState::GroupNorm(l) => l.visit_params(prefix, f),
            NodeState::Gmlp(g) => g.block.visit_params(prefix, f),
            NodeState::Fire(l) => l.visit_params(prefix, f),
            NodeState::Head(h) => {
                h.conv.visit_params(prefix, f);
                if let Some(bn) = &mut h.bn {
                    bn.visit_params(&format!("{prefix}.norm"), f);
                }
            }
            _ => {}
        }
    }

    fn visit_state(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        match self {
            NodeState::BatchNorm(l) => l.visit_state(prefix, f),
            NodeState::Fire(l) => l.visit_state(prefix, f),
            NodeState::Head(h) => {
                if let Some(bn) = &mut h.bn {
                    bn.visit_state(&format!("{prefix}.norm"), f);
                }
            }
            _ => {}
        }
    }

    fn set_stats_ready(&mut self) {
        match self {
            NodeState::BatchNorm(l) => l.set_stats_ready(),
            NodeState::Fire(l) => l.set_stats_ready(),
            NodeState::Head(h) => {
                if let Some(bn) = &mut h.bn {
                    bn.set_stats_ready();
                }
            }
            _ => {}
        }
    }
}

/// A graph plus instantiated per-node layer state.
pub struct Model<T: Scalar> {
    pub graph: ModelGraph,
    nodes: Vec<NodeState<T>>,
}

impl<T: Scalar> Model<T> {
    /// Instantiates all parameters from one seed; two inits with the same
    /// seed are bit-identical.
    pub fn init(graph: ModelGraph, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nodes = graph
            .nodes
            .iter()
            .map(|n| NodeState::instantiate(n, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { graph, nodes })
    }

    /// Forward pass NCHW → logits `(N, classes)`. Every node output is shape-
    /// asserted against the graph and checked finite.
    pub fn forward(&mut self, batch: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        if batch.rank() != 4 {
            return Err(Error::dim("model forward expects an NCHW batch"));
        }
        let (c, h, w) = self.graph.input_shape;
        if batch.shape()[1..] != [c, h, w] {
            return Err(Error::dim(format!(
                "batch shape {:?} vs model input {:?}",
                batch.shape(),
                (c, h, w)
            )));
        }
        let n = batch.shape()[0];
        let mut x = batch.clone();
        for (node, state) in self.graph.nodes.iter().zip(self.nodes.iter_mut()) {
            let y = state.forward(&x, mode).map_err(|e| match e {
                Error::Dimension(m) => Error::Dimension(format!("node '{}': {m}", node.name)),
                other => other,
            })?;
            let (ec, eh, ew) = node.out_shape;
            let ok = match y.rank() {
                4 => y.shape() == [n, ec, eh, ew],
                2 => y.shape() == [n, ec] && eh == 1 && ew == 1,
                _ => false,
            };
            if !ok {
                return Err(Error::dim(format!(
                    "node '{}': output shape {:?}, expected ({ec},{eh},{ew})",
                    node.name,
                    y.shape()
                )));
            }
            if !y.all_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite values after node '{}'",
                    node.name
                )));
            }
            x = y;
        }
        Ok(x)
    }

    /// Accumulates parameter gradients from `dlogits`. Requires a preceding
    /// train-mode forward on the same batch.
    pub fn backward(&mut self, dlogits: &Tensor<T>) -> Result<()> {
        let mut d = dlogits.clone();
        for (node, state) in self
            .graph
            .nodes
            .iter()
            .zip(self.nodes.iter_mut())
            .rev()
        {
            d = state.backward(&d).map_err(|e| match e {
                Error::State(m) => Error::State(format!("node '{}': {m}", node.name)),
                other => other,
            })?;
            if !d.all_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite gradient below node '{}'",
                    node.name
                )));
            }
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for s in &mut self.nodes {
            s.zero_grads();
        }
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(String, &mut Tensor<T>, &mut Tensor<T>)) {
        for (node, state) in self.graph.nodes.iter().zip(self.nodes.iter_mut()) {
            state.visit_params(&node.name, f);
        }
    }

    /// Non-learnable state (batch-norm running statistics).
    pub fn visit_state(&mut self, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        for (node, state) in self.graph.nodes.iter().zip(self.nodes.iter_mut()) {
            state.visit_state(&node.name, f);
        }
    }

    /// Marks all running statistics usable (called after a checkpoint load).
    pub fn mark_stats_ready(&mut self) {
        for s in &mut self.nodes {
            s.set_stats_ready();
        }
    }

    /// Allocated learnable scalars, summed over nodes.
    pub fn param_count(&mut self) -> usize {
        let mut total = 0usize;
        self.visit_params(&mut |_, t, _| total += t.len());
        total
    }

    /// Allocated learnable scalars per node, for the formula cross-check.
    pub fn node_param_counts(&mut self) -> Vec<(String, usize)> {
        let mut out = Vec::new();
        for (node, state) in self.graph.nodes.iter().zip(self.nodes.iter_mut()) {
            let mut count = 0usize;
            state.visit_params(&node.name, &mut |_, t, _| count += t.len());
            out.push((node.name.clone(), count));
        }
        out
    }
}
