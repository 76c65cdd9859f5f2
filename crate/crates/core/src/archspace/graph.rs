use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

/// Spatial rank of a network: time series (1D) or images (2D).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dims {
    #[serde(rename = "1d")]
    One,
    #[serde(rename = "2d")]
    Two,
}

impl Dims {
    pub fn rank(self) -> u32 {
        match self {
            Dims::One => 1,
            Dims::Two => 2,
        }
    }

    /// Kernel extent along (height, width).
    pub fn kernel_hw(self, kernel: usize) -> (usize, usize) {
        match self {
            Dims::One => (1, kernel),
            Dims::Two => (kernel, kernel),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    Conv,
    DepthwiseConv,
    Linear,
    Relu,
    BatchNorm,
    MaxPool,
    GlobalAvgPool,
    Add,
    Concat,
}

impl LayerKind {
    pub fn has_params(self) -> bool {
        matches!(
            self,
            LayerKind::Conv | LayerKind::DepthwiseConv | LayerKind::Linear
        )
    }

    /// Kernel-windowed layers whose geometry follows kernel/stride/padding.
    pub fn is_windowed(self) -> bool {
        matches!(
            self,
            LayerKind::Conv | LayerKind::DepthwiseConv | LayerKind::MaxPool
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub bias: bool,
}

impl LayerSpec {
    pub fn conv(in_channels: usize, out_channels: usize, kernel: usize, stride: usize) -> Self {
        Self {
            kind: LayerKind::Conv,
            in_channels,
            out_channels,
            kernel,
            stride,
            padding: kernel / 2,
            bias: false,
        }
    }

    pub fn depthwise(channels: usize, kernel: usize, stride: usize) -> Self {
        Self {
            kind: LayerKind::DepthwiseConv,
            in_channels: channels,
            out_channels: channels,
            kernel,
            stride,
            padding: kernel / 2,
            bias: false,
        }
    }

    pub fn linear(in_features: usize, out_features: usize) -> Self {
        Self {
            kind: LayerKind::Linear,
            in_channels: in_features,
            out_channels: out_features,
            kernel: 1,
            stride: 1,
            padding: 0,
            bias: true,
        }
    }

    pub fn max_pool(channels: usize, kernel: usize, stride: usize) -> Self {
        Self {
            kind: LayerKind::MaxPool,
            in_channels: channels,
            out_channels: channels,
            kernel,
            stride,
            padding: kernel / 2,
            bias: false,
        }
    }

    /// Channel-preserving, parameter-free layer (ReLU, BatchNorm, pooling, add).
    pub fn elementwise(kind: LayerKind, channels: usize) -> Self {
        Self {
            kind,
            in_channels: channels,
            out_channels: channels,
            kernel: 1,
            stride: 1,
            padding: 0,
            bias: false,
        }
    }

    pub fn concat(in_channels: usize, out_channels: usize) -> Self {
        Self {
            out_channels,
            ..Self::elementwise(LayerKind::Concat, in_channels)
        }
    }

    pub fn with_bias(mut self, bias: bool) -> Self {
        self.bias = bias;
        self
    }
}

/// A layer plus its position in the DAG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub layer: LayerSpec,
    /// Producer node ids. Empty means the node reads the network input.
    pub inputs: Vec<usize>,
    /// Backbone group the node belongs to; `None` for stem and classifier.
    pub group: Option<usize>,
    /// Marks the output of a superblock.
    pub tap: bool,
}

impl Node {
    pub fn new(layer: LayerSpec, inputs: Vec<usize>) -> Self {
        Self {
            layer,
            inputs,
            group: None,
            tap: false,
        }
    }
}

/// Channels and spatial extent of one activation (batch dimension excluded).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl FeatureShape {
    pub fn numel(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn spatial(&self) -> usize {
        self.height * self.width
    }
}

/// A layer DAG whose node list is in execution (topological) order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureGraph {
    pub template_id: String,
    pub dims: Dims,
    pub input: FeatureShape,
    pub num_classes: usize,
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Empty,
    NotAcyclic,
    /// Node order is not a topological order.
    NotTopological {
        node: usize,
    },
    DanglingInput {
        node: usize,
        input: usize,
    },
    InputNodes(usize),
    OutputNodes(usize),
    Arity {
        node: usize,
    },
    ChannelMismatch {
        node: usize,
    },
    SpatialMismatch {
        node: usize,
    },
    SpatialCollapse {
        node: usize,
    },
    ZeroChannels {
        node: usize,
    },
    EvenKernel {
        node: usize,
    },
    BadStride {
        node: usize,
    },
    LinearNeedsFlatInput {
        node: usize,
    },
    ClassCount,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "empty graph"),
            Violation::NotAcyclic => write!(f, "not acyclic"),
            Violation::NotTopological { node } => {
                write!(f, "node {node} precedes one of its inputs")
            }
            Violation::DanglingInput { node, input } => {
                write!(f, "node {node} reads missing node {input}")
            }
            Violation::InputNodes(n) => write!(f, "expected one input node, found {n}"),
            Violation::OutputNodes(n) => write!(f, "expected one output node, found {n}"),
            Violation::Arity { node } => write!(f, "wrong number of inputs at node {node}"),
            Violation::ChannelMismatch { node } => write!(f, "channel mismatch at node {node}"),
            Violation::SpatialMismatch { node } => write!(f, "spatial mismatch at node {node}"),
            Violation::SpatialCollapse { node } => write!(f, "spatial collapse at node {node}"),
            Violation::ZeroChannels { node } => write!(f, "zero channels at node {node}"),
            Violation::EvenKernel { node } => write!(f, "even kernel at node {node}"),
            Violation::BadStride { node } => write!(f, "stride not in {{1, 2}} at node {node}"),
            Violation::LinearNeedsFlatInput { node } => {
                write!(f, "linear layer {node} needs a 1x1 spatial input")
            }
            Violation::ClassCount => write!(f, "output width differs from class count"),
        }
    }
}

/// Output extent of a windowed layer along one axis, `None` on collapse.
pub(crate) fn window_out(
    size: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Option<usize> {
    let padded = size + 2 * padding;
    if padded < kernel || stride == 0 {
        None
    } else {
        Some((padded - kernel) / stride + 1)
    }
}

impl ArchitectureGraph {
    pub fn output_node(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Ids of superblock outputs.
    pub fn taps(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| self.nodes[i].tap)
            .collect()
    }

    /// Per-node output shapes. Fails on the first inconsistency; use
    /// [`validate`](Self::validate) for a full report.
    pub fn shapes(&self) -> Result<Vec<FeatureShape>, Violation> {
        let mut shapes: Vec<FeatureShape> = Vec::with_capacity(self.nodes.len());
        for (id, node) in self.nodes.iter().enumerate() {
            let shape = self.node_shape(id, node, &shapes)?;
            shapes.push(shape);
        }
        Ok(shapes)
    }

    fn node_shape(
        &self,
        id: usize,
        node: &Node,
        done: &[FeatureShape],
    ) -> Result<FeatureShape, Violation> {
        infer_node_shape(self.dims, self.input, id, node, done)
    }

    /// Checks every structural invariant and returns all violations found.
    pub fn validate(&self) -> Result<(), Vec<Violation>> {
        let n = self.nodes.len();
        if n == 0 {
            return Err(vec![Violation::Empty]);
        }
        let mut violations = Vec::new();
        let mut dangling = false;
        for (id, node) in self.nodes.iter().enumerate() {
            for &i in &node.inputs {
                if i >= n {
                    violations.push(Violation::DanglingInput { node: id, input: i });
                    dangling = true;
                }
            }
        }
        if dangling {
            return Err(violations);
        }

        if !is_acyclic(&self.nodes) {
            violations.push(Violation::NotAcyclic);
            return Err(violations);
        }
        for (id, node) in self.nodes.iter().enumerate() {
            if node.inputs.iter().any(|&i| i >= id) {
                violations.push(Violation::NotTopological { node: id });
            }
        }

        let sources = self.nodes.iter().filter(|n| n.inputs.is_empty()).count();
        if sources != 1 {
            violations.push(Violation::InputNodes(sources));
        }
        let mut consumed = vec![false; n];
        for node in &self.nodes {
            for &i in &node.inputs {
                consumed[i] = true;
            }
        }
        let sinks = consumed.iter().filter(|c| !**c).count();
        if sinks != 1 || consumed[n - 1] {
            violations.push(Violation::OutputNodes(sinks));
        }
        if !violations.is_empty() {
            return Err(violations);
        }

        // Local checks continue past the first failure so every mismatch is
        // reported; a failed node keeps its declared output shape.
        let mut shapes: Vec<FeatureShape> = Vec::with_capacity(n);
        for (id, node) in self.nodes.iter().enumerate() {
            match self.node_shape(id, node, &shapes) {
                Ok(s) => shapes.push(s),
                Err(v) => {
                    violations.push(v);
                    let prev = node
                        .inputs
                        .first()
                        .map(|&i| shapes[i])
                        .unwrap_or(self.input);
                    shapes.push(FeatureShape {
                        channels: node.layer.out_channels.max(1),
                        height: prev.height.max(1),
                        width: prev.width.max(1),
                    });
                }
            }
        }
        let out = shapes[n - 1];
        if out.channels != self.num_classes || out.height != 1 || out.width != 1 {
            violations.push(Violation::ClassCount);
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(violations)
        }
    }

    pub fn param_layers(&self) -> impl Iterator<Item = (usize, &LayerSpec)> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.layer.kind.has_params())
            .map(|(i, n)| (i, &n.layer))
    }
}

/// Output shape of `node` given the shapes of all earlier nodes.
pub(crate) fn infer_node_shape(
    dims: Dims,
    net_input: FeatureShape,
    id: usize,
    node: &Node,
    done: &[FeatureShape],
) -> Result<FeatureShape, Violation> {
    let l = &node.layer;
    let ins: Vec<FeatureShape> = if node.inputs.is_empty() {
        vec![net_input]
    } else {
        let mut v = Vec::with_capacity(node.inputs.len());
        for &i in &node.inputs {
            if i >= id {
                return Err(Violation::NotTopological { node: id });
            }
            v.push(done[i]);
        }
        v
    };
    if l.in_channels == 0 || l.out_channels == 0 {
        return Err(Violation::ZeroChannels { node: id });
    }
    let multi = matches!(l.kind, LayerKind::Add | LayerKind::Concat);
    if multi != (ins.len() >= 2) {
        return Err(Violation::Arity { node: id });
    }
    let first = ins[0];
    match l.kind {
        LayerKind::Add => {
            if ins.iter().any(|s| s.channels != first.channels) {
                return Err(Violation::ChannelMismatch { node: id });
            }
            if ins
                .iter()
                .any(|s| (s.height, s.width) != (first.height, first.width))
            {
                return Err(Violation::SpatialMismatch { node: id });
            }
            if l.in_channels != first.channels || l.out_channels != first.channels {
                return Err(Violation::ChannelMismatch { node: id });
            }
            Ok(first)
        }
        LayerKind::Concat => {
            if ins
                .iter()
                .any(|s| (s.height, s.width) != (first.height, first.width))
            {
                return Err(Violation::SpatialMismatch { node: id });
            }
            let total: usize = ins.iter().map(|s| s.channels).sum();
            if l.out_channels != total {
                return Err(Violation::ChannelMismatch { node: id });
            }
            Ok(FeatureShape {
                channels: total,
                ..first
            })
        }
        _ => {
            if l.in_channels != first.channels {
                return Err(Violation::ChannelMismatch { node: id });
            }
            match l.kind {
                LayerKind::Linear => {
                    if first.height != 1 || first.width != 1 {
                        return Err(Violation::LinearNeedsFlatInput { node: id });
                    }
                    Ok(FeatureShape {
                        channels: l.out_channels,
                        height: 1,
                        width: 1,
                    })
                }
                LayerKind::GlobalAvgPool => Ok(FeatureShape {
                    channels: first.channels,
                    height: 1,
                    width: 1,
                }),
                LayerKind::Relu | LayerKind::BatchNorm => {
                    if l.out_channels != l.in_channels {
                        return Err(Violation::ChannelMismatch { node: id });
                    }
                    Ok(first)
                }
                _ => {
                    if l.kernel.is_multiple_of(2) {
                        return Err(Violation::EvenKernel { node: id });
                    }
                    if !(1..=2).contains(&l.stride) {
                        return Err(Violation::BadStride { node: id });
                    }
                    if l.kind != LayerKind::Conv && l.out_channels != l.in_channels {
                        return Err(Violation::ChannelMismatch { node: id });
                    }
                    let (kh, kw) = dims.kernel_hw(l.kernel);
                    let (sh, ph) = match dims {
                        Dims::One => (1, 0),
                        Dims::Two => (l.stride, l.padding),
                    };
                    let h = window_out(first.height, kh, sh, ph);
                    let w = window_out(first.width, kw, l.stride, l.padding);
                    match (h, w) {
                        (Some(height), Some(width)) if height >= 1 && width >= 1 => {
                            Ok(FeatureShape {
                                channels: l.out_channels,
                                height,
                                width,
                            })
                        }
                        _ => Err(Violation::SpatialCollapse { node: id }),
                    }
                }
            }
        }
    }
}

fn is_acyclic(nodes: &[Node]) -> bool {
    // Kahn's algorithm over producer -> consumer edges.
    let n = nodes.len();
    let mut indegree: Vec<usize> = nodes.iter().map(|node| node.inputs.len()).collect();
    let mut consumers: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (id, node) in nodes.iter().enumerate() {
        for &i in &node.inputs {
            consumers[i].push(id);
        }
    }
    let mut ready: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut seen = 0;
    while let Some(i) = ready.pop() {
        seen += 1;
        for &c in &consumers[i] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.push(c);
            }
        }
    }
    seen == n
}
