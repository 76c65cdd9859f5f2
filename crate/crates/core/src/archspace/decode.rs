use alloc::vec;
use alloc::vec::Vec;

use super::graph::{infer_node_shape, FeatureShape, LayerKind, LayerSpec, Node};
use super::space::{HyperparamVector, SearchSpaceDef, TaskShape, GROUP_COUNT};
use super::template::{Channels, Pattern};
use super::{ArchitectureGraph, DecodeError, Dims};

/// Instantiates the baseline selected by `x`: stem, four groups of
/// `1 + group_depth[g]` superblocks, classifier.
///
/// The group's kernel gene is applied to every conv marked `first`; its stride
/// only to the first such conv of the group's first superblock, and a stride of
/// 2 is dropped when the strided extent is already 1.
pub fn decode(
    x: &HyperparamVector,
    space: &SearchSpaceDef,
    task: &TaskShape,
) -> Result<ArchitectureGraph, DecodeError> {
    x.validate(space)?;
    let template = &space.baselines[x.architecture];
    template.check()?;
    if template.dims != task.dims {
        return Err(DecodeError::DimsMismatch {
            template: template.id.clone(),
            template_dims: template.dims,
            task_dims: task.dims,
        });
    }
    let input = FeatureShape {
        channels: task.channels,
        height: if task.dims == Dims::One {
            1
        } else {
            task.spatial[0]
        },
        width: task.spatial[1],
    };
    let mut b = Builder {
        dims: task.dims,
        input,
        width: x.width_multiplier,
        nodes: Vec::new(),
        shapes: Vec::new(),
    };

    let mut cur = None;
    let mut stem_ctx = BlockCtx::stem();
    cur = b.emit_seq(&template.stem, cur, &mut stem_ctx)?;

    for g in 0..GROUP_COUNT {
        let ks = x.kernel_stride_of(space, g);
        for s in 0..=x.group_depth[g] {
            let mut ctx = BlockCtx {
                group: Some(g),
                group_channels: template.group_channels[g],
                gene_kernel: Some(ks.kernel),
                pending_stride: if s == 0 { ks.stride } else { 1 },
                num_classes: None,
            };
            cur = b.emit_seq(&template.superblock, cur, &mut ctx)?;
            let out = cur.expect("superblock emits at least one layer");
            b.nodes[out].tap = true;
        }
    }

    let mut head_ctx = BlockCtx::stem();
    head_ctx.num_classes = Some(task.num_classes);
    cur = b.emit_seq(&template.classifier, cur, &mut head_ctx)?;
    debug_assert!(cur.is_some());

    let graph = ArchitectureGraph {
        template_id: template.id.clone(),
        dims: task.dims,
        input,
        num_classes: task.num_classes,
        nodes: b.nodes,
    };
    graph.validate().map_err(DecodeError::Invalid)?;
    Ok(graph)
}

struct BlockCtx {
    group: Option<usize>,
    group_channels: usize,
    gene_kernel: Option<usize>,
    /// Stride still to be placed on the next `first` conv.
    pending_stride: usize,
    num_classes: Option<usize>,
}

impl BlockCtx {
    fn stem() -> Self {
        Self {
            group: None,
            group_channels: 0,
            gene_kernel: None,
            pending_stride: 1,
            num_classes: None,
        }
    }
}

struct Builder {
    dims: Dims,
    input: FeatureShape,
    width: f64,
    nodes: Vec<Node>,
    shapes: Vec<FeatureShape>,
}

/// Width-scaled channel count: `max(4, round(width * base))`.
pub(crate) fn scale_channels(width: f64, base: usize) -> usize {
    (libm::round(width * base as f64) as usize).max(4)
}

impl Builder {
    fn shape(&self, src: Option<usize>) -> FeatureShape {
        src.map_or(self.input, |i| self.shapes[i])
    }

    fn push(
        &mut self,
        layer: LayerSpec,
        inputs: Vec<usize>,
        group: Option<usize>,
    ) -> Result<usize, DecodeError> {
        let id = self.nodes.len();
        let mut node = Node::new(layer, inputs);
        node.group = group;
        let shape = infer_node_shape(self.dims, self.input, id, &node, &self.shapes)
            .map_err(|_| DecodeError::ShapeCollapse { layer: id })?;
        self.nodes.push(node);
        self.shapes.push(shape);
        Ok(id)
    }

    fn inputs(src: Option<usize>) -> Vec<usize> {
        src.into_iter().collect()
    }

    /// Drops stride 2 when the strided extent is already 1.
    fn clamp_stride(&self, src: Option<usize>, stride: usize) -> usize {
        let s = self.shape(src);
        let collapsed = match self.dims {
            Dims::One => s.width < 2,
            Dims::Two => s.width < 2 || s.height < 2,
        };
        if stride > 1 && collapsed {
            1
        } else {
            stride
        }
    }

    fn base_channels(&self, ch: Channels, ctx: &BlockCtx) -> usize {
        match ch {
            Channels::Abs(c) => c,
            Channels::Ratio(r) => (libm::round(r * ctx.group_channels as f64) as usize).max(1),
        }
    }

    fn gene_geometry(
        &self,
        first: bool,
        kernel: usize,
        stride: usize,
        ctx: &mut BlockCtx,
    ) -> (usize, usize) {
        match (first, ctx.gene_kernel) {
            (true, Some(k)) => {
                let s = core::mem::replace(&mut ctx.pending_stride, 1);
                (k, s)
            }
            _ => (kernel, stride),
        }
    }

    fn emit_seq(
        &mut self,
        patterns: &[Pattern],
        mut cur: Option<usize>,
        ctx: &mut BlockCtx,
    ) -> Result<Option<usize>, DecodeError> {
        for p in patterns {
            cur = Some(self.emit(p, cur, ctx)?);
        }
        Ok(cur)
    }

    fn emit(
        &mut self,
        p: &Pattern,
        src: Option<usize>,
        ctx: &mut BlockCtx,
    ) -> Result<usize, DecodeError> {
        let c_in = self.shape(src).channels;
        let group = ctx.group;
        match *p {
            Pattern::Conv {
                channels,
                kernel,
                stride,
                first,
                bias,
            } => {
                let (k, s) = self.gene_geometry(first, kernel, stride, ctx);
                let s = self.clamp_stride(src, s);
                let out = scale_channels(self.width, self.base_channels(channels, ctx));
                let layer = LayerSpec::conv(c_in, out, k, s).with_bias(bias);
                self.push(layer, Self::inputs(src), group)
            }
            Pattern::DwConv {
                kernel,
                stride,
                first,
            } => {
                let (k, s) = self.gene_geometry(first, kernel, stride, ctx);
                let s = self.clamp_stride(src, s);
                self.push(LayerSpec::depthwise(c_in, k, s), Self::inputs(src), group)
            }
            Pattern::BatchNorm => self.push(
                LayerSpec::elementwise(LayerKind::BatchNorm, c_in),
                Self::inputs(src),
                group,
            ),
            Pattern::Relu => self.push(
                LayerSpec::elementwise(LayerKind::Relu, c_in),
                Self::inputs(src),
                group,
            ),
            Pattern::MaxPool { kernel, stride } => {
                let s = self.clamp_stride(src, stride);
                self.push(
                    LayerSpec::max_pool(c_in, kernel, s),
                    Self::inputs(src),
                    group,
                )
            }
            Pattern::GlobalAvgPool => self.push(
                LayerSpec::elementwise(LayerKind::GlobalAvgPool, c_in),
                Self::inputs(src),
                group,
            ),
            Pattern::Linear { bias } => {
                let out = ctx.num_classes.unwrap_or(c_in);
                self.push(
                    LayerSpec::linear(c_in, out).with_bias(bias),
                    Self::inputs(src),
                    group,
                )
            }
            Pattern::Residual {
                ref body,
                projection,
            } => {
                let x = self.shape(src);
                let body_out = self
                    .emit_seq(body, src, ctx)?
                    .expect("residual body is non-empty");
                let y = self.shapes[body_out];
                let skip = if (x.height, x.width, x.channels) == (y.height, y.width, y.channels) {
                    match src {
                        Some(s) => Some(s),
                        // The network input cannot feed a skip.
                        None => return Ok(body_out),
                    }
                } else if projection {
                    let stride = if (x.height, x.width) == (y.height, y.width) {
                        1
                    } else {
                        2
                    };
                    let proj = self.push(
                        LayerSpec::conv(x.channels, y.channels, 1, stride),
                        Self::inputs(src),
                        group,
                    )?;
                    let bn = self.push(
                        LayerSpec::elementwise(LayerKind::BatchNorm, y.channels),
                        vec![proj],
                        group,
                    )?;
                    if self.shapes[bn] != y {
                        return Err(DecodeError::ShapeCollapse { layer: bn });
                    }
                    Some(bn)
                } else {
                    None
                };
                match skip {
                    Some(s) => self.push(
                        LayerSpec::elementwise(LayerKind::Add, y.channels),
                        vec![body_out, s],
                        group,
                    ),
                    None => Ok(body_out),
                }
            }
            Pattern::Concat { ref branches } => {
                let mut outs = Vec::with_capacity(branches.len());
                for branch in branches {
                    let o = self
                        .emit_seq(branch, src, ctx)?
                        .unwrap_or_else(|| src.expect("empty concat branch needs a producer"));
                    outs.push(o);
                }
                let total = outs.iter().map(|&o| self.shapes[o].channels).sum();
                self.push(LayerSpec::concat(c_in, total), outs, group)
            }
        }
    }
}
