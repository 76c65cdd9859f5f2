use alloc::vec;
use alloc::vec::Vec;

use super::kernels::{self, Window};
use super::{weight_shape, ParamSet, Tensor, TensorError};
use crate::archspace::{ArchitectureGraph, Dims, FeatureShape, LayerKind};

/// Inference-mode BatchNorm scale `1 / sqrt(running_var + eps)` with unit variance.
const BN_SCALE: f64 = 0.999_995_000_037_499_7; // 1 / sqrt(1 + 1e-5)

/// Binary activation pattern of one ReLU layer: `pre-activation > 0`, laid out
/// `[batch, channels * height * width]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReluPattern {
    pub node: usize,
    pub active: Vec<bool>,
}

impl ReluPattern {
    pub fn sample(&self, batch: usize, i: usize) -> &[bool] {
        let per = self.active.len() / batch;
        &self.active[i * per..(i + 1) * per]
    }
}

#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub input: Tensor,
    /// Output of every node, `[batch, C, H, W]`.
    pub outputs: Vec<Tensor>,
    pub relu_patterns: Vec<ReluPattern>,
    /// `[batch, classes]`.
    pub logits: Tensor,
    shapes: Vec<FeatureShape>,
    argmax: Vec<Option<Vec<usize>>>,
}

impl ForwardTrace {
    pub fn batch_size(&self) -> usize {
        self.input.shape()[0]
    }

    pub fn shape(&self, node: usize) -> FeatureShape {
        self.shapes[node]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
}

/// Gradients of the loss with respect to every parameter, keyed by node id.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientRecord {
    pub layers: Vec<Option<LayerGrads>>,
    pub loss: f64,
}

impl GradientRecord {
    fn zeros(params: &ParamSet) -> Self {
        let layers = params
            .layers
            .iter()
            .map(|p| {
                p.as_ref().map(|p| LayerGrads {
                    weight: Tensor::zeros(p.weight.shape()),
                    bias: p.bias.as_ref().map(|b| Tensor::zeros(b.shape())),
                })
            })
            .collect();
        Self { layers, loss: 0.0 }
    }

    pub fn get(&self, node: usize) -> Option<&LayerGrads> {
        self.layers.get(node).and_then(Option::as_ref)
    }
}

fn window(
    dims: Dims,
    input: &FeatureShape,
    output: &FeatureShape,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Window {
    let (kh, sh, ph) = match dims {
        Dims::One => (1, 1, 0),
        Dims::Two => (kernel, stride, padding),
    };
    Window {
        h: input.height,
        w: input.width,
        oh: output.height,
        ow: output.width,
        kh,
        kw: kernel,
        sh,
        sw: stride,
        ph,
        pw: padding,
    }
}

fn check_params(g: &ArchitectureGraph, params: &ParamSet) -> Result<(), TensorError> {
    if params.layers.len() != g.nodes.len() {
        return Err(TensorError::ParamMismatch(
            params.layers.len().min(g.nodes.len()),
        ));
    }
    for (i, node) in g.nodes.iter().enumerate() {
        let ok = match (node.layer.kind.has_params(), params.get(i)) {
            (false, None) => true,
            (true, Some(p)) => {
                p.weight.shape() == weight_shape(g, i).as_slice()
                    && p.bias.as_ref().map(|b| b.shape().to_vec())
                        == node.layer.bias.then(|| vec![node.layer.out_channels])
            }
            _ => false,
        };
        if !ok {
            return Err(TensorError::ParamMismatch(i));
        }
    }
    Ok(())
}

fn check_batch(g: &ArchitectureGraph, batch: &Tensor) -> Result<usize, TensorError> {
    let s = batch.shape();
    let n = s.first().copied().unwrap_or(0);
    let i = g.input;
    let ok = n >= 1
        && match g.dims {
            Dims::Two => s == [n, i.channels, i.height, i.width],
            Dims::One => s == [n, i.channels, i.width] || s == [n, i.channels, 1, i.width],
        };
    if ok {
        Ok(n)
    } else {
        let expected = match g.dims {
            Dims::Two => vec![n.max(1), i.channels, i.height, i.width],
            Dims::One => vec![n.max(1), i.channels, i.width],
        };
        Err(TensorError::ShapeMismatch {
            expected,
            got: s.to_vec(),
        })
    }
}

pub fn forward(
    g: &ArchitectureGraph,
    params: &ParamSet,
    batch: &Tensor,
) -> Result<ForwardTrace, TensorError> {
    let shapes = g.shapes().map_err(|_| TensorError::InvalidGraph)?;
    check_params(g, params)?;
    let n = check_batch(g, batch)?;

    let mut outputs: Vec<Tensor> = Vec::with_capacity(g.nodes.len());
    let mut relu_patterns = Vec::new();
    let mut argmax = vec![None; g.nodes.len()];

    for (id, node) in g.nodes.iter().enumerate() {
        let l = &node.layer;
        let out_shape = shapes[id];
        let in_shape = node.inputs.first().map_or(g.input, |&j| shapes[j]);
        let x: &[f64] = node
            .inputs
            .first()
            .map_or(batch.data(), |&j| outputs[j].data());
        let (ip, op) = (in_shape.numel(), out_shape.numel());
        let mut y = vec![0.0; n * op];
        match l.kind {
            LayerKind::Conv | LayerKind::DepthwiseConv => {
                let p = params.get(id).expect("checked");
                let win = window(g.dims, &in_shape, &out_shape, l.kernel, l.stride, l.padding);
                let bias = p.bias.as_ref().map(Tensor::data);
                for s in 0..n {
                    kernels::conv_forward(
                        &win,
                        l.in_channels,
                        l.out_channels,
                        l.kind == LayerKind::DepthwiseConv,
                        &x[s * ip..(s + 1) * ip],
                        p.weight.data(),
                        bias,
                        &mut y[s * op..(s + 1) * op],
                    );
                }
            }
            LayerKind::Linear => {
                let p = params.get(id).expect("checked");
                let bias = p.bias.as_ref().map(Tensor::data);
                for s in 0..n {
                    kernels::linear_forward(
                        l.in_channels,
                        l.out_channels,
                        &x[s * ip..(s + 1) * ip],
                        p.weight.data(),
                        bias,
                        &mut y[s * op..(s + 1) * op],
                    );
                }
            }
            LayerKind::Relu => {
                let mut active = Vec::with_capacity(x.len());
                for (yv, &xv) in y.iter_mut().zip(x) {
                    let on = xv > 0.0;
                    active.push(on);
                    *yv = if on { xv } else { 0.0 };
                }
                relu_patterns.push(ReluPattern { node: id, active });
            }
            LayerKind::BatchNorm => {
                for (yv, &xv) in y.iter_mut().zip(x) {
                    *yv = xv * BN_SCALE;
                }
            }
            LayerKind::MaxPool => {
                let win = window(g.dims, &in_shape, &out_shape, l.kernel, l.stride, l.padding);
                let mut idx = vec![0usize; n * op];
                for s in 0..n {
                    kernels::max_pool_forward(
                        &win,
                        l.in_channels,
                        &x[s * ip..(s + 1) * ip],
                        &mut y[s * op..(s + 1) * op],
                        &mut idx[s * op..(s + 1) * op],
                    );
                }
                argmax[id] = Some(idx);
            }
            LayerKind::GlobalAvgPool => {
                let plane = in_shape.spatial();
                for (o, chunk) in y.iter_mut().zip(x.chunks_exact(plane)) {
                    *o = chunk.iter().sum::<f64>() / plane as f64;
                }
            }
            LayerKind::Add => {
                for &j in &node.inputs {
                    for (yv, xv) in y.iter_mut().zip(outputs[j].data()) {
                        *yv += xv;
                    }
                }
            }
            LayerKind::Concat => {
                let mut offset = 0;
                for &j in &node.inputs {
                    let part = shapes[j].numel();
                    let src = outputs[j].data();
                    for s in 0..n {
                        y[s * op + offset..s * op + offset + part]
                            .copy_from_slice(&src[s * part..(s + 1) * part]);
                    }
                    offset += part;
                }
            }
        }
        outputs.push(Tensor {
            shape: vec![n, out_shape.channels, out_shape.height, out_shape.width],
            data: y,
        });
    }

    let last = outputs.last().expect("graph is non-empty");
    let logits = Tensor {
        shape: vec![n, g.num_classes],
        data: last.data().to_vec(),
    };
    Ok(ForwardTrace {
        input: batch.clone(),
        outputs,
        relu_patterns,
        logits,
        shapes,
        argmax,
    })
}

/// Per-sample cross-entropy and `softmax - onehot` on the logits.
fn softmax_ce(logits: &[f64], label: usize, grad: &mut [f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|z| libm::exp(z - max)).sum();
    let lse = max + libm::log(sum);
    for (c, (g, z)) in grad.iter_mut().zip(logits).enumerate() {
        *g = libm::exp(z - lse) - if c == label { 1.0 } else { 0.0 };
    }
    lse - logits[label]
}

fn check_labels(g: &ArchitectureGraph, labels: &[usize], n: usize) -> Result<(), TensorError> {
    if labels.len() != n {
        return Err(TensorError::LabelCount {
            labels: labels.len(),
            batch: n,
        });
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= g.num_classes) {
        return Err(TensorError::LabelOutOfRange {
            label,
            classes: g.num_classes,
        });
    }
    Ok(())
}

pub fn mean_cross_entropy(
    g: &ArchitectureGraph,
    params: &ParamSet,
    batch: &Tensor,
    labels: &[usize],
) -> Result<f64, TensorError> {
    let trace = forward(g, params, batch)?;
    let n = trace.batch_size();
    check_labels(g, labels, n)?;
    let k = g.num_classes;
    let mut scratch = vec![0.0; k];
    let total: f64 = (0..n)
        .map(|s| {
            softmax_ce(
                &trace.logits.data()[s * k..(s + 1) * k],
                labels[s],
                &mut scratch,
            )
        })
        .sum();
    Ok(total / n as f64)
}

/// Gradients of `mean cross-entropy(softmax(logits), labels)`.
pub fn backward(
    g: &ArchitectureGraph,
    params: &ParamSet,
    batch: &Tensor,
    labels: &[usize],
) -> Result<GradientRecord, TensorError> {
    backward_scaled(g, params, batch, labels, 1.0)
}

/// Gradients of `loss_scale * mean cross-entropy`.
pub fn backward_scaled(
    g: &ArchitectureGraph,
    params: &ParamSet,
    batch: &Tensor,
    labels: &[usize],
    loss_scale: f64,
) -> Result<GradientRecord, TensorError> {
    let trace = forward(g, params, batch)?;
    let mut records = backward_from_trace(g, params, &trace, labels, Mode::Mean(loss_scale))?;
    Ok(records.pop().expect("one record in mean mode"))
}

/// One gradient record per sample, each computed as a batch of size 1.
pub fn per_sample_gradients(
    g: &ArchitectureGraph,
    params: &ParamSet,
    batch: &Tensor,
    labels: &[usize],
) -> Result<Vec<GradientRecord>, TensorError> {
    let n = check_batch(g, batch)?;
    check_labels(g, labels, n)?;
    (0..n)
        .map(|s| backward(g, params, &batch.sample(s), &labels[s..s + 1]))
        .collect()
}

/// Per-sample gradients from an existing batch trace. Samples never interact in
/// this engine, so this equals [`per_sample_gradients`] without re-running the
/// forward pass.
pub fn per_sample_gradients_from_trace(
    g: &ArchitectureGraph,
    params: &ParamSet,
    trace: &ForwardTrace,
    labels: &[usize],
) -> Result<Vec<GradientRecord>, TensorError> {
    backward_from_trace(g, params, trace, labels, Mode::PerSample)
}

#[derive(Clone, Copy)]
enum Mode {
    Mean(f64),
    PerSample,
}

fn accumulate(dst: &mut Option<Vec<f64>>, len: usize) -> &mut [f64] {
    dst.get_or_insert_with(|| vec![0.0; len])
}

fn backward_from_trace(
    g: &ArchitectureGraph,
    params: &ParamSet,
    trace: &ForwardTrace,
    labels: &[usize],
    mode: Mode,
) -> Result<Vec<GradientRecord>, TensorError> {
    check_params(g, params)?;
    let n = trace.batch_size();
    check_labels(g, labels, n)?;
    let k = g.num_classes;

    let targets = match mode {
        Mode::Mean(_) => 1,
        Mode::PerSample => n,
    };
    let mut records: Vec<GradientRecord> = (0..targets)
        .map(|_| GradientRecord::zeros(params))
        .collect();
    let target = |s: usize| match mode {
        Mode::Mean(_) => 0,
        Mode::PerSample => s,
    };

    let mut grads: Vec<Option<Vec<f64>>> = vec![None; g.nodes.len()];
    let mut gz = vec![0.0; n * k];
    let mut total = 0.0;
    for s in 0..n {
        let loss = softmax_ce(
            &trace.logits.data()[s * k..(s + 1) * k],
            labels[s],
            &mut gz[s * k..(s + 1) * k],
        );
        total += loss;
        if let Mode::PerSample = mode {
            records[s].loss = loss;
        }
    }
    if let Mode::Mean(scale) = mode {
        records[0].loss = total / n as f64;
        let f = scale / n as f64;
        gz.iter_mut().for_each(|v| *v *= f);
    }
    grads[g.nodes.len() - 1] = Some(gz);

    for id in (0..g.nodes.len()).rev() {
        let Some(gy) = grads[id].take() else { continue };
        let node = &g.nodes[id];
        let l = &node.layer;
        let out_shape = trace.shapes[id];
        let in_shape = node.inputs.first().map_or(g.input, |&j| trace.shapes[j]);
        let x: &[f64] = node
            .inputs
            .first()
            .map_or(trace.input.data(), |&j| trace.outputs[j].data());
        let (ip, op) = (in_shape.numel(), out_shape.numel());
        let src = node.inputs.first().copied();

        match l.kind {
            LayerKind::Conv | LayerKind::DepthwiseConv | LayerKind::Linear => {
                let p = params.get(id).expect("checked");
                let mut gx_buf = src.map(|_| vec![0.0; n * ip]);
                for s in 0..n {
                    let rec = records[target(s)].layers[id].as_mut().expect("param layer");
                    let gw = rec.weight.data_mut();
                    let gb = rec.bias.as_mut().map(|b| b.data_mut());
                    let gx = gx_buf.as_mut().map(|b| &mut b[s * ip..(s + 1) * ip]);
                    let xs = &x[s * ip..(s + 1) * ip];
                    let gys = &gy[s * op..(s + 1) * op];
                    if l.kind == LayerKind::Linear {
                        kernels::linear_backward(
                            l.in_channels,
                            l.out_channels,
                            xs,
                            p.weight.data(),
                            gys,
                            gx,
                            gw,
                            gb,
                        );
                    } else {
                        let win =
                            window(g.dims, &in_shape, &out_shape, l.kernel, l.stride, l.padding);
                        kernels::conv_backward(
                            &win,
                            l.in_channels,
                            l.out_channels,
                            l.kind == LayerKind::DepthwiseConv,
                            xs,
                            p.weight.data(),
                            gys,
                            gx,
                            gw,
                            gb,
                        );
                    }
                }
                if let (Some(j), Some(buf)) = (src, gx_buf) {
                    add_into(accumulate(&mut grads[j], n * ip), &buf);
                }
            }
            LayerKind::Relu => {
                if let Some(j) = src {
                    let dst = accumulate(&mut grads[j], n * ip);
                    for ((d, &gv), &xv) in dst.iter_mut().zip(&gy).zip(x) {
                        if xv > 0.0 {
                            *d += gv;
                        }
                    }
                }
            }
            LayerKind::BatchNorm => {
                if let Some(j) = src {
                    let dst = accumulate(&mut grads[j], n * ip);
                    for (d, &gv) in dst.iter_mut().zip(&gy) {
                        *d += gv * BN_SCALE;
                    }
                }
            }
            LayerKind::MaxPool => {
                if let Some(j) = src {
                    let idx = trace.argmax[id].as_ref().expect("recorded in forward");
                    let dst = accumulate(&mut grads[j], n * ip);
                    for s in 0..n {
                        for o in 0..op {
                            dst[s * ip + idx[s * op + o]] += gy[s * op + o];
                        }
                    }
                }
            }
            LayerKind::GlobalAvgPool => {
                if let Some(j) = src {
                    let plane = in_shape.spatial();
                    let dst = accumulate(&mut grads[j], n * ip);
                    for (chunk, &gv) in dst.chunks_exact_mut(plane).zip(&gy) {
                        let share = gv / plane as f64;
                        chunk.iter_mut().for_each(|d| *d += share);
                    }
                }
            }
            LayerKind::Add => {
                for &j in &node.inputs {
                    add_into(accumulate(&mut grads[j], n * op), &gy);
                }
            }
            LayerKind::Concat => {
                let mut offset = 0;
                for &j in &node.inputs {
                    let part = trace.shapes[j].numel();
                    let dst = accumulate(&mut grads[j], n * part);
                    for s in 0..n {
                        add_into(
                            &mut dst[s * part..(s + 1) * part],
                            &gy[s * op + offset..s * op + offset + part],
                        );
                    }
                    offset += part;
                }
            }
        }
    }
    Ok(records)
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
