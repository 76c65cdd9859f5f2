//! Shared test fixtures: small random graphs and the finite-difference oracle.
#![allow(dead_code)]

use protonas_core::archspace::{ArchitectureGraph, Dims, FeatureShape, LayerKind, LayerSpec, Node};
use protonas_core::tensorcore::{self, forward, mean_cross_entropy, ParamSet, Tensor};
use rand::Rng;

pub fn graph(
    dims: Dims,
    input: FeatureShape,
    classes: usize,
    nodes: Vec<Node>,
) -> ArchitectureGraph {
    ArchitectureGraph {
        template_id: "fixture".to_string(),
        dims,
        input,
        num_classes: classes,
        nodes,
    }
}

/// A random graph with at most five parameterized layers and at most 2000
/// parameters, exercising every layer kind across draws.
pub fn random_small_graph<R: Rng>(rng: &mut R) -> ArchitectureGraph {
    loop {
        let g = try_random_graph(rng);
        let params = ParamSet::zeros(&g).count();
        if g.validate().is_ok() && params <= 2000 {
            return g;
        }
    }
}

fn try_random_graph<R: Rng>(rng: &mut R) -> ArchitectureGraph {
    let dims = if rng.random_bool(0.5) {
        Dims::Two
    } else {
        Dims::One
    };
    let cin = rng.random_range(1..=3);
    let input = match dims {
        Dims::Two => FeatureShape {
            channels: cin,
            height: rng.random_range(4..=7),
            width: rng.random_range(4..=7),
        },
        Dims::One => FeatureShape {
            channels: cin,
            height: 1,
            width: rng.random_range(6..=12),
        },
    };
    let classes = rng.random_range(2..=4);
    let mut nodes: Vec<Node> = Vec::new();
    let push = |nodes: &mut Vec<Node>, layer: LayerSpec, inputs: Vec<usize>| {
        nodes.push(Node::new(layer, inputs));
        nodes.len() - 1
    };
    let k = [1, 3, 5][rng.random_range(0..3)];
    let s = rng.random_range(1..=2);
    let c1 = rng.random_range(2..=5);
    let mut cur = push(
        &mut nodes,
        LayerSpec::conv(cin, c1, k, s).with_bias(rng.random_bool(0.5)),
        vec![],
    );
    let mut c = c1;
    match rng.random_range(0..3) {
        0 => {
            // conv -> relu -> dw -> bn -> maxpool
            cur = push(
                &mut nodes,
                LayerSpec::elementwise(LayerKind::Relu, c),
                vec![cur],
            );
            cur = push(&mut nodes, LayerSpec::depthwise(c, 3, 1), vec![cur]);
            cur = push(
                &mut nodes,
                LayerSpec::elementwise(LayerKind::BatchNorm, c),
                vec![cur],
            );
            cur = push(
                &mut nodes,
                LayerSpec::max_pool(c, 3, rng.random_range(1..=2)),
                vec![cur],
            );
        }
        1 => {
            // residual: relu -> conv -> add(skip) -> relu
            let skip = push(
                &mut nodes,
                LayerSpec::elementwise(LayerKind::Relu, c),
                vec![cur],
            );
            let body = push(&mut nodes, LayerSpec::conv(c, c, 3, 1), vec![skip]);
            cur = push(
                &mut nodes,
                LayerSpec::elementwise(LayerKind::Add, c),
                vec![body, skip],
            );
            cur = push(
                &mut nodes,
                LayerSpec::elementwise(LayerKind::Relu, c),
                vec![cur],
            );
        }
        _ => {
            // two branches concatenated
            let a_c = rng.random_range(1..=3);
            let b_c = rng.random_range(1..=3);
            let a = push(&mut nodes, LayerSpec::conv(c, a_c, 1, 1), vec![cur]);
            let b = push(&mut nodes, LayerSpec::conv(c, b_c, 3, 1), vec![cur]);
            cur = push(&mut nodes, LayerSpec::concat(a_c, a_c + b_c), vec![a, b]);
            c = a_c + b_c;
            cur = push(
                &mut nodes,
                LayerSpec::elementwise(LayerKind::Relu, c),
                vec![cur],
            );
        }
    }
    cur = push(
        &mut nodes,
        LayerSpec::elementwise(LayerKind::GlobalAvgPool, c),
        vec![cur],
    );
    push(&mut nodes, LayerSpec::linear(c, classes), vec![cur]);
    graph(dims, input, classes, nodes)
}

pub fn random_batch<R: Rng>(g: &ArchitectureGraph, n: usize, rng: &mut R) -> (Tensor, Vec<usize>) {
    let i = g.input;
    let shape = match g.dims {
        Dims::Two => vec![n, i.channels, i.height, i.width],
        Dims::One => vec![n, i.channels, i.width],
    };
    let batch = Tensor::randn(&shape, rng);
    let labels = (0..n).map(|_| rng.random_range(0..g.num_classes)).collect();
    (batch, labels)
}

fn relu_bits(g: &ArchitectureGraph, p: &ParamSet, batch: &Tensor) -> Vec<bool> {
    let trace = forward(g, p, batch).unwrap();
    trace
        .relu_patterns
        .iter()
        .flat_map(|r| r.active.iter().copied())
        .collect()
}

pub struct FdReport {
    pub max_rel_error: f64,
    pub checked: usize,
    pub skipped_at_kinks: usize,
}

/// Central differences with step `h` on every parameter. Parameters whose
/// perturbation flips a ReLU or changes a max-pool winner straddle a kink where
/// the loss is not differentiable; those are skipped and counted.
pub fn finite_difference_check(
    g: &ArchitectureGraph,
    params: &ParamSet,
    batch: &Tensor,
    labels: &[usize],
    h: f64,
) -> FdReport {
    let analytic = tensorcore::backward(g, params, batch, labels).unwrap();
    let base_relu = relu_bits(g, params, batch);
    let mut report = FdReport {
        max_rel_error: 0.0,
        checked: 0,
        skipped_at_kinks: 0,
    };
    for (id, layer) in params.layers.iter().enumerate() {
        let Some(layer) = layer else { continue };
        let tensors = [
            Some(layer.weight.numel()),
            layer.bias.as_ref().map(Tensor::numel),
        ];
        for (which, len) in tensors.iter().enumerate() {
            let Some(len) = *len else { continue };
            for e in 0..len {
                let perturbed = |delta: f64| {
                    let mut p = params.clone();
                    let lp = p.layers[id].as_mut().unwrap();
                    let t = if which == 0 {
                        &mut lp.weight
                    } else {
                        lp.bias.as_mut().unwrap()
                    };
                    t.data_mut()[e] += delta;
                    p
                };
                let (pp, pm) = (perturbed(h), perturbed(-h));
                let crosses_kink = relu_bits(g, &pp, batch) != base_relu
                    || relu_bits(g, &pm, batch) != base_relu
                    || !same_pool_winners(g, params, &pp, &pm, batch);
                if crosses_kink {
                    report.skipped_at_kinks += 1;
                    continue;
                }
                let lp = mean_cross_entropy(g, &pp, batch, labels).unwrap();
                let lm = mean_cross_entropy(g, &pm, batch, labels).unwrap();
                let fd = (lp - lm) / (2.0 * h);
                let grads = analytic.get(id).unwrap();
                let an = if which == 0 {
                    grads.weight.data()[e]
                } else {
                    grads.bias.as_ref().unwrap().data()[e]
                };
                let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
                report.max_rel_error = report.max_rel_error.max(rel);
                report.checked += 1;
            }
        }
    }
    report
}

fn pool_argmax(g: &ArchitectureGraph, p: &ParamSet, batch: &Tensor) -> Vec<usize> {
    // Winner index per pooled output, recovered by matching input values.
    let trace = forward(g, p, batch).unwrap();
    let mut winners = Vec::new();
    for (id, node) in g.nodes.iter().enumerate() {
        if node.layer.kind != LayerKind::MaxPool {
            continue;
        }
        let x = trace.outputs[node.inputs[0]].data();
        for &y in trace.outputs[id].data() {
            winners.push(x.iter().position(|&v| v == y).unwrap());
        }
    }
    winners
}

fn same_pool_winners(
    g: &ArchitectureGraph,
    base: &ParamSet,
    plus: &ParamSet,
    minus: &ParamSet,
    batch: &Tensor,
) -> bool {
    let b = pool_argmax(g, base, batch);
    b == pool_argmax(g, plus, batch) && b == pool_argmax(g, minus, batch)
}
