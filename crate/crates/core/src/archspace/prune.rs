use alloc::vec;
use alloc::vec::Vec;

use super::graph::{ArchitectureGraph, LayerKind};
use super::space::GROUP_COUNT;

/// Channels left after removing `floor(sparsity * channels)`, never below 1.
pub fn pruned_channels(channels: usize, sparsity: f64) -> usize {
    let removed = libm::floor(sparsity * channels as f64) as usize;
    channels.saturating_sub(removed).max(1)
}

#[derive(Clone, Copy)]
enum Var {
    /// Cannot shrink: network input, stem/classifier outputs, concat outputs.
    Fixed,
    /// Output of a prunable group convolution with its pruned width.
    Prunable(usize),
}

/// Removes output channels from every convolution inside a group, then
/// re-derives all downstream input widths.
///
/// Tensors joined by a residual add form one channel class; the whole class is
/// cut to the smallest width any of its members was pruned to, and a class
/// containing an unprunable member keeps its width.
pub fn apply_static_pruning(
    g: &ArchitectureGraph,
    sparsity: &[f64; GROUP_COUNT],
) -> ArchitectureGraph {
    let n = g.nodes.len();

    // Channel variable of each node output plus a union-find over variables.
    let mut vars: Vec<Var> = vec![Var::Fixed]; // variable 0: network input
    let mut node_var = vec![0usize; n];
    let mut parent: Vec<usize> = vec![0];
    fn find(parent: &mut [usize], mut v: usize) -> usize {
        while parent[v] != v {
            parent[v] = parent[parent[v]];
            v = parent[v];
        }
        v
    }
    let input_var =
        |node: &super::Node, node_var: &[usize]| node.inputs.first().map_or(0, |&i| node_var[i]);

    for (id, node) in g.nodes.iter().enumerate() {
        let l = &node.layer;
        node_var[id] = match l.kind {
            LayerKind::Conv => {
                vars.push(match node.group {
                    Some(grp) => Var::Prunable(pruned_channels(l.out_channels, sparsity[grp])),
                    None => Var::Fixed,
                });
                parent.push(vars.len() - 1);
                vars.len() - 1
            }
            LayerKind::Linear | LayerKind::Concat => {
                vars.push(Var::Fixed);
                parent.push(vars.len() - 1);
                vars.len() - 1
            }
            LayerKind::Add => {
                let root = find(&mut parent, node_var[node.inputs[0]]);
                for &i in &node.inputs[1..] {
                    let other = find(&mut parent, node_var[i]);
                    parent[other] = root;
                }
                root
            }
            _ => input_var(node, &node_var),
        };
    }

    // Width of each class: min over members, original width if any is fixed.
    let mut class_width: Vec<Option<usize>> = vec![None; vars.len()];
    let mut class_fixed = vec![false; vars.len()];
    for (v, var) in vars.iter().enumerate() {
        let root = find(&mut parent, v);
        match *var {
            Var::Fixed => class_fixed[root] = true,
            Var::Prunable(w) => {
                class_width[root] = Some(class_width[root].map_or(w, |c: usize| c.min(w)))
            }
        }
    }

    let mut out = g.clone();
    let mut widths: Vec<usize> = Vec::with_capacity(n);
    for id in 0..n {
        let node = &g.nodes[id];
        let in_width = |i: usize| widths[i];
        let c_in = match node.inputs.first() {
            Some(&i) => in_width(i),
            None => g.input.channels,
        };
        let root = find(&mut parent, node_var[id]);
        let l = &mut out.nodes[id].layer;
        match l.kind {
            LayerKind::Conv => {
                l.in_channels = c_in;
                if !class_fixed[root] {
                    if let Some(w) = class_width[root] {
                        l.out_channels = w;
                    }
                }
            }
            LayerKind::Linear => l.in_channels = c_in,
            LayerKind::Concat => {
                l.in_channels = c_in;
                l.out_channels = node.inputs.iter().map(|&i| widths[i]).sum();
            }
            _ => {
                l.in_channels = c_in;
                l.out_channels = c_in;
            }
        }
        widths.push(l.out_channels);
    }
    out
}
