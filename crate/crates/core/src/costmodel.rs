//! Static FLOPs, ROM and RAM estimation and feasibility against a target.
//!
//! Conventions: one multiply-accumulate is 2 FLOPs; weights are int8 with 8 bytes of
//! per-output-channel quantization metadata (scale and zero point) and 32-bit biases;
//! BatchNorm is folded into the preceding convolution (no FLOPs, no ROM); activations
//! are int8.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::archspace::{ArchitectureGraph, FeatureShape, LayerKind};

/// Hardware limits of the deployment target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetProfile {
    pub name: String,
    pub ram_max: u64,
    pub rom_max: u64,
    pub flops_max: u64,
    /// Fixed ROM added to every model (runtime and generated code).
    #[serde(default)]
    pub code_overhead: u64,
}

impl TargetProfile {
    /// 1 MiB RAM, 2 MiB ROM, 200 MFLOPs: an i.MX RT1062-class board.
    pub fn imxrt1062_like() -> Self {
        Self {
            name: String::from("imxrt1062-like"),
            ram_max: 1 << 20,
            rom_max: 2 << 20,
            flops_max: 200_000_000,
            code_overhead: 0,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.ram_max > 0 && self.rom_max > 0 && self.flops_max > 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub flops: u64,
    pub rom_bytes: u64,
    pub ram_bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    pub feasible: bool,
    /// Sum of normalized constraint excesses; zero iff feasible.
    pub violation: f64,
}

/// Int8 weight quantization scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuantScheme {
    pub weight_bytes: u64,
    pub channel_meta_bytes: u64,
    pub bias_bytes: u64,
    pub code_overhead: u64,
}

impl Default for QuantScheme {
    fn default() -> Self {
        Self {
            weight_bytes: 1,
            channel_meta_bytes: 8,
            bias_bytes: 4,
            code_overhead: 0,
        }
    }
}

impl QuantScheme {
    pub fn for_profile(profile: &TargetProfile) -> Self {
        Self {
            code_overhead: profile.code_overhead,
            ..Self::default()
        }
    }
}

fn shapes(g: &ArchitectureGraph) -> Vec<FeatureShape> {
    g.shapes().expect("cost queries need a valid graph")
}

/// Weight count of a layer (biases excluded).
pub fn weight_count(g: &ArchitectureGraph, node: usize) -> u64 {
    let l = &g.nodes[node].layer;
    let taps = (l.kernel as u64).pow(g.dims.rank());
    match l.kind {
        LayerKind::Conv => l.in_channels as u64 * l.out_channels as u64 * taps,
        LayerKind::DepthwiseConv => l.out_channels as u64 * taps,
        LayerKind::Linear => l.in_channels as u64 * l.out_channels as u64,
        _ => 0,
    }
}

/// FLOPs of one node.
pub fn layer_flops(g: &ArchitectureGraph, node: usize, out: &FeatureShape) -> u64 {
    let l = &g.nodes[node].layer;
    let spatial = out.spatial() as u64;
    let bias = if l.bias { out.numel() as u64 } else { 0 };
    match l.kind {
        LayerKind::Conv | LayerKind::DepthwiseConv => 2 * weight_count(g, node) * spatial + bias,
        LayerKind::Linear => 2 * weight_count(g, node) + bias,
        LayerKind::Relu | LayerKind::MaxPool | LayerKind::GlobalAvgPool | LayerKind::Add => {
            out.numel() as u64
        }
        LayerKind::BatchNorm | LayerKind::Concat => 0,
    }
}

pub fn count_flops(g: &ArchitectureGraph) -> u64 {
    let shapes = shapes(g);
    (0..g.nodes.len())
        .map(|i| layer_flops(g, i, &shapes[i]))
        .sum()
}

pub fn estimate_rom(g: &ArchitectureGraph, quant: &QuantScheme) -> u64 {
    let params: u64 = g
        .param_layers()
        .map(|(i, l)| {
            let bias = if l.bias {
                l.out_channels as u64 * quant.bias_bytes
            } else {
                0
            };
            weight_count(g, i) * quant.weight_bytes
                + l.out_channels as u64 * quant.channel_meta_bytes
                + bias
        })
        .sum();
    params + quant.code_overhead
}

/// Peak bytes of simultaneously live int8 activation buffers.
///
/// Nodes run in graph order. A buffer is live from the step that produces it
/// through its last consumer; the network input is live from the start.
pub fn estimate_ram(g: &ArchitectureGraph) -> u64 {
    let shapes = shapes(g);
    let sizes: Vec<u64> = shapes.iter().map(|s| s.numel() as u64).collect();
    peak_live_bytes(g.input.numel() as u64, &sizes, |i| &g.nodes[i].inputs)
}

/// Liveness simulation over buffer sizes. `inputs(i)` lists the producers read by
/// step `i`; an empty list reads the network input.
pub fn peak_live_bytes<'a>(
    input_bytes: u64,
    sizes: &[u64],
    inputs: impl Fn(usize) -> &'a [usize],
) -> u64 {
    let n = sizes.len();
    // last_use[j] for node j; input_last for the network input.
    let mut last_use = vec![0usize; n];
    let mut input_last = 0;
    for i in 0..n {
        let ins = inputs(i);
        if ins.is_empty() {
            input_last = input_last.max(i);
        }
        for &j in ins {
            last_use[j] = last_use[j].max(i);
        }
    }
    // The output buffer stays live until the end.
    if n > 0 {
        last_use[n - 1] = n;
    }
    let mut peak = 0;
    for i in 0..n {
        let mut live = sizes[i];
        if input_last >= i {
            live += input_bytes;
        }
        live += (0..i)
            .filter(|&j| last_use[j] >= i)
            .map(|j| sizes[j])
            .sum::<u64>();
        peak = peak.max(live);
    }
    peak
}

pub fn estimate(g: &ArchitectureGraph, quant: &QuantScheme) -> CostEstimate {
    CostEstimate {
        flops: count_flops(g),
        rom_bytes: estimate_rom(g, quant),
        ram_bytes: estimate_ram(g),
    }
}

pub fn check(c: &CostEstimate, t: &TargetProfile) -> Feasibility {
    let excess = |value: u64, limit: u64| -> f64 {
        if value <= limit {
            0.0
        } else {
            (value - limit) as f64 / limit as f64
        }
    };
    let violation = excess(c.ram_bytes, t.ram_max)
        + excess(c.rom_bytes, t.rom_max)
        + excess(c.flops, t.flops_max);
    Feasibility {
        feasible: c.ram_bytes <= t.ram_max && c.rom_bytes <= t.rom_max && c.flops <= t.flops_max,
        violation,
    }
}
