//! Dense double-precision forward and reverse-mode execution of decoded graphs.
//!
//! Activations are stored as `[batch, channels, height, width]` (height is 1 for
//! time series). BatchNorm runs in its initialization state: unit scale, zero
//! shift, zero running mean and unit running variance, so every sample is
//! processed independently of the rest of the batch.

mod engine;
mod kernels;

pub use engine::{
    backward, backward_scaled, forward, mean_cross_entropy, per_sample_gradients,
    per_sample_gradients_from_trace, ForwardTrace, GradientRecord, LayerGrads, ReluPattern,
};

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::archspace::{ArchitectureGraph, LayerKind};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TensorError {
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("{labels} labels for a batch of {batch}")]
    LabelCount { labels: usize, batch: usize },
    #[error("parameters do not match the graph at layer {0}")]
    ParamMismatch(usize),
    #[error("graph is invalid")]
    InvalidGraph,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self, TensorError> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(TensorError::DataLength {
                shape: shape.to_vec(),
                len: data.len(),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Standard-normal entries.
    pub fn randn<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Self {
        let n = shape.iter().product();
        let data = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Sample `i` of a batch tensor, keeping a leading batch dimension of 1.
    pub fn sample(&self, i: usize) -> Tensor {
        let per = self.numel() / self.shape[0];
        let mut shape = self.shape.clone();
        shape[0] = 1;
        Tensor {
            shape,
            data: self.data[i * per..(i + 1) * per].to_vec(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
}

/// Weights and biases keyed by node id.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub layers: Vec<Option<LayerParams>>,
}

impl ParamSet {
    pub fn get(&self, node: usize) -> Option<&LayerParams> {
        self.layers.get(node).and_then(Option::as_ref)
    }

    pub fn count(&self) -> usize {
        self.layers
            .iter()
            .flatten()
            .map(|p| p.weight.numel() + p.bias.as_ref().map_or(0, Tensor::numel))
            .sum()
    }

    /// All-zero parameters with the graph's shapes.
    pub fn zeros(g: &ArchitectureGraph) -> Self {
        let layers = g
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| {
                n.layer.kind.has_params().then(|| LayerParams {
                    weight: Tensor::zeros(&weight_shape(g, i)),
                    bias: n.layer.bias.then(|| Tensor::zeros(&[n.layer.out_channels])),
                })
            })
            .collect();
        Self { layers }
    }

    pub fn scale(&mut self, factor: f64) {
        for p in self.layers.iter_mut().flatten() {
            p.weight.data_mut().iter_mut().for_each(|w| *w *= factor);
        }
    }
}

/// `(out, in, k, k)` / `(out, in, k)` for convs, `(C, 1, k[, k])` for depthwise
/// convs and `(out, in)` for linear layers.
pub fn weight_shape(g: &ArchitectureGraph, node: usize) -> Vec<usize> {
    let l = &g.nodes[node].layer;
    let spatial = |mut s: Vec<usize>| {
        for _ in 0..g.dims.rank() {
            s.push(l.kernel);
        }
        s
    };
    match l.kind {
        LayerKind::Conv => spatial(vec![l.out_channels, l.in_channels]),
        LayerKind::DepthwiseConv => spatial(vec![l.out_channels, 1]),
        LayerKind::Linear => vec![l.out_channels, l.in_channels],
        _ => Vec::new(),
    }
}

/// He-normal weights (`std = sqrt(2 / fan_in)`), zero biases.
pub fn init_params<R: Rng + ?Sized>(g: &ArchitectureGraph, rng: &mut R) -> ParamSet {
    let mut params = ParamSet::zeros(g);
    for p in params.layers.iter_mut().flatten() {
        let shape = p.weight.shape();
        let fan_in: usize = shape[1..].iter().product();
        let std = libm::sqrt(2.0 / fan_in as f64);
        for w in p.weight.data_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *w = std * z;
        }
    }
    params
}
