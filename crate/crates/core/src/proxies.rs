//! Training-free accuracy proxies. All four scores are "higher is better" and
//! stay separate objectives; nothing here combines them.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::archspace::ArchitectureGraph;
use crate::linalg;
use crate::tensorcore::{
    backward, forward, per_sample_gradients_from_trace, ForwardTrace, GradientRecord, ParamSet,
    Tensor, TensorError,
};

/// Score substituted for a proxy that overflowed to a non-finite value.
pub const NON_FINITE_SCORE: f64 = -1.0e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProxyScores {
    pub meco: f64,
    pub zico: f64,
    pub naswot: f64,
    pub snip: f64,
}

impl ProxyScores {
    pub const NAMES: [&'static str; 4] = ["meco", "zico", "naswot", "snip"];

    pub fn to_array(&self) -> [f64; 4] {
        [self.meco, self.zico, self.naswot, self.snip]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self {
            meco: a[0],
            zico: a[1],
            naswot: a[2],
            snip: a[3],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProxyConfig {
    pub batch_size: usize,
    pub num_batches_zico: usize,
    pub eps_logdet: f64,
    pub eps_std: f64,
    pub eps_var: f64,
}

impl Default for ProxyConfig {
    fn default() -> Self {
        Self {
            batch_size: 8,
            num_batches_zico: 2,
            eps_logdet: 1e-6,
            eps_std: 1e-6,
            eps_var: 1e-6,
        }
    }
}

impl ProxyConfig {
    pub fn validate(&self) -> Result<(), ProxyError> {
        if self.batch_size < 2 {
            return Err(ProxyError::Config("batch_size must be at least 2"));
        }
        if self.num_batches_zico < 2 {
            return Err(ProxyError::Config("num_batches_zico must be at least 2"));
        }
        let eps = [self.eps_logdet, self.eps_std, self.eps_var];
        if !eps.iter().all(|e| e.is_finite() && *e > 0.0) {
            return Err(ProxyError::Config("epsilons must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProxyError {
    #[error("invalid proxy config: {0}")]
    Config(&'static str),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

// ---------------------------------------------------------------- SNIP

/// `Σ |∂L/∂w · w|` over all weights (biases excluded).
pub fn snip_from_grads(params: &ParamSet, grads: &GradientRecord) -> f64 {
    let mut total = 0.0;
    for (p, gr) in params.layers.iter().zip(&grads.layers) {
        if let (Some(p), Some(gr)) = (p, gr) {
            total += p
                .weight
                .data()
                .iter()
                .zip(gr.weight.data())
                .map(|(w, g)| libm::fabs(w * g))
                .sum::<f64>();
        }
    }
    total
}

pub fn snip(
    g: &ArchitectureGraph,
    params: &ParamSet,
    batch: &Tensor,
    labels: &[usize],
) -> Result<f64, TensorError> {
    Ok(snip_from_grads(
        params,
        &backward(g, params, batch, labels)?,
    ))
}

// ---------------------------------------------------------------- NASWOT

/// Per-sample concatenation of every ReLU's binary pattern.
pub fn relu_codes(trace: &ForwardTrace) -> Vec<Vec<bool>> {
    let n = trace.batch_size();
    (0..n)
        .map(|s| {
            trace
                .relu_patterns
                .iter()
                .flat_map(|r| r.sample(n, s).iter().copied())
                .collect()
        })
        .collect()
}

/// `ln det(K + eps·I)` with `K_ij = N_A − hamming(c_i, c_j)`.
pub fn naswot_from_codes(codes: &[Vec<bool>], eps: f64) -> f64 {
    let b = codes.len();
    let units = codes.first().map_or(0, Vec::len);
    let mut k = vec![0.0; b * b];
    for i in 0..b {
        for j in i..b {
            let ham = codes[i]
                .iter()
                .zip(&codes[j])
                .filter(|(x, y)| x != y)
                .count();
            let v = (units - ham) as f64 + if i == j { eps } else { 0.0 };
            k[i * b + j] = v;
            k[j * b + i] = v;
        }
    }
    // K is a Gram matrix, so K + eps·I is positive definite; LU only fails
    // through rounding on near-singular kernels.
    linalg::log_det(&k, b).unwrap_or(b as f64 * libm::log(eps))
}

pub fn naswot(
    g: &ArchitectureGraph,
    params: &ParamSet,
    batch: &Tensor,
    eps: f64,
) -> Result<f64, TensorError> {
    Ok(naswot_from_codes(
        &relu_codes(&forward(g, params, batch)?),
        eps,
    ))
}

// ---------------------------------------------------------------- ZiCo

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
    abs_sum: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
        self.abs_sum += libm::fabs(x);
    }
}

/// Streaming per-weight gradient statistics across samples and batches.
#[derive(Debug, Clone)]
pub struct ZicoAccumulator {
    layers: Vec<Option<Vec<Moments>>>,
}

impl ZicoAccumulator {
    pub fn new(params: &ParamSet) -> Self {
        let layers = params
            .layers
            .iter()
            .map(|p| {
                p.as_ref()
                    .map(|p| vec![Moments::default(); p.weight.numel()])
            })
            .collect();
        Self { layers }
    }

    /// Adds one per-sample gradient record.
    pub fn push(&mut self, grads: &GradientRecord) {
        for (acc, gr) in self.layers.iter_mut().zip(&grads.layers) {
            if let (Some(acc), Some(gr)) = (acc, gr) {
                for (m, &x) in acc.iter_mut().zip(gr.weight.data()) {
                    m.push(x);
                }
            }
        }
    }

    /// `Σ_l ln max(Σ_θ mean|g_θ| / (std(g_θ) + eps), eps)` with population std.
    pub fn score(&self, eps: f64) -> f64 {
        self.layers
            .iter()
            .flatten()
            .map(|acc| {
                let ratio: f64 = acc
                    .iter()
                    .filter(|m| m.n > 0.0)
                    .map(|m| {
                        let std = libm::sqrt((m.m2 / m.n).max(0.0));
                        (m.abs_sum / m.n) / (std + eps)
                    })
                    .sum();
                libm::log(ratio.max(eps))
            })
            .sum()
    }
}

pub fn zico(
    g: &ArchitectureGraph,
    params: &ParamSet,
    batches: &[Tensor],
    labels: &[Vec<usize>],
    eps: f64,
) -> Result<f64, TensorError> {
    let mut acc = ZicoAccumulator::new(params);
    for (batch, y) in batches.iter().zip(labels) {
        let trace = forward(g, params, batch)?;
        for rec in per_sample_gradients_from_trace(g, params, &trace, y)? {
            acc.push(&rec);
        }
    }
    Ok(acc.score(eps))
}

// ---------------------------------------------------------------- MeCo

/// Minimum eigenvalue of the channel correlation matrix of one feature map laid
/// out `[channels, plane]`. Channel variances are floored at `eps`, so a dead
/// channel gets a zero row and column rather than a NaN.
pub fn meco_tap_score(x: &[f64], channels: usize, plane: usize, eps: f64) -> f64 {
    debug_assert_eq!(x.len(), channels * plane);
    if channels == 0 || plane == 0 {
        return 0.0;
    }
    let inv = 1.0 / plane as f64;
    let mut centered = x.to_vec();
    let mut scale = vec![0.0; channels];
    for c in 0..channels {
        let row = &mut centered[c * plane..(c + 1) * plane];
        let mean = row.iter().sum::<f64>() * inv;
        row.iter_mut().for_each(|v| *v -= mean);
        let var = row.iter().map(|v| v * v).sum::<f64>() * inv;
        scale[c] = 1.0 / libm::sqrt(var.max(eps));
    }
    let mut corr = vec![0.0; channels * channels];
    for i in 0..channels {
        let a = &centered[i * plane..(i + 1) * plane];
        for j in i..channels {
            let b = &centered[j * plane..(j + 1) * plane];
            let cov = a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>() * inv;
            let r = cov * scale[i] * scale[j];
            corr[i * channels + j] = r;
            corr[j * channels + i] = r;
        }
    }
    linalg::min_eigenvalue(&corr, channels)
}

/// Sum of [`meco_tap_score`] over the graph's taps for sample `sample` of a trace.
pub fn meco_from_trace(
    g: &ArchitectureGraph,
    trace: &ForwardTrace,
    sample: usize,
    eps: f64,
) -> f64 {
    g.taps()
        .into_iter()
        .map(|t| {
            let s = trace.shape(t);
            let per = s.numel();
            let x = &trace.outputs[t].data()[sample * per..(sample + 1) * per];
            meco_tap_score(x, s.channels, s.spatial(), eps)
        })
        .sum()
}

/// MeCo of a single input (batch of one).
pub fn meco(
    g: &ArchitectureGraph,
    params: &ParamSet,
    sample: &Tensor,
    eps: f64,
) -> Result<f64, TensorError> {
    Ok(meco_from_trace(g, &forward(g, params, sample)?, 0, eps))
}

// ---------------------------------------------------------------- ensemble

/// Standard-Gaussian inputs `[n, C, H, W]` and uniform labels.
pub fn random_batch<R: Rng + ?Sized>(
    g: &ArchitectureGraph,
    n: usize,
    rng: &mut R,
) -> (Tensor, Vec<usize>) {
    let i = g.input;
    let x = Tensor::randn(&[n, i.channels, i.height, i.width], rng);
    let y = (0..n).map(|_| rng.random_range(0..g.num_classes)).collect();
    (x, y)
}

fn finite_or_floor(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        NON_FINITE_SCORE
    }
}

/// All four proxies from shared random batches drawn from `rng`.
///
/// The first batch feeds every proxy: SNIP uses its mean-loss gradient, NASWOT
/// its ReLU codes and MeCo its first sample. ZiCo additionally sees
/// `num_batches_zico - 1` further batches.
pub fn evaluate_ensemble<R: Rng + ?Sized>(
    g: &ArchitectureGraph,
    params: &ParamSet,
    cfg: &ProxyConfig,
    rng: &mut R,
) -> Result<ProxyScores, ProxyError> {
    cfg.validate()?;
    let mut zico_acc = ZicoAccumulator::new(params);
    let (x0, y0) = random_batch(g, cfg.batch_size, rng);
    let trace = forward(g, params, &x0)?;
    let per_sample = per_sample_gradients_from_trace(g, params, &trace, &y0)?;

    let mut mean = per_sample[0].clone();
    for rec in &per_sample[1..] {
        for (m, r) in mean.layers.iter_mut().zip(&rec.layers) {
            if let (Some(m), Some(r)) = (m, r) {
                m.weight
                    .data_mut()
                    .iter_mut()
                    .zip(r.weight.data())
                    .for_each(|(a, b)| *a += b);
            }
        }
    }
    let snip_score = snip_from_grads(params, &mean) / cfg.batch_size as f64;
    for rec in &per_sample {
        zico_acc.push(rec);
    }
    let naswot_score = naswot_from_codes(&relu_codes(&trace), cfg.eps_logdet);
    let meco_score = meco_from_trace(g, &trace, 0, cfg.eps_var);
    drop(trace);

    for _ in 1..cfg.num_batches_zico {
        let (x, y) = random_batch(g, cfg.batch_size, rng);
        let trace = forward(g, params, &x)?;
        for rec in per_sample_gradients_from_trace(g, params, &trace, &y)? {
            zico_acc.push(&rec);
        }
    }
    Ok(ProxyScores {
        meco: finite_or_floor(meco_score),
        zico: finite_or_floor(zico_acc.score(cfg.eps_std)),
        naswot: finite_or_floor(naswot_score),
        snip: finite_or_floor(snip_score),
    })
}
