use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::template::BaselineTemplate;
use super::Dims;

pub const GROUP_COUNT: usize = 4;
/// architecture + 4 depths + 4 kernel/stride + width + 4 sparsities.
pub const GENE_COUNT: usize = 1 + GROUP_COUNT + GROUP_COUNT + 1 + GROUP_COUNT;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelStride {
    pub kernel: usize,
    pub stride: usize,
}

/// The search space: baseline pool plus the structural and size gene ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpaceDef {
    pub baselines: Vec<BaselineTemplate>,
    pub depth_values: Vec<usize>,
    pub kernel_stride_values: Vec<KernelStride>,
    pub width_range: [f64; 2],
    pub sparsity_range: [f64; 2],
}

impl SearchSpaceDef {
    /// The standard ranges over the given baseline pool.
    pub fn standard(baselines: Vec<BaselineTemplate>) -> Self {
        let ks = |kernel, stride| KernelStride { kernel, stride };
        Self {
            baselines,
            depth_values: alloc::vec![0, 1, 2, 3],
            kernel_stride_values: alloc::vec![
                ks(3, 2),
                ks(3, 1),
                ks(5, 2),
                ks(5, 1),
                ks(7, 2),
                ks(7, 1)
            ],
            width_range: [0.1, 1.0],
            sparsity_range: [0.1, 0.9],
        }
    }

    pub fn group_count(&self) -> usize {
        GROUP_COUNT
    }

    pub fn baseline_ids(&self) -> Vec<&str> {
        self.baselines.iter().map(|t| t.id.as_str()).collect()
    }

    pub fn validate(&self) -> Result<(), GeneError> {
        let bad = |what: &'static str| Err(GeneError::InvalidSpace(what));
        if self.baselines.is_empty() {
            return bad("baseline pool is empty");
        }
        if self.depth_values.is_empty() {
            return bad("depth values are empty");
        }
        if self.kernel_stride_values.is_empty() {
            return bad("kernel/stride values are empty");
        }
        if self
            .kernel_stride_values
            .iter()
            .any(|ks| ks.kernel % 2 == 0 || !(1..=2).contains(&ks.stride))
        {
            return bad("kernels must be odd and strides 1 or 2");
        }
        let [wl, wh] = self.width_range;
        if !(wl.is_finite() && wh.is_finite() && 0.0 < wl && wl <= wh) {
            return bad("width range must satisfy 0 < lo <= hi");
        }
        let [sl, sh] = self.sparsity_range;
        if !(sl.is_finite() && sh.is_finite() && 0.0 <= sl && sl <= sh && sh < 1.0) {
            return bad("sparsity range must satisfy 0 <= lo <= hi < 1");
        }
        Ok(())
    }
}

/// Input tensor shape and class count of the target task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskShape {
    pub dims: Dims,
    pub channels: usize,
    /// `[height, width]`; height is 1 for time series.
    pub spatial: [usize; 2],
    pub num_classes: usize,
}

impl TaskShape {
    /// 3x128x128 image classification.
    pub fn image(num_classes: usize) -> Self {
        Self {
            dims: Dims::Two,
            channels: 3,
            spatial: [128, 128],
            num_classes,
        }
    }

    pub fn time_series(channels: usize, window: usize, num_classes: usize) -> Self {
        Self {
            dims: Dims::One,
            channels,
            spatial: [1, window],
            num_classes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeneError {
    #[error("gene vector has {0} genes, expected {GENE_COUNT}")]
    WrongLength(usize),
    #[error("gene `{gene}` = {value} is outside the search space")]
    OutOfRange { gene: &'static str, value: f64 },
    #[error("invalid search space: {0}")]
    InvalidSpace(&'static str),
}

/// One point of the search space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperparamVector {
    /// Index into the baseline pool.
    pub architecture: usize,
    /// Additional superblocks per group (a value from `depth_values`).
    pub group_depth: [usize; GROUP_COUNT],
    /// Index into `kernel_stride_values`.
    pub kernel_stride: [usize; GROUP_COUNT],
    pub width_multiplier: f64,
    pub pruning_sparsity: [f64; GROUP_COUNT],
}

impl HyperparamVector {
    /// Flat gene encoding, in the order architecture, depths, kernel/stride,
    /// width, sparsities.
    pub fn to_genes(&self) -> [f64; GENE_COUNT] {
        let mut genes = [0.0; GENE_COUNT];
        genes[0] = self.architecture as f64;
        for g in 0..GROUP_COUNT {
            genes[1 + g] = self.group_depth[g] as f64;
            genes[5 + g] = self.kernel_stride[g] as f64;
            genes[10 + g] = self.pruning_sparsity[g];
        }
        genes[9] = self.width_multiplier;
        genes
    }

    pub fn from_genes(genes: &[f64], space: &SearchSpaceDef) -> Result<Self, GeneError> {
        if genes.len() != GENE_COUNT {
            return Err(GeneError::WrongLength(genes.len()));
        }
        let index = |gene: &'static str, value: f64| -> Result<usize, GeneError> {
            if value >= 0.0 && libm::trunc(value) == value && value < 1e15 {
                Ok(value as usize)
            } else {
                Err(GeneError::OutOfRange { gene, value })
            }
        };
        let mut x = Self {
            architecture: index("architecture", genes[0])?,
            group_depth: [0; GROUP_COUNT],
            kernel_stride: [0; GROUP_COUNT],
            width_multiplier: genes[9],
            pruning_sparsity: [0.0; GROUP_COUNT],
        };
        for g in 0..GROUP_COUNT {
            x.group_depth[g] = index("group_depth", genes[1 + g])?;
            x.kernel_stride[g] = index("kernel_stride", genes[5 + g])?;
            x.pruning_sparsity[g] = genes[10 + g];
        }
        x.validate(space)?;
        Ok(x)
    }

    pub fn validate(&self, space: &SearchSpaceDef) -> Result<(), GeneError> {
        let out = |gene, value: f64| Err(GeneError::OutOfRange { gene, value });
        if self.architecture >= space.baselines.len() {
            return out("architecture", self.architecture as f64);
        }
        for g in 0..GROUP_COUNT {
            if !space.depth_values.contains(&self.group_depth[g]) {
                return out("group_depth", self.group_depth[g] as f64);
            }
            if self.kernel_stride[g] >= space.kernel_stride_values.len() {
                return out("kernel_stride", self.kernel_stride[g] as f64);
            }
            let [lo, hi] = space.sparsity_range;
            let s = self.pruning_sparsity[g];
            if !(lo..=hi).contains(&s) {
                return out("pruning_sparsity", s);
            }
        }
        let [lo, hi] = space.width_range;
        if !(lo..=hi).contains(&self.width_multiplier) {
            return out("width_multiplier", self.width_multiplier);
        }
        Ok(())
    }

    pub fn kernel_stride_of(&self, space: &SearchSpaceDef, group: usize) -> KernelStride {
        space.kernel_stride_values[self.kernel_stride[group]]
    }

    /// Number of superblocks the decoded backbone will contain.
    pub fn superblock_count(&self) -> usize {
        self.group_depth.iter().map(|d| 1 + d).sum()
    }
}

/// Uniform draw over every gene.
pub fn sample<R: Rng + ?Sized>(rng: &mut R, space: &SearchSpaceDef) -> HyperparamVector {
    let architecture = rng.random_range(0..space.baselines.len());
    let mut group_depth = [0; GROUP_COUNT];
    let mut kernel_stride = [0; GROUP_COUNT];
    for g in 0..GROUP_COUNT {
        group_depth[g] = space.depth_values[rng.random_range(0..space.depth_values.len())];
        kernel_stride[g] = rng.random_range(0..space.kernel_stride_values.len());
    }
    let width_multiplier = uniform(rng, space.width_range);
    let mut pruning_sparsity = [0.0; GROUP_COUNT];
    for s in pruning_sparsity.iter_mut() {
        *s = uniform(rng, space.sparsity_range);
    }
    HyperparamVector {
        architecture,
        group_depth,
        kernel_stride,
        width_multiplier,
        pruning_sparsity,
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}
