//! Search space, baseline templates, decoding of gene vectors into layer graphs,
//! and static channel pruning.

mod decode;
mod graph;
mod prune;
mod space;
mod template;

pub use decode::decode;
pub use graph::{ArchitectureGraph, Dims, FeatureShape, LayerKind, LayerSpec, Node, Violation};
pub use prune::{apply_static_pruning, pruned_channels};
pub use space::{
    sample, GeneError, HyperparamVector, KernelStride, SearchSpaceDef, TaskShape, GENE_COUNT,
    GROUP_COUNT,
};
pub use template::{
    builtin_template, builtin_templates, BaselineTemplate, Channels, Pattern, TemplateError,
    TemplateLibrary, IMAGE_POOL, TEMPLATE_FORMAT_VERSION, TIME_SERIES_POOL,
};

use alloc::string::String;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DecodeError {
    #[error(transparent)]
    Gene(#[from] GeneError),
    #[error("template `{template}` is {template_dims:?} but the task is {task_dims:?}")]
    DimsMismatch {
        template: String,
        template_dims: Dims,
        task_dims: Dims,
    },
    #[error("spatial size collapsed below 1 at layer {layer}")]
    ShapeCollapse { layer: usize },
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("decoded graph is invalid: {0:?}")]
    Invalid(Vec<Violation>),
}
