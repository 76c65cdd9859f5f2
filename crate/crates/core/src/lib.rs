//! Zero-shot, constraint-aware neural architecture search for microcontrollers.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only pure algorithms:
//!
//! - [`archspace`]: the 14-gene search space, baseline templates, graph decoding and
//!   static channel pruning.
//! - [`tensorcore`]: a small double-precision forward/backward engine over decoded graphs.
//! - [`proxies`]: the MeCo, ZiCo, NASWOT and SNIP training-free scores.
//! - [`costmodel`]: FLOPs, ROM and RAM estimation plus feasibility against a target.
//! - [`search`]: the candidate evaluation pipeline and an NSGA-II loop with
//!   constraint domination.
//! - [`hvss`]: exact hypervolume and evolutionary hypervolume subset selection.
//! - [`analysis`]: Kendall tau-b and rank-correlation matrices.
//!
//! IO, configuration files and the command line live in the `protonas` crate.
#![no_std]
#![warn(missing_debug_implementations, rust_2018_idioms)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod archspace;
pub mod costmodel;
pub mod hvss;
pub mod proxies;
pub mod rng;
pub mod search;
pub mod tensorcore;

mod linalg;

pub use analysis::{RankSeries, TauMatrix};
pub use archspace::{
    ArchitectureGraph, BaselineTemplate, HyperparamVector, SearchSpaceDef, TaskShape,
};
pub use costmodel::{CostEstimate, Feasibility, TargetProfile};
pub use hvss::{HssConfig, SubsetGene};
pub use proxies::{ProxyConfig, ProxyScores};
pub use search::{CandidateRecord, EvalContext, ParetoArchive, SearchConfig};
