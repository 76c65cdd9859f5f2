//! Baseline templates: a stem, a repeatable superblock and a classifier.
//!
//! The same structures are (de)serialized from the versioned template file
//! shipped with the `protonas` crate.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::space::GROUP_COUNT;
use super::Dims;

pub const TEMPLATE_FORMAT_VERSION: u32 = 1;

/// Built-in image classification pool.
pub const IMAGE_POOL: [&str; 4] = ["mbed-2d", "mobilev2-2d", "res-2d", "squeeze-2d"];
/// Built-in time-series classification pool.
pub const TIME_SERIES_POOL: [&str; 2] = ["mbed-1d", "inception-1d"];

/// Output channel count of a convolution before width scaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Channels {
    /// Fixed count.
    Abs(usize),
    /// Fraction of the enclosing group's base channel count.
    Ratio(f64),
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

/// One element of a layer pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
pub enum Pattern {
    Conv {
        channels: Channels,
        #[serde(default = "one")]
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        /// Receives the group's kernel (and, in the first superblock, stride) gene.
        #[serde(default)]
        first: bool,
        #[serde(default)]
        bias: bool,
    },
    DwConv {
        #[serde(default = "one")]
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        first: bool,
    },
    BatchNorm,
    Relu,
    MaxPool {
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
    },
    GlobalAvgPool,
    Linear {
        #[serde(default = "yes")]
        bias: bool,
    },
    /// `body(x) + skip(x)`. The skip is the identity when shapes agree; otherwise a
    /// strided 1x1 projection if `projection` is set, or no skip at all.
    Residual {
        body: Vec<Pattern>,
        #[serde(default)]
        projection: bool,
    },
    /// Parallel branches over the same input, concatenated along channels.
    Concat {
        branches: Vec<Vec<Pattern>>,
    },
}

impl Pattern {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Pattern)) {
        f(self);
        match self {
            Pattern::Residual { body, .. } => body.iter().for_each(|p| p.visit(f)),
            Pattern::Concat { branches } => branches.iter().flatten().for_each(|p| p.visit(f)),
            _ => {}
        }
    }
}

fn visit_all<'a>(patterns: &'a [Pattern], f: &mut dyn FnMut(&'a Pattern)) {
    for p in patterns {
        p.visit(f);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineTemplate {
    pub id: String,
    pub dims: Dims,
    /// Base output channels of each group, before width scaling.
    pub group_channels: [usize; GROUP_COUNT],
    pub stem: Vec<Pattern>,
    pub superblock: Vec<Pattern>,
    pub classifier: Vec<Pattern>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TemplateError {
    #[error("unknown template `{0}`")]
    Unknown(String),
    #[error("template `{id}`: {reason}")]
    Malformed { id: String, reason: &'static str },
    #[error("template file version {0} is not supported (expected {TEMPLATE_FORMAT_VERSION})")]
    Version(u32),
    #[error("duplicate template id `{0}`")]
    Duplicate(String),
}

impl BaselineTemplate {
    /// Structural checks that decoding relies on.
    pub fn check(&self) -> Result<(), TemplateError> {
        let bad = |reason| {
            Err(TemplateError::Malformed {
                id: self.id.clone(),
                reason,
            })
        };
        if self.group_channels.contains(&0) {
            return bad("group channels must be positive");
        }
        if self.superblock.is_empty() {
            return bad("superblock is empty");
        }
        match self.classifier.last() {
            Some(Pattern::Linear { .. }) => {}
            _ => return bad("classifier must end with a linear layer"),
        }
        let mut firsts = 0;
        let mut residual = false;
        let mut concat = false;
        let mut linear_in_body = false;
        let mut error = None;
        visit_all(&self.superblock, &mut |p| match p {
            Pattern::Conv { first, kernel, .. } | Pattern::DwConv { first, kernel, .. } => {
                if *first {
                    firsts += 1;
                }
                if kernel % 2 == 0 {
                    error = Some("kernels must be odd");
                }
            }
            Pattern::Residual { body, .. } => {
                residual = true;
                if body.is_empty() {
                    error = Some("residual body is empty");
                }
            }
            Pattern::Concat { branches } => {
                concat = true;
                if branches.len() < 2 {
                    error = Some("concat needs at least two branches");
                }
            }
            Pattern::Linear { .. } | Pattern::GlobalAvgPool => linear_in_body = true,
            _ => {}
        });
        visit_all(&self.stem, &mut |p| match p {
            Pattern::Conv {
                channels: Channels::Ratio(_),
                ..
            } => error = Some("stem channels must be absolute"),
            Pattern::Conv { first: true, .. } | Pattern::DwConv { first: true, .. } => {
                error = Some("stem layers cannot take group genes")
            }
            Pattern::Residual { .. } | Pattern::Concat { .. } => {
                error = Some("stem must be a plain layer sequence")
            }
            _ => {}
        });
        if let Some(reason) = error {
            return bad(reason);
        }
        if firsts == 0 {
            return bad("superblock has no conv marked `first`");
        }
        if linear_in_body {
            return bad("superblock cannot flatten");
        }
        if residual && concat {
            // Pruning equalizes residual endpoints per channel class; a concat
            // output has no single class to equalize.
            return bad("residual and concat cannot be mixed in one superblock");
        }
        Ok(())
    }
}

/// Contents of a template file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateLibrary {
    pub version: u32,
    pub templates: Vec<BaselineTemplate>,
}

impl TemplateLibrary {
    pub fn builtin() -> Self {
        Self {
            version: TEMPLATE_FORMAT_VERSION,
            templates: builtin_templates(),
        }
    }

    pub fn check(&self) -> Result<(), TemplateError> {
        if self.version != TEMPLATE_FORMAT_VERSION {
            return Err(TemplateError::Version(self.version));
        }
        for (i, t) in self.templates.iter().enumerate() {
            t.check()?;
            if self.templates[..i].iter().any(|o| o.id == t.id) {
                return Err(TemplateError::Duplicate(t.id.clone()));
            }
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<&BaselineTemplate, TemplateError> {
        self.templates
            .iter()
            .find(|t| t.id == id)
            .ok_or_else(|| TemplateError::Unknown(id.to_string()))
    }

    /// Resolves a list of ids into a baseline pool, in the given order.
    pub fn pool(&self, ids: &[impl AsRef<str>]) -> Result<Vec<BaselineTemplate>, TemplateError> {
        ids.iter()
            .map(|id| self.get(id.as_ref()).cloned())
            .collect()
    }
}

pub fn builtin_template(id: &str) -> Result<BaselineTemplate, TemplateError> {
    builtin_templates()
        .into_iter()
        .find(|t| t.id == id)
        .ok_or_else(|| TemplateError::Unknown(id.to_string()))
}

fn conv(channels: Channels, kernel: usize, stride: usize) -> Pattern {
    Pattern::Conv {
        channels,
        kernel,
        stride,
        first: false,
        bias: false,
    }
}

fn first_conv(channels: Channels) -> Pattern {
    Pattern::Conv {
        channels,
        kernel: 3,
        stride: 1,
        first: true,
        bias: false,
    }
}

fn first_dw() -> Pattern {
    Pattern::DwConv {
        kernel: 3,
        stride: 1,
        first: true,
    }
}

fn classifier() -> Vec<Pattern> {
    vec![Pattern::GlobalAvgPool, Pattern::Linear { bias: true }]
}

use Channels::{Abs, Ratio};
use Pattern::{BatchNorm, Relu};

/// The six built-in baselines: four image and two time-series templates.
pub fn builtin_templates() -> Vec<BaselineTemplate> {
    let depthwise_separable = vec![
        first_dw(),
        BatchNorm,
        Relu,
        conv(Ratio(1.0), 1, 1),
        BatchNorm,
        Relu,
    ];
    vec![
        BaselineTemplate {
            id: "mbed-2d".to_string(),
            dims: Dims::Two,
            group_channels: [32, 64, 128, 256],
            stem: vec![conv(Abs(16), 3, 2), BatchNorm, Relu],
            superblock: depthwise_separable.clone(),
            classifier: classifier(),
        },
        BaselineTemplate {
            id: "mobilev2-2d".to_string(),
            dims: Dims::Two,
            group_channels: [24, 32, 64, 96],
            stem: vec![conv(Abs(16), 3, 2), BatchNorm, Relu],
            superblock: vec![Pattern::Residual {
                body: vec![
                    conv(Ratio(4.0), 1, 1),
                    BatchNorm,
                    Relu,
                    first_dw(),
                    BatchNorm,
                    Relu,
                    conv(Ratio(1.0), 1, 1),
                    BatchNorm,
                ],
                projection: false,
            }],
            classifier: classifier(),
        },
        BaselineTemplate {
            id: "res-2d".to_string(),
            dims: Dims::Two,
            group_channels: [16, 32, 64, 128],
            stem: vec![
                conv(Abs(16), 3, 2),
                BatchNorm,
                Relu,
                Pattern::MaxPool {
                    kernel: 3,
                    stride: 2,
                },
            ],
            superblock: vec![
                Pattern::Residual {
                    body: vec![
                        first_conv(Ratio(1.0)),
                        BatchNorm,
                        Relu,
                        conv(Ratio(1.0), 3, 1),
                        BatchNorm,
                    ],
                    projection: true,
                },
                Relu,
            ],
            classifier: classifier(),
        },
        BaselineTemplate {
            id: "squeeze-2d".to_string(),
            dims: Dims::Two,
            group_channels: [32, 64, 96, 128],
            stem: vec![
                conv(Abs(32), 3, 2),
                Relu,
                Pattern::MaxPool {
                    kernel: 3,
                    stride: 2,
                },
            ],
            superblock: vec![
                first_conv(Ratio(0.125)),
                Relu,
                Pattern::Concat {
                    branches: vec![
                        vec![conv(Ratio(0.5), 1, 1), Relu],
                        vec![conv(Ratio(0.5), 3, 1), Relu],
                    ],
                },
            ],
            classifier: classifier(),
        },
        BaselineTemplate {
            id: "mbed-1d".to_string(),
            dims: Dims::One,
            group_channels: [16, 32, 64, 128],
            stem: vec![conv(Abs(16), 3, 1), BatchNorm, Relu],
            superblock: depthwise_separable,
            classifier: classifier(),
        },
        BaselineTemplate {
            id: "inception-1d".to_string(),
            dims: Dims::One,
            group_channels: [32, 32, 64, 64],
            stem: vec![conv(Abs(16), 1, 1), BatchNorm, Relu],
            superblock: vec![
                first_conv(Ratio(0.25)),
                Pattern::Concat {
                    branches: vec![
                        vec![conv(Ratio(0.25), 3, 1)],
                        vec![conv(Ratio(0.25), 5, 1)],
                        vec![conv(Ratio(0.25), 9, 1)],
                        vec![
                            Pattern::MaxPool {
                                kernel: 3,
                                stride: 1,
                            },
                            conv(Ratio(0.25), 1, 1),
                        ],
                    ],
                },
                BatchNorm,
                Relu,
            ],
            classifier: classifier(),
        },
    ]
}
