//! Run configuration: one TOML file with every default embedded.

use std::fs;
use std::path::{Path, PathBuf};

use protonas_core::archspace::{KernelStride, TemplateLibrary, IMAGE_POOL, TIME_SERIES_POOL};
use protonas_core::costmodel::TargetProfile;
use protonas_core::hvss::HssConfig;
use protonas_core::proxies::ProxyConfig;
use protonas_core::rng::mix64;
use protonas_core::search::{EvalContext, SearchConfig};
use protonas_core::{SearchSpaceDef, TaskShape};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::Error;

/// Template library shipped with the crate; identical to the built-in one.
pub const BUNDLED_TEMPLATES: &str = include_str!("../templates/baselines.toml");

pub const SEED_ENV: &str = "PROTONAS_SEED";

const HSS_STREAM: u64 = 0x6873_732d_6761;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Base seed. Overridden by `--seed`; falls back to `PROTONAS_SEED`, then 0.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub output: PathBuf,
    /// Template file; the built-in library when absent. Relative paths are
    /// resolved against the config file's directory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub templates: Option<PathBuf>,
    pub search: SearchSection,
    pub task: TaskSection,
    pub space: SpaceSection,
    pub profile: TargetProfile,
    pub proxy: ProxyConfig,
    pub selection: SelectionSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            output: PathBuf::from("protonas-run"),
            templates: None,
            search: SearchSection::default(),
            task: TaskSection::default(),
            space: SpaceSection::default(),
            profile: TargetProfile::imxrt1062_like(),
            proxy: ProxyConfig::default(),
            selection: SelectionSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSection {
    pub trials: usize,
    pub population_size: usize,
}

impl Default for SearchSection {
    fn default() -> Self {
        Self {
            trials: 500,
            population_size: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Image,
    TimeSeries,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSection {
    pub kind: TaskKind,
    pub channels: usize,
    /// Ignored for time series.
    pub height: usize,
    /// Image width or time-series window length.
    pub width: usize,
    pub classes: usize,
}

impl Default for TaskSection {
    fn default() -> Self {
        Self {
            kind: TaskKind::Image,
            channels: 3,
            height: 128,
            width: 128,
            classes: 10,
        }
    }
}

impl TaskSection {
    pub fn shape(&self) -> TaskShape {
        match self.kind {
            TaskKind::Image => TaskShape {
                dims: protonas_core::archspace::Dims::Two,
                channels: self.channels,
                spatial: [self.height, self.width],
                num_classes: self.classes,
            },
            TaskKind::TimeSeries => TaskShape::time_series(self.channels, self.width, self.classes),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpaceSection {
    /// Template ids; the task kind's standard pool when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pool: Option<Vec<String>>,
    pub depth_values: Vec<usize>,
    pub kernel_stride_values: Vec<KernelStride>,
    pub width_range: [f64; 2],
    pub sparsity_range: [f64; 2],
}

impl Default for SpaceSection {
    fn default() -> Self {
        let s = SearchSpaceDef::standard(Vec::new());
        Self {
            pool: None,
            depth_values: s.depth_values,
            kernel_stride_values: s.kernel_stride_values,
            width_range: s.width_range,
            sparsity_range: s.sparsity_range,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionSection {
    pub k: usize,
    pub population: usize,
    pub mutation_rate: f64,
    pub generations: usize,
    pub stagnation: usize,
}

impl Default for SelectionSection {
    fn default() -> Self {
        let h = HssConfig::default();
        Self {
            k: 5,
            population: h.population,
            mutation_rate: h.mutation_rate,
            generations: h.generations,
            stagnation: h.stagnation,
        }
    }
}

/// A config with every indirection resolved.
#[derive(Debug, Clone)]
pub struct ResolvedRun {
    /// Echo of the effective config (seed filled in).
    pub config: RunConfig,
    pub seed: u64,
    pub search: SearchConfig,
    pub hss: HssConfig,
    pub k: usize,
}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self, Error> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| {
            Error::Config(format!(
                "{}: {}",
                origin.display(),
                e.to_string().trim_end()
            ))
        })?;
        if let (Some(t), Some(dir)) = (&cfg.templates, origin.parent()) {
            if t.is_relative() && !dir.as_os_str().is_empty() {
                cfg.templates = Some(dir.join(t));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io(path.to_path_buf(), e))?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Seed precedence: explicit override, config file, environment, 0.
    pub fn effective_seed(&self, overridden: Option<u64>, env: Option<&str>) -> Result<u64, Error> {
        if let Some(s) = overridden.or(self.seed) {
            return Ok(s);
        }
        match env {
            Some(v) => v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
            None => Ok(0),
        }
    }

    fn library(&self) -> Result<TemplateLibrary, Error> {
        let lib = match &self.templates {
            None => TemplateLibrary::builtin(),
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::Io(path.clone(), e))?;
                parse_templates(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            }
        };
        lib.check().map_err(|e| Error::Config(e.to_string()))?;
        Ok(lib)
    }

    pub fn resolve(
        &self,
        seed_override: Option<u64>,
        env_seed: Option<&str>,
    ) -> Result<ResolvedRun, Error> {
        let seed = self.effective_seed(seed_override, env_seed)?;
        let lib = self.library()?;
        let pool: Vec<String> = match (&self.space.pool, self.task.kind) {
            (Some(p), _) => p.clone(),
            (None, TaskKind::Image) => IMAGE_POOL.iter().map(|s| s.to_string()).collect(),
            (None, TaskKind::TimeSeries) => {
                TIME_SERIES_POOL.iter().map(|s| s.to_string()).collect()
            }
        };
        let baselines = lib.pool(&pool).map_err(|e| Error::Config(e.to_string()))?;
        let task = self.task.shape();
        if let Some(t) = baselines.iter().find(|t| t.dims != task.dims) {
            return Err(Error::Config(format!(
                "template `{}` does not match the {:?} task",
                t.id, self.task.kind
            )));
        }
        let space = SearchSpaceDef {
            baselines,
            depth_values: self.space.depth_values.clone(),
            kernel_stride_values: self.space.kernel_stride_values.clone(),
            width_range: self.space.width_range,
            sparsity_range: self.space.sparsity_range,
        };
        let search = SearchConfig {
            trials: self.search.trials,
            population_size: self.search.population_size,
            base_seed: seed,
            context: EvalContext {
                space,
                task,
                profile: self.profile.clone(),
                proxy: self.proxy,
            },
        };
        search
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        let sel = &self.selection;
        let hss = HssConfig {
            population: sel.population,
            mutation_rate: sel.mutation_rate,
            generations: sel.generations,
            stagnation: sel.stagnation,
            seed: mix64(seed ^ HSS_STREAM),
        };
        hss.validate().map_err(|e| Error::Config(e.to_string()))?;
        if sel.k == 0 {
            return Err(Error::Config("selection.k must be at least 1".into()));
        }
        let mut config = self.clone();
        config.seed = Some(seed);
        Ok(ResolvedRun {
            config,
            seed,
            search,
            hss,
            k: sel.k,
        })
    }
}

pub fn parse_templates(text: &str) -> Result<TemplateLibrary, String> {
    toml::from_str(text).map_err(|e| e.to_string().trim_end().to_string())
}

/// SHA-256 of the canonical TOML serialization.
pub fn config_hash(cfg: &RunConfig) -> String {
    hex::encode(Sha256::digest(cfg.to_toml().as_bytes()))
}

/// Text printed by `print-defaults`.
pub fn defaults_document() -> String {
    format!(
        "# protonas run configuration (all values shown are the defaults)\n\
         # seed = 0        # base seed; --seed overrides it, PROTONAS_SEED is used when unset\n\
         # templates = \"baselines.toml\"   # built-in templates when unset\n\
         # [space] pool = [...]            # defaults to the task kind's standard pool\n\n{}",
        RunConfig::default().to_toml()
    )
}
