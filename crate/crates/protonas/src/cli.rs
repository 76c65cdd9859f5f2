//! `protonas explore | select | report | print-defaults | validate-config`.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 completed with an
//! empty result. Training the selected models is outside this tool.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{defaults_document, RunConfig};
use crate::formats;
use crate::pipeline::{self, Outcome};
use crate::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_EMPTY: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "protonas",
    version,
    about = "Zero-shot, constraint-aware architecture search for microcontrollers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration (TOML). Defaults to <out>/config.toml when present.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory (overrides `output` from the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed (overrides the config and PROTONAS_SEED).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the constrained multi-objective search; writes trials.jsonl and pareto.csv.
    Explore {
        #[command(flatten)]
        common: Common,
        /// Worker threads (default: number of cores). Output does not depend on it.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Pick the top-k Pareto candidates by hypervolume subset selection.
    Select {
        #[command(flatten)]
        common: Common,
        /// Subset size (overrides selection.k).
        #[arg(long)]
        k: Option<usize>,
        /// Pareto CSV to read (default: <out>/pareto.csv).
        #[arg(long)]
        pareto: Option<PathBuf>,
    },
    /// Kendall tau-b between FLOPs and the proxies; refreshes summary.json.
    Report {
        #[command(flatten)]
        common: Common,
    },
    /// Print the default configuration.
    PrintDefaults,
    /// Check a configuration file without running anything.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load_config(common: &Common) -> Result<(RunConfig, PathBuf), Error> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => {
            let echo = common.out.as_ref().map(|o| o.join(formats::CONFIG_ECHO));
            match echo.filter(|p| p.exists()) {
                Some(p) => RunConfig::load(&p)?,
                None => RunConfig::default(),
            }
        }
    };
    if let Some(out) = &common.out {
        cfg.output = out.clone();
    }
    let out = cfg.output.clone();
    Ok((cfg, out))
}

fn outcome_code(o: Outcome) -> i32 {
    match o {
        Outcome::Done => EXIT_OK,
        Outcome::Empty => EXIT_EMPTY,
    }
}

fn dispatch(cli: Cli, env_seed: Option<&str>) -> Result<i32, Error> {
    match cli.command {
        Command::Explore { common, jobs } => {
            let (cfg, out) = load_config(&common)?;
            let run = cfg.resolve(common.seed, env_seed)?;
            let o = pipeline::explore(&run, &out, jobs)?;
            if o == Outcome::Empty {
                eprintln!(
                    "warning: no feasible candidates; {} has a header only",
                    out.join(formats::PARETO_CSV).display()
                );
            }
            Ok(outcome_code(o))
        }
        Command::Select { common, k, pareto } => {
            let (cfg, out) = load_config(&common)?;
            let run = cfg.resolve(common.seed, env_seed)?;
            let pareto = pareto.unwrap_or_else(|| out.join(formats::PARETO_CSV));
            let k = k.unwrap_or(run.k);
            if k == 0 {
                return Err(Error::Config("--k must be at least 1".into()));
            }
            Ok(outcome_code(pipeline::select(&run, &out, &pareto, k)?))
        }
        Command::Report { common } => {
            let (cfg, out) = load_config(&common)?;
            let run = cfg.resolve(common.seed, env_seed)?;
            Ok(outcome_code(pipeline::report(&run, &out)?))
        }
        Command::PrintDefaults => {
            print!("{}", defaults_document());
            Ok(EXIT_OK)
        }
        Command::ValidateConfig { config } => {
            let cfg = RunConfig::load(&config)?;
            let run = cfg.resolve(None, env_seed)?;
            println!(
                "{}: ok ({} templates, {} trials, seed {})",
                config.display(),
                run.search.context.space.baselines.len(),
                run.search.trials,
                run.seed
            );
            Ok(EXIT_OK)
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
/// `env_seed` is the value of `PROTONAS_SEED`, if set.
pub fn run<I, T>(args: I, env_seed: Option<&str>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli, env_seed) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

/// Resolves a run directory's config the way `select` and `report` do.
pub fn config_for_dir(dir: &Path) -> Result<RunConfig, Error> {
    load_config(&Common {
        config: None,
        out: Some(dir.to_path_buf()),
        seed: None,
    })
    .map(|(c, _)| c)
}
