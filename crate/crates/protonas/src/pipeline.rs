//! The explore → select → report steps over a run directory.

use std::fs;
use std::path::Path;

use log::{info, warn};
use protonas_core::analysis::{tau_matrix, RankSeries};
use protonas_core::archspace::GENE_COUNT;
use protonas_core::hvss::select_normalized;
use protonas_core::search::{run_search, CandidateRecord, OBJECTIVE_NAMES};

use crate::config::{config_hash, ResolvedRun};
use crate::formats::{self, FrontRow, Protocol, SelectionSummary, Summary};
use crate::{Error, ParallelEvaluator};

/// How a step ended when it did not fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Done,
    /// Completed, but there was nothing to report (no feasible candidate).
    Empty,
}

pub const TAU_SERIES: [&str; 5] = ["flops", "meco", "zico", "naswot", "snip"];

fn protocol(run: &ResolvedRun) -> Protocol {
    Protocol {
        trials: run.search.trials,
        population_size: run.search.population_size,
        genes: GENE_COUNT,
        objectives: OBJECTIVE_NAMES.iter().map(|s| s.to_string()).collect(),
        constraints: vec![
            "ram_bytes <= ram_max".into(),
            "rom_bytes <= rom_max".into(),
            "flops <= flops_max".into(),
        ],
        selection_k: run.k,
        hss_population: run.hss.population,
        hss_mutation_rate: run.hss.mutation_rate,
        hss_max_generations: run.hss.generations,
        hss_stagnation: run.hss.stagnation,
    }
}

fn base_summary(run: &ResolvedRun, records: &[CandidateRecord], pareto_size: usize) -> Summary {
    let feasible = records.iter().filter(|r| r.is_archivable()).count();
    Summary {
        seed: run.seed,
        config_hash: config_hash(&run.config),
        trials_logged: records.len(),
        feasible,
        failed: records.iter().filter(|r| r.failure.is_some()).count(),
        pareto_size,
        status: if pareto_size == 0 {
            "no feasible candidates".into()
        } else {
            "ok".into()
        },
        protocol: protocol(run),
        selection: None,
        tau_series: None,
        config: run.config.clone(),
    }
}

fn remove_if_present(path: &Path) -> Result<(), Error> {
    match fs::remove_file(path) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(Error::Io(path.to_path_buf(), e)),
        _ => Ok(()),
    }
}

/// Runs the search, writing the trial log, `pareto.csv`, the config echo and
/// a fresh summary. Earlier selection and tau outputs are removed.
pub fn explore(run: &ResolvedRun, out: &Path, jobs: usize) -> Result<Outcome, Error> {
    fs::create_dir_all(out).map_err(|e| Error::Io(out.to_path_buf(), e))?;
    for stale in [formats::SELECTION_CSV, formats::TAU_CSV] {
        remove_if_present(&out.join(stale))?;
    }
    let echo = out.join(formats::CONFIG_ECHO);
    fs::write(&echo, run.config.to_toml()).map_err(|e| Error::Io(echo.clone(), e))?;

    let evaluator = ParallelEvaluator::new(jobs)?;
    info!(
        "exploring {} trials on {} threads",
        run.search.trials,
        evaluator.threads()
    );
    let mut log = formats::TrialLogWriter::create(&out.join(formats::TRIAL_LOG))?;
    let mut write_error = None;
    let archive = run_search(&run.search, &evaluator, |r| {
        if write_error.is_none() {
            write_error = log.append(r).err();
        }
        if (r.trial_index + 1) % run.search.population_size == 0 {
            info!("{} / {} trials", r.trial_index + 1, run.search.trials);
        }
    })
    .map_err(|e| Error::Config(e.to_string()))?;
    if let Some(e) = write_error {
        return Err(e);
    }
    log.finish()?;

    let mut pareto: Vec<&CandidateRecord> = archive.pareto_records().collect();
    pareto.sort_by_key(|r| r.trial_index);
    let rows: Vec<FrontRow> = pareto.iter().map(|r| FrontRow::from(*r)).collect();
    formats::write_front(&out.join(formats::PARETO_CSV), &rows)?;
    formats::write_summary(
        &out.join(formats::SUMMARY_JSON),
        &base_summary(run, &archive.records, rows.len()),
    )?;
    if rows.is_empty() {
        warn!(
            "no feasible candidate under profile `{}`",
            run.config.profile.name
        );
        return Ok(Outcome::Empty);
    }
    Ok(Outcome::Done)
}

/// Hypervolume subset selection of `k` rows of a Pareto CSV into `selection.csv`.
pub fn select(
    run: &ResolvedRun,
    out: &Path,
    pareto_csv: &Path,
    k: usize,
) -> Result<Outcome, Error> {
    let rows = formats::read_front(pareto_csv)?;
    let summary_path = out.join(formats::SUMMARY_JSON);
    let mut summary = if summary_path.exists() {
        formats::read_summary(&summary_path)?
    } else {
        base_summary(run, &[], rows.len())
    };
    fs::create_dir_all(out).map_err(|e| Error::Io(out.to_path_buf(), e))?;
    if rows.is_empty() {
        formats::write_front(&out.join(formats::SELECTION_CSV), &[])?;
        summary.selection = None;
        formats::write_summary(&summary_path, &summary)?;
        warn!("{} has no rows; nothing to select", pareto_csv.display());
        return Ok(Outcome::Empty);
    }
    let objectives: Vec<Vec<f64>> = rows.iter().map(|r| r.objectives.to_vec()).collect();
    let k_eff = k.min(rows.len());
    let sel = select_normalized(&objectives, k_eff, &run.hss)
        .map_err(|e| Error::Config(e.to_string()))?;
    let chosen: Vec<FrontRow> = sel.indices.iter().map(|&i| rows[i].clone()).collect();
    formats::write_front(&out.join(formats::SELECTION_CSV), &chosen)?;
    summary.selection = Some(SelectionSummary {
        k,
        selected: chosen.len(),
        pareto_size: rows.len(),
        hypervolume: sel.hypervolume,
        generations: sel.generations,
        trial_indices: chosen.iter().map(|r| r.trial_index).collect(),
        note: (k >= rows.len())
            .then(|| format!("k = {k} >= |P| = {}; all Pareto rows selected", rows.len())),
    });
    formats::write_summary(&summary_path, &summary)?;
    Ok(Outcome::Done)
}

/// Tau-b matrix over FLOPs and the four proxies of every feasible trial.
pub fn report(run: &ResolvedRun, out: &Path) -> Result<Outcome, Error> {
    let records = formats::read_trial_log(&out.join(formats::TRIAL_LOG))?;
    let feasible: Vec<&CandidateRecord> = records.iter().filter(|r| r.is_archivable()).collect();
    let pareto_csv = out.join(formats::PARETO_CSV);
    let pareto_size = if pareto_csv.exists() {
        formats::read_front(&pareto_csv)?.len()
    } else {
        0
    };

    let column =
        |f: &dyn Fn(&CandidateRecord) -> f64| feasible.iter().map(|r| f(r)).collect::<Vec<f64>>();
    let proxies =
        |r: &CandidateRecord| r.proxies.expect("archivable records are scored").to_array();
    let series = vec![
        RankSeries::new(TAU_SERIES[0], column(&|r| r.costs.flops as f64)),
        RankSeries::new(TAU_SERIES[1], column(&|r| proxies(r)[0])),
        RankSeries::new(TAU_SERIES[2], column(&|r| proxies(r)[1])),
        RankSeries::new(TAU_SERIES[3], column(&|r| proxies(r)[2])),
        RankSeries::new(TAU_SERIES[4], column(&|r| proxies(r)[3])),
    ];
    let tau = match tau_matrix(&series) {
        Ok(m) => m,
        // Fewer than two feasible trials: every entry is undefined.
        Err(_) => protonas_core::TauMatrix {
            labels: TAU_SERIES.iter().map(|s| s.to_string()).collect(),
            tau: vec![vec![None; TAU_SERIES.len()]; TAU_SERIES.len()],
        },
    };
    formats::write_tau(&out.join(formats::TAU_CSV), &tau)?;

    let summary_path = out.join(formats::SUMMARY_JSON);
    let previous = if summary_path.exists() {
        formats::read_summary(&summary_path).ok()
    } else {
        None
    };
    let mut summary = base_summary(run, &records, pareto_size);
    summary.selection = previous.and_then(|s| s.selection);
    summary.tau_series = Some(TAU_SERIES.iter().map(|s| s.to_string()).collect());
    formats::write_summary(&summary_path, &summary)?;
    Ok(if feasible.is_empty() {
        Outcome::Empty
    } else {
        Outcome::Done
    })
}
