//! On-disk formats: JSONL trial log, CSV exports and the run summary.
//!
//! Reals are written with Rust's shortest round-trip formatting, so parsing an
//! export reproduces the in-memory values exactly.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use protonas_core::analysis::TauMatrix;
use protonas_core::archspace::GENE_COUNT;
use protonas_core::search::{CandidateRecord, OBJECTIVE_COUNT, OBJECTIVE_NAMES};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::Error;

pub const TRIAL_LOG: &str = "trials.jsonl";
pub const PARETO_CSV: &str = "pareto.csv";
pub const SELECTION_CSV: &str = "selection.csv";
pub const TAU_CSV: &str = "tau.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const CONFIG_ECHO: &str = "config.toml";

pub const GENE_NAMES: [&str; GENE_COUNT] = [
    "architecture",
    "depth_0",
    "depth_1",
    "depth_2",
    "depth_3",
    "kernel_stride_0",
    "kernel_stride_1",
    "kernel_stride_2",
    "kernel_stride_3",
    "width_multiplier",
    "sparsity_0",
    "sparsity_1",
    "sparsity_2",
    "sparsity_3",
];

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io(path.to_path_buf(), e)
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |e| Error::Format(path.to_path_buf(), e.to_string())
}

// ---------------------------------------------------------------- trial log

/// Append-only JSONL writer, one [`CandidateRecord`] per line.
#[derive(Debug)]
pub struct TrialLogWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl TrialLogWriter {
    pub fn create(path: &Path) -> Result<Self, Error> {
        let file = File::create(path).map_err(io(path))?;
        Ok(Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    pub fn append(&mut self, record: &CandidateRecord) -> Result<(), Error> {
        let line = serde_json::to_string(record)
            .map_err(|e| Error::Format(self.path.clone(), e.to_string()))?;
        writeln!(self.out, "{line}").map_err(io(&self.path))
    }

    pub fn finish(mut self) -> Result<(), Error> {
        self.out.flush().map_err(io(&self.path))
    }
}

pub fn read_trial_log(path: &Path) -> Result<Vec<CandidateRecord>, Error> {
    let file = File::open(path).map_err(io(path))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| Error::Format(path.to_path_buf(), format!("line {}: {e}", n + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

// ---------------------------------------------------------------- pareto / selection

/// One row of `pareto.csv` / `selection.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontRow {
    pub trial_index: usize,
    pub template: String,
    pub genes: [f64; GENE_COUNT],
    pub objectives: [f64; OBJECTIVE_COUNT],
    pub rom_bytes: u64,
    pub ram_bytes: u64,
    pub seed: u64,
}

impl From<&CandidateRecord> for FrontRow {
    fn from(r: &CandidateRecord) -> Self {
        Self {
            trial_index: r.trial_index,
            template: r.template.clone(),
            genes: r.genes.to_genes(),
            objectives: r.objectives,
            rom_bytes: r.costs.rom_bytes,
            ram_bytes: r.costs.ram_bytes,
            seed: r.seed,
        }
    }
}

pub fn front_header() -> Vec<String> {
    let mut h = vec!["trial_index".to_string(), "template".to_string()];
    h.extend(GENE_NAMES.iter().map(|s| s.to_string()));
    h.extend(OBJECTIVE_NAMES.iter().map(|s| s.to_string()));
    h.extend(["rom_bytes", "ram_bytes", "seed"].map(String::from));
    h
}

impl FrontRow {
    fn fields(&self) -> Vec<String> {
        let mut f = vec![self.trial_index.to_string(), self.template.clone()];
        f.extend(self.genes.iter().map(|g| g.to_string()));
        f.extend(self.objectives.iter().map(|o| o.to_string()));
        f.extend([
            self.rom_bytes.to_string(),
            self.ram_bytes.to_string(),
            self.seed.to_string(),
        ]);
        f
    }

    fn parse(rec: &csv::StringRecord, line: u64) -> Result<Self, String> {
        let want = front_header().len();
        if rec.len() != want {
            return Err(format!(
                "line {line}: {} fields, expected {want}",
                rec.len()
            ));
        }
        let num = |i: usize| -> Result<f64, String> {
            rec[i]
                .parse::<f64>()
                .map_err(|_| format!("line {line}: `{}` is not a number", &rec[i]))
        };
        let int = |i: usize| -> Result<u64, String> {
            rec[i]
                .parse::<u64>()
                .map_err(|_| format!("line {line}: `{}` is not an integer", &rec[i]))
        };
        let mut genes = [0.0; GENE_COUNT];
        for (j, g) in genes.iter_mut().enumerate() {
            *g = num(2 + j)?;
        }
        let mut objectives = [0.0; OBJECTIVE_COUNT];
        for (j, o) in objectives.iter_mut().enumerate() {
            *o = num(2 + GENE_COUNT + j)?;
        }
        let tail = 2 + GENE_COUNT + OBJECTIVE_COUNT;
        Ok(Self {
            trial_index: int(0)? as usize,
            template: rec[1].to_string(),
            genes,
            objectives,
            rom_bytes: int(tail)?,
            ram_bytes: int(tail + 1)?,
            seed: int(tail + 2)?,
        })
    }
}

pub fn write_front(path: &Path, rows: &[FrontRow]) -> Result<(), Error> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(front_header()).map_err(csv_err(path))?;
    for r in rows {
        w.write_record(r.fields()).map_err(csv_err(path))?;
    }
    w.flush().map_err(io(path))
}

pub fn read_front(path: &Path) -> Result<Vec<FrontRow>, Error> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header: Vec<String> = r
        .headers()
        .map_err(csv_err(path))?
        .iter()
        .map(String::from)
        .collect();
    if header != front_header() {
        return Err(Error::Format(
            path.to_path_buf(),
            "unexpected header".into(),
        ));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        let line = rec.position().map_or(0, |p| p.line());
        rows.push(FrontRow::parse(&rec, line).map_err(|m| Error::Format(path.to_path_buf(), m))?);
    }
    Ok(rows)
}

// ---------------------------------------------------------------- tau

pub fn write_tau(path: &Path, m: &TauMatrix) -> Result<(), Error> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    let mut header = vec!["series".to_string()];
    header.extend(m.labels.iter().cloned());
    w.write_record(&header).map_err(csv_err(path))?;
    for (label, row) in m.labels.iter().zip(&m.tau) {
        let mut f = vec![label.clone()];
        f.extend(
            row.iter()
                .map(|v| v.map_or_else(|| "NA".to_string(), |t| t.to_string())),
        );
        w.write_record(&f).map_err(csv_err(path))?;
    }
    w.flush().map_err(io(path))
}

pub fn read_tau(path: &Path) -> Result<TauMatrix, Error> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let labels: Vec<String> = r
        .headers()
        .map_err(csv_err(path))?
        .iter()
        .skip(1)
        .map(String::from)
        .collect();
    let mut tau = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        let row = rec
            .iter()
            .skip(1)
            .map(|v| {
                if v == "NA" {
                    Ok(None)
                } else {
                    v.parse().map(Some)
                }
            })
            .collect::<Result<Vec<Option<f64>>, _>>()
            .map_err(|e| Error::Format(path.to_path_buf(), e.to_string()))?;
        tau.push(row);
    }
    Ok(TauMatrix { labels, tau })
}

// ---------------------------------------------------------------- summary

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub trials: usize,
    pub population_size: usize,
    pub genes: usize,
    pub objectives: Vec<String>,
    pub constraints: Vec<String>,
    pub selection_k: usize,
    pub hss_population: usize,
    pub hss_mutation_rate: f64,
    pub hss_max_generations: usize,
    pub hss_stagnation: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionSummary {
    pub k: usize,
    pub selected: usize,
    pub pareto_size: usize,
    pub hypervolume: f64,
    pub generations: usize,
    pub trial_indices: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub seed: u64,
    pub config_hash: String,
    pub trials_logged: usize,
    pub feasible: usize,
    pub failed: usize,
    pub pareto_size: usize,
    pub status: String,
    pub protocol: Protocol,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selection: Option<SelectionSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_series: Option<Vec<String>>,
    pub config: RunConfig,
}

pub fn write_summary(path: &Path, s: &Summary) -> Result<(), Error> {
    let mut text = serde_json::to_string_pretty(s)
        .map_err(|e| Error::Format(path.to_path_buf(), e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(io(path))
}

pub fn read_summary(path: &Path) -> Result<Summary, Error> {
    let text = fs::read_to_string(path).map_err(io(path))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(path.to_path_buf(), e.to_string()))
}
