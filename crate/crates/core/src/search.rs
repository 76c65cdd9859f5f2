//! Candidate evaluation and the constrained multi-objective search loop.
//!
//! Objectives are all minimized: `[flops, -meco, -zico, -naswot, -snip]`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::archspace::{
    apply_static_pruning, decode, sample, HyperparamVector, SearchSpaceDef, TaskShape, GENE_COUNT,
    GROUP_COUNT,
};
use crate::costmodel::{self, CostEstimate, Feasibility, QuantScheme, TargetProfile};
use crate::proxies::{evaluate_ensemble, ProxyConfig, ProxyScores};
use crate::rng::{self, mix64, trial_seed};
use crate::tensorcore::init_params;

pub const OBJECTIVE_COUNT: usize = 5;
pub const OBJECTIVE_NAMES: [&str; OBJECTIVE_COUNT] =
    ["flops", "neg_meco", "neg_zico", "neg_naswot", "neg_snip"];

/// Proxy objective placeholder for candidates that were never scored.
pub const WORST_OBJECTIVE: f64 = f64::MAX;

const CROSSOVER_RATE: f64 = 0.9;
/// Gaussian mutation step as a fraction of a continuous gene's range.
const MUTATION_SIGMA: f64 = 0.1;
const SEARCH_STREAM: u64 = 0x6e_7367_612d_6969;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub trial_index: usize,
    pub seed: u64,
    pub template: String,
    pub genes: HyperparamVector,
    pub objectives: [f64; OBJECTIVE_COUNT],
    pub costs: CostEstimate,
    pub feasibility: Feasibility,
    /// `None` when the candidate was infeasible or failed.
    pub proxies: Option<ProxyScores>,
    /// Why evaluation failed (decode or execution error).
    pub failure: Option<String>,
}

impl CandidateRecord {
    /// Feasible and successfully scored.
    pub fn is_archivable(&self) -> bool {
        self.feasibility.feasible && self.failure.is_none() && self.proxies.is_some()
    }
}

/// Everything needed to turn genes into a record.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalContext {
    pub space: SearchSpaceDef,
    pub task: TaskShape,
    pub profile: TargetProfile,
    pub proxy: ProxyConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    pub trials: usize,
    pub population_size: usize,
    pub base_seed: u64,
    pub context: EvalContext,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("invalid search config: {0}")]
    Invalid(String),
}

impl SearchConfig {
    pub fn new(context: EvalContext, base_seed: u64) -> Self {
        Self {
            trials: 500,
            population_size: 50,
            base_seed,
            context,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.population_size < 2 {
            return bad(format!("population_size {} < 2", self.population_size));
        }
        if self.trials < self.population_size {
            return bad(format!(
                "trials {} < population_size {}",
                self.trials, self.population_size
            ));
        }
        self.context
            .space
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("{e}")))?;
        if !self.context.profile.is_valid() {
            return bad(String::from("target profile limits must be positive"));
        }
        self.context
            .proxy
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("{e}")))?;
        let t = &self.context.task;
        if t.channels == 0 || t.num_classes < 2 || t.spatial.contains(&0) {
            return bad(String::from(
                "task needs channels >= 1, classes >= 2 and a non-empty input",
            ));
        }
        Ok(())
    }
}

fn failed(
    trial_index: usize,
    seed: u64,
    template: String,
    genes: &HyperparamVector,
    why: String,
) -> CandidateRecord {
    CandidateRecord {
        trial_index,
        seed,
        template,
        genes: genes.clone(),
        objectives: [
            0.0,
            WORST_OBJECTIVE,
            WORST_OBJECTIVE,
            WORST_OBJECTIVE,
            WORST_OBJECTIVE,
        ],
        costs: CostEstimate {
            flops: 0,
            rom_bytes: 0,
            ram_bytes: 0,
        },
        feasibility: Feasibility {
            feasible: false,
            violation: f64::MAX,
        },
        proxies: None,
        failure: Some(why),
    }
}

/// decode → prune → cost → feasibility → proxies (feasible candidates only).
/// Pure in `(x, seed)`.
pub fn evaluate_candidate(
    x: &HyperparamVector,
    ctx: &EvalContext,
    trial_index: usize,
    seed: u64,
) -> CandidateRecord {
    let template = ctx
        .space
        .baselines
        .get(x.architecture)
        .map(|t| t.id.clone())
        .unwrap_or_default();
    let graph = match decode(x, &ctx.space, &ctx.task) {
        Ok(g) => apply_static_pruning(&g, &x.pruning_sparsity),
        Err(e) => return failed(trial_index, seed, template, x, format!("decode: {e}")),
    };
    let costs = costmodel::estimate(&graph, &QuantScheme::for_profile(&ctx.profile));
    let feasibility = costmodel::check(&costs, &ctx.profile);
    let mut record = CandidateRecord {
        trial_index,
        seed,
        template,
        genes: x.clone(),
        objectives: [
            costs.flops as f64,
            WORST_OBJECTIVE,
            WORST_OBJECTIVE,
            WORST_OBJECTIVE,
            WORST_OBJECTIVE,
        ],
        costs,
        feasibility,
        proxies: None,
        failure: None,
    };
    if !feasibility.feasible {
        return record;
    }
    let mut rng = rng::seeded(seed);
    let params = init_params(&graph, &mut rng);
    match evaluate_ensemble(&graph, &params, &ctx.proxy, &mut rng) {
        Ok(p) => {
            record.objectives[1..].copy_from_slice(&p.to_array().map(|v| -v));
            record.proxies = Some(p);
        }
        Err(e) => record.failure = Some(format!("proxies: {e}")),
    }
    record
}

/// One unit of work for a [`BatchEvaluator`].
#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub trial_index: usize,
    pub seed: u64,
    pub genes: HyperparamVector,
}

/// Evaluates a batch of jobs; implementations may run them concurrently but
/// must return one record per job.
pub trait BatchEvaluator {
    fn evaluate(&self, ctx: &EvalContext, jobs: &[Job]) -> Vec<CandidateRecord>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SequentialEvaluator;

impl BatchEvaluator for SequentialEvaluator {
    fn evaluate(&self, ctx: &EvalContext, jobs: &[Job]) -> Vec<CandidateRecord> {
        jobs.iter()
            .map(|j| evaluate_candidate(&j.genes, ctx, j.trial_index, j.seed))
            .collect()
    }
}

// ---------------------------------------------------------------- dominance

fn pareto_dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strictly = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        strictly |= x < y;
    }
    strictly
}

/// Feasible beats infeasible, infeasible records compare by violation, and
/// feasible records by Pareto dominance.
pub fn constrained_dominates(a: &CandidateRecord, b: &CandidateRecord) -> bool {
    match (a.is_archivable(), b.is_archivable()) {
        (true, false) => true,
        (false, true) => false,
        (false, false) => a.feasibility.violation < b.feasibility.violation,
        (true, true) => pareto_dominates(&a.objectives, &b.objectives),
    }
}

/// Fast non-dominated sorting under [`constrained_dominates`]; fronts hold
/// indices into `records` in ascending order.
pub fn nondominated_sort(records: &[CandidateRecord]) -> Vec<Vec<usize>> {
    let n = records.len();
    let mut dominated_by = alloc::vec![0usize; n];
    let mut dominates: Vec<Vec<usize>> = alloc::vec![Vec::new(); n];
    for i in 0..n {
        for j in i + 1..n {
            if constrained_dominates(&records[i], &records[j]) {
                dominates[i].push(j);
                dominated_by[j] += 1;
            } else if constrained_dominates(&records[j], &records[i]) {
                dominates[j].push(i);
                dominated_by[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominates[i] {
                dominated_by[j] -= 1;
                if dominated_by[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

/// NSGA-II crowding distance of each member of one front.
pub fn crowding_distance(objectives: &[[f64; OBJECTIVE_COUNT]]) -> Vec<f64> {
    let n = objectives.len();
    let mut dist = alloc::vec![0.0; n];
    if n <= 2 {
        return alloc::vec![f64::INFINITY; n];
    }
    let mut order: Vec<usize> = (0..n).collect();
    for m in 0..OBJECTIVE_COUNT {
        order.sort_by(|&a, &b| {
            objectives[a][m]
                .partial_cmp(&objectives[b][m])
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(&b))
        });
        dist[order[0]] = f64::INFINITY;
        dist[order[n - 1]] = f64::INFINITY;
        let span = objectives[order[n - 1]][m] - objectives[order[0]][m];
        if !(span > 0.0) || !span.is_finite() {
            continue;
        }
        for w in 1..n - 1 {
            dist[order[w]] += (objectives[order[w + 1]][m] - objectives[order[w - 1]][m]) / span;
        }
    }
    dist
}

// ---------------------------------------------------------------- archive

/// Every evaluated record plus the online Pareto set of archivable ones.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParetoArchive {
    pub records: Vec<CandidateRecord>,
    /// Indices into `records`, ascending.
    pub pareto: Vec<usize>,
}

impl ParetoArchive {
    pub fn insert(&mut self, record: CandidateRecord) {
        let idx = self.records.len();
        let archivable = record.is_archivable();
        let objectives = record.objectives;
        self.records.push(record);
        if !archivable {
            return;
        }
        if self
            .pareto
            .iter()
            .any(|&p| pareto_dominates(&self.records[p].objectives, &objectives))
        {
            return;
        }
        let records = &self.records;
        self.pareto
            .retain(|&p| !pareto_dominates(&objectives, &records[p].objectives));
        self.pareto.push(idx);
    }

    pub fn pareto_records(&self) -> impl Iterator<Item = &CandidateRecord> {
        self.pareto.iter().map(|&i| &self.records[i])
    }

    pub fn pareto_objectives(&self) -> Vec<[f64; OBJECTIVE_COUNT]> {
        self.pareto_records().map(|r| r.objectives).collect()
    }
}

// ---------------------------------------------------------------- variation

fn search_rng(base_seed: u64) -> rng::Rng {
    rng::seeded(mix64(base_seed ^ SEARCH_STREAM))
}

fn mutate_continuous<R: Rng + ?Sized>(v: f64, range: [f64; 2], rng: &mut R) -> f64 {
    let sigma = MUTATION_SIGMA * (range[1] - range[0]);
    if !(sigma > 0.0) {
        return range[0];
    }
    let step = Normal::new(0.0, sigma).expect("positive sigma").sample(rng);
    (v + step).clamp(range[0], range[1])
}

/// Uniform gene-wise crossover with probability 0.9, then per-gene mutation
/// with probability 1/14.
fn make_child<R: Rng + ?Sized>(
    a: &HyperparamVector,
    b: &HyperparamVector,
    space: &SearchSpaceDef,
    rng: &mut R,
) -> HyperparamVector {
    let mut c = a.clone();
    if rng.random_bool(CROSSOVER_RATE) {
        let pick = |rng: &mut R| rng.random_bool(0.5);
        if pick(rng) {
            c.architecture = b.architecture;
        }
        for g in 0..GROUP_COUNT {
            if pick(rng) {
                c.group_depth[g] = b.group_depth[g];
            }
        }
        for g in 0..GROUP_COUNT {
            if pick(rng) {
                c.kernel_stride[g] = b.kernel_stride[g];
            }
        }
        if pick(rng) {
            c.width_multiplier = b.width_multiplier;
        }
        for g in 0..GROUP_COUNT {
            if pick(rng) {
                c.pruning_sparsity[g] = b.pruning_sparsity[g];
            }
        }
    }
    let p = 1.0 / GENE_COUNT as f64;
    if rng.random_bool(p) {
        c.architecture = rng.random_range(0..space.baselines.len());
    }
    for g in 0..GROUP_COUNT {
        if rng.random_bool(p) {
            c.group_depth[g] = space.depth_values[rng.random_range(0..space.depth_values.len())];
        }
    }
    for g in 0..GROUP_COUNT {
        if rng.random_bool(p) {
            c.kernel_stride[g] = rng.random_range(0..space.kernel_stride_values.len());
        }
    }
    if rng.random_bool(p) {
        c.width_multiplier = mutate_continuous(c.width_multiplier, space.width_range, rng);
    }
    for g in 0..GROUP_COUNT {
        if rng.random_bool(p) {
            c.pruning_sparsity[g] =
                mutate_continuous(c.pruning_sparsity[g], space.sparsity_range, rng);
        }
    }
    c
}

/// Front rank and crowding distance per population member.
fn rank_and_crowd(pop: &[CandidateRecord]) -> (Vec<usize>, Vec<f64>) {
    let mut rank = alloc::vec![0; pop.len()];
    let mut crowd = alloc::vec![0.0; pop.len()];
    for (r, front) in nondominated_sort(pop).iter().enumerate() {
        let objs: Vec<[f64; OBJECTIVE_COUNT]> = front.iter().map(|&i| pop[i].objectives).collect();
        for (&i, d) in front.iter().zip(crowding_distance(&objs)) {
            rank[i] = r;
            crowd[i] = d;
        }
    }
    (rank, crowd)
}

fn better(i: usize, j: usize, rank: &[usize], crowd: &[f64]) -> bool {
    rank[i] < rank[j] || (rank[i] == rank[j] && crowd[i] > crowd[j])
}

/// Best `keep` members by front, then by crowding distance within the last front.
fn survivors(pool: Vec<CandidateRecord>, keep: usize) -> Vec<CandidateRecord> {
    let mut chosen: Vec<usize> = Vec::with_capacity(keep);
    for front in nondominated_sort(&pool) {
        if chosen.len() + front.len() <= keep {
            chosen.extend(&front);
            continue;
        }
        let objs: Vec<[f64; OBJECTIVE_COUNT]> = front.iter().map(|&i| pool[i].objectives).collect();
        let dist = crowding_distance(&objs);
        let mut order: Vec<usize> = (0..front.len()).collect();
        order.sort_by(|&a, &b| {
            dist[b]
                .partial_cmp(&dist[a])
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(&b))
        });
        chosen.extend(order[..keep - chosen.len()].iter().map(|&o| front[o]));
        break;
    }
    chosen.sort_unstable();
    let mut pool: Vec<Option<CandidateRecord>> = pool.into_iter().map(Some).collect();
    chosen
        .into_iter()
        .map(|i| pool[i].take().expect("chosen once"))
        .collect()
}

fn evaluate_into<E: BatchEvaluator + ?Sized, F: FnMut(&CandidateRecord)>(
    cfg: &SearchConfig,
    evaluator: &E,
    genes: Vec<HyperparamVector>,
    first_index: usize,
    archive: &mut ParetoArchive,
    on_record: &mut F,
) -> Vec<CandidateRecord> {
    let jobs: Vec<Job> = genes
        .into_iter()
        .enumerate()
        .map(|(o, genes)| {
            let trial_index = first_index + o;
            Job {
                trial_index,
                seed: trial_seed(cfg.base_seed, trial_index as u64),
                genes,
            }
        })
        .collect();
    let mut out = evaluator.evaluate(&cfg.context, &jobs);
    assert_eq!(
        out.len(),
        jobs.len(),
        "evaluator must return one record per job"
    );
    out.sort_by_key(|r| r.trial_index);
    for r in &out {
        on_record(r);
        archive.insert(r.clone());
    }
    out
}

/// NSGA-II over the search space with exactly `cfg.trials` evaluations.
/// `on_record` sees every record in trial order as soon as its batch finishes.
pub fn run_search<E: BatchEvaluator + ?Sized, F: FnMut(&CandidateRecord)>(
    cfg: &SearchConfig,
    evaluator: &E,
    mut on_record: F,
) -> Result<ParetoArchive, ConfigError> {
    cfg.validate()?;
    let space = &cfg.context.space;
    let mut rng = search_rng(cfg.base_seed);
    let mut archive = ParetoArchive::default();

    let initial: Vec<HyperparamVector> = (0..cfg.population_size)
        .map(|_| sample(&mut rng, space))
        .collect();
    let mut pop = evaluate_into(cfg, evaluator, initial, 0, &mut archive, &mut on_record);
    let mut done = pop.len();
    while done < cfg.trials {
        let batch = cfg.population_size.min(cfg.trials - done);
        let (rank, crowd) = rank_and_crowd(&pop);
        let tournament = |rng: &mut rng::Rng| {
            let i = rng.random_range(0..pop.len());
            let j = rng.random_range(0..pop.len());
            if better(j, i, &rank, &crowd) {
                j
            } else {
                i
            }
        };
        let children: Vec<HyperparamVector> = (0..batch)
            .map(|_| {
                let a = tournament(&mut rng);
                let b = tournament(&mut rng);
                make_child(&pop[a].genes, &pop[b].genes, space, &mut rng)
            })
            .collect();
        let offspring = evaluate_into(cfg, evaluator, children, done, &mut archive, &mut on_record);
        done += offspring.len();
        pop.extend(offspring);
        pop = survivors(pop, cfg.population_size);
    }
    Ok(archive)
}

/// Baseline: `cfg.trials` uniform samples. The first `population_size` samples
/// coincide with the initial population of [`run_search`] for the same seed.
pub fn run_random_search<E: BatchEvaluator + ?Sized, F: FnMut(&CandidateRecord)>(
    cfg: &SearchConfig,
    evaluator: &E,
    mut on_record: F,
) -> Result<ParetoArchive, ConfigError> {
    cfg.validate()?;
    let mut rng = search_rng(cfg.base_seed);
    let mut archive = ParetoArchive::default();
    let mut done = 0;
    while done < cfg.trials {
        let batch = cfg.population_size.min(cfg.trials - done);
        let genes: Vec<HyperparamVector> = (0..batch)
            .map(|_| sample(&mut rng, &cfg.context.space))
            .collect();
        done += evaluate_into(cfg, evaluator, genes, done, &mut archive, &mut on_record).len();
    }
    Ok(archive)
}
