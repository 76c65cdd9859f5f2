use protonas_core::search::{
    evaluate_candidate, BatchEvaluator, CandidateRecord, EvalContext, Job,
};
use rayon::prelude::*;

use crate::Error;

/// Evaluates each batch on a dedicated rayon pool. Records come back in job
/// order, and every candidate draws from its own per-trial seed, so the number
/// of threads never changes the output.
#[derive(Debug)]
pub struct ParallelEvaluator {
    pool: rayon::ThreadPool,
}

impl ParallelEvaluator {
    /// `jobs = 0` uses one thread per available core.
    pub fn new(jobs: usize) -> Result<Self, Error> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::ThreadPool(e.to_string()))?;
        Ok(Self { pool })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl BatchEvaluator for ParallelEvaluator {
    fn evaluate(&self, ctx: &EvalContext, jobs: &[Job]) -> Vec<CandidateRecord> {
        self.pool.install(|| {
            jobs.par_iter()
                .map(|j| evaluate_candidate(&j.genes, ctx, j.trial_index, j.seed))
                .collect()
        })
    }
}
