//! Exact hypervolume (minimization) and evolutionary hypervolume subset selection.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng;

/// Reference coordinate used after min-max normalization.
pub const NORMALIZED_REF: f64 = 1.1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HvError {
    #[error("point {index} has {got} objectives, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("cannot select {k} of {available} points")]
    InfeasibleK { k: usize, available: usize },
    #[error("subset enumeration too large: {0} combinations")]
    TooManyCombinations(u128),
}

fn check_dims<P: AsRef<[f64]>>(points: &[P], reference: &[f64]) -> Result<(), HvError> {
    for (index, p) in points.iter().enumerate() {
        if p.as_ref().len() != reference.len() {
            return Err(HvError::DimensionMismatch {
                index,
                expected: reference.len(),
                got: p.as_ref().len(),
            });
        }
    }
    Ok(())
}

fn weakly_dominates(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y)
}

/// Drops dominated points and duplicates.
fn nondominated(mut pts: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    // Sorting lexicographically puts every dominator before what it dominates.
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(pts.len());
    for p in pts {
        if !out.iter().any(|q| weakly_dominates(q, &p)) {
            out.push(p);
        }
    }
    out
}

fn box_volume(p: &[f64], reference: &[f64]) -> f64 {
    p.iter().zip(reference).map(|(x, r)| r - x).product()
}

fn hv2(pts: &mut [Vec<f64>], reference: &[f64]) -> f64 {
    pts.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap_or(Ordering::Equal));
    let mut vol = 0.0;
    let mut best_y = reference[1];
    for p in pts.iter() {
        if p[1] < best_y {
            vol += (reference[0] - p[0]) * (best_y - p[1]);
            best_y = p[1];
        }
    }
    vol
}

/// WFG recursion on a non-dominated set strictly inside the reference box.
fn wfg(mut pts: Vec<Vec<f64>>, reference: &[f64]) -> f64 {
    match (pts.len(), reference.len()) {
        (0, _) => return 0.0,
        (1, _) => return box_volume(&pts[0], reference),
        (_, 1) => return pts.iter().map(|p| reference[0] - p[0]).fold(0.0, f64::max),
        (_, 2) => return hv2(&mut pts, reference),
        _ => {}
    }
    // Worst-last-objective first keeps the limited sets small.
    let d = reference.len() - 1;
    pts.sort_by(|a, b| b[d].partial_cmp(&a[d]).unwrap_or(Ordering::Equal));
    let mut total = 0.0;
    for i in 0..pts.len() {
        let p = &pts[i];
        let limited: Vec<Vec<f64>> = pts[i + 1..]
            .iter()
            .map(|q| q.iter().zip(p).map(|(a, b)| a.max(*b)).collect())
            .collect();
        total += box_volume(p, reference) - wfg(nondominated(limited), reference);
    }
    total
}

/// Exact hypervolume dominated by `points` and bounded by `reference`. Points not
/// strictly better than the reference in every objective contribute nothing.
pub fn hypervolume<P: AsRef<[f64]>>(points: &[P], reference: &[f64]) -> Result<f64, HvError> {
    check_dims(points, reference)?;
    let inside: Vec<Vec<f64>> = points
        .iter()
        .map(AsRef::as_ref)
        .filter(|p| p.iter().zip(reference).all(|(x, r)| x < r))
        .map(<[f64]>::to_vec)
        .collect();
    Ok(wfg(nondominated(inside), reference))
}

/// Monte-Carlo hypervolume estimate over the box `[min(0, points), reference]`.
pub fn hv_monte_carlo<P: AsRef<[f64]>, R: Rng + ?Sized>(
    points: &[P],
    reference: &[f64],
    samples: usize,
    rng: &mut R,
) -> Result<f64, HvError> {
    check_dims(points, reference)?;
    if points.is_empty() || samples == 0 {
        return Ok(0.0);
    }
    let lower: Vec<f64> = (0..reference.len())
        .map(|j| points.iter().map(|p| p.as_ref()[j]).fold(0.0, f64::min))
        .collect();
    let mut z = vec![0.0; reference.len()];
    let mut hits = 0usize;
    for _ in 0..samples {
        for (j, zj) in z.iter_mut().enumerate() {
            *zj = lower[j] + (reference[j] - lower[j]) * rng.random::<f64>();
        }
        if points.iter().any(|p| weakly_dominates(p.as_ref(), &z)) {
            hits += 1;
        }
    }
    Ok(box_volume(&lower, reference) * hits as f64 / samples as f64)
}

/// Min-max normalizes each objective over the set to `[0, 1]`; constant
/// objectives map to 0.
pub fn normalize<P: AsRef<[f64]>>(points: &[P]) -> Vec<Vec<f64>> {
    let Some(d) = points.first().map(|p| p.as_ref().len()) else {
        return Vec::new();
    };
    let (mut lo, mut hi) = (vec![f64::INFINITY; d], vec![f64::NEG_INFINITY; d]);
    for p in points {
        for (j, &v) in p.as_ref().iter().enumerate() {
            lo[j] = lo[j].min(v);
            hi[j] = hi[j].max(v);
        }
    }
    points
        .iter()
        .map(|p| {
            p.as_ref()
                .iter()
                .enumerate()
                .map(|(j, &v)| {
                    if hi[j] > lo[j] {
                        (v - lo[j]) / (hi[j] - lo[j])
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

/// `(1.1, …, 1.1)` of dimension `d`.
pub fn normalized_reference(d: usize) -> Vec<f64> {
    vec![NORMALIZED_REF; d]
}

// ---------------------------------------------------------------- subset genes

/// Bitset over the candidate set; bit `i` selects point `i`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SubsetGene {
    words: Vec<u64>,
    len: usize,
}

impl SubsetGene {
    pub fn empty(len: usize) -> Self {
        Self {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn from_indices(len: usize, indices: &[usize]) -> Self {
        let mut g = Self::empty(len);
        for &i in indices {
            g.set(i, true);
        }
        g
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, on: bool) {
        assert!(i < self.len, "bit {i} out of range");
        if on {
            self.words[i / 64] |= 1 << (i % 64);
        } else {
            self.words[i / 64] &= !(1 << (i % 64));
        }
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn indices(&self) -> Vec<usize> {
        (0..self.len).filter(|&i| self.get(i)).collect()
    }
}

fn subset_hv(points: &[Vec<f64>], reference: &[f64], idx: &[usize]) -> f64 {
    let pts: Vec<&[f64]> = idx.iter().map(|&i| points[i].as_slice()).collect();
    hypervolume(&pts, reference).expect("dimensions checked by caller")
}

fn repair_unchecked(
    gene: &SubsetGene,
    k: usize,
    points: &[Vec<f64>],
    reference: &[f64],
) -> SubsetGene {
    let mut chosen = gene.indices();
    match chosen.len().cmp(&k) {
        Ordering::Equal => gene.clone(),
        Ordering::Less => {
            let mut out = gene.clone();
            while chosen.len() < k {
                let mut best: Option<(usize, f64)> = None;
                for j in (0..points.len()).filter(|&j| !out.get(j)) {
                    chosen.push(j);
                    let h = subset_hv(points, reference, &chosen);
                    chosen.pop();
                    if best.is_none_or(|(_, b)| h > b) {
                        best = Some((j, h));
                    }
                }
                let (j, _) = best.expect("k <= |P| leaves an unset bit");
                out.set(j, true);
                chosen.push(j);
            }
            out
        }
        Ordering::Greater => {
            let full = subset_hv(points, reference, &chosen);
            let mut losses: Vec<(usize, f64)> = (0..chosen.len())
                .map(|r| {
                    let rest: Vec<usize> = chosen
                        .iter()
                        .enumerate()
                        .filter(|&(i, _)| i != r)
                        .map(|(_, &c)| c)
                        .collect();
                    (chosen[r], full - subset_hv(points, reference, &rest))
                })
                .collect();
            // Largest loss first; ties keep the lower index.
            losses.sort_by(|a, b| {
                b.1.partial_cmp(&a.1)
                    .unwrap_or(Ordering::Equal)
                    .then(a.0.cmp(&b.0))
            });
            let keep: Vec<usize> = losses[..k].iter().map(|&(i, _)| i).collect();
            SubsetGene::from_indices(gene.len(), &keep)
        }
    }
}

/// Greedy repair to exactly `k` bits: an under-full gene repeatedly gains the
/// bit that maximizes hypervolume; an over-full gene keeps the `k` bits whose
/// individual removal loses the most hypervolume. Ties favour lower indices.
pub fn repair<P: AsRef<[f64]>>(
    gene: &SubsetGene,
    k: usize,
    points: &[P],
    reference: &[f64],
) -> Result<SubsetGene, HvError> {
    check_dims(points, reference)?;
    if k > points.len() || gene.len() != points.len() {
        return Err(HvError::InfeasibleK {
            k,
            available: points.len(),
        });
    }
    let owned: Vec<Vec<f64>> = points.iter().map(|p| p.as_ref().to_vec()).collect();
    Ok(repair_unchecked(gene, k, &owned, reference))
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Optimal `k`-subset by enumeration (lexicographically first on ties).
pub fn exhaustive_subset<P: AsRef<[f64]>>(
    points: &[P],
    reference: &[f64],
    k: usize,
) -> Result<Vec<usize>, HvError> {
    check_dims(points, reference)?;
    let n = points.len();
    if k > n {
        return Err(HvError::InfeasibleK { k, available: n });
    }
    let combos = binomial(n, k);
    if combos > 1_000_000 {
        return Err(HvError::TooManyCombinations(combos));
    }
    let owned: Vec<Vec<f64>> = points.iter().map(|p| p.as_ref().to_vec()).collect();
    let mut idx: Vec<usize> = (0..k).collect();
    let mut best = (subset_hv(&owned, reference, &idx), idx.clone());
    // Next combination in lexicographic order.
    while let Some(i) = (0..k).rev().find(|&i| idx[i] < n - k + i) {
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
        let h = subset_hv(&owned, reference, &idx);
        if h > best.0 {
            best = (h, idx.clone());
        }
    }
    Ok(best.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HssConfig {
    pub population: usize,
    pub mutation_rate: f64,
    pub generations: usize,
    /// Stop after this many generations without improvement of the best gene.
    pub stagnation: usize,
    pub seed: u64,
}

impl Default for HssConfig {
    fn default() -> Self {
        Self {
            population: 2000,
            mutation_rate: 0.3,
            generations: 10_000,
            stagnation: 500,
            seed: 0,
        }
    }
}

impl HssConfig {
    pub fn validate(&self) -> Result<(), &'static str> {
        if self.population < 2 {
            return Err("hss population must be at least 2");
        }
        if !(self.mutation_rate > 0.0 && self.mutation_rate < 1.0) {
            return Err("hss mutation_rate must lie in (0, 1)");
        }
        if self.generations == 0 || self.stagnation == 0 {
            return Err("hss generations and stagnation must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub indices: Vec<usize>,
    pub hypervolume: f64,
    pub generations: usize,
}

struct Ga<'a> {
    points: &'a [Vec<f64>],
    reference: &'a [f64],
    k: usize,
    repaired: BTreeMap<SubsetGene, SubsetGene>,
    fitness: BTreeMap<SubsetGene, f64>,
}

impl Ga<'_> {
    fn repair(&mut self, gene: SubsetGene) -> SubsetGene {
        if gene.count() == self.k {
            return gene;
        }
        if let Some(r) = self.repaired.get(&gene) {
            return r.clone();
        }
        let r = repair_unchecked(&gene, self.k, self.points, self.reference);
        self.repaired.insert(gene, r.clone());
        r
    }

    fn fitness(&mut self, gene: &SubsetGene) -> f64 {
        if let Some(&f) = self.fitness.get(gene) {
            return f;
        }
        let f = subset_hv(self.points, self.reference, &gene.indices());
        self.fitness.insert(gene.clone(), f);
        f
    }
}

/// Evolutionary search for the `k`-subset maximizing hypervolume.
///
/// Genes are repaired after initialization and after every variation; parents
/// come from binary tournaments, crossover is uniform, and a mutated offspring
/// flips each bit with probability `1/|P|` (at least one). Survivors are the
/// best `population` of parents and offspring.
pub fn select_subset<P: AsRef<[f64]>>(
    points: &[P],
    reference: &[f64],
    k: usize,
    cfg: &HssConfig,
) -> Result<Selection, HvError> {
    check_dims(points, reference)?;
    let n = points.len();
    if k > n {
        return Err(HvError::InfeasibleK { k, available: n });
    }
    let owned: Vec<Vec<f64>> = points.iter().map(|p| p.as_ref().to_vec()).collect();
    if k == n {
        let all: Vec<usize> = (0..n).collect();
        let hypervolume = subset_hv(&owned, reference, &all);
        return Ok(Selection {
            indices: all,
            hypervolume,
            generations: 0,
        });
    }
    let mut rng = rng::seeded(cfg.seed);
    let mut ga = Ga {
        points: &owned,
        reference,
        k,
        repaired: BTreeMap::new(),
        fitness: BTreeMap::new(),
    };
    let pop_size = cfg.population.max(2);
    let p_init = k as f64 / n as f64;
    let flip = 1.0 / n as f64;

    let mut pop: Vec<(SubsetGene, f64)> = (0..pop_size)
        .map(|_| {
            let mut g = SubsetGene::empty(n);
            for i in 0..n {
                if rng.random_bool(p_init) {
                    g.set(i, true);
                }
            }
            let g = ga.repair(g);
            let f = ga.fitness(&g);
            (g, f)
        })
        .collect();
    sort_population(&mut pop);

    let mut best = pop[0].1;
    let mut since_improvement = 0;
    let mut generation = 0;
    while generation < cfg.generations && since_improvement < cfg.stagnation {
        generation += 1;
        let mut offspring = Vec::with_capacity(pop_size);
        for _ in 0..pop_size {
            let a = tournament(&pop, &mut rng);
            let b = tournament(&pop, &mut rng);
            let mut child = SubsetGene::empty(n);
            for i in 0..n {
                let from = if rng.random_bool(0.5) { a } else { b };
                if from.get(i) {
                    child.set(i, true);
                }
            }
            if rng.random_bool(cfg.mutation_rate) {
                let mut flipped = false;
                for i in 0..n {
                    if rng.random_bool(flip) {
                        child.set(i, !child.get(i));
                        flipped = true;
                    }
                }
                if !flipped {
                    let i = rng.random_range(0..n);
                    child.set(i, !child.get(i));
                }
            }
            let child = ga.repair(child);
            let f = ga.fitness(&child);
            offspring.push((child, f));
        }
        pop.extend(offspring);
        sort_population(&mut pop);
        pop.truncate(pop_size);
        if pop[0].1 > best {
            best = pop[0].1;
            since_improvement = 0;
        } else {
            since_improvement += 1;
        }
    }
    Ok(Selection {
        indices: pop[0].0.indices(),
        hypervolume: pop[0].1,
        generations: generation,
    })
}

/// Fitness descending; stable, so earlier (older) genes win ties.
fn sort_population(pop: &mut [(SubsetGene, f64)]) {
    pop.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal));
}

fn tournament<'p, R: Rng>(pop: &'p [(SubsetGene, f64)], rng: &mut R) -> &'p SubsetGene {
    let i = rng.random_range(0..pop.len());
    let j = rng.random_range(0..pop.len());
    // The population is sorted, so the lower index is the fitter one.
    &pop[i.min(j)].0
}

/// Normalizes minimization objectives over the set, uses the `1.1` reference and
/// selects `k` of them.
pub fn select_normalized<P: AsRef<[f64]>>(
    points: &[P],
    k: usize,
    cfg: &HssConfig,
) -> Result<Selection, HvError> {
    if let Some(first) = points.first() {
        check_dims(points, first.as_ref())?;
    }
    let norm = normalize(points);
    let d = norm.first().map_or(0, Vec::len);
    select_subset(&norm, &normalized_reference(d), k, cfg)
}
