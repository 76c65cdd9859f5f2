//! Rank correlations between proxy scores, costs and external measurements.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankSeries {
    pub label: String,
    /// One value per candidate, aligned by trial index.
    pub values: Vec<f64>,
}

impl RankSeries {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            label: label.into(),
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TauError {
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("at least two observations are required")]
    TooShort,
    #[error("series contains a non-finite value")]
    NonFinite,
    #[error("a series is constant; tau-b is undefined")]
    DegenerateSeries,
}

/// Number of pairs within runs of equal values in a sorted slice.
fn tied_pairs(sorted: &[f64]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Stable merge sort counting exchanges (inversions).
fn sort_counting_swaps(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = sort_counting_swaps(&mut v[..mid], &mut buf[..mid]);
    swaps += sort_counting_swaps(&mut v[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    let k = k + mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Kendall's tau-b in `O(n log n)` (Knight's algorithm).
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<f64, TauError> {
    if x.len() != y.len() {
        return Err(TauError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 2 {
        return Err(TauError::TooShort);
    }
    if !x.iter().chain(y).all(|v| v.is_finite()) {
        return Err(TauError::NonFinite);
    }
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(Ordering::Equal)
            .then(a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal))
    });

    let n0 = (n as u64) * (n as u64 - 1) / 2;
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let n1 = tied_pairs(&xs);
    let mut joint = 0u64;
    let mut run = 1u64;
    for w in pairs.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            joint += run * (run - 1) / 2;
            run = 1;
        }
    }
    joint += run * (run - 1) / 2;

    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; n];
    let swaps = sort_counting_swaps(&mut ys, &mut buf);
    let n2 = tied_pairs(&ys);

    if n1 == n0 || n2 == n0 {
        return Err(TauError::DegenerateSeries);
    }
    // concordant - discordant = n0 - n1 - n2 + n3 - 2 * swaps
    let numer = n0 as f64 - n1 as f64 - n2 as f64 + joint as f64 - 2.0 * swaps as f64;
    let denom = libm::sqrt((n0 - n1) as f64 * (n0 - n2) as f64);
    Ok((numer / denom).clamp(-1.0, 1.0))
}

/// Pairwise tau-b; `None` marks an undefined entry (constant series).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauMatrix {
    pub labels: Vec<String>,
    pub tau: Vec<Vec<Option<f64>>>,
}

pub fn tau_matrix(series: &[RankSeries]) -> Result<TauMatrix, TauError> {
    let d = series.len();
    let mut tau = vec![vec![None; d]; d];
    for i in 0..d {
        for j in i..d {
            let v = match kendall_tau_b(&series[i].values, &series[j].values) {
                Ok(t) => Some(if i == j { 1.0 } else { t }),
                Err(TauError::DegenerateSeries) => None,
                Err(e) => return Err(e),
            };
            tau[i][j] = v;
            tau[j][i] = v;
        }
    }
    Ok(TauMatrix {
        labels: series.iter().map(|s| s.label.clone()).collect(),
        tau,
    })
}

/// Tau-b of every series against one reference column (e.g. measured accuracy).
pub fn tau_against(series: &[RankSeries], reference: &[f64]) -> Result<Vec<Option<f64>>, TauError> {
    series
        .iter()
        .map(|s| match kendall_tau_b(&s.values, reference) {
            Ok(t) => Ok(Some(t)),
            Err(TauError::DegenerateSeries) => Ok(None),
            Err(e) => Err(e),
        })
        .collect()
}
