//! Dense symmetric helpers for the proxies. Matrices are row-major `n × n`.

use alloc::vec::Vec;

/// `ln |det(a)|` by LU decomposition with partial pivoting, or `None` when a pivot
/// is exactly zero or the determinant is negative.
pub(crate) fn log_det(a: &[f64], n: usize) -> Option<f64> {
    debug_assert_eq!(a.len(), n * n);
    let mut m = a.to_vec();
    let mut sign = 1.0;
    let mut acc = 0.0;
    for col in 0..n {
        let (pivot, max) =
            (col..n)
                .map(|r| (r, libm::fabs(m[r * n + col])))
                .fold(
                    (col, -1.0),
                    |best, cur| if cur.1 > best.1 { cur } else { best },
                );
        if max == 0.0 {
            return None;
        }
        if pivot != col {
            for j in 0..n {
                m.swap(col * n + j, pivot * n + j);
            }
            sign = -sign;
        }
        let p = m[col * n + col];
        if p < 0.0 {
            sign = -sign;
        }
        acc += libm::log(libm::fabs(p));
        for r in col + 1..n {
            let f = m[r * n + col] / p;
            if f != 0.0 {
                for j in col + 1..n {
                    m[r * n + j] -= f * m[col * n + j];
                }
            }
        }
    }
    (sign > 0.0).then_some(acc)
}

/// Householder reduction of a symmetric matrix to tridiagonal form. Returns the
/// diagonal and the sub-diagonal (`e[0]` unused).
fn tridiagonalize(a: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut m = a.to_vec();
    let mut d = alloc::vec![0.0; n];
    let mut e = alloc::vec![0.0; n];
    let mut v = alloc::vec![0.0; n];
    let mut p = alloc::vec![0.0; n];
    for k in 0..n.saturating_sub(2) {
        // Householder vector zeroing m[k+2.., k].
        let alpha2: f64 = (k + 1..n).map(|i| m[i * n + k] * m[i * n + k]).sum();
        let x0 = m[(k + 1) * n + k];
        if alpha2 - x0 * x0 <= 0.0 {
            e[k + 1] = x0;
            continue;
        }
        let alpha = if x0 > 0.0 {
            -libm::sqrt(alpha2)
        } else {
            libm::sqrt(alpha2)
        };
        e[k + 1] = alpha;
        for i in 0..n {
            v[i] = if i > k { m[i * n + k] } else { 0.0 };
        }
        v[k + 1] -= alpha;
        let vnorm2: f64 = v[k + 1..].iter().map(|x| x * x).sum();
        let beta = 2.0 / vnorm2;
        // A <- H A H with H = I - beta v v^T, on the trailing block.
        for i in k + 1..n {
            p[i] = beta * (k + 1..n).map(|j| m[i * n + j] * v[j]).sum::<f64>();
        }
        let kf = 0.5 * beta * (k + 1..n).map(|i| v[i] * p[i]).sum::<f64>();
        for i in k + 1..n {
            p[i] -= kf * v[i];
        }
        for i in k + 1..n {
            for j in k + 1..n {
                m[i * n + j] -= v[i] * p[j] + p[i] * v[j];
            }
        }
    }
    if n >= 2 {
        e[n - 1] = m[(n - 1) * n + n - 2];
    }
    for i in 0..n {
        d[i] = m[i * n + i];
    }
    (d, e)
}

/// Number of eigenvalues of the tridiagonal matrix strictly below `x`.
fn sturm_count(d: &[f64], e: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..d.len() {
        let off = if i == 0 { 0.0 } else { e[i] * e[i] / q };
        q = d[i] - x - off;
        if q == 0.0 {
            q = -f64::EPSILON * (1.0 + libm::fabs(x));
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Smallest eigenvalue of a symmetric matrix (tridiagonalization + bisection).
pub(crate) fn min_eigenvalue(a: &[f64], n: usize) -> f64 {
    debug_assert_eq!(a.len(), n * n);
    if n == 0 {
        return 0.0;
    }
    let (d, e) = tridiagonalize(a, n);
    // Gershgorin bounds; e[0] is zero.
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = libm::fabs(e[i]) + if i + 1 < n { libm::fabs(e[i + 1]) } else { 0.0 };
        lo = lo.min(d[i] - r);
        hi = hi.max(d[i] + r);
    }
    let tol = 4.0 * f64::EPSILON * (libm::fabs(lo) + libm::fabs(hi)).max(1.0);
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if sturm_count(&d, &e, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use alloc::vec;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn two_by_two() {
        assert!((log_det(&[4.0, 0.0, 0.0, 4.0], 2).unwrap() - 2.0 * libm::log(4.0)).abs() < 1e-12);
        assert!((min_eigenvalue(&[1.0, 0.5, 0.5, 1.0], 2) - 0.5).abs() < 1e-12);
        assert_eq!(log_det(&[1.0, 2.0, 2.0, 4.0], 2), None);
        assert_eq!(log_det(&[0.0, 1.0, 1.0, 0.0], 2), None); // det = -1
    }

    #[test]
    fn pivoting_handles_zero_leading_entry() {
        // [[0,2],[3,0]] swapped gives det = -6; [[0,2],[-3,0]] gives +6.
        assert!((log_det(&[0.0, 2.0, -3.0, 0.0], 2).unwrap() - libm::log(6.0)).abs() < 1e-12);
    }

    #[test]
    fn min_eigenvalue_of_diagonal_and_rank_one() {
        let mut a = vec![0.0; 9];
        a[0] = 3.0;
        a[4] = -2.0;
        a[8] = 7.0;
        assert!((min_eigenvalue(&a, 3) + 2.0).abs() < 1e-12);
        assert!(min_eigenvalue(&[1.0; 16], 4).abs() < 1e-12);
        assert_eq!(min_eigenvalue(&[5.0], 1), 5.0);
    }

    #[test]
    fn random_gram_matrices_are_positive() {
        let mut rng = seeded(3);
        for n in 1..12 {
            let b: Vec<f64> = (0..n * n)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            let mut a = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    a[i * n + j] = (0..n).map(|k| b[i * n + k] * b[j * n + k]).sum::<f64>()
                        + if i == j { 0.1 } else { 0.0 };
                }
            }
            assert!(min_eigenvalue(&a, n) > 0.0);
            assert!(log_det(&a, n).is_some());
        }
    }
}
