//! Smallest eigenvalue of a dense symmetric matrix.
//!
//! Householder reduction to tridiagonal form followed by Sturm-sequence
//! bisection. O(n³) for the reduction, O(n) per bisection step.

use alloc::vec::Vec;

use crate::math::{abs, sqrt};

/// Reduce a row-major symmetric `n × n` matrix to tridiagonal form.
/// Returns `(diagonal, off_diagonal)` with `off_diagonal.len() == n − 1`.
pub fn tridiagonalize(n: usize, data: &[f64]) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(data.len(), n * n);
    let mut a = data.to_vec();
    let mut diag = Vec::with_capacity(n);
    let mut off = Vec::with_capacity(n.saturating_sub(1));
    let mut v = alloc::vec![0.0; n];
    let mut p = alloc::vec![0.0; n];
    for k in 0..n {
        diag.push(a[k * n + k]);
        if k + 1 >= n {
            break;
        }
        let m = n - k - 1;
        let col = |i: usize| a[(k + 1 + i) * n + k];
        let norm = sqrt((0..m).map(|i| col(i) * col(i)).sum());
        if m == 1 || norm == 0.0 {
            off.push(col(0));
            continue;
        }
        let x0 = col(0);
        let alpha = if x0 > 0.0 { -norm } else { norm };
        for i in 0..m {
            v[i] = col(i);
        }
        v[0] -= alpha;
        let vnorm = sqrt(v[..m].iter().map(|x| x * x).sum());
        if vnorm == 0.0 {
            off.push(x0);
            continue;
        }
        for x in &mut v[..m] {
            *x /= vnorm;
        }
        off.push(alpha);
        // p = B v over the trailing block B = a[k+1.., k+1..]
        for i in 0..m {
            let row = &a[(k + 1 + i) * n + k + 1..(k + 1 + i) * n + n];
            p[i] = row.iter().zip(&v[..m]).map(|(b, v)| b * v).sum();
        }
        let kv: f64 = p[..m].iter().zip(&v[..m]).map(|(p, v)| p * v).sum();
        for i in 0..m {
            p[i] -= kv * v[i];
        }
        for i in 0..m {
            let row = (k + 1 + i) * n + k + 1;
            for j in 0..m {
                a[row + j] -= 2.0 * (v[i] * p[j] + p[i] * v[j]);
            }
        }
    }
    (diag, off)
}

/// Number of eigenvalues strictly below `x` of the tridiagonal matrix.
fn sturm_count(diag: &[f64], off: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..diag.len() {
        let e2 = if i == 0 { 0.0 } else { off[i - 1] * off[i - 1] };
        q = diag[i] - x - if i == 0 { 0.0 } else { e2 / q };
        if q == 0.0 {
            q = -f64::EPSILON * (abs(x) + 1.0);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// The `k`-th smallest eigenvalue (0-based) of a symmetric tridiagonal matrix.
pub fn tridiagonal_eigenvalue(diag: &[f64], off: &[f64], k: usize) -> f64 {
    let n = diag.len();
    assert!(k < n);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r =
            if i > 0 { abs(off[i - 1]) } else { 0.0 } + if i + 1 < n { abs(off[i]) } else { 0.0 };
        lo = lo.min(diag[i] - r);
        hi = hi.max(diag[i] + r);
    }
    let scale = abs(lo).max(abs(hi)).max(f64::MIN_POSITIVE);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 4.0 * f64::EPSILON * scale {
            break;
        }
        if sturm_count(diag, off, mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Smallest eigenvalue of a row-major symmetric matrix. `None` when empty.
pub fn min_eigenvalue(n: usize, data: &[f64]) -> Option<f64> {
    if n == 0 {
        return None;
    }
    let (diag, off) = tridiagonalize(n, data);
    Some(tridiagonal_eigenvalue(&diag, &off, 0))
}
