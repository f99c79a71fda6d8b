//! Dense symmetric eigendecomposition via cyclic Jacobi rotations.
//!
//! Covariance matrices in this pipeline are at most a few hundred rows, so a
//! plain Jacobi sweep is fast enough and keeps results identical across
//! platforms. The decomposition is made deterministic by two conventions:
//! eigenvalues are sorted descending with ties keeping their pre-sort order,
//! and each eigenvector is flipped so its largest-magnitude entry (first such
//! entry on magnitude ties) is nonnegative.

use ndarray::{Array1, Array2};

const MAX_SWEEPS: usize = 64;

/// Eigendecomposition of a symmetric matrix.
///
/// Returns `(eigenvalues, vectors)` with eigenvalues descending and row j of
/// `vectors` holding the unit eigenvector for eigenvalue j. Symmetry of the
/// input is the caller's responsibility; only the upper triangle is trusted.
pub fn symmetric_eigen(a: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "symmetric_eigen needs a square matrix");
    let mut d = a.clone();
    // enforce exact symmetry from the upper triangle
    for p in 0..n {
        for q in (p + 1)..n {
            d[(q, p)] = d[(p, q)];
        }
    }
    let mut v = Array2::eye(n);

    let norm: f64 = d.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = f64::EPSILON * norm.max(f64::MIN_POSITIVE);

    for _ in 0..MAX_SWEEPS {
        let off: f64 = off_diagonal_norm(&d);
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if d[(p, q)].abs() <= tol / (n as f64) {
                    continue;
                }
                let (c, s) = symmetric_schur(&d, p, q);
                apply_rotation(&mut d, &mut v, p, q, c, s);
            }
        }
    }

    let eigenvalues: Vec<f64> = (0..n).map(|i| d[(i, i)]).collect();
    // descending sort; stable, so exact ties keep original index order
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eigenvalues[j].total_cmp(&eigenvalues[i]));

    let mut values = Array1::zeros(n);
    let mut vectors = Array2::zeros((n, n));
    for (row, &idx) in order.iter().enumerate() {
        values[row] = eigenvalues[idx];
        for k in 0..n {
            vectors[(row, k)] = v[(k, idx)];
        }
        fix_sign(&mut vectors, row);
    }
    (values, vectors)
}

fn off_diagonal_norm(d: &Array2<f64>) -> f64 {
    let n = d.nrows();
    let mut sum = 0.0;
    for p in 0..n {
        for q in (p + 1)..n {
            sum += 2.0 * d[(p, q)] * d[(p, q)];
        }
    }
    sum.sqrt()
}

/// Rotation (c, s) zeroing d[(p,q)], Golub & Van Loan sym.schur2 form.
fn symmetric_schur(d: &Array2<f64>, p: usize, q: usize) -> (f64, f64) {
    let apq = d[(p, q)];
    if apq == 0.0 {
        return (1.0, 0.0);
    }
    let tau = (d[(q, q)] - d[(p, p)]) / (2.0 * apq);
    let t = if tau >= 0.0 {
        1.0 / (tau + (1.0 + tau * tau).sqrt())
    } else {
        1.0 / (tau - (1.0 + tau * tau).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    (c, t * c)
}

/// D <- Jt D J and V <- V J for the (p,q) rotation with entries (c, s).
fn apply_rotation(d: &mut Array2<f64>, v: &mut Array2<f64>, p: usize, q: usize, c: f64, s: f64) {
    let n = d.nrows();
    let dpp = d[(p, p)];
    let dqq = d[(q, q)];
    let dpq = d[(p, q)];
    d[(p, p)] = c * c * dpp - 2.0 * s * c * dpq + s * s * dqq;
    d[(q, q)] = s * s * dpp + 2.0 * s * c * dpq + c * c * dqq;
    d[(p, q)] = 0.0;
    d[(q, p)] = 0.0;
    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let dkp = d[(k, p)];
        let dkq = d[(k, q)];
        d[(k, p)] = c * dkp - s * dkq;
        d[(p, k)] = d[(k, p)];
        d[(k, q)] = s * dkp + c * dkq;
        d[(q, k)] = d[(k, q)];
    }
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

/// Flips row `row` so its largest-magnitude entry is nonnegative; the first
/// entry wins magnitude ties.
fn fix_sign(vectors: &mut Array2<f64>, row: usize) {
    let n = vectors.ncols();
    let mut best = 0;
    for k in 1..n {
        if vectors[(row, k)].abs() > vectors[(row, best)].abs() {
            best = k;
        }
    }
    if vectors[(row, best)] < 0.0 {
        for k in 0..n {
            vectors[(row, k)] = -vectors[(row, k)];
        }
    }
}
