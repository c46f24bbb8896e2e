#![allow(dead_code)]

use cabcd::sparse::CsrMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Seeded `d x n` matrix with roughly `density * d * n` entries in [-1, 1].
/// Every row and column gets at least one nonzero.
pub fn random_sparse(d: usize, n: usize, density: f64, seed: u64) -> CsrMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cells = std::collections::BTreeMap::new();
    for i in 0..d {
        for j in 0..n {
            if rng.gen::<f64>() < density {
                cells.insert((i, j), rng.gen_range(-1.0..1.0));
            }
        }
    }
    for i in 0..d {
        let j = rng.gen_range(0..n);
        cells.entry((i, j)).or_insert_with(|| rng.gen_range(0.5..1.0));
    }
    for j in 0..n {
        let i = rng.gen_range(0..d);
        cells.entry((i, j)).or_insert_with(|| rng.gen_range(0.5..1.0));
    }
    let triplets: Vec<_> = cells.into_iter().map(|((i, j), v)| (i, j, v)).collect();
    CsrMatrix::from_triplets(d, n, &triplets).unwrap()
}

pub fn random_vec(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn dense(x: &CsrMatrix) -> Vec<Vec<f64>> {
    (0..x.n_rows()).map(|i| (0..x.n_cols()).map(|j| x.get(i, j)).collect()).collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

pub fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

pub fn rel_err(a: &[f64], reference: &[f64]) -> f64 {
    diff_norm(a, reference) / norm(reference)
}

/// Gaussian elimination with partial pivoting.
pub fn gauss(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

/// Minimizer of `(1/2n)|X^T w - y|^2 + (lambda/2)|w|^2` from the dense
/// normal equations.
pub fn normal_equations(x: &CsrMatrix, y: &[f64], lambda: f64) -> Vec<f64> {
    let (d, n) = (x.n_rows(), x.n_cols());
    let xd = dense(x);
    let nf = n as f64;
    let a = (0..d)
        .map(|i| {
            (0..d)
                .map(|k| {
                    let g: f64 = (0..n).map(|j| xd[i][j] * xd[k][j]).sum();
                    g / nf + if i == k { lambda } else { 0.0 }
                })
                .collect()
        })
        .collect();
    let rhs = (0..d).map(|i| (0..n).map(|j| xd[i][j] * y[j]).sum::<f64>() / nf).collect();
    gauss(a, rhs)
}

/// Dual optimum `alpha* = X^T w* - y`.
pub fn dual_optimum(x: &CsrMatrix, y: &[f64], lambda: f64) -> Vec<f64> {
    let w = normal_equations(x, y, lambda);
    let xd = dense(x);
    (0..x.n_cols())
        .map(|j| (0..x.n_rows()).map(|i| xd[i][j] * w[i]).sum::<f64>() - y[j])
        .collect()
}

pub fn xt_times(x: &CsrMatrix, w: &[f64]) -> Vec<f64> {
    let xd = dense(x);
    (0..x.n_cols()).map(|j| (0..x.n_rows()).map(|i| xd[i][j] * w[i]).sum()).collect()
}

pub fn x_times(x: &CsrMatrix, a: &[f64]) -> Vec<f64> {
    let xd = dense(x);
    (0..x.n_rows()).map(|i| (0..x.n_cols()).map(|j| xd[i][j] * a[j]).sum()).collect()
}

pub fn primal_objective(x: &CsrMatrix, w: &[f64], y: &[f64], lambda: f64) -> f64 {
    let z = xt_times(x, w);
    let n = y.len() as f64;
    z.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / (2.0 * n) + 0.5 * lambda * norm(w).powi(2)
}

/// `(1/(2 lambda n^2))|X alpha|^2 + (1/2n)|alpha + y|^2`.
pub fn dual_objective(x: &CsrMatrix, alpha: &[f64], y: &[f64], lambda: f64) -> f64 {
    let n = y.len() as f64;
    let xa = x_times(x, alpha);
    norm(&xa).powi(2) / (2.0 * lambda * n * n) + alpha.iter().zip(y).map(|(a, b)| (a + b) * (a + b)).sum::<f64>() / (2.0 * n)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    eig.sort_by(f64::total_cmp);
    eig
}

/// Dense `scale * Y Y^T` for the given rows of `x`.
pub fn gram_of_rows(x: &CsrMatrix, rows: &[usize], scale: f64) -> Vec<Vec<f64>> {
    let xd = dense(x);
    rows.iter()
        .map(|&i| rows.iter().map(|&k| scale * (0..x.n_cols()).map(|j| xd[i][j] * xd[k][j]).sum::<f64>()).collect())
        .collect()
}

/// Dense `scale * Y^T Y` for the given columns of `x`.
pub fn gram_of_cols(x: &CsrMatrix, cols: &[usize], scale: f64) -> Vec<Vec<f64>> {
    let xd = dense(x);
    cols.iter()
        .map(|&j| cols.iter().map(|&l| scale * (0..x.n_rows()).map(|i| xd[i][j] * xd[i][l]).sum::<f64>()).collect())
        .collect()
}
