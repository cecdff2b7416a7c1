//! Test-only oracles. Everything here is deliberately naive and independent
//! of the library's factorizations.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sls::dictionary::Dictionary;
use sls::linalg::DenseMatrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn gaussian_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_col_major(rows, cols, gaussian_vec(rng, rows * cols)).unwrap()
}

/// Gaussian matrix with each column rescaled by a factor in [0.3, 2].
pub fn scaled_gaussian_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DenseMatrix {
    let mut m = gaussian_matrix(rng, rows, cols);
    for j in 0..cols {
        let n = m.col(j).iter().map(|v| v * v).sum::<f64>().sqrt();
        let s = rng.random_range(0.3..2.0) / n;
        m.col_mut(j).iter_mut().for_each(|v| *v *= s);
    }
    m
}

pub fn unit_dictionary(rng: &mut impl Rng, rows: usize, cols: usize) -> Dictionary {
    let m = gaussian_matrix(rng, rows, cols);
    sls::dictionary::normalize_columns(&Dictionary::new(m).unwrap())
        .unwrap()
        .0
}

/// Random orthonormal `n × n` dictionary (classical Gram-Schmidt run twice).
pub fn orthonormal_dictionary(rng: &mut impl Rng, n: usize) -> Dictionary {
    let mut cols: Vec<Vec<f64>> = Vec::new();
    while cols.len() < n {
        let mut v = gaussian_vec(rng, n);
        for _ in 0..2 {
            for q in &cols {
                let c: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(q).for_each(|(vi, qi)| *vi -= c * qi);
            }
        }
        let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nrm > 1e-6 {
            v.iter_mut().for_each(|x| *x /= nrm);
            cols.push(v);
        }
    }
    Dictionary::new(DenseMatrix::from_columns(n, &cols).unwrap()).unwrap()
}

pub fn dotp(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Row-major dense matrix for oracles.
pub type Mat = Vec<Vec<f64>>;

pub fn to_rows(m: &DenseMatrix) -> Mat {
    (0..m.rows())
        .map(|i| (0..m.cols()).map(|j| m.get(i, j)).collect())
        .collect()
}

pub fn transpose(a: &Mat) -> Mat {
    if a.is_empty() {
        return Vec::new();
    }
    (0..a[0].len())
        .map(|j| a.iter().map(|row| row[j]).collect())
        .collect()
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let inner = b.len();
    let cols = if inner == 0 { 0 } else { b[0].len() };
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| (0..inner).map(|k| row[k] * b[k][j]).sum())
                .collect()
        })
        .collect()
}

pub fn matvec(a: &Mat, x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| dotp(row, x)).collect()
}

/// Solves `M x = b` by Gaussian elimination with partial pivoting.
pub fn dense_solve(m: &Mat, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut a: Mat = m.clone();
    let mut x = b.to_vec();
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))
            .unwrap();
        a.swap(k, p);
        x.swap(k, p);
        for i in (k + 1)..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            x[i] -= f * x[k];
        }
    }
    for k in (0..n).rev() {
        let s: f64 = ((k + 1)..n).map(|j| a[k][j] * x[j]).sum();
        x[k] = (x[k] - s) / a[k][k];
    }
    x
}

/// Columns `support` of `d` as a row-major matrix.
pub fn columns(d: &DenseMatrix, support: &[usize]) -> Mat {
    (0..d.rows())
        .map(|i| support.iter().map(|&j| d.get(i, j)).collect())
        .collect()
}

/// Normal-equations least squares `(AᵀA)⁻¹ Aᵀ y`.
pub fn normal_equations(a: &Mat, y: &[f64]) -> Vec<f64> {
    let at = transpose(a);
    dense_solve(&matmul(&at, a), &matvec(&at, y))
}

/// `(I - A (AᵀA)⁻¹ Aᵀ) v` with an explicit pseudo-inverse.
pub fn dense_projector_apply(a: &Mat, v: &[f64]) -> Vec<f64> {
    if a.is_empty() || a[0].is_empty() {
        return v.to_vec();
    }
    let x = normal_equations(a, v);
    let fit = matvec(a, &x);
    v.iter().zip(&fit).map(|(a, b)| a - b).collect()
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn dense_cholesky(g: &Mat) -> Mat {
    let n = g.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                l[i][i] = (g[i][i] - s).sqrt();
            } else {
                l[i][j] = (g[i][j] - s) / l[j][j];
            }
        }
    }
    l
}

/// Cyclic coordinate descent for `½‖y - A x‖² + λ‖x‖₁`, run until the
/// duality gap is below `gap_tol` and a full sweep moves no coordinate by
/// more than 1e-14.
pub fn lasso_coordinate_descent(a: &DenseMatrix, y: &[f64], lambda: f64, gap_tol: f64) -> Vec<f64> {
    let n = a.cols();
    let norms: Vec<f64> = (0..n).map(|j| dotp(a.col(j), a.col(j))).collect();
    let mut x = vec![0.0; n];
    let mut r = y.to_vec();
    for sweep in 0..2_000_000 {
        let mut max_move: f64 = 0.0;
        for j in 0..n {
            let col = a.col(j);
            let rho = dotp(col, &r) + norms[j] * x[j];
            let new = soft(rho, lambda) / norms[j];
            let delta = new - x[j];
            if delta != 0.0 {
                r.iter_mut().zip(col).for_each(|(ri, ci)| *ri -= delta * ci);
                x[j] = new;
                max_move = max_move.max(delta.abs());
            }
        }
        if sweep % 10 == 0 || max_move < 1e-14 {
            // recompute the residual to avoid drift
            r = y.to_vec();
            for j in 0..n {
                if x[j] != 0.0 {
                    r.iter_mut()
                        .zip(a.col(j))
                        .for_each(|(ri, ci)| *ri -= x[j] * ci);
                }
            }
            if max_move < 1e-14 && duality_gap(a, y, &x, &r, lambda) < gap_tol {
                return x;
            }
        }
    }
    panic!("coordinate descent did not converge");
}

fn soft(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

pub fn duality_gap(a: &DenseMatrix, y: &[f64], x: &[f64], r: &[f64], lambda: f64) -> f64 {
    let primal = 0.5 * dotp(r, r) + lambda * x.iter().map(|v| v.abs()).sum::<f64>();
    let corr_max = (0..a.cols())
        .map(|j| dotp(a.col(j), r).abs())
        .fold(0.0, f64::max);
    let scale = if corr_max > lambda {
        lambda / corr_max
    } else {
        1.0
    };
    let theta: Vec<f64> = r.iter().map(|v| v * scale).collect();
    let diff: Vec<f64> = y.iter().zip(&theta).map(|(a, b)| a - b).collect();
    let dual = 0.5 * dotp(y, y) - 0.5 * dotp(&diff, &diff);
    primal - dual
}

/// Every `k`-subset of `0..n`, enumerated from the last subset backwards.
pub fn subsets_reverse(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for j in start..n {
            cur.push(j);
            rec(j + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out.reverse();
    out
}

/// Residual energy of the least-squares fit on `support`, `None` when the
/// normal equations are numerically singular.
pub fn support_residual(d: &DenseMatrix, y: &[f64], support: &[usize]) -> Option<f64> {
    if support.is_empty() {
        return Some(dotp(y, y));
    }
    let a = columns(d, support);
    let at = transpose(&a);
    let g = matmul(&at, &a);
    let l = dense_cholesky(&g);
    if l.iter()
        .enumerate()
        .any(|(i, row)| row[i].is_nan() || row[i] <= 1e-7)
    {
        return None;
    }
    let x = dense_solve(&g, &matvec(&at, y));
    let fit = matvec(&a, &x);
    Some(y.iter().zip(&fit).map(|(a, b)| (a - b) * (a - b)).sum())
}
