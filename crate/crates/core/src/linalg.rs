//! Small self-contained linear algebra: a dense symmetric matrix type,
//! cyclic Jacobi diagonalization, projected conjugate gradients and
//! Gram–Schmidt orthonormalization.

use crate::sum::{dot, norm};

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "matrix must be square");
        Self {
            n,
            data: rows.concat(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// `y = A x`, each row accumulated with compensation.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = dot(self.row(i), x);
        }
    }

    /// Largest `|A_ij - A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    fn off_diagonal_norm(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j {
                    s += self[(i, j)] * self[(i, j)];
                }
            }
        }
        s.sqrt()
    }

    fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

/// Eigen-decomposition of a symmetric matrix, ascending eigenvalues.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    /// Column `k` holds the eigenvector of `values[k]`.
    pub vectors: DenseMatrix,
    pub sweeps: usize,
}

/// Cyclic Jacobi rotations until the off-diagonal Frobenius norm drops below
/// `tol` times the Frobenius norm of the input.
///
/// Returns `None` when `max_sweeps` is exhausted first.
pub fn jacobi_eigen(a: &DenseMatrix, tol: f64, max_sweeps: usize) -> Option<SymmetricEigen> {
    let n = a.dim();
    let mut a = a.clone();
    let mut v = DenseMatrix::identity(n);
    let scale = a.frobenius();
    let threshold = tol * if scale > 0.0 { scale } else { 1.0 };
    let mut sweeps = 0;
    while a.off_diagonal_norm() > threshold {
        if sweeps == max_sweeps {
            return None;
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + theta.hypot(1.0));
                let c = 1.0 / t.hypot(1.0);
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = DenseMatrix::zeros(n);
    for (col, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors[(k, col)] = v[(k, src)];
        }
    }
    Some(SymmetricEigen {
        values,
        vectors,
        sweeps,
    })
}

/// Removes the components of `x` along the orthonormal vectors `basis`.
pub fn project_out(x: &mut [f64], basis: &[Vec<f64>]) {
    for q in basis {
        let c = dot(x, q);
        for (xi, qi) in x.iter_mut().zip(q) {
            *xi -= c * qi;
        }
    }
}

/// Orthonormalizes `vectors` in place against `fixed` and each other
/// (modified Gram–Schmidt, two passes). Vectors that collapse are zeroed and
/// flagged `false` in the returned mask.
pub fn orthonormalize(vectors: &mut [Vec<f64>], fixed: &[Vec<f64>]) -> Vec<bool> {
    let mut ok = vec![true; vectors.len()];
    for k in 0..vectors.len() {
        let before = norm(&vectors[k]);
        for _ in 0..2 {
            project_out(&mut vectors[k], fixed);
            let (done, rest) = vectors.split_at_mut(k);
            project_out(&mut rest[0], done);
        }
        let nrm = norm(&vectors[k]);
        if nrm <= 1e-12 * before || nrm == 0.0 {
            ok[k] = false;
            vectors[k].iter_mut().for_each(|v| *v = 0.0);
        } else {
            vectors[k].iter_mut().for_each(|v| *v /= nrm);
        }
    }
    ok
}

/// Outcome of a conjugate gradient solve.
#[derive(Debug, Clone, Copy)]
pub struct CgOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Conjugate gradients for `B y = b` on the orthogonal complement of the
/// orthonormal vectors `null`, where `B` is symmetric and positive definite
/// on that complement. `b` is projected first; `y` starts at zero.
pub fn projected_cg<F>(
    apply: F,
    b: &[f64],
    null: &[Vec<f64>],
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, CgOutcome)
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let mut r = b.to_vec();
    project_out(&mut r, null);
    let b_norm = norm(&r);
    let mut y = vec![0.0; n];
    if b_norm == 0.0 {
        return (
            y,
            CgOutcome {
                iterations: 0,
                relative_residual: 0.0,
            },
        );
    }
    let mut p = r.clone();
    let mut bp = vec![0.0; n];
    let mut rr = dot(&r, &r);
    let mut iterations = 0;
    while iterations < max_iter && rr.sqrt() > tol * b_norm {
        iterations += 1;
        apply(&p, &mut bp);
        project_out(&mut bp, null);
        let pbp = dot(&p, &bp);
        if pbp <= 0.0 {
            break;
        }
        let alpha = rr / pbp;
        for i in 0..n {
            y[i] += alpha * p[i];
            r[i] -= alpha * bp[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    project_out(&mut y, null);
    (
        y,
        CgOutcome {
            iterations,
            relative_residual: rr.sqrt() / b_norm,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_two_by_two() {
        let a = DenseMatrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]);
        let e = jacobi_eigen(&a, 1e-14, 50).unwrap();
        assert!(e.values[0].abs() < 1e-15);
        assert!((e.values[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn jacobi_reconstructs_matrix() {
        let a = DenseMatrix::from_rows(&[
            vec![4.0, 1.0, -2.0, 0.5],
            vec![1.0, 3.0, 0.0, 1.0],
            vec![-2.0, 0.0, 5.0, -1.5],
            vec![0.5, 1.0, -1.5, 2.0],
        ]);
        let e = jacobi_eigen(&a, 1e-14, 50).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let s: f64 = (0..4)
                    .map(|k| e.vectors[(i, k)] * e.values[k] * e.vectors[(j, k)])
                    .sum();
                assert!((s - a[(i, j)]).abs() < 1e-12);
            }
        }
        assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn cg_solves_spd_system_on_complement() {
        // path Laplacian is SPD on the complement of the constant vector
        let n = 6;
        let lap = |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                let mut v = 0.0;
                if i > 0 {
                    v += x[i] - x[i - 1];
                }
                if i + 1 < n {
                    v += x[i] - x[i + 1];
                }
                y[i] = v;
            }
        };
        let q = vec![1.0 / (n as f64).sqrt(); n];
        let b: Vec<f64> = (0..n).map(|i| i as f64 - 2.5).collect();
        let (y, out) = projected_cg(lap, &b, &[q.clone()], 1e-14, 100);
        assert!(out.relative_residual < 1e-12);
        let mut ly = vec![0.0; n];
        lap(&y, &mut ly);
        for i in 0..n {
            assert!((ly[i] - b[i]).abs() < 1e-10);
        }
        assert!(dot(&y, &q).abs() < 1e-12);
    }

    #[test]
    fn gram_schmidt_flags_dependent_vectors() {
        let q = vec![vec![1.0, 0.0, 0.0]];
        let mut v = vec![vec![1.0, 1.0, 0.0], vec![2.0, 2.0, 0.0], vec![0.0, 1.0, 1.0]];
        let ok = orthonormalize(&mut v, &q);
        assert_eq!(ok, vec![true, false, true]);
        assert!(dot(&v[0], &v[2]).abs() < 1e-15);
        assert!((norm(&v[2]) - 1.0).abs() < 1e-15);
    }
}
