// Copyright 2026 The qemforge Authors
// SPDX-License-Identifier: Apache-2.0

//! Dense complex and real matrix helpers.
//!
//! Everything here works on `ndarray` arrays. Matrices are small (at most
//! 256 x 256 for density matrices and 256 x 256 for two-qubit transfer
//! matrices), so plain dense algorithms are used throughout.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, LinalgScalar};
use num_complex::Complex64;

use crate::error::{QemError, Result};

pub type C64 = Complex64;
pub type CMatrix = Array2<C64>;
pub type RMatrix = Array2<f64>;
pub type RVector = Array1<f64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Scalars supported by the generic helpers below.
pub trait Scalar: LinalgScalar + PartialEq + Send + Sync + std::fmt::Debug {
    fn modulus(self) -> f64;
    fn from_real(x: f64) -> Self;
}

impl Scalar for f64 {
    #[inline]
    fn modulus(self) -> f64 {
        self.abs()
    }
    #[inline]
    fn from_real(x: f64) -> Self {
        x
    }
}

impl Scalar for C64 {
    #[inline]
    fn modulus(self) -> f64 {
        self.norm()
    }
    #[inline]
    fn from_real(x: f64) -> Self {
        C64::new(x, 0.0)
    }
}

pub fn identity<T: Scalar>(d: usize) -> Array2<T> {
    Array2::from_diag_elem(d, T::one())
}

/// Kronecker product `a ⊗ b`; `a` is the more significant factor.
pub fn kron<T: Scalar>(a: &Array2<T>, b: &Array2<T>) -> Array2<T> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::<T>::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            let s = a[[i, j]];
            if s == T::zero() {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[[i * br + k, j * bc + l]] = s * b[[k, l]];
                }
            }
        }
    }
    out
}

pub fn dagger(a: &CMatrix) -> CMatrix {
    a.t().mapv(|z| z.conj())
}

pub fn trace(a: &CMatrix) -> C64 {
    a.diag().sum()
}

pub fn matmul<T: Scalar>(a: &Array2<T>, b: &Array2<T>) -> Array2<T> {
    let mut out = Array2::<T>::zeros((a.nrows(), b.ncols()));
    general_mat_mul(T::one(), a, b, T::zero(), &mut out);
    out
}

/// Largest absolute column sum.
pub fn norm1<T: Scalar>(a: &Array2<T>) -> f64 {
    a.columns()
        .into_iter()
        .map(|c| c.iter().map(|x| x.modulus()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn max_abs_diff<T: Scalar>(a: &Array2<T>, b: &Array2<T>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (*x - *y).modulus())
        .fold(0.0, f64::max)
}

/// Largest entry of `|a - a†|`.
pub fn hermiticity_defect(a: &CMatrix) -> f64 {
    let d = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..d {
        for j in i..d {
            worst = worst.max((a[[i, j]] - a[[j, i]].conj()).norm());
        }
    }
    worst
}

/// Replaces `a` by `(a + a†)/2`.
pub fn hermitize(a: &mut CMatrix) {
    let d = a.nrows();
    for i in 0..d {
        a[[i, i]].im = 0.0;
        for j in (i + 1)..d {
            let avg = (a[[i, j]] + a[[j, i]].conj()) * 0.5;
            a[[i, j]] = avg;
            a[[j, i]] = avg.conj();
        }
    }
}

/// Matrix exponential by scaling and squaring with a degree-18 Taylor
/// polynomial. Accurate to roughly machine precision for the moderate norms
/// met here; used for oracles and for building propagators.
pub fn expm<T: Scalar>(a: &Array2<T>) -> Array2<T> {
    let n = a.nrows();
    let norm = norm1(a);
    let squarings = if norm > 0.25 {
        (norm / 0.25).log2().ceil() as i32
    } else {
        0
    };
    let scale = T::from_real(0.5f64.powi(squarings));
    let x = a.mapv(|v| v * scale);
    let mut result = identity::<T>(n);
    let mut term = identity::<T>(n);
    for k in 1..=18 {
        let mut next = Array2::<T>::zeros((n, n));
        general_mat_mul(T::from_real(1.0 / k as f64), &term, &x, T::zero(), &mut next);
        term = next;
        result = result + &term;
    }
    for _ in 0..squarings {
        result = matmul(&result, &result);
    }
    result
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve(a: &RMatrix, b: &RMatrix) -> Result<RMatrix> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(QemError::DimensionMismatch {
            expected: n,
            found: a.ncols(),
        });
    }
    if b.nrows() != n {
        return Err(QemError::DimensionMismatch {
            expected: n,
            found: b.nrows(),
        });
    }
    let mut m = a.clone();
    let mut x = b.clone();
    let scale = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1e-300);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[[i, col]].abs().total_cmp(&m[[j, col]].abs()))
            .unwrap_or(col);
        if m[[pivot, col]].abs() <= 1e-13 * scale {
            return Err(QemError::Singular);
        }
        if pivot != col {
            for k in 0..n {
                m.swap([col, k], [pivot, k]);
            }
            for k in 0..x.ncols() {
                x.swap([col, k], [pivot, k]);
            }
        }
        let p = m[[col, col]];
        for row in (col + 1)..n {
            let f = m[[row, col]] / p;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                m[[row, k]] -= f * m[[col, k]];
            }
            for k in 0..x.ncols() {
                x[[row, k]] -= f * x[[col, k]];
            }
        }
    }
    for col in (0..n).rev() {
        let p = m[[col, col]];
        for k in 0..x.ncols() {
            let mut acc = x[[col, k]];
            for j in (col + 1)..n {
                acc -= m[[col, j]] * x[[j, k]];
            }
            x[[col, k]] = acc / p;
        }
    }
    Ok(x)
}

fn to_nalgebra(a: &CMatrix) -> nalgebra::DMatrix<C64> {
    let d = a.nrows();
    nalgebra::DMatrix::from_fn(d, d, |i, j| a[[i, j]])
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(a: &CMatrix) -> Vec<f64> {
    let mut h = a.clone();
    hermitize(&mut h);
    let eig = nalgebra::SymmetricEigen::new(to_nalgebra(&h));
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    vals
}

/// Eigen-decomposition of a Hermitian matrix: `(values, vectors as columns)`.
pub fn hermitian_eigen(a: &CMatrix) -> (Vec<f64>, CMatrix) {
    let mut h = a.clone();
    hermitize(&mut h);
    let d = h.nrows();
    let eig = nalgebra::SymmetricEigen::new(to_nalgebra(&h));
    let vals = eig.eigenvalues.iter().copied().collect();
    let vecs = CMatrix::from_shape_fn((d, d), |(i, j)| eig.eigenvectors[(i, j)]);
    (vals, vecs)
}

/// Trace distance `½‖a − b‖₁` between Hermitian matrices.
pub fn trace_distance(a: &CMatrix, b: &CMatrix) -> f64 {
    let diff = a - b;
    0.5 * hermitian_eigenvalues(&diff).iter().map(|v| v.abs()).sum::<f64>()
}

/// Neumaier compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = CompensatedSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn kron_dimensions_and_entries() {
        let a = array![[1.0, 2.0], [3.0, 4.0]];
        let b = array![[0.0, 1.0], [1.0, 0.0]];
        let k = kron(&a, &b);
        assert_eq!(k.dim(), (4, 4));
        assert_eq!(k[[0, 1]], 1.0);
        assert_eq!(k[[3, 2]], 4.0);
        assert_eq!(k[[1, 2]], 2.0);
    }

    #[test]
    fn expm_of_rotation_generator() {
        let theta = 0.7;
        let a = array![[0.0, -theta], [theta, 0.0]];
        let e = expm(&a);
        assert_abs_diff_eq!(e[[0, 0]], theta.cos(), epsilon = 1e-14);
        assert_abs_diff_eq!(e[[1, 0]], theta.sin(), epsilon = 1e-14);
    }

    #[test]
    fn expm_large_norm_pauli() {
        // exp(-i t X) = cos t I - i sin t X
        let t = 37.3;
        let x = array![[ZERO, ONE], [ONE, ZERO]].mapv(|v| v * c64(0.0, -t));
        let e = expm(&x);
        assert!((e[[0, 0]] - c64(t.cos(), 0.0)).norm() < 1e-11);
        assert!((e[[0, 1]] - c64(0.0, -t.sin())).norm() < 1e-11);
    }

    #[test]
    fn solve_recovers_known_solution() {
        let a = array![[4.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 2.0]];
        let x = array![[1.0], [-2.0], [0.5]];
        let b = matmul(&a, &x);
        let got = solve(&a, &b).unwrap();
        assert!(max_abs_diff(&got, &x) < 1e-14);
    }

    #[test]
    fn solve_flags_singular() {
        let a = array![[1.0, 2.0], [2.0, 4.0]];
        let b = array![[1.0], [1.0]];
        assert_eq!(solve(&a, &b), Err(QemError::Singular));
    }

    #[test]
    fn trace_distance_orthogonal_pure_states() {
        let p0 = array![[ONE, ZERO], [ZERO, ZERO]];
        let p1 = array![[ZERO, ZERO], [ZERO, ONE]];
        assert_abs_diff_eq!(trace_distance(&p0, &p1), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(trace_distance(&p0, &p0), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn compensated_sum_beats_naive() {
        let vals = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(compensated_sum(vals), 2.0);
    }
}
