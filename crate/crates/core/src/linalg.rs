//! Dense symmetric linear algebra for small Gram systems.
//!
//! `solve_spd` factors `C = L D Lᵀ` and falls back to an eigen-based
//! pseudo-inverse when a pivot collapses. `MaintainedInverse` keeps an
//! explicit `C⁻¹` so that replacing one row and column of `C` costs two
//! symmetric Sherman-Morrison corrections instead of a refactorization.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: matrix is {matrix}x{matrix}, vector has {vector} entries")]
    DimensionMismatch { matrix: usize, vector: usize },
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("matrix is singular to working tolerance; use the pseudo-inverse path")]
    Singular,
    #[error("row/column exchange at {index} leaves the matrix singular")]
    SingularUpdate { index: usize },
    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
}

/// Numerical constants for factorization and incremental updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Relative singularity threshold: pivots or eigenvalues at or below
    /// `sigma_tol * scale` are treated as zero.
    pub sigma_tol: f64,
    /// Smallest acceptable Sherman-Morrison denominator before refactoring.
    pub delta_tol: f64,
    /// Rank-one exchanges allowed between full refactorizations.
    pub refactor_period: usize,
    /// Bound on `max |C·inv − I|` checked on probe vectors after each exchange.
    pub drift_bound: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            sigma_tol: 1e-10,
            delta_tol: 1e-12,
            refactor_period: 64,
            drift_bound: 1e-6,
        }
    }
}

impl Tolerances {
    pub fn is_valid(&self) -> bool {
        self.sigma_tol > 0.0
            && self.delta_tol > 0.0
            && self.refactor_period > 0
            && self.drift_bound > 0.0
    }
}

/// Square dense matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    dim: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Panics if the rows are ragged or not square.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            assert_eq!(row.len(), dim, "matrix rows must be square");
            data.extend_from_slice(row);
        }
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.dim.max(1)).take(self.dim)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.rows().map(|row| dot(row, x)).collect()
    }

    pub fn mul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let src = other.row(k);
                let dst = &mut out.data[i * n..(i + 1) * n];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        out
    }

    /// Largest `|C[i][j] − C[j][i]|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for j in (i + 1)..self.dim {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> f64 {
        (0..self.dim)
            .map(|j| (0..self.dim).map(|i| self[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Replaces row and column `i` with `values` (symmetric exchange).
    pub fn set_row_col(&mut self, i: usize, values: &[f64]) {
        for (j, &v) in values.iter().enumerate() {
            self[(i, j)] = v;
            self[(j, i)] = v;
        }
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.dim + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// How a solve was carried out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    Factorization,
    PseudoInverse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub lambda: Vec<f64>,
    pub method: SolveMethod,
}

fn validate(c: &Matrix, b: &[f64]) -> Result<(), LinalgError> {
    if c.dim() != b.len() {
        return Err(LinalgError::DimensionMismatch {
            matrix: c.dim(),
            vector: b.len(),
        });
    }
    let asym = c.asymmetry();
    if asym > 1e-9 * c.max_abs() {
        return Err(LinalgError::NotSymmetric(asym));
    }
    Ok(())
}

/// `L D Lᵀ` factors of a symmetric matrix, unit lower-triangular `L`.
struct Ldl {
    l: Matrix,
    d: Vec<f64>,
}

impl Ldl {
    /// Fails when a pivot drops to `sigma_tol` times the largest diagonal.
    fn factor(c: &Matrix, sigma_tol: f64) -> Option<Ldl> {
        let n = c.dim();
        let scale = (0..n).map(|i| c[(i, i)].abs()).fold(0.0, f64::max);
        if n > 0 && scale == 0.0 {
            return None;
        }
        let floor = sigma_tol * scale;
        let mut l = Matrix::identity(n);
        let mut d = vec![0.0; n];
        for j in 0..n {
            let mut dj = c[(j, j)];
            for k in 0..j {
                dj -= l[(j, k)] * l[(j, k)] * d[k];
            }
            if dj.is_nan() || dj <= floor {
                return None;
            }
            d[j] = dj;
            for i in (j + 1)..n {
                let mut s = c[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)] * d[k];
                }
                l[(i, j)] = s / dj;
            }
        }
        Some(Ldl { l, d })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.d.len();
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                y[i] -= self.l[(i, k)] * y[k];
            }
        }
        for (yi, di) in y.iter_mut().zip(&self.d) {
            *yi /= di;
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                y[i] -= self.l[(k, i)] * y[k];
            }
        }
        y
    }

    fn inverse(&self) -> Matrix {
        let n = self.d.len();
        let mut inv = Matrix::zeros(n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        // Average away rounding asymmetry.
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (inv[(i, j)] + inv[(j, i)]);
                inv[(i, j)] = v;
                inv[(j, i)] = v;
            }
        }
        inv
    }
}

/// Solves `C λ = b` for symmetric positive semidefinite `C`, O(r³).
///
/// A singular `C` is routed to [`pseudo_solve`]; the returned method says
/// which path produced `λ`.
pub fn solve_spd(c: &Matrix, b: &[f64], tol: &Tolerances) -> Result<Solution, LinalgError> {
    validate(c, b)?;
    match Ldl::factor(c, tol.sigma_tol) {
        Some(ldl) => Ok(Solution {
            lambda: ldl.solve(b),
            method: SolveMethod::Factorization,
        }),
        None => Ok(Solution {
            lambda: pseudo_solve_unchecked(c, b, tol.sigma_tol),
            method: SolveMethod::PseudoInverse,
        }),
    }
}

/// Minimum-norm least-squares solution `λ = C† b` of a symmetric PSD system.
pub fn pseudo_solve(c: &Matrix, b: &[f64], tol: &Tolerances) -> Result<Vec<f64>, LinalgError> {
    validate(c, b)?;
    Ok(pseudo_solve_unchecked(c, b, tol.sigma_tol))
}

fn pseudo_solve_unchecked(c: &Matrix, b: &[f64], sigma_tol: f64) -> Vec<f64> {
    let (values, vectors) = symmetric_eigen(c);
    let sigma_max = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let n = c.dim();
    let mut lambda = vec![0.0; n];
    if sigma_max == 0.0 {
        return lambda;
    }
    let floor = sigma_tol * sigma_max;
    for (k, &sigma) in values.iter().enumerate() {
        if sigma.abs() <= floor {
            continue;
        }
        // Eigenvectors are the columns of `vectors`.
        let coeff: f64 = (0..n).map(|i| vectors[(i, k)] * b[i]).sum::<f64>() / sigma;
        for (i, l) in lambda.iter_mut().enumerate() {
            *l += coeff * vectors[(i, k)];
        }
    }
    lambda
}

/// Cyclic Jacobi eigen-decomposition. Returns eigenvalues and a matrix whose
/// columns are the matching orthonormal eigenvectors.
pub fn symmetric_eigen(c: &Matrix) -> (Vec<f64>, Matrix) {
    let n = c.dim();
    let mut a = c.clone();
    let mut v = Matrix::identity(n);
    let total: f64 = a.data.iter().map(|x| x * x).sum::<f64>().sqrt();
    if total == 0.0 {
        return (vec![0.0; n], v);
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * total {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let cs = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * cs;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = cs * akp - sn * akq;
                    a[(k, q)] = sn * akp + cs * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = cs * apk - sn * aqk;
                    a[(q, k)] = sn * apk + cs * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = cs * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + cs * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[(i, i)]).collect(), v)
}

/// What an exchange did to the maintained inverse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateKind {
    /// Row and column were already equal to the new values.
    Unchanged,
    /// Two symmetric rank-one corrections, O(r²).
    RankOne,
    /// Full O(r³) refactorization (period reached, tiny denominator or drift).
    Refactored,
}

/// An explicit inverse of a symmetric matrix that supports O(r²) exchange
/// of one row and column.
#[derive(Debug, Clone)]
pub struct MaintainedInverse {
    matrix: Matrix,
    inv: Matrix,
    swaps_since_refactor: usize,
    tolerances: Tolerances,
}

/// Inverts a symmetric positive definite matrix, O(r³).
pub fn invert(c: &Matrix, tol: &Tolerances) -> Result<MaintainedInverse, LinalgError> {
    let asym = c.asymmetry();
    if asym > 1e-9 * c.max_abs() {
        return Err(LinalgError::NotSymmetric(asym));
    }
    let ldl = Ldl::factor(c, tol.sigma_tol).ok_or(LinalgError::Singular)?;
    Ok(MaintainedInverse {
        matrix: c.clone(),
        inv: ldl.inverse(),
        swaps_since_refactor: 0,
        tolerances: *tol,
    })
}

impl MaintainedInverse {
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// The matrix whose inverse is maintained.
    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn inverse(&self) -> &Matrix {
        &self.inv
    }

    pub fn swaps_since_refactor(&self) -> usize {
        self.swaps_since_refactor
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.tolerances
    }

    /// `λ = C⁻¹ b`, O(r²).
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if b.len() != self.dim() {
            return Err(LinalgError::DimensionMismatch {
                matrix: self.dim(),
                vector: b.len(),
            });
        }
        Ok(self.inv.mul_vec(b))
    }

    /// `‖C‖₁ ‖C⁻¹‖₁`.
    pub fn condition_estimate(&self) -> f64 {
        self.matrix.norm_one() * self.inv.norm_one()
    }

    /// `max |C·inv − I|`, O(r³). Meant for tests and diagnostics.
    pub fn drift(&self) -> f64 {
        let prod = self.matrix.mul(&self.inv);
        let mut worst = 0.0f64;
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((prod[(i, j)] - target).abs());
            }
        }
        worst
    }

    /// Replaces row and column `index` of `C` with `new_row` and updates the
    /// inverse. `new_row[index]` is the new diagonal entry.
    ///
    /// On error the previous state is kept.
    pub fn swap_row_col(
        &mut self,
        index: usize,
        new_row: &[f64],
    ) -> Result<UpdateKind, LinalgError> {
        let r = self.dim();
        if new_row.len() != r {
            return Err(LinalgError::DimensionMismatch {
                matrix: r,
                vector: new_row.len(),
            });
        }
        if index >= r {
            return Err(LinalgError::IndexOutOfRange { index, dim: r });
        }
        let mut u: Vec<f64> = new_row
            .iter()
            .zip(self.matrix.row(index))
            .map(|(new, old)| new - old)
            .collect();
        if u.iter().all(|&x| x == 0.0) {
            return Ok(UpdateKind::Unchanged);
        }
        u[index] *= 0.5;

        let old = (
            self.matrix.clone(),
            self.inv.clone(),
            self.swaps_since_refactor,
        );
        self.matrix.set_row_col(index, new_row);

        if self.swaps_since_refactor + 1 >= self.tolerances.refactor_period {
            return self.refactor_or_restore(old, index);
        }

        // e uᵀ + u eᵀ = ½ v vᵀ − ½ w wᵀ with v = s e + u/s, w = s e − u/s.
        // The scale s balances the unit vector against u.
        let s = u.iter().map(|x| x * x).sum::<f64>().sqrt().sqrt();
        let mut v: Vec<f64> = u.iter().map(|x| x / s).collect();
        let mut w: Vec<f64> = v.iter().map(|x| -x).collect();
        v[index] += s;
        w[index] += s;

        if !self.rank_one(&v, 0.5) || !self.rank_one(&w, -0.5) {
            return self.refactor_or_restore(old, index);
        }
        self.swaps_since_refactor += 1;
        if self.probe_drift(index) > self.tolerances.drift_bound {
            return self.refactor_or_restore(old, index);
        }
        Ok(UpdateKind::RankOne)
    }

    /// inv ← (C + c·xxᵀ)⁻¹ by Sherman-Morrison. Returns false when the
    /// denominator is below `delta_tol`.
    fn rank_one(&mut self, x: &[f64], c: f64) -> bool {
        let q = self.inv.mul_vec(x);
        let denom = 1.0 + c * dot(x, &q);
        if denom.is_nan() || denom.abs() < self.tolerances.delta_tol {
            return false;
        }
        let f = c / denom;
        for (i, &qi) in q.iter().enumerate() {
            let qi = qi * f;
            for (j, &qj) in q.iter().enumerate() {
                self.inv[(i, j)] -= qi * qj;
            }
        }
        true
    }

    /// Residual of `C·inv` against the identity on two probe vectors: the
    /// exchanged unit vector and the all-ones vector. O(r²).
    fn probe_drift(&self, index: usize) -> f64 {
        let n = self.dim();
        let col: Vec<f64> = (0..n).map(|i| self.inv[(i, index)]).collect();
        let e = self.matrix.mul_vec(&col);
        let mut worst = 0.0f64;
        for (i, v) in e.iter().enumerate() {
            let target = if i == index { 1.0 } else { 0.0 };
            worst = worst.max((v - target).abs());
        }
        let ones = vec![1.0; n];
        let back = self.matrix.mul_vec(&self.inv.mul_vec(&ones));
        for v in back {
            worst = worst.max((v - 1.0).abs());
        }
        worst
    }

    fn refactor_or_restore(
        &mut self,
        old: (Matrix, Matrix, usize),
        index: usize,
    ) -> Result<UpdateKind, LinalgError> {
        match Ldl::factor(&self.matrix, self.tolerances.sigma_tol) {
            Some(ldl) => {
                self.inv = ldl.inverse();
                self.swaps_since_refactor = 0;
                Ok(UpdateKind::Refactored)
            }
            None => {
                (self.matrix, self.inv, self.swaps_since_refactor) = old;
                Err(LinalgError::SingularUpdate { index })
            }
        }
    }
}
