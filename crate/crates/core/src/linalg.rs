//! Sparse SPD operators, Jacobi-preconditioned conjugate gradients, small
//! dense Cholesky solves and dual norms.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("conjugate gradients stopped after {iterations} iterations with relative residual {relative_residual:e}")]
    NotConverged { iterations: usize, relative_residual: f64 },
    #[error("matrix is singular or not positive definite (pivot {index} = {pivot:e})")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("right-hand side contains non-finite entries")]
    NonFinite,
}

/// Row-compressed symmetric matrix with both triangles stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSpd {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSpd {
    /// Sums duplicate entries. Contributions to `(i, j)` are accumulated in
    /// the order they were supplied, so symmetric element contributions
    /// produce an exactly symmetric matrix.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> SparseSpd {
        triplets.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len() / 2);
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len() / 2);
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            assert!(i < n && j < n, "triplet ({i}, {j}) outside a {n}x{n} matrix");
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseSpd { n, row_ptr, col_idx, values }
    }

    pub fn identity(n: usize) -> SparseSpd {
        SparseSpd::from_triplets(n, (0..n).map(|i| (i, i, 1.0)).collect())
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> SparseSpd {
        let n = rows.len();
        let mut t = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    t.push((i, j, v));
                }
            }
        }
        SparseSpd::from_triplets(n, t)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yi = s;
        }
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.mul_vec(y))
    }

    /// Largest `|A_ij − A_ji|`.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn to_dense(&self) -> DenseSym {
        let mut d = DenseSym::zeros(self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                d.set(i, j, v);
            }
        }
        d
    }

    /// Entrywise `self + c·other`, assuming both come from the same mesh.
    pub fn add_scaled(&self, c: f64, other: &SparseSpd) -> SparseSpd {
        let mut t = Vec::with_capacity(self.nnz() + other.nnz());
        for i in 0..self.n {
            t.extend(self.row(i).map(|(j, v)| (i, j, v)));
        }
        for i in 0..other.n {
            t.extend(other.row(i).map(|(j, v)| (i, j, c * v)));
        }
        SparseSpd::from_triplets(self.n, t)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solution report of a CG run.
#[derive(Debug, Clone, PartialEq)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Solves `A x = b` with `‖b − A x‖ ≤ rel_tol ‖b‖`, starting from zero.
pub fn cg_solve(a: &SparseSpd, b: &[f64], rel_tol: f64, max_iter: usize) -> Result<Vec<f64>, SolveError> {
    cg_solve_from(a, b, vec![0.0; b.len()], rel_tol, max_iter).map(|o| o.x)
}

/// Jacobi-preconditioned CG from an initial guess. The stopping test is
/// made on the true residual, recomputed whenever the recursive one claims
/// convergence.
pub fn cg_solve_from(
    a: &SparseSpd,
    b: &[f64],
    x0: Vec<f64>,
    rel_tol: f64,
    max_iter: usize,
) -> Result<CgOutcome, SolveError> {
    let n = a.dim();
    if b.len() != n {
        return Err(SolveError::Dimension { expected: n, got: b.len() });
    }
    if x0.len() != n {
        return Err(SolveError::Dimension { expected: n, got: x0.len() });
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(SolveError::NonFinite);
    }
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok(CgOutcome { x: vec![0.0; n], iterations: 0, relative_residual: 0.0 });
    }
    let target = rel_tol * bnorm;
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect();

    let mut x = x0;
    let mut r: Vec<f64> = {
        let ax = a.mul_vec(&x);
        b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect()
    };
    let mut rnorm = norm2(&r);
    if rnorm <= target {
        return Ok(CgOutcome { x, iterations: 0, relative_residual: rnorm / bnorm });
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=max_iter {
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(SolveError::NotPositiveDefinite { index: it, pivot: pap });
        }
        let step = rz / pap;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        rnorm = norm2(&r);
        if rnorm <= target {
            let ax = a.mul_vec(&x);
            for i in 0..n {
                r[i] = b[i] - ax[i];
            }
            rnorm = norm2(&r);
            if rnorm <= target {
                return Ok(CgOutcome { x, iterations: it, relative_residual: rnorm / bnorm });
            }
            // restart from the true residual
            for i in 0..n {
                z[i] = r[i] * inv_diag[i];
            }
            p.copy_from_slice(&z);
            rz = dot(&r, &z);
            continue;
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(SolveError::NotConverged { iterations: max_iter, relative_residual: rnorm / bnorm })
}

/// Small dense symmetric matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSym {
    n: usize,
    data: Vec<f64>,
}

impl DenseSym {
    pub fn zeros(n: usize) -> DenseSym {
        DenseSym { n, data: vec![0.0; n * n] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> DenseSym {
        let n = rows.len();
        let mut d = DenseSym::zeros(n);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), n, "matrix must be square");
            for (j, &v) in r.iter().enumerate() {
                d.set(i, j, v);
            }
        }
        d
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] += v;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| dot(&self.data[i * self.n..(i + 1) * self.n], x)).collect()
    }
}

/// Pivots below this fraction of the largest diagonal entry are treated as
/// a failed factorization.
const PIVOT_TOL: f64 = 1e-13;

/// Cholesky solve. Fails on non-positive or negligible pivots.
pub fn dense_solve(a: &DenseSym, b: &[f64]) -> Result<Vec<f64>, SolveError> {
    let n = a.dim();
    if b.len() != n {
        return Err(SolveError::Dimension { expected: n, got: b.len() });
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(SolveError::NonFinite);
    }
    let scale = (0..n).map(|i| a.get(i, i).abs()).fold(0.0, f64::max);
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if !(d > PIVOT_TOL * scale) || !d.is_finite() {
            return Err(SolveError::NotPositiveDefinite { index: j, pivot: d });
        }
        let d = d.sqrt();
        l[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / d;
        }
    }
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l[i * n + k] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] -= l[k * n + i] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    Ok(y)
}

pub const DUAL_NORM_TOL: f64 = 1e-12;

/// `‖r‖ = sqrt(rᵀ M⁻¹ r)` for the Gram matrix `M` of the chosen norm.
pub fn dual_norm(r: &[f64], m: &SparseSpd) -> Result<f64, SolveError> {
    let mut guess = vec![0.0; r.len()];
    dual_norm_warm(r, m, &mut guess)
}

/// As [`dual_norm`], reusing and updating `guess` as the CG start vector.
pub fn dual_norm_warm(r: &[f64], m: &SparseSpd, guess: &mut Vec<f64>) -> Result<f64, SolveError> {
    if guess.len() != r.len() {
        *guess = vec![0.0; r.len()];
    }
    let max_iter = 10 * r.len().max(10);
    let out = cg_solve_from(m, r, std::mem::take(guess), DUAL_NORM_TOL, max_iter)?;
    let value = dot(r, &out.x).max(0.0).sqrt();
    *guess = out.x;
    Ok(value)
}
