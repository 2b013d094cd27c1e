//! Compressed-row sparse matrices, CG and BiCGStab, and a dense LU solve
//! used as a test oracle.

use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("no convergence after {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("breakdown at iteration {iteration}: {what}")]
    Breakdown { iteration: usize, what: &'static str },
    #[error("matrix is singular to working precision")]
    Singular,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

pub type Result<T> = std::result::Result<T, SolveError>;

const PAR_THRESHOLD: usize = 20_000;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Zero matrix with the given sparsity pattern; each row's columns are
    /// sorted and deduplicated.
    pub fn from_pattern(n: usize, rows: Vec<Vec<usize>>) -> Self {
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for mut r in rows {
            r.sort_unstable();
            r.dedup();
            col_idx.extend(r);
            row_ptr.push(col_idx.len());
        }
        let nnz = col_idx.len();
        CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values: vec![0.0; nnz],
        }
    }

    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows = vec![Vec::new(); n];
        for &(i, j, _) in triplets {
            rows[i].push(j);
        }
        let mut m = Self::from_pattern(n, rows);
        for &(i, j, v) in triplets {
            m.add(i, j, v);
        }
        m
    }

    pub fn from_dense(a: &[Vec<f64>]) -> Self {
        let n = a.len();
        let mut t = Vec::new();
        for (i, row) in a.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    t.push((i, j, v));
                }
            }
        }
        Self::from_triplets(n, &t)
    }

    pub fn identity(n: usize) -> Self {
        let t: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        Self::from_triplets(n, &t)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    /// Position of `(i, j)` in the value array.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let start = self.row_ptr[i];
        self.col_idx[start..self.row_ptr[i + 1]]
            .binary_search(&j)
            .ok()
            .map(|k| start + k)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |k| self.values[k])
    }

    /// Adds `v` to entry `(i, j)`, which must be in the pattern.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self
            .position(i, j)
            .unwrap_or_else(|| panic!("entry ({}, {}) not in sparsity pattern", i, j));
        self.values[k] += v;
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self
            .position(i, j)
            .unwrap_or_else(|| panic!("entry ({}, {}) not in sparsity pattern", i, j));
        self.values[k] = v;
    }

    pub fn same_pattern(&self, other: &CsrMatrix) -> bool {
        self.n == other.n && self.row_ptr == other.row_ptr && self.col_idx == other.col_idx
    }

    /// `a·self + b·other` for matrices sharing a pattern.
    pub fn linear_combination(&self, a: f64, other: &CsrMatrix, b: f64) -> CsrMatrix {
        assert!(self.same_pattern(other), "patterns differ");
        let mut out = self.clone();
        for (o, (x, y)) in out.values.iter_mut().zip(self.values.iter().zip(&other.values)) {
            *o = a * x + b * y;
        }
        out
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let (cols, vals) = self.row(i);
        cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum()
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        if self.n >= PAR_THRESHOLD {
            y.par_iter_mut()
                .enumerate()
                .for_each(|(i, yi)| *yi = self.row_dot(i, x));
        } else {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi = self.row_dot(i, x);
            }
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut t = Vec::with_capacity(self.nnz());
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                t.push((j, i, v));
            }
        }
        Self::from_triplets(self.n, &t)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                row[j] = v;
            }
        }
        d
    }

    /// Largest `|a_ij − a_ji|` over the pattern.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative residual target `‖Ax − b‖ ≤ tol·‖b‖`.
    pub tol: f64,
    pub max_iter: usize,
    pub jacobi: bool,
    /// Factor banded systems instead of iterating when the band is narrow.
    pub banded: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-8,
            max_iter: 10_000,
            jacobi: false,
            banded: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    if a.len() >= PAR_THRESHOLD {
        a.par_iter().zip(b).map(|(x, y)| x * y).sum()
    } else {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn check_dims(a: &CsrMatrix, b: &[f64], x: &[f64]) -> Result<()> {
    if b.len() != a.n || x.len() != a.n {
        return Err(SolveError::Dimension(format!(
            "matrix {} vs rhs {} / guess {}",
            a.n,
            b.len(),
            x.len()
        )));
    }
    Ok(())
}

fn inverse_diagonal(a: &CsrMatrix, jacobi: bool) -> Option<Vec<f64>> {
    jacobi.then(|| {
        a.diagonal()
            .into_iter()
            .map(|d| if d != 0.0 { 1.0 / d } else { 1.0 })
            .collect()
    })
}

fn precondition(dinv: &Option<Vec<f64>>, r: &[f64], z: &mut [f64]) {
    match dinv {
        Some(d) => z.iter_mut().zip(r.iter().zip(d)).for_each(|(z, (r, d))| *z = r * d),
        None => z.copy_from_slice(r),
    }
}

/// Conjugate gradients for symmetric positive definite `a`. `x` holds the
/// initial guess on entry.
pub fn cg_solve(a: &CsrMatrix, b: &[f64], x: &mut [f64], opts: &SolverOptions) -> Result<SolveStats> {
    check_dims(a, b, x)?;
    let n = a.n;
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats {
            iterations: 0,
            residual: 0.0,
        });
    }
    let dinv = inverse_diagonal(a, opts.jacobi);
    let mut r = a.matvec(x);
    r.iter_mut().zip(b).for_each(|(r, b)| *r = b - *r);
    let mut z = vec![0.0; n];
    precondition(&dinv, &r, &mut z);
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut res = norm(&r) / bnorm;
    for it in 0..=opts.max_iter {
        if res <= opts.tol {
            return Ok(SolveStats {
                iterations: it,
                residual: res,
            });
        }
        if it == opts.max_iter {
            break;
        }
        a.matvec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return Err(SolveError::Breakdown {
                iteration: it,
                what: "matrix is not positive definite",
            });
        }
        let alpha = rz / pap;
        x.iter_mut().zip(&p).for_each(|(x, p)| *x += alpha * p);
        r.iter_mut().zip(&ap).for_each(|(r, ap)| *r -= alpha * ap);
        precondition(&dinv, &r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.iter_mut().zip(&z).for_each(|(p, z)| *p = z + beta * *p);
        res = norm(&r) / bnorm;
    }
    Err(SolveError::NotConverged {
        iterations: opts.max_iter,
        residual: res,
    })
}

/// Stabilized biconjugate gradients for general nonsingular `a`.
pub fn bicgstab_solve(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    opts: &SolverOptions,
) -> Result<SolveStats> {
    check_dims(a, b, x)?;
    let n = a.n;
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats {
            iterations: 0,
            residual: 0.0,
        });
    }
    let dinv = inverse_diagonal(a, opts.jacobi);
    let mut r = a.matvec(x);
    r.iter_mut().zip(b).for_each(|(r, b)| *r = b - *r);
    let r_hat = r.clone();
    let mut p = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut z = vec![0.0; n];
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut res = norm(&r) / bnorm;
    let tiny = 1e-300;
    for it in 0..=opts.max_iter {
        if res <= opts.tol {
            return Ok(SolveStats {
                iterations: it,
                residual: res,
            });
        }
        if it == opts.max_iter {
            break;
        }
        let rho_new = dot(&r_hat, &r);
        if rho_new.abs() < tiny * bnorm * bnorm || !rho_new.is_finite() {
            return Err(SolveError::Breakdown {
                iteration: it,
                what: "rho vanished",
            });
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        precondition(&dinv, &p, &mut y);
        a.matvec_into(&y, &mut v);
        let rv = dot(&r_hat, &v);
        if rv.abs() < tiny || !rv.is_finite() {
            return Err(SolveError::Breakdown {
                iteration: it,
                what: "r_hat·v vanished",
            });
        }
        alpha = rho / rv;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) / bnorm <= opts.tol {
            x.iter_mut().zip(&y).for_each(|(x, y)| *x += alpha * y);
            let mut check = a.matvec(x);
            check.iter_mut().zip(b).for_each(|(c, b)| *c = b - *c);
            res = norm(&check) / bnorm;
            r = check;
            if res <= opts.tol {
                return Ok(SolveStats {
                    iterations: it + 1,
                    residual: res,
                });
            }
            continue;
        }
        precondition(&dinv, &s, &mut z);
        a.matvec_into(&z, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 || !tt.is_finite() {
            return Err(SolveError::Breakdown {
                iteration: it,
                what: "t vanished",
            });
        }
        omega = dot(&t, &s) / tt;
        if omega.abs() < tiny {
            return Err(SolveError::Breakdown {
                iteration: it,
                what: "omega vanished",
            });
        }
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        res = norm(&r) / bnorm;
    }
    Err(SolveError::NotConverged {
        iterations: opts.max_iter,
        residual: res,
    })
}

/// Gaussian elimination with partial pivoting.
pub fn direct_solve_dense(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let n = a.len();
    if b.len() != n || a.iter().any(|r| r.len() != n) {
        return Err(SolveError::Dimension("dense system must be square".into()));
    }
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut x = b.to_vec();
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        return Err(SolveError::Singular);
    }
    for k in 0..n {
        let (piv, pval) = (k..n)
            .map(|i| (i, m[i][k].abs()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pval <= scale * 1e-15 * n as f64 {
            return Err(SolveError::Singular);
        }
        m.swap(k, piv);
        x.swap(k, piv);
        for i in k + 1..n {
            let f = m[i][k] / m[k][k];
            if f == 0.0 {
                continue;
            }
            let (top, bottom) = m.split_at_mut(i);
            let rk = &top[k];
            for (mij, mkj) in bottom[0][k..].iter_mut().zip(&rk[k..]) {
                *mij -= f * mkj;
            }
            x[i] -= f * x[k];
        }
    }
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| m[k][j] * x[j]).sum();
        x[k] = (x[k] - s) / m[k][k];
    }
    Ok(x)
}

/// Lower and upper bandwidths of `a`.
pub fn bandwidths(a: &CsrMatrix) -> (usize, usize) {
    let mut kl = 0;
    let mut ku = 0;
    for i in 0..a.n() {
        for &j in a.row(i).0 {
            if j < i {
                kl = kl.max(i - j);
            } else {
                ku = ku.max(j - i);
            }
        }
    }
    (kl, ku)
}

/// LU factors of a banded matrix with partial pivoting.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    /// Row `i` holds columns `i − kl ..= i + kl + ku`; after factoring,
    /// columns below the diagonal hold the multipliers.
    width: usize,
    data: Vec<f64>,
    pivots: Vec<usize>,
}

impl BandedLu {
    /// Band storage cost `n · (2 kl + ku + 1)` if `a` were factored.
    pub fn storage(a: &CsrMatrix) -> usize {
        let (kl, ku) = bandwidths(a);
        a.n() * (2 * kl + ku + 1)
    }

    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.n();
        let (kl, ku) = bandwidths(a);
        let width = 2 * kl + ku + 1;
        let mut lu = BandedLu {
            n,
            kl,
            width,
            data: vec![0.0; n * width],
            pivots: vec![0; n],
        };
        for i in 0..n {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                *lu.at(i, j) = v;
            }
        }
        let scale = lu.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let hi = kl + ku;
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = lu.at(k, k).abs();
            for r in k + 1..=last {
                let v = lu.at(r, k).abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if !(best > scale * 1e-15) {
                return Err(SolveError::Singular);
            }
            lu.pivots[k] = p;
            let cmax = (k + hi).min(n - 1);
            if p != k {
                for j in k..=cmax {
                    let t = *lu.at(k, j);
                    *lu.at(k, j) = *lu.at(p, j);
                    *lu.at(p, j) = t;
                }
            }
            let d = *lu.at(k, k);
            for r in k + 1..=last {
                let l = *lu.at(r, k) / d;
                *lu.at(r, k) = l;
                if l != 0.0 {
                    for j in k + 1..=cmax {
                        let u = *lu.at(k, j);
                        *lu.at(r, j) -= l * u;
                    }
                }
            }
        }
        Ok(lu)
    }

    fn at(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.data[i * self.width + j + self.kl - i]
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width + j + self.kl - i]
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        if b.len() != n {
            return Err(SolveError::Dimension(format!("rhs has {} entries, matrix {}", b.len(), n)));
        }
        let mut x = b.to_vec();
        for k in 0..n {
            x.swap(k, self.pivots[k]);
            let xk = x[k];
            if xk != 0.0 {
                for r in k + 1..=(k + self.kl).min(n - 1) {
                    x[r] -= self.get(r, k) * xk;
                }
            }
        }
        let hi = self.width - self.kl - 1;
        for k in (0..n).rev() {
            let mut s = x[k];
            for j in k + 1..=(k + hi).min(n - 1) {
                s -= self.get(k, j) * x[j];
            }
            x[k] = s / self.get(k, k);
        }
        Ok(x)
    }
}
