use nalgebra_sparse::{CooMatrix, CsrMatrix};

use crate::error::{Error, Result};

/// Relative residual target of the conjugate-gradient solver.
pub const CG_TOL: f64 = 1e-10;
pub const CG_MAX_ITER: usize = 100_000;

/// Sparse symmetric matrix plus an optional low-rank term `ρ Σ_c m_c m_cᵀ`.
///
/// The low-rank term fixes the weighted mean of periodic unknowns without
/// pinning a vertex.
#[derive(Clone, Debug)]
pub struct SparseOperator {
    csr: CsrMatrix<f64>,
    low_rank: Vec<Vec<f64>>,
    rho: f64,
}

impl SparseOperator {
    /// Builds from triplets; duplicate entries are summed.
    pub fn from_triplets(n: usize, rows: Vec<usize>, cols: Vec<usize>, vals: Vec<f64>) -> Result<Self> {
        let coo = CooMatrix::try_from_triplets(n, n, rows, cols, vals)
            .map_err(|e| Error::input(format!("sparse assembly: {e}")))?;
        Ok(SparseOperator {
            csr: CsrMatrix::from(&coo),
            low_rank: Vec::new(),
            rho: 0.0,
        })
    }

    pub fn dim(&self) -> usize {
        self.csr.nrows()
    }

    pub fn csr(&self) -> &CsrMatrix<f64> {
        &self.csr
    }

    /// `max |A − Aᵀ| / max |A|` of the sparse part.
    pub fn asymmetry(&self) -> f64 {
        let t = self.csr.transpose();
        let diff = &self.csr - &t;
        let dmax = diff.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let amax = self.csr.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if amax == 0.0 {
            0.0
        } else {
            dmax / amax
        }
    }

    /// Errors unless `|A − Aᵀ|_∞ ≤ 1e−12·|A|_∞`.
    pub fn check_symmetric(&self) -> Result<()> {
        let a = self.asymmetry();
        if a > 1e-12 {
            return Err(Error::numerical("assembled operator is not symmetric", a));
        }
        Ok(())
    }

    /// Adds `ρ Σ m mᵀ`, with ρ scaled to the mean diagonal so the term is well sized.
    pub fn with_mean_constraints(mut self, vectors: Vec<Vec<f64>>) -> Self {
        let n = self.dim().max(1) as f64;
        let diag_mean = self.diagonal_sparse().iter().sum::<f64>() / n;
        let w2 = vectors
            .iter()
            .map(|m| m.iter().map(|v| v * v).sum::<f64>())
            .fold(0.0, f64::max);
        self.rho = if w2 > 0.0 { diag_mean / w2 } else { 0.0 };
        self.low_rank = vectors;
        self
    }

    fn diagonal_sparse(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.dim()];
        for (i, row) in self.csr.row_iter().enumerate() {
            for (&j, &v) in row.col_indices().iter().zip(row.values()) {
                if i == j {
                    d[i] += v;
                }
            }
        }
        d
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = self.diagonal_sparse();
        for m in &self.low_rank {
            for (di, mi) in d.iter_mut().zip(m) {
                *di += self.rho * mi * mi;
            }
        }
        d
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let offsets = self.csr.row_offsets();
        let cols = self.csr.col_indices();
        let vals = self.csr.values();
        for i in 0..self.dim() {
            let mut acc = 0.0;
            for p in offsets[i]..offsets[i + 1] {
                acc += vals[p] * x[cols[p]];
            }
            y[i] = acc;
        }
        for m in &self.low_rank {
            let dot: f64 = m.iter().zip(x).map(|(a, b)| a * b).sum();
            for (yi, mi) in y.iter_mut().zip(m) {
                *yi += self.rho * dot * mi;
            }
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.apply(x, &mut y);
        y
    }

    /// Dense copy (tests and small diagnostics only).
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.dim();
        let mut m = nalgebra::DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            self.apply(&e, &mut col);
            for i in 0..n {
                m[(i, j)] = col[i];
            }
            e[j] = 0.0;
        }
        m
    }

    /// Smallest Ritz value after `steps` Lanczos iterations from a fixed start vector.
    pub fn lanczos_min_ritz(&self, steps: usize) -> f64 {
        let n = self.dim();
        if n == 0 {
            return 0.0;
        }
        let mut q: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919) % 13) as f64 / 13.0).collect();
        let nq = norm(&q);
        q.iter_mut().for_each(|v| *v /= nq);
        let mut q_prev = vec![0.0; n];
        let mut alphas = Vec::new();
        let mut betas: Vec<f64> = Vec::new();
        let mut w = vec![0.0; n];
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for k in 0..steps.min(n) {
            basis.push(q.clone());
            self.apply(&q, &mut w);
            let alpha = dot(&w, &q);
            alphas.push(alpha);
            let beta_prev = if k > 0 { betas[k - 1] } else { 0.0 };
            for i in 0..n {
                w[i] -= alpha * q[i] + beta_prev * q_prev[i];
            }
            // full reorthogonalization keeps the short recurrence honest
            for b in &basis {
                let c = dot(&w, b);
                for i in 0..n {
                    w[i] -= c * b[i];
                }
            }
            let beta = norm(&w);
            if beta < 1e-14 {
                break;
            }
            betas.push(beta);
            q_prev = std::mem::replace(&mut q, w.iter().map(|v| v / beta).collect());
        }
        let m = alphas.len();
        let t = nalgebra::DMatrix::from_fn(m, m, |i, j| {
            if i == j {
                alphas[i]
            } else if i + 1 == j || j + 1 == i {
                betas[i.min(j)]
            } else {
                0.0
            }
        });
        nalgebra::SymmetricEigen::new(t)
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Outcome of a conjugate-gradient solve.
#[derive(Clone, Debug)]
pub struct CgReport {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients for `A x = b`, starting from `x`.
pub fn pcg(op: &SparseOperator, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<CgReport> {
    let n = op.dim();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgReport {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let inv_diag: Vec<f64> = op
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut r = op.mul(x);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, d)| a * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut res = norm(&r) / bnorm;
    let mut it = 0;
    while res > tol {
        if it >= max_iter {
            return Err(Error::numerical(
                format!("conjugate gradients did not converge in {max_iter} iterations"),
                res,
            ));
        }
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::numerical("operator is not positive definite", res));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res = norm(&r) / bnorm;
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        it += 1;
    }
    // guard against drift of the recursive residual
    let ax = op.mul(x);
    let true_res = norm(&b.iter().zip(&ax).map(|(a, c)| a - c).collect::<Vec<_>>()) / bnorm;
    Ok(CgReport {
        iterations: it,
        relative_residual: true_res,
    })
}
