//! Dense reference implementations for tests.
//!
//! Everything here works on plain `Vec<Vec<f64>>` with hand-written kernels:
//! Gauss-Jordan inversion, Cholesky, Householder tridiagonalization with
//! Sturm bisection. Conditionals are computed by partitioning the covariance,
//! the opposite route to the production code, which partitions precisions.

use crate::error::{Error, Result};
use crate::gmrf::FieldHyperparams;
use crate::mesh::{distance, FieldLayout, GrainMesh, NeighborhoodGraph};
use crate::model::ModelState;

pub type Dense = Vec<Vec<f64>>;

pub const SIZE_CAP: usize = 200;

pub fn zeros(r: usize, c: usize) -> Dense {
    vec![vec![0.0; c]; r]
}

pub fn transpose(a: &Dense) -> Dense {
    let c = a.first().map_or(0, Vec::len);
    (0..c).map(|j| a.iter().map(|row| row[j]).collect()).collect()
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let inner = b.len();
    let c = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            let mut out = vec![0.0; c];
            for k in 0..inner {
                let v = row[k];
                if v != 0.0 {
                    for j in 0..c {
                        out[j] += v * b[k][j];
                    }
                }
            }
            out
        })
        .collect()
}

pub fn matvec(a: &Dense, x: &[f64]) -> Vec<f64> {
    a.iter()
        .map(|row| row.iter().zip(x).map(|(p, q)| p * q).sum())
        .collect()
}

pub fn submatrix(a: &Dense, rows: &[usize], cols: &[usize]) -> Dense {
    rows.iter()
        .map(|&i| cols.iter().map(|&j| a[i][j]).collect())
        .collect()
}

/// Inverse by Gauss-Jordan elimination with partial pivoting.
pub fn inverse(a: &Dense) -> Result<Dense> {
    let n = a.len();
    let mut m: Dense = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))
            .unwrap();
        if m[piv][col] == 0.0 {
            return Err(Error::NotPositiveDefinite { pivot: col });
        }
        m.swap(col, piv);
        let d = m[col][col];
        for v in m[col].iter_mut() {
            *v /= d;
        }
        let pivot_row = m[col].clone();
        for (i, row) in m.iter_mut().enumerate() {
            if i != col && row[col] != 0.0 {
                let f = row[col];
                for (v, p) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
            }
        }
    }
    Ok(m.into_iter().map(|r| r[n..].to_vec()).collect())
}

/// Lower Cholesky factor.
pub fn cholesky(a: &Dense) -> Result<Dense> {
    let n = a.len();
    let mut l = zeros(n, n);
    for j in 0..n {
        let mut d = a[j][j];
        for k in 0..j {
            d -= l[j][k] * l[j][k];
        }
        if !(d > 0.0) {
            return Err(Error::NotPositiveDefinite { pivot: j });
        }
        let d = d.sqrt();
        l[j][j] = d;
        for i in j + 1..n {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            l[i][j] = s / d;
        }
    }
    Ok(l)
}

/// ln N(x; mean, cov).
pub fn gaussian_log_density(cov: &Dense, mean: &[f64], x: &[f64]) -> Result<f64> {
    let l = cholesky(cov)?;
    let n = x.len();
    let mut z = vec![0.0; n];
    for i in 0..n {
        let mut s = x[i] - mean[i];
        for k in 0..i {
            s -= l[i][k] * z[k];
        }
        z[i] = s / l[i][i];
    }
    let log_det: f64 = (0..n).map(|i| 2.0 * l[i][i].ln()).sum();
    let quad: f64 = z.iter().map(|v| v * v).sum();
    Ok(-0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + quad))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &Dense) -> f64 {
    let (d, e) = tridiagonalize(a);
    let n = d.len();
    if n == 0 {
        return f64::NAN;
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { e[i - 1].abs() } else { 0.0 } + if i + 1 < n { e[i].abs() } else { 0.0 };
        lo = lo.min(d[i] - r);
        hi = hi.max(d[i] + r);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(&d, &e, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Number of eigenvalues below `x`.
fn sturm_count(d: &[f64], e: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..d.len() {
        let off = if i > 0 { e[i - 1] * e[i - 1] / q } else { 0.0 };
        q = d[i] - x - off;
        if q == 0.0 {
            q = -f64::EPSILON * (d[i].abs() + x.abs() + 1.0);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Householder reduction to (diagonal, subdiagonal).
fn tridiagonalize(a: &Dense) -> (Vec<f64>, Vec<f64>) {
    let n = a.len();
    let mut m = a.clone();
    for k in 0..n.saturating_sub(2) {
        let norm = (k + 1..n).map(|i| m[i][k] * m[i][k]).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if m[k + 1][k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k + 1..n).map(|i| m[i][k]).collect();
        v[0] -= alpha;
        let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if vn == 0.0 {
            continue;
        }
        for x in v.iter_mut() {
            *x /= vn;
        }
        let s = n - k - 1;
        let p: Vec<f64> = (0..s)
            .map(|i| (0..s).map(|j| m[k + 1 + i][k + 1 + j] * v[j]).sum())
            .collect();
        let kk: f64 = v.iter().zip(&p).map(|(a, b)| a * b).sum();
        let q: Vec<f64> = p.iter().zip(&v).map(|(pi, vi)| pi - kk * vi).collect();
        for i in 0..s {
            for j in 0..s {
                m[k + 1 + i][k + 1 + j] -= 2.0 * (v[i] * q[j] + q[i] * v[j]);
            }
        }
        m[k + 1][k] = alpha;
        m[k][k + 1] = alpha;
        for i in k + 2..n {
            m[i][k] = 0.0;
            m[k][i] = 0.0;
        }
    }
    let d = (0..n).map(|i| m[i][i]).collect();
    let e = (0..n.saturating_sub(1)).map(|i| m[i + 1][i]).collect();
    (d, e)
}

/// Dense precision built from neighbor lists by the entry formula.
pub fn dense_precision(graph: &NeighborhoodGraph, hp: &FieldHyperparams) -> Dense {
    let n = graph.dim();
    let mut q = zeros(n, n);
    for p in 0..n {
        let w = graph.within(p).len() as f64;
        let b = graph.between(p).len() as f64;
        q[p][p] = hp.theta * (w + hp.rho * b) / hp.kappa;
        for &j in graph.within(p) {
            q[p][j] = -hp.theta;
        }
        for &j in graph.between(p) {
            q[p][j] = -hp.theta * hp.rho;
        }
    }
    q
}

/// Dense design by scalar recomputation of exp(−φ d) Δ.
pub fn dense_design(mesh: &GrainMesh, layout: &FieldLayout, phi: f64) -> Dense {
    let mut x = zeros(mesh.n_elements(), layout.dim());
    for (m, row) in x.iter_mut().enumerate() {
        let c = mesh.centroid(m);
        for (p, v) in row.iter_mut().enumerate() {
            if layout.grain(p) == mesh.grain_of(m) {
                let d = distance(c, mesh.nodes()[layout.node(p)]);
                *v = (-phi * d).exp() * layout.weight(p);
            }
        }
    }
    x
}

/// Which latent field a dense query refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Field {
    Beta,
    Gamma,
}

/// Dense copy of everything the latent-field conditionals depend on.
#[derive(Clone, Debug)]
pub struct DenseInstance {
    pub q_beta: Dense,
    pub q_gamma: Dense,
    pub x_beta: Dense,
    pub x_gamma: Dense,
    /// Diagonal of W.
    pub w: Vec<f64>,
    /// y − μ_{g(m)}
    pub base: Vec<f64>,
    pub nu_beta: f64,
    pub nu_gamma: f64,
}

impl DenseInstance {
    pub fn new(
        q_beta: Dense,
        q_gamma: Dense,
        x_beta: Dense,
        x_gamma: Dense,
        w: Vec<f64>,
        base: Vec<f64>,
        nu_beta: f64,
        nu_gamma: f64,
    ) -> Result<Self> {
        let dim = q_beta.len() + q_gamma.len();
        if dim > SIZE_CAP {
            return Err(Error::SizeCap { dim, cap: SIZE_CAP });
        }
        Ok(Self {
            q_beta,
            q_gamma,
            x_beta,
            x_gamma,
            w,
            base,
            nu_beta,
            nu_gamma,
        })
    }

    /// Instance for a mesh-derived problem at the state's parameters.
    pub fn from_state(
        mesh: &GrainMesh,
        second: &FieldLayout,
        third: &FieldLayout,
        graphs: (&NeighborhoodGraph, &NeighborhoodGraph),
        y: &[f64],
        state: &ModelState,
    ) -> Result<Self> {
        let dim = second.dim() + third.dim();
        if dim > SIZE_CAP {
            return Err(Error::SizeCap { dim, cap: SIZE_CAP });
        }
        let w = state.omega.iter().map(|o| 1.0 / (state.sigma2 * o)).collect();
        let base = (0..mesh.n_elements())
            .map(|m| y[m] - state.mu_g[mesh.grain_of(m)])
            .collect();
        Self::new(
            dense_precision(graphs.0, &state.hp_beta),
            dense_precision(graphs.1, &state.hp_gamma),
            dense_design(mesh, second, state.hp_beta.phi),
            dense_design(mesh, third, state.hp_gamma.phi),
            w,
            base,
            state.hp_beta.nu,
            state.hp_gamma.nu,
        )
    }

    pub fn dim(&self, field: Field) -> usize {
        match field {
            Field::Beta => self.q_beta.len(),
            Field::Gamma => self.q_gamma.len(),
        }
    }

    fn parts(&self, field: Field) -> (&Dense, &Dense, f64, &Dense, f64) {
        match field {
            Field::Beta => (&self.q_beta, &self.x_beta, self.nu_beta, &self.x_gamma, self.nu_gamma),
            Field::Gamma => (&self.q_gamma, &self.x_gamma, self.nu_gamma, &self.x_beta, self.nu_beta),
        }
    }

    /// Posterior precision XᵀWX + Q and linear term XᵀW e + Qν1 of one field
    /// given the other field's value.
    fn field_posterior(&self, field: Field, other: &[f64]) -> (Dense, Vec<f64>) {
        let (q, x, nu, x_other, _) = self.parts(field);
        let fo = if other.is_empty() {
            vec![0.0; self.base.len()]
        } else {
            matvec(x_other, other)
        };
        let e: Vec<f64> = self.base.iter().zip(&fo).map(|(b, f)| b - f).collect();
        let n = q.len();
        let xt = transpose(x);
        let mut prec = q.clone();
        let mut lin: Vec<f64> = (0..n).map(|i| nu * q[i].iter().sum::<f64>()).collect();
        for i in 0..n {
            for j in 0..=i {
                let s: f64 = (0..self.w.len()).map(|m| xt[i][m] * self.w[m] * xt[j][m]).sum();
                prec[i][j] += s;
                if i != j {
                    prec[j][i] += s;
                }
            }
            lin[i] += (0..self.w.len()).map(|m| xt[i][m] * self.w[m] * e[m]).sum::<f64>();
        }
        (prec, lin)
    }

    /// Mean and covariance of field[s] given field[s̄], the other field and
    /// everything else.
    pub fn dense_conditional(
        &self,
        field: Field,
        s: &[usize],
        current: &[f64],
        other: &[f64],
    ) -> Result<(Vec<f64>, Dense)> {
        let (prec, lin) = self.field_posterior(field, other);
        let cov = inverse(&prec)?;
        let mean = matvec(&cov, &lin);
        let n = prec.len();
        let rest: Vec<usize> = (0..n).filter(|i| !s.contains(i)).collect();
        let c_ss = submatrix(&cov, s, s);
        if rest.is_empty() {
            return Ok((s.iter().map(|&i| mean[i]).collect(), c_ss));
        }
        let c_sr = submatrix(&cov, s, &rest);
        let c_rr_inv = inverse(&submatrix(&cov, &rest, &rest))?;
        let gain = matmul(&c_sr, &c_rr_inv);
        let dev: Vec<f64> = rest.iter().map(|&j| current[j] - mean[j]).collect();
        let shift = matvec(&gain, &dev);
        let cond_mean = s.iter().zip(&shift).map(|(&i, d)| mean[i] + d).collect();
        let reduce = matmul(&gain, &transpose(&c_sr));
        let cond_cov = c_ss
            .iter()
            .zip(&reduce)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
            .collect();
        Ok((cond_mean, cond_cov))
    }

    /// Joint posterior mean and covariance of (β, γ) at fixed
    /// hyperparameters, μ_g, σ² and ω.
    pub fn dense_posterior_moments(&self) -> Result<(Vec<f64>, Dense)> {
        let nb = self.q_beta.len();
        let ng = self.q_gamma.len();
        let n = nb + ng;
        let m = self.base.len();
        let mut q = zeros(n, n);
        let mut nu = vec![self.nu_beta; n];
        for i in 0..nb {
            q[i][..nb].copy_from_slice(&self.q_beta[i]);
        }
        for i in 0..ng {
            q[nb + i][nb..].copy_from_slice(&self.q_gamma[i]);
            nu[nb + i] = self.nu_gamma;
        }
        let x: Dense = (0..m)
            .map(|r| {
                let mut row = self.x_beta[r].clone();
                if ng > 0 {
                    row.extend_from_slice(&self.x_gamma[r]);
                }
                row
            })
            .collect();
        let xt = transpose(&x);
        let wx: Dense = x
            .iter()
            .zip(&self.w)
            .map(|(row, w)| row.iter().map(|v| v * w).collect())
            .collect();
        let xtwx = matmul(&xt, &wx);
        let prec: Dense = q
            .iter()
            .zip(&xtwx)
            .map(|(a, b)| a.iter().zip(b).map(|(p, r)| p + r).collect())
            .collect();
        let qnu = matvec(&q, &nu);
        let xtwe = matvec(&xt, &self.base.iter().zip(&self.w).map(|(b, w)| b * w).collect::<Vec<_>>());
        let lin: Vec<f64> = qnu.iter().zip(&xtwe).map(|(a, b)| a + b).collect();
        let cov = inverse(&prec)?;
        Ok((matvec(&cov, &lin), cov))
    }
}
