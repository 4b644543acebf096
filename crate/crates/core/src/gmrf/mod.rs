//! Sparse GMRF priors on the boundary fields.
//!
//! Precision entries for index p of a field with hyperparameters
//! (θ, κ, ρ):
//!
//! ```text
//! Q_pq = -θ            q a within-grain neighbor of p
//! Q_pq = -θ ρ          q a between-grain neighbor of p
//! Q_pp =  θ K_p / κ    K_p = |within(p)| + ρ |between(p)|
//! ```

pub mod sparse;

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::NeighborhoodGraph;
use crate::special::{ln_std_normal_pdf, std_normal_cdf, std_normal_quantile, LN_2PI};
use sparse::{CholeskyFactor, SymbolicCholesky, SymmetricCsr};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldHyperparams {
    pub nu: f64,
    pub theta: f64,
    pub kappa: f64,
    pub rho: f64,
    pub phi: f64,
}

/// Admissible interval for ρ. `lower` is `None` when no index has a
/// between-grain neighbor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RhoBounds {
    pub lower: Option<f64>,
    pub upper: f64,
}

impl RhoBounds {
    pub fn contains(&self, rho: f64) -> bool {
        rho < self.upper && self.lower.map_or(true, |lo| rho > lo)
    }
}

pub fn rho_bounds(graph: &NeighborhoodGraph) -> RhoBounds {
    let lower = (0..graph.dim())
        .filter(|&p| graph.between_count(p) > 0)
        .map(|p| graph.within_count(p) as f64 / graph.between_count(p) as f64)
        .min_by(f64::total_cmp)
        .map(|m| -m);
    RhoBounds { lower, upper: 1.0 }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EntryKind {
    Diagonal,
    Within,
    Between,
}

/// Sparsity structure of a field's precision matrix together with its
/// symbolic Cholesky analysis. Built once per mesh.
#[derive(Debug)]
pub struct PrecisionPattern {
    csr: SymmetricCsr,
    kinds: Vec<EntryKind>,
    within: Vec<usize>,
    between: Vec<usize>,
    bounds: RhoBounds,
    symbolic: SymbolicCholesky,
}

impl PrecisionPattern {
    pub fn new(graph: &NeighborhoodGraph) -> Arc<Self> {
        let n = graph.dim();
        let adj: Vec<Vec<usize>> = (0..n)
            .map(|p| {
                let mut v = graph.within(p).to_vec();
                v.extend_from_slice(graph.between(p));
                v
            })
            .collect();
        let csr = SymmetricCsr::from_adjacency(&adj);
        let mut kinds = Vec::with_capacity(csr.nnz());
        for p in 0..n {
            for (q, _) in csr.row(p) {
                kinds.push(if q == p {
                    EntryKind::Diagonal
                } else if graph.within(p).binary_search(&q).is_ok() {
                    EntryKind::Within
                } else {
                    EntryKind::Between
                });
            }
        }
        let symbolic = SymbolicCholesky::analyze(&csr);
        Arc::new(Self {
            kinds,
            within: (0..n).map(|p| graph.within_count(p)).collect(),
            between: (0..n).map(|p| graph.between_count(p)).collect(),
            bounds: rho_bounds(graph),
            symbolic,
            csr,
        })
    }

    pub fn dim(&self) -> usize {
        self.csr.dim()
    }

    pub fn rho_bounds(&self) -> RhoBounds {
        self.bounds
    }

    pub fn within_count(&self, p: usize) -> usize {
        self.within[p]
    }

    pub fn between_count(&self, p: usize) -> usize {
        self.between[p]
    }

    pub fn symbolic(&self) -> &SymbolicCholesky {
        &self.symbolic
    }

    /// Largest κ for which the assembled matrix is strictly diagonally
    /// dominant at the given ρ. Equals 1 for ρ ≥ 0.
    pub fn kappa_dominance_limit(&self, rho: f64) -> f64 {
        if rho >= 0.0 {
            return 1.0;
        }
        (0..self.dim())
            .map(|p| {
                let w = self.within[p] as f64;
                let b = rho.abs() * self.between[p] as f64;
                (w - b) / (w + b)
            })
            .fold(1.0, f64::min)
    }
}

#[derive(Clone, Debug)]
pub struct PrecisionMatrix {
    pattern: Arc<PrecisionPattern>,
    matrix: SymmetricCsr,
    k: Vec<f64>,
    hp: FieldHyperparams,
}

impl PrecisionMatrix {
    pub fn assemble(pattern: &Arc<PrecisionPattern>, hp: &FieldHyperparams) -> Result<Self> {
        check_bounds(hp, pattern.rho_bounds())?;
        let n = pattern.dim();
        let k: Vec<f64> = (0..n)
            .map(|p| pattern.within[p] as f64 + hp.rho * pattern.between[p] as f64)
            .collect();
        let mut matrix = pattern.csr.clone();
        for p in 0..n {
            for idx in matrix.row_ptr[p]..matrix.row_ptr[p + 1] {
                matrix.values[idx] = hp.theta
                    * match pattern.kinds[idx] {
                        EntryKind::Diagonal => k[p] / hp.kappa,
                        EntryKind::Within => -1.0,
                        EntryKind::Between => -hp.rho,
                    };
            }
        }
        Ok(Self {
            pattern: Arc::clone(pattern),
            matrix,
            k,
            hp: *hp,
        })
    }

    /// Same matrix with a different process mean; ν does not enter Q.
    pub fn set_nu(&mut self, nu: f64) {
        self.hp.nu = nu;
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn pattern(&self) -> &Arc<PrecisionPattern> {
        &self.pattern
    }

    pub fn hyperparams(&self) -> &FieldHyperparams {
        &self.hp
    }

    pub fn csr(&self) -> &SymmetricCsr {
        &self.matrix
    }

    pub fn get(&self, p: usize, q: usize) -> f64 {
        self.matrix.get(p, q)
    }

    pub fn row(&self, p: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.matrix.row(p)
    }

    /// K_p
    pub fn k(&self, p: usize) -> f64 {
        self.k[p]
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.matrix.mul_vec(x)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        self.matrix.to_dense()
    }

    /// min_p (Q_pp − Σ_{q≠p} |Q_pq|); positive iff strictly diagonally
    /// dominant.
    pub fn dominance_margin(&self) -> f64 {
        (0..self.dim())
            .map(|p| {
                self.row(p)
                    .map(|(q, v)| if q == p { v } else { -v.abs() })
                    .sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn factor(&self) -> Result<GmrfFactor> {
        Ok(GmrfFactor {
            chol: self.pattern.symbolic.factor(&self.matrix)?,
        })
    }
}

fn check_bounds(hp: &FieldHyperparams, bounds: RhoBounds) -> Result<()> {
    if !(hp.theta > 0.0 && hp.theta.is_finite()) {
        return Err(Error::BoundViolation(format!("theta = {} must be > 0", hp.theta)));
    }
    if !(hp.kappa > 0.0 && hp.kappa < 1.0) {
        return Err(Error::BoundViolation(format!("kappa = {} outside (0, 1)", hp.kappa)));
    }
    if !bounds.contains(hp.rho) {
        return Err(Error::BoundViolation(format!(
            "rho = {} outside ({:?}, {})",
            hp.rho, bounds.lower, bounds.upper
        )));
    }
    if !(hp.phi > 0.0 && hp.phi.is_finite()) {
        return Err(Error::BoundViolation(format!("phi = {} must be > 0", hp.phi)));
    }
    Ok(())
}

pub fn assemble_precision(graph: &NeighborhoodGraph, hp: &FieldHyperparams) -> Result<PrecisionMatrix> {
    PrecisionMatrix::assemble(&PrecisionPattern::new(graph), hp)
}

/// Sparse Cholesky factor of a field precision.
#[derive(Clone, Debug)]
pub struct GmrfFactor {
    chol: CholeskyFactor,
}

impl GmrfFactor {
    pub fn log_det(&self) -> f64 {
        self.chol.log_det()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.chol.solve(b)
    }

    /// Draw from N(mean, Q⁻¹).
    pub fn sample<R: Rng + ?Sized>(&self, mean: &[f64], rng: &mut R) -> Vec<f64> {
        let z: Vec<f64> = (0..self.chol.dim()).map(|_| rng.sample(StandardNormal)).collect();
        let mut x = self.chol.solve_transposed_unpermuted(&z);
        for (xi, m) in x.iter_mut().zip(mean) {
            *xi += m;
        }
        x
    }

    /// ln N(x; mean, Q⁻¹)
    pub fn log_density(&self, q: &PrecisionMatrix, mean: &[f64], x: &[f64]) -> f64 {
        let d: Vec<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
        0.5 * (self.log_det() - q.dim() as f64 * LN_2PI - q.csr().quad_form(&d))
    }
}

/// Full conditional mean and variance of index p given all others.
pub fn conditional_moments(
    q: &PrecisionMatrix,
    hp: &FieldHyperparams,
    x: &[f64],
    p: usize,
) -> (f64, f64) {
    let pat = q.pattern();
    let lo = pat.csr.row_ptr[p];
    let mut within = 0.0;
    let mut between = 0.0;
    for (i, (j, _)) in pat.csr.row(p).enumerate() {
        match pat.kinds[lo + i] {
            EntryKind::Within => within += x[j] - hp.nu,
            EntryKind::Between => between += x[j] - hp.nu,
            EntryKind::Diagonal => {}
        }
    }
    let kp = q.k(p);
    let mean = hp.nu + hp.kappa / kp * (within + hp.rho * between);
    let var = hp.kappa / (hp.theta * kp);
    (mean, var)
}

/// Conditional correlation of p and q given the rest, −Q_pq/√(Q_pp Q_qq).
pub fn conditional_correlation(q: &PrecisionMatrix, a: usize, b: usize) -> f64 {
    -q.get(a, b) / (q.get(a, a) * q.get(b, b)).sqrt()
}

pub fn sample_gmrf<R: Rng + ?Sized>(q: &PrecisionMatrix, mean: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    check_len(q.dim(), mean.len())?;
    Ok(q.factor()?.sample(mean, rng))
}

pub fn log_density_gmrf(q: &PrecisionMatrix, mean: &[f64], x: &[f64]) -> Result<f64> {
    check_len(q.dim(), mean.len())?;
    check_len(q.dim(), x.len())?;
    Ok(q.factor()?.log_density(q, mean, x))
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension { expected, got });
    }
    Ok(())
}

/// Hyperparameters mapped to ℝ⁴:
/// (ln φ, ln(θ/κ), Φ⁻¹(κ), Φ⁻¹((ρ − ρ_lo)/(1 − ρ_lo))).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformedHyperparams(pub [f64; 4]);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperTransform {
    /// Lower end of the uniform prior on ρ.
    pub rho_lower: f64,
}

impl Default for HyperTransform {
    fn default() -> Self {
        Self { rho_lower: -0.4 }
    }
}

impl HyperTransform {
    fn rho_span(&self) -> f64 {
        1.0 - self.rho_lower
    }

    pub fn transform(&self, hp: &FieldHyperparams) -> TransformedHyperparams {
        TransformedHyperparams([
            hp.phi.ln(),
            (hp.theta / hp.kappa).ln(),
            std_normal_quantile(hp.kappa),
            std_normal_quantile((hp.rho - self.rho_lower) / self.rho_span()),
        ])
    }

    pub fn untransform(&self, t: &TransformedHyperparams, nu: f64) -> FieldHyperparams {
        let [a1, a2, a3, a4] = t.0;
        let kappa = std_normal_cdf(a3);
        FieldHyperparams {
            nu,
            phi: a1.exp(),
            theta: kappa * a2.exp(),
            kappa,
            rho: self.rho_lower + self.rho_span() * std_normal_cdf(a4),
        }
    }

    /// ln |∂(φ, θ, κ, ρ)/∂α|
    pub fn log_jacobian(&self, t: &TransformedHyperparams) -> f64 {
        let [a1, a2, a3, a4] = t.0;
        let ln_kappa = std_normal_cdf(a3).ln();
        // ln φ + ln θ + ln ϕ(a3) + ln(span ϕ(a4)), with ln θ = ln κ + a2
        a1 + (ln_kappa + a2) + ln_std_normal_pdf(a3) + self.rho_span().ln() + ln_std_normal_pdf(a4)
    }
}
