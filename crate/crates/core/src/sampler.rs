//! Metropolis-within-Gibbs sampler.
//!
//! One sweep updates, in order: (β, α_β) jointly, (γ, α_γ) jointly, ν_β and
//! ν_γ, the grain means (μ_g, μ, τ²), the error parameters (σ², ω), and df.
//!
//! The joint field moves propose α* from a random walk in transformed space,
//! then redraw the field subblock by subblock from full conditionals under
//! α*. The reverse path re-evaluates the old subblocks under the old α,
//! conditioning each on the old earlier subblocks and the proposed later ones.

use std::ops::Range;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::design::{DesignOptions, FieldDesign, KernelDesign};
use crate::diagnostics::{r2_adjusted, Baseline};
use crate::error::{Error, Result};
use crate::gmrf::{FieldHyperparams, PrecisionMatrix, PrecisionPattern, TransformedHyperparams};
use crate::mesh::{build_neighborhoods, extract_boundaries, BoundaryGeometry, BoundaryGraphs, GrainMesh};
use crate::model::{inv_gamma, log_likelihood, FieldPatterns, FieldPrior, ModelState, PriorConfig};
use crate::rng::{seeded, ChainRng};
use crate::special::{std_normal_quantile, LN_2PI};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubblockScheme {
    PerGrain,
    FixedSize(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldKind {
    Beta,
    Gamma,
}

/// Which updates run in a sweep. Disabled parameters stay at their
/// current values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UpdateMask {
    pub beta: bool,
    pub gamma: bool,
    pub hyper_beta: bool,
    pub hyper_gamma: bool,
    pub nu: bool,
    pub grain_means: bool,
    pub mu: bool,
    pub tau2: bool,
    pub sigma2: bool,
    pub omega: bool,
    pub df: bool,
}

impl Default for UpdateMask {
    fn default() -> Self {
        Self {
            beta: true,
            gamma: true,
            hyper_beta: true,
            hyper_gamma: true,
            nu: true,
            grain_means: true,
            mu: true,
            tau2: true,
            sigma2: true,
            omega: true,
            df: true,
        }
    }
}

impl UpdateMask {
    pub fn none() -> Self {
        Self {
            beta: false,
            gamma: false,
            hyper_beta: false,
            hyper_gamma: false,
            nu: false,
            grain_means: false,
            mu: false,
            tau2: false,
            sigma2: false,
            omega: false,
            df: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConfig {
    pub adapt_blocks: usize,
    pub adapt_block_len: usize,
    pub burn_in: usize,
    pub samples: usize,
    pub thin: usize,
    pub target_accept: f64,
    pub scheme: SubblockScheme,
    /// Initial proposal standard deviations for α_β.
    pub proposal_sd_beta: [f64; 4],
    pub proposal_sd_gamma: [f64; 4],
    /// Initial proposal standard deviation for ln df.
    pub proposal_sd_df: f64,
    /// Full fields are stored every `field_stride`-th retained sample.
    pub field_stride: usize,
    pub seed: u64,
    /// Recompute the residual from scratch after every sweep and fail on
    /// drift beyond 1e-10 ‖y‖∞.
    pub audit_residual: bool,
    pub update: UpdateMask,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            adapt_blocks: 20,
            adapt_block_len: 500,
            burn_in: 5000,
            samples: 15000,
            thin: 5,
            target_accept: 0.234,
            scheme: SubblockScheme::PerGrain,
            proposal_sd_beta: [0.05; 4],
            proposal_sd_gamma: [0.05; 4],
            proposal_sd_df: 0.1,
            field_stride: 25,
            seed: 0,
            audit_residual: false,
            update: UpdateMask::default(),
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.adapt_blocks > 0 && self.adapt_block_len == 0 {
            return bad("adapt_block_len must be positive");
        }
        if self.thin == 0 || self.samples % self.thin != 0 {
            return bad("thin must be positive and divide samples");
        }
        if self.field_stride == 0 {
            return bad("field_stride must be positive");
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return bad("target_accept must lie in (0, 1)");
        }
        if let SubblockScheme::FixedSize(0) = self.scheme {
            return bad("fixed subblock size must be positive");
        }
        let sds = self.proposal_sd_beta.iter().chain(&self.proposal_sd_gamma);
        if sds.chain([&self.proposal_sd_df]).any(|s| !(*s >= 0.0 && s.is_finite())) {
            return bad("proposal standard deviations must be finite and non-negative");
        }
        Ok(())
    }

    pub fn total_iterations(&self) -> usize {
        self.adapt_blocks * self.adapt_block_len + self.burn_in + self.samples
    }
}

/// Data and every structure derived from the mesh.
#[derive(Clone, Debug)]
pub struct Problem {
    pub mesh: GrainMesh,
    pub y: Vec<f64>,
    pub y_mean: f64,
    pub geometry: BoundaryGeometry,
    pub graphs: BoundaryGraphs,
    pub patterns: FieldPatterns,
    pub design_options: DesignOptions,
}

impl Problem {
    pub fn new(mesh: GrainMesh, y: Vec<f64>, design_options: DesignOptions) -> Result<Self> {
        if y.len() != mesh.n_elements() {
            return Err(Error::Dimension {
                expected: mesh.n_elements(),
                got: y.len(),
            });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("observations must be finite".into()));
        }
        let geometry = extract_boundaries(&mesh)?;
        let graphs = build_neighborhoods(&mesh, &geometry);
        let patterns = FieldPatterns {
            beta: PrecisionPattern::new(&graphs.second),
            gamma: PrecisionPattern::new(&graphs.third),
        };
        let y_mean = y.iter().sum::<f64>() / y.len() as f64;
        Ok(Self {
            mesh,
            y,
            y_mean,
            geometry,
            graphs,
            patterns,
            design_options,
        })
    }

    pub fn n_elements(&self) -> usize {
        self.y.len()
    }

    pub fn n_grains(&self) -> usize {
        self.mesh.n_grains()
    }

    pub fn grain_of(&self) -> &[usize] {
        self.mesh.grains()
    }

    pub fn dim(&self, kind: FieldKind) -> usize {
        match kind {
            FieldKind::Beta => self.geometry.dim_beta(),
            FieldKind::Gamma => self.geometry.dim_gamma(),
        }
    }

    pub fn pattern(&self, kind: FieldKind) -> &std::sync::Arc<PrecisionPattern> {
        match kind {
            FieldKind::Beta => &self.patterns.beta,
            FieldKind::Gamma => &self.patterns.gamma,
        }
    }

    pub fn field_design(&self, kind: FieldKind, phi: f64) -> FieldDesign {
        let layout = match kind {
            FieldKind::Beta => &self.geometry.second,
            FieldKind::Gamma => &self.geometry.third,
        };
        FieldDesign::build(&self.mesh, layout, phi, self.design_options)
    }

    pub fn design(&self, phi_beta: f64, phi_gamma: f64) -> KernelDesign {
        KernelDesign {
            second: self.field_design(FieldKind::Beta, phi_beta),
            third: self.field_design(FieldKind::Gamma, phi_gamma),
        }
    }

    /// Subblock index ranges of one field.
    pub fn blocks(&self, kind: FieldKind, scheme: SubblockScheme) -> Vec<Range<usize>> {
        let layout = match kind {
            FieldKind::Beta => &self.geometry.second,
            FieldKind::Gamma => &self.geometry.third,
        };
        let n = layout.dim();
        match scheme {
            SubblockScheme::PerGrain => (0..layout.n_grains())
                .map(|g| layout.grain_range(g))
                .filter(|r| !r.is_empty())
                .collect(),
            SubblockScheme::FixedSize(k) => (0..n).step_by(k).map(|s| s..(s + k).min(n)).collect(),
        }
    }

    /// Starting state: grain data means, zero fields, pooled within-grain
    /// variance, ω ≡ 1, df = 5, hyperparameters at prior medians.
    pub fn initial_state(&self, priors: &PriorConfig) -> ModelState {
        let g_count = self.n_grains();
        let mut sum = vec![0.0; g_count];
        let mut n = vec![0usize; g_count];
        for (v, &g) in self.y.iter().zip(self.grain_of()) {
            sum[g] += v;
            n[g] += 1;
        }
        let mu_g: Vec<f64> = sum.iter().zip(&n).map(|(s, &c)| s / c as f64).collect();
        let residual: Vec<f64> = self
            .y
            .iter()
            .zip(self.grain_of())
            .map(|(v, &g)| v - mu_g[g])
            .collect();
        let m = self.n_elements();
        let ss: f64 = residual.iter().map(|r| r * r).sum();
        let sigma2 = if m > g_count && ss > 0.0 { ss / (m - g_count) as f64 } else { 1.0 };
        let mu = mu_g.iter().sum::<f64>() / g_count as f64;
        let tau2 = if g_count > 1 {
            let v = mu_g.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (g_count - 1) as f64;
            if v > 0.0 { v } else { 1.0 }
        } else {
            1.0
        };
        ModelState {
            mu_g,
            mu,
            tau2,
            beta: vec![0.0; self.dim(FieldKind::Beta)],
            gamma: vec![0.0; self.dim(FieldKind::Gamma)],
            hp_beta: priors.beta.initial(),
            hp_gamma: priors.gamma.initial(),
            sigma2,
            omega: vec![1.0; m],
            df: 5.0,
            residual,
        }
    }

    /// y − μ_{g(m)} − X_b β − X_c γ from scratch at the state's φ values.
    pub fn recompute_residual(&self, state: &ModelState) -> Result<Vec<f64>> {
        let design = self.design(state.hp_beta.phi, state.hp_gamma.phi);
        crate::model::recompute_residual(
            &self.y,
            self.grain_of(),
            &state.mu_g,
            &design,
            &state.beta,
            &state.gamma,
        )
    }

    /// Number of parameters counted by the adjusted R².
    pub fn p_effective(&self) -> usize {
        self.n_grains() + self.dim(FieldKind::Beta) + self.dim(FieldKind::Gamma)
    }
}

/// Gaussian full conditional of one field subblock.
#[derive(Clone, Debug)]
pub struct SubblockConditional {
    pub range: Range<usize>,
    pub precision: DMatrix<f64>,
    pub mean: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl SubblockConditional {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.range.len();
        let z = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let u = self
            .chol
            .l_dirty()
            .tr_solve_lower_triangular(&z)
            .expect("Cholesky factor has a positive diagonal");
        (u + &self.mean).iter().copied().collect()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let d = DVector::from_column_slice(x) - &self.mean;
        let l = self.chol.l_dirty();
        let log_det: f64 = (0..d.len()).map(|i| 2.0 * l[(i, i)].ln()).sum();
        let quad = d.dot(&(&self.precision * &d));
        0.5 * (log_det - d.len() as f64 * LN_2PI - quad)
    }
}

/// Full conditional of `field[range]` given the rest of the field, the data
/// weights `w` and the full residual `residual` (which must be consistent
/// with `field`).
///
/// Q_{s|·} = X_sᵀ W X_s + Q_ss and
/// ν_{s|·} = Q_{s|·}⁻¹ (X_sᵀ W r_s̄ + ν Q_ss 1 − Q_{s,s̄} (β_s̄ − ν 1)),
/// with r_s̄ = r + X_s β_s, so X_sᵀ W r_s̄ = X_sᵀ W r + (X_sᵀ W X_s) β_s.
pub fn subblock_conditional(
    design: &FieldDesign,
    q: &PrecisionMatrix,
    w: &[f64],
    residual: &[f64],
    field: &[f64],
    range: Range<usize>,
) -> Result<SubblockConditional> {
    let nu = q.hyperparams().nu;
    let mut prec = design.cross_product(range.clone(), w);
    let bs = DVector::from_column_slice(&field[range.clone()]);
    let mut h = design.weighted_transpose_mul(range.clone(), w, residual) + &prec * &bs;
    for (i, p) in range.clone().enumerate() {
        for (j, v) in q.row(p) {
            if range.contains(&j) {
                prec[(i, j - range.start)] += v;
                h[i] += v * nu;
            } else {
                h[i] -= v * (field[j] - nu);
            }
        }
    }
    let chol = Cholesky::new(prec.clone()).ok_or(Error::NotPositiveDefinite { pivot: range.start })?;
    let mean = chol.solve(&h);
    Ok(SubblockConditional {
        range,
        precision: prec,
        mean,
        chol,
    })
}

/// Gaussian random-walk proposal with covariance scale² · shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomWalk {
    pub scale: f64,
    /// Row-major d × d shape matrix.
    pub shape: Vec<f64>,
    pub dim: usize,
}

impl RandomWalk {
    pub fn diagonal(sds: &[f64]) -> Self {
        let d = sds.len();
        let mut shape = vec![0.0; d * d];
        for (i, s) in sds.iter().enumerate() {
            shape[i * d + i] = s * s;
        }
        Self { scale: 1.0, shape, dim: d }
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.shape) * (self.scale * self.scale)
    }

    fn factor(&self) -> Option<DMatrix<f64>> {
        let c = self.covariance();
        if c.iter().all(|v| *v == 0.0) {
            return None;
        }
        let mut jitter = 0.0;
        for _ in 0..8 {
            let m = &c + DMatrix::identity(self.dim, self.dim) * jitter;
            if let Some(ch) = Cholesky::new(m) {
                return Some(ch.unpack());
            }
            jitter = if jitter == 0.0 { 1e-12 * c.diagonal().max().max(1e-300) } else { jitter * 100.0 };
        }
        None
    }

    pub fn propose<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Vec<f64> {
        match self.factor() {
            None => x.to_vec(),
            Some(l) => {
                let z = DVector::from_iterator(self.dim, (0..self.dim).map(|_| rng.sample::<f64, _>(StandardNormal)));
                let step = l * z;
                x.iter().zip(step.iter()).map(|(a, b)| a + b).collect()
            }
        }
    }
}

/// Scale multiplier Φ⁻¹(target/2)/Φ⁻¹(rate/2), clamped to [0.2, 5].
pub fn acceptance_multiplier(rate: f64, target: f64) -> f64 {
    let r = rate.clamp(0.01, 0.99);
    (std_normal_quantile(target / 2.0) / std_normal_quantile(r / 2.0)).clamp(0.2, 5.0)
}

/// One adaptation step after a block: rescale toward the target acceptance
/// and, when the block moved often enough, reshape to the sample covariance
/// of `history` times 2.38²/d.
pub fn adapt_proposals(
    rw: &RandomWalk,
    accepted: usize,
    attempted: usize,
    history: &[Vec<f64>],
    target: f64,
) -> RandomWalk {
    let mut out = rw.clone();
    if attempted == 0 {
        return out;
    }
    out.scale *= acceptance_multiplier(accepted as f64 / attempted as f64, target);
    let d = rw.dim;
    if accepted >= 10 + 2 * d && history.len() > d + 1 {
        let n = history.len() as f64;
        let mean: Vec<f64> = (0..d).map(|i| history.iter().map(|h| h[i]).sum::<f64>() / n).collect();
        let mut c = vec![0.0; d * d];
        for h in history {
            for i in 0..d {
                for j in 0..d {
                    c[i * d + j] += (h[i] - mean[i]) * (h[j] - mean[j]) / (n - 1.0);
                }
            }
        }
        let avg_var = (0..d).map(|i| c[i * d + i]).sum::<f64>() / d as f64;
        if avg_var > 0.0 && avg_var.is_finite() {
            let eps = 1e-6 * avg_var;
            let f = 2.38 * 2.38 / d as f64;
            for i in 0..d {
                c[i * d + i] += eps;
            }
            let old_var = (0..d).map(|i| rw.shape[i * d + i]).sum::<f64>() / d as f64;
            let new_var = f * (avg_var + eps);
            out.shape = c.iter().map(|v| v * f).collect();
            // keep the overall step length continuous across the reshape
            out.scale *= (old_var / new_var).sqrt();
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Proposals {
    pub beta: RandomWalk,
    pub gamma: RandomWalk,
    pub df: RandomWalk,
}

/// Result of one joint field move.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldUpdate {
    pub accepted: bool,
    /// ln acceptance ratio; −∞ when the proposal left the support or its
    /// precision failed to factor.
    pub log_ratio: f64,
    /// Subblock conditional densities evaluated (2S for a valid proposal).
    pub density_evaluations: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepReport {
    pub beta: Option<bool>,
    pub gamma: Option<bool>,
    pub df: Option<bool>,
}

#[derive(Clone, Debug)]
struct FieldCache {
    q: PrecisionMatrix,
    log_det: f64,
    design: FieldDesign,
    alpha: TransformedHyperparams,
    blocks: Vec<Range<usize>>,
}

pub struct Sampler<'p> {
    problem: &'p Problem,
    priors: PriorConfig,
    cfg: ChainConfig,
    state: ModelState,
    beta: FieldCache,
    gamma: FieldCache,
    proposals: Proposals,
    rng: ChainRng,
    iteration: u64,
}

impl<'p> Sampler<'p> {
    pub fn new(
        problem: &'p Problem,
        priors: PriorConfig,
        cfg: ChainConfig,
        initial: Option<ModelState>,
    ) -> Result<Self> {
        cfg.validate()?;
        priors.validate()?;
        let state = match initial {
            Some(s) => {
                check_state_dims(problem, &s)?;
                s
            }
            None => problem.initial_state(&priors),
        };
        state.check_support()?;
        let beta = Self::cache(problem, &priors.beta, FieldKind::Beta, &state.hp_beta, cfg.scheme)?;
        let gamma = Self::cache(problem, &priors.gamma, FieldKind::Gamma, &state.hp_gamma, cfg.scheme)?;
        let proposals = Proposals {
            beta: RandomWalk::diagonal(&cfg.proposal_sd_beta),
            gamma: RandomWalk::diagonal(&cfg.proposal_sd_gamma),
            df: RandomWalk::diagonal(&[cfg.proposal_sd_df]),
        };
        let rng = seeded(cfg.seed);
        Ok(Self {
            problem,
            priors,
            cfg,
            state,
            beta,
            gamma,
            proposals,
            rng,
            iteration: 0,
        })
    }

    fn cache(
        problem: &Problem,
        prior: &FieldPrior,
        kind: FieldKind,
        hp: &FieldHyperparams,
        scheme: SubblockScheme,
    ) -> Result<FieldCache> {
        let q = PrecisionMatrix::assemble(problem.pattern(kind), hp)?;
        let log_det = q.factor()?.log_det();
        Ok(FieldCache {
            q,
            log_det,
            design: problem.field_design(kind, hp.phi),
            alpha: prior.transform().transform(hp),
            blocks: problem.blocks(kind, scheme),
        })
    }

    pub fn state(&self) -> &ModelState {
        &self.state
    }

    pub fn proposals(&self) -> &Proposals {
        &self.proposals
    }

    pub fn set_proposals(&mut self, p: Proposals) {
        self.proposals = p;
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn config(&self) -> &ChainConfig {
        &self.cfg
    }

    pub fn alpha(&self, kind: FieldKind) -> TransformedHyperparams {
        self.field_cache(kind).alpha
    }

    pub fn n_blocks(&self, kind: FieldKind) -> usize {
        self.field_cache(kind).blocks.len()
    }

    fn field_cache(&self, kind: FieldKind) -> &FieldCache {
        match kind {
            FieldKind::Beta => &self.beta,
            FieldKind::Gamma => &self.gamma,
        }
    }

    fn field_prior(&self, kind: FieldKind) -> FieldPrior {
        match kind {
            FieldKind::Beta => self.priors.beta,
            FieldKind::Gamma => self.priors.gamma,
        }
    }

    fn hp(&self, kind: FieldKind) -> FieldHyperparams {
        match kind {
            FieldKind::Beta => self.state.hp_beta,
            FieldKind::Gamma => self.state.hp_gamma,
        }
    }

    fn field(&self, kind: FieldKind) -> &[f64] {
        match kind {
            FieldKind::Beta => &self.state.beta,
            FieldKind::Gamma => &self.state.gamma,
        }
    }

    /// One full sweep.
    pub fn step(&mut self) -> Result<StepReport> {
        let mask = self.cfg.update;
        let mut report = StepReport::default();
        for (kind, on) in [(FieldKind::Beta, mask.beta), (FieldKind::Gamma, mask.gamma)] {
            if on && self.problem.dim(kind) > 0 {
                let u = self.update_field_joint(kind)?;
                match kind {
                    FieldKind::Beta => report.beta = Some(u.accepted),
                    FieldKind::Gamma => report.gamma = Some(u.accepted),
                }
            }
        }
        if mask.nu {
            for kind in [FieldKind::Beta, FieldKind::Gamma] {
                if self.problem.dim(kind) > 0 {
                    self.gibbs_nu(kind);
                }
            }
        }
        self.gibbs_grain_means();
        self.gibbs_error_params();
        if mask.df {
            report.df = Some(self.metropolis_df());
        }
        self.iteration += 1;
        if !self.state.sigma2.is_finite() || self.state.residual.iter().any(|r| !r.is_finite()) {
            return Err(self.failure("non-finite state"));
        }
        if self.cfg.audit_residual {
            self.audit_residual()?;
        }
        Ok(report)
    }

    fn failure(&self, message: &str) -> Error {
        Error::ChainFailure {
            iteration: self.iteration,
            message: message.to_string(),
            state: Box::new(self.state.clone()),
        }
    }

    /// Max-norm discrepancy between the maintained residual and a scratch
    /// recomputation, relative to ‖y‖∞. Fails beyond 1e-10.
    pub fn audit_residual(&self) -> Result<f64> {
        let scratch = self.problem.recompute_residual(&self.state)?;
        let ymax = self.problem.y.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
        let diff = scratch
            .iter()
            .zip(&self.state.residual)
            .fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
        let rel = diff / ymax;
        if rel > 1e-10 {
            return Err(self.failure(&format!("residual drift {rel:e} exceeds 1e-10")));
        }
        Ok(rel)
    }

    /// Joint move of (field, α) with subblock proposals.
    pub fn update_field_joint(&mut self, kind: FieldKind) -> Result<FieldUpdate> {
        let prior = self.field_prior(kind);
        let transform = prior.transform();
        let hp_old = self.hp(kind);
        let hyper_on = match kind {
            FieldKind::Beta => self.cfg.update.hyper_beta,
            FieldKind::Gamma => self.cfg.update.hyper_gamma,
        };
        let cache = match kind {
            FieldKind::Beta => &self.beta,
            FieldKind::Gamma => &self.gamma,
        };
        let alpha_old = cache.alpha;
        let alpha_new = if hyper_on {
            let rw = match kind {
                FieldKind::Beta => &self.proposals.beta,
                FieldKind::Gamma => &self.proposals.gamma,
            };
            let v = rw.propose(&alpha_old.0, &mut self.rng);
            TransformedHyperparams([v[0], v[1], v[2], v[3]])
        } else {
            alpha_old
        };
        let rejected = FieldUpdate {
            accepted: false,
            log_ratio: f64::NEG_INFINITY,
            density_evaluations: 0,
        };

        let same_alpha = alpha_new == alpha_old;
        let hp_new = if same_alpha { hp_old } else { transform.untransform(&alpha_new, hp_old.nu) };
        let lp_new = prior.ln_hyper_transformed(&alpha_new, hp_old.nu);
        let lp_old = prior.ln_hyper_transformed(&alpha_old, hp_old.nu);
        if !lp_new.is_finite() || !hp_new.theta.is_finite() || !hp_new.phi.is_finite() {
            return Ok(rejected);
        }
        let (q_new, log_det_new) = if same_alpha {
            (cache.q.clone(), cache.log_det)
        } else {
            let q = match PrecisionMatrix::assemble(&cache.q.pattern().clone(), &hp_new) {
                Ok(q) => q,
                Err(_) => return Ok(rejected),
            };
            match q.factor() {
                Ok(f) => {
                    let ld = f.log_det();
                    (q, ld)
                }
                Err(_) => return Ok(rejected),
            }
        };
        let design_new = (hp_new.phi != hp_old.phi).then(|| cache.design.rebuild_for_phi(hp_new.phi));
        let x_old = &cache.design;
        let x_new = design_new.as_ref().unwrap_or(x_old);
        let w = self.state.weights();
        let old = match kind {
            FieldKind::Beta => self.state.beta.clone(),
            FieldKind::Gamma => self.state.gamma.clone(),
        };
        let n = old.len();
        let all = 0..n;

        // forward: draw each subblock under α*
        let mut b = old.clone();
        let mut r_fwd = self.state.residual.clone();
        if design_new.is_some() {
            x_old.accumulate(all.clone(), &old, 1.0, &mut r_fwd);
            x_new.accumulate(all.clone(), &old, -1.0, &mut r_fwd);
        }
        let mut log_fwd = 0.0;
        let mut evals = 0;
        for range in &cache.blocks {
            let cond = match subblock_conditional(x_new, &q_new, &w, &r_fwd, &b, range.clone()) {
                Ok(c) => c,
                Err(_) => return Ok(rejected),
            };
            let draw = cond.sample(&mut self.rng);
            log_fwd += cond.log_density(&draw);
            evals += 1;
            let delta: Vec<f64> = b[range.clone()].iter().zip(&draw).map(|(p, q)| p - q).collect();
            x_new.accumulate(range.clone(), &delta, 1.0, &mut r_fwd);
            b[range.clone()].copy_from_slice(&draw);
        }

        // reverse: old subblocks under the old α, later subblocks at their
        // proposed values
        let mut c = b.clone();
        let mut r_rev = r_fwd.clone();
        if design_new.is_some() {
            x_new.accumulate(all.clone(), &b, 1.0, &mut r_rev);
            x_old.accumulate(all, &b, -1.0, &mut r_rev);
        }
        let mut log_rev = 0.0;
        for range in &cache.blocks {
            let cond = subblock_conditional(x_old, &cache.q, &w, &r_rev, &c, range.clone())?;
            log_rev += cond.log_density(&old[range.clone()]);
            evals += 1;
            let delta: Vec<f64> = c[range.clone()].iter().zip(&old[range.clone()]).map(|(p, q)| p - q).collect();
            x_old.accumulate(range.clone(), &delta, 1.0, &mut r_rev);
            c[range.clone()].copy_from_slice(&old[range.clone()]);
        }

        let quad_w = |r: &[f64]| r.iter().zip(&w).map(|(a, b)| a * a * b).sum::<f64>();
        let ll_delta = -0.5 * (quad_w(&r_fwd) - quad_w(&self.state.residual));
        let centred = |x: &[f64], nu: f64| x.iter().map(|v| v - nu).collect::<Vec<_>>();
        let g_new = 0.5 * (log_det_new - q_new.csr().quad_form(&centred(&b, hp_new.nu)));
        let g_old = 0.5 * (cache.log_det - cache.q.csr().quad_form(&centred(&old, hp_old.nu)));
        let log_ratio = ll_delta + (g_new - g_old) + (lp_new - lp_old) + (log_rev - log_fwd);

        let u: f64 = self.rng.random();
        let accepted = u.ln() < log_ratio;
        if accepted {
            let design = design_new.unwrap_or_else(|| cache.design.clone());
            let blocks = cache.blocks.clone();
            let new_cache = FieldCache {
                q: q_new,
                log_det: log_det_new,
                design,
                alpha: alpha_new,
                blocks,
            };
            self.state.residual = r_fwd;
            match kind {
                FieldKind::Beta => {
                    self.state.beta = b;
                    self.state.hp_beta = hp_new;
                    self.beta = new_cache;
                }
                FieldKind::Gamma => {
                    self.state.gamma = b;
                    self.state.hp_gamma = hp_new;
                    self.gamma = new_cache;
                }
            }
        }
        Ok(FieldUpdate {
            accepted,
            log_ratio,
            density_evaluations: evals,
        })
    }

    pub fn gibbs_nu(&mut self, kind: FieldKind) -> f64 {
        let prior = self.field_prior(kind);
        let (mean, var) = nu_conditional(&self.field_cache(kind).q, self.field(kind), &prior);
        let z: f64 = self.rng.sample(StandardNormal);
        let nu = mean + z * var.sqrt();
        match kind {
            FieldKind::Beta => {
                self.state.hp_beta.nu = nu;
                self.beta.q.set_nu(nu);
            }
            FieldKind::Gamma => {
                self.state.hp_gamma.nu = nu;
                self.gamma.q.set_nu(nu);
            }
        }
        nu
    }

    /// μ_g, then μ, then τ², each from its full conditional.
    pub fn gibbs_grain_means(&mut self) {
        let mask = self.cfg.update;
        if mask.grain_means {
            self.gibbs_mu_g();
        }
        let g_count = self.problem.n_grains();
        if mask.mu {
            let mu0 = self.priors.mu_mean_for(self.problem.y_mean);
            let var = 1.0 / (g_count as f64 / self.state.tau2 + 1.0 / self.priors.mu_var);
            let mean = (self.state.mu_g.iter().sum::<f64>() / self.state.tau2 + mu0 / self.priors.mu_var) * var;
            let z: f64 = self.rng.sample(StandardNormal);
            self.state.mu = mean + var.sqrt() * z;
        }
        if mask.tau2 {
            let ss: f64 = self.state.mu_g.iter().map(|m| (m - self.state.mu).powi(2)).sum();
            self.state.tau2 = inv_gamma(
                g_count as f64 / 2.0 + self.priors.tau2_shape,
                0.5 * ss + self.priors.tau2_scale,
                &mut self.rng,
            );
        }
    }

    fn gibbs_mu_g(&mut self) {
        let g_count = self.problem.n_grains();
        let grain_of = self.problem.grain_of();
        let s2 = self.state.sigma2;
        let mut num = vec![0.0; g_count];
        let mut den = vec![0.0; g_count];
        for m in 0..grain_of.len() {
            let g = grain_of[m];
            let inv = 1.0 / self.state.omega[m];
            num[g] += (self.state.residual[m] + self.state.mu_g[g]) * inv;
            den[g] += inv;
        }
        let mut shift = vec![0.0; g_count];
        for g in 0..g_count {
            let var = 1.0 / (den[g] / s2 + 1.0 / self.state.tau2);
            let mean = (num[g] / s2 + self.state.mu / self.state.tau2) * var;
            let z: f64 = self.rng.sample(StandardNormal);
            let new = mean + var.sqrt() * z;
            shift[g] = new - self.state.mu_g[g];
            self.state.mu_g[g] = new;
        }
        for (r, &g) in self.state.residual.iter_mut().zip(grain_of) {
            *r -= shift[g];
        }
    }

    /// σ² then ω from their inverse-gamma full conditionals.
    pub fn gibbs_error_params(&mut self) {
        let mask = self.cfg.update;
        if mask.sigma2 {
            let m = self.state.residual.len() as f64;
            let ss: f64 = self
                .state
                .residual
                .iter()
                .zip(&self.state.omega)
                .map(|(r, w)| r * r / w)
                .sum();
            self.state.sigma2 = inv_gamma(
                m / 2.0 + self.priors.sigma2_shape,
                0.5 * ss + self.priors.sigma2_scale,
                &mut self.rng,
            );
        }
        if mask.omega {
            let half_df = self.state.df / 2.0;
            for (w, r) in self.state.omega.iter_mut().zip(&self.state.residual) {
                *w = inv_gamma(0.5 + half_df, r * r / (2.0 * self.state.sigma2) + half_df, &mut self.rng);
            }
        }
    }

    /// Random walk on ln df.
    pub fn metropolis_df(&mut self) -> bool {
        let cur = self.state.df;
        let step = self.proposals.df.propose(&[cur.ln()], &mut self.rng)[0];
        let prop = if step == cur.ln() { cur } else { step.exp() };
        let target = |df: f64| df_log_target(df, &self.state.omega, &self.priors);
        let lt_new = target(prop);
        if !lt_new.is_finite() {
            return false;
        }
        let log_ratio = lt_new - target(cur) + prop.ln() - cur.ln();
        let u: f64 = self.rng.random();
        if u.ln() < log_ratio {
            self.state.df = prop;
            true
        } else {
            false
        }
    }

    /// Apply one adaptation block's statistics.
    pub fn adapt(&mut self, stats: &AdaptBlock) {
        let t = self.cfg.target_accept;
        self.proposals.beta = adapt_proposals(&self.proposals.beta, stats.beta.0, stats.beta.1, &stats.hist_beta, t);
        self.proposals.gamma =
            adapt_proposals(&self.proposals.gamma, stats.gamma.0, stats.gamma.1, &stats.hist_gamma, t);
        self.proposals.df = adapt_proposals(&self.proposals.df, stats.df.0, stats.df.1, &stats.hist_df, t);
    }

    pub fn into_state(self) -> ModelState {
        self.state
    }
}

/// Mean and variance of ν given the field:
/// N((1ᵀQx + ν₀/v₀)/(1ᵀQ1 + 1/v₀), 1/(1ᵀQ1 + 1/v₀)).
pub fn nu_conditional(q: &PrecisionMatrix, x: &[f64], prior: &FieldPrior) -> (f64, f64) {
    let q1 = q.mul_vec(&vec![1.0; q.dim()]);
    let prec = q1.iter().sum::<f64>() + 1.0 / prior.nu_var;
    let lin = q1.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + prior.nu_mean / prior.nu_var;
    (lin / prec, 1.0 / prec)
}

/// Unnormalized ln [df | ω]:
/// −M lnΓ(df/2) + (M df/2) ln(df/2) − (df/2) Σ ln ω − (df/2) Σ 1/ω + ln [df].
pub fn df_log_target(df: f64, omega: &[f64], priors: &PriorConfig) -> f64 {
    let lp = priors.ln_df(df);
    if !lp.is_finite() {
        return f64::NEG_INFINITY;
    }
    let m = omega.len() as f64;
    let h = df / 2.0;
    let sum_ln: f64 = omega.iter().map(|w| w.ln()).sum();
    let sum_inv: f64 = omega.iter().map(|w| 1.0 / w).sum();
    -m * statrs::function::gamma::ln_gamma(h) + m * h * h.ln() - h * sum_ln - h * sum_inv + lp
}

fn check_state_dims(problem: &Problem, s: &ModelState) -> Result<()> {
    let checks = [
        (problem.n_grains(), s.mu_g.len()),
        (problem.dim(FieldKind::Beta), s.beta.len()),
        (problem.dim(FieldKind::Gamma), s.gamma.len()),
        (problem.n_elements(), s.omega.len()),
        (problem.n_elements(), s.residual.len()),
    ];
    for (expected, got) in checks {
        if expected != got {
            return Err(Error::Dimension { expected, got });
        }
    }
    Ok(())
}

/// Acceptance counts of the latest adaptation block and the visited values
/// used to estimate proposal shapes.
#[derive(Clone, Debug, Default)]
pub struct AdaptBlock {
    pub beta: (usize, usize),
    pub gamma: (usize, usize),
    pub df: (usize, usize),
    pub hist_beta: Vec<Vec<f64>>,
    pub hist_gamma: Vec<Vec<f64>>,
    pub hist_df: Vec<Vec<f64>>,
}

/// (accepted, attempted) per Metropolis update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Acceptance {
    pub beta: (u64, u64),
    pub gamma: (u64, u64),
    pub df: (u64, u64),
}

impl Acceptance {
    fn record(&mut self, r: &StepReport) {
        for (slot, v) in [(&mut self.beta, r.beta), (&mut self.gamma, r.gamma), (&mut self.df, r.df)] {
            if let Some(a) = v {
                slot.1 += 1;
                slot.0 += a as u64;
            }
        }
    }

    pub fn rate(pair: (u64, u64)) -> f64 {
        if pair.1 == 0 {
            f64::NAN
        } else {
            pair.0 as f64 / pair.1 as f64
        }
    }

    pub fn rates(&self) -> [f64; 3] {
        [Self::rate(self.beta), Self::rate(self.gamma), Self::rate(self.df)]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSnapshot {
    pub iteration: u64,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
}

/// Everything recorded by a run.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub snapshots: Vec<FieldSnapshot>,
    pub acceptance_adapt: Acceptance,
    pub acceptance_burn: Acceptance,
    pub acceptance_sample: Acceptance,
    /// Posterior mean of y − r over retained samples.
    pub fitted_mean: Vec<f64>,
    pub beta_mean: Vec<f64>,
    pub gamma_mean: Vec<f64>,
    pub final_state: ModelState,
    pub final_proposals: Proposals,
}

impl Trace {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn scalar_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            s.push_str(&line.join(","));
            s.push('\n');
        }
        s
    }

    /// Snapshot matrix of one field: header `iteration,0,1,…`, one row per
    /// snapshot.
    pub fn snapshot_csv(&self, kind: FieldKind) -> String {
        let dim = match kind {
            FieldKind::Beta => self.final_state.beta.len(),
            FieldKind::Gamma => self.final_state.gamma.len(),
        };
        let mut s = String::from("iteration");
        for p in 0..dim {
            s.push_str(&format!(",{p}"));
        }
        s.push('\n');
        for snap in &self.snapshots {
            s.push_str(&snap.iteration.to_string());
            let v = match kind {
                FieldKind::Beta => &snap.beta,
                FieldKind::Gamma => &snap.gamma,
            };
            for x in v {
                s.push_str(&format!(",{x}"));
            }
            s.push('\n');
        }
        s
    }
}

pub fn trace_columns(n_grains: usize) -> Vec<String> {
    let mut c: Vec<String> = [
        "iteration", "mu", "tau2", "sigma2", "df", "nu_beta", "theta_beta", "kappa_beta", "rho_beta",
        "phi_beta", "nu_gamma", "theta_gamma", "kappa_gamma", "rho_gamma", "phi_gamma", "beta_mean",
        "beta_sd", "gamma_mean", "gamma_sd", "log_lik", "r2_adj_constant", "r2_adj_grain_means",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    c.extend((1..=n_grains).map(|g| format!("mu_g_{g}")));
    c
}

fn field_mean_sd(x: &[f64]) -> (f64, f64) {
    if x.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    crate::diagnostics::mean_sd(x)
}

fn trace_row(problem: &Problem, s: &ModelState, iteration: u64) -> Vec<f64> {
    let (bm, bs) = field_mean_sd(&s.beta);
    let (gm, gs) = field_mean_sd(&s.gamma);
    let fitted = s.fitted(&problem.y);
    let p = problem.p_effective();
    let r2c = r2_adjusted(&problem.y, &fitted, problem.grain_of(), p, Baseline::Constant).unwrap_or(f64::NAN);
    let r2g = r2_adjusted(&problem.y, &fitted, problem.grain_of(), p, Baseline::GrainMeans).unwrap_or(f64::NAN);
    let mut row = vec![
        iteration as f64,
        s.mu,
        s.tau2,
        s.sigma2,
        s.df,
        s.hp_beta.nu,
        s.hp_beta.theta,
        s.hp_beta.kappa,
        s.hp_beta.rho,
        s.hp_beta.phi,
        s.hp_gamma.nu,
        s.hp_gamma.theta,
        s.hp_gamma.kappa,
        s.hp_gamma.rho,
        s.hp_gamma.phi,
        bm,
        bs,
        gm,
        gs,
        log_likelihood(s),
        r2c,
        r2g,
    ];
    row.extend_from_slice(&s.mu_g);
    row
}

/// Adaptation blocks, fixed-proposal burn-in, then recorded sampling.
pub fn run_chain(
    problem: &Problem,
    priors: &PriorConfig,
    cfg: &ChainConfig,
    initial: Option<ModelState>,
) -> Result<Trace> {
    let mut s = Sampler::new(problem, *priors, cfg.clone(), initial)?;
    let mut acc_adapt = Acceptance::default();
    let mut acc_burn = Acceptance::default();
    let mut acc_sample = Acceptance::default();

    // shape estimates pool every adaptation block after the first
    let mut pooled = AdaptBlock::default();
    for b in 0..cfg.adapt_blocks {
        let mut block = AdaptBlock::default();
        for _ in 0..cfg.adapt_block_len {
            let r = s.step()?;
            acc_adapt.record(&r);
            for (slot, v) in [(&mut block.beta, r.beta), (&mut block.gamma, r.gamma), (&mut block.df, r.df)] {
                if let Some(a) = v {
                    slot.1 += 1;
                    slot.0 += a as usize;
                }
            }
            block.hist_beta.push(s.alpha(FieldKind::Beta).0.to_vec());
            block.hist_gamma.push(s.alpha(FieldKind::Gamma).0.to_vec());
            block.hist_df.push(vec![s.state().df.ln()]);
        }
        if b > 0 {
            pooled.hist_beta.append(&mut block.hist_beta);
            pooled.hist_gamma.append(&mut block.hist_gamma);
            pooled.hist_df.append(&mut block.hist_df);
        }
        pooled.beta = block.beta;
        pooled.gamma = block.gamma;
        pooled.df = block.df;
        s.adapt(&pooled);
    }
    for _ in 0..cfg.burn_in {
        let r = s.step()?;
        acc_burn.record(&r);
    }

    let m = problem.n_elements();
    let mut rows = Vec::with_capacity(cfg.samples / cfg.thin);
    let mut snapshots = Vec::new();
    let mut fitted_sum = vec![0.0; m];
    let mut beta_sum = vec![0.0; problem.dim(FieldKind::Beta)];
    let mut gamma_sum = vec![0.0; problem.dim(FieldKind::Gamma)];
    for i in 0..cfg.samples {
        let r = s.step()?;
        acc_sample.record(&r);
        if (i + 1) % cfg.thin != 0 {
            continue;
        }
        let st = s.state();
        if rows.len() % cfg.field_stride == 0 {
            snapshots.push(FieldSnapshot {
                iteration: s.iteration(),
                beta: st.beta.clone(),
                gamma: st.gamma.clone(),
            });
        }
        rows.push(trace_row(problem, st, s.iteration()));
        for ((f, y), r) in fitted_sum.iter_mut().zip(&problem.y).zip(&st.residual) {
            *f += y - r;
        }
        for (a, b) in beta_sum.iter_mut().zip(&st.beta) {
            *a += b;
        }
        for (a, b) in gamma_sum.iter_mut().zip(&st.gamma) {
            *a += b;
        }
    }
    let k = rows.len().max(1) as f64;
    let scale = |v: Vec<f64>| v.into_iter().map(|x| x / k).collect::<Vec<_>>();
    let final_proposals = s.proposals().clone();
    Ok(Trace {
        columns: trace_columns(problem.n_grains()),
        rows,
        snapshots,
        acceptance_adapt: acc_adapt,
        acceptance_burn: acc_burn,
        acceptance_sample: acc_sample,
        fitted_mean: scale(fitted_sum),
        beta_mean: scale(beta_sum),
        gamma_mean: scale(gamma_sum),
        final_state: s.into_state(),
        final_proposals,
    })
}
