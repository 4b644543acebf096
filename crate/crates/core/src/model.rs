//! Joint probability model: Student-t likelihood through auxiliary scales,
//! priors and hyperpriors.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::design::KernelDesign;
use crate::error::{Error, Result};
use crate::gmrf::{
    FieldHyperparams, HyperTransform, PrecisionMatrix, PrecisionPattern, TransformedHyperparams,
};
use crate::special::{ln_beta_pdf, ln_gamma_pdf, ln_inv_gamma_pdf, ln_lognormal_pdf, ln_normal_pdf};

/// Hyperpriors of one latent field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldPrior {
    /// Median of the log-normal prior on φ.
    pub phi_median: f64,
    /// Mean of the log-normal prior on φ.
    pub phi_mean: f64,
    pub nu_mean: f64,
    pub nu_var: f64,
    pub theta_shape: f64,
    pub theta_rate: f64,
    pub kappa_a: f64,
    pub kappa_b: f64,
    pub rho_lower: f64,
    pub rho_upper: f64,
}

impl FieldPrior {
    pub fn beta_default() -> Self {
        Self {
            phi_median: 0.6,
            phi_mean: 0.8,
            ..Self::gamma_default()
        }
    }

    pub fn gamma_default() -> Self {
        Self {
            phi_median: 0.8,
            phi_mean: 1.0,
            nu_mean: 0.0,
            nu_var: 64.0,
            theta_shape: 0.001,
            theta_rate: 0.001,
            kappa_a: 32.0 / 5.0,
            kappa_b: 8.0 / 5.0,
            rho_lower: -0.4,
            rho_upper: 1.0,
        }
    }

    /// Location of ln φ.
    pub fn phi_log_mean(&self) -> f64 {
        self.phi_median.ln()
    }

    /// Variance of ln φ, from exp(m + v/2) = mean.
    pub fn phi_log_var(&self) -> f64 {
        2.0 * (self.phi_mean.ln() - self.phi_median.ln())
    }

    pub fn transform(&self) -> HyperTransform {
        HyperTransform {
            rho_lower: self.rho_lower,
        }
    }

    /// Hyperparameters at prior medians. θ has a near-zero prior median,
    /// so it starts at 1.
    pub fn initial(&self) -> FieldHyperparams {
        FieldHyperparams {
            nu: self.nu_mean,
            theta: 1.0,
            kappa: beta_median(self.kappa_a, self.kappa_b),
            rho: 0.5 * (self.rho_lower + self.rho_upper),
            phi: self.phi_median,
        }
    }

    /// ln prior of (φ, θ, κ, ρ), excluding ν.
    pub fn ln_hyper(&self, hp: &FieldHyperparams) -> f64 {
        if !(hp.rho > self.rho_lower && hp.rho < self.rho_upper) {
            return f64::NEG_INFINITY;
        }
        ln_lognormal_pdf(hp.phi, self.phi_log_mean(), self.phi_log_var())
            + ln_gamma_pdf(hp.theta, self.theta_shape, self.theta_rate)
            + ln_beta_pdf(hp.kappa, self.kappa_a, self.kappa_b)
            - (self.rho_upper - self.rho_lower).ln()
    }

    /// ln prior of the transformed vector α, including the Jacobian.
    pub fn ln_hyper_transformed(&self, t: &TransformedHyperparams, nu: f64) -> f64 {
        let tr = self.transform();
        let hp = tr.untransform(t, nu);
        let lp = self.ln_hyper(&hp);
        if lp == f64::NEG_INFINITY {
            return lp;
        }
        lp + tr.log_jacobian(t)
    }

    pub fn ln_nu(&self, nu: f64) -> f64 {
        ln_normal_pdf(nu, self.nu_mean, self.nu_var)
    }
}

fn beta_median(a: f64, b: f64) -> f64 {
    use statrs::distribution::{Beta, ContinuousCDF};
    Beta::new(a, b).map(|d| d.inverse_cdf(0.5)).unwrap_or(a / (a + b))
}

/// All prior constants. Defaults are the published values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    /// Prior mean of μ; `None` freezes it at the data mean.
    pub mu_mean: Option<f64>,
    pub mu_var: f64,
    pub tau2_shape: f64,
    pub tau2_scale: f64,
    pub sigma2_shape: f64,
    pub sigma2_scale: f64,
    pub df_min: f64,
    pub df_max: f64,
    pub beta: FieldPrior,
    pub gamma: FieldPrior,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            mu_mean: None,
            mu_var: 100.0 * 100.0,
            tau2_shape: 0.001,
            tau2_scale: 0.001,
            sigma2_shape: 0.001,
            sigma2_scale: 0.001,
            df_min: 0.5,
            df_max: 500.0,
            beta: FieldPrior::beta_default(),
            gamma: FieldPrior::gamma_default(),
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mu_var", self.mu_var),
            ("tau2_shape", self.tau2_shape),
            ("tau2_scale", self.tau2_scale),
            ("sigma2_shape", self.sigma2_shape),
            ("sigma2_scale", self.sigma2_scale),
            ("df_min", self.df_min),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("prior {name} must be positive")));
            }
        }
        if !(self.df_max > self.df_min) {
            return Err(Error::InvalidArgument("df_max must exceed df_min".into()));
        }
        for (name, f) in [("beta", &self.beta), ("gamma", &self.gamma)] {
            let ok = f.phi_median > 0.0
                && f.phi_mean > f.phi_median
                && f.nu_var > 0.0
                && f.theta_shape > 0.0
                && f.theta_rate > 0.0
                && f.kappa_a > 0.0
                && f.kappa_b > 0.0
                && f.rho_lower < f.rho_upper
                && f.rho_upper <= 1.0;
            if !ok {
                return Err(Error::InvalidArgument(format!("invalid {name} field prior")));
            }
        }
        Ok(())
    }

    pub fn mu_mean_for(&self, y_mean: f64) -> f64 {
        self.mu_mean.unwrap_or(y_mean)
    }

    /// Unnormalized ln [df] ∝ 1/df² on (df_min, df_max].
    pub fn ln_df(&self, df: f64) -> f64 {
        if df > self.df_min && df <= self.df_max {
            -2.0 * df.ln()
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// Every sampled quantity plus the maintained full residual
/// r = y − μ_{g(m)} − X_b β − X_c γ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub mu_g: Vec<f64>,
    pub mu: f64,
    pub tau2: f64,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub hp_beta: FieldHyperparams,
    pub hp_gamma: FieldHyperparams,
    pub sigma2: f64,
    pub omega: Vec<f64>,
    pub df: f64,
    pub residual: Vec<f64>,
}

impl ModelState {
    pub fn check_support(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::BoundViolation(what.to_string()));
        if !(self.sigma2 > 0.0) {
            return bad("sigma2 must be positive");
        }
        if !(self.tau2 > 0.0) {
            return bad("tau2 must be positive");
        }
        if !(self.df > 0.0) {
            return bad("df must be positive");
        }
        if self.omega.iter().any(|&w| !(w > 0.0)) {
            return bad("omega must be positive");
        }
        Ok(())
    }

    /// Diagonal of W = diag(1/(σ² ω_m)).
    pub fn weights(&self) -> Vec<f64> {
        self.omega.iter().map(|w| 1.0 / (self.sigma2 * w)).collect()
    }

    pub fn fitted(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.residual).map(|(a, r)| a - r).collect()
    }
}

/// y − μ_{g(m)} − X_b β − X_c γ computed from scratch.
pub fn recompute_residual(
    y: &[f64],
    grain_of: &[usize],
    mu_g: &[f64],
    design: &KernelDesign,
    beta: &[f64],
    gamma: &[f64],
) -> Result<Vec<f64>> {
    let field = design.apply(beta, gamma)?;
    Ok(y.iter()
        .zip(grain_of)
        .zip(&field)
        .map(|((yv, &g), f)| yv - mu_g[g] - f)
        .collect())
}

/// −½ Σ [ln(σ² ω_m) + r_m²/(σ² ω_m)], the (2π)^{−M/2} constant dropped.
pub fn log_likelihood_parts(residual: &[f64], sigma2: f64, omega: &[f64]) -> f64 {
    residual
        .iter()
        .zip(omega)
        .map(|(r, w)| {
            let s = sigma2 * w;
            s.ln() + r * r / s
        })
        .sum::<f64>()
        * -0.5
}

/// Likelihood of the state's maintained residual.
pub fn log_likelihood(state: &ModelState) -> f64 {
    log_likelihood_parts(&state.residual, state.sigma2, &state.omega)
}

/// Draw from InvGam(shape, scale).
pub fn inv_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    let g = Gamma::new(shape, 1.0 / scale).expect("inverse-gamma parameters must be positive");
    1.0 / g.sample(rng)
}

/// ω ~ InvGam(df/2, df/2), ε = √ω · N(0, σ²). Returns (ε, ω).
pub fn scale_mixture_draw<R: Rng + ?Sized>(df: f64, sigma2: f64, rng: &mut R) -> (f64, f64) {
    let omega = inv_gamma(df / 2.0, df / 2.0, rng);
    let z: f64 = rng.sample(StandardNormal);
    let eps = if sigma2 == 0.0 { 0.0 } else { (omega * sigma2).sqrt() * z };
    (eps, omega)
}

/// Precision sparsity patterns of the two fields.
#[derive(Clone, Debug)]
pub struct FieldPatterns {
    pub beta: Arc<PrecisionPattern>,
    pub gamma: Arc<PrecisionPattern>,
}

/// Sum of every prior and hyperprior log density, in natural
/// parameterization, including the GMRF densities of β and γ and the
/// inverse-gamma mixing density of ω. Unsupported states give −∞.
pub fn log_prior(state: &ModelState, priors: &PriorConfig, patterns: &FieldPatterns, y_mean: f64) -> f64 {
    if state.check_support().is_err() {
        return f64::NEG_INFINITY;
    }
    let mut lp = ln_normal_pdf(state.mu, priors.mu_mean_for(y_mean), priors.mu_var)
        + ln_inv_gamma_pdf(state.tau2, priors.tau2_shape, priors.tau2_scale)
        + ln_inv_gamma_pdf(state.sigma2, priors.sigma2_shape, priors.sigma2_scale)
        + priors.ln_df(state.df);
    lp += state
        .mu_g
        .iter()
        .map(|&m| ln_normal_pdf(m, state.mu, state.tau2))
        .sum::<f64>();
    lp += state
        .omega
        .iter()
        .map(|&w| ln_inv_gamma_pdf(w, state.df / 2.0, state.df / 2.0))
        .sum::<f64>();
    for (hp, fp, pat, x) in [
        (&state.hp_beta, &priors.beta, &patterns.beta, &state.beta),
        (&state.hp_gamma, &priors.gamma, &patterns.gamma, &state.gamma),
    ] {
        lp += fp.ln_hyper(hp) + fp.ln_nu(hp.nu);
        if !lp.is_finite() {
            return f64::NEG_INFINITY;
        }
        lp += match field_log_density(pat, hp, x) {
            Ok(v) => v,
            Err(_) => return f64::NEG_INFINITY,
        };
    }
    lp
}

fn field_log_density(pat: &Arc<PrecisionPattern>, hp: &FieldHyperparams, x: &[f64]) -> Result<f64> {
    let q = PrecisionMatrix::assemble(pat, hp)?;
    let mean = vec![hp.nu; x.len()];
    crate::gmrf::log_density_gmrf(&q, &mean, x)
}
