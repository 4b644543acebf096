//! Scalar distribution helpers shared across modules.

use statrs::function::erf::{erfc, erfc_inv};
use statrs::function::gamma::ln_gamma;

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub fn std_normal_quantile(p: f64) -> f64 {
    let x = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p);
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    // one Halley step
    let diff = if p > 0.5 {
        (1.0 - p) - 0.5 * erfc(x / std::f64::consts::SQRT_2)
    } else {
        std_normal_cdf(x) - p
    };
    let e = diff / ln_std_normal_pdf(x).exp();
    x - e / (1.0 + 0.5 * x * e)
}

pub fn ln_std_normal_pdf(x: f64) -> f64 {
    -0.5 * (LN_2PI + x * x)
}

pub fn ln_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (LN_2PI + var.ln() + (x - mean).powi(2) / var)
}

/// Inverse-gamma density with shape `a` and scale `b`.
pub fn ln_inv_gamma_pdf(x: f64, a: f64, b: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NEG_INFINITY;
    }
    a * b.ln() - ln_gamma(a) - (a + 1.0) * x.ln() - b / x
}

/// Gamma density with shape `a` and rate `b`.
pub fn ln_gamma_pdf(x: f64, a: f64, b: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NEG_INFINITY;
    }
    a * b.ln() - ln_gamma(a) + (a - 1.0) * x.ln() - b * x
}

pub fn ln_beta_pdf(x: f64, a: f64, b: f64) -> f64 {
    if !(x > 0.0 && x < 1.0) {
        return f64::NEG_INFINITY;
    }
    ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln()
}

/// Log-normal density; `var` is the variance of ln x.
pub fn ln_lognormal_pdf(x: f64, mu: f64, var: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NEG_INFINITY;
    }
    ln_normal_pdf(x.ln(), mu, var) - x.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_inverts_cdf() {
        for &x in &[-7.5, -6.0, -2.5, -0.3, 0.0, 0.7, 3.1] {
            let p = std_normal_cdf(x);
            assert!((std_normal_quantile(p) - x).abs() < 1e-12 * (1.0 + x.abs()), "{x}");
        }
        assert_eq!(std_normal_quantile(0.5), 0.0);
    }

    #[test]
    fn densities_match_statrs() {
        use statrs::distribution::{Beta, Continuous, Gamma, InverseGamma, LogNormal};
        let x = 0.37;
        assert!((ln_beta_pdf(x, 6.4, 1.6) - Beta::new(6.4, 1.6).unwrap().ln_pdf(x)).abs() < 1e-12);
        assert!((ln_gamma_pdf(x, 2.5, 3.0) - Gamma::new(2.5, 3.0).unwrap().ln_pdf(x)).abs() < 1e-12);
        assert!(
            (ln_inv_gamma_pdf(x, 2.5, 3.0) - InverseGamma::new(2.5, 3.0).unwrap().ln_pdf(x)).abs()
                < 1e-12
        );
        assert!(
            (ln_lognormal_pdf(x, -0.5, 0.25) - LogNormal::new(-0.5, 0.5).unwrap().ln_pdf(x)).abs()
                < 1e-12
        );
    }
}
