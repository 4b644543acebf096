mod common;

use grainfield::model::{inv_gamma, log_likelihood, log_prior, scale_mixture_draw, FieldPrior, PriorConfig};
use grainfield::rng::seeded;
use grainfield::sampler::df_log_target;
use grainfield::synth::{generate_geometry, simulate_data, GeometryKind};
use proptest::prelude::*;

use common::{problem, spec};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn simulated_truth_has_finite_density(seed in 0u64..10_000, voronoi in any::<bool>()) {
        let s = if voronoi {
            spec(GeometryKind::VoronoiGrains, 4, 3, seed)
        } else {
            spec(GeometryKind::Cartoon3, 3, 2, seed)
        };
        let mesh = generate_geometry(&s).unwrap();
        let truth = simulate_data(&mesh, &s).unwrap().truth;
        let p = problem(&s);
        let ll = log_likelihood(&truth);
        let lp = log_prior(&truth, &PriorConfig::default(), &p.patterns, p.y_mean);
        prop_assert!(ll.is_finite() && lp.is_finite(), "{} {}", ll, lp);
    }

    #[test]
    fn prior_rejects_unsupported_states(which in 0usize..4) {
        let s = spec(GeometryKind::Cartoon3, 3, 2, 1);
        let p = problem(&s);
        let mut st = p.initial_state(&PriorConfig::default());
        match which {
            0 => st.sigma2 = 0.0,
            1 => st.df = 600.0,
            2 => st.omega[0] = -1.0,
            _ => st.hp_beta.rho = 1.5,
        }
        prop_assert_eq!(log_prior(&st, &PriorConfig::default(), &p.patterns, p.y_mean), f64::NEG_INFINITY);
    }
}

#[test]
fn huge_df_noise_is_gaussian() {
    let mut rng = seeded(21);
    let n = 200_000;
    let sigma2 = 2.5;
    let eps: Vec<f64> = (0..n).map(|_| scale_mixture_draw(1e6, sigma2, &mut rng).0).collect();
    let m2 = eps.iter().map(|e| e * e).sum::<f64>() / n as f64;
    let m4 = eps.iter().map(|e| e.powi(4)).sum::<f64>() / n as f64;
    // se of the second moment is √(2/n) σ², of the kurtosis about √(24/n)
    assert!((m2 / sigma2 - 1.0).abs() < 4.0 * (2.0 / n as f64).sqrt());
    assert!((m4 / (m2 * m2) - 3.0).abs() < 4.0 * (24.0 / n as f64).sqrt());
}

#[test]
fn df_target_peaks_near_the_generating_value() {
    let priors = PriorConfig::default();
    for (seed, df) in [(1, 4.0), (2, 12.0)] {
        let mut rng = seeded(seed);
        let omega: Vec<f64> = (0..5000).map(|_| inv_gamma(df / 2.0, df / 2.0, &mut rng)).collect();
        let grid: Vec<f64> = (1..2000).map(|i| 0.5 + i as f64 * 0.01).collect();
        let best = grid
            .iter()
            .copied()
            .max_by(|a, b| df_log_target(*a, &omega, &priors).total_cmp(&df_log_target(*b, &omega, &priors)))
            .unwrap();
        assert!((best / df - 1.0).abs() < 0.15, "mode {best} for df {df}");
    }
}

#[test]
fn phi_prior_has_the_requested_median_and_mean() {
    for f in [FieldPrior::beta_default(), FieldPrior::gamma_default()] {
        let mut rng = seeded(3);
        let n = 400_000;
        let sd = f.phi_log_var().sqrt();
        let mut draws: Vec<f64> = (0..n)
            .map(|_| (f.phi_log_mean() + sd * rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, &mut rng)).exp())
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        draws.sort_by(f64::total_cmp);
        let median = draws[n / 2];
        assert!((median / f.phi_median - 1.0).abs() < 0.01, "{median}");
        assert!((mean / f.phi_mean - 1.0).abs() < 0.01, "{mean}");
    }
}

#[test]
fn kappa_prior_mean_by_quadrature() {
    let f = FieldPrior::beta_default();
    let base = f.initial();
    let n = 100_000;
    let (mut z, mut m) = (0.0, 0.0);
    for i in 0..n {
        let k = (i as f64 + 0.5) / n as f64;
        let d = f.ln_hyper(&grainfield::gmrf::FieldHyperparams { kappa: k, ..base }).exp();
        z += d;
        m += k * d;
    }
    assert!((m / z - 0.8).abs() < 1e-6, "{}", m / z);
}

#[test]
fn df_prior_is_flat_in_inverse_df() {
    let priors = PriorConfig::default();
    // ∝ 1/df² means equal mass on equal intervals of 1/df
    let mass = |a: f64, b: f64| {
        let n = 20_000;
        let h = (b - a) / n as f64;
        (0..n).map(|i| priors.ln_df(a + (i as f64 + 0.5) * h).exp() * h).sum::<f64>()
    };
    let m1 = mass(1.0, 2.0);
    let m2 = mass(2.0, 400.0);
    assert!((m1 / 0.5 - 1.0).abs() < 1e-6);
    assert!((m2 / (0.5 - 1.0 / 400.0) - 1.0).abs() < 1e-4);
}
