//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_FAILURES` are reported as FAIL but do not fail
//! the process; any other failure does, and so does a known failure that
//! starts passing.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use grainfield::diagnostics::{
    baseline_predictions, boundary_distances, kendall_trend, profile, quantile_sorted, r2, Baseline,
};
use grainfield::gmrf::{conditional_correlation, conditional_moments, FieldHyperparams, PrecisionMatrix, PrecisionPattern};
use grainfield::mesh::NeighborhoodGraph;
use grainfield::model::{scale_mixture_draw, PriorConfig};
use grainfield::oracle::{self, DenseInstance, Field};
use grainfield::rng::{seeded, stream};
use grainfield::sampler::{run_chain, subblock_conditional, ChainConfig, FieldKind, Problem, Sampler, SubblockScheme, UpdateMask};
use grainfield::synth::{generate_geometry, simulate_with_rng, GeometryKind, SynthSpec, TruthParams};
use rand::Rng;
use rand_distr::{Distribution, StudentT};

use common::*;

const KNOWN_FAILURES: &[u32] = &[1, 9];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn main() -> ExitCode {
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(u32, &str, fn() -> Outcome); 11] = [
        (1, "precision validity", c1_precision_validity),
        (2, "conditional-moment identity", c2_conditional_moments),
        (3, "subblock conditional", c3_subblock_conditional),
        (4, "stationary distribution", c4_stationary),
        (5, "scale-mixture law", c5_scale_mixture),
        (6, "conjugacy", c6_conjugacy),
        (7, "residual bookkeeping", c7_residual),
        (8, "adaptation", c8_adaptation),
        (9, "end-to-end recovery", c9_recovery),
        (10, "boundary-variance decay", c10_boundary_decay),
        (11, "determinism", c11_determinism),
    ];
    let mut bad = false;
    for (id, name, f) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let o = f();
        let known = KNOWN_FAILURES.contains(&id);
        let tag = match (o.pass, known) {
            (true, false) => "PASS",
            (false, false) => "FAIL",
            (false, true) => "FAIL (known)",
            (true, true) => "PASS (expected FAIL)",
        };
        bad |= o.pass == known;
        println!("criterion {id:>2} {tag:<12} {name}: {} [{:.1} s]", o.detail, t.elapsed().as_secs_f64());
    }
    if bad {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

fn graphs_of(spec: &SynthSpec) -> Vec<(String, NeighborhoodGraph)> {
    let mesh = generate_geometry(spec).unwrap();
    let bg = grainfield::mesh::extract_boundaries(&mesh).unwrap();
    let g = grainfield::mesh::build_neighborhoods(&mesh, &bg);
    let label = format!("{:?}/{}", spec.geometry, spec.grains);
    let mut out = vec![(format!("{label} beta"), g.second)];
    if g.third.dim() > 0 {
        out.push((format!("{label} gamma"), g.third));
    }
    out
}

fn c1_precision_validity() -> Outcome {
    let geometries = [
        spec(GeometryKind::Cartoon3, 3, 4, 1),
        spec(GeometryKind::SlabStack, 3, 4, 1),
        spec(GeometryKind::VoronoiGrains, 4, 3, 1),
    ];
    let rho_floor = PriorConfig::default().beta.rho_lower;
    let mut rng = seeded(101);
    let mut draws = 0;
    let mut not_dominant = 0;
    let mut not_pd = 0;
    let mut worst_neg_rho_kappa = Vec::new();
    for (gi, sp) in geometries.iter().enumerate() {
        for (_, graph) in graphs_of(sp) {
            let pattern = PrecisionPattern::new(&graph);
            let lower = pattern.rho_bounds().lower.map_or(rho_floor, |l| l.max(rho_floor));
            for _ in 0..1000 {
                let hp = FieldHyperparams {
                    nu: 0.0,
                    theta: rng.random_range(-3.0f64..3.0).exp(),
                    kappa: rng.random_range(f64::EPSILON..1.0),
                    rho: rng.random_range(lower..1.0),
                    phi: 1.0,
                };
                let q = PrecisionMatrix::assemble(&pattern, &hp).unwrap();
                draws += 1;
                if q.dominance_margin() <= 0.0 {
                    not_dominant += 1;
                    if worst_neg_rho_kappa.len() < 3 {
                        worst_neg_rho_kappa.push(format!("g{gi}:κ={:.3},ρ={:.3}", hp.kappa, hp.rho));
                    }
                }
                if q.dim() <= oracle::SIZE_CAP && oracle::min_eigenvalue(&q.to_dense()) <= 0.0 {
                    not_pd += 1;
                }
            }
        }
    }
    outcome(
        not_dominant == 0 && not_pd == 0,
        format!(
            "{draws} draws, {not_dominant} not strictly diagonally dominant, {not_pd} with min eigenvalue ≤ 0; e.g. {}",
            worst_neg_rho_kappa.join(" ")
        ),
    )
}

fn c2_conditional_moments() -> Outcome {
    let sp = spec(GeometryKind::VoronoiGrains, 5, 4, 6);
    let (_, graph) = graphs_of(&sp).remove(0);
    let n = graph.dim();
    let pattern = PrecisionPattern::new(&graph);
    let mut rng = seeded(202);
    let hp = FieldHyperparams {
        nu: 1.3,
        theta: 2.7,
        kappa: 0.85,
        rho: 0.35,
        phi: 1.0,
    };
    let q = PrecisionMatrix::assemble(&pattern, &hp).unwrap();
    let dense = oracle::dense_precision(&graph, &hp);
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
    let mut worst_moment = 0.0f64;
    for p in 0..n {
        let (m, v) = conditional_moments(&q, &hp, &x, p);
        let off: f64 = (0..n).filter(|&j| j != p).map(|j| dense[p][j] * (x[j] - hp.nu)).sum();
        let m_ref = hp.nu - off / dense[p][p];
        let v_ref = 1.0 / dense[p][p];
        worst_moment = worst_moment
            .max((m - m_ref).abs() / m_ref.abs().max(1e-300))
            .max((v - v_ref).abs() / v_ref);
    }
    let mut worst_corr = 0.0f64;
    let mut pairs = 0;
    for p in 0..n {
        let kp = q.k(p);
        let within = graph.within(p).iter().map(|&j| (j, 1.0));
        let between = graph.between(p).iter().map(|&j| (j, hp.rho));
        for (j, factor) in within.chain(between) {
            let expect = factor * hp.kappa / (kp * q.k(j)).sqrt();
            let got = conditional_correlation(&q, p, j);
            worst_corr = worst_corr.max((got - expect).abs() / expect.abs());
            pairs += 1;
        }
    }
    outcome(
        n == 150 && worst_moment <= 1e-8 && worst_corr <= 1e-12,
        format!("dim {n}: max rel moment error {worst_moment:.2e}; {pairs} neighbor correlations, max rel error {worst_corr:.2e}"),
    )
}

fn random_state(problem: &Problem, rng: &mut grainfield::rng::ChainRng) -> grainfield::model::ModelState {
    let mut st = problem.initial_state(&PriorConfig::default());
    for (hp, lower) in [
        (&mut st.hp_beta, problem.pattern(FieldKind::Beta).rho_bounds().lower),
        (&mut st.hp_gamma, problem.pattern(FieldKind::Gamma).rho_bounds().lower),
    ] {
        let lo = lower.map_or(-0.4, |l| l.max(-0.4)).max(0.0);
        *hp = FieldHyperparams {
            nu: rng.random_range(-2.0..2.0),
            theta: rng.random_range(-1.0f64..1.5).exp(),
            kappa: rng.random_range(0.3..0.95),
            rho: rng.random_range(lo..0.9),
            phi: rng.random_range(0.3..1.5),
        };
    }
    st.beta = (0..st.beta.len()).map(|_| rng.random_range(-3.0..3.0)).collect();
    st.gamma = (0..st.gamma.len()).map(|_| rng.random_range(-3.0..3.0)).collect();
    st.omega = (0..st.omega.len()).map(|_| rng.random_range(0.3..3.0)).collect();
    st.sigma2 = rng.random_range(0.5..5.0);
    st.residual = problem.recompute_residual(&st).unwrap();
    st
}

fn dense_of(problem: &Problem, st: &grainfield::model::ModelState) -> DenseInstance {
    DenseInstance::from_state(
        &problem.mesh,
        &problem.geometry.second,
        &problem.geometry.third,
        (&problem.graphs.second, &problem.graphs.third),
        &problem.y,
        st,
    )
    .unwrap()
}

fn c3_subblock_conditional() -> Outcome {
    let geometries = [
        spec(GeometryKind::Cartoon3, 3, 2, 1),
        spec(GeometryKind::Cartoon3, 3, 4, 2),
        spec(GeometryKind::SlabStack, 2, 4, 3),
        spec(GeometryKind::VoronoiGrains, 4, 3, 4),
    ];
    let problems: Vec<Problem> = geometries.iter().map(problem).collect();
    let mut rng = seeded(303);
    let mut worst_mean = 0.0f64;
    let mut worst_prec = 0.0f64;
    let mut checked = 0;
    for i in 0..20 {
        let p = &problems[i % problems.len()];
        let st = random_state(p, &mut rng);
        let dense = dense_of(p, &st);
        let kind = if i % 3 == 2 && p.dim(FieldKind::Gamma) > 1 { FieldKind::Gamma } else { FieldKind::Beta };
        let dim = p.dim(kind);
        let s_count = 2 + i % 4;
        let blocks = p.blocks(kind, SubblockScheme::FixedSize(dim.div_ceil(s_count)));
        assert!((2..=5).contains(&blocks.len()), "{} blocks", blocks.len());
        let (hp, field, other, of) = match kind {
            FieldKind::Beta => (st.hp_beta, &st.beta, &st.gamma, Field::Beta),
            FieldKind::Gamma => (st.hp_gamma, &st.gamma, &st.beta, Field::Gamma),
        };
        let q = PrecisionMatrix::assemble(p.pattern(kind), &hp).unwrap();
        let design = p.field_design(kind, hp.phi);
        let w = st.weights();
        for range in blocks {
            let c = subblock_conditional(&design, &q, &w, &st.residual, field, range.clone()).unwrap();
            let idx: Vec<usize> = range.clone().collect();
            let (mean, cov) = dense.dense_conditional(of, &idx, field, other).unwrap();
            let prec = oracle::inverse(&cov).unwrap();
            let scale_m = mean.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let scale_p = prec.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
            for a in 0..idx.len() {
                worst_mean = worst_mean.max((c.mean[a] - mean[a]).abs() / scale_m);
                for b in 0..idx.len() {
                    worst_prec = worst_prec.max((c.precision[(a, b)] - prec[a][b]).abs() / scale_p);
                }
            }
            checked += 1;
        }
    }
    outcome(
        worst_mean <= 1e-8 && worst_prec <= 1e-8,
        format!("20 instances, {checked} subblocks: max rel mean error {worst_mean:.2e}, precision {worst_prec:.2e}"),
    )
}

fn c4_stationary() -> Outcome {
    let p = problem(&spec(GeometryKind::Cartoon3, 3, 2, 4));
    let mut rng = seeded(404);
    let mut st = p.initial_state(&PriorConfig::default());
    st.hp_beta = FieldHyperparams {
        nu: 0.5,
        theta: 0.8,
        kappa: 0.8,
        rho: 0.4,
        phi: 0.6,
    };
    st.hp_gamma = FieldHyperparams {
        nu: -0.3,
        theta: 1.5,
        kappa: 0.7,
        rho: 0.3,
        phi: 0.9,
    };
    st.omega = (0..st.omega.len()).map(|_| rng.random_range(0.5..2.0)).collect();
    st.residual = p.recompute_residual(&st).unwrap();
    let dense = dense_of(&p, &st);
    let (mean, cov) = dense.dense_posterior_moments().unwrap();
    let nb = p.dim(FieldKind::Beta);
    let dim = mean.len();

    let cfg = ChainConfig {
        seed: 44,
        update: UpdateMask {
            beta: true,
            gamma: true,
            ..UpdateMask::none()
        },
        ..Default::default()
    };
    let mut s = Sampler::new(&p, PriorConfig::default(), cfg, Some(st)).unwrap();
    let iters = 200_000;
    let mut stats: Vec<BatchMeans> = (0..dim).map(|_| BatchMeans::new(1000)).collect();
    for _ in 0..iters {
        s.step().unwrap();
        let x = s.state();
        for (i, v) in x.beta.iter().chain(&x.gamma).enumerate() {
            stats[i].push(*v);
        }
    }
    let mut worst_z = 0.0f64;
    let mut worst_var = 0.0f64;
    for i in 0..dim {
        let z = (stats[i].mean() - mean[i]).abs() / stats[i].std_error();
        worst_z = worst_z.max(z);
        worst_var = worst_var.max((stats[i].variance() / cov[i][i] - 1.0).abs());
    }
    outcome(
        dim <= 60 && worst_z <= 3.0 && worst_var <= 0.10,
        format!(
            "{dim} latent dims ({nb}+{}), {iters} iterations: max |mean error|/MCSE {worst_z:.2}, max rel variance error {:.1}%",
            dim - nb,
            100.0 * worst_var
        ),
    )
}

fn c5_scale_mixture() -> Outcome {
    let n = 100_000;
    let mut parts = Vec::new();
    let mut pass = true;
    for (k, df) in [2.0, 4.0, 30.0].into_iter().enumerate() {
        let mut rng = stream(505, k as u64);
        let mix: Vec<f64> = (0..n).map(|_| scale_mixture_draw(df, 1.0, &mut rng).0).collect();
        let t = StudentT::new(df).unwrap();
        let mut rng2 = stream(506, k as u64);
        let direct: Vec<f64> = (0..n).map(|_| t.sample(&mut rng2)).collect();
        let d = ks_statistic(&mix, &direct);
        let crit = ks_critical_01(n, n);
        pass &= d < crit;
        parts.push(format!("df={df}: D={d:.4}"));
    }
    outcome(pass, format!("{} (critical {:.4})", parts.join(", "), ks_critical_01(n, n)))
}

fn c6_conjugacy() -> Outcome {
    let draws = 50_000;
    let priors = PriorConfig::default();

    let p = problem(&spec(GeometryKind::Cartoon3, 3, 4, 6));
    let mut st = p.initial_state(&priors);
    let mut rng = seeded(606);
    st.omega = (0..st.omega.len()).map(|_| rng.random_range(0.5..2.0)).collect();
    let m = p.n_elements() as f64;
    let ss: f64 = st.residual.iter().zip(&st.omega).map(|(r, w)| r * r / w).sum();
    let (a, b) = (m / 2.0 + priors.sigma2_shape, ss / 2.0 + priors.sigma2_scale);
    let sigma_mean = b / (a - 1.0);
    let cfg = ChainConfig {
        seed: 63,
        update: UpdateMask {
            sigma2: true,
            ..UpdateMask::none()
        },
        ..Default::default()
    };
    let mut s = Sampler::new(&p, priors, cfg, Some(st)).unwrap();
    let mut bm = BatchMeans::new(500);
    for _ in 0..draws {
        s.step().unwrap();
        bm.push(s.state().sigma2);
    }
    let z_sigma = (bm.mean() - sigma_mean) / bm.std_error();

    let p = problem(&spec(GeometryKind::VoronoiGrains, 12, 4, 6));
    let mut st = p.initial_state(&priors);
    st.mu = st.mu_g.iter().sum::<f64>() / st.mu_g.len() as f64 + 3.0;
    let g = p.n_grains() as f64;
    let ss: f64 = st.mu_g.iter().map(|x| (x - st.mu).powi(2)).sum();
    let (a, b) = (g / 2.0 + priors.tau2_shape, ss / 2.0 + priors.tau2_scale);
    let tau_mean = b / (a - 1.0);
    let cfg = ChainConfig {
        seed: 62,
        update: UpdateMask {
            tau2: true,
            ..UpdateMask::none()
        },
        ..Default::default()
    };
    let mut s = Sampler::new(&p, priors, cfg, Some(st)).unwrap();
    let mut bm_tau = BatchMeans::new(500);
    for _ in 0..draws {
        s.step().unwrap();
        bm_tau.push(s.state().tau2);
    }
    let z_tau = (bm_tau.mean() - tau_mean) / bm_tau.std_error();
    outcome(
        z_sigma.abs() <= 2.0 && z_tau.abs() <= 2.0,
        format!(
            "σ²: chain {:.5} vs {:.5} (z={z_sigma:.2}); τ² over {} grains: chain {:.3} vs {:.3} (z={z_tau:.2})",
            bm.mean(),
            sigma_mean,
            p.n_grains(),
            bm_tau.mean(),
            tau_mean
        ),
    )
}

fn c7_residual() -> Outcome {
    let p = problem(&spec(GeometryKind::Cartoon3, 3, 6, 7));
    let cfg = ChainConfig {
        seed: 77,
        ..Default::default()
    };
    let mut s = Sampler::new(&p, PriorConfig::default(), cfg, None).unwrap();
    let mut violations = 0;
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        s.step().unwrap();
        match s.audit_residual() {
            Ok(rel) => worst = worst.max(rel),
            Err(_) => violations += 1,
        }
    }
    outcome(
        violations == 0,
        format!("1000 sweeps on {} elements: {violations} violations, max rel drift {worst:.2e}", p.n_elements()),
    )
}

struct Replicate {
    mu_g_covered: usize,
    grains: usize,
    sigma2_covered: bool,
    r2: f64,
    seconds: f64,
}

/// Replicate dataset `seed` on the default cartoon3 geometry at a fixed truth.
fn replicate_data(seed: u64) -> (Problem, grainfield::synth::SimulatedData) {
    let sp = SynthSpec {
        seed,
        truth: TruthParams {
            mu_g: Some(vec![260.0, 300.0, 340.0]),
            ..Default::default()
        },
        ..Default::default()
    };
    let mesh = generate_geometry(&sp).unwrap();
    let sim = grainfield::synth::simulate_data(&mesh, &sp).unwrap();
    (Problem::new(mesh, sim.y.clone(), Default::default()).unwrap(), sim)
}

fn recovery_runs() -> &'static Vec<Replicate> {
    static RUNS: std::sync::OnceLock<Vec<Replicate>> = std::sync::OnceLock::new();
    RUNS.get_or_init(|| {
        (1..=10u64)
            .map(|seed| {
                let t = Instant::now();
                let (p, sim) = replicate_data(seed);
                let cfg = ChainConfig {
                    adapt_blocks: 8,
                    adapt_block_len: 250,
                    burn_in: 2000,
                    samples: 5000,
                    thin: 5,
                    seed: 1000 + seed,
                    ..Default::default()
                };
                let tr = run_chain(&p, &PriorConfig::default(), &cfg, None).unwrap();
                let interval = |name: &str| {
                    let mut v = tr.column(name).unwrap();
                    v.sort_by(f64::total_cmp);
                    (quantile_sorted(&v, 0.05), quantile_sorted(&v, 0.95))
                };
                let truth_mu = &sim.truth.mu_g;
                let mu_g_covered = (0..p.n_grains())
                    .filter(|&g| {
                        let (lo, hi) = interval(&format!("mu_g_{}", g + 1));
                        lo <= truth_mu[g] && truth_mu[g] <= hi
                    })
                    .count();
                let (lo, hi) = interval("sigma2");
                let base = baseline_predictions(&p.y, p.grain_of(), Baseline::Constant);
                Replicate {
                    mu_g_covered,
                    grains: p.n_grains(),
                    sigma2_covered: lo <= sim.truth.sigma2 && sim.truth.sigma2 <= hi,
                    r2: r2(&p.y, &tr.fitted_mean, &base),
                    seconds: t.elapsed().as_secs_f64(),
                }
            })
            .collect()
    })
}

/// Default adaptation schedule, then rates over 3000 post-burn-in iterations.
fn c8_adaptation() -> Outcome {
    let runs: Vec<[f64; 3]> = (1..=10u64)
        .map(|seed| {
            let (p, _) = replicate_data(seed);
            let cfg = ChainConfig {
                burn_in: 2000,
                samples: 3000,
                thin: 5,
                seed: 2000 + seed,
                ..Default::default()
            };
            run_chain(&p, &PriorConfig::default(), &cfg, None).unwrap().acceptance_sample.rates()
        })
        .collect();
    let ok = |r: &[f64; 3]| r.iter().all(|a| (0.134..=0.334).contains(a));
    let good = runs.iter().filter(|r| ok(r)).count();
    let rates: Vec<String> = runs.iter().map(|r| format!("[{:.2} {:.2} {:.2}]", r[0], r[1], r[2])).collect();
    outcome(good >= 8, format!("{good}/10 seeds in [0.134, 0.334]: {}", rates.join(" ")))
}

fn c9_recovery() -> Outcome {
    let runs = recovery_runs();
    let pairs: usize = runs.iter().map(|r| r.grains).sum();
    let covered: usize = runs.iter().map(|r| r.mu_g_covered).sum();
    let s2 = runs.iter().filter(|r| r.sigma2_covered).count();
    let min_r2 = runs.iter().map(|r| r.r2).fold(f64::INFINITY, f64::min);
    let total: f64 = runs.iter().map(|r| r.seconds).sum();
    let pass = covered as f64 >= 0.8 * pairs as f64 && s2 >= 7 && min_r2 > 0.9 && total < 1800.0;
    outcome(
        pass,
        format!("μ_g covered {covered}/{pairs}, σ² covered {s2}/10, min R² {min_r2:.4}, fits took {total:.0} s"),
    )
}

fn c10_boundary_decay() -> Outcome {
    let mut truth = TruthParams::default();
    truth.hp_beta.phi = 0.3;
    truth.hp_gamma.phi = 0.3;
    truth.mu_g = Some(vec![0.0; 3]);
    let sp = SynthSpec {
        truth: truth.clone(),
        ..Default::default()
    };
    let mesh = generate_geometry(&sp).unwrap();
    let bg = grainfield::mesh::extract_boundaries(&mesh).unwrap();
    let dist = boundary_distances(&mesh, &bg);
    let mut rng = stream(1010, 0);
    let replicates = 200;
    let mut all_d = Vec::with_capacity(replicates * dist.len());
    let mut all_v = Vec::with_capacity(replicates * dist.len());
    for _ in 0..replicates {
        let sim = simulate_with_rng(&mesh, &truth, &mut rng).unwrap();
        all_d.extend_from_slice(&dist);
        all_v.extend_from_slice(&sim.y);
    }
    let bins = profile(&all_d, &all_v, 8);
    let sds: Vec<f64> = bins.iter().map(|b| b.sd).collect();
    let t = kendall_trend(&sds);
    outcome(
        bins.len() >= 5 && t.p_decreasing < 0.05,
        format!(
            "{} bins, sd {:?}, Kendall τ={:.3}, p={:.4}",
            bins.len(),
            sds.iter().map(|s| (s * 100.0).round() / 100.0).collect::<Vec<_>>(),
            t.tau,
            t.p_decreasing
        ),
    )
}

fn c11_determinism() -> Outcome {
    let p = problem(&spec(GeometryKind::Cartoon3, 3, 4, 11));
    let cfg = ChainConfig {
        adapt_blocks: 2,
        adapt_block_len: 100,
        burn_in: 100,
        samples: 500,
        thin: 5,
        field_stride: 10,
        seed: 111,
        ..Default::default()
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let dir = std::env::temp_dir().join(format!("grainfield-determinism-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let mut files = Vec::new();
    for run in 0..2 {
        let tr = pool.install(|| run_chain(&p, &PriorConfig::default(), &cfg, None)).unwrap();
        for (name, body) in [
            ("trace.csv", tr.scalar_csv()),
            ("beta.csv", tr.snapshot_csv(FieldKind::Beta)),
            ("gamma.csv", tr.snapshot_csv(FieldKind::Gamma)),
        ] {
            let path = dir.join(format!("{run}-{name}"));
            std::fs::write(&path, body).unwrap();
            files.push(std::fs::read(&path).unwrap());
        }
    }
    std::fs::remove_dir_all(&dir).ok();
    let same = files[..3] == files[3..];
    outcome(same, format!("3 trace files per run, {} bytes, identical: {same}", files[..3].iter().map(Vec::len).sum::<usize>()))
}
