//! Goodness-of-fit and trace summaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{distance, BoundaryGeometry, GrainMesh};
use crate::model::ModelState;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    Constant,
    GrainMeans,
}

/// Per-element predictions of a baseline model fitted by least squares.
pub fn baseline_predictions(y: &[f64], grain_of: &[usize], baseline: Baseline) -> Vec<f64> {
    match baseline {
        Baseline::Constant => {
            let m = y.iter().sum::<f64>() / y.len() as f64;
            vec![m; y.len()]
        }
        Baseline::GrainMeans => {
            let g_count = grain_of.iter().max().map_or(0, |g| g + 1);
            let mut sum = vec![0.0; g_count];
            let mut n = vec![0usize; g_count];
            for (v, &g) in y.iter().zip(grain_of) {
                sum[g] += v;
                n[g] += 1;
            }
            grain_of.iter().map(|&g| sum[g] / n[g] as f64).collect()
        }
    }
}

/// 1 − SSE/SS_baseline.
pub fn r2(y: &[f64], fitted: &[f64], baseline: &[f64]) -> f64 {
    let sse: f64 = y.iter().zip(fitted).map(|(a, b)| (a - b).powi(2)).sum();
    let sst: f64 = y.iter().zip(baseline).map(|(a, b)| (a - b).powi(2)).sum();
    1.0 - sse / sst
}

/// 1 − (1 − R²)(n − 1)/(n − p − 1), with R² relative to the baseline.
pub fn r2_adjusted(
    y: &[f64],
    fitted: &[f64],
    grain_of: &[usize],
    p_effective: usize,
    baseline: Baseline,
) -> Result<f64> {
    let n = y.len();
    if fitted.len() != n || grain_of.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: fitted.len().min(grain_of.len()),
        });
    }
    if p_effective + 1 >= n {
        return Err(Error::InvalidArgument(format!(
            "p_effective = {p_effective} leaves no residual degrees of freedom for n = {n}"
        )));
    }
    let base = baseline_predictions(y, grain_of, baseline);
    let r = r2(y, fitted, &base);
    Ok(1.0 - (1.0 - r) * (n - 1) as f64 / (n - p_effective - 1) as f64)
}

/// r_m / (√ω_m σ) from one state's residual, ω and σ.
pub fn standardized_residuals(state: &ModelState) -> Vec<f64> {
    let s = state.sigma2.sqrt();
    state
        .residual
        .iter()
        .zip(&state.omega)
        .map(|(r, w)| r / (w.sqrt() * s))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub mean: f64,
    pub sd: f64,
}

/// Distance from each element centroid to the nearest boundary node.
pub fn boundary_distances(mesh: &GrainMesh, bg: &BoundaryGeometry) -> Vec<f64> {
    let nodes: Vec<_> = bg.boundary_nodes().iter().map(|&v| mesh.nodes()[v]).collect();
    mesh.centroids()
        .into_iter()
        .map(|c| {
            nodes
                .iter()
                .map(|&v| distance(c, v))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Values binned by boundary distance into `bins` equal-count bins.
pub fn boundary_distance_profile(
    mesh: &GrainMesh,
    bg: &BoundaryGeometry,
    values: &[f64],
    bins: usize,
) -> Result<Vec<ProfileBin>> {
    if values.len() != mesh.n_elements() {
        return Err(Error::Dimension {
            expected: mesh.n_elements(),
            got: values.len(),
        });
    }
    Ok(profile(&boundary_distances(mesh, bg), values, bins))
}

/// Equal-count binning of `values` by `dist`. Ties in distance are never
/// split across bins.
pub fn profile(dist: &[f64], values: &[f64], bins: usize) -> Vec<ProfileBin> {
    let mut order: Vec<usize> = (0..dist.len()).collect();
    order.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
    let n = order.len();
    let mut out = Vec::new();
    let mut start = 0;
    for b in 0..bins {
        if start >= n {
            break;
        }
        let mut end = ((b + 1) * n / bins).max(start + 1).min(n);
        while end < n && dist[order[end]] == dist[order[end - 1]] {
            end += 1;
        }
        let idx = &order[start..end];
        let vals: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
        let (mean, sd) = mean_sd(&vals);
        out.push(ProfileBin {
            lower: dist[idx[0]],
            upper: dist[idx[idx.len() - 1]],
            count: idx.len(),
            mean,
            sd,
        });
        start = end;
    }
    out
}

/// Sample mean and standard deviation (n − 1 denominator; 0 for n = 1).
pub fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn lag1_autocorrelation(x: &[f64]) -> f64 {
    if x.len() < 3 {
        return f64::NAN;
    }
    let (mean, _) = mean_sd(x);
    let den: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    let num: f64 = x.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    num / den
}

/// Kendall trend test of a sequence against its index.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendTest {
    pub tau: f64,
    /// One-sided p-value for a decreasing trend.
    pub p_decreasing: f64,
    /// One-sided p-value for an increasing trend.
    pub p_increasing: f64,
}

/// Exact null distribution of the number of discordant pairs (inversions)
/// for `n` distinct values.
fn inversion_counts(n: usize) -> Vec<f64> {
    let mut c = vec![1.0];
    for k in 1..n {
        let mut next = vec![0.0; c.len() + k];
        for (i, v) in c.iter().enumerate() {
            for slot in &mut next[i..=i + k] {
                *slot += v;
            }
        }
        c = next;
    }
    c
}

/// Kendall's τ between `x` and 0, 1, …, n−1. Exact p-values when the values
/// are distinct and n ≤ 60, normal approximation otherwise.
pub fn kendall_trend(x: &[f64]) -> TrendTest {
    let n = x.len();
    let (mut conc, mut disc) = (0usize, 0usize);
    for i in 0..n {
        for j in i + 1..n {
            if x[j] > x[i] {
                conc += 1;
            } else if x[j] < x[i] {
                disc += 1;
            }
        }
    }
    let pairs = n * n.saturating_sub(1) / 2;
    let tau = if pairs == 0 { 0.0 } else { (conc as f64 - disc as f64) / pairs as f64 };
    let ties = conc + disc < pairs;
    let (p_dec, p_inc) = if !ties && (2..=60).contains(&n) {
        let counts = inversion_counts(n);
        let total: f64 = counts.iter().sum();
        let at_least = |k: usize| counts[k..].iter().sum::<f64>() / total;
        (at_least(disc), at_least(conc))
    } else if pairs == 0 {
        (1.0, 1.0)
    } else {
        let s = conc as f64 - disc as f64;
        let nf = n as f64;
        let sd = (nf * (nf - 1.0) * (2.0 * nf + 5.0) / 18.0).sqrt();
        let cdf = crate::special::std_normal_cdf;
        (cdf((s + 1.0) / sd), 1.0 - cdf((s - 1.0) / sd))
    };
    TrendTest {
        tau,
        p_decreasing: p_dec,
        p_increasing: p_inc,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
    pub lag1: f64,
}

pub fn summarize(name: &str, x: &[f64]) -> TraceSummary {
    let (mean, sd) = mean_sd(x);
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    TraceSummary {
        name: name.to_string(),
        mean,
        sd,
        q05: quantile_sorted(&s, 0.05),
        q50: quantile_sorted(&s, 0.5),
        q95: quantile_sorted(&s, 0.95),
        lag1: lag1_autocorrelation(x),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub r2_adj_constant: f64,
    pub r2_adj_grain_means: f64,
    pub p_effective: usize,
    /// Iteration whose state the residuals come from.
    pub residual_iteration: u64,
    pub residuals: Vec<f64>,
    pub standardized_residuals: Vec<f64>,
    pub summaries: Vec<TraceSummary>,
    pub profile: Vec<ProfileBin>,
}

/// Inputs of a fit report, all read from recorded outputs.
pub struct ReportInputs<'a> {
    pub mesh: &'a GrainMesh,
    pub boundaries: &'a BoundaryGeometry,
    pub y: &'a [f64],
    /// Posterior mean of the fitted values.
    pub fitted_mean: &'a [f64],
    /// State the residuals are taken from.
    pub state: &'a ModelState,
    pub state_iteration: u64,
    pub columns: &'a [String],
    pub rows: &'a [Vec<f64>],
    pub p_effective: usize,
    pub bins: usize,
}

pub fn fit_report(inp: &ReportInputs) -> Result<FitReport> {
    let n = inp.mesh.n_elements();
    for got in [inp.y.len(), inp.fitted_mean.len(), inp.state.residual.len()] {
        if got != n {
            return Err(Error::Dimension { expected: n, got });
        }
    }
    let grain_of = inp.mesh.grains();
    let summaries = inp
        .columns
        .iter()
        .enumerate()
        .filter(|(_, c)| c.as_str() != "iteration")
        .map(|(j, c)| {
            let x: Vec<f64> = inp.rows.iter().map(|r| r[j]).collect();
            summarize(c, &x)
        })
        .collect();
    Ok(FitReport {
        r2_adj_constant: r2_adjusted(inp.y, inp.fitted_mean, grain_of, inp.p_effective, Baseline::Constant)?,
        r2_adj_grain_means: r2_adjusted(inp.y, inp.fitted_mean, grain_of, inp.p_effective, Baseline::GrainMeans)?,
        p_effective: inp.p_effective,
        residual_iteration: inp.state_iteration,
        residuals: inp.state.residual.clone(),
        standardized_residuals: standardized_residuals(inp.state),
        summaries,
        profile: boundary_distance_profile(inp.mesh, inp.boundaries, inp.y, inp.bins)?,
    })
}
