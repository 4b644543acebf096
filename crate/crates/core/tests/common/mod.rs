#![allow(dead_code)]

use grainfield::design::DesignOptions;
use grainfield::sampler::Problem;
use grainfield::synth::{generate_geometry, simulate_data, GeometryKind, SynthSpec};

pub fn spec(geometry: GeometryKind, grains: usize, resolution: usize, seed: u64) -> SynthSpec {
    SynthSpec {
        geometry,
        grains,
        resolution,
        seed,
        ..Default::default()
    }
}

pub fn problem(spec: &SynthSpec) -> Problem {
    let mesh = generate_geometry(spec).unwrap();
    let y = simulate_data(&mesh, spec).unwrap().y;
    Problem::new(mesh, y, DesignOptions::default()).unwrap()
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Large-sample critical value c(α)·√((n+m)/(nm)); c(0.01) = 1.6276.
pub fn ks_critical_01(n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    1.6276 * ((n + m) / (n * m)).sqrt()
}

/// One-sample KS statistic against a continuous CDF.
pub fn ks_one_sample(x: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, v)| {
            let f = cdf(*v);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Streaming batch means: mean, variance and Monte Carlo standard error of
/// the mean for one scalar series.
#[derive(Clone, Debug)]
pub struct BatchMeans {
    batch: usize,
    cur: f64,
    in_cur: usize,
    means: Vec<f64>,
    sum: f64,
    sum2: f64,
    n: usize,
}

impl BatchMeans {
    pub fn new(batch: usize) -> Self {
        Self {
            batch,
            cur: 0.0,
            in_cur: 0,
            means: Vec::new(),
            sum: 0.0,
            sum2: 0.0,
            n: 0,
        }
    }

    pub fn push(&mut self, x: f64) {
        self.sum += x;
        self.sum2 += x * x;
        self.n += 1;
        self.cur += x;
        self.in_cur += 1;
        if self.in_cur == self.batch {
            self.means.push(self.cur / self.batch as f64);
            self.cur = 0.0;
            self.in_cur = 0;
        }
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }

    pub fn variance(&self) -> f64 {
        let n = self.n as f64;
        (self.sum2 - self.sum * self.sum / n) / (n - 1.0)
    }

    pub fn std_error(&self) -> f64 {
        let b = self.means.len() as f64;
        let m = self.means.iter().sum::<f64>() / b;
        let v = self.means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (b - 1.0);
        (v / b).sqrt()
    }
}
