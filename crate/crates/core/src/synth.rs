//! Synthetic grain geometries and forward simulation from the model.
//!
//! Geometries are an n×n×n grid of cubes of side `cell_size`, each split into
//! six tetrahedra sharing the cube's main diagonal. The split is the same in
//! every cube, so the mesh is conformal. Grain labels are assigned per cube.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::design::{DesignOptions, KernelDesign};
use crate::error::{Error, Result};
use crate::gmrf::{FieldHyperparams, PrecisionMatrix, PrecisionPattern};
use crate::mesh::{build_neighborhoods, extract_boundaries, GrainMesh, Point3};
use crate::model::{scale_mixture_draw, ModelState};
use crate::rng::{stream, ChainRng};
use rand_distr::{Distribution, Normal};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeometryKind {
    SlabStack,
    VoronoiGrains,
    Cartoon3,
}

/// Generating parameter values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruthParams {
    /// Per-grain means; drawn from N(μ, τ²) when absent.
    pub mu_g: Option<Vec<f64>>,
    pub mu: f64,
    pub tau2: f64,
    pub hp_beta: FieldHyperparams,
    pub hp_gamma: FieldHyperparams,
    pub sigma2: f64,
    pub df: f64,
    /// Hold β and γ at zero instead of drawing them.
    pub zero_fields: bool,
}

impl Default for TruthParams {
    fn default() -> Self {
        Self {
            mu_g: None,
            mu: 300.0,
            tau2: 900.0,
            hp_beta: FieldHyperparams {
                nu: 0.0,
                theta: 0.05,
                kappa: 0.8,
                rho: 0.5,
                phi: 0.6,
            },
            hp_gamma: FieldHyperparams {
                nu: 0.0,
                theta: 0.05,
                kappa: 0.8,
                rho: 0.5,
                phi: 0.8,
            },
            sigma2: 4.0,
            df: 5.0,
            zero_fields: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub geometry: GeometryKind,
    pub grains: usize,
    /// Cubes per axis.
    pub resolution: usize,
    pub cell_size: f64,
    pub seed: u64,
    pub truth: TruthParams,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            geometry: GeometryKind::Cartoon3,
            grains: 3,
            resolution: 6,
            cell_size: 1.0,
            seed: 1,
            truth: TruthParams::default(),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let n = self.resolution;
        if self.grains < 2 {
            return Err(Error::Infeasible("need at least 2 grains".into()));
        }
        if !(self.cell_size > 0.0) {
            return Err(Error::Infeasible("cell size must be positive".into()));
        }
        match self.geometry {
            GeometryKind::SlabStack if n < self.grains => Err(Error::Infeasible(format!(
                "slab-stack with {} grains needs resolution ≥ {}",
                self.grains, self.grains
            ))),
            GeometryKind::Cartoon3 if self.grains != 3 => {
                Err(Error::Infeasible("cartoon3 has exactly 3 grains".into()))
            }
            GeometryKind::Cartoon3 if n < 2 || n % 2 != 0 => Err(Error::Infeasible(
                "cartoon3 needs an even resolution ≥ 2".into(),
            )),
            GeometryKind::VoronoiGrains if n * n * n < self.grains => Err(Error::Infeasible(
                format!("{} cells cannot hold {} grains", n * n * n, self.grains),
            )),
            _ => Ok(()),
        }
    }
}

/// Kuhn split of the unit cube: one tetrahedron per axis permutation.
const PERMS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

pub fn generate_geometry(spec: &SynthSpec) -> Result<GrainMesh> {
    spec.validate()?;
    let n = spec.resolution;
    let h = spec.cell_size;
    let np = n + 1;
    let node_id = |i: usize, j: usize, k: usize| (k * np + j) * np + i;
    let mut nodes = Vec::with_capacity(np * np * np);
    for k in 0..np {
        for j in 0..np {
            for i in 0..np {
                nodes.push([i as f64 * h, j as f64 * h, k as f64 * h]);
            }
        }
    }

    let labels = label_cells(spec)?;
    let mut elements = Vec::with_capacity(6 * n * n * n);
    let mut grains = Vec::with_capacity(6 * n * n * n);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let g = labels[(k * n + j) * n + i];
                for perm in PERMS {
                    let mut c = [i, j, k];
                    let mut tet = [node_id(c[0], c[1], c[2]); 4];
                    for (step, &axis) in perm.iter().enumerate() {
                        c[axis] += 1;
                        tet[step + 1] = node_id(c[0], c[1], c[2]);
                    }
                    elements.push(tet);
                    grains.push(g);
                }
            }
        }
    }
    GrainMesh::new(nodes, elements, grains, spec.grains)
}

fn label_cells(spec: &SynthSpec) -> Result<Vec<usize>> {
    let n = spec.resolution;
    let centre = |i: usize| i as f64 + 0.5;
    let mut labels = vec![0; n * n * n];
    match spec.geometry {
        GeometryKind::SlabStack => {
            for k in 0..n {
                let g = k * spec.grains / n;
                for c in 0..n * n {
                    labels[k * n * n + c] = g;
                }
            }
        }
        GeometryKind::Cartoon3 => {
            let mid = n as f64 / 2.0;
            let sector = 2.0 * std::f64::consts::PI / 3.0;
            for k in 0..n {
                for j in 0..n {
                    for i in 0..n {
                        let a = (centre(j) - mid).atan2(centre(i) - mid);
                        let a = if a < 0.0 { a + 2.0 * std::f64::consts::PI } else { a };
                        labels[(k * n + j) * n + i] = ((a / sector) as usize).min(2);
                    }
                }
            }
        }
        GeometryKind::VoronoiGrains => {
            let mut rng = stream(spec.seed, 0);
            let cells = n * n * n;
            let seeds: Vec<Point3> = sample(&mut rng, cells, spec.grains)
                .into_iter()
                .map(|c| [centre(c % n), centre((c / n) % n), centre(c / (n * n))])
                .collect();
            for k in 0..n {
                for j in 0..n {
                    for i in 0..n {
                        let p = [centre(i), centre(j), centre(k)];
                        let mut best = (f64::INFINITY, 0);
                        for (g, s) in seeds.iter().enumerate() {
                            let d = (0..3).map(|a| (p[a] - s[a]).powi(2)).sum::<f64>();
                            if d < best.0 {
                                best = (d, g);
                            }
                        }
                        labels[(k * n + j) * n + i] = best.1;
                    }
                }
            }
        }
    }
    let mut seen = vec![false; spec.grains];
    for &g in &labels {
        seen[g] = true;
    }
    if let Some(g) = seen.iter().position(|s| !s) {
        return Err(Error::Infeasible(format!("grain {} received no cells", g + 1)));
    }
    Ok(labels)
}

/// Simulated observations together with the generating state.
#[derive(Clone, Debug)]
pub struct SimulatedData {
    pub y: Vec<f64>,
    /// Generating state; `residual` holds the noise ε.
    pub truth: ModelState,
}

/// y = μ_{g(m)} + X_b β + X_c γ + ε with β, γ drawn from their GMRF priors
/// and ε from the Student-t scale mixture.
pub fn simulate_data(mesh: &GrainMesh, spec: &SynthSpec) -> Result<SimulatedData> {
    let mut rng = stream(spec.seed, 1);
    simulate_with_rng(mesh, &spec.truth, &mut rng)
}

pub fn simulate_with_rng(mesh: &GrainMesh, truth: &TruthParams, rng: &mut ChainRng) -> Result<SimulatedData> {
    let g_count = mesh.n_grains();
    if !(truth.sigma2 >= 0.0 && truth.tau2 >= 0.0 && truth.df > 0.0) {
        return Err(Error::BoundViolation("sigma2, tau2 ≥ 0 and df > 0 required".into()));
    }
    let bg = extract_boundaries(mesh)?;
    let graphs = build_neighborhoods(mesh, &bg);

    let mu_g = match &truth.mu_g {
        Some(m) if m.len() != g_count => {
            return Err(Error::Dimension {
                expected: g_count,
                got: m.len(),
            })
        }
        Some(m) => m.clone(),
        None => {
            let d = Normal::new(truth.mu, truth.tau2.sqrt())
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            (0..g_count).map(|_| d.sample(rng)).collect()
        }
    };

    let mut draw_field = |graph, hp: &FieldHyperparams| -> Result<Vec<f64>> {
        let pattern = PrecisionPattern::new(graph);
        let q = PrecisionMatrix::assemble(&pattern, hp)?;
        let factor = q.factor()?;
        if truth.zero_fields {
            return Ok(vec![0.0; q.dim()]);
        }
        Ok(factor.sample(&vec![hp.nu; q.dim()], rng))
    };
    let beta = draw_field(&graphs.second, &truth.hp_beta)?;
    let gamma = draw_field(&graphs.third, &truth.hp_gamma)?;

    let design = KernelDesign::build(
        mesh,
        &bg,
        truth.hp_beta.phi,
        truth.hp_gamma.phi,
        DesignOptions::default(),
    );
    let field = design.apply(&beta, &gamma)?;

    let m = mesh.n_elements();
    let mut omega = Vec::with_capacity(m);
    let mut eps = Vec::with_capacity(m);
    for _ in 0..m {
        let (e, w) = scale_mixture_draw(truth.df, truth.sigma2, rng);
        eps.push(e);
        omega.push(w);
    }
    let y = (0..m)
        .map(|e| mu_g[mesh.grain_of(e)] + field[e] + eps[e])
        .collect();
    Ok(SimulatedData {
        y,
        truth: ModelState {
            mu_g,
            mu: truth.mu,
            tau2: truth.tau2,
            beta,
            gamma,
            hp_beta: truth.hp_beta,
            hp_gamma: truth.hp_gamma,
            sigma2: truth.sigma2,
            omega,
            df: truth.df,
            residual: eps,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(geometry: GeometryKind, grains: usize, resolution: usize) -> SynthSpec {
        SynthSpec {
            geometry,
            grains,
            resolution,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn cartoon_has_junctions_in_every_grain() {
        let mesh = generate_geometry(&spec(GeometryKind::Cartoon3, 3, 2)).unwrap();
        assert_eq!(mesh.n_grains(), 3);
        let bg = extract_boundaries(&mesh).unwrap();
        for g in 0..3 {
            assert!(!bg.third.grain_nodes(g).is_empty());
        }
    }

    #[test]
    fn slabs_have_no_junctions() {
        let mesh = generate_geometry(&spec(GeometryKind::SlabStack, 2, 3)).unwrap();
        let bg = extract_boundaries(&mesh).unwrap();
        assert_eq!(bg.dim_gamma(), 0);
        assert_eq!(bg.second.grain_nodes(0).len(), 16);
    }

    #[test]
    fn voronoi_is_deterministic() {
        let s = spec(GeometryKind::VoronoiGrains, 5, 4);
        let a = generate_geometry(&s).unwrap();
        let b = generate_geometry(&s).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        assert_eq!(a.n_grains(), 5);
    }

    #[test]
    fn infeasible_specs() {
        assert!(matches!(
            generate_geometry(&spec(GeometryKind::SlabStack, 5, 3)),
            Err(Error::Infeasible(_))
        ));
        assert!(generate_geometry(&spec(GeometryKind::Cartoon3, 3, 3)).is_err());
        assert!(generate_geometry(&spec(GeometryKind::VoronoiGrains, 9, 2)).is_err());
        assert!(generate_geometry(&spec(GeometryKind::SlabStack, 1, 3)).is_err());
    }

    #[test]
    fn noiseless_constant_field() {
        let mut s = spec(GeometryKind::Cartoon3, 3, 2);
        s.truth.sigma2 = 0.0;
        s.truth.zero_fields = true;
        s.truth.mu_g = Some(vec![1.0, 2.0, 3.0]);
        let mesh = generate_geometry(&s).unwrap();
        let sim = simulate_data(&mesh, &s).unwrap();
        for (e, y) in sim.y.iter().enumerate() {
            assert_eq!(*y, (mesh.grain_of(e) + 1) as f64);
        }
    }

    #[test]
    fn simulation_is_pure() {
        let s = spec(GeometryKind::Cartoon3, 3, 2);
        let mesh = generate_geometry(&s).unwrap();
        assert_eq!(simulate_data(&mesh, &s).unwrap().y, simulate_data(&mesh, &s).unwrap().y);
    }

    #[test]
    fn inadmissible_truth_is_rejected() {
        let mut s = spec(GeometryKind::Cartoon3, 3, 2);
        s.truth.hp_beta.kappa = 1.5;
        let mesh = generate_geometry(&s).unwrap();
        assert!(simulate_data(&mesh, &s).is_err());
    }
}
