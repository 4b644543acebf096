//! Exponential-kernel quadrature design matrices.
//!
//! `[X]_{m,p} = exp(-φ d(c_m, v_{n(p)})) Δ_p` when element m and index p belong
//! to the same grain, zero otherwise. The matrix is stored as one dense block
//! per grain (the grain's elements × the grain's boundary indices).

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{distance, BoundaryGeometry, FieldLayout, GrainMesh, Point3};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DesignOptions {
    /// Keep the centroid-to-node distance blocks in memory. When off,
    /// distances are recomputed on every φ change.
    pub cache_distances: bool,
    /// Zero out kernel values below this threshold.
    pub truncate_below: Option<f64>,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self {
            cache_distances: true,
            truncate_below: None,
        }
    }
}

#[derive(Clone, Debug)]
struct GrainBlock {
    rows: Vec<usize>,
    cols: Range<usize>,
    weights: Vec<f64>,
    centroids: Vec<Point3>,
    nodes: Vec<Point3>,
    distances: Option<DMatrix<f64>>,
    values: DMatrix<f64>,
}

impl GrainBlock {
    fn distance_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows.len(), self.cols.len(), |i, j| {
            distance(self.centroids[i], self.nodes[j])
        })
    }

    fn fill(&mut self, phi: f64, truncate: Option<f64>) {
        let owned;
        let d = match &self.distances {
            Some(d) => d,
            None => {
                owned = self.distance_matrix();
                &owned
            }
        };
        let eps = truncate.unwrap_or(0.0);
        let (nr, nc) = d.shape();
        self.values = DMatrix::from_fn(nr, nc, |i, j| {
            let k = (-phi * d[(i, j)]).exp();
            if k < eps {
                0.0
            } else {
                k * self.weights[j]
            }
        });
    }
}

/// Design matrix of one latent field.
#[derive(Clone, Debug)]
pub struct FieldDesign {
    n_rows: usize,
    n_cols: usize,
    phi: f64,
    options: DesignOptions,
    blocks: Vec<GrainBlock>,
}

impl FieldDesign {
    pub fn build(mesh: &GrainMesh, layout: &FieldLayout, phi: f64, options: DesignOptions) -> Self {
        let by_grain = mesh.elements_by_grain();
        let centroids = mesh.centroids();
        let blocks = by_grain
            .into_par_iter()
            .enumerate()
            .map(|(g, rows)| {
                let cols = layout.grain_range(g);
                let mut block = GrainBlock {
                    centroids: rows.iter().map(|&e| centroids[e]).collect(),
                    nodes: cols.clone().map(|p| mesh.nodes()[layout.node(p)]).collect(),
                    weights: cols.clone().map(|p| layout.weight(p)).collect(),
                    rows,
                    cols,
                    distances: None,
                    values: DMatrix::zeros(0, 0),
                };
                if options.cache_distances {
                    block.distances = Some(block.distance_matrix());
                }
                block.fill(phi, options.truncate_below);
                block
            })
            .collect();
        Self {
            n_rows: mesh.n_elements(),
            n_cols: layout.dim(),
            phi,
            options,
            blocks,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn rebuild_for_phi(&self, phi: f64) -> Self {
        let mut out = self.clone();
        out.set_phi(phi);
        out
    }

    pub fn set_phi(&mut self, phi: f64) {
        if phi == self.phi {
            return;
        }
        let truncate = self.options.truncate_below;
        self.blocks.par_iter_mut().for_each(|b| b.fill(phi, truncate));
        self.phi = phi;
    }

    /// Element rows of grain `g`.
    pub fn grain_rows(&self, g: usize) -> &[usize] {
        &self.blocks[g].rows
    }

    pub fn grain_block(&self, g: usize) -> &DMatrix<f64> {
        &self.blocks[g].values
    }

    pub fn entry(&self, m: usize, p: usize) -> f64 {
        for b in &self.blocks {
            if b.cols.contains(&p) {
                return match b.rows.binary_search(&m) {
                    Ok(i) => b.values[(i, p - b.cols.start)],
                    Err(_) => 0.0,
                };
            }
        }
        0.0
    }

    pub fn column(&self, p: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_rows];
        for b in self.blocks.iter().filter(|b| b.cols.contains(&p)) {
            let j = p - b.cols.start;
            for (i, &m) in b.rows.iter().enumerate() {
                out[m] = b.values[(i, j)];
            }
        }
        out
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n_cols]; self.n_rows];
        for b in &self.blocks {
            for (i, &m) in b.rows.iter().enumerate() {
                for j in 0..b.cols.len() {
                    d[m][b.cols.start + j] = b.values[(i, j)];
                }
            }
        }
        d
    }

    /// Blocks overlapping `range`, with the overlapping local column span.
    fn overlapping(&self, range: &Range<usize>) -> impl Iterator<Item = (&GrainBlock, Range<usize>)> {
        let range = range.clone();
        self.blocks.iter().filter_map(move |b| {
            let lo = b.cols.start.max(range.start);
            let hi = b.cols.end.min(range.end);
            (lo < hi && !b.rows.is_empty()).then(|| (b, lo - b.cols.start..hi - b.cols.start))
        })
    }

    /// out += sign · X[:, range] · coef, where `coef` is indexed relative to
    /// `range.start`.
    pub fn accumulate(&self, range: Range<usize>, coef: &[f64], sign: f64, out: &mut [f64]) {
        for (b, local) in self.overlapping(&range) {
            let off = b.cols.start + local.start - range.start;
            let c = &coef[off..off + local.len()];
            let sub = b.values.columns(local.start, local.len());
            for (i, &m) in b.rows.iter().enumerate() {
                let mut s = 0.0;
                for (j, cj) in c.iter().enumerate() {
                    s += sub[(i, j)] * cj;
                }
                out[m] += sign * s;
            }
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_rows];
        self.accumulate(0..self.n_cols, x, 1.0, &mut out);
        out
    }

    /// X_sᵀ diag(w) X_s for the columns in `range`.
    pub fn cross_product(&self, range: Range<usize>, w: &[f64]) -> DMatrix<f64> {
        let n = range.len();
        let mut out = DMatrix::zeros(n, n);
        for (b, local) in self.overlapping(&range) {
            let off = b.cols.start + local.start - range.start;
            let mut scaled = b.values.columns(local.start, local.len()).into_owned();
            for (i, &m) in b.rows.iter().enumerate() {
                let s = w[m].sqrt();
                scaled.row_mut(i).scale_mut(s);
            }
            let gram = scaled.transpose() * &scaled;
            out.view_mut((off, off), (local.len(), local.len()))
                .copy_from(&gram);
        }
        out
    }

    /// X_sᵀ diag(w) r for the columns in `range`.
    pub fn weighted_transpose_mul(&self, range: Range<usize>, w: &[f64], r: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(range.len());
        for (b, local) in self.overlapping(&range) {
            let off = b.cols.start + local.start - range.start;
            let wr = DVector::from_iterator(b.rows.len(), b.rows.iter().map(|&m| w[m] * r[m]));
            let sub = b.values.columns(local.start, local.len());
            let v = sub.tr_mul(&wr);
            out.rows_mut(off, local.len()).copy_from(&v);
        }
        out
    }
}

/// Design matrices for both latent fields.
#[derive(Clone, Debug)]
pub struct KernelDesign {
    pub second: FieldDesign,
    pub third: FieldDesign,
}

pub fn build_design(
    mesh: &GrainMesh,
    bg: &BoundaryGeometry,
    phi_beta: f64,
    phi_gamma: f64,
) -> KernelDesign {
    KernelDesign::build(mesh, bg, phi_beta, phi_gamma, DesignOptions::default())
}

impl KernelDesign {
    pub fn build(
        mesh: &GrainMesh,
        bg: &BoundaryGeometry,
        phi_beta: f64,
        phi_gamma: f64,
        options: DesignOptions,
    ) -> Self {
        Self {
            second: FieldDesign::build(mesh, &bg.second, phi_beta, options),
            third: FieldDesign::build(mesh, &bg.third, phi_gamma, options),
        }
    }

    pub fn rebuild_for_phi(&self, phi_beta: f64, phi_gamma: f64) -> Self {
        Self {
            second: self.second.rebuild_for_phi(phi_beta),
            third: self.third.rebuild_for_phi(phi_gamma),
        }
    }

    /// X_b β + X_c γ
    pub fn apply(&self, beta: &[f64], gamma: &[f64]) -> Result<Vec<f64>> {
        if beta.len() != self.second.n_cols() {
            return Err(Error::Dimension {
                expected: self.second.n_cols(),
                got: beta.len(),
            });
        }
        if gamma.len() != self.third.n_cols() {
            return Err(Error::Dimension {
                expected: self.third.n_cols(),
                got: gamma.len(),
            });
        }
        let mut out = self.second.mul_vec(beta);
        self.third.accumulate(0..gamma.len(), gamma, 1.0, &mut out);
        Ok(out)
    }
}

pub fn apply(design: &KernelDesign, beta: &[f64], gamma: &[f64]) -> Result<Vec<f64>> {
    design.apply(beta, gamma)
}
