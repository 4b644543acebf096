//! Grain-labeled tetrahedral meshes and the boundary structures derived from
//! them.
//!
//! Grain ids are 1-based in files and 0-based everywhere in memory.
//!
//! Mesh text format (whitespace-delimited, UTF-8):
//!
//! ```text
//! nodes N elements M grains G
//! x y z            # N lines
//! n0 n1 n2 n3 g    # M lines, 0-based node indices, 1-based grain id
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub type Point3 = [f64; 3];

/// Local vertex triples of the four faces of a tetrahedron.
const TET_FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]];
const TET_EDGES: [[usize; 2]; 6] = [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]];

#[derive(Clone, Debug, PartialEq)]
pub struct GrainMesh {
    nodes: Vec<Point3>,
    elements: Vec<[usize; 4]>,
    grain_of_element: Vec<usize>,
    n_grains: usize,
}

impl GrainMesh {
    /// Builds and validates a mesh. `grain_of_element` holds 0-based grain ids.
    pub fn new(
        nodes: Vec<Point3>,
        elements: Vec<[usize; 4]>,
        grain_of_element: Vec<usize>,
        n_grains: usize,
    ) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::Validation("mesh has no elements".into()));
        }
        if grain_of_element.len() != elements.len() {
            return Err(Error::Dimension {
                expected: elements.len(),
                got: grain_of_element.len(),
            });
        }
        let scale = bbox_diagonal(&nodes).max(f64::MIN_POSITIVE);
        let mut seen = vec![false; n_grains];
        for (e, (tet, &g)) in elements.iter().zip(&grain_of_element).enumerate() {
            for (i, &a) in tet.iter().enumerate() {
                if a >= nodes.len() {
                    return Err(Error::Validation(format!(
                        "element {e} references node {a} but only {} nodes exist",
                        nodes.len()
                    )));
                }
                if tet[..i].contains(&a) {
                    return Err(Error::Validation(format!(
                        "element {e} repeats node {a}"
                    )));
                }
            }
            if g >= n_grains {
                return Err(Error::Validation(format!(
                    "element {e} has grain id {} outside 1..={n_grains}",
                    g + 1
                )));
            }
            seen[g] = true;
            let vol = signed_volume(tet.map(|i| nodes[i]));
            if vol.abs() <= 1e-12 * scale.powi(3) {
                return Err(Error::Validation(format!(
                    "element {e} has zero volume"
                )));
            }
        }
        if let Some(g) = seen.iter().position(|s| !s) {
            return Err(Error::Validation(format!("grain {} has no elements", g + 1)));
        }
        Ok(Self {
            nodes,
            elements,
            grain_of_element,
            n_grains,
        })
    }

    pub fn nodes(&self) -> &[Point3] {
        &self.nodes
    }

    pub fn elements(&self) -> &[[usize; 4]] {
        &self.elements
    }

    /// 0-based grain id of every element.
    pub fn grains(&self) -> &[usize] {
        &self.grain_of_element
    }

    pub fn grain_of(&self, element: usize) -> usize {
        self.grain_of_element[element]
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_grains(&self) -> usize {
        self.n_grains
    }

    /// Element indices of each grain, ascending.
    pub fn elements_by_grain(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_grains];
        for (e, &g) in self.grain_of_element.iter().enumerate() {
            out[g].push(e);
        }
        out
    }

    pub fn centroid(&self, element: usize) -> Point3 {
        let tet = self.elements[element];
        let mut c = [0.0; 3];
        for &i in &tet {
            for k in 0..3 {
                c[k] += self.nodes[i][k];
            }
        }
        c.map(|v| v / 4.0)
    }

    pub fn centroids(&self) -> Vec<Point3> {
        (0..self.n_elements()).map(|e| self.centroid(e)).collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

        let (hline, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "empty mesh file".into(),
        })?;
        let tok: Vec<&str> = header.split_whitespace().collect();
        if tok.len() != 6 || tok[0] != "nodes" || tok[2] != "elements" || tok[4] != "grains" {
            return Err(Error::Parse {
                line: hline,
                message: "expected `nodes N elements M grains G`".into(),
            });
        }
        let n_nodes: usize = parse_num(tok[1], hline)?;
        let n_elements: usize = parse_num(tok[3], hline)?;
        let n_grains: usize = parse_num(tok[5], hline)?;

        let mut nodes = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            let (ln, l) = lines.next().ok_or(Error::Parse {
                line: hline,
                message: format!("expected {n_nodes} node lines"),
            })?;
            let v: Vec<f64> = l
                .split_whitespace()
                .map(|t| parse_num(t, ln))
                .collect::<Result<_>>()?;
            if v.len() != 3 {
                return Err(Error::Parse {
                    line: ln,
                    message: "node line needs 3 coordinates".into(),
                });
            }
            nodes.push([v[0], v[1], v[2]]);
        }

        let mut elements = Vec::with_capacity(n_elements);
        let mut grains = Vec::with_capacity(n_elements);
        for _ in 0..n_elements {
            let (ln, l) = lines.next().ok_or(Error::Parse {
                line: hline,
                message: format!("expected {n_elements} element lines"),
            })?;
            let v: Vec<usize> = l
                .split_whitespace()
                .map(|t| parse_num(t, ln))
                .collect::<Result<_>>()?;
            if v.len() != 5 {
                return Err(Error::Parse {
                    line: ln,
                    message: "element line needs 4 node indices and a grain id".into(),
                });
            }
            if v[4] == 0 {
                return Err(Error::Validation(format!(
                    "line {ln}: grain ids are 1-based"
                )));
            }
            elements.push([v[0], v[1], v[2], v[3]]);
            grains.push(v[4] - 1);
        }
        if let Some((ln, _)) = lines.next() {
            return Err(Error::Parse {
                line: ln,
                message: "trailing content after element list".into(),
            });
        }
        Self::new(nodes, elements, grains, n_grains)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "nodes {} elements {} grains {}",
            self.n_nodes(),
            self.n_elements(),
            self.n_grains
        );
        for p in &self.nodes {
            // {:?} on f64 round-trips exactly
            let _ = writeln!(s, "{:?} {:?} {:?}", p[0], p[1], p[2]);
        }
        for (t, g) in self.elements.iter().zip(&self.grain_of_element) {
            let _ = writeln!(s, "{} {} {} {} {}", t[0], t[1], t[2], t[3], g + 1);
        }
        s
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

fn parse_num<T: std::str::FromStr>(tok: &str, line: usize) -> Result<T> {
    tok.parse().map_err(|_| Error::Parse {
        line,
        message: format!("cannot parse `{tok}`"),
    })
}

pub fn load_mesh(path: impl AsRef<Path>) -> Result<GrainMesh> {
    let text = std::fs::read_to_string(path)?;
    GrainMesh::parse(&text)
}

pub fn centroids(mesh: &GrainMesh) -> Vec<Point3> {
    mesh.centroids()
}

pub fn signed_volume(p: [Point3; 4]) -> f64 {
    let a = sub(p[1], p[0]);
    let b = sub(p[2], p[0]);
    let c = sub(p[3], p[0]);
    dot(a, cross(b, c)) / 6.0
}

pub fn distance(a: Point3, b: Point3) -> f64 {
    let d = sub(a, b);
    dot(d, d).sqrt()
}

pub fn triangle_area(a: Point3, b: Point3, c: Point3) -> f64 {
    let n = cross(sub(b, a), sub(c, a));
    0.5 * dot(n, n).sqrt()
}

fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: Point3, b: Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: Point3, b: Point3) -> Point3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn bbox_diagonal(nodes: &[Point3]) -> f64 {
    if nodes.is_empty() {
        return 0.0;
    }
    let mut lo = nodes[0];
    let mut hi = nodes[0];
    for p in nodes {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    distance(lo, hi)
}

/// Per-grain boundary node sets flattened into one latent-field index space.
///
/// Index `p` runs over grains ascending, then node index ascending within the
/// grain. A node shared by k grains occupies k indices.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldLayout {
    grain_offsets: Vec<usize>,
    nodes: Vec<usize>,
    weights: Vec<f64>,
    grains: Vec<usize>,
}

impl FieldLayout {
    /// Builds a layout from `(grain, node) -> weight`; the map's ordering is
    /// exactly the flattened ordering.
    pub fn from_weights(n_grains: usize, weights: &BTreeMap<(usize, usize), f64>) -> Self {
        let mut grain_offsets = vec![0; n_grains + 1];
        let mut nodes = Vec::with_capacity(weights.len());
        let mut ws = Vec::with_capacity(weights.len());
        let mut grains = Vec::with_capacity(weights.len());
        for (&(g, v), &w) in weights {
            grain_offsets[g + 1] += 1;
            nodes.push(v);
            ws.push(w);
            grains.push(g);
        }
        for g in 0..n_grains {
            grain_offsets[g + 1] += grain_offsets[g];
        }
        Self {
            grain_offsets,
            nodes,
            weights: ws,
            grains,
        }
    }

    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_grains(&self) -> usize {
        self.grain_offsets.len() - 1
    }

    pub fn grain_range(&self, g: usize) -> std::ops::Range<usize> {
        self.grain_offsets[g]..self.grain_offsets[g + 1]
    }

    /// Mesh node index n(p).
    pub fn node(&self, p: usize) -> usize {
        self.nodes[p]
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    /// Boundary nodes of grain `g`, ascending.
    pub fn grain_nodes(&self, g: usize) -> &[usize] {
        &self.nodes[self.grain_range(g)]
    }

    pub fn weight(&self, p: usize) -> f64 {
        self.weights[p]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn grain(&self, p: usize) -> usize {
        self.grains[p]
    }

    pub fn index_of(&self, g: usize, node: usize) -> Option<usize> {
        let r = self.grain_range(g);
        self.nodes[r.clone()]
            .binary_search(&node)
            .ok()
            .map(|i| r.start + i)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InterfaceFace {
    pub nodes: [usize; 3],
    pub grains: [usize; 2],
    pub area: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct JunctionEdge {
    pub nodes: [usize; 2],
    pub grains: Vec<usize>,
    pub length: f64,
}

/// Second-order (`B_g`, area-weighted) and third-order (`C_g`,
/// length-weighted) boundary node sets.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryGeometry {
    pub second: FieldLayout,
    pub third: FieldLayout,
    pub faces: Vec<InterfaceFace>,
    pub edges: Vec<JunctionEdge>,
}

impl BoundaryGeometry {
    pub fn dim_beta(&self) -> usize {
        self.second.dim()
    }

    pub fn dim_gamma(&self) -> usize {
        self.third.dim()
    }

    /// Sorted, deduplicated mesh nodes lying on any second- or third-order
    /// boundary.
    pub fn boundary_nodes(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.second.nodes().to_vec();
        v.extend_from_slice(self.third.nodes());
        v.sort_unstable();
        v.dedup();
        v
    }
}

pub fn extract_boundaries(mesh: &GrainMesh) -> Result<BoundaryGeometry> {
    let nodes = mesh.nodes();
    let scale = bbox_diagonal(nodes);

    let mut faces: Vec<([usize; 3], usize)> = Vec::with_capacity(4 * mesh.n_elements());
    for (e, tet) in mesh.elements().iter().enumerate() {
        for lf in TET_FACES {
            let mut f = lf.map(|i| tet[i]);
            f.sort_unstable();
            faces.push((f, e));
        }
    }
    faces.sort_unstable();

    let mut interface = Vec::new();
    let mut exposed: Vec<[usize; 3]> = Vec::new();
    let mut i = 0;
    while i < faces.len() {
        let mut j = i + 1;
        while j < faces.len() && faces[j].0 == faces[i].0 {
            j += 1;
        }
        let f = faces[i].0;
        match j - i {
            1 => exposed.push(f),
            2 => {
                let (ga, gb) = (mesh.grain_of(faces[i].1), mesh.grain_of(faces[i + 1].1));
                if ga != gb {
                    let area = triangle_area(nodes[f[0]], nodes[f[1]], nodes[f[2]]);
                    if area <= 1e-12 * scale * scale {
                        return Err(Error::DegenerateBoundary {
                            kind: "face",
                            nodes: f.to_vec(),
                        });
                    }
                    interface.push(InterfaceFace {
                        nodes: f,
                        grains: [ga.min(gb), ga.max(gb)],
                        area,
                    });
                }
            }
            k => {
                return Err(Error::Validation(format!(
                    "face {f:?} is shared by {k} elements"
                )))
            }
        }
        i = j;
    }
    check_conformal(nodes, &exposed, scale)?;

    let mut edges: Vec<([usize; 2], usize)> = Vec::with_capacity(6 * mesh.n_elements());
    for (e, tet) in mesh.elements().iter().enumerate() {
        for le in TET_EDGES {
            let mut ed = le.map(|i| tet[i]);
            ed.sort_unstable();
            edges.push((ed, mesh.grain_of(e)));
        }
    }
    edges.sort_unstable();
    edges.dedup();

    let mut junction = Vec::new();
    let mut i = 0;
    while i < edges.len() {
        let mut j = i + 1;
        while j < edges.len() && edges[j].0 == edges[i].0 {
            j += 1;
        }
        if j - i >= 3 {
            let ed = edges[i].0;
            let length = distance(nodes[ed[0]], nodes[ed[1]]);
            if length <= 1e-12 * scale {
                return Err(Error::DegenerateBoundary {
                    kind: "edge",
                    nodes: ed.to_vec(),
                });
            }
            junction.push(JunctionEdge {
                nodes: ed,
                grains: edges[i..j].iter().map(|x| x.1).collect(),
                length,
            });
        }
        i = j;
    }

    let mut area_w: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for f in &interface {
        for &g in &f.grains {
            for &v in &f.nodes {
                *area_w.entry((g, v)).or_insert(0.0) += f.area / 3.0;
            }
        }
    }
    let mut len_w: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for ed in &junction {
        for &g in &ed.grains {
            for &v in &ed.nodes {
                *len_w.entry((g, v)).or_insert(0.0) += ed.length / 2.0;
            }
        }
    }

    Ok(BoundaryGeometry {
        second: FieldLayout::from_weights(mesh.n_grains(), &area_w),
        third: FieldLayout::from_weights(mesh.n_grains(), &len_w),
        faces: interface,
        edges: junction,
    })
}

/// Rejects meshes where two exposed faces coincide geometrically but use
/// different node indices (a crack that should have been a shared face).
fn check_conformal(nodes: &[Point3], exposed: &[[usize; 3]], scale: f64) -> Result<()> {
    let tol = 1e-9 * scale.max(f64::MIN_POSITIVE);
    let q = |p: Point3| p.map(|x| (x / tol).round() as i64);
    let mut keys: Vec<([[i64; 3]; 3], [usize; 3])> = exposed
        .iter()
        .map(|f| {
            let mut k = f.map(|i| q(nodes[i]));
            k.sort_unstable();
            (k, *f)
        })
        .collect();
    keys.sort_unstable();
    for w in keys.windows(2) {
        if w[0].0 == w[1].0 && w[0].1 != w[1].1 {
            return Err(Error::NonConformal(format!(
                "faces {:?} and {:?} coincide but do not share nodes",
                w[0].1, w[1].1
            )));
        }
    }
    Ok(())
}

/// Within-grain and between-grain neighbors of every index of one latent
/// field.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborhoodGraph {
    within: Vec<Vec<usize>>,
    between: Vec<Vec<usize>>,
}

impl NeighborhoodGraph {
    /// Two indices of grain g are within-grain neighbors when their nodes are
    /// vertices of a common element of grain g. Between-grain neighbors share
    /// a node and belong to different grains.
    pub fn build(mesh: &GrainMesh, layout: &FieldLayout) -> Self {
        let n = layout.dim();
        let mut within: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (e, tet) in mesh.elements().iter().enumerate() {
            let g = mesh.grain_of(e);
            let idx: Vec<usize> = tet.iter().filter_map(|&v| layout.index_of(g, v)).collect();
            for (a, &p) in idx.iter().enumerate() {
                for &q in &idx[a + 1..] {
                    within[p].push(q);
                    within[q].push(p);
                }
            }
        }
        for w in &mut within {
            w.sort_unstable();
            w.dedup();
        }

        let mut by_node: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for p in 0..n {
            by_node.entry(layout.node(p)).or_default().push(p);
        }
        let mut between: Vec<Vec<usize>> = vec![Vec::new(); n];
        for group in by_node.values() {
            for &p in group {
                between[p] = group.iter().copied().filter(|&q| q != p).collect();
            }
        }
        Self { within, between }
    }

    pub fn from_lists(within: Vec<Vec<usize>>, between: Vec<Vec<usize>>) -> Result<Self> {
        if within.len() != between.len() {
            return Err(Error::Dimension {
                expected: within.len(),
                got: between.len(),
            });
        }
        Ok(Self { within, between })
    }

    pub fn dim(&self) -> usize {
        self.within.len()
    }

    pub fn within(&self, p: usize) -> &[usize] {
        &self.within[p]
    }

    pub fn between(&self, p: usize) -> &[usize] {
        &self.between[p]
    }

    /// |B_{g(p), v_n(p)}|
    pub fn within_count(&self, p: usize) -> usize {
        self.within[p].len()
    }

    /// |G_{g(p), v_n(p)}|
    pub fn between_count(&self, p: usize) -> usize {
        self.between[p].len()
    }
}

/// Neighborhood graphs for the second-order (beta) and third-order (gamma)
/// fields.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryGraphs {
    pub second: NeighborhoodGraph,
    pub third: NeighborhoodGraph,
}

pub fn build_neighborhoods(mesh: &GrainMesh, bg: &BoundaryGeometry) -> BoundaryGraphs {
    BoundaryGraphs {
        second: NeighborhoodGraph::build(mesh, &bg.second),
        third: NeighborhoodGraph::build(mesh, &bg.third),
    }
}
