mod common;

use std::collections::{BTreeMap, BTreeSet};

use grainfield::gmrf::rho_bounds;
use grainfield::mesh::{build_neighborhoods, extract_boundaries, triangle_area, GrainMesh};
use grainfield::synth::{generate_geometry, GeometryKind};
use proptest::prelude::*;

use common::spec;

fn geometries() -> Vec<GrainMesh> {
    [
        spec(GeometryKind::Cartoon3, 3, 4, 1),
        spec(GeometryKind::SlabStack, 3, 3, 1),
        spec(GeometryKind::VoronoiGrains, 5, 3, 2),
    ]
    .iter()
    .map(|s| generate_geometry(s).unwrap())
    .collect()
}

/// Faces shared by elements of different grains, by brute force over all
/// element pairs.
fn brute_interfaces(mesh: &GrainMesh) -> BTreeSet<([usize; 3], usize)> {
    let faces = |t: &[usize; 4]| {
        [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]].map(|f| {
            let mut v = f.map(|i| t[i]);
            v.sort_unstable();
            v
        })
    };
    let mut out = BTreeSet::new();
    let els = mesh.elements();
    for a in 0..els.len() {
        for b in a + 1..els.len() {
            if mesh.grain_of(a) == mesh.grain_of(b) {
                continue;
            }
            for fa in faces(&els[a]) {
                if faces(&els[b]).contains(&fa) {
                    out.insert((fa, mesh.grain_of(a)));
                    out.insert((fa, mesh.grain_of(b)));
                }
            }
        }
    }
    out
}

#[test]
fn second_order_sets_match_brute_force() {
    for mesh in geometries() {
        let bg = extract_boundaries(&mesh).unwrap();
        let faces = brute_interfaces(&mesh);
        let mut expect: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (f, g) in &faces {
            let area = triangle_area(mesh.nodes()[f[0]], mesh.nodes()[f[1]], mesh.nodes()[f[2]]);
            for v in f {
                *expect.entry((*g, *v)).or_default() += area / 3.0;
            }
        }
        assert_eq!(bg.dim_beta(), expect.len());
        for (p, ((g, v), w)) in expect.iter().enumerate() {
            assert_eq!(bg.second.grain(p), *g);
            assert_eq!(bg.second.node(p), *v);
            assert!((bg.second.weight(p) - w).abs() <= 1e-12 * w);
        }
    }
}

#[test]
fn area_weights_sum_to_interface_area() {
    for mesh in geometries() {
        let bg = extract_boundaries(&mesh).unwrap();
        for g in 0..mesh.n_grains() {
            let area: f64 = bg
                .faces
                .iter()
                .filter(|f| f.grains.contains(&g))
                .map(|f| f.area)
                .sum();
            let weights: f64 = bg.second.grain_range(g).map(|p| bg.second.weight(p)).sum();
            assert!((weights - area).abs() <= 1e-12 * area.max(1.0));
        }
    }
}

#[test]
fn junctions_are_subsets_with_positive_weights() {
    for mesh in geometries() {
        let bg = extract_boundaries(&mesh).unwrap();
        for g in 0..mesh.n_grains() {
            let b: BTreeSet<_> = bg.second.grain_nodes(g).iter().collect();
            assert!(bg.third.grain_nodes(g).iter().all(|v| b.contains(v)));
        }
        assert!(bg.second.weights().iter().chain(bg.third.weights()).all(|w| *w > 0.0));
    }
}

#[test]
fn cartoon_triple_line() {
    let mesh = generate_geometry(&spec(GeometryKind::Cartoon3, 3, 4, 1)).unwrap();
    let bg = extract_boundaries(&mesh).unwrap();
    let graphs = build_neighborhoods(&mesh, &bg);
    let mut owners: BTreeMap<usize, usize> = BTreeMap::new();
    for p in 0..bg.dim_gamma() {
        *owners.entry(bg.third.node(p)).or_default() += 1;
    }
    assert!(!owners.is_empty() && owners.values().all(|&c| c == 3));
    // each triple-line node has two between-grain neighbors in both fields
    for p in 0..bg.dim_gamma() {
        assert_eq!(graphs.third.between_count(p), 2);
        let v = bg.third.node(p);
        let q = bg.second.index_of(bg.third.grain(p), v).unwrap();
        assert_eq!(graphs.second.between_count(q), 2);
    }
}

#[test]
fn graphs_match_pairwise_scan() {
    for mesh in geometries() {
        let bg = extract_boundaries(&mesh).unwrap();
        let graphs = build_neighborhoods(&mesh, &bg);
        for (layout, graph) in [(&bg.second, &graphs.second), (&bg.third, &graphs.third)] {
            let n = layout.dim();
            for p in 0..n {
                let mut within = Vec::new();
                let mut between = Vec::new();
                for q in 0..n {
                    if q == p {
                        continue;
                    }
                    let (gp, gq) = (layout.grain(p), layout.grain(q));
                    let (vp, vq) = (layout.node(p), layout.node(q));
                    if gp == gq {
                        let shared = mesh
                            .elements()
                            .iter()
                            .enumerate()
                            .any(|(e, t)| mesh.grain_of(e) == gp && t.contains(&vp) && t.contains(&vq));
                        if shared {
                            within.push(q);
                        }
                    } else if vp == vq {
                        between.push(q);
                    }
                }
                assert_eq!(graph.within(p), &within[..]);
                assert_eq!(graph.between(p), &between[..]);
            }
        }
    }
}

#[test]
fn neighborhoods_are_symmetric_and_disjoint() {
    for mesh in geometries() {
        let bg = extract_boundaries(&mesh).unwrap();
        let graphs = build_neighborhoods(&mesh, &bg);
        for (layout, g) in [(&bg.second, &graphs.second), (&bg.third, &graphs.third)] {
            for p in 0..g.dim() {
                assert!(!g.within(p).contains(&p) && !g.between(p).contains(&p));
                for &q in g.within(p) {
                    assert!(g.within(q).contains(&p));
                    assert!(!g.between(p).contains(&q));
                }
                for &q in g.between(p) {
                    assert!(g.between(q).contains(&p));
                }
                let v = layout.node(p);
                let others = (0..mesh.n_grains())
                    .filter(|&h| h != layout.grain(p) && layout.index_of(h, v).is_some())
                    .count();
                assert_eq!(g.between_count(p), others);
            }
        }
    }
}

#[test]
fn rho_bound_is_the_exhaustive_minimum() {
    let mesh = generate_geometry(&spec(GeometryKind::Cartoon3, 3, 4, 1)).unwrap();
    let bg = extract_boundaries(&mesh).unwrap();
    let g = build_neighborhoods(&mesh, &bg).second;
    let mut best = f64::INFINITY;
    for p in 0..g.dim() {
        if g.between_count(p) > 0 {
            best = best.min(g.within_count(p) as f64 / g.between_count(p) as f64);
        }
    }
    assert_eq!(rho_bounds(&g).lower, Some(-best));
    let slab = generate_geometry(&spec(GeometryKind::SlabStack, 2, 2, 1)).unwrap();
    let bg = extract_boundaries(&slab).unwrap();
    assert_eq!(rho_bounds(&build_neighborhoods(&slab, &bg).third).lower, None);
}

fn permutation(n: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut grainfield::rng::seeded(seed));
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn extraction_is_invariant_to_relabeling(seed in any::<u64>()) {
        let mesh = generate_geometry(&spec(GeometryKind::VoronoiGrains, 4, 3, 3)).unwrap();
        let bg = extract_boundaries(&mesh).unwrap();

        let node_perm = permutation(mesh.n_nodes(), seed);
        let elem_perm = permutation(mesh.n_elements(), seed ^ 0x9e37);
        let mut nodes = vec![[0.0; 3]; mesh.n_nodes()];
        for (old, &new) in node_perm.iter().enumerate() {
            nodes[new] = mesh.nodes()[old];
        }
        let elements: Vec<[usize; 4]> = elem_perm.iter().map(|&e| mesh.elements()[e].map(|v| node_perm[v])).collect();
        let grains: Vec<usize> = elem_perm.iter().map(|&e| mesh.grain_of(e)).collect();
        let moved = GrainMesh::new(nodes, elements, grains, mesh.n_grains()).unwrap();
        let bg2 = extract_boundaries(&moved).unwrap();

        let as_map = |layout: &grainfield::mesh::FieldLayout, relabel: &dyn Fn(usize) -> usize| {
            (0..layout.dim())
                .map(|p| ((layout.grain(p), relabel(layout.node(p))), layout.weight(p)))
                .collect::<BTreeMap<_, _>>()
        };
        let a = as_map(&bg.second, &|v| node_perm[v]);
        let b = as_map(&bg2.second, &|v| v);
        prop_assert_eq!(a.len(), b.len());
        for (k, w) in &a {
            prop_assert!((b[k] - w).abs() <= 1e-12 * w);
        }
        let a = as_map(&bg.third, &|v| node_perm[v]);
        let b = as_map(&bg2.third, &|v| v);
        prop_assert_eq!(a.len(), b.len());
        for (k, w) in &a {
            prop_assert!((b[k] - w).abs() <= 1e-12 * w);
        }
    }

    #[test]
    fn centroids_translate_with_the_mesh(dx in -5.0f64..5.0, dy in -5.0f64..5.0, dz in -5.0f64..5.0) {
        let mesh = generate_geometry(&spec(GeometryKind::SlabStack, 2, 2, 1)).unwrap();
        let nodes: Vec<_> = mesh.nodes().iter().map(|p| [p[0] + dx, p[1] + dy, p[2] + dz]).collect();
        let moved = GrainMesh::new(nodes, mesh.elements().to_vec(), mesh.grains().to_vec(), mesh.n_grains()).unwrap();
        for (a, b) in mesh.centroids().iter().zip(moved.centroids()) {
            prop_assert!((b[0] - a[0] - dx).abs() < 1e-12);
            prop_assert!((b[1] - a[1] - dy).abs() < 1e-12);
            prop_assert!((b[2] - a[2] - dz).abs() < 1e-12);
        }
    }
}

#[test]
fn centroid_matches_recomputation() {
    let mesh = generate_geometry(&spec(GeometryKind::Cartoon3, 3, 2, 1)).unwrap();
    let t = mesh.elements()[0];
    let c = mesh.centroid(0);
    for k in 0..3 {
        let expect = t.iter().map(|&v| mesh.nodes()[v][k]).sum::<f64>() / 4.0;
        assert!((c[k] - expect).abs() < 1e-15);
    }
}

#[test]
fn mesh_file_round_trip() {
    let mesh = generate_geometry(&spec(GeometryKind::VoronoiGrains, 3, 2, 5)).unwrap();
    let dir = std::env::temp_dir().join(format!("grainfield-mesh-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("m.txt");
    mesh.write(&path).unwrap();
    let back = grainfield::mesh::load_mesh(&path).unwrap();
    std::fs::remove_dir_all(&dir).ok();
    assert_eq!(back.elements(), mesh.elements());
    assert_eq!(back.grains(), mesh.grains());
    for (a, b) in back.nodes().iter().zip(mesh.nodes()) {
        assert_eq!(a, b);
    }
}
