use std::collections::HashMap;

use nalgebra::DVector;
use proptest::prelude::*;

use perclap::graphs::{build_window, growth_table, linear_subgraph, tetrahedron, word_length, FiniteGraph, GraphFamily, GraphWindow, Vertex};
use perclap::ids::{ids_percolation, log_grid};
use perclap::operators::{assemble, OperatorKind, TransitionKernel};
use perclap::percolation::{cluster_probability_exact, enumerate_exact, EnumerationOptions, PercolationModel, Sampler};
use perclap::rng::{sample_rng, SampleStream};
use perclap::spectra::bounds::{cheeger, faber_krahn};
use perclap::spectra::{count_leq, dense_values, lowest, lowest_eigenvalue, rayleigh_quotient};
use perclap::walks::{exact_matvec, return_probabilities, WalkMethod};

const FAMILIES: [&str; 9] = ["z:1", "z:2", "z:3", "tree:3", "tree:4", "lamplighter:2", "lamplighter:3", "lamplighter:2:std", "heisenberg"];

fn family() -> impl Strategy<Value = GraphFamily> {
    prop::sample::select(FAMILIES.to_vec()).prop_map(|s| s.parse().unwrap())
}

fn small_radius(f: &GraphFamily) -> usize {
    match f {
        GraphFamily::ZLattice { dim: 1 } => 30,
        GraphFamily::ZLattice { .. } => 6,
        GraphFamily::Heisenberg => 4,
        _ => 4,
    }
}

fn vertex_of(f: &GraphFamily, word: &[usize]) -> Vertex {
    word.iter().fold(f.identity(), |v, &s| f.step(&v, s % f.degree()))
}

fn random_vector(n: usize, seed: u64) -> Vec<f64> {
    use rand::Rng;
    let mut rng = sample_rng(seed, 0);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Subcritical-looking sampler settings per family.
fn site_p(f: &GraphFamily) -> f64 {
    match f {
        GraphFamily::ZLattice { dim: 1 } => 0.6,
        _ => 0.9 / (f.degree() as f64 - 1.0),
    }
}

fn sample_clusters(f: GraphFamily, radius: usize, model: PercolationModel, seed: u64, count: u64) -> Vec<FiniteGraph> {
    let w = build_window(f, f.identity(), radius).unwrap();
    let s = Sampler::new(&w, model.declare_subcritical()).unwrap();
    (0..count).filter_map(|i| s.sample(0, &mut sample_rng(seed, i)).map(|c| s.cluster_graph(&c))).collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn window_sizes_match_the_growth_table(f in family(), r in 0usize..4) {
        let r = r.min(small_radius(&f));
        let w = build_window(f, f.identity(), r).unwrap();
        prop_assert_eq!(w.len() as u64, growth_table(f, r).unwrap().volume(r as i64).unwrap());
        prop_assert!(w.graph.is_symmetric());
    }

    #[test]
    fn group_operations_agree_with_words(
        f in family(),
        a in prop::collection::vec(0usize..16, 0..12),
        b in prop::collection::vec(0usize..16, 0..12),
    ) {
        let (va, vb) = (vertex_of(&f, &a), vertex_of(&f, &b));
        let ab: Vec<usize> = a.iter().chain(&b).copied().collect();
        prop_assert_eq!(f.mul(&va, &vb), vertex_of(&f, &ab));
        prop_assert_eq!(f.mul(&va, &f.inverse(&va)), f.identity());
        for s in 0..f.degree() {
            prop_assert_eq!(f.step(&f.step(&va, s), f.inverse_generator(s)), va.clone());
        }
        let text = serde_json::to_string(&va).unwrap();
        prop_assert_eq!(serde_json::from_str::<Vertex>(&text).unwrap(), va);
    }

    #[test]
    fn linear_subgraphs_are_geodesic(f in family(), n in 1usize..12) {
        let g = linear_subgraph(f, n).unwrap();
        prop_assert_eq!(g.len(), n + 1);
        let target = f.mul(&f.inverse(&g.labels[0]), &g.labels[n]);
        prop_assert_eq!(word_length(&f, &target, n + 1).unwrap(), n);
    }

    #[test]
    fn tetrahedra_have_the_expected_size(m in 2u32..4, n in 1usize..6) {
        let t = tetrahedron(m, n).unwrap();
        prop_assert_eq!(t.len(), (n + 1) * (m as usize).pow(n as u32));
        prop_assert!((0..t.len()).all(|i| t.graph.degree(i) <= 2 * m as usize));
        prop_assert!(t.graph.is_symmetric());
    }

    #[test]
    fn samples_depend_only_on_seed_and_index(f in family(), seed in any::<u64>(), i in 0u64..1000) {
        let w = build_window(f, f.identity(), small_radius(&f).min(3)).unwrap();
        let s = Sampler::new(&w, PercolationModel::bond(0.4).declare_subcritical()).unwrap();
        let first = s.sample(0, &mut sample_rng(seed, i));
        // Consuming other streams in between changes nothing.
        let _ = s.sample(0, &mut sample_rng(seed, i + 1));
        prop_assert_eq!(first, s.sample(0, &mut sample_rng(seed, i)));
    }

    #[test]
    fn enumerated_mass_is_complete(p in 0.05f64..0.95, bond in any::<bool>(), cap in 1usize..6) {
        let f = GraphFamily::ZLattice { dim: 2 };
        let w = build_window(f, f.identity(), 6).unwrap();
        let model = if bond { PercolationModel::bond(p) } else { PercolationModel::site(p) };
        let e = enumerate_exact(&w, &model, &f.identity(), EnumerationOptions::capped(cap)).unwrap();
        prop_assert!((e.listed_mass() + e.absent + e.remainder - 1.0).abs() < 1e-12);
        for s in &e.shapes {
            let cp = cluster_probability_exact(&f, &s.graph, &model).unwrap();
            prop_assert!((cp.value - s.probability).abs() <= 1e-12 * s.probability.max(1e-300));
            prop_assert!(cp.value >= cp.bound * (1.0 - 1e-12), "{} < {}", cp.value, cp.bound);
        }
    }

    #[test]
    fn cluster_probability_matches_brute_force(p in 0.05f64..0.95, bond in any::<bool>()) {
        let f = GraphFamily::ZLattice { dim: 2 };
        let w = build_window(f, f.identity(), 2).unwrap();
        let model = if bond { PercolationModel::bond(p) } else { PercolationModel::site(p) };
        let shapes = brute_force_clusters(&w, p, bond);
        prop_assert!(shapes.len() > 5);
        for (shape, prob) in shapes {
            let cp = cluster_probability_exact(&f, &shape, &model).unwrap();
            prop_assert!((cp.value - prob).abs() <= 1e-12 * prob, "{} vs {}", cp.value, prob);
        }
    }

    #[test]
    fn quadratic_forms_are_ordered(f in family(), seed in any::<u64>()) {
        let clusters = sample_clusters(f, small_radius(&f).min(5), PercolationModel::site(site_p(&f)), seed, 20);
        for (ci, g) in clusters.iter().enumerate() {
            let ops: Vec<_> = [OperatorKind::N, OperatorKind::A, OperatorKind::D].iter().map(|&k| assemble(g, k, None).unwrap()).collect();
            let dense: Vec<_> = ops.iter().map(|o| o.to_dense()).collect();
            // H^A - H^N = W = H^D - H^A, with W diagonal and nonnegative.
            let w1 = &dense[1] - &dense[0];
            let w2 = &dense[2] - &dense[1];
            prop_assert!((&w1 - &w2).abs().max() == 0.0);
            for i in 0..g.len() {
                for j in 0..g.len() {
                    let ok = if i == j { w1[(i, j)] >= 0.0 } else { w1[(i, j)] == 0.0 };
                    prop_assert!(ok);
                }
            }
            for t in 0..10 {
                let phi = random_vector(g.len(), seed ^ (ci as u64 * 16 + t));
                let q: Vec<f64> = ops.iter().map(|o| o.quadratic_form(&phi).unwrap()).collect();
                let norm2: f64 = phi.iter().map(|x| x * x).sum();
                for (o, d) in ops.iter().zip(&dense) {
                    let v = DVector::from_vec(phi.clone());
                    let m = v.dot(&(d * &v));
                    prop_assert!((o.quadratic_form(&phi).unwrap() - m).abs() <= 1e-10 * o.norm_bound() * norm2);
                }
                prop_assert!(q[0] <= q[1] + 1e-12 * norm2 && q[1] <= q[2] + 1e-12 * norm2);
            }
        }
    }

    #[test]
    fn kernels_are_sandwiched(weights in prop::collection::vec(0.05f64..3.0, 2), seed in any::<u64>()) {
        let f = GraphFamily::ZLattice { dim: 2 };
        // Generators come in inverse pairs.
        let raw: Vec<f64> = (0..4).map(|s| weights[s.min(f.inverse_generator(s)) % 2]).collect();
        let kernel = TransitionKernel::from_weights(f, &raw).unwrap();
        let (lo, hi) = (kernel.min_weight(), kernel.max_weight());
        for (ci, g) in sample_clusters(f, 6, PercolationModel::site(0.45), seed, 20).iter().enumerate() {
            let form = |k| assemble(g, k, Some(&kernel)).unwrap();
            let (hn, ha, hp, hr) = (form(OperatorKind::N), form(OperatorKind::A), form(OperatorKind::P), form(OperatorKind::R));
            for t in 0..10 {
                let phi = random_vector(g.len(), seed ^ (ci as u64 * 16 + t));
                let eps = 1e-12 * phi.iter().map(|x| x * x).sum::<f64>();
                let (a, p) = (ha.quadratic_form(&phi).unwrap(), hp.quadratic_form(&phi).unwrap());
                prop_assert!(lo * a <= p + eps && p <= hi * a + eps);
                let (n, r) = (hn.quadratic_form(&phi).unwrap(), hr.quadratic_form(&phi).unwrap());
                prop_assert!(lo * n <= r + eps && r <= hi * n + eps);
            }
        }
    }

    #[test]
    fn rayleigh_quotients_dominate_the_ground_state(f in family(), seed in any::<u64>()) {
        for g in sample_clusters(f, small_radius(&f).min(5), PercolationModel::site(site_p(&f)), seed, 10) {
            for kind in [OperatorKind::A, OperatorKind::D] {
                let op = assemble(&g, kind, None).unwrap();
                let l = lowest_eigenvalue(&op).unwrap();
                let phi = random_vector(g.len(), seed);
                prop_assert!(rayleigh_quotient(&op, &phi).unwrap() >= l - 1e-9 * op.norm_bound());
            }
        }
    }

    #[test]
    fn counts_are_monotone_in_energy(seed in any::<u64>()) {
        let f = GraphFamily::ZLattice { dim: 2 };
        let grid = log_grid(1e-3, 8.0, 30).unwrap();
        for g in sample_clusters(f, 8, PercolationModel::site(0.5), seed, 5) {
            let op = assemble(&g, OperatorKind::N, None).unwrap();
            let counts: Vec<usize> = grid.iter().map(|&e| count_leq(&op, e).unwrap().count).collect();
            prop_assert!(counts.windows(2).all(|w| w[0] <= w[1]));
            prop_assert_eq!(*counts.last().unwrap(), g.len());
        }
    }

    #[test]
    fn bound_checkers_hold_on_sampled_clusters(f in family(), seed in any::<u64>()) {
        let radius = small_radius(&f).min(5);
        let table = growth_table(f, 2 * radius + 2).unwrap();
        for (i, g) in sample_clusters(f, radius, PercolationModel::site(site_p(&f)), seed, 30).iter().enumerate() {
            let name = format!("sample{i}");
            prop_assert!(faber_krahn(g, &table, &name).unwrap().holds);
            if g.len() >= 2 {
                prop_assert!(cheeger(g, &name).unwrap().holds);
            }
        }
    }

    #[test]
    fn rescaled_kernels_give_the_same_curve(weights in prop::collection::vec(0.1f64..2.0, 2), scale in 0.1f64..10.0) {
        let f = GraphFamily::ZLattice { dim: 2 };
        let raw: Vec<f64> = (0..4).map(|s| weights[s.min(f.inverse_generator(s)) % 2]).collect();
        let scaled: Vec<f64> = raw.iter().map(|w| w * scale).collect();
        let w = build_window(f, f.identity(), 6).unwrap();
        let s = Sampler::new(&w, PercolationModel::site(0.4).declare_subcritical()).unwrap();
        let grid = log_grid(1e-3, 2.0, 12).unwrap();
        let stream = SampleStream::new(5, 500);
        let curve = |raw: &[f64]| {
            let k = TransitionKernel::from_weights(f, raw).unwrap();
            ids_percolation(&s, 0, &[OperatorKind::P], Some(&k), &grid, &stream).unwrap().curves.remove(0)
        };
        let (a, b) = (curve(&raw), curve(&scaled));
        for (x, y) in a.points.iter().zip(&b.points) {
            prop_assert!((x.n - y.n).abs() <= 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn weyl_ordering_holds_per_sample(f in family(), seed in any::<u64>()) {
        let w = build_window(f, f.identity(), small_radius(&f).min(5)).unwrap();
        let s = Sampler::new(&w, PercolationModel::site(site_p(&f)).declare_subcritical()).unwrap();
        let grid = log_grid(1e-3, 4.0 * f.degree() as f64, 25).unwrap();
        let kinds = [OperatorKind::N, OperatorKind::A, OperatorKind::D];
        let run = ids_percolation(&s, 0, &kinds, None, &grid, &SampleStream::new(seed, 300)).unwrap();
        prop_assert!(run.weyl_checks > 0);
        prop_assert_eq!(run.weyl_violations, 0);
    }

    #[test]
    fn lanczos_matches_the_dense_low_end(seed in any::<u64>()) {
        let f = GraphFamily::ZLattice { dim: 2 };
        let big: Vec<_> = sample_clusters(f, 20, PercolationModel::site(0.58), seed, 200)
            .into_iter()
            .filter(|g| (200..=1000).contains(&g.len()))
            .take(2)
            .collect();
        prop_assert!(!big.is_empty());
        for g in big {
            let op = assemble(&g, OperatorKind::D, None).unwrap();
            let dense = dense_values(&op);
            let low = lowest(&op, 5, 1e-10).unwrap();
            for (a, b) in low.values.iter().zip(&dense) {
                prop_assert!((a - b).abs() <= 1e-8 * op.norm_bound(), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn walks_are_window_independent_and_even_monotone(f in family()) {
        let n_max = match f {
            GraphFamily::ZLattice { .. } | GraphFamily::Heisenberg => 16,
            _ => 10,
        };
        let a = exact_matvec(f, n_max, n_max / 2).unwrap();
        let b = exact_matvec(f, n_max, n_max).unwrap();
        prop_assert_eq!(&a, &b);
        let s = return_probabilities(f, n_max, WalkMethod::ExactMatvec).unwrap();
        prop_assert!(s.even_monotonicity_violations().is_empty());
    }
}

#[test]
fn z1_walk_is_window_independent_to_forty_steps() {
    let f = GraphFamily::ZLattice { dim: 1 };
    assert_eq!(exact_matvec(f, 40, 20).unwrap(), exact_matvec(f, 40, 40).unwrap());
}

/// `P(C_0 = G')` for every cluster shape inside `B(1)`, by summing over all configurations of
/// the window (sites, or bonds of the induced graph).
fn brute_force_clusters(w: &GraphWindow, p: f64, bond: bool) -> Vec<(FiniteGraph, f64)> {
    let g = &w.graph;
    let edges = g.edges();
    let units = if bond { edges.len() } else { g.len() };
    assert!(units <= 20);
    let mut mass: HashMap<(Vec<usize>, Vec<usize>), f64> = HashMap::new();
    for config in 0u32..(1 << units) {
        let open = |u: usize| config >> u & 1 == 1;
        if !bond && !open(0) {
            continue;
        }
        let ones = config.count_ones() as i32;
        let prob = p.powi(ones) * (1.0 - p).powi(units as i32 - ones);
        let mut seen = vec![false; g.len()];
        seen[0] = true;
        let mut stack = vec![0];
        let mut used = Vec::new();
        while let Some(v) = stack.pop() {
            for (ei, &(a, b, _)) in edges.iter().enumerate() {
                if a != v && b != v {
                    continue;
                }
                let u = if a == v { b } else { a };
                let passable = if bond { open(ei) } else { open(u) };
                if passable {
                    if bond && !used.contains(&ei) {
                        used.push(ei);
                    }
                    if !seen[u] {
                        seen[u] = true;
                        stack.push(u);
                    }
                }
            }
        }
        let verts: Vec<usize> = (0..g.len()).filter(|&i| seen[i]).collect();
        if verts.iter().any(|&i| w.dist[i] > 1) {
            continue;
        }
        if !bond {
            used = (0..edges.len()).filter(|&e| seen[edges[e].0] && seen[edges[e].1]).collect();
        }
        used.sort_unstable();
        *mass.entry((verts, used)).or_default() += prob;
    }
    mass.into_iter()
        .map(|((verts, used), prob)| {
            let local: HashMap<usize, usize> = verts.iter().enumerate().map(|(i, &v)| (v, i)).collect();
            let es: Vec<(usize, usize, u16)> = used.iter().map(|&e| (local[&edges[e].0], local[&edges[e].1], edges[e].2)).collect();
            let labels = verts.iter().map(|&v| g.labels[v].clone()).collect();
            let fam = w.family;
            (FiniteGraph::from_edges(labels, &es, g.ambient_degree, |s| fam.inverse_generator(s as usize) as u16), prob)
        })
        .collect()
}
