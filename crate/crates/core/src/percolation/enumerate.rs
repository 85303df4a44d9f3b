use std::collections::{HashMap, HashSet};
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graphs::{FiniteGraph, GraphFamily, GraphWindow, Vertex, NO_GENERATOR};

use super::{ModelKind, PercolationModel};

/// Default guard on the number of visited partial shapes.
pub const DEFAULT_SHAPE_LIMIT: usize = 20_000_000;

#[derive(Clone, Debug)]
pub struct Shape {
    /// Cluster graph; vertex 0 is the anchor.
    pub graph: FiniteGraph,
    pub probability: f64,
}

#[derive(Clone, Debug)]
pub struct Enumeration {
    pub shapes: Vec<Shape>,
    /// `P(anchor has no cluster)`.
    pub absent: f64,
    /// Mass of all outcomes not listed: clusters above the size cap plus pruned shapes.
    pub remainder: f64,
}

impl Enumeration {
    pub fn listed_mass(&self) -> f64 {
        self.shapes.iter().map(|s| s.probability).sum()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EnumerationOptions {
    pub size_cap: usize,
    /// Shapes whose open elements already have probability below this are not extended.
    pub probability_floor: f64,
    pub shape_limit: usize,
}

impl EnumerationOptions {
    pub fn capped(size_cap: usize) -> Self {
        EnumerationOptions { size_cap, probability_floor: 0.0, shape_limit: DEFAULT_SHAPE_LIMIT }
    }
}

/// Redelmeier's algorithm: visits every connected element set containing `root` exactly once.
/// `visit` returns whether the set may be extended further.
fn redelmeier<E, N, V>(root: E, neighbors: N, mut visit: V, limit: usize) -> Result<()>
where
    E: Clone + Eq + Hash,
    N: Fn(&E) -> Vec<E>,
    V: FnMut(&[E]) -> bool,
{
    struct Ctx<'a, E, N, V> {
        neighbors: N,
        visit: &'a mut V,
        marked: HashSet<E>,
        current: Vec<E>,
        count: usize,
        limit: usize,
    }
    fn rec<E, N, V>(ctx: &mut Ctx<E, N, V>, mut untried: Vec<E>) -> Result<()>
    where
        E: Clone + Eq + Hash,
        N: Fn(&E) -> Vec<E>,
        V: FnMut(&[E]) -> bool,
    {
        while let Some(c) = untried.pop() {
            ctx.count += 1;
            if ctx.count > ctx.limit {
                return Err(Error::CombinatorialExplosion { limit: ctx.limit });
            }
            ctx.current.push(c.clone());
            if (ctx.visit)(&ctx.current) {
                let added: Vec<E> = (ctx.neighbors)(&c).into_iter().filter(|e| ctx.marked.insert(e.clone())).collect();
                let mut next = untried.clone();
                next.extend(added.iter().cloned());
                rec(ctx, next)?;
                for a in &added {
                    ctx.marked.remove(a);
                }
            }
            ctx.current.pop();
        }
        Ok(())
    }
    let mut ctx = Ctx { neighbors, visit: &mut visit, marked: HashSet::from([root.clone()]), current: Vec::new(), count: 0, limit };
    rec(&mut ctx, vec![root])
}

/// Every cluster shape of the anchor with at most `size_cap` vertices, with its exact
/// probability. Site and bond models run on the window; long-range models on `Z` directly.
pub fn enumerate_exact(window: &GraphWindow, model: &PercolationModel, anchor: &Vertex, opts: EnumerationOptions) -> Result<Enumeration> {
    model.validate(&window.family)?;
    let Some(a) = window.index_of(anchor) else {
        return invalid(format!("anchor {anchor} is not in the window"));
    };
    if opts.size_cap == 0 {
        return invalid("size cap must be positive");
    }
    match model.kind {
        ModelKind::Site { p } => {
            if window.boundary_distance(a) < opts.size_cap {
                return invalid("window too small: shapes up to the cap must stay off the boundary");
            }
            enumerate_site(window, a, p, opts)
        }
        ModelKind::Bond { p } => {
            if window.boundary_distance(a) < opts.size_cap {
                return invalid("window too small: shapes up to the cap must stay off the boundary");
            }
            enumerate_bond(window, a, p, opts)
        }
        ModelKind::LongRange { .. } => {
            let Vertex::Lattice(c) = anchor else { unreachable!() };
            enumerate_long_range(model, c[0], opts)
        }
    }
}

fn enumerate_site(window: &GraphWindow, a: usize, p: f64, opts: EnumerationOptions) -> Result<Enumeration> {
    let g = &window.graph;
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    let mut shapes = Vec::new();
    let mut in_set = vec![false; g.len()];
    redelmeier(
        a,
        |&v| g.neighbors(v).collect(),
        |set: &[usize]| {
            for &v in set {
                in_set[v] = true;
            }
            let mut boundary = HashSet::new();
            for &v in set {
                boundary.extend(g.neighbors(v).filter(|&w| !in_set[w]));
            }
            let log_open = set.len() as f64 * lp;
            let prob = (log_open + boundary.len() as f64 * lq).exp();
            let mut keep: Vec<usize> = set.to_vec();
            keep[1..].sort_unstable();
            shapes.push(Shape { graph: g.induced(&keep), probability: prob });
            for &v in set {
                in_set[v] = false;
            }
            set.len() < opts.size_cap && log_open.exp() >= opts.probability_floor
        },
        opts.shape_limit,
    )?;
    let absent = 1.0 - p;
    finish(shapes, absent)
}

fn enumerate_bond(window: &GraphWindow, a: usize, p: f64, opts: EnumerationOptions) -> Result<Enumeration> {
    let g = &window.graph;
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    let edge = |u: usize, v: usize| (u.min(v), u.max(v));
    // `None` is the virtual root standing for the anchor itself.
    type Elem = Option<(usize, usize)>;
    let incident = |v: usize| g.neighbors(v).map(move |w| Some(edge(v, w))).collect::<Vec<Elem>>();
    let mut shapes = Vec::new();
    redelmeier(
        None,
        |e: &Elem| match *e {
            None => incident(a),
            Some((u, v)) => {
                let mut out = incident(u);
                out.extend(incident(v));
                out
            }
        },
        |set: &[Elem]| {
            let edges: Vec<(usize, usize)> = set.iter().flatten().copied().collect();
            if edges.is_empty() {
                return true;
            }
            let mut verts = vec![a];
            for &(u, v) in &edges {
                for w in [u, v] {
                    if !verts.contains(&w) {
                        verts.push(w);
                    }
                }
            }
            if verts.len() > opts.size_cap {
                return false;
            }
            let vset: HashSet<usize> = verts.iter().copied().collect();
            let vset = &vset;
            let induced = verts.iter().flat_map(|&v| g.neighbors(v).filter(move |w| vset.contains(w) && *w > v)).count();
            let incident_total: usize = verts.iter().map(|&v| g.degree(v)).sum::<usize>() - induced;
            let closed = incident_total - edges.len();
            let log_open = edges.len() as f64 * lp;
            let prob = (log_open + closed as f64 * lq).exp();
            verts[1..].sort_unstable();
            shapes.push(Shape { graph: edge_subgraph(g, &verts, &edges), probability: prob });
            log_open.exp() >= opts.probability_floor
        },
        opts.shape_limit,
    )?;
    let absent = (1.0 - p).powi(g.degree(a) as i32);
    finish(shapes, absent)
}

fn edge_subgraph(g: &FiniteGraph, verts: &[usize], edges: &[(usize, usize)]) -> FiniteGraph {
    let local: HashMap<usize, usize> = verts.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut local_edges: Vec<(usize, usize, u16)> = edges
        .iter()
        .map(|&(u, v)| {
            let (lu, lv) = (local[&u], local[&v]);
            let (from, to) = if lu < lv { (u, v) } else { (v, u) };
            let gen = g.adjacency[from].iter().find(|n| n.to as usize == to).unwrap().generator;
            (lu.min(lv), lu.max(lv), gen)
        })
        .collect();
    local_edges.sort_unstable();
    let labels = verts.iter().map(|&v| g.labels[v].clone()).collect();
    let mut out = FiniteGraph::from_edges(labels, &local_edges, g.ambient_degree, |x| x);
    // Reverse generator labels from the stored forward ones.
    for (i, nb) in out.adjacency.iter_mut().enumerate() {
        for n in nb.iter_mut() {
            if (n.to as usize) < i {
                let (from, to) = (verts[i], verts[n.to as usize]);
                n.generator = g.adjacency[from].iter().find(|m| m.to as usize == to).unwrap().generator;
            }
        }
    }
    out
}

fn enumerate_long_range(model: &PercolationModel, x0: i64, opts: EnumerationOptions) -> Result<Enumeration> {
    let ModelKind::LongRange { beta, kernel, truncation } = model.kind else { unreachable!() };
    let k = truncation as i64;
    let log_open: Vec<f64> = (0..=truncation).map(|d| if d == 0 { 0.0 } else { model.bond_probability(d).ln() }).collect();
    let j: Vec<f64> = (0..=truncation).map(|d| if d == 0 { 0.0 } else { kernel.weight(d) }).collect();
    let reach_sum: f64 = 2.0 * j.iter().sum::<f64>();
    type Elem = Option<(i64, i64)>;
    let incident = |v: i64| (1..=k).flat_map(move |d| [Some((v - d, v)), Some((v, v + d))]).collect::<Vec<Elem>>();
    let mut shapes = Vec::new();
    redelmeier(
        None,
        |e: &Elem| match *e {
            None => incident(x0),
            Some((u, v)) => {
                let mut out = incident(u);
                out.extend(incident(v));
                out
            }
        },
        |set: &[Elem]| {
            let edges: Vec<(i64, i64)> = set.iter().flatten().copied().collect();
            if edges.is_empty() {
                return true;
            }
            let mut verts = vec![x0];
            for &(u, v) in &edges {
                for w in [u, v] {
                    if !verts.contains(&w) {
                        verts.push(w);
                    }
                }
            }
            if verts.len() > opts.size_cap {
                return false;
            }
            let open: f64 = edges.iter().map(|&(u, v)| log_open[(v - u) as usize]).sum();
            let mut inner = 0.0;
            for (i, &u) in verts.iter().enumerate() {
                for &v in &verts[i + 1..] {
                    let d = u.abs_diff(v);
                    if d <= truncation {
                        inner += j[d as usize];
                    }
                }
            }
            let open_j: f64 = edges.iter().map(|&(u, v)| j[(v - u) as usize]).sum();
            let closed_j = verts.len() as f64 * reach_sum - inner - open_j;
            let prob = (open - beta * closed_j).exp();
            verts[1..].sort_unstable();
            shapes.push(Shape { graph: long_range_graph(&verts, &edges), probability: prob });
            open.exp() >= opts.probability_floor
        },
        opts.shape_limit,
    )?;
    let absent = (-beta * reach_sum).exp();
    finish(shapes, absent)
}

fn long_range_graph(verts: &[i64], edges: &[(i64, i64)]) -> FiniteGraph {
    let local: HashMap<i64, usize> = verts.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut le: Vec<(usize, usize, u16)> = edges
        .iter()
        .map(|&(u, v)| {
            let (lu, lv) = (local[&u], local[&v]);
            let (lo, hi) = (lu.min(lv), lu.max(lv));
            let gen = if u.abs_diff(v) == 1 { if verts[hi] > verts[lo] { 0 } else { 1 } } else { NO_GENERATOR };
            (lo, hi, gen)
        })
        .collect();
    le.sort_unstable();
    let labels = verts.iter().map(|&x| Vertex::Lattice(vec![x])).collect();
    FiniteGraph::from_edges(labels, &le, None, |g| g ^ 1)
}

fn finish(shapes: Vec<Shape>, absent: f64) -> Result<Enumeration> {
    let listed: f64 = shapes.iter().map(|s| s.probability).sum();
    Ok(Enumeration { shapes, absent, remainder: (1.0 - absent - listed).max(0.0) })
}

/// `P(G' is a cluster)` together with the lower bound `exp(-b |G'|)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterProbability {
    /// Exact value; for long range, the value in the truncated model.
    pub value: f64,
    /// Interval for the untruncated model (equal to `value` for site and bond).
    pub lower: f64,
    pub upper: f64,
    /// `ln value` and `ln lower`, finite where the values underflow.
    pub ln_value: f64,
    pub ln_lower: f64,
    pub b: f64,
    pub bound: f64,
}

/// `count · ln x` with `0 · ln 0 = 0`.
fn xlny(count: usize, x: f64) -> f64 {
    if count == 0 {
        0.0
    } else {
        count as f64 * x.ln()
    }
}

/// Probability that the finite connected graph `shape` (labels in `family`) is exactly an
/// open cluster.
pub fn cluster_probability_exact(family: &GraphFamily, shape: &FiniteGraph, model: &PercolationModel) -> Result<ClusterProbability> {
    model.validate(family)?;
    if shape.is_empty() || !shape.is_connected() {
        return invalid("shape must be nonempty and connected");
    }
    let n = shape.len();
    let b = model.cluster_bound_constant(family);
    let bound = (-b * n as f64).exp();
    let labels: HashSet<&Vertex> = shape.labels.iter().collect();
    let k = family.degree();
    let exact = |ln: f64| {
        let value = ln.exp();
        Ok(ClusterProbability { value, lower: value, upper: value, ln_value: ln, ln_lower: ln, b, bound })
    };
    match model.kind {
        ModelKind::Site { p } => {
            let mut boundary = HashSet::new();
            for v in &shape.labels {
                for s in 0..k {
                    let w = family.step(v, s);
                    if !labels.contains(&w) {
                        boundary.insert(w);
                    }
                }
            }
            exact(xlny(n, p) + xlny(boundary.len(), 1.0 - p))
        }
        ModelKind::Bond { p } => {
            let mut induced = 0usize;
            for v in &shape.labels {
                induced += (0..k).filter(|&s| labels.contains(&family.step(v, s))).count();
            }
            let induced = induced / 2;
            let open = shape.edge_count();
            let closed = k * n - induced - open;
            exact(xlny(open, p) + xlny(closed, 1.0 - p))
        }
        ModelKind::LongRange { beta, kernel, truncation } => {
            let xs: Vec<i64> = shape
                .labels
                .iter()
                .map(|v| match v {
                    Vertex::Lattice(c) => c[0],
                    _ => unreachable!(),
                })
                .collect();
            let mut log_p = 0.0;
            let mut inner = 0.0;
            for (i, j, _) in shape.edges() {
                let d = xs[i].abs_diff(xs[j]);
                if d > truncation {
                    return invalid(format!("shape bond of length {d} exceeds truncation radius {truncation}"));
                }
                log_p += model.bond_probability(d).ln();
                inner += kernel.weight(d);
            }
            for i in 0..n {
                for j in i + 1..n {
                    let d = xs[i].abs_diff(xs[j]);
                    if d <= truncation {
                        inner += kernel.weight(d);
                    }
                }
            }
            let reach_sum: f64 = 2.0 * (1..=truncation).map(|d| kernel.weight(d)).sum::<f64>();
            let closed_j = n as f64 * reach_sum - inner;
            let ln_value = log_p - beta * closed_j;
            let value = ln_value.exp();
            let far = n as f64 * 2.0 * kernel.tail_upper(truncation);
            let ln_lower = ln_value - beta * far;
            Ok(ClusterProbability { value, lower: ln_lower.exp(), upper: value, ln_value, ln_lower, b, bound })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::{build_window, linear_subgraph};

    fn window(f: GraphFamily, r: usize) -> GraphWindow {
        build_window(f, f.identity(), r).unwrap()
    }

    const Z1: GraphFamily = GraphFamily::ZLattice { dim: 1 };
    const Z2: GraphFamily = GraphFamily::ZLattice { dim: 2 };

    #[test]
    fn z1_site_segments() {
        let w = window(Z1, 4);
        let p = 0.3;
        let e = enumerate_exact(&w, &PercolationModel::site(p), &Z1.identity(), EnumerationOptions::capped(3)).unwrap();
        // Segments of length m containing 0: m placements each.
        assert_eq!(e.shapes.len(), 1 + 2 + 3);
        for s in &e.shapes {
            let m = s.graph.len() as i32;
            assert!((s.probability - p.powi(m) * (1.0 - p).powi(2)).abs() < 1e-15);
        }
        let tail: f64 = (4..200).map(|m| m as f64 * p.powi(m) * (1.0 - p).powi(2)).sum();
        assert!((e.remainder - tail).abs() < 1e-12);
    }

    #[test]
    fn z2_isolated_site() {
        let w = window(Z2, 3);
        let p = 0.2;
        let e = enumerate_exact(&w, &PercolationModel::site(p), &Z2.identity(), EnumerationOptions::capped(3)).unwrap();
        let single = e.shapes.iter().find(|s| s.graph.len() == 1).unwrap();
        assert!((single.probability - p * (1.0 - p).powi(4)).abs() < 1e-15);
        // Lattice animals with ≤ 3 cells containing a fixed cell: 1 + 4 + 18.
        assert_eq!(e.shapes.len(), 23);
    }

    #[test]
    fn z1_bond_completeness() {
        let w = window(Z1, 6);
        let p = 0.4;
        let e = enumerate_exact(&w, &PercolationModel::bond(p), &Z1.identity(), EnumerationOptions::capped(5)).unwrap();
        let single: Vec<_> = e.shapes.iter().filter(|s| s.graph.len() == 2).collect();
        assert_eq!(single.len(), 2);
        for s in single {
            assert!((s.probability - p * (1.0 - p).powi(2)).abs() < 1e-15);
        }
        // Bond clusters on Z with m ≥ 2 vertices containing 0: m placements of m-1 open bonds.
        let tail: f64 = (6..400).map(|m| m as f64 * p.powi(m - 1) * (1.0 - p).powi(2)).sum();
        assert!((e.remainder - tail).abs() < 1e-12, "{} vs {}", e.remainder, tail);
        assert!((e.absent - 0.36).abs() < 1e-15);
    }

    #[test]
    fn probabilities_match_direct_formula() {
        let p = 0.5;
        let seg = linear_subgraph(Z1, 1).unwrap();
        let cp = cluster_probability_exact(&Z1, &seg, &PercolationModel::site(p)).unwrap();
        assert!((cp.value - 0.0625).abs() < 1e-15);
        assert!(cp.value >= cp.bound * (1.0 - 1e-12));
        let w = window(Z2, 5);
        for model in [PercolationModel::site(0.3), PercolationModel::bond(0.3)] {
            let e = enumerate_exact(&w, &model, &Z2.identity(), EnumerationOptions::capped(4)).unwrap();
            for s in &e.shapes {
                let cp = cluster_probability_exact(&Z2, &s.graph, &model).unwrap();
                assert!((cp.value - s.probability).abs() <= 1e-14, "{model}");
                assert!(cp.value >= cp.bound * (1.0 - 1e-12), "{model} {} {} {:?}", cp.value, cp.bound, s.graph.edges());
            }
        }
    }

    #[test]
    fn site_probability_one_has_no_finite_clusters() {
        let seg = linear_subgraph(Z2, 3).unwrap();
        let cp = cluster_probability_exact(&Z2, &seg, &PercolationModel::site(1.0)).unwrap();
        assert_eq!(cp.value, 0.0);
    }

    #[test]
    fn long_range_single_bond_interval() {
        let model = PercolationModel::long_range(0.1, crate::percolation::LongRangeKernel::Exp { c: std::f64::consts::LN_2 });
        let seg = linear_subgraph(Z1, 1).unwrap();
        let cp = cluster_probability_exact(&Z1, &seg, &model).unwrap();
        let q1 = 1.0 - (-0.05f64).exp();
        assert!(cp.lower <= cp.value && cp.value <= cp.upper);
        assert!(cp.value < q1);
        // Every other bond touching {0, 1} closed: total weight 2·2·Σ J - 2·J_1 on Z.
        let closed = (-0.1f64 * (4.0 * 1.0 - 2.0 * 0.5)).exp();
        assert!(cp.lower <= q1 * closed && q1 * closed <= cp.upper * (1.0 + 1e-9));
        assert!(cp.value >= cp.bound * (1.0 - 1e-12));
    }

    #[test]
    fn long_range_enumeration_matches_direct_probabilities() {
        let model = PercolationModel::long_range(0.1, crate::percolation::LongRangeKernel::Exp { c: std::f64::consts::LN_2 });
        let w = window(Z1, 2);
        let opts = EnumerationOptions { size_cap: 3, probability_floor: 1e-9, shape_limit: DEFAULT_SHAPE_LIMIT };
        let e = enumerate_exact(&w, &model, &Z1.identity(), opts).unwrap();
        assert!(!e.shapes.is_empty());
        for s in e.shapes.iter().take(200) {
            let cp = cluster_probability_exact(&Z1, &s.graph, &model).unwrap();
            assert!((cp.value - s.probability).abs() <= 1e-12 * s.probability.max(1e-300) + 1e-18);
        }
        assert!(e.remainder >= 0.0 && e.remainder < 0.05);
    }

    #[test]
    fn explosion_guard() {
        let w = window(Z2, 13);
        let opts = EnumerationOptions { size_cap: 12, probability_floor: 0.0, shape_limit: 1000 };
        let err = enumerate_exact(&w, &PercolationModel::site(0.3), &Z2.identity(), opts).unwrap_err();
        assert!(matches!(err, Error::CombinatorialExplosion { limit: 1000 }));
    }
}
