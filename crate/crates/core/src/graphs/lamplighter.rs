use std::collections::{HashMap, HashSet};

use crate::error::{invalid, Error, Result};

use super::{induced_subgraph, FiniteGraph, GraphFamily, LampGenerators, LampState, Vertex};

/// A vertex of one of the two m-ary trees of the horocyclic product, given by its
/// Busemann level and its address below the level-0 base vertex.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TreeVertex {
    pub level: i64,
    pub address: Vec<u32>,
}

/// The tetrahedron `K_n` of the lamplighter horocyclic product `DL(m, m)`.
#[derive(Clone, Debug)]
pub struct Tetrahedron {
    pub m: u32,
    pub n: usize,
    /// `(x1, x2)` with `level(x1) + level(x2) = 0`.
    pub pairs: Vec<(TreeVertex, TreeVertex)>,
    /// Adjacency with lamplighter labels `(φ, x)` under the `S0` generators.
    pub graph: FiniteGraph,
    pub inner_boundary: Vec<bool>,
}

impl Tetrahedron {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn family(&self) -> GraphFamily {
        GraphFamily::Lamplighter { m: self.m, generators: LampGenerators::S0 }
    }
}

fn digits(mut idx: usize, len: usize, m: usize) -> Vec<u32> {
    let mut out = vec![0u32; len];
    for d in out.iter_mut().rev() {
        *d = (idx % m) as u32;
        idx /= m;
    }
    out
}

fn to_index(d: &[u32], m: usize) -> usize {
    d.iter().fold(0, |acc, &x| acc * m + x as usize)
}

/// Builds `K_n` from the tree-pair description. Level `j` of the first tree carries the
/// lamps at cells `1..=j`; the second tree carries cells `n, n-1, ..., j+1`.
pub fn tetrahedron(m: u32, n: usize) -> Result<Tetrahedron> {
    if m < 2 || n < 1 {
        return invalid("tetrahedron needs m >= 2 and n >= 1");
    }
    let mu = m as usize;
    let budget = super::vertex_budget();
    let size = (n as u32 + 1) as f64 * (m as f64).powi(n as i32);
    if size > budget as f64 {
        return Err(Error::Budget { budget, what: format!("tetrahedron K_{n} with m = {m}") });
    }
    let layer = mu.pow(n as u32);
    let offset = |j: usize| j * layer;
    let mut pairs = Vec::with_capacity(layer * (n + 1));
    let mut labels = Vec::with_capacity(layer * (n + 1));
    for j in 0..=n {
        for ai in 0..mu.pow(j as u32) {
            let a = digits(ai, j, mu);
            for bi in 0..mu.pow((n - j) as u32) {
                let b = digits(bi, n - j, mu);
                let mut st = LampState::identity();
                for (i, &v) in a.iter().enumerate() {
                    st.add_lamp(i as i64 + 1, v, m);
                }
                for (t, &v) in b.iter().enumerate() {
                    st.add_lamp((n - t) as i64, v, m);
                }
                st.pos = j as i64;
                labels.push(Vertex::Lamplighter(st));
                pairs.push((
                    TreeVertex { level: j as i64, address: a.clone() },
                    TreeVertex { level: -(j as i64), address: b },
                ));
            }
        }
    }
    let family = GraphFamily::Lamplighter { m, generators: LampGenerators::S0 };
    let mut edges = Vec::new();
    for j in 0..n {
        for ai in 0..mu.pow(j as u32) {
            for bi in 0..mu.pow((n - j) as u32) {
                let from = offset(j) + ai * mu.pow((n - j) as u32) + bi;
                let b = digits(bi, n - j, mu);
                let (last, rest) = b.split_last().unwrap();
                for c in 0..mu {
                    let to = offset(j + 1) + (ai * mu + c) * mu.pow((n - j - 1) as u32) + to_index(rest, mu);
                    let l = (c + mu - *last as usize) % mu;
                    edges.push((from, to, l as u16));
                }
            }
        }
    }
    let graph = FiniteGraph::from_edges(labels, &edges, Some(2 * mu), |g| family.inverse_generator(g as usize) as u16);
    let inner_boundary = pairs.iter().map(|(x1, _)| x1.level == 0 || x1.level == n as i64).collect();
    Ok(Tetrahedron { m, n, pairs, graph, inner_boundary })
}

/// Word length of `target` in `family`, searching up to `max_radius`.
pub fn word_length(family: &GraphFamily, target: &Vertex, max_radius: usize) -> Result<usize> {
    let mut seen: HashSet<Vertex> = HashSet::from([family.identity()]);
    let mut frontier = vec![family.identity()];
    for r in 0..=max_radius {
        if frontier.contains(target) {
            return Ok(r);
        }
        let mut next = Vec::new();
        for v in &frontier {
            for s in 0..family.degree() {
                let w = family.step(v, s);
                if seen.insert(w.clone()) {
                    next.push(w);
                }
            }
        }
        frontier = next;
    }
    Err(Error::OutOfRange { value: max_radius as f64 + 1.0, limit: max_radius as f64 })
}

/// `R₀`: the largest `S`-word length of an `S0` generator.
pub fn thickening_radius(family: &GraphFamily) -> Result<usize> {
    let GraphFamily::Lamplighter { m, .. } = *family else {
        return invalid("thickening is defined for lamplighter families");
    };
    let s0 = GraphFamily::Lamplighter { m, generators: LampGenerators::S0 };
    (0..s0.degree()).map(|g| word_length(family, &s0.generator(g), 8)).try_fold(0, |acc, l| Ok(acc.max(l?)))
}

/// `V_{n,R}`: the union of the `S`-balls of radius `R` around the tetrahedron's vertices,
/// as an induced subgraph of the `S` Cayley graph. Tetrahedron vertices come first.
pub fn thicken(family: GraphFamily, tet: &Tetrahedron, radius: usize) -> Result<FiniteGraph> {
    let GraphFamily::Lamplighter { m, .. } = family else {
        return invalid("thickening is defined for lamplighter families");
    };
    if m != tet.m {
        return invalid(format!("tetrahedron has m = {}, family has m = {m}", tet.m));
    }
    let budget = super::vertex_budget();
    let mut dist: HashMap<Vertex, usize> = tet.graph.labels.iter().map(|v| (v.clone(), 0)).collect();
    let mut frontier: Vec<Vertex> = tet.graph.labels.clone();
    let mut extra: Vec<(usize, Vertex)> = Vec::new();
    for r in 1..=radius {
        let mut next = Vec::new();
        for v in &frontier {
            for s in 0..family.degree() {
                let w = family.step(v, s);
                if !dist.contains_key(&w) {
                    dist.insert(w.clone(), r);
                    next.push(w);
                }
            }
        }
        if dist.len() > budget {
            return Err(Error::Budget { budget, what: format!("thickening of K_{} by {radius}", tet.n) });
        }
        frontier = next.clone();
        extra.extend(next.into_iter().map(|v| (r, v)));
    }
    extra.sort_unstable();
    let labels = tet.graph.labels.iter().cloned().chain(extra.into_iter().map(|(_, v)| v)).collect();
    let g = induced_subgraph(&family, labels)?;
    let (_, c) = g.components();
    if c > 1 {
        return Err(Error::Disconnected { components: c });
    }
    Ok(g)
}
