use std::collections::{HashMap, HashSet};

use crate::error::{invalid, Error, Result};

use super::{FiniteGraph, GraphFamily, Neighbor, Vertex};

/// The ball `B(center, radius)` of a Cayley graph, with exact induced adjacency.
#[derive(Clone, Debug)]
pub struct GraphWindow {
    pub family: GraphFamily,
    pub center: Vertex,
    pub radius: usize,
    pub graph: FiniteGraph,
    /// Word distance from the center.
    pub dist: Vec<u32>,
    index: HashMap<Vertex, u32>,
}

impl GraphWindow {
    pub fn len(&self) -> usize {
        self.graph.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graph.is_empty()
    }

    pub fn index_of(&self, v: &Vertex) -> Option<usize> {
        self.index.get(v).map(|&i| i as usize)
    }

    /// Graph distance to the window boundary; zero on the outermost sphere.
    pub fn boundary_distance(&self, i: usize) -> usize {
        self.radius - self.dist[i] as usize
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.graph.labels
    }
}

/// BFS layers of the ball, each sorted by canonical label.
fn ball_layers(family: &GraphFamily, center: &Vertex, radius: usize, budget: usize) -> Result<Vec<Vec<Vertex>>> {
    family.validate()?;
    if !family.contains(center) {
        return invalid(format!("center {center} is not a vertex of {family}"));
    }
    let k = family.degree();
    let mut seen: HashSet<Vertex> = HashSet::new();
    seen.insert(center.clone());
    let mut layers = vec![vec![center.clone()]];
    let mut total = 1usize;
    for _ in 0..radius {
        let mut next = Vec::new();
        for v in layers.last().unwrap() {
            for s in 0..k {
                let w = family.step(v, s);
                if !seen.contains(&w) {
                    seen.insert(w.clone());
                    next.push(w);
                    total += 1;
                    if total > budget {
                        return Err(Error::Budget { budget, what: format!("ball of radius {radius} in {family}") });
                    }
                }
            }
        }
        next.sort_unstable();
        layers.push(next);
    }
    Ok(layers)
}

pub fn build_window(family: GraphFamily, center: Vertex, radius: usize) -> Result<GraphWindow> {
    build_window_with_budget(family, center, radius, super::vertex_budget())
}

pub fn build_window_with_budget(family: GraphFamily, center: Vertex, radius: usize, budget: usize) -> Result<GraphWindow> {
    let layers = ball_layers(&family, &center, radius, budget)?;
    let mut labels = Vec::new();
    let mut dist = Vec::new();
    for (d, layer) in layers.into_iter().enumerate() {
        dist.extend(std::iter::repeat_n(d as u32, layer.len()));
        labels.extend(layer);
    }
    let index: HashMap<Vertex, u32> = labels.iter().enumerate().map(|(i, v)| (v.clone(), i as u32)).collect();
    let k = family.degree();
    let adjacency = labels
        .iter()
        .map(|v| {
            let mut nb: Vec<Neighbor> = (0..k)
                .filter_map(|s| index.get(&family.step(v, s)).map(|&to| Neighbor { to, generator: s as u16 }))
                .collect();
            nb.sort_unstable_by_key(|n| n.to);
            nb
        })
        .collect();
    let graph = FiniteGraph { labels, adjacency, ambient_degree: Some(k) };
    Ok(GraphWindow { family, center, radius, graph, dist, index })
}

/// Ball sizes `V(n)` and the inverse growth function `φ(t) = min{n : V(n) > t}`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrowthTable {
    pub family: GraphFamily,
    pub volumes: Vec<u64>,
}

impl GrowthTable {
    pub fn n_max(&self) -> usize {
        self.volumes.len() - 1
    }

    /// `V(n)`; `V(n) = 0` for negative `n`.
    pub fn volume(&self, n: i64) -> Result<u64> {
        if n < 0 {
            return Ok(0);
        }
        self.volumes
            .get(n as usize)
            .copied()
            .ok_or(Error::OutOfRange { value: n as f64, limit: self.n_max() as f64 })
    }

    pub fn phi(&self, t: u64) -> Result<usize> {
        let top = *self.volumes.last().unwrap();
        if t >= top {
            return Err(Error::OutOfRange { value: t as f64, limit: top as f64 });
        }
        Ok(self.volumes.partition_point(|&v| v <= t))
    }
}

pub fn growth_table(family: GraphFamily, n_max: usize) -> Result<GrowthTable> {
    let layers = ball_layers(&family, &family.identity(), n_max, super::vertex_budget())?;
    let mut acc = 0u64;
    let volumes = layers
        .iter()
        .map(|l| {
            acc += l.len() as u64;
            acc
        })
        .collect();
    Ok(GrowthTable { family, volumes })
}

/// Subgraph of the Cayley graph induced on `labels` (kept in the given order).
pub fn induced_subgraph(family: &GraphFamily, labels: Vec<Vertex>) -> Result<FiniteGraph> {
    let index: HashMap<&Vertex, u32> = labels.iter().enumerate().map(|(i, v)| (v, i as u32)).collect();
    if index.len() != labels.len() {
        return invalid("duplicate vertex labels");
    }
    if let Some(v) = labels.iter().find(|v| !family.contains(v)) {
        return invalid(format!("{v} is not a vertex of {family}"));
    }
    let k = family.degree();
    let adjacency = labels
        .iter()
        .map(|v| {
            let mut nb: Vec<Neighbor> = (0..k)
                .filter_map(|s| index.get(&family.step(v, s)).map(|&to| Neighbor { to, generator: s as u16 }))
                .collect();
            nb.sort_unstable_by_key(|n| n.to);
            nb
        })
        .collect();
    Ok(FiniteGraph { labels, adjacency, ambient_degree: Some(k) })
}

/// A geodesic path `L_n` with `n + 1` vertices starting at the identity.
///
/// Along the ray a 1-Lipschitz projection (a lattice coordinate, the lamplighter position,
/// the Heisenberg `a` entry, or the word length in the tree) grows by one per step, so
/// `d(v_i, v_j) = |j - i|`.
pub fn linear_subgraph(family: GraphFamily, n: usize) -> Result<FiniteGraph> {
    family.validate()?;
    if n == 0 {
        return invalid("linear subgraph needs n >= 1");
    }
    let mut labels = vec![family.identity()];
    for j in 0..n {
        let s = match family {
            GraphFamily::RegularTree { .. } => j % 2,
            _ => 0,
        };
        let next = family.step(labels.last().unwrap(), s);
        labels.push(next);
    }
    induced_subgraph(&family, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::LampGenerators;

    fn z(d: usize) -> GraphFamily {
        GraphFamily::ZLattice { dim: d }
    }

    #[test]
    fn z1_window_is_a_path() {
        let w = build_window(z(1), Vertex::Lattice(vec![0]), 3).unwrap();
        assert_eq!(w.len(), 7);
        assert_eq!(w.graph.edge_count(), 6);
        let coords: Vec<i64> = w.vertices().iter().map(|v| if let Vertex::Lattice(c) = v { c[0] } else { 0 }).collect();
        assert_eq!(coords, vec![0, -1, 1, -2, 2, -3, 3]);
        assert_eq!(w.boundary_distance(0), 3);
        assert_eq!(w.boundary_distance(6), 0);
    }

    #[test]
    fn z2_diamond() {
        let w = build_window(z(2), Vertex::Lattice(vec![0, 0]), 1).unwrap();
        assert_eq!(w.len(), 5);
        let g = growth_table(z(2), 2).unwrap();
        assert_eq!(g.volumes, vec![1, 5, 13]);
    }

    #[test]
    fn degree_deficit_only_on_outer_sphere() {
        for f in [z(2), GraphFamily::Heisenberg, GraphFamily::Lamplighter { m: 2, generators: LampGenerators::Standard }] {
            let w = build_window(f, f.identity(), 4).unwrap();
            assert!(w.graph.is_symmetric());
            for i in 0..w.len() {
                if w.graph.degree(i) < f.degree() {
                    assert_eq!(w.boundary_distance(i), 0);
                }
            }
        }
    }

    #[test]
    fn phi_on_z1() {
        let g = growth_table(z(1), 4).unwrap();
        assert_eq!(g.volumes, vec![1, 3, 5, 7, 9]);
        assert_eq!(g.phi(5).unwrap(), 3);
        assert_eq!(g.phi(0).unwrap(), 0);
        for n in 0..4 {
            assert_eq!(g.phi(g.volumes[n]).unwrap(), n + 1);
        }
        assert!(g.phi(9).is_err());
        assert_eq!(g.volume(-1).unwrap(), 0);
    }

    #[test]
    fn budget_is_enforced() {
        let f = GraphFamily::Lamplighter { m: 2, generators: LampGenerators::S0 };
        let err = build_window_with_budget(f, f.identity(), 12, 1000).unwrap_err();
        assert!(matches!(err, Error::Budget { budget: 1000, .. }));
    }

    #[test]
    fn small_linear_subgraphs() {
        let g = linear_subgraph(z(1), 2).unwrap();
        assert_eq!((g.len(), g.edge_count()), (3, 2));
        let t = linear_subgraph(GraphFamily::RegularTree { degree: 3 }, 5).unwrap();
        assert_eq!((t.len(), t.edge_count()), (6, 5));
        assert_eq!(t.labels[3], Vertex::Tree(vec![0, 1, 0]));
        assert!(linear_subgraph(z(1), 0).is_err());
    }
}
