use std::cell::RefCell;
use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::graphs::{FiniteGraph, GraphWindow, Neighbor, Vertex, NO_GENERATOR};
use crate::rng::{reduce_samples, Mergeable, SampleStream};

use super::{ModelKind, PercolationModel};

/// A window prepared for percolation sampling: CSR bond structure with per-bond open
/// probabilities and the set of vertices whose bonds may leave the window.
#[derive(Clone, Debug)]
pub struct Sampler<'w> {
    pub window: &'w GraphWindow,
    pub model: PercolationModel,
    offsets: Vec<usize>,
    targets: Vec<u32>,
    generators: Vec<u16>,
    edge_id: Vec<u32>,
    edge_prob: Vec<f64>,
    n_edges: usize,
    exposed: Vec<bool>,
}

/// A finite open cluster of the anchor, in window indices. `vertices[0]` is the anchor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cluster {
    pub vertices: Vec<usize>,
    /// Open bonds `(i, j, generator)` between local positions `i < j` in `vertices`.
    pub edges: Vec<(u32, u32, u16)>,
    /// The exploration reached vertices whose bonds leave the window.
    pub censored: bool,
}

impl Cluster {
    pub fn anchor(&self) -> usize {
        self.vertices[0]
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }
}

#[derive(Default)]
struct Scratch {
    vstate: Vec<u8>,
    estate: Vec<u8>,
    local: Vec<u32>,
    vtouched: Vec<usize>,
    etouched: Vec<usize>,
}

thread_local! {
    static SCRATCH: RefCell<Scratch> = RefCell::new(Scratch::default());
}

const UNKNOWN: u8 = 0;
const OPEN: u8 = 1;
const CLOSED: u8 = 2;

impl<'w> Sampler<'w> {
    pub fn new(window: &'w GraphWindow, model: PercolationModel) -> Result<Self> {
        model.validate(&window.family)?;
        if window.radius < 1 {
            return invalid("sampling window needs radius >= 1");
        }
        let n = window.len();
        let mut offsets = vec![0usize; n + 1];
        let mut targets = Vec::new();
        let mut generators = Vec::new();
        let mut edge_prob_slot = Vec::new();
        match model.kind {
            ModelKind::LongRange { truncation, .. } => {
                let budget = crate::graphs::vertex_budget();
                if (n as f64) * 2.0 * truncation as f64 > 8.0 * budget as f64 {
                    return Err(crate::Error::Budget { budget, what: format!("long-range bond table with truncation {truncation}") });
                }
                for i in 0..n {
                    let Vertex::Lattice(c) = &window.graph.labels[i] else { unreachable!() };
                    let x = c[0];
                    let mut nb: Vec<(u32, u64)> = (1..=truncation as i64)
                        .flat_map(|d| [x - d, x + d])
                        .filter_map(|y| window.index_of(&Vertex::Lattice(vec![y])).map(|j| (j as u32, y.abs_diff(x))))
                        .collect();
                    nb.sort_unstable();
                    for (j, d) in nb {
                        targets.push(j);
                        generators.push(if d == 1 { window.graph.adjacency[i].iter().find(|a| a.to == j).unwrap().generator } else { NO_GENERATOR });
                        edge_prob_slot.push(model.bond_probability(d));
                    }
                    offsets[i + 1] = targets.len();
                }
            }
            ModelKind::Site { .. } | ModelKind::Bond { .. } => {
                let p = match model.kind {
                    ModelKind::Bond { p } => p,
                    _ => 1.0,
                };
                for i in 0..n {
                    for a in &window.graph.adjacency[i] {
                        targets.push(a.to);
                        generators.push(a.generator);
                        edge_prob_slot.push(p);
                    }
                    offsets[i + 1] = targets.len();
                }
            }
        }
        let mut edge_id = vec![u32::MAX; targets.len()];
        let mut edge_prob = Vec::new();
        for i in 0..n {
            for slot in offsets[i]..offsets[i + 1] {
                let j = targets[slot] as usize;
                if i < j {
                    edge_id[slot] = edge_prob.len() as u32;
                    edge_prob.push(edge_prob_slot[slot]);
                    let back = (offsets[j]..offsets[j + 1]).find(|&s| targets[s] as usize == i).unwrap();
                    edge_id[back] = edge_id[slot];
                }
            }
        }
        let reach = model.reach();
        let exposed = (0..n).map(|i| window.boundary_distance(i) < reach).collect();
        Ok(Sampler { window, model, offsets, targets, generators, edge_id, n_edges: edge_prob.len(), edge_prob, exposed })
    }

    pub fn anchor_index(&self, anchor: &Vertex) -> Result<usize> {
        match self.window.index_of(anchor) {
            Some(i) => Ok(i),
            None => invalid(format!("anchor {anchor} is not in the window")),
        }
    }

    /// Degree of the ambient regular graph, or `None` for long-range bonds.
    pub fn ambient_degree(&self) -> Option<usize> {
        match self.model.kind {
            ModelKind::LongRange { .. } => None,
            _ => Some(self.window.family.degree()),
        }
    }

    /// Reveals the anchor's cluster by breadth-first search, drawing every site or bond
    /// state at most once, in discovery order. Returns `None` when the anchor is closed
    /// (site) or has no open bond (bond, long range).
    pub fn sample(&self, anchor: usize, rng: &mut impl Rng) -> Option<Cluster> {
        SCRATCH.with(|cell| {
            let mut scratch = cell.borrow_mut();
            let s = &mut *scratch;
            let n = self.window.len();
            if s.vstate.len() < n {
                s.vstate.resize(n, UNKNOWN);
                s.local.resize(n, u32::MAX);
            }
            if s.estate.len() < self.n_edges {
                s.estate.resize(self.n_edges, UNKNOWN);
            }
            let out = match self.model.kind {
                ModelKind::Site { p } => self.sample_site(anchor, p, rng, s),
                _ => self.sample_bond(anchor, rng, s),
            };
            for &v in &s.vtouched {
                s.vstate[v] = UNKNOWN;
                s.local[v] = u32::MAX;
            }
            for &e in &s.etouched {
                s.estate[e] = UNKNOWN;
            }
            s.vtouched.clear();
            s.etouched.clear();
            out
        })
    }

    fn sample_site(&self, anchor: usize, p: f64, rng: &mut impl Rng, s: &mut Scratch) -> Option<Cluster> {
        s.vtouched.push(anchor);
        if rng.random::<f64>() >= p {
            s.vstate[anchor] = CLOSED;
            return None;
        }
        s.vstate[anchor] = OPEN;
        s.local[anchor] = 0;
        let mut vertices = vec![anchor];
        let mut censored = self.exposed[anchor];
        let mut queue = VecDeque::from([anchor]);
        while let Some(v) = queue.pop_front() {
            for slot in self.offsets[v]..self.offsets[v + 1] {
                let w = self.targets[slot] as usize;
                if s.vstate[w] == UNKNOWN {
                    s.vtouched.push(w);
                    if rng.random::<f64>() < p {
                        s.vstate[w] = OPEN;
                        s.local[w] = vertices.len() as u32;
                        vertices.push(w);
                        censored |= self.exposed[w];
                        queue.push_back(w);
                    } else {
                        s.vstate[w] = CLOSED;
                    }
                }
            }
        }
        let mut edges = Vec::new();
        for (li, &v) in vertices.iter().enumerate() {
            for slot in self.offsets[v]..self.offsets[v + 1] {
                let lj = s.local[self.targets[slot] as usize];
                if lj != u32::MAX && (li as u32) < lj {
                    edges.push((li as u32, lj, self.generators[slot]));
                }
            }
        }
        edges.sort_unstable();
        Some(Cluster { vertices, edges, censored })
    }

    fn sample_bond(&self, anchor: usize, rng: &mut impl Rng, s: &mut Scratch) -> Option<Cluster> {
        s.vtouched.push(anchor);
        s.local[anchor] = 0;
        let mut vertices = vec![anchor];
        let mut edges = Vec::new();
        let mut censored = self.exposed[anchor];
        let mut queue = VecDeque::from([anchor]);
        while let Some(v) = queue.pop_front() {
            let lv = s.local[v];
            for slot in self.offsets[v]..self.offsets[v + 1] {
                let e = self.edge_id[slot] as usize;
                if s.estate[e] != UNKNOWN {
                    continue;
                }
                s.etouched.push(e);
                if rng.random::<f64>() < self.edge_prob[e] {
                    s.estate[e] = OPEN;
                    let w = self.targets[slot] as usize;
                    if s.local[w] == u32::MAX {
                        s.vtouched.push(w);
                        s.local[w] = vertices.len() as u32;
                        vertices.push(w);
                        censored |= self.exposed[w];
                        queue.push_back(w);
                    }
                    let lw = s.local[w];
                    let g = if lv < lw { self.generators[slot] } else { self.reverse_generator(slot) };
                    edges.push((lv.min(lw), lv.max(lw), g));
                } else {
                    s.estate[e] = CLOSED;
                }
            }
        }
        if edges.is_empty() {
            return None;
        }
        edges.sort_unstable();
        Some(Cluster { vertices, edges, censored })
    }

    fn reverse_generator(&self, slot: usize) -> u16 {
        let g = self.generators[slot];
        if g == NO_GENERATOR {
            g
        } else {
            self.window.family.inverse_generator(g as usize) as u16
        }
    }

    /// The cluster as a graph with window labels, in cluster order.
    pub fn cluster_graph(&self, c: &Cluster) -> FiniteGraph {
        let labels = c.vertices.iter().map(|&v| self.window.graph.labels[v].clone()).collect();
        let mut adjacency = vec![Vec::new(); c.len()];
        let family = self.window.family;
        for &(i, j, g) in &c.edges {
            adjacency[i as usize].push(Neighbor { to: j, generator: g });
            let back = if g == NO_GENERATOR { g } else { family.inverse_generator(g as usize) as u16 };
            adjacency[j as usize].push(Neighbor { to: i, generator: back });
        }
        for nb in &mut adjacency {
            nb.sort_unstable_by_key(|n| n.to);
        }
        FiniteGraph { labels, adjacency, ambient_degree: self.ambient_degree() }
    }
}

/// Survival function `P(|C| ≥ n)` of the anchor's cluster size (`|C| = 0` when absent).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub n_samples: u64,
    /// Rows `(n, survival, stderr, censored_fraction)` for `n = 1..=max observed size`.
    /// `censored_fraction(n)` is the mass of censored samples observed smaller than `n`,
    /// which the true survival may additionally contain.
    pub rows: Vec<TailRow>,
    pub censored_fraction: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub n: usize,
    pub survival: f64,
    pub stderr: f64,
    pub censored_fraction: f64,
}

#[derive(Default)]
struct SizeHistogram {
    sizes: Vec<u64>,
    censored_sizes: Vec<u64>,
}

impl Mergeable for SizeHistogram {
    fn merge(&mut self, other: Self) {
        for (dst, src) in [(&mut self.sizes, other.sizes), (&mut self.censored_sizes, other.censored_sizes)] {
            if dst.len() < src.len() {
                dst.resize(src.len(), 0);
            }
            for (a, b) in dst.iter_mut().zip(src) {
                *a += b;
            }
        }
    }
}

fn bump(v: &mut Vec<u64>, i: usize) {
    if v.len() <= i {
        v.resize(i + 1, 0);
    }
    v[i] += 1;
}

pub fn tail_estimate(sampler: &Sampler, anchor: usize, stream: &SampleStream) -> Result<TailEstimate> {
    if !sampler.model.declared_subcritical {
        return invalid("tail estimation requires a model declared subcritical");
    }
    let hist = reduce_samples(stream, SizeHistogram::default, |h, i| {
        let mut rng = stream.rng(i);
        match sampler.sample(anchor, &mut rng) {
            None => bump(&mut h.sizes, 0),
            Some(c) => {
                bump(&mut h.sizes, c.len());
                if c.censored {
                    bump(&mut h.censored_sizes, c.len());
                }
            }
        }
    });
    let total = stream.len() as f64;
    let mut rows = Vec::new();
    let mut above: u64 = hist.sizes.iter().sum();
    let mut censored_below = 0u64;
    for n in 1..hist.sizes.len() {
        above -= hist.sizes[n - 1];
        censored_below += hist.censored_sizes.get(n - 1).copied().unwrap_or(0);
        let s = above as f64 / total;
        let se = if total > 1.0 { (s * (1.0 - s) / (total - 1.0)).sqrt() } else { 0.0 };
        rows.push(TailRow { n, survival: s, stderr: se, censored_fraction: censored_below as f64 / total });
    }
    let censored_fraction = hist.censored_sizes.iter().sum::<u64>() as f64 / total;
    Ok(TailEstimate { n_samples: stream.len(), rows, censored_fraction })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::{build_window, GraphFamily};
    use crate::rng::sample_rng;

    fn z1_window(r: usize) -> GraphWindow {
        let f = GraphFamily::ZLattice { dim: 1 };
        build_window(f, f.identity(), r).unwrap()
    }

    #[test]
    fn closed_sites_never_form_clusters() {
        let w = z1_window(3);
        let s = Sampler::new(&w, PercolationModel::site(0.0)).unwrap();
        for i in 0..100 {
            assert!(s.sample(0, &mut sample_rng(1, i)).is_none());
        }
    }

    #[test]
    fn full_bond_percolation_fills_the_window() {
        let f = GraphFamily::ZLattice { dim: 2 };
        let w = build_window(f, f.identity(), 3).unwrap();
        let s = Sampler::new(&w, PercolationModel::bond(1.0)).unwrap();
        let c = s.sample(0, &mut sample_rng(1, 0)).unwrap();
        assert!(c.censored);
        assert_eq!(c.len(), w.len());
        assert_eq!(c.edges.len(), w.graph.edge_count());
        assert_eq!(s.cluster_graph(&c).edges().len(), w.graph.edge_count());
    }

    #[test]
    fn samples_are_reproducible() {
        let f = GraphFamily::ZLattice { dim: 2 };
        let w = build_window(f, f.identity(), 6).unwrap();
        let s = Sampler::new(&w, PercolationModel::site(0.5)).unwrap();
        for i in 0..50 {
            assert_eq!(s.sample(0, &mut sample_rng(3, i)), s.sample(0, &mut sample_rng(3, i)));
        }
    }

    #[test]
    fn site_clusters_are_connected_and_induced() {
        let f = GraphFamily::ZLattice { dim: 2 };
        let w = build_window(f, f.identity(), 8).unwrap();
        let s = Sampler::new(&w, PercolationModel::site(0.55)).unwrap();
        for i in 0..200 {
            if let Some(c) = s.sample(0, &mut sample_rng(5, i)) {
                let g = s.cluster_graph(&c);
                assert!(g.is_connected());
                assert_eq!(g.adjacency, w.graph.induced(&c.vertices).adjacency);
            }
        }
    }

    #[test]
    fn long_range_bonds_respect_truncation() {
        let m: PercolationModel = "longrange:0.3:J=exp:1".parse().unwrap();
        let trunc = m.reach();
        let w = z1_window(3 * trunc);
        let s = Sampler::new(&w, m).unwrap();
        let mut found = false;
        for i in 0..2000 {
            if let Some(c) = s.sample(0, &mut sample_rng(9, i)) {
                found = true;
                for &(a, b, _) in &c.edges {
                    let (Vertex::Lattice(x), Vertex::Lattice(y)) =
                        (&w.graph.labels[c.vertices[a as usize]], &w.graph.labels[c.vertices[b as usize]])
                    else {
                        unreachable!()
                    };
                    assert!(x[0].abs_diff(y[0]) as usize <= trunc);
                }
            }
        }
        assert!(found);
    }
}
