//! The five Laplacian-type operators on finite graphs.
//!
//! Every operator is stored as a weighted edge set plus a potential, so that
//! `⟨Hφ, φ⟩ = Σ_{edges} w |φ(x) - φ(y)|² + Σ_x V(x) |φ(x)|²`:
//!
//! | kind | edge weight | potential `V(x)` |
//! |------|-------------|------------------|
//! | N    | 1           | 0 |
//! | A    | 1           | `k - deg(x)` |
//! | D    | 1           | `2 (k - deg(x))` |
//! | P    | `𝒫(x, y)`   | `1 - Σ_{y ~ x} 𝒫(x, y)` |
//! | R    | `𝒫(x, y)`   | 0 |

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graphs::{FiniteGraph, GraphFamily, NO_GENERATOR};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OperatorKind {
    N,
    A,
    D,
    P,
    R,
}

impl OperatorKind {
    pub const ALL: [OperatorKind; 5] = [OperatorKind::N, OperatorKind::A, OperatorKind::D, OperatorKind::P, OperatorKind::R];

    /// Kinds whose kernel on a finite cluster contains the constants.
    pub fn has_constant_kernel(&self) -> bool {
        matches!(self, OperatorKind::N | OperatorKind::R)
    }
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for OperatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "N" | "n" => Ok(OperatorKind::N),
            "A" | "a" => Ok(OperatorKind::A),
            "D" | "d" => Ok(OperatorKind::D),
            "P" | "p" => Ok(OperatorKind::P),
            "R" | "r" => Ok(OperatorKind::R),
            _ => invalid(format!("unknown operator kind {s:?}")),
        }
    }
}

/// A symmetric translation-invariant Markov kernel, stored per generator of the family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionKernel {
    pub family: GraphFamily,
    /// Normalised `𝒫(ι, s)`, indexed by generator.
    pub weights: Vec<f64>,
    /// The factor `M = Σ_s 𝒫(ι, s)` removed on input.
    pub scale: f64,
}

impl TransitionKernel {
    pub fn uniform(family: GraphFamily) -> Self {
        let k = family.degree();
        TransitionKernel { family, weights: vec![1.0 / k as f64; k], scale: 1.0 }
    }

    /// Normalises arbitrary positive symmetric weights.
    pub fn from_weights(family: GraphFamily, raw: &[f64]) -> Result<Self> {
        let k = family.degree();
        if raw.len() != k {
            return Err(Error::DimensionMismatch { expected: k, got: raw.len() });
        }
        if raw.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return invalid("kernel weights must be positive and finite on every generator");
        }
        for (s, &w) in raw.iter().enumerate() {
            let inv = family.inverse_generator(s);
            if (raw[inv] - w).abs() > 1e-12 * w.max(raw[inv]) {
                return invalid(format!("kernel is not symmetric: weight of {} differs from its inverse", family.generator_name(s)));
            }
        }
        let scale: f64 = raw.iter().sum();
        Ok(TransitionKernel { family, weights: raw.iter().map(|w| w / scale).collect(), scale })
    }

    /// `uniform` or `list:<s=w,...>` with generator indices `s`.
    pub fn parse(spec: &str, family: GraphFamily) -> Result<Self> {
        let spec = spec.trim();
        if spec == "uniform" {
            return Ok(Self::uniform(family));
        }
        let Some(list) = spec.strip_prefix("list:") else {
            return invalid(format!("unknown kernel spec {spec:?}"));
        };
        let mut raw = vec![f64::NAN; family.degree()];
        for item in list.split(',') {
            let (s, w) = item.split_once('=').ok_or_else(|| Error::InvalidInput(format!("bad kernel entry {item:?}")))?;
            let s: usize = s.trim().parse().map_err(|_| Error::InvalidInput(format!("bad generator index {s:?}")))?;
            let w: f64 = w.trim().parse().map_err(|_| Error::InvalidInput(format!("bad kernel weight {w:?}")))?;
            if s >= raw.len() {
                return invalid(format!("generator index {s} out of range for {family}"));
            }
            raw[s] = w;
        }
        Self::from_weights(family, &raw)
    }

    pub fn min_weight(&self) -> f64 {
        self.weights.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_weight(&self) -> f64 {
        self.weights.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralOperator {
    pub kind: OperatorKind,
    /// Edges `(i, j, w)` with `i < j`, sorted, in host-graph vertex order.
    pub edges: Vec<(usize, usize, f64)>,
    pub potential: Vec<f64>,
    pub diagonal: Vec<f64>,
    pub ambient_degree: Option<usize>,
    /// `M` of the kernel used for P and R.
    pub kernel_scale: Option<f64>,
    offsets: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

/// `W(x) = k - deg(x)`.
pub fn boundary_potential(graph: &FiniteGraph, k: usize) -> Result<Vec<f64>> {
    (0..graph.len())
        .map(|i| {
            let d = graph.degree(i);
            if d > k {
                Err(Error::Invariant(format!("vertex {i} has degree {d} above the ambient degree {k}")))
            } else {
                Ok((k - d) as f64)
            }
        })
        .collect()
}

pub fn assemble(graph: &FiniteGraph, kind: OperatorKind, kernel: Option<&TransitionKernel>) -> Result<SpectralOperator> {
    if graph.is_empty() {
        return invalid("cannot assemble an operator on an empty graph");
    }
    let n = graph.len();
    let needs_k = || graph.ambient_degree.ok_or_else(|| Error::InvalidInput(format!("kind {kind} needs a regular ambient graph")));
    let needs_kernel = || kernel.ok_or_else(|| Error::InvalidInput(format!("kind {kind} needs a transition kernel")));
    let raw = graph.edges();
    let (edges, potential, scale) = match kind {
        OperatorKind::N => (raw.iter().map(|&(i, j, _)| (i, j, 1.0)).collect::<Vec<_>>(), vec![0.0; n], None),
        OperatorKind::A | OperatorKind::D => {
            let k = needs_k()?;
            let mut w = boundary_potential(graph, k)?;
            if kind == OperatorKind::D {
                w.iter_mut().for_each(|x| *x *= 2.0);
            }
            (raw.iter().map(|&(i, j, _)| (i, j, 1.0)).collect(), w, None)
        }
        OperatorKind::P | OperatorKind::R => {
            let kern = needs_kernel()?;
            let mut edges = Vec::with_capacity(raw.len());
            for &(i, j, g) in &raw {
                if g == NO_GENERATOR || g as usize >= kern.weights.len() {
                    return Err(Error::LabelMismatch(i, j));
                }
                if kern.family.step(&graph.labels[i], g as usize) != graph.labels[j] {
                    return Err(Error::LabelMismatch(i, j));
                }
                edges.push((i, j, kern.weights[g as usize]));
            }
            let potential = if kind == OperatorKind::P {
                let mut hop = vec![0.0; n];
                for &(i, j, w) in &edges {
                    hop[i] += w;
                    hop[j] += w;
                }
                hop.iter().map(|h| (1.0 - h).max(0.0)).collect()
            } else {
                vec![0.0; n]
            };
            (edges, potential, Some(kern.scale))
        }
    };
    Ok(SpectralOperator::from_parts(kind, edges, potential, graph.ambient_degree, scale))
}

impl SpectralOperator {
    pub fn from_parts(
        kind: OperatorKind,
        edges: Vec<(usize, usize, f64)>,
        potential: Vec<f64>,
        ambient_degree: Option<usize>,
        kernel_scale: Option<f64>,
    ) -> Self {
        let n = potential.len();
        let mut diagonal = potential.clone();
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, w) in &edges {
            diagonal[i] += w;
            diagonal[j] += w;
            rows[i].push((j, -w));
            rows[j].push((i, -w));
        }
        if kind == OperatorKind::P {
            // Id - P: unit diagonal exactly, the potential absorbs the rounding.
            diagonal.iter_mut().for_each(|d| *d = 1.0);
        }
        let mut offsets = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for (i, mut r) in rows.into_iter().enumerate() {
            r.push((i, diagonal[i]));
            r.sort_unstable_by_key(|e| e.0);
            for (c, v) in r {
                cols.push(c);
                vals.push(v);
            }
            offsets.push(cols.len());
        }
        SpectralOperator { kind, edges, potential, diagonal, ambient_degree, kernel_scale, offsets, cols, vals }
    }

    pub fn dim(&self) -> usize {
        self.diagonal.len()
    }

    /// Row `i` as `(column, value)` pairs in increasing column order.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.offsets[i]..self.offsets[i + 1]).map(move |s| (self.cols[s], self.vals[s]))
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = (self.offsets[i]..self.offsets[i + 1]).map(|s| self.vals[s] * x[self.cols[s]]).sum();
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        self.matvec(x, &mut y);
        y
    }

    /// Gershgorin bound `max_i Σ_j |H_ij|` on the spectral radius.
    pub fn norm_bound(&self) -> f64 {
        (0..self.dim()).map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// `⟨Hφ, φ⟩` from the edge-sum form.
    pub fn quadratic_form(&self, phi: &[f64]) -> Result<f64> {
        if phi.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: phi.len() });
        }
        let edge: f64 = self.edges.iter().map(|&(i, j, w)| w * (phi[i] - phi[j]).powi(2)).sum();
        let pot: f64 = self.potential.iter().zip(phi).map(|(v, x)| v * x * x).sum();
        Ok(edge + pot)
    }

    /// Coordinate dump `i j value`, one line per stored entry, sorted lexicographically.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for i in 0..self.dim() {
            for (j, v) in self.row(i) {
                let _ = writeln!(out, "{i} {j} {v}");
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::{build_window, linear_subgraph, GraphFamily, LampGenerators};

    const Z1: GraphFamily = GraphFamily::ZLattice { dim: 1 };
    const Z2: GraphFamily = GraphFamily::ZLattice { dim: 2 };

    fn single(f: GraphFamily) -> FiniteGraph {
        crate::graphs::induced_subgraph(&f, vec![f.identity()]).unwrap()
    }

    #[test]
    fn single_vertex_operators() {
        let g = single(Z2);
        for (kind, v) in [(OperatorKind::N, 0.0), (OperatorKind::A, 4.0), (OperatorKind::D, 8.0)] {
            assert_eq!(assemble(&g, kind, None).unwrap().to_dense()[(0, 0)], v);
        }
    }

    #[test]
    fn single_edge_matrices() {
        let g = linear_subgraph(Z1, 1).unwrap();
        let a = assemble(&g, OperatorKind::A, None).unwrap().to_dense();
        assert_eq!(a, DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]));
        let d = assemble(&g, OperatorKind::D, None).unwrap().to_dense();
        assert_eq!(d, DMatrix::from_row_slice(2, 2, &[3.0, -1.0, -1.0, 3.0]));
    }

    #[test]
    fn boundary_potential_examples() {
        let g = linear_subgraph(Z2, 1).unwrap();
        assert_eq!(boundary_potential(&g, 4).unwrap(), vec![3.0, 3.0]);
        assert_eq!(boundary_potential(&single(Z2), 4).unwrap(), vec![4.0]);
        assert!(matches!(boundary_potential(&g, 0), Err(Error::Invariant(_))));
    }

    #[test]
    fn quadratic_form_examples() {
        let edge = linear_subgraph(Z1, 1).unwrap();
        let a = assemble(&edge, OperatorKind::A, None).unwrap();
        assert_eq!(a.quadratic_form(&[1.0, 1.0]).unwrap(), 2.0);
        let path = linear_subgraph(Z1, 2).unwrap();
        let n = assemble(&path, OperatorKind::N, None).unwrap();
        assert_eq!(n.quadratic_form(&[1.0, -1.0, 1.0]).unwrap(), 8.0);
        assert_eq!(n.quadratic_form(&[3.0, 3.0, 3.0]).unwrap(), 0.0);
        assert!(matches!(n.quadratic_form(&[1.0]), Err(Error::DimensionMismatch { expected: 3, got: 1 })));
    }

    #[test]
    fn uniform_kernel_is_scaled_adjacency_laplacian() {
        for f in [Z2, GraphFamily::Lamplighter { m: 3, generators: LampGenerators::S0 }] {
            let w = build_window(f, f.identity(), 3).unwrap();
            let kern = TransitionKernel::uniform(f);
            let p = assemble(&w.graph, OperatorKind::P, Some(&kern)).unwrap().to_dense();
            let a = assemble(&w.graph, OperatorKind::A, None).unwrap().to_dense();
            let diff = (p - a / f.degree() as f64).abs().max();
            assert!(diff < 1e-15, "{f}: {diff}");
        }
    }

    #[test]
    fn kernel_parsing_and_normalisation() {
        let k = TransitionKernel::parse("list:0=2,1=2,2=1,3=1", Z2).unwrap();
        assert_eq!(k.scale, 6.0);
        assert!((k.weights[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!(TransitionKernel::parse("list:0=2,1=1,2=1,3=1", Z2).is_err());
        assert!(TransitionKernel::parse("list:0=1,1=1,2=1", Z2).is_err());
        assert!(TransitionKernel::parse("gauss", Z2).is_err());
    }

    #[test]
    fn edges_without_kernel_weight_are_rejected() {
        let labels = vec![GraphFamily::ZLattice { dim: 1 }.identity(), crate::graphs::Vertex::Lattice(vec![3])];
        let g = FiniteGraph::from_edges(labels, &[(0, 1, NO_GENERATOR)], None, |g| g);
        let kern = TransitionKernel::uniform(Z1);
        assert!(matches!(assemble(&g, OperatorKind::R, Some(&kern)), Err(Error::LabelMismatch(0, 1))));
        assert!(assemble(&g, OperatorKind::A, None).is_err());
    }

    #[test]
    fn dump_is_sorted_coordinates() {
        let g = linear_subgraph(Z1, 1).unwrap();
        let n = assemble(&g, OperatorKind::N, None).unwrap();
        assert_eq!(n.dump(), "0 0 1\n0 1 -1\n1 0 -1\n1 1 1\n");
    }
}
