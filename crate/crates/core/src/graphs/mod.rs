//! Cayley graph families, their finite windows, and the special subgraphs
//! (paths, lamplighter tetrahedra, thickenings) used by the spectral bounds.

mod finite;
mod lamplighter;
mod window;

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub use finite::{FiniteGraph, Neighbor, NO_GENERATOR};
pub use lamplighter::{tetrahedron, thicken, thickening_radius, word_length, Tetrahedron, TreeVertex};
pub use window::{build_window, growth_table, induced_subgraph, linear_subgraph, GraphWindow, GrowthTable};

/// Default cap on the number of vertices any construction may allocate.
pub const DEFAULT_VERTEX_BUDGET: usize = 2_000_000;

/// Environment variable overriding [`DEFAULT_VERTEX_BUDGET`].
pub const BUDGET_ENV: &str = "PERCLAP_VERTEX_BUDGET";

pub fn vertex_budget() -> usize {
    std::env::var(BUDGET_ENV)
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(DEFAULT_VERTEX_BUDGET)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LampGenerators {
    /// `{(l δ_1, +1)} ∪ {(l δ_0, -1)}`, whose Cayley graph is the horocyclic product of two trees.
    S0,
    /// `{(0, ±1)} ∪ {(k δ_0, 0) : k ≠ 0}`.
    Standard,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GraphFamily {
    ZLattice { dim: usize },
    /// The k-regular tree, realised as the free product of k copies of Z/2.
    RegularTree { degree: usize },
    Lamplighter { m: u32, generators: LampGenerators },
    Heisenberg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GrowthOrder {
    Polynomial(usize),
    Exponential,
    NonAmenable,
}

/// Lamplighter element `(φ, x)`: `lamps` lists the nonzero values of φ sorted by position.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LampState {
    pub lamps: Vec<(i64, u32)>,
    pub pos: i64,
}

impl LampState {
    pub fn identity() -> Self {
        LampState { lamps: Vec::new(), pos: 0 }
    }

    pub fn lamp(&self, at: i64) -> u32 {
        match self.lamps.binary_search_by_key(&at, |&(p, _)| p) {
            Ok(i) => self.lamps[i].1,
            Err(_) => 0,
        }
    }

    /// φ(at) += value (mod m), keeping the list canonical.
    pub fn add_lamp(&mut self, at: i64, value: u32, m: u32) {
        let value = value % m;
        if value == 0 {
            return;
        }
        match self.lamps.binary_search_by_key(&at, |&(p, _)| p) {
            Ok(i) => {
                let v = (self.lamps[i].1 + value) % m;
                if v == 0 {
                    self.lamps.remove(i);
                } else {
                    self.lamps[i].1 = v;
                }
            }
            Err(i) => self.lamps.insert(i, (at, value)),
        }
    }

    pub fn support(&self) -> Option<(i64, i64)> {
        Some((self.lamps.first()?.0, self.lamps.last()?.0))
    }
}

/// Canonical vertex label. Equal group elements always have identical labels.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Vertex {
    Lattice(Vec<i64>),
    Tree(Vec<u8>),
    Lamplighter(LampState),
    Heisenberg([i64; 3]),
}

impl Ord for Vertex {
    fn cmp(&self, other: &Self) -> Ordering {
        use Vertex::*;
        match (self, other) {
            (Lattice(a), Lattice(b)) => a.cmp(b),
            (Tree(a), Tree(b)) => a.len().cmp(&b.len()).then_with(|| a.cmp(b)),
            (Lamplighter(a), Lamplighter(b)) => a.pos.cmp(&b.pos).then_with(|| a.lamps.cmp(&b.lamps)),
            (Heisenberg(a), Heisenberg(b)) => a.cmp(b),
            _ => self.tag().cmp(&other.tag()),
        }
    }
}

impl PartialOrd for Vertex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Vertex {
    fn tag(&self) -> u8 {
        match self {
            Vertex::Lattice(_) => 0,
            Vertex::Tree(_) => 1,
            Vertex::Lamplighter(_) => 2,
            Vertex::Heisenberg(_) => 3,
        }
    }
}

impl fmt::Display for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Vertex::Lattice(c) => write!(f, "{c:?}"),
            Vertex::Tree(w) => {
                if w.is_empty() {
                    return write!(f, "e");
                }
                for (i, a) in w.iter().enumerate() {
                    if i > 0 {
                        write!(f, ".")?;
                    }
                    write!(f, "a{a}")?;
                }
                Ok(())
            }
            Vertex::Lamplighter(s) => {
                write!(f, "(")?;
                for (i, (p, v)) in s.lamps.iter().enumerate() {
                    if i > 0 {
                        write!(f, "+")?;
                    }
                    write!(f, "{v}@{p}")?;
                }
                write!(f, "; {})", s.pos)
            }
            Vertex::Heisenberg([a, b, c]) => write!(f, "({a},{b},{c})"),
        }
    }
}

impl GraphFamily {
    pub fn validate(&self) -> Result<()> {
        match *self {
            GraphFamily::ZLattice { dim } if dim == 0 => invalid("z:<d> needs d >= 1"),
            GraphFamily::RegularTree { degree } if !(3..=255).contains(&degree) => {
                invalid("tree:<k> needs 3 <= k <= 255")
            }
            GraphFamily::Lamplighter { m, .. } if !(2..=1000).contains(&m) => {
                invalid("lamplighter:<m> needs 2 <= m <= 1000")
            }
            _ => Ok(()),
        }
    }

    /// Number of generators, i.e. the vertex degree `k` of the Cayley graph.
    pub fn degree(&self) -> usize {
        match *self {
            GraphFamily::ZLattice { dim } => 2 * dim,
            GraphFamily::RegularTree { degree } => degree,
            GraphFamily::Lamplighter { m, generators: LampGenerators::S0 } => 2 * m as usize,
            GraphFamily::Lamplighter { m, generators: LampGenerators::Standard } => m as usize + 1,
            GraphFamily::Heisenberg => 4,
        }
    }

    pub fn growth_order(&self) -> GrowthOrder {
        match *self {
            GraphFamily::ZLattice { dim } => GrowthOrder::Polynomial(dim),
            GraphFamily::Heisenberg => GrowthOrder::Polynomial(4),
            GraphFamily::Lamplighter { .. } => GrowthOrder::Exponential,
            GraphFamily::RegularTree { .. } => GrowthOrder::NonAmenable,
        }
    }

    /// Whether the Cayley graph has no odd cycles.
    pub fn is_bipartite(&self) -> bool {
        match self {
            GraphFamily::ZLattice { .. } | GraphFamily::RegularTree { .. } => true,
            GraphFamily::Lamplighter { generators: LampGenerators::S0, .. } => true,
            GraphFamily::Lamplighter { m, generators: LampGenerators::Standard } => *m == 2,
            GraphFamily::Heisenberg => true,
        }
    }

    pub fn identity(&self) -> Vertex {
        match *self {
            GraphFamily::ZLattice { dim } => Vertex::Lattice(vec![0; dim]),
            GraphFamily::RegularTree { .. } => Vertex::Tree(Vec::new()),
            GraphFamily::Lamplighter { .. } => Vertex::Lamplighter(LampState::identity()),
            GraphFamily::Heisenberg => Vertex::Heisenberg([0; 3]),
        }
    }

    /// Index of the inverse generator.
    pub fn inverse_generator(&self, s: usize) -> usize {
        match *self {
            GraphFamily::ZLattice { .. } => s ^ 1,
            GraphFamily::RegularTree { .. } => s,
            GraphFamily::Lamplighter { m, generators: LampGenerators::S0 } => {
                let m = m as usize;
                if s < m {
                    m + (m - s) % m
                } else {
                    (m - (s - m)) % m
                }
            }
            GraphFamily::Lamplighter { m, generators: LampGenerators::Standard } => match s {
                0 => 1,
                1 => 0,
                _ => {
                    let k = s - 1;
                    1 + (m as usize - k)
                }
            },
            GraphFamily::Heisenberg => s ^ 1,
        }
    }

    /// Right multiplication `v · s` by generator `s`.
    pub fn step(&self, v: &Vertex, s: usize) -> Vertex {
        match (*self, v) {
            (GraphFamily::ZLattice { .. }, Vertex::Lattice(c)) => {
                let mut c = c.clone();
                c[s / 2] += if s.is_multiple_of(2) { 1 } else { -1 };
                Vertex::Lattice(c)
            }
            (GraphFamily::RegularTree { .. }, Vertex::Tree(w)) => {
                let mut w = w.clone();
                let a = s as u8;
                if w.last() == Some(&a) {
                    w.pop();
                } else {
                    w.push(a);
                }
                Vertex::Tree(w)
            }
            (GraphFamily::Lamplighter { m, generators }, Vertex::Lamplighter(st)) => {
                let mut st = st.clone();
                match generators {
                    LampGenerators::S0 => {
                        let mu = m as usize;
                        if s < mu {
                            st.add_lamp(st.pos + 1, s as u32, m);
                            st.pos += 1;
                        } else {
                            st.add_lamp(st.pos, (s - mu) as u32, m);
                            st.pos -= 1;
                        }
                    }
                    LampGenerators::Standard => match s {
                        0 => st.pos += 1,
                        1 => st.pos -= 1,
                        _ => st.add_lamp(st.pos, (s - 1) as u32, m),
                    },
                }
                Vertex::Lamplighter(st)
            }
            (GraphFamily::Heisenberg, Vertex::Heisenberg([a, b, c])) => Vertex::Heisenberg(match s {
                0 => [a + 1, *b, *c],
                1 => [a - 1, *b, *c],
                2 => [*a, b + 1, c + a],
                _ => [*a, b - 1, c - a],
            }),
            _ => panic!("vertex {v} does not belong to family {self}"),
        }
    }

    /// The generator `s` as a group element.
    pub fn generator(&self, s: usize) -> Vertex {
        self.step(&self.identity(), s)
    }

    pub fn contains(&self, v: &Vertex) -> bool {
        match (*self, v) {
            (GraphFamily::ZLattice { dim }, Vertex::Lattice(c)) => c.len() == dim,
            (GraphFamily::RegularTree { degree }, Vertex::Tree(w)) => {
                w.iter().all(|&a| (a as usize) < degree) && w.windows(2).all(|p| p[0] != p[1])
            }
            (GraphFamily::Lamplighter { m, .. }, Vertex::Lamplighter(st)) => {
                st.lamps.iter().all(|&(_, v)| v > 0 && v < m) && st.lamps.windows(2).all(|p| p[0].0 < p[1].0)
            }
            (GraphFamily::Heisenberg, Vertex::Heisenberg(_)) => true,
            _ => false,
        }
    }

    /// Group product `a · b`.
    pub fn mul(&self, a: &Vertex, b: &Vertex) -> Vertex {
        match (*self, a, b) {
            (GraphFamily::ZLattice { .. }, Vertex::Lattice(x), Vertex::Lattice(y)) => {
                Vertex::Lattice(x.iter().zip(y).map(|(p, q)| p + q).collect())
            }
            (GraphFamily::RegularTree { .. }, Vertex::Tree(x), Vertex::Tree(y)) => {
                let mut w = x.clone();
                for &c in y {
                    if w.last() == Some(&c) {
                        w.pop();
                    } else {
                        w.push(c);
                    }
                }
                Vertex::Tree(w)
            }
            (GraphFamily::Lamplighter { m, .. }, Vertex::Lamplighter(x), Vertex::Lamplighter(y)) => {
                let mut st = x.clone();
                for &(p, v) in &y.lamps {
                    st.add_lamp(p + x.pos, v, m);
                }
                st.pos = x.pos + y.pos;
                Vertex::Lamplighter(st)
            }
            (GraphFamily::Heisenberg, Vertex::Heisenberg([a1, b1, c1]), Vertex::Heisenberg([a2, b2, c2])) => {
                Vertex::Heisenberg([a1 + a2, b1 + b2, c1 + c2 + a1 * b2])
            }
            _ => panic!("mul: operands do not belong to family {self}"),
        }
    }

    pub fn inverse(&self, a: &Vertex) -> Vertex {
        match (*self, a) {
            (GraphFamily::ZLattice { .. }, Vertex::Lattice(x)) => Vertex::Lattice(x.iter().map(|p| -p).collect()),
            (GraphFamily::RegularTree { .. }, Vertex::Tree(w)) => Vertex::Tree(w.iter().rev().copied().collect()),
            (GraphFamily::Lamplighter { m, .. }, Vertex::Lamplighter(x)) => {
                let lamps = x.lamps.iter().map(|&(p, v)| (p - x.pos, (m - v) % m)).collect();
                Vertex::Lamplighter(LampState { lamps, pos: -x.pos })
            }
            (GraphFamily::Heisenberg, Vertex::Heisenberg([a, b, c])) => Vertex::Heisenberg([-a, -b, a * b - c]),
            _ => panic!("inverse: operand does not belong to family {self}"),
        }
    }

    pub fn generator_name(&self, s: usize) -> String {
        match *self {
            GraphFamily::ZLattice { .. } => format!("{}e{}", if s.is_multiple_of(2) { "+" } else { "-" }, s / 2),
            GraphFamily::RegularTree { .. } => format!("a{s}"),
            GraphFamily::Lamplighter { m, generators: LampGenerators::S0 } => {
                let m = m as usize;
                if s < m {
                    format!("({s}d1,+1)")
                } else {
                    format!("({}d0,-1)", s - m)
                }
            }
            GraphFamily::Lamplighter { generators: LampGenerators::Standard, .. } => match s {
                0 => "(0,+1)".into(),
                1 => "(0,-1)".into(),
                _ => format!("({}d0,0)", s - 1),
            },
            GraphFamily::Heisenberg => ["x", "x^-1", "y", "y^-1"][s].into(),
        }
    }
}

impl fmt::Display for GraphFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphFamily::ZLattice { dim } => write!(f, "z:{dim}"),
            GraphFamily::RegularTree { degree } => write!(f, "tree:{degree}"),
            GraphFamily::Lamplighter { m, generators: LampGenerators::S0 } => write!(f, "lamplighter:{m}:s0"),
            GraphFamily::Lamplighter { m, generators: LampGenerators::Standard } => write!(f, "lamplighter:{m}:std"),
            GraphFamily::Heisenberg => write!(f, "heisenberg"),
        }
    }
}

impl FromStr for GraphFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |t: &str| -> Result<usize> {
            t.parse().map_err(|_| Error::InvalidInput(format!("bad integer {t:?} in graph spec {s:?}")))
        };
        let family = match parts.as_slice() {
            ["z", d] => GraphFamily::ZLattice { dim: num(d)? },
            ["tree", k] => GraphFamily::RegularTree { degree: num(k)? },
            ["lamplighter", m] => GraphFamily::Lamplighter { m: num(m)? as u32, generators: LampGenerators::S0 },
            ["lamplighter", m, g] => {
                let generators = match *g {
                    "s0" => LampGenerators::S0,
                    "std" => LampGenerators::Standard,
                    _ => return invalid(format!("unknown lamplighter generator set {g:?}")),
                };
                GraphFamily::Lamplighter { m: num(m)? as u32, generators }
            }
            ["heisenberg"] => GraphFamily::Heisenberg,
            _ => return invalid(format!("unknown graph spec {s:?}")),
        };
        family.validate()?;
        Ok(family)
    }
}
