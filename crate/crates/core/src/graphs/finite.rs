use std::collections::VecDeque;
use std::fmt::Write as _;

use crate::error::{Error, Result};

use super::Vertex;

/// Marks an edge that is not a Cayley-graph generator edge (long-range bonds).
pub const NO_GENERATOR: u16 = u16::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Neighbor {
    pub to: u32,
    /// Index of the generator `s` with `label(to) = label(from) · s`, or [`NO_GENERATOR`].
    pub generator: u16,
}

/// A finite labelled simple graph. Vertex order is significant: every matrix built from it
/// uses the same order.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteGraph {
    pub labels: Vec<Vertex>,
    pub adjacency: Vec<Vec<Neighbor>>,
    /// Degree `k` of the ambient regular graph, if there is one.
    pub ambient_degree: Option<usize>,
}

impl FiniteGraph {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[i].iter().map(|n| n.to as usize)
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Undirected edges `(i, j, generator)` with `i < j`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize, u16)> {
        let mut out: Vec<_> = self
            .adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, nb)| nb.iter().filter(move |n| (n.to as usize) > i).map(move |n| (i, n.to as usize, n.generator)))
            .collect();
        out.sort_unstable();
        out
    }

    /// Builds a graph from undirected edges; the generator label is stored as seen from `i`
    /// and its inverse is supplied by `inverse` for the reverse direction.
    pub fn from_edges(
        labels: Vec<Vertex>,
        edges: &[(usize, usize, u16)],
        ambient_degree: Option<usize>,
        inverse: impl Fn(u16) -> u16,
    ) -> Self {
        let mut adjacency = vec![Vec::new(); labels.len()];
        for &(i, j, g) in edges {
            adjacency[i].push(Neighbor { to: j as u32, generator: g });
            let back = if g == NO_GENERATOR { g } else { inverse(g) };
            adjacency[j].push(Neighbor { to: i as u32, generator: back });
        }
        for nb in &mut adjacency {
            nb.sort_unstable_by_key(|n| n.to);
        }
        FiniteGraph { labels, adjacency, ambient_degree }
    }

    /// BFS distances from `src`; unreachable vertices get `u32::MAX`.
    pub fn bfs(&self, src: usize) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.len()];
        let mut queue = VecDeque::new();
        dist[src] = 0;
        queue.push_back(src);
        while let Some(v) = queue.pop_front() {
            for w in self.neighbors(v) {
                if dist[w] == u32::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// Component index per vertex and the number of components.
    pub fn components(&self) -> (Vec<usize>, usize) {
        let mut comp = vec![usize::MAX; self.len()];
        let mut count = 0;
        let mut stack = Vec::new();
        for s in 0..self.len() {
            if comp[s] != usize::MAX {
                continue;
            }
            comp[s] = count;
            stack.push(s);
            while let Some(v) = stack.pop() {
                for w in self.neighbors(v) {
                    if comp[w] == usize::MAX {
                        comp[w] = count;
                        stack.push(w);
                    }
                }
            }
            count += 1;
        }
        (comp, count)
    }

    pub fn is_connected(&self) -> bool {
        self.len() <= 1 || self.components().1 == 1
    }

    /// Exact diameter by BFS from every vertex.
    pub fn diameter(&self) -> Result<usize> {
        let (_, c) = self.components();
        if c > 1 {
            return Err(Error::Disconnected { components: c });
        }
        Ok((0..self.len()).map(|s| *self.bfs(s).iter().max().unwrap_or(&0) as usize).max().unwrap_or(0))
    }

    /// Double-sweep BFS lower bound on the diameter.
    pub fn diameter_lower_bound(&self) -> usize {
        if self.is_empty() {
            return 0;
        }
        let d0 = self.bfs(0);
        let far = (0..self.len()).filter(|&i| d0[i] != u32::MAX).max_by_key(|&i| (d0[i], std::cmp::Reverse(i))).unwrap();
        let d1 = self.bfs(far);
        d1.iter().filter(|&&d| d != u32::MAX).copied().max().unwrap_or(0) as usize
    }

    /// Subgraph induced on `keep` (in the given order).
    pub fn induced(&self, keep: &[usize]) -> FiniteGraph {
        let mut local = vec![u32::MAX; self.len()];
        for (i, &v) in keep.iter().enumerate() {
            local[v] = i as u32;
        }
        let adjacency = keep
            .iter()
            .map(|&v| {
                let mut nb: Vec<Neighbor> = self.adjacency[v]
                    .iter()
                    .filter(|n| local[n.to as usize] != u32::MAX)
                    .map(|n| Neighbor { to: local[n.to as usize], generator: n.generator })
                    .collect();
                nb.sort_unstable_by_key(|n| n.to);
                nb
            })
            .collect();
        FiniteGraph {
            labels: keep.iter().map(|&v| self.labels[v].clone()).collect(),
            adjacency,
            ambient_degree: self.ambient_degree,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.adjacency.iter().enumerate().all(|(i, nb)| {
            nb.iter().all(|n| self.adjacency[n.to as usize].iter().any(|b| b.to as usize == i))
                && nb.windows(2).all(|p| p[0].to < p[1].to)
                && nb.iter().all(|n| n.to as usize != i)
        })
    }

    /// Edge-list dump: a `# vertices=<n> family=<spec>` header, then one `u v` line per edge.
    pub fn edge_list(&self, family: &str) -> String {
        let mut out = format!("# vertices={} family={}\n", self.len(), family);
        for (i, j, _) in self.edges() {
            let _ = writeln!(out, "{i} {j}");
        }
        out
    }
}
