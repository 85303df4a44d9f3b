//! Reverse Cuthill–McKee ordering and a profile (skyline) `LDLᵀ` factorization of
//! `H - σI`, used for inertia counts, shift-invert Lanczos and inverse iteration.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::operators::SpectralOperator;

/// RCM permutation: `perm[new] = old`.
pub fn rcm_order(op: &SpectralOperator) -> Vec<usize> {
    let n = op.dim();
    let degree: Vec<usize> = (0..n).map(|i| op.row(i).count() - 1).collect();
    let mut seen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (degree[i], i));
    for &start in &by_degree {
        if seen[start] {
            continue;
        }
        let root = peripheral(op, start, &degree);
        seen[root] = true;
        let mut queue = VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nb: Vec<usize> = op.row(v).map(|(j, _)| j).filter(|&j| j != v && !seen[j]).collect();
            nb.sort_by_key(|&j| (degree[j], j));
            for j in nb {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    order.reverse();
    order
}

/// A pseudo-peripheral vertex of the component of `start`, by repeated BFS.
fn peripheral(op: &SpectralOperator, start: usize, degree: &[usize]) -> usize {
    let mut root = start;
    let mut ecc = 0;
    for _ in 0..8 {
        let (far, e) = farthest(op, root, degree);
        if e <= ecc {
            break;
        }
        ecc = e;
        root = far;
    }
    root
}

fn farthest(op: &SpectralOperator, src: usize, degree: &[usize]) -> (usize, usize) {
    let mut dist = std::collections::HashMap::from([(src, 0usize)]);
    let mut queue = VecDeque::from([src]);
    let mut best = (src, 0usize);
    while let Some(v) = queue.pop_front() {
        let d = dist[&v];
        if d > best.1 || (d == best.1 && degree[v] < degree[best.0]) {
            best = (v, d);
        }
        for (j, _) in op.row(v) {
            if let std::collections::hash_map::Entry::Vacant(e) = dist.entry(j) {
                e.insert(d + 1);
                queue.push_back(j);
            }
        }
    }
    best
}

/// Number of stored off-diagonal entries of the profile factor under `perm`.
pub fn profile_entries(op: &SpectralOperator, perm: &[usize]) -> usize {
    let mut inv = vec![0usize; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    perm.iter().enumerate().map(|(new, &old)| new - op.row(old).map(|(j, _)| inv[j]).fold(new, usize::min)).sum()
}

/// `P (H - σI) Pᵀ = L D Lᵀ` with unit lower-triangular `L` stored by rows in its profile.
#[derive(Clone, Debug)]
pub struct ProfileLdl {
    pub shift: f64,
    perm: Vec<usize>,
    first: Vec<usize>,
    start: Vec<usize>,
    lower: Vec<f64>,
    pub d: Vec<f64>,
}

impl ProfileLdl {
    /// Factors without pivoting; fails on a pivot below `pivot_tol` in magnitude.
    pub fn factor(op: &SpectralOperator, shift: f64, perm: &[usize], pivot_tol: f64) -> Result<Self> {
        let n = op.dim();
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for (new, &old) in perm.iter().enumerate() {
            for (j, _) in op.row(old) {
                first[new] = first[new].min(inv[j]);
            }
        }
        let mut start = vec![0usize; n + 1];
        for i in 0..n {
            start[i + 1] = start[i] + (i - first[i]);
        }
        let mut lower = vec![0.0; start[n]];
        let mut d = vec![0.0; n];
        let mut work = vec![0.0; n];
        for i in 0..n {
            let old = perm[i];
            let fi = first[i];
            for c in fi..=i {
                work[c] = 0.0;
            }
            for (j, v) in op.row(old) {
                work[inv[j]] = v;
            }
            work[i] -= shift;
            // work[c] holds A_ic minus the partial sums; turn it into L_ic D_c.
            for c in fi..i {
                let fc = first[c];
                let lo = fi.max(fc);
                let row_c = &lower[start[c]..start[c + 1]];
                let mut s = work[c];
                for t in lo..c {
                    s -= work[t] * row_c[t - fc];
                }
                work[c] = s;
            }
            let mut di = work[i];
            for c in fi..i {
                let l = work[c] / d[c];
                di -= l * work[c];
                lower[start[i] + (c - fi)] = l;
            }
            if !(di.abs() > pivot_tol) {
                return Err(Error::Convergence { iterations: i, residual: di.abs() });
            }
            d[i] = di;
        }
        Ok(ProfileLdl { shift, perm: perm.to_vec(), first, start, lower, d })
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    /// Number of negative pivots, i.e. eigenvalues of `H` below the shift.
    pub fn negative_count(&self) -> usize {
        self.d.iter().filter(|&&x| x < 0.0).count()
    }

    /// Solves `(H - σI) x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut y: Vec<f64> = self.perm.iter().map(|&o| b[o]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.lower[self.start[i]..self.start[i + 1]];
            let s: f64 = row.iter().zip(&y[fi..i]).map(|(l, v)| l * v).sum();
            y[i] -= s;
        }
        for i in 0..n {
            y[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let xi = y[i];
            let row = &self.lower[self.start[i]..self.start[i + 1]];
            for (c, l) in row.iter().enumerate() {
                y[fi + c] -= l * xi;
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }

    pub fn profile_size(&self) -> usize {
        self.lower.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::{build_window, GraphFamily};
    use crate::operators::{assemble, OperatorKind};

    #[test]
    fn solve_matches_operator() {
        let f = GraphFamily::ZLattice { dim: 2 };
        let w = build_window(f, f.identity(), 6).unwrap();
        let op = assemble(&w.graph, OperatorKind::A, None).unwrap();
        let perm = rcm_order(&op);
        let ldl = ProfileLdl::factor(&op, 0.3, &perm, 1e-14).unwrap();
        let b: Vec<f64> = (0..op.dim()).map(|i| (i as f64 * 0.37).sin()).collect();
        let x = ldl.solve(&b);
        let mut r = op.apply(&x);
        for i in 0..r.len() {
            r[i] -= 0.3 * x[i] + b[i];
        }
        assert!(r.iter().map(|v| v.abs()).fold(0.0, f64::max) < 1e-10);
    }

    #[test]
    fn inertia_matches_dense_count() {
        let f = GraphFamily::ZLattice { dim: 2 };
        let w = build_window(f, f.identity(), 5).unwrap();
        let op = assemble(&w.graph, OperatorKind::N, None).unwrap();
        let eig = nalgebra::SymmetricEigen::new(op.to_dense()).eigenvalues;
        let perm = rcm_order(&op);
        for e in [0.01, 0.5, 1.3, 2.77, 4.1, 7.9] {
            let ldl = ProfileLdl::factor(&op, e, &perm, 1e-14).unwrap();
            assert_eq!(ldl.negative_count(), eig.iter().filter(|&&l| l < e).count(), "E = {e}");
        }
    }

    #[test]
    fn rcm_is_a_permutation() {
        let f = GraphFamily::RegularTree { degree: 3 };
        let w = build_window(f, f.identity(), 5).unwrap();
        let op = assemble(&w.graph, OperatorKind::N, None).unwrap();
        let mut p = rcm_order(&op);
        p.sort_unstable();
        assert_eq!(p, (0..op.dim()).collect::<Vec<_>>());
    }
}
