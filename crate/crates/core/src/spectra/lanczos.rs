//! Shift-invert Lanczos for the low end of the spectrum of a positive semidefinite operator.

use faer::linalg::solvers::SolveCore;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Conj, MatMut, Side};
use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::operators::SpectralOperator;

use super::profile::{profile_entries, rcm_order, ProfileLdl};

pub struct LowEnd {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    /// Number of leading eigenpairs that are deflated kernel vectors.
    pub deflated: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn orthogonalize(w: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let c = dot(w, b);
            axpy(w, -c, b);
        }
    }
}

/// Normalised indicator vectors of the connected components of the operator's graph.
pub fn component_indicators(op: &SpectralOperator) -> Vec<Vec<f64>> {
    let n = op.dim();
    let mut comp = vec![usize::MAX; n];
    let mut count = 0;
    for s in 0..n {
        if comp[s] != usize::MAX {
            continue;
        }
        comp[s] = count;
        let mut stack = vec![s];
        while let Some(v) = stack.pop() {
            for (j, _) in op.row(v) {
                if comp[j] == usize::MAX {
                    comp[j] = count;
                    stack.push(j);
                }
            }
        }
        count += 1;
    }
    let mut out = vec![vec![0.0; n]; count];
    for (i, &c) in comp.iter().enumerate() {
        out[c][i] = 1.0;
    }
    for v in &mut out {
        normalize(v);
    }
    out
}

/// Above this many profile entries per vertex the shift-invert solves use a sparse Cholesky
/// factor with a fill-reducing ordering instead. Trees and lamplighter balls have no
/// ordering with a narrow profile.
const PROFILE_PER_VERTEX: usize = 64;

/// `(H - σ)^{-1}` for `σ` below the spectrum.
enum ShiftedInverse {
    Profile(ProfileLdl),
    Sparse(faer::sparse::linalg::solvers::Llt<usize, f64>),
}

impl ShiftedInverse {
    fn new(op: &SpectralOperator, sigma: f64) -> Result<Self> {
        let perm = rcm_order(op);
        let n = op.dim();
        if profile_entries(op, &perm) <= PROFILE_PER_VERTEX * n {
            return Ok(ShiftedInverse::Profile(ProfileLdl::factor(op, sigma, &perm, 0.0)?));
        }
        let lower: Vec<Triplet<usize, usize, f64>> = (0..n)
            .flat_map(|i| op.row(i).filter(move |&(j, _)| j >= i).map(move |(j, v)| Triplet::new(j, i, if i == j { v - sigma } else { v })))
            .collect();
        let m = SparseColMat::try_new_from_triplets(n, n, &lower).map_err(|e| Error::Invariant(format!("sparse operator assembly: {e:?}")))?;
        let llt = m.sp_cholesky(Side::Lower).map_err(|_| Error::Convergence { iterations: 0, residual: f64::NAN })?;
        Ok(ShiftedInverse::Sparse(llt))
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        match self {
            ShiftedInverse::Profile(ldl) => ldl.solve(b),
            ShiftedInverse::Sparse(llt) => {
                let mut x = b.to_vec();
                let n = x.len();
                llt.solve_in_place_with_conj(Conj::No, MatMut::from_column_major_slice_mut(&mut x, n, 1));
                x
            }
        }
    }
}

fn residual(op: &SpectralOperator, lambda: f64, v: &[f64]) -> f64 {
    let mut r = op.apply(v);
    axpy(&mut r, -lambda, v);
    dot(&r, &r).sqrt()
}

/// The `q` smallest eigenpairs. For operators whose kernel is spanned by component
/// indicators (kinds N and R) those are deflated exactly and returned first.
///
/// Converged pairs are locked and a further deflated run checks for eigenvalues a single
/// Krylov sequence missed (degenerate copies), swapping them in until none remain.
pub fn lowest(op: &SpectralOperator, q: usize, tol: f64) -> Result<LowEnd> {
    let n = op.dim();
    let norm = op.norm_bound().max(1.0);
    let deflation = if op.kind.has_constant_kernel() { component_indicators(op) } else { Vec::new() };
    let c = deflation.len();
    let mut values = Vec::new();
    let mut vectors = Vec::new();
    let mut residuals = Vec::new();
    for v in deflation.iter().take(q) {
        values.push(0.0);
        residuals.push(residual(op, 0.0, v));
        vectors.push(v.clone());
    }
    if q <= c {
        return Ok(LowEnd { values, vectors, residuals, deflated: q });
    }
    let want = (q - c).min(n - c);
    let sigma = -1e-6 * norm;
    let ldl = ShiftedInverse::new(op, sigma)?;
    let mut found = run(op, &ldl, &deflation, want, tol, norm)?;
    loop {
        if c + found.len() >= n {
            break;
        }
        let mut defl = deflation.clone();
        defl.extend(found.iter().map(|p| p.1.clone()));
        let next = run(op, &ldl, &defl, 1, tol, norm)?;
        let (imax, max_found) = found.iter().enumerate().map(|(i, p)| (i, p.0)).fold((0, f64::MIN), |a, b| if b.1 > a.1 { b } else { a });
        if next[0].0 < max_found - tol * norm {
            found[imax] = next.into_iter().next().unwrap();
        } else {
            break;
        }
    }
    found.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    for (l, v, r) in found {
        values.push(l);
        vectors.push(v);
        residuals.push(r);
    }
    Ok(LowEnd { values, vectors, residuals, deflated: c })
}

/// One Lanczos sequence on `(H - σ)^{-1}` restricted to the complement of `deflation`;
/// returns the `want` lowest eigenpairs `(λ, v, residual)` of that restriction.
fn run(op: &SpectralOperator, ldl: &ShiftedInverse, deflation: &[Vec<f64>], want: usize, tol: f64, norm: f64) -> Result<Vec<(f64, Vec<f64>, f64)>> {
    let n = op.dim();
    let max_m = n - deflation.len();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut seed = deflation.len() as u64 * 7919;
    let mut fresh = |basis: &[Vec<f64>]| -> Option<Vec<f64>> {
        for _ in 0..4 {
            seed += 1;
            let mut v: Vec<f64> = (0..n).map(|i| ((i as f64 + 1.0) * (0.6180339887 + seed as f64 * 0.1234567)).fract() - 0.5).collect();
            orthogonalize(&mut v, deflation);
            orthogonalize(&mut v, basis);
            if normalize(&mut v) > 1e-8 {
                return Some(v);
            }
        }
        None
    };
    basis.push(fresh(&basis).ok_or(Error::Convergence { iterations: 0, residual: f64::NAN })?);
    let mut last_check = 0;
    loop {
        let j = basis.len() - 1;
        let mut w = ldl.solve(&basis[j]);
        orthogonalize(&mut w, deflation);
        let a = dot(&w, &basis[j]);
        axpy(&mut w, -a, &basis[j]);
        if j > 0 {
            axpy(&mut w, -beta[j - 1], &basis[j - 1]);
        }
        orthogonalize(&mut w, &basis);
        orthogonalize(&mut w, deflation);
        alpha.push(a);
        let b = dot(&w, &w).sqrt();
        let m = basis.len();
        let exhausted = m >= max_m;
        let check = exhausted || (m >= want && (m - last_check >= 10 || b <= 1e-12 * a.abs()));
        if check {
            last_check = m;
            let mut t = DMatrix::zeros(m, m);
            for i in 0..m {
                t[(i, i)] = alpha[i];
                if i + 1 < m {
                    t[(i, i + 1)] = beta[i];
                    t[(i + 1, i)] = beta[i];
                }
            }
            let eig = SymmetricEigen::new(t);
            let mut idx: Vec<usize> = (0..m).collect();
            idx.sort_by(|&x, &y| eig.eigenvalues[y].partial_cmp(&eig.eigenvalues[x]).unwrap());
            let top = &idx[..want.min(m)];
            let converged = top.len() == want
                && top.iter().all(|&k| {
                    let theta = eig.eigenvalues[k];
                    theta > 0.0 && (b * eig.eigenvectors[(m - 1, k)]).abs() <= 0.1 * tol * theta * theta
                });
            if converged || exhausted {
                let mut pairs: Vec<(f64, Vec<f64>, f64)> = Vec::new();
                for &k in top {
                    let mut y = vec![0.0; n];
                    for (i, bv) in basis.iter().enumerate() {
                        axpy(&mut y, eig.eigenvectors[(i, k)], bv);
                    }
                    normalize(&mut y);
                    // Rayleigh quotient against H itself rather than sigma + 1/theta.
                    let hy = op.apply(&y);
                    let rq = dot(&hy, &y);
                    let r = residual(op, rq, &y);
                    pairs.push((rq, y, r));
                }
                let worst = pairs.iter().map(|p| p.2).fold(0.0, f64::max);
                if worst <= tol * norm {
                    return Ok(pairs);
                }
                if exhausted {
                    return Err(Error::Convergence { iterations: m, residual: worst });
                }
            }
        }
        if b <= 1e-12 * a.abs().max(1e-300) {
            // Invariant subspace: continue with a fresh orthogonal direction.
            beta.push(0.0);
            match fresh(&basis) {
                Some(v) => basis.push(v),
                None => return Err(Error::Convergence { iterations: m, residual: f64::NAN }),
            }
        } else {
            beta.push(b);
            w.iter_mut().for_each(|x| *x /= b);
            basis.push(w);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::{build_window, GraphFamily};
    use crate::operators::{assemble, OperatorKind};

    #[test]
    fn agrees_with_dense_on_a_ball() {
        let f = GraphFamily::ZLattice { dim: 2 };
        let w = build_window(f, f.identity(), 9).unwrap();
        for kind in [OperatorKind::N, OperatorKind::A, OperatorKind::D] {
            let op = assemble(&w.graph, kind, None).unwrap();
            let mut dense: Vec<f64> = SymmetricEigen::new(op.to_dense()).eigenvalues.iter().copied().collect();
            dense.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let low = lowest(&op, 6, 1e-9).unwrap();
            for (a, b) in low.values.iter().zip(&dense) {
                assert!((a - b).abs() < 1e-8 * op.norm_bound(), "{kind}: {a} vs {b}");
            }
            assert!(low.residuals.iter().all(|&r| r <= 1e-9 * op.norm_bound()));
        }
    }

    #[test]
    fn sparse_factor_on_a_tree_ball() {
        let f = GraphFamily::RegularTree { degree: 3 };
        let w = build_window(f, f.identity(), 9).unwrap();
        for kind in [OperatorKind::N, OperatorKind::D] {
            let op = assemble(&w.graph, kind, None).unwrap();
            assert!(matches!(ShiftedInverse::new(&op, -1e-6).unwrap(), ShiftedInverse::Sparse(_)));
            let mut dense: Vec<f64> = SymmetricEigen::new(op.to_dense()).eigenvalues.iter().copied().collect();
            dense.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let low = lowest(&op, 4, 1e-9).unwrap();
            for (a, b) in low.values.iter().zip(&dense) {
                assert!((a - b).abs() < 1e-8 * op.norm_bound(), "{kind}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn deflates_every_component() {
        let f = GraphFamily::ZLattice { dim: 1 };
        let w = build_window(f, f.identity(), 10).unwrap();
        let keep: Vec<usize> = (0..w.len()).filter(|&i| i != 3 && i != 4).collect();
        let g = w.graph.induced(&keep);
        let op = assemble(&g, OperatorKind::N, None).unwrap();
        let low = lowest(&op, 5, 1e-9).unwrap();
        assert_eq!(low.deflated, 3);
        assert_eq!(&low.values[..3], &[0.0, 0.0, 0.0]);
        assert!(low.values[3] > 1e-3);
    }
}
