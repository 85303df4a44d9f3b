//! Eigenvalues of assembled operators: dense and low-end spectra, counting functions,
//! local spectral weights, Rayleigh quotients and eigenvalue membership.

pub mod bounds;
mod lanczos;
mod profile;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::operators::SpectralOperator;

pub use lanczos::{component_indicators, lowest, LowEnd};
pub use profile::{rcm_order, ProfileLdl};

/// Largest dimension handled by the dense solver.
pub const DENSE_LIMIT: usize = 4000;
/// Default relative residual tolerance of the iterative solver.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Eigenvalues below this are treated as kernel.
pub fn kernel_tolerance(op: &SpectralOperator) -> f64 {
    1e-10 * op.norm_bound().max(1.0)
}

/// Full eigendecomposition, eigenvalues ascending, eigenvectors as columns.
#[derive(Clone, Debug)]
pub struct DenseSpectrum {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl DenseSpectrum {
    pub fn new(op: &SpectralOperator) -> Result<Self> {
        let n = op.dim();
        if n > DENSE_LIMIT {
            return Err(Error::Budget { budget: DENSE_LIMIT, what: format!("dense eigendecomposition of dimension {n}") });
        }
        if n == 1 {
            return Ok(DenseSpectrum { values: vec![op.diagonal[0]], vectors: DMatrix::from_element(1, 1, 1.0) });
        }
        let eig = SymmetricEigen::new(op.to_dense());
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, idx[c])]);
        Ok(DenseSpectrum { values, vectors })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `#{λ ≤ E}` with eigenvalues within `tol` of `E` counted as `≤ E`.
    pub fn count_leq(&self, e: f64, tol: f64) -> Count {
        let count = self.values.partition_point(|&l| l <= e + tol);
        let near_boundary = self.values.iter().any(|&l| (l - e).abs() <= tol);
        Count { count, near_boundary }
    }

    /// `Σ |ψ_i(x)|²` over `ktol ≤ λ_i ≤ E` and, separately, over `λ_i < ktol`.
    pub fn local_weight(&self, x: usize, e: f64, ktol: f64) -> LocalWeight {
        let mut weight = 0.0;
        let mut atom = 0.0;
        for (i, &l) in self.values.iter().enumerate() {
            let w = self.vectors[(x, i)].powi(2);
            if l < ktol {
                atom += w;
            } else if l <= e {
                weight += w;
            } else {
                break;
            }
        }
        LocalWeight { weight, atom }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Count {
    pub count: usize,
    /// Some eigenvalue lies within the tolerance of `E`.
    pub near_boundary: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LocalWeight {
    /// `⟨δ_x, χ_{]0,E]}(H) δ_x⟩`.
    pub weight: f64,
    /// `⟨δ_x, χ_{{0}}(H) δ_x⟩`.
    pub atom: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum SpectrumMode {
    Dense,
    LowEnd { q: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Solver {
    Dense,
    IterativeLowEnd { q: usize, tol: f64 },
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumSummary {
    pub dimension: usize,
    /// Ascending; all eigenvalues in dense mode, the lowest `q` otherwise.
    pub eigenvalues: Vec<f64>,
    pub kernel_dimension: usize,
    /// Lowest eigenvalue above the kernel tolerance, if it was computed.
    pub lambda_star: Option<f64>,
    pub solver: Solver,
    pub residuals: Vec<f64>,
    pub norm: f64,
}

fn residual(op: &SpectralOperator, lambda: f64, v: &[f64]) -> f64 {
    let hv = op.apply(v);
    hv.iter().zip(v).map(|(a, b)| (a - lambda * b).powi(2)).sum::<f64>().sqrt()
}

pub fn spectrum(op: &SpectralOperator, mode: SpectrumMode) -> Result<SpectrumSummary> {
    let norm = op.norm_bound();
    let ktol = kernel_tolerance(op);
    let (eigenvalues, residuals, solver) = match mode {
        SpectrumMode::Dense => {
            let d = DenseSpectrum::new(op)?;
            let res = (0..d.dim()).map(|i| residual(op, d.values[i], d.vectors.column(i).as_slice())).collect();
            (d.values, res, Solver::Dense)
        }
        SpectrumMode::LowEnd { q } => {
            if q == 0 || q >= op.dim() {
                return invalid(format!("low-end mode needs 0 < q < dimension, got q = {q}, dimension {}", op.dim()));
            }
            let low = lowest(op, q, DEFAULT_TOL)?;
            (low.values, low.residuals, Solver::IterativeLowEnd { q, tol: DEFAULT_TOL })
        }
    };
    if let Some(&min) = eigenvalues.first() {
        if min < -DEFAULT_TOL * norm.max(1.0) {
            return Err(Error::Invariant(format!("operator {} has eigenvalue {min} below zero", op.kind)));
        }
    }
    let kernel_dimension = eigenvalues.iter().filter(|&&l| l < ktol).count();
    let lambda_star = eigenvalues.iter().copied().find(|&l| l >= ktol);
    Ok(SpectrumSummary { dimension: op.dim(), eigenvalues, kernel_dimension, lambda_star, solver, residuals, norm })
}

/// `#{λ ≤ E}` counting multiplicity. Dense below [`DENSE_LIMIT`], otherwise by the
/// inertia of `H - (E ± tol)`.
pub fn count_leq(op: &SpectralOperator, e: f64) -> Result<Count> {
    let n = op.dim();
    let norm = op.norm_bound();
    let tol = DEFAULT_TOL * norm.max(1.0);
    if e < -tol {
        return Ok(Count { count: 0, near_boundary: false });
    }
    if e > norm + tol {
        return Ok(Count { count: n, near_boundary: false });
    }
    if n <= DENSE_LIMIT {
        return Ok(DenseSpectrum::new(op)?.count_leq(e, tol));
    }
    let perm = rcm_order(op);
    let above = inertia(op, e + tol, &perm)?;
    let below = inertia(op, e - tol, &perm)?;
    Ok(Count { count: above, near_boundary: above != below })
}

/// Number of eigenvalues below `shift`, nudging the shift off an exact singular pivot.
fn inertia(op: &SpectralOperator, shift: f64, perm: &[usize]) -> Result<usize> {
    let scale = op.norm_bound().max(1.0);
    for k in 0..4 {
        let s = shift + k as f64 * 1e-13 * scale;
        if let Ok(ldl) = ProfileLdl::factor(op, s, perm, 0.0) {
            return Ok(ldl.negative_count());
        }
    }
    Err(Error::Convergence { iterations: 4, residual: 0.0 })
}

pub fn local_spectral_weight(op: &SpectralOperator, x: usize, e: f64) -> Result<LocalWeight> {
    if x >= op.dim() {
        return Err(Error::OutOfRange { value: x as f64, limit: op.dim() as f64 });
    }
    Ok(DenseSpectrum::new(op)?.local_weight(x, e, kernel_tolerance(op)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LowestNonzero {
    pub value: f64,
    pub kernel_dimension: usize,
}

/// Below this dimension low-end queries use a dense eigenvalue solve.
const SMALL_DENSE: usize = 300;

/// Ascending eigenvalues without eigenvectors.
pub fn dense_values(op: &SpectralOperator) -> Vec<f64> {
    if op.dim() == 1 {
        return vec![op.diagonal[0]];
    }
    let mut v: Vec<f64> = op.to_dense().symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// The smallest eigenvalue, kernel included.
pub fn lowest_eigenvalue(op: &SpectralOperator) -> Result<f64> {
    if op.dim() <= SMALL_DENSE {
        return Ok(dense_values(op)[0]);
    }
    Ok(lowest(op, 1, DEFAULT_TOL)?.values[0])
}

/// `λ^#`: the smallest eigenvalue above [`kernel_tolerance`].
pub fn lowest_nonzero(op: &SpectralOperator) -> Result<LowestNonzero> {
    let ktol = kernel_tolerance(op);
    let n = op.dim();
    if n <= SMALL_DENSE {
        let values = dense_values(op);
        let kernel_dimension = values.partition_point(|&l| l < ktol);
        return match values.get(kernel_dimension) {
            Some(&value) => Ok(LowestNonzero { value, kernel_dimension }),
            None => Err(Error::Resolution(format!("operator {} has no eigenvalue above the kernel tolerance", op.kind))),
        };
    }
    let mut q = if op.kind.has_constant_kernel() { component_indicators(op).len() + 1 } else { 1 };
    while q <= n {
        let low = lowest(op, q, DEFAULT_TOL)?;
        let kernel_dimension = low.values.iter().filter(|&&l| l < ktol).count();
        if let Some(&value) = low.values.iter().find(|&&l| l >= ktol) {
            return Ok(LowestNonzero { value, kernel_dimension });
        }
        q = (q * 2).min(n).max(q + 1);
    }
    Err(Error::Resolution(format!("operator {} has no eigenvalue above the kernel tolerance", op.kind)))
}

/// `⟨Hφ, φ⟩ / ‖φ‖²` with the numerator from the edge-sum form.
pub fn rayleigh_quotient(op: &SpectralOperator, phi: &[f64]) -> Result<f64> {
    let q = op.quadratic_form(phi)?;
    let nn: f64 = phi.iter().map(|x| x * x).sum();
    if nn == 0.0 {
        return invalid("Rayleigh quotient of the zero vector");
    }
    Ok(q / nn)
}

#[derive(Clone, Debug, Serialize)]
pub struct EigenTest {
    pub is_eigenvalue: bool,
    /// `‖Hv - λv‖` for the unit vector `v` found by inverse iteration.
    pub residual: f64,
    /// The shift actually factored (differs from `λ` after jitter).
    pub shift: f64,
    #[serde(skip)]
    pub witness: Option<Vec<f64>>,
}

/// `(H - s)⁻¹` for inverse iteration: pivoted dense LU up to [`DENSE_LIMIT`], the profile
/// factorization above it.
enum ShiftedSolver {
    Dense(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
    Profile(ProfileLdl),
}

impl ShiftedSolver {
    fn new(op: &SpectralOperator, shift: f64, perm: Option<&[usize]>) -> Option<Self> {
        match perm {
            None => {
                let mut m = op.to_dense();
                for i in 0..op.dim() {
                    m[(i, i)] -= shift;
                }
                let lu = m.lu();
                let u = lu.u();
                (0..op.dim()).all(|i| u[(i, i)] != 0.0).then_some(ShiftedSolver::Dense(lu))
            }
            Some(p) => ProfileLdl::factor(op, shift, p, 0.0).ok().filter(|l| l.d.iter().all(|d| d.is_finite())).map(ShiftedSolver::Profile),
        }
    }

    fn solve(&self, b: &[f64]) -> Option<Vec<f64>> {
        match self {
            ShiftedSolver::Dense(lu) => lu.solve(&nalgebra::DVector::from_column_slice(b)).map(|x| x.as_slice().to_vec()),
            ShiftedSolver::Profile(l) => Some(l.solve(b)),
        }
    }
}

/// Decides whether `λ` is within `tol·‖H‖` of the spectrum by shifted inverse iteration.
/// An exactly singular `H - λ` is re-factored at `λ(1 ± 10⁻¹²)`, widening the jitter if
/// that is singular too.
pub fn is_eigenvalue(op: &SpectralOperator, lambda: f64, tol: f64) -> Result<EigenTest> {
    if lambda < 0.0 {
        return invalid("eigenvalue candidates must be nonnegative");
    }
    let n = op.dim();
    let norm = op.norm_bound().max(1.0);
    let perm = (n > DENSE_LIMIT).then(|| rcm_order(op));
    let scale = if lambda == 0.0 { norm } else { lambda };
    let mut shifts = vec![lambda];
    for rel in [1e-12, 1e-10, 1e-8] {
        shifts.push(lambda + rel * scale);
        shifts.push(lambda - rel * scale);
    }
    let (shift, solver) = shifts
        .into_iter()
        .find_map(|s| ShiftedSolver::new(op, s, perm.as_deref()).map(|f| (s, f)))
        .ok_or(Error::Convergence { iterations: 7, residual: 0.0 })?;
    let mut v: Vec<f64> = (0..n).map(|i| ((i as f64 + 1.0) * 0.7548776662).fract() - 0.5).collect();
    let mut best = (f64::INFINITY, v.clone());
    for _ in 0..30 {
        let Some(mut w) = solver.solve(&v) else { break };
        let nw = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !nw.is_finite() || nw == 0.0 {
            break;
        }
        w.iter_mut().for_each(|x| *x /= nw);
        let r = residual(op, lambda, &w);
        let improved = r < 0.5 * best.0;
        if r < best.0 {
            best = (r, w.clone());
        }
        v = w;
        if best.0 <= 1e-3 * tol * norm || !improved && best.0 <= tol * norm {
            break;
        }
    }
    let (res, w) = best;
    let ok = res <= tol * norm;
    Ok(EigenTest { is_eigenvalue: ok, residual: res, shift, witness: ok.then_some(w) })
}

/// A unit eigenvector for `λ` that vanishes on the masked vertices: the eigenspace of the
/// unmasked block at `λ`, reduced to the combination annihilated by the masked rows.
/// Returns the vector and `‖Hv - λv‖`.
pub fn witness_vanishing_on(op: &SpectralOperator, lambda: f64, mask: &[bool], tol: f64) -> Result<(Vec<f64>, f64)> {
    let n = op.dim();
    if mask.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: mask.len() });
    }
    let inner: Vec<usize> = (0..n).filter(|&i| !mask[i]).collect();
    if inner.len() > DENSE_LIMIT {
        return Err(Error::Budget { budget: DENSE_LIMIT, what: format!("dense witness search on {} vertices", inner.len()) });
    }
    let block = DMatrix::from_fn(inner.len(), inner.len(), |r, c| op.row(inner[r]).find(|&(j, _)| j == inner[c]).map_or(0.0, |e| e.1));
    let eig = SymmetricEigen::new(block);
    let norm = op.norm_bound().max(1.0);
    let cols: Vec<usize> = (0..inner.len()).filter(|&i| (eig.eigenvalues[i] - lambda).abs() <= tol * norm).collect();
    if cols.is_empty() {
        return Err(Error::Resolution(format!("{lambda} is not an eigenvalue of the unmasked block")));
    }
    let outer: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
    let basis = DMatrix::from_fn(inner.len(), cols.len(), |r, c| eig.eigenvectors[(r, cols[c])]);
    let coeffs = if outer.is_empty() {
        nalgebra::DVector::from_fn(cols.len(), |i, _| if i == 0 { 1.0 } else { 0.0 })
    } else {
        let coupling = DMatrix::from_fn(outer.len(), inner.len(), |r, c| op.row(outer[r]).find(|&(j, _)| j == inner[c]).map_or(0.0, |e| e.1));
        let m = coupling * &basis;
        let gram = m.transpose() * &m;
        let g = SymmetricEigen::new(gram);
        let k = (0..cols.len()).min_by(|&a, &b| g.eigenvalues[a].total_cmp(&g.eigenvalues[b])).unwrap();
        g.eigenvectors.column(k).into_owned()
    };
    let local = basis * coeffs;
    let mut v = vec![0.0; n];
    for (a, &i) in inner.iter().enumerate() {
        v[i] = local[a];
    }
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= nv);
    let r = residual(op, lambda, &v);
    Ok((v, r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::{build_window, linear_subgraph, GraphFamily};
    use crate::operators::{assemble, OperatorKind};
    use std::f64::consts::PI;

    fn path(n: usize, kind: OperatorKind) -> SpectralOperator {
        let g = linear_subgraph(GraphFamily::ZLattice { dim: 1 }, n.max(1)).unwrap();
        let g = if n == 0 { g.induced(&[0]) } else { g };
        assemble(&g, kind, None).unwrap()
    }

    #[test]
    fn path_spectra() {
        let s = spectrum(&path(2, OperatorKind::N), SpectrumMode::Dense).unwrap();
        for (a, b) in s.eigenvalues.iter().zip([0.0, 1.0, 3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(s.kernel_dimension, 1);
        for m in [1usize, 7, 50] {
            let s = spectrum(&path(m - 1, OperatorKind::A), SpectrumMode::Dense).unwrap();
            for (j, l) in s.eigenvalues.iter().enumerate() {
                let exact = 2.0 - 2.0 * (PI * (j + 1) as f64 / (m + 1) as f64).cos();
                assert!((l - exact).abs() < 1e-10, "m = {m}");
            }
            assert_eq!(s.kernel_dimension, 0);
        }
    }

    #[test]
    fn single_vertex_dirichlet() {
        let s = spectrum(&path(0, OperatorKind::D), SpectrumMode::Dense).unwrap();
        assert_eq!(s.eigenvalues, vec![4.0]);
    }

    #[test]
    fn counting() {
        let op = path(2, OperatorKind::N);
        assert_eq!(count_leq(&op, 2.0).unwrap().count, 2);
        assert_eq!(count_leq(&op, -0.5).unwrap().count, 0);
        assert_eq!(count_leq(&op, 2.0 * op.norm_bound()).unwrap().count, 3);
        let c = count_leq(&op, 1.0).unwrap();
        assert_eq!(c.count, 2);
        assert!(c.near_boundary);
    }

    #[test]
    fn inertia_route_agrees_with_dense() {
        let f = GraphFamily::ZLattice { dim: 2 };
        let w = build_window(f, f.identity(), 45).unwrap();
        let op = assemble(&w.graph, OperatorKind::N, None).unwrap();
        assert!(op.dim() > DENSE_LIMIT);
        let sub = build_window(f, f.identity(), 20).unwrap();
        let small = assemble(&sub.graph, OperatorKind::D, None).unwrap();
        let d = DenseSpectrum::new(&small).unwrap();
        let perm = rcm_order(&small);
        for e in [0.003, 0.1, 1.0, 3.3, 7.5] {
            assert_eq!(inertia(&small, e, &perm).unwrap(), d.values.partition_point(|&l| l < e));
        }
        let c = count_leq(&op, 0.01).unwrap();
        assert!(c.count >= 1 && c.count < op.dim());
    }

    #[test]
    fn local_weights() {
        let op = path(0, OperatorKind::N);
        let w = local_spectral_weight(&op, 0, 1.0).unwrap();
        assert_eq!((w.weight, w.atom), (0.0, 1.0));
        let op = path(1, OperatorKind::N);
        let w = local_spectral_weight(&op, 1, 2.0).unwrap();
        assert!((w.weight - 0.5).abs() < 1e-12 && (w.atom - 0.5).abs() < 1e-12);
        let op = path(6, OperatorKind::N);
        let d = DenseSpectrum::new(&op).unwrap();
        for e in [0.2, 1.0, 2.5] {
            let total: f64 = (0..7).map(|x| d.local_weight(x, e, 1e-10).weight).sum();
            assert!((total - (d.count_leq(e, 0.0).count - 1) as f64).abs() < 1e-10);
        }
    }

    #[test]
    fn lowest_nonzero_on_paths() {
        assert!((lowest_nonzero(&path(1, OperatorKind::N)).unwrap().value - 2.0).abs() < 1e-12);
        for n in [3usize, 10, 40] {
            let l = lowest_nonzero(&path(n, OperatorKind::N)).unwrap();
            assert!((l.value - 2.0 * (1.0 - (PI / (n + 1) as f64).cos())).abs() < 1e-10);
            assert_eq!(l.kernel_dimension, 1);
        }
    }

    #[test]
    fn ramp_quotient() {
        for n in [1usize, 5, 30] {
            let op = path(n, OperatorKind::N);
            let ramp: Vec<f64> = (0..=n).map(|i| i as f64 - n as f64 / 2.0).collect();
            let rq = rayleigh_quotient(&op, &ramp).unwrap();
            assert!(rq <= 12.0 / (n * n) as f64 + 1e-12);
            assert!(rq >= lowest_nonzero(&op).unwrap().value - 1e-9);
        }
        assert_eq!(rayleigh_quotient(&path(3, OperatorKind::N), &[1.0; 4]).unwrap(), 0.0);
        assert!(rayleigh_quotient(&path(3, OperatorKind::N), &[0.0; 4]).is_err());
    }

    #[test]
    fn membership() {
        let op = path(1, OperatorKind::N);
        let t = is_eigenvalue(&op, 2.0, 1e-8).unwrap();
        assert!(t.is_eigenvalue && t.witness.is_some());
        assert!(!is_eigenvalue(&op, 1.0, 1e-8).unwrap().is_eigenvalue);
        assert!(is_eigenvalue(&op, 0.0, 1e-8).unwrap().is_eigenvalue);
    }

    #[test]
    fn witness_vanishes_where_asked() {
        // On a path of 5 the eigenvector sin(πj/2) for the middle eigenvalue vanishes at even sites.
        let op = path(4, OperatorKind::A);
        let lambda = 2.0 - 2.0 * (PI * 3.0 / 6.0).cos();
        let mask = [false, true, false, true, false];
        let (v, r) = witness_vanishing_on(&op, lambda, &mask, 1e-9).unwrap();
        assert!(r < 1e-10);
        assert!(v[1].abs() < 1e-12 && v[3].abs() < 1e-12);
    }

    #[test]
    fn low_end_summary() {
        let f = GraphFamily::ZLattice { dim: 2 };
        let w = build_window(f, f.identity(), 8).unwrap();
        let op = assemble(&w.graph, OperatorKind::N, None).unwrap();
        let s = spectrum(&op, SpectrumMode::LowEnd { q: 4 }).unwrap();
        let d = spectrum(&op, SpectrumMode::Dense).unwrap();
        assert_eq!(s.kernel_dimension, 1);
        for (a, b) in s.eigenvalues.iter().zip(&d.eigenvalues) {
            assert!((a - b).abs() < 1e-8 * s.norm);
        }
        assert!(spectrum(&op, SpectrumMode::LowEnd { q: op.dim() }).is_err());
    }
}
