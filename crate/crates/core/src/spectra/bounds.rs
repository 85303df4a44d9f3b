//! Checkers for the eigenvalue inequalities on finite subgraphs: Faber–Krahn, the Dirichlet
//! ball bound, Cheeger, linear paths, and the tetrahedron and thickening facts of the
//! lamplighter group.

use std::f64::consts::PI;
use std::fmt;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::graphs::{
    build_window, growth_table, linear_subgraph, tetrahedron, thicken, thickening_radius, word_length, FiniteGraph, GraphFamily, GrowthTable,
    LampGenerators, Tetrahedron,
};
use crate::operators::{assemble, OperatorKind, SpectralOperator};

use super::{is_eigenvalue, lowest_eigenvalue, lowest_nonzero, witness_vanishing_on, DENSE_LIMIT};

/// Exact diameters are computed up to this size; above it Cheeger uses `2/|G'|²`.
pub const CHEEGER_EXACT_DIAMETER: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum BoundId {
    FaberKrahn,
    DirichletBall,
    Cheeger,
    LinearPath,
    Tetrahedron,
    ThickeningComparison,
}

impl fmt::Display for BoundId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundReport {
    pub bound_id: BoundId,
    pub instance: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    /// Signed margin in the direction of the inequality.
    pub slack: f64,
}

impl BoundReport {
    fn upper(bound_id: BoundId, instance: String, lhs: f64, rhs: f64) -> Self {
        BoundReport { bound_id, instance, lhs, rhs, holds: lhs <= rhs, slack: rhs - lhs }
    }

    fn lower(bound_id: BoundId, instance: String, lhs: f64, rhs: f64) -> Self {
        BoundReport { bound_id, instance, lhs, rhs, holds: lhs >= rhs, slack: lhs - rhs }
    }

    pub const CSV_HEADER: &'static str = "bound_id,instance,lhs,rhs,holds,slack";

    pub fn csv_row(&self) -> String {
        format!("{},{},{:e},{:e},{},{:e}", self.bound_id, self.instance, self.lhs, self.rhs, self.holds, self.slack)
    }
}

fn ambient(graph: &FiniteGraph) -> Result<usize> {
    graph.ambient_degree.ok_or_else(|| Error::InvalidInput("bound needs a regular ambient graph".into()))
}

/// `λ^A(G') ≥ 1 / (128 k² φ(2|G'|)²)` for a finite connected subgraph of a Cayley graph.
pub fn faber_krahn(graph: &FiniteGraph, table: &GrowthTable, instance: &str) -> Result<BoundReport> {
    let k = ambient(graph)? as f64;
    let phi = table.phi(2 * graph.len() as u64)? as f64;
    let op = assemble(graph, OperatorKind::A, None)?;
    let lhs = lowest_eigenvalue(&op)?;
    Ok(BoundReport::lower(BoundId::FaberKrahn, instance.into(), lhs, 1.0 / (128.0 * k * k * phi * phi)))
}

/// The Rayleigh quotient of the radial test function on `B(n)`:
/// `k V(n) / (⌈n/2⌉² V(⌊n/2⌋))`.
pub fn dirichlet_ball_rhs(family: &GraphFamily, table: &GrowthTable, n: usize) -> Result<f64> {
    let k = family.degree() as f64;
    let half_up = n.div_ceil(2) as f64;
    Ok(k * table.volume(n as i64)? as f64 / (half_up * half_up * table.volume((n / 2) as i64)? as f64))
}

/// Rayleigh quotient of the radial function `f(x) = min(1, (n - |x|)/⌈n/2⌉)` on `B(n)`.
pub fn radial_test_function(dist: &[u32], n: usize) -> Vec<f64> {
    let h = n.div_ceil(2) as f64;
    dist.iter().map(|&d| ((n as f64 - d as f64) / h).min(1.0)).collect()
}

/// `λ^D(B(n)) ≤ k V(n) / (⌈n/2⌉² V(⌊n/2⌋))`, and thus `≤ β_D⁺ k / n²`.
pub fn dirichlet_ball(family: GraphFamily, n: usize) -> Result<BoundReport> {
    if n == 0 {
        return invalid("ball bound needs n >= 1");
    }
    let table = growth_table(family, n)?;
    let w = build_window(family, family.identity(), n)?;
    let op = assemble(&w.graph, OperatorKind::D, None)?;
    let lhs = lowest_eigenvalue(&op)?;
    let rhs = dirichlet_ball_rhs(&family, &table, n)?;
    Ok(BoundReport::upper(BoundId::DirichletBall, format!("{family}/B({n})"), lhs, rhs))
}

/// Smallest `β` with `λ^D(B(n)) ≤ β k / n²` over the given ball reports.
pub fn fitted_dirichlet_constant(family: &GraphFamily, reports: &[(usize, f64)]) -> f64 {
    let k = family.degree() as f64;
    reports.iter().map(|&(n, l)| l * (n * n) as f64 / k).fold(0.0, f64::max)
}

/// `λ^N(G') ≥ 2 / (|G'| diam G')`, with `2/|G'|²` above [`CHEEGER_EXACT_DIAMETER`].
pub fn cheeger(graph: &FiniteGraph, instance: &str) -> Result<BoundReport> {
    let n = graph.len();
    if n < 2 {
        return invalid("Cheeger bound needs at least two vertices");
    }
    let rhs = if n <= CHEEGER_EXACT_DIAMETER { 2.0 / (n as f64 * graph.diameter()? as f64) } else { 2.0 / (n * n) as f64 };
    if !graph.is_connected() {
        return Err(Error::Disconnected { components: graph.components().1 });
    }
    let op = assemble(graph, OperatorKind::N, None)?;
    Ok(BoundReport::lower(BoundId::Cheeger, instance.into(), lowest_nonzero(&op)?.value, rhs))
}

/// `λ^N(L_n) ≤ 12/n²` for the linear subgraph of length `n`.
pub fn linear_path(family: GraphFamily, n: usize) -> Result<BoundReport> {
    let g = linear_subgraph(family, n)?;
    let op = assemble(&g, OperatorKind::N, None)?;
    let lhs = lowest_nonzero(&op)?.value;
    Ok(BoundReport::upper(BoundId::LinearPath, format!("{family}/L({n})"), lhs, 12.0 / (n * n) as f64))
}

/// `2m(1 - cos(π/n))`.
pub fn tetrahedron_eigenvalue(m: u32, n: usize) -> f64 {
    2.0 * m as f64 * (1.0 - (PI / n as f64).cos())
}

/// `sin(πj/n) g(a₁) h(b₁)` on the vertex at level `j` with tree addresses `a`, `b`, where
/// `g = h = δ₀ - δ₁` on `Z_m`. It vanishes on the inner boundary and is an eigenvector of
/// kinds N, A and D for [`tetrahedron_eigenvalue`].
pub fn tetrahedron_witness(tet: &Tetrahedron) -> Vec<f64> {
    let g = |d: Option<&u32>| match d {
        Some(0) => 1.0,
        Some(1) => -1.0,
        _ => 0.0,
    };
    let mut v: Vec<f64> = tet
        .pairs
        .iter()
        .map(|(x1, x2)| (PI * x1.level as f64 / tet.n as f64).sin() * g(x1.address.first()) * g(x2.address.first()))
        .collect();
    for (x, b) in v.iter_mut().zip(&tet.inner_boundary) {
        if *b {
            *x = 0.0;
        }
    }
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nv > 0.0 {
        v.iter_mut().for_each(|x| *x /= nv);
    }
    v
}

/// Membership of `2m(1 - cos π/n)` in the spectrum of one operator kind on `K_n`.
#[derive(Clone, Debug, Serialize)]
pub struct TetrahedronEigen {
    pub kind: OperatorKind,
    pub is_eigenvalue: bool,
    /// Inverse-iteration residual.
    pub residual: f64,
    /// Residual of the explicit witness.
    pub witness_residual: f64,
    /// `max_{inner boundary} |v| / max |v|` for the witness.
    pub witness_boundary_ratio: f64,
    /// Residual of the eigenvector found numerically inside the eigenspace of the
    /// interior block, when the interior is small enough for a dense solve.
    pub numerical_witness_residual: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TetrahedronFacts {
    pub m: u32,
    pub n: usize,
    pub vertices: usize,
    pub expected_vertices: usize,
    pub connected: bool,
    pub lambda: f64,
    pub eigen: Vec<TetrahedronEigen>,
    /// `λ^D(K_n) ≤ 2m(1 - cos π/n)`.
    pub dirichlet: BoundReport,
}

fn sup_ratio(v: &[f64], mask: &[bool]) -> f64 {
    let all = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let on = v.iter().zip(mask).filter(|p| *p.1).fold(0.0f64, |a, (x, _)| a.max(x.abs()));
    if all == 0.0 {
        f64::NAN
    } else {
        on / all
    }
}

fn residual(op: &SpectralOperator, lambda: f64, v: &[f64]) -> f64 {
    let hv = op.apply(v);
    hv.iter().zip(v).map(|(a, b)| (a - lambda * b).powi(2)).sum::<f64>().sqrt()
}

pub fn tetrahedron_facts(m: u32, n: usize, kinds: &[OperatorKind], tol: f64) -> Result<TetrahedronFacts> {
    if n < 2 {
        return invalid("tetrahedron eigenvalue needs n >= 2");
    }
    let tet = tetrahedron(m, n)?;
    let lambda = tetrahedron_eigenvalue(m, n);
    let witness = tetrahedron_witness(&tet);
    let interior = tet.inner_boundary.iter().filter(|b| !**b).count();
    let mut eigen = Vec::new();
    for &kind in kinds {
        if !matches!(kind, OperatorKind::N | OperatorKind::A | OperatorKind::D) {
            return invalid(format!("tetrahedron facts cover kinds N, A, D, not {kind}"));
        }
        let op = assemble(&tet.graph, kind, None)?;
        let t = is_eigenvalue(&op, lambda, tol)?;
        let numerical = if interior <= DENSE_LIMIT / 4 {
            Some(witness_vanishing_on(&op, lambda, &tet.inner_boundary, 1e-9)?.1)
        } else {
            None
        };
        eigen.push(TetrahedronEigen {
            kind,
            is_eigenvalue: t.is_eigenvalue,
            residual: t.residual,
            witness_residual: residual(&op, lambda, &witness),
            witness_boundary_ratio: sup_ratio(&witness, &tet.inner_boundary),
            numerical_witness_residual: numerical,
        });
    }
    let op = assemble(&tet.graph, OperatorKind::D, None)?;
    let lhs = lowest_eigenvalue(&op)?;
    let dirichlet = BoundReport::upper(BoundId::Tetrahedron, format!("K_{n}(m={m})"), lhs, lambda);
    Ok(TetrahedronFacts {
        m,
        n,
        vertices: tet.len(),
        expected_vertices: (n + 1) * (m as usize).pow(n as u32),
        connected: tet.graph.is_connected(),
        lambda,
        eigen,
        dirichlet,
    })
}

/// `ϱ = Σ_s L_s²` over the generators `s` of `family`, with `L_s` the `S0`-word length of `s`.
/// With it `λ^D(G(V_{n,R}, S)) ≤ ϱ λ^A(K_n)` for every `n` and `R ≥ 1`.
pub fn explicit_thickening_constant(family: &GraphFamily) -> Result<f64> {
    let GraphFamily::Lamplighter { m, .. } = *family else {
        return invalid("thickening is defined for lamplighter families");
    };
    let s0 = GraphFamily::Lamplighter { m, generators: LampGenerators::S0 };
    let mut rho = 0.0;
    for s in 0..family.degree() {
        let l = word_length(&s0, &family.generator(s), 8)? as f64;
        rho += l * l;
    }
    Ok(rho)
}

#[derive(Clone, Debug, Serialize)]
pub struct ThickeningReport {
    pub report: BoundReport,
    pub radius: usize,
    pub thickened_vertices: usize,
    pub lambda_a_tetrahedron: f64,
    /// `λ^D(V_{n,R}) / λ^A(K_n)`.
    pub fitted_rho: f64,
}

/// `λ^D(G(V_{n,R}, S)) ≤ ϱ λ^A(K_n)` with the explicit `ϱ`; `R` defaults to `R₀`.
pub fn thickening_comparison(family: GraphFamily, n: usize, radius: Option<usize>) -> Result<ThickeningReport> {
    let GraphFamily::Lamplighter { m, .. } = family else {
        return invalid("thickening is defined for lamplighter families");
    };
    let r0 = thickening_radius(&family)?;
    let radius = radius.unwrap_or(r0.max(1));
    let tet = tetrahedron(m, n)?;
    let thick = thicken(family, &tet, radius)?;
    let lambda_a = lowest_eigenvalue(&assemble(&tet.graph, OperatorKind::A, None)?)?;
    let lhs = lowest_eigenvalue(&assemble(&thick, OperatorKind::D, None)?)?;
    let rho = explicit_thickening_constant(&family)?;
    let report = BoundReport::upper(BoundId::ThickeningComparison, format!("{family}/V({n},{radius})"), lhs, rho * lambda_a);
    Ok(ThickeningReport { report, radius, thickened_vertices: thick.len(), lambda_a_tetrahedron: lambda_a, fitted_rho: lhs / lambda_a })
}
