//! IDS of the full-graph Laplacian: the band integral on `Z^d` and eigenvalue counting on
//! Følner sets.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graphs::{induced_subgraph, GraphFamily, LampState, Vertex};
use crate::operators::{assemble, OperatorKind};
use crate::spectra::{count_leq, dense_values, DENSE_LIMIT};

use super::{CurveSource, IDSCurve, IdsPoint};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum PeriodicMethod {
    ClosedForm,
    /// Boxes of side `level` on `Z^d`; `{(φ, x) : supp φ ⊆ [-level, level], |x| ≤ level}`
    /// on the lamplighter group.
    Folner { level: usize },
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// `N_per(E)` on `Z^d`: the normalized measure of `{θ : Σ 2(1 - cos θ_i) ≤ E}`.
pub fn z_closed_form(dim: usize, e: f64) -> f64 {
    band(dim, e, 1e-13)
}

fn band(dim: usize, e: f64, tol: f64) -> f64 {
    if e <= 0.0 {
        return 0.0;
    }
    if e >= 4.0 * dim as f64 {
        return 1.0;
    }
    if dim == 1 {
        return 2.0 * (e.sqrt() / 2.0).asin() / PI;
    }
    // (1/π) ∫_0^{θ*} N_{d-1}(E - 2 + 2cos θ) dθ with θ = θ*(1 - t²), which removes the
    // square-root endpoint behaviour at θ*.
    let theta_max = if e < 4.0 { 2.0 * (e.sqrt() / 2.0).asin() } else { PI };
    let scale = e.min(1.0);
    let inner_tol = tol * scale;
    let f = |t: f64| {
        let th = theta_max * (1.0 - t * t);
        let s = (th / 2.0).sin();
        band(dim - 1, e - 4.0 * s * s, inner_tol) * 2.0 * theta_max * t
    };
    simpson(&f, 0.0, 1.0, tol * scale) / PI
}

/// Folner set labels and the family's ambient degree.
fn folner_set(family: &GraphFamily, level: usize) -> Result<Vec<Vertex>> {
    match *family {
        GraphFamily::ZLattice { dim } => {
            let total = (level as f64).powi(dim as i32);
            if total > crate::graphs::vertex_budget() as f64 {
                return Err(Error::Budget { budget: crate::graphs::vertex_budget(), what: format!("box of side {level} in dimension {dim}") });
            }
            let mut out = vec![Vec::new()];
            for _ in 0..dim {
                out = out.into_iter().flat_map(|p: Vec<i64>| (0..level as i64).map(move |x| [p.clone(), vec![x]].concat())).collect();
            }
            Ok(out.into_iter().map(Vertex::Lattice).collect())
        }
        GraphFamily::Lamplighter { m, .. } => {
            let cells = 2 * level + 1;
            let total = cells as f64 * (m as f64).powi(cells as i32);
            if total > crate::graphs::vertex_budget() as f64 {
                return Err(Error::Budget { budget: crate::graphs::vertex_budget(), what: format!("lamplighter Følner set of level {level}") });
            }
            let mut out = Vec::with_capacity(total as usize);
            for config in 0..(m as usize).pow(cells as u32) {
                for x in -(level as i64)..=level as i64 {
                    let mut st = LampState::identity();
                    let mut c = config;
                    for cell in -(level as i64)..=level as i64 {
                        st.add_lamp(cell, (c % m as usize) as u32, m);
                        c /= m as usize;
                    }
                    st.pos = x;
                    out.push(Vertex::Lamplighter(st));
                }
            }
            Ok(out)
        }
        _ => invalid(format!("no built-in Følner sequence for {family}")),
    }
}

/// Fraction of the level-`level` Følner set within distance `d` of its complement, for
/// `d = 0..=d_max`.
pub(crate) fn folner_depth_fractions(family: &GraphFamily, level: usize, d_max: usize) -> Result<Vec<f64>> {
    let g = induced_subgraph(family, folner_set(family, level)?)?;
    let k = family.degree();
    let mut dist = vec![usize::MAX; g.len()];
    let mut frontier: Vec<usize> = (0..g.len()).filter(|&i| g.degree(i) < k).collect();
    for &i in &frontier {
        dist[i] = 1;
    }
    let mut d = 1;
    while !frontier.is_empty() && d < d_max {
        let mut next = Vec::new();
        for &i in &frontier {
            for j in g.neighbors(i) {
                if dist[j] == usize::MAX {
                    dist[j] = d + 1;
                    next.push(j);
                }
            }
        }
        frontier = next;
        d += 1;
    }
    let n = g.len() as f64;
    Ok((0..=d_max).map(|d| dist.iter().filter(|&&x| x <= d).count() as f64 / n).collect())
}

/// `N_per` on `grid`. Følner levels count eigenvalues of the restriction `H^A(Λ)` per volume.
pub fn ids_periodic(family: GraphFamily, method: PeriodicMethod, grid: &[f64]) -> Result<IDSCurve> {
    family.validate()?;
    let (points, source) = match method {
        PeriodicMethod::ClosedForm => {
            let GraphFamily::ZLattice { dim } = family else {
                return invalid(format!("closed form is available for lattices only, not {family}"));
            };
            let pts = grid
                .iter()
                .map(|&e| {
                    let n = z_closed_form(dim, e);
                    IdsPoint { e, n, stderr: 0.0, n_low: n, n_high: n, ln_n: n.ln() }
                })
                .collect();
            (pts, CurveSource::ClosedForm)
        }
        PeriodicMethod::Folner { level } => {
            if level == 0 {
                return invalid("Følner level must be positive");
            }
            let labels = folner_set(&family, level)?;
            let g = induced_subgraph(&family, labels)?;
            let k = family.degree();
            let size = g.len();
            let boundary = (0..size).filter(|&i| g.degree(i) < k).count();
            let op = assemble(&g, OperatorKind::A, None)?;
            let counts: Vec<usize> = if size <= DENSE_LIMIT {
                let vals = dense_values(&op);
                grid.iter().map(|&e| vals.partition_point(|&l| l <= e)).collect()
            } else {
                grid.iter().map(|&e| count_leq(&op, e).map(|c| c.count)).collect::<Result<_>>()?
            };
            let pts = grid
                .iter()
                .zip(counts)
                .map(|(&e, c)| {
                    let n = c as f64 / size as f64;
                    IdsPoint { e, n, stderr: 0.0, n_low: n, n_high: n, ln_n: n.ln() }
                })
                .collect();
            (pts, CurveSource::Folner { level, vertices: size, boundary_ratio: boundary as f64 / size as f64 })
        }
    };
    Ok(IDSCurve {
        kind: OperatorKind::A,
        family: family.to_string(),
        model: None,
        source,
        points,
        atom: 0.0,
        atom_stderr: 0.0,
        fundamental_domain: 1,
        censored_fraction: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_band() {
        assert!((z_closed_form(1, 2.0) - 0.5).abs() < 1e-15);
        assert_eq!(z_closed_form(1, 4.0), 1.0);
        for e in [0.1, 1.0, 3.0] {
            assert!((z_closed_form(1, e) - (1.0 - e / 2.0).acos() / PI).abs() < 1e-13);
        }
    }

    #[test]
    fn two_dimensional_band() {
        // Symmetry E <-> 8 - E of the square-lattice band.
        for e in [0.5, 2.0, 3.5] {
            assert!((z_closed_form(2, e) + z_closed_form(2, 8.0 - e) - 1.0).abs() < 1e-9);
        }
        assert!((z_closed_form(2, 4.0) - 0.5).abs() < 1e-9);
        // Small-E asymptotics E/(4π).
        let e = 1e-6;
        assert!((z_closed_form(2, e) / (e / (4.0 * PI)) - 1.0).abs() < 1e-4);
    }

    #[test]
    fn folner_box_tracks_band() {
        let grid: Vec<f64> = (1..40).map(|i| i as f64 * 0.1).collect();
        let f = ids_periodic(GraphFamily::ZLattice { dim: 1 }, PeriodicMethod::Folner { level: 400 }, &grid).unwrap();
        for p in &f.points {
            assert!((p.n - z_closed_form(1, p.e)).abs() <= 2.0 / 400.0);
        }
        let lamp = GraphFamily::Lamplighter { m: 2, generators: crate::graphs::LampGenerators::S0 };
        let c = ids_periodic(lamp, PeriodicMethod::Folner { level: 2 }, &[4.0, 8.0]).unwrap();
        assert_eq!(c.points[1].n, 1.0);
        let CurveSource::Folner { vertices, .. } = c.source else { panic!() };
        assert_eq!(vertices, 5 * 32);
    }
}
