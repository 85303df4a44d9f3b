//! The IDS of site percolation on `Z` as an exact series over cluster lengths.
//!
//! The anchor lies in an open segment of length `m` with probability `m p^m (1-p)²`, and
//! averaging over its `m` positions turns the local weight into `1/m` of the eigenvalue
//! count, so `N(E) - N(0) = Σ_m p^m (1-p)² #{λ ∈ ]0, E] of H(segment of m)}`. Terms are
//! summed in the log domain so that values far below the `f64` range stay usable.

use std::f64::consts::PI;

use crate::error::{invalid, Result};
use crate::operators::OperatorKind;

use super::{CurveSource, IDSCurve, IdsPoint};

/// `#{j ≥ 1 : 2 - 2cos(πj/den) ≤ E}`.
fn cos_count(den: usize, e: f64) -> usize {
    if e >= 4.0 {
        return den;
    }
    let theta = 2.0 * (e.sqrt() / 2.0).asin();
    (den as f64 * theta / PI).floor() as usize
}

/// Number of eigenvalues of `kind` on a segment of `m` sites in `]0, E]`.
pub fn segment_count(kind: OperatorKind, m: usize, e: f64) -> usize {
    match kind {
        // 2 - 2cos(πj/m), j = 0..m-1; j = 0 is the kernel.
        OperatorKind::N => cos_count(m, e).min(m - 1),
        // 2 - 2cos(πj/(m+1)), j = 1..m.
        OperatorKind::A => cos_count(m + 1, e).min(m),
        OperatorKind::D => dirichlet_count(m, e),
        OperatorKind::P | OperatorKind::R => unreachable!("segment spectra cover kinds N, A, D"),
    }
}

/// Sturm count of `4 - deg` on the diagonal and `-1` off it: eigenvalues `≤ E`.
fn dirichlet_count(m: usize, e: f64) -> usize {
    if m == 1 {
        return usize::from(4.0 <= e);
    }
    let x = e * (1.0 + 1e-14) + 1e-300;
    let mut count = 0;
    let mut q = 0.0;
    for i in 0..m {
        let d = if i == 0 || i == m - 1 { 3.0 } else { 2.0 };
        q = if i == 0 { d - x } else { d - x - 1.0 / q };
        if q == 0.0 {
            q = -1e-300;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// `ln Σ exp(t)` over an iterator of log terms.
fn log_sum(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// `ln(N(E) - N(0))` for site percolation with parameter `p` on `Z`.
pub fn z1_site_ln_ids(p: f64, kind: OperatorKind, e: f64) -> f64 {
    let (lp, lq) = (p.ln(), 2.0 * (1.0 - p).ln());
    let mut terms = Vec::new();
    let mut best = f64::NEG_INFINITY;
    let mut m = 1usize;
    loop {
        // Segment counts are nondecreasing in the kind order N >= A >= D; the closed-form
        // count of A decides when D can start contributing.
        let c = if kind == OperatorKind::D && segment_count(OperatorKind::A, m, e) == 0 { 0 } else { segment_count(kind, m, e) };
        if c > 0 {
            let t = m as f64 * lp + lq + (c as f64).ln();
            best = best.max(t);
            terms.push(t);
            if m as f64 * lp + (m as f64).ln() + lq < best - 40.0 {
                break;
            }
        } else if e <= 0.0 {
            break;
        }
        m += 1;
    }
    log_sum(&terms)
}

/// `P(|C| ≥ n) = p^n (n - (n-1) p)`.
pub fn z1_site_tail(p: f64, n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    p.powi(n as i32) * (n as f64 - (n as f64 - 1.0) * p)
}

/// The exact curve on `grid`; the atom is `p(1 - p)` for kind N and zero otherwise.
pub fn z1_site_series(p: f64, kind: OperatorKind, grid: &[f64]) -> Result<IDSCurve> {
    if !(p > 0.0 && p < 1.0) {
        return invalid(format!("series needs 0 < p < 1, got {p}"));
    }
    if !matches!(kind, OperatorKind::N | OperatorKind::A | OperatorKind::D) {
        return invalid(format!("series covers kinds N, A, D, not {kind}"));
    }
    if grid.iter().any(|&e| e <= 0.0) {
        return invalid("series energies must be positive");
    }
    let points = grid.iter().map(|&e| IdsPoint::exact(e, z1_site_ln_ids(p, kind, e))).collect();
    Ok(IDSCurve {
        kind,
        family: "z:1".into(),
        model: Some(format!("site:{p}")),
        source: CurveSource::ExactSeries,
        points,
        atom: if kind == OperatorKind::N { p * (1.0 - p) } else { 0.0 },
        atom_stderr: 0.0,
        fundamental_domain: 1,
        censored_fraction: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn dense_count(kind: OperatorKind, m: usize, e: f64) -> usize {
        let mut h = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            let deg = (i > 0) as usize + (i + 1 < m) as usize;
            h[(i, i)] = match kind {
                OperatorKind::N => deg as f64,
                OperatorKind::A => 2.0,
                _ => 4.0 - deg as f64,
            };
            if i + 1 < m {
                h[(i, i + 1)] = -1.0;
                h[(i + 1, i)] = -1.0;
            }
        }
        h.symmetric_eigenvalues().iter().filter(|&&l| l > 1e-10 && l <= e).count()
    }

    #[test]
    fn segment_counts_match_dense_spectra() {
        for kind in [OperatorKind::N, OperatorKind::A, OperatorKind::D] {
            for m in 1..30 {
                for e in [0.01, 0.3, 1.1, 2.5, 3.7, 4.2, 6.0] {
                    assert_eq!(segment_count(kind, m, e), dense_count(kind, m, e), "{kind} m={m} E={e}");
                }
            }
        }
    }

    #[test]
    fn high_energy_captures_every_present_site() {
        let p = 0.3;
        let n = z1_site_ln_ids(p, OperatorKind::N, 10.0).exp();
        assert!((n + p * (1.0 - p) - p).abs() < 1e-14);
        let a = z1_site_ln_ids(p, OperatorKind::A, 10.0).exp();
        assert!((a - p).abs() < 1e-14);
    }

    #[test]
    fn direct_sum_agrees() {
        let p: f64 = 0.4;
        for e in [0.05, 0.5, 2.0] {
            let direct: f64 = (1..400).map(|m| p.powi(m as i32) * (1.0 - p).powi(2) * segment_count(OperatorKind::N, m, e) as f64).sum();
            assert!((z1_site_ln_ids(p, OperatorKind::N, e).exp() - direct).abs() < 1e-15);
        }
    }

    #[test]
    fn deep_tail_stays_finite() {
        let l = z1_site_ln_ids(0.3, OperatorKind::A, 1e-5);
        assert!(l.is_finite() && l < -1000.0);
        assert!(z1_site_ln_ids(0.3, OperatorKind::D, 1e-5) <= l);
    }

    #[test]
    fn tail_closed_form() {
        let p: f64 = 0.3;
        for n in 1..10 {
            let direct: f64 = (n..500).map(|m| m as f64 * p.powi(m as i32) * (1.0 - p).powi(2)).sum();
            assert!((z1_site_tail(p, n) - direct).abs() < 1e-15);
        }
    }
}
