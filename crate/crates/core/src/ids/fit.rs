//! Least-squares exponent fits on log-transformed IDS curves.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

use super::{IDSCurve, IdsPoint};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitKind {
    /// `ln N` against `ln E`.
    VanHove,
    /// `ln |ln N|` against `ln(1/E)`.
    Lifshitz,
    /// `ln ln |ln N|` against `ln |ln E|`; diagnostic only.
    DoubleLog,
}

impl fmt::Display for FitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitKind::VanHove => "vanhove",
            FitKind::Lifshitz => "lifshitz",
            FitKind::DoubleLog => "doublelog",
        })
    }
}

impl FromStr for FitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vanhove" => Ok(FitKind::VanHove),
            "lifshitz" => Ok(FitKind::Lifshitz),
            "doublelog" => Ok(FitKind::DoubleLog),
            _ => invalid(format!("unknown fit kind {s:?}")),
        }
    }
}

/// Fewest grid points a fit accepts.
pub const MIN_FIT_POINTS: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub kind: FitKind,
    pub slope: f64,
    pub intercept: f64,
    /// 95% interval for the slope.
    pub ci_low: f64,
    pub ci_high: f64,
    pub window: [f64; 2],
    pub n_points: usize,
    pub residual_rms: f64,
}

/// Transformed coordinates `(x, y, σ_y)` of one point, `σ_y` from first-order propagation.
fn transform(kind: FitKind, p: &IdsPoint) -> Option<(f64, f64, f64)> {
    let rel = if p.n > 0.0 { p.stderr / p.n } else { 0.0 };
    match kind {
        FitKind::VanHove => Some((p.e.ln(), p.ln_n, rel)),
        FitKind::Lifshitz => {
            let l = -p.ln_n;
            (l > 0.0).then(|| (-p.e.ln(), l.ln(), rel / l))
        }
        FitKind::DoubleLog => {
            let l = -p.ln_n;
            let le = p.e.ln().abs();
            (l > 1.0 && le > 1.0).then(|| (le.ln(), l.ln().ln(), rel / (l * l.ln())))
        }
    }
}

pub(crate) struct Line {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope.
    pub se: f64,
    pub rms: f64,
}

/// Straight-line fit to `(x, y, σ_y)`. Weighted by `1/σ²` when every `σ` is positive, ordinary
/// least squares otherwise.
pub(crate) fn line_fit(xs: &[(f64, f64, f64)]) -> Line {
    let weighted = xs.iter().all(|t| t.2 > 0.0);
    let w: Vec<f64> = xs.iter().map(|t| if weighted { 1.0 / (t.2 * t.2) } else { 1.0 }).collect();
    let sw: f64 = w.iter().sum();
    let mx = xs.iter().zip(&w).map(|(t, w)| w * t.0).sum::<f64>() / sw;
    let my = xs.iter().zip(&w).map(|(t, w)| w * t.1).sum::<f64>() / sw;
    let sxx: f64 = xs.iter().zip(&w).map(|(t, w)| w * (t.0 - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&w).map(|(t, w)| w * (t.0 - mx) * (t.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let n = xs.len() as f64;
    let ss_res: f64 = xs.iter().zip(&w).map(|(t, w)| w * (t.1 - intercept - slope * t.0).powi(2)).sum();
    let dof = n - 2.0;
    // Weighted: stderr from the weights, inflated by the reduced chi-square when above one.
    // Unweighted: the usual residual-variance estimate.
    let se = if weighted { (1.0 / sxx).sqrt() * (ss_res / dof).max(1.0).sqrt() } else { (ss_res / dof / sxx).sqrt() };
    let rms = (xs.iter().map(|t| (t.1 - intercept - slope * t.0).powi(2)).sum::<f64>() / n).sqrt();
    Line { slope, intercept, se, rms }
}

/// Slope of the transformed curve over `[emin, emax]`. Weighted by the propagated
/// standard errors when the curve has them, ordinary least squares otherwise.
pub fn fit_exponent(curve: &IDSCurve, kind: FitKind, emin: f64, emax: f64) -> Result<ExponentFit> {
    let pts: Vec<&IdsPoint> = curve.points.iter().filter(|p| p.e >= emin * (1.0 - 1e-12) && p.e <= emax * (1.0 + 1e-12)).collect();
    if pts.len() < MIN_FIT_POINTS {
        return Err(Error::Resolution(format!("fit window [{emin}, {emax}] holds {} grid points, need {MIN_FIT_POINTS}", pts.len())));
    }
    for end in [pts[0], pts[pts.len() - 1]] {
        if !end.resolved() {
            return Err(Error::Resolution(format!("curve is not resolved at E = {}: N = {}, stderr = {}", end.e, end.n, end.stderr)));
        }
    }
    for w in pts.windows(2) {
        let se = (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt();
        let drop = if se == 0.0 { w[1].ln_n < w[0].ln_n - 1e-12 * w[0].ln_n.abs().max(1.0) } else { w[1].n < w[0].n - 3.0 * se };
        if drop {
            return Err(Error::Resolution(format!("curve decreases between E = {} and E = {}", w[0].e, w[1].e)));
        }
    }
    let mut xs = Vec::new();
    for p in &pts {
        match transform(kind, p) {
            Some(t) if t.1.is_finite() => xs.push(t),
            _ => return Err(Error::Resolution(format!("{kind} transform undefined at E = {}", p.e))),
        }
    }
    let line = line_fit(&xs);
    Ok(ExponentFit {
        kind,
        slope: line.slope,
        intercept: line.intercept,
        ci_low: line.slope - 1.96 * line.se,
        ci_high: line.slope + 1.96 * line.se,
        window: [pts[0].e, pts[pts.len() - 1].e],
        n_points: pts.len(),
        residual_rms: line.rms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::GraphFamily;
    use crate::ids::{ids_periodic, log_grid, series::z1_site_series, PeriodicMethod};
    use crate::operators::OperatorKind;

    #[test]
    fn van_hove_on_the_line() {
        let grid = log_grid(1e-6, 1e-3, 31).unwrap();
        let c = ids_periodic(GraphFamily::ZLattice { dim: 1 }, PeriodicMethod::ClosedForm, &grid).unwrap();
        let f = fit_exponent(&c, FitKind::VanHove, 1e-6, 1e-3).unwrap();
        assert!((f.slope - 0.5).abs() < 0.01, "{f:?}");
    }

    #[test]
    fn lifshitz_on_the_series() {
        let grid = log_grid(1e-5, 1e-2, 31).unwrap();
        let c = z1_site_series(0.3, OperatorKind::A, &grid).unwrap();
        let f = fit_exponent(&c, FitKind::Lifshitz, 1e-5, 1e-2).unwrap();
        assert!((f.slope - 0.5).abs() < 0.05, "{f:?}");
    }

    #[test]
    fn short_windows_are_rejected() {
        let grid = log_grid(1e-3, 1e-2, 3).unwrap();
        let c = z1_site_series(0.3, OperatorKind::N, &grid).unwrap();
        assert!(matches!(fit_exponent(&c, FitKind::VanHove, 1e-3, 1e-2), Err(Error::Resolution(_))));
    }

    #[test]
    fn kinds_parse() {
        for k in [FitKind::VanHove, FitKind::Lifshitz, FitKind::DoubleLog] {
            assert_eq!(k.to_string().parse::<FitKind>().unwrap(), k);
        }
    }
}
