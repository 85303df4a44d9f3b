//! Integrated density of states: Monte Carlo estimation on percolation clusters, the exact
//! cluster series on `Z`, periodic operators, exponent fits and bound envelopes.

pub mod envelope;
pub mod fit;
mod mc;
mod periodic;
pub mod series;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::operators::OperatorKind;

pub use envelope::{check_envelope, fit_decay_rate, EnvelopeInputs, EnvelopeReport, EnvelopeRow, Theorem};
pub use fit::{fit_exponent, ExponentFit, FitKind};
pub use mc::{atom_at_zero, ids_percolation, AtomEstimate, IdsRun};
pub use periodic::{ids_periodic, z_closed_form, PeriodicMethod};
pub(crate) use periodic::folner_depth_fractions;
pub(crate) use fit::line_fit;

/// `points` log-spaced energies from `emin` to `emax` inclusive.
pub fn log_grid(emin: f64, emax: f64, points: usize) -> Result<Vec<f64>> {
    if !(emin > 0.0 && emax > emin) || points < 2 {
        return invalid(format!("log grid needs 0 < emin < emax and at least two points, got [{emin}, {emax}] x {points}"));
    }
    let (a, b) = (emin.ln(), emax.ln());
    Ok((0..points).map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp()).collect())
}

/// 40 points per decade over `[1e-5, 8k]`.
pub fn default_grid(k: usize) -> Vec<f64> {
    let emax = 8.0 * k as f64;
    let decades = (emax / 1e-5).log10();
    log_grid(1e-5, emax, (40.0 * decades).round() as usize + 1).unwrap()
}

/// One energy of an IDS curve. `n` estimates `N(E) - N(0)`; the atom is stored on the curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdsPoint {
    pub e: f64,
    pub n: f64,
    pub stderr: f64,
    /// Censored samples counted with weight 0.
    pub n_low: f64,
    /// Censored samples counted with weight 1.
    pub n_high: f64,
    /// `ln n`, kept separately because exact series values underflow.
    pub ln_n: f64,
}

impl IdsPoint {
    pub fn exact(e: f64, ln_n: f64) -> Self {
        let n = ln_n.exp();
        IdsPoint { e, n, stderr: 0.0, n_low: n, n_high: n, ln_n }
    }

    /// Estimate above five standard errors (always true for exact positive values).
    pub fn resolved(&self) -> bool {
        self.ln_n.is_finite() && self.n >= 0.0 && (self.stderr == 0.0 || self.n > 5.0 * self.stderr)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum CurveSource {
    MonteCarlo { samples: u64, seed: u64, window_radius: usize },
    ExactSeries,
    Enumeration { size_cap: usize, remainder: f64 },
    ClosedForm,
    Folner { level: usize, vertices: usize, boundary_ratio: f64 },
    File,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IDSCurve {
    pub kind: OperatorKind,
    pub family: String,
    pub model: Option<String>,
    pub source: CurveSource,
    pub points: Vec<IdsPoint>,
    /// `N(0)`.
    pub atom: f64,
    pub atom_stderr: f64,
    /// `|F|`; one for every built-in family.
    pub fundamental_domain: usize,
    pub censored_fraction: f64,
}

pub const CSV_HEADER: &str = "E,N,stderr,N_low,N_high,atom,atom_stderr,ln_N";

impl IDSCurve {
    pub fn energies(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.e).collect()
    }

    /// Indices of grid points below five standard errors.
    pub fn unresolved(&self) -> Vec<usize> {
        (0..self.points.len()).filter(|&i| !self.points[i].resolved()).collect()
    }

    /// Adjacent pairs where the estimate decreases by more than three combined standard errors.
    pub fn monotonicity_violations(&self) -> Vec<usize> {
        self.points
            .windows(2)
            .enumerate()
            .filter(|(_, w)| {
                let se = (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt();
                if se == 0.0 {
                    w[1].ln_n < w[0].ln_n - 1e-12 * w[0].ln_n.abs().max(1.0)
                } else {
                    w[1].n < w[0].n - 3.0 * se
                }
            })
            .map(|(i, _)| i)
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for p in &self.points {
            let _ = writeln!(
                out,
                "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                p.e, p.n, p.stderr, p.n_low, p.n_high, self.atom, self.atom_stderr, p.ln_n
            );
        }
        out
    }

    /// Reads the CSV form, skipping `#` comment lines. Metadata not present in the columns
    /// is left at neutral values.
    pub fn from_csv(text: &str, kind: OperatorKind) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::InvalidInput("empty curve file".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        let col = |name: &str| cols.iter().position(|c| *c == name);
        let need = |name: &str| col(name).ok_or_else(|| Error::InvalidInput(format!("curve file lacks column {name}")));
        let (ie, inn, ise) = (need("E")?, need("N")?, need("stderr")?);
        let (ilo, ihi, ia, ias, iln) = (col("N_low"), col("N_high"), col("atom"), col("atom_stderr"), col("ln_N"));
        let mut points = Vec::new();
        let (mut atom, mut atom_stderr) = (0.0, 0.0);
        for (ln, line) in lines.enumerate() {
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            let num = |i: usize| -> Result<f64> {
                f.get(i).and_then(|s| s.parse::<f64>().ok()).ok_or_else(|| Error::InvalidInput(format!("bad number in curve row {}", ln + 1)))
            };
            let n = num(inn)?;
            let p = IdsPoint {
                e: num(ie)?,
                n,
                stderr: num(ise)?,
                n_low: ilo.map(&num).transpose()?.unwrap_or(n),
                n_high: ihi.map(&num).transpose()?.unwrap_or(n),
                ln_n: iln.map(&num).transpose()?.unwrap_or(n.ln()),
            };
            if let Some(i) = ia {
                atom = num(i)?;
            }
            if let Some(i) = ias {
                atom_stderr = num(i)?;
            }
            points.push(p);
        }
        Ok(IDSCurve {
            kind,
            family: String::new(),
            model: None,
            source: CurveSource::File,
            points,
            atom,
            atom_stderr,
            fundamental_domain: 1,
            censored_fraction: 0.0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_endpoints() {
        let g = log_grid(1e-3, 10.0, 5).unwrap();
        assert_eq!(g.len(), 5);
        assert!((g[0] - 1e-3).abs() < 1e-15 && (g[4] - 10.0).abs() < 1e-12);
        assert!((g[1] - 1e-2).abs() < 1e-14);
        let d = default_grid(2);
        assert_eq!(d.len(), 249);
        assert!(log_grid(0.0, 1.0, 3).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let c = series::z1_site_series(0.3, OperatorKind::N, &log_grid(1e-3, 4.0, 9).unwrap()).unwrap();
        let back = IDSCurve::from_csv(&format!("# comment\n{}", c.to_csv()), OperatorKind::N).unwrap();
        assert_eq!(back.points, c.points);
        assert_eq!(back.atom, c.atom);
    }
}
