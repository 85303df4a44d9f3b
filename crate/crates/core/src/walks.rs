//! Return probabilities of the simple random walk on the full Cayley graph, the moment
//! identity `P_o(X_n = o) = ∫ t^n dN_{(1/k)A}(t)`, and exponent fits of the return series.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graphs::{build_window, GraphFamily, LampGenerators};
use crate::ids::{folner_depth_fractions, line_fit, CurveSource, IDSCurve};
use crate::rng::{reduce_samples, Mergeable, SampleStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WalkMethod {
    /// Powers of `A/k` applied to `δ_o` on the ball `B(o, ⌈n_max/2⌉)`, which contains every
    /// closed walk of length at most `n_max`.
    ExactMatvec,
    /// For `S0` lamplighter generators each step moves the lamplighter by ±1 and resets the
    /// lamp on the crossed edge to a uniform value, so
    /// `P(X_n = o) = E[1{S_n = 0} m^{-(max S - min S)}]` for the simple walk `S` on `Z`.
    LampRange,
    MonteCarlo { samples: u64, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReturnProbabilitySeries {
    pub family: String,
    pub method: WalkMethod,
    /// `P_o(X_n = o)` for `n = 0..=n_max`.
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
}

pub const CSV_HEADER: &str = "n,p_return,stderr";

impl ReturnProbabilitySeries {
    pub fn n_max(&self) -> usize {
        self.values.len() - 1
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for (n, (v, s)) in self.values.iter().zip(&self.stderr).enumerate() {
            let _ = writeln!(out, "{n},{v:e},{s:e}");
        }
        out
    }

    /// Even steps `2n` where `P(X_{2n+2} = o)` exceeds `P(X_{2n} = o)` beyond three
    /// combined standard errors.
    pub fn even_monotonicity_violations(&self) -> Vec<usize> {
        (0..self.values.len().saturating_sub(2))
            .step_by(2)
            .filter(|&n| {
                let se = (self.stderr[n].powi(2) + self.stderr[n + 2].powi(2)).sqrt();
                self.values[n + 2] > self.values[n] * (1.0 + 1e-12) + 3.0 * se
            })
            .collect()
    }
}

pub fn return_probabilities(family: GraphFamily, n_max: usize, method: WalkMethod) -> Result<ReturnProbabilitySeries> {
    family.validate()?;
    let (values, stderr) = match method {
        WalkMethod::ExactMatvec => (exact_matvec(family, n_max, n_max.div_ceil(2))?, vec![0.0; n_max + 1]),
        WalkMethod::LampRange => {
            let GraphFamily::Lamplighter { m, generators: LampGenerators::S0 } = family else {
                return invalid(format!("range method needs S0 lamplighter generators, not {family}"));
            };
            (lamp_range(m, n_max), vec![0.0; n_max + 1])
        }
        WalkMethod::MonteCarlo { samples, seed } => monte_carlo(family, n_max, samples, seed)?,
    };
    Ok(ReturnProbabilitySeries { family: family.to_string(), method, values, stderr })
}

/// `((A/k)^n)_{oo}` for `n ≤ n_max` on the window `B(o, radius)`.
pub fn exact_matvec(family: GraphFamily, n_max: usize, radius: usize) -> Result<Vec<f64>> {
    let w = build_window(family, family.identity(), radius)?;
    let o = w.index_of(&family.identity()).expect("window contains its center");
    let k = family.degree() as f64;
    let mut v = vec![0.0; w.len()];
    let mut next = vec![0.0; w.len()];
    v[o] = 1.0;
    let mut out = vec![1.0];
    for _ in 0..n_max {
        for (i, slot) in next.iter_mut().enumerate() {
            *slot = w.graph.neighbors(i).map(|j| v[j]).sum::<f64>() / k;
        }
        std::mem::swap(&mut v, &mut next);
        out.push(v[o]);
    }
    Ok(out)
}

/// Dynamic programme over `(min, max, position)` of the lamplighter's walk on `Z`.
fn lamp_range(m: u32, n_max: usize) -> Vec<f64> {
    // Only paths that return by n_max matter, and those never leave [-h, h].
    let h = n_max / 2;
    let side = h + 1;
    let width = 2 * h + 1;
    let idx = |na: usize, b: usize, x: i64| (na * side + b) * width + (x + h as i64) as usize;
    let mut p = vec![0.0; side * side * width];
    let mut q = vec![0.0; side * side * width];
    p[idx(0, 0, 0)] = 1.0;
    let inv_m = 1.0 / m as f64;
    let mut out = vec![1.0];
    for t in 1..=n_max {
        q.iter_mut().for_each(|x| *x = 0.0);
        let reach = (t - 1).min(h) as i64;
        for na in 0..=reach as usize {
            for b in 0..=reach as usize {
                // Positions after t - 1 steps have the parity of t - 1.
                let start = -(na as i64) + ((-(na as i64) - (t as i64 - 1)).rem_euclid(2));
                for x in (start..=b as i64).step_by(2) {
                    let w = p[idx(na, b, x)];
                    if w == 0.0 {
                        continue;
                    }
                    let half = 0.5 * w;
                    if x < h as i64 {
                        let nb = b.max((x + 1) as usize * usize::from(x + 1 > 0));
                        q[idx(na, nb, x + 1)] += half;
                    }
                    if x > -(h as i64) {
                        let nna = na.max((-(x - 1)).max(0) as usize);
                        q[idx(nna, b, x - 1)] += half;
                    }
                }
            }
        }
        std::mem::swap(&mut p, &mut q);
        let mut r = 0.0;
        for na in 0..side {
            for b in 0..side {
                let w = p[idx(na, b, 0)];
                if w != 0.0 {
                    r += w * inv_m.powi((na + b) as i32);
                }
            }
        }
        out.push(r);
    }
    out
}

struct Returns(Vec<u64>);

impl Mergeable for Returns {
    fn merge(&mut self, other: Self) {
        for (a, b) in self.0.iter_mut().zip(other.0) {
            *a += b;
        }
    }
}

fn monte_carlo(family: GraphFamily, n_max: usize, samples: u64, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    if samples < 2 {
        return invalid("Monte Carlo walks need at least two samples");
    }
    let stream = SampleStream::new(seed, samples);
    let k = family.degree();
    let o = family.identity();
    let counts = reduce_samples(
        &stream,
        || Returns(vec![0; n_max + 1]),
        |acc, i| {
            let mut rng = stream.rng(i);
            let mut v = o.clone();
            acc.0[0] += 1;
            for n in 1..=n_max {
                v = family.step(&v, rng.random_range(0..k));
                if v == o {
                    acc.0[n] += 1;
                }
            }
        },
    );
    let total = samples as f64;
    let values: Vec<f64> = counts.0.iter().map(|&c| c as f64 / total).collect();
    let stderr = values.iter().map(|&p| (p * (1.0 - p) / (total - 1.0)).sqrt()).collect();
    Ok((values, stderr))
}

/// The walk variable `t = 1 - E/k`: `H = k(Id - A/k)` has eigenvalue `E` exactly where `A/k`
/// has eigenvalue `1 - E/k`, so `N_{(1/k)A}(t) = 1 - N_per(k(1 - t))` at continuity points.
pub fn walk_variable(e: f64, k: usize) -> f64 {
    1.0 - e / k as f64
}

/// The spectral measure of `A/k` as masses on closed intervals `[t_lo, t_hi]` of `[-1, 1]`.
///
/// Grid energies `E_0 < … < E_J` of a periodic curve split `[0, 2k]` into `[0, E_0]` with
/// mass `N(E_0)`, `[E_{j-1}, E_j]` with mass `N(E_j) - N(E_{j-1})`, and `[E_J, 2k]` with the
/// rest; each maps to a closed `t`-interval. An atom on a grid energy lies in both adjacent
/// closed intervals, so the assignment never matters for interval bounds.
pub fn adjacency_measure(curve: &IDSCurve, k: usize) -> Vec<(f64, f64, f64)> {
    let top = 2.0 * k as f64;
    let mut out = Vec::new();
    let (mut prev_e, mut prev_n) = (0.0, 0.0);
    for p in curve.points.iter().filter(|p| p.e > 0.0 && p.e < top) {
        let n = p.n.clamp(prev_n, 1.0);
        out.push((walk_variable(p.e, k), walk_variable(prev_e, k), n - prev_n));
        prev_e = p.e;
        prev_n = n;
    }
    out.push((-1.0, walk_variable(prev_e, k), 1.0 - prev_n));
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub n: usize,
    pub walk: f64,
    pub walk_stderr: f64,
    /// Midpoint of the interval bound on `∫ t^n dN_{(1/k)A}`.
    pub moment: f64,
    pub moment_halfwidth: f64,
    /// Følner sets: share of vertices closer than `n/2` to the complement.
    pub proxy_error: f64,
    pub discrepancy: f64,
    pub combined_error: f64,
    pub agrees: bool,
}

/// Largest moment half-width accepted before the curve counts as too coarse.
pub const MOMENT_RESOLUTION: f64 = 0.05;

/// Compares `∫ t^n dN_{(1/k)A}(t)` from a periodic curve with the return series for
/// `n = 0..=n_max`.
pub fn moment_identity_check(series: &ReturnProbabilitySeries, curve: &IDSCurve, k: usize, n_max: usize) -> Result<Vec<MomentRow>> {
    if series.n_max() < n_max {
        return invalid(format!("series stops at n = {}, moments requested to {n_max}", series.n_max()));
    }
    let measure = adjacency_measure(curve, k);
    let proxy: Vec<f64> = match curve.source {
        CurveSource::Folner { level, .. } => {
            let family: GraphFamily = curve.family.parse()?;
            folner_depth_fractions(&family, level, n_max / 2)?
        }
        _ => vec![0.0; n_max / 2 + 1],
    };
    let mut rows = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let (mut lo, mut hi) = (0.0, 0.0);
        for &(a, b, mass) in &measure {
            let (fa, fb) = (a.powi(n as i32), b.powi(n as i32));
            let mut fmin = fa.min(fb);
            let fmax = fa.max(fb);
            if a < 0.0 && b > 0.0 {
                fmin = fmin.min(0.0);
            }
            lo += mass * fmin;
            hi += mass * fmax;
        }
        let moment = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        if half > MOMENT_RESOLUTION {
            return Err(Error::Resolution(format!("moment {n} is only known to ±{half:.3}; refine the curve near E = 0 and E = 2k")));
        }
        let walk = series.values[n];
        let walk_stderr = series.stderr[n];
        let proxy_error = proxy[n / 2];
        let discrepancy = (moment - walk).abs();
        let combined_error = half + proxy_error + 3.0 * walk_stderr + 1e-12;
        rows.push(MomentRow {
            n,
            walk,
            walk_stderr,
            moment,
            moment_halfwidth: half,
            proxy_error,
            discrepancy,
            combined_error,
            agrees: discrepancy <= combined_error,
        });
    }
    Ok(rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TauberianMode {
    /// `ln P(X_n = o)` against `ln n`.
    PowerLaw,
    /// `ln(-ln P(X_n = o))` against `ln n`.
    StretchedExp,
}

impl std::str::FromStr for TauberianMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "powerlaw" | "power" => Ok(TauberianMode::PowerLaw),
            "stretched" | "stretchedexp" => Ok(TauberianMode::StretchedExp),
            _ => invalid(format!("unknown walk fit mode {s:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TauberianFit {
    pub mode: TauberianMode,
    pub slope: f64,
    pub intercept: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub range: [usize; 2],
    pub n_points: usize,
    pub residual_rms: f64,
}

/// Fewest even steps a walk fit accepts.
pub const MIN_WALK_POINTS: usize = 8;

/// Exponent fit over the even steps in `[n_lo, n_hi]`.
pub fn tauberian_exponent(series: &ReturnProbabilitySeries, mode: TauberianMode, n_lo: usize, n_hi: usize) -> Result<TauberianFit> {
    let hi = n_hi.min(series.n_max());
    let steps: Vec<usize> = (n_lo.max(2)..=hi).filter(|n| n % 2 == 0).collect();
    if steps.len() < MIN_WALK_POINTS {
        return Err(Error::Resolution(format!("walk fit over [{n_lo}, {n_hi}] has {} even steps, need {MIN_WALK_POINTS}", steps.len())));
    }
    let mut pts = Vec::with_capacity(steps.len());
    for &n in &steps {
        let (p, se) = (series.values[n], series.stderr[n]);
        if p <= 0.0 || p >= 1.0 {
            return Err(Error::Resolution(format!("return probability at n = {n} is {p}")));
        }
        let rel = se / p;
        pts.push(match mode {
            TauberianMode::PowerLaw => ((n as f64).ln(), p.ln(), rel),
            TauberianMode::StretchedExp => ((n as f64).ln(), (-p.ln()).ln(), rel / p.ln().abs()),
        });
    }
    let line = line_fit(&pts);
    Ok(TauberianFit {
        mode,
        slope: line.slope,
        intercept: line.intercept,
        ci_low: line.slope - 1.96 * line.se,
        ci_high: line.slope + 1.96 * line.se,
        range: [steps[0], steps[steps.len() - 1]],
        n_points: steps.len(),
        residual_rms: line.rms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::{ids_periodic, PeriodicMethod};

    const Z1: GraphFamily = GraphFamily::ZLattice { dim: 1 };

    fn binomial_return(n: usize) -> f64 {
        if n % 2 == 1 {
            return 0.0;
        }
        // C(n, n/2) / 2^n by a running product.
        (1..=n / 2).map(|j| (n / 2 + j) as f64 / (4.0 * j as f64)).product()
    }

    #[test]
    fn line_returns_are_central_binomials() {
        let s = return_probabilities(Z1, 40, WalkMethod::ExactMatvec).unwrap();
        assert_eq!(s.values[2], 0.5);
        assert_eq!(s.values[4], 6.0 / 16.0);
        for n in 0..=40 {
            assert!((s.values[n] - binomial_return(n)).abs() < 1e-15);
        }
    }

    #[test]
    fn doubling_the_window_changes_nothing() {
        for f in ["z:2", "tree:3", "lamplighter:2:std"] {
            let f: GraphFamily = f.parse().unwrap();
            let a = exact_matvec(f, 14, 7).unwrap();
            let b = exact_matvec(f, 14, 14).unwrap();
            assert_eq!(a, b, "{f}");
        }
    }

    #[test]
    fn lamp_range_matches_matvec() {
        for m in [2, 3] {
            let f = GraphFamily::Lamplighter { m, generators: LampGenerators::S0 };
            let a = return_probabilities(f, 12, WalkMethod::ExactMatvec).unwrap();
            let b = return_probabilities(f, 12, WalkMethod::LampRange).unwrap();
            for n in 0..=12 {
                assert!((a.values[n] - b.values[n]).abs() < 1e-15, "m={m} n={n}");
            }
        }
    }

    #[test]
    fn monte_carlo_tracks_exact() {
        let f: GraphFamily = "z:2".parse().unwrap();
        let e = return_probabilities(f, 10, WalkMethod::ExactMatvec).unwrap();
        let mc = return_probabilities(f, 10, WalkMethod::MonteCarlo { samples: 100_000, seed: 9 }).unwrap();
        for n in 0..=10 {
            assert!((e.values[n] - mc.values[n]).abs() <= 4.0 * mc.stderr[n] + 1e-12);
        }
    }

    #[test]
    fn arcsine_moments_from_the_band() {
        let grid: Vec<f64> = (1..20_000).map(|i| i as f64 * 4.0 / 20_000.0).collect();
        let curve = ids_periodic(Z1, PeriodicMethod::ClosedForm, &grid).unwrap();
        let s = return_probabilities(Z1, 20, WalkMethod::ExactMatvec).unwrap();
        let rows = moment_identity_check(&s, &curve, 2, 20).unwrap();
        assert!(rows.iter().all(|r| r.agrees));
        assert!((rows[2].moment - 0.5).abs() <= rows[2].moment_halfwidth);
        assert!(rows[1].moment.abs() <= rows[1].moment_halfwidth);
    }

    #[test]
    fn coarse_curves_are_rejected() {
        let curve = ids_periodic(Z1, PeriodicMethod::ClosedForm, &[1.0, 2.0, 3.0]).unwrap();
        let s = return_probabilities(Z1, 4, WalkMethod::ExactMatvec).unwrap();
        assert!(matches!(moment_identity_check(&s, &curve, 2, 4), Err(Error::Resolution(_))));
    }

    #[test]
    fn power_law_on_the_line() {
        let s = return_probabilities(Z1, 400, WalkMethod::ExactMatvec).unwrap();
        let f = tauberian_exponent(&s, TauberianMode::PowerLaw, 50, 400).unwrap();
        assert!((f.slope + 0.5).abs() < 0.01, "{f:?}");
        assert!(s.even_monotonicity_violations().is_empty());
        assert!(tauberian_exponent(&s, TauberianMode::PowerLaw, 2, 14).is_err());
    }
}
