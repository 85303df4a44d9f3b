use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graphs::GraphFamily;

/// Distance profile `J_d` of long-range bonds on `Z`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum LongRangeKernel {
    /// `J_d = d^{-alpha}`, `alpha > 1`.
    Power { alpha: f64 },
    /// `J_d = e^{-c d}`, `c > 0`.
    Exp { c: f64 },
}

impl LongRangeKernel {
    pub fn weight(&self, d: u64) -> f64 {
        match *self {
            LongRangeKernel::Power { alpha } => (d as f64).powf(-alpha),
            LongRangeKernel::Exp { c } => (-c * d as f64).exp(),
        }
    }

    /// Upper bound on `Σ_{d > k} J_d`.
    pub fn tail_upper(&self, k: u64) -> f64 {
        match *self {
            LongRangeKernel::Power { alpha } => {
                if k == 0 {
                    1.0 + 1.0 / (alpha - 1.0)
                } else {
                    (k as f64).powf(1.0 - alpha) / (alpha - 1.0)
                }
            }
            LongRangeKernel::Exp { c } => (-c * (k + 1) as f64).exp() / (1.0 - (-c).exp()),
        }
    }

    /// Lower bound on `Σ_{d > k} J_d`.
    pub fn tail_lower(&self, k: u64) -> f64 {
        match *self {
            LongRangeKernel::Power { alpha } => ((k + 1) as f64).powf(1.0 - alpha) / (alpha - 1.0),
            LongRangeKernel::Exp { .. } => self.tail_upper(k),
        }
    }

    /// `J_x = Σ_{y ≠ x} J_{[x,y]}`, both directions on `Z`, bounded above.
    pub fn total_upper(&self) -> f64 {
        2.0 * (self.weight(1) + self.tail_upper(1))
    }

    /// Smallest `k` with `β · 2 · Σ_{d > k} J_d < eps`.
    pub fn truncation_for(&self, beta: f64, eps: f64) -> u64 {
        (1..100_000).find(|&k| beta * 2.0 * self.tail_upper(k) < eps).unwrap_or(100_000)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ModelKind {
    Site { p: f64 },
    Bond { p: f64 },
    /// Independent bonds `{x, y}` on `Z` open with probability `1 - exp(-β J_{|x-y|})`;
    /// bonds longer than `truncation` are never opened.
    LongRange { beta: f64, kernel: LongRangeKernel, truncation: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PercolationModel {
    pub kind: ModelKind,
    /// Subcriticality is asserted by the caller, never detected.
    pub declared_subcritical: bool,
}

/// Default bound on the probability error from truncating long-range bonds.
pub const TRUNCATION_EPS: f64 = 1e-6;

impl PercolationModel {
    pub fn site(p: f64) -> Self {
        PercolationModel { kind: ModelKind::Site { p }, declared_subcritical: false }
    }

    pub fn bond(p: f64) -> Self {
        PercolationModel { kind: ModelKind::Bond { p }, declared_subcritical: false }
    }

    pub fn long_range(beta: f64, kernel: LongRangeKernel) -> Self {
        let truncation = kernel.truncation_for(beta, TRUNCATION_EPS);
        PercolationModel { kind: ModelKind::LongRange { beta, kernel, truncation }, declared_subcritical: false }
    }

    pub fn declare_subcritical(mut self) -> Self {
        self.declared_subcritical = true;
        self
    }

    pub fn validate(&self, family: &GraphFamily) -> Result<()> {
        match self.kind {
            ModelKind::Site { p } | ModelKind::Bond { p } => {
                if !(0.0..=1.0).contains(&p) {
                    return invalid(format!("probability {p} outside [0, 1]"));
                }
            }
            ModelKind::LongRange { beta, kernel, truncation } => {
                if *family != (GraphFamily::ZLattice { dim: 1 }) {
                    return invalid("long-range percolation is implemented on z:1 only");
                }
                if !(beta > 0.0 && beta.is_finite()) {
                    return invalid("long-range beta must be positive");
                }
                match kernel {
                    LongRangeKernel::Power { alpha } if alpha <= 1.0 => return invalid("J=pow:<alpha> needs alpha > 1"),
                    LongRangeKernel::Exp { c } if c <= 0.0 => return invalid("J=exp:<c> needs c > 0"),
                    _ => {}
                }
                if truncation == 0 {
                    return invalid("truncation radius must be at least 1");
                }
            }
        }
        Ok(())
    }

    /// Parameters known to be subcritical by a branching-process comparison (`z:1` site or
    /// bond with `p < 1`; otherwise `p < 1/(k-1)`; long range with `β Σ_y J < 1`).
    pub fn known_subcritical(&self, family: &GraphFamily) -> bool {
        let k = family.degree() as f64;
        match self.kind {
            ModelKind::Site { p } | ModelKind::Bond { p } => {
                if *family == (GraphFamily::ZLattice { dim: 1 }) {
                    p < 1.0
                } else {
                    p < 1.0 / (k - 1.0)
                }
            }
            ModelKind::LongRange { beta, kernel, .. } => beta * kernel.total_upper() < 1.0,
        }
    }

    /// Probability that a long-range bond of length `d` is open.
    pub fn bond_probability(&self, d: u64) -> f64 {
        match self.kind {
            ModelKind::Site { .. } => 1.0,
            ModelKind::Bond { p } => {
                if d == 1 {
                    p
                } else {
                    0.0
                }
            }
            ModelKind::LongRange { beta, kernel, truncation } => {
                if d == 0 || d > truncation {
                    0.0
                } else {
                    -(-beta * kernel.weight(d)).exp_m1()
                }
            }
        }
    }

    /// Number of lattice steps a single bond can span.
    pub fn reach(&self) -> usize {
        match self.kind {
            ModelKind::LongRange { truncation, .. } => truncation as usize,
            _ => 1,
        }
    }

    /// Constant `b` with `P(G' is a cluster) ≥ exp(-b |G'|)` for every finite connected `G'`
    /// (long range: every `G'` whose bonds are no longer than the truncation radius).
    pub fn cluster_bound_constant(&self, family: &GraphFamily) -> f64 {
        let k = family.degree() as f64;
        match self.kind {
            ModelKind::Site { p } => -p.ln() - k * (1.0 - p).ln(),
            ModelKind::Bond { p } => -k * p.min(1.0 - p).ln(),
            ModelKind::LongRange { beta, kernel, truncation } => {
                let total = 2.0 * (1..=truncation).map(|d| kernel.weight(d)).sum::<f64>() + 2.0 * kernel.tail_upper(truncation);
                let open: f64 = (1..=truncation).map(|d| 2.0 * self.bond_probability(d).ln()).sum();
                beta * total - open
            }
        }
    }
}

impl fmt::Display for PercolationModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ModelKind::Site { p } => write!(f, "site:{p}"),
            ModelKind::Bond { p } => write!(f, "bond:{p}"),
            ModelKind::LongRange { beta, kernel: LongRangeKernel::Power { alpha }, .. } => {
                write!(f, "longrange:{beta}:J=pow:{alpha}")
            }
            ModelKind::LongRange { beta, kernel: LongRangeKernel::Exp { c }, .. } => write!(f, "longrange:{beta}:J=exp:{c}"),
        }
    }
}

impl FromStr for PercolationModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |t: &str| -> Result<f64> {
            t.parse::<f64>().map_err(|_| Error::InvalidInput(format!("bad number {t:?} in model spec {s:?}")))
        };
        let model = match parts.as_slice() {
            ["site", p] => PercolationModel::site(num(p)?),
            ["bond", p] => PercolationModel::bond(num(p)?),
            ["longrange", beta, "J=pow", a] => PercolationModel::long_range(num(beta)?, LongRangeKernel::Power { alpha: num(a)? }),
            ["longrange", beta, "J=exp", c] => PercolationModel::long_range(num(beta)?, LongRangeKernel::Exp { c: num(c)? }),
            _ => return invalid(format!("unknown model spec {s:?}")),
        };
        match model.kind {
            ModelKind::Site { p } | ModelKind::Bond { p } if !(0.0..=1.0).contains(&p) => {
                invalid(format!("probability {p} outside [0, 1]"))
            }
            ModelKind::LongRange { beta, .. } if beta <= 0.0 => invalid("long-range beta must be positive"),
            ModelKind::LongRange { kernel: LongRangeKernel::Power { alpha }, .. } if alpha <= 1.0 => {
                invalid("J=pow:<alpha> needs alpha > 1")
            }
            ModelKind::LongRange { kernel: LongRangeKernel::Exp { c }, .. } if c <= 0.0 => invalid("J=exp:<c> needs c > 0"),
            _ => Ok(model),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_round_trip() {
        for s in ["site:0.3", "bond:0.25", "longrange:0.1:J=pow:2.5", "longrange:0.1:J=exp:0.5"] {
            let m: PercolationModel = s.parse().unwrap();
            assert_eq!(m.to_string(), s);
        }
        assert!("site:1.5".parse::<PercolationModel>().is_err());
        assert!("longrange:0.1:J=pow:1".parse::<PercolationModel>().is_err());
        assert!("ising:0.1".parse::<PercolationModel>().is_err());
    }

    #[test]
    fn geometric_tail_and_truncation() {
        let k = LongRangeKernel::Exp { c: std::f64::consts::LN_2 };
        // Σ_{d > 3} 2^{-d} = 2^{-3}
        assert!((k.tail_upper(3) - 0.125).abs() < 1e-15);
        let m = PercolationModel::long_range(0.1, k);
        let ModelKind::LongRange { truncation, .. } = m.kind else { unreachable!() };
        assert!(0.1 * 2.0 * k.tail_upper(truncation) < TRUNCATION_EPS);
        assert!(0.1 * 2.0 * k.tail_upper(truncation - 1) >= TRUNCATION_EPS);
        assert!((m.bond_probability(1) - (1.0 - (-0.05f64).exp())).abs() < 1e-16);
        assert_eq!(m.bond_probability(truncation + 1), 0.0);
    }

    #[test]
    fn power_tail_brackets_direct_sum() {
        let k = LongRangeKernel::Power { alpha: 2.5 };
        let direct: f64 = (11..2_000_000u64).map(|d| k.weight(d)).sum();
        assert!(k.tail_lower(10) <= direct && direct <= k.tail_upper(10));
    }

    #[test]
    fn subcritical_defaults() {
        let z1 = GraphFamily::ZLattice { dim: 1 };
        let tree = GraphFamily::RegularTree { degree: 3 };
        assert!(PercolationModel::site(0.9).known_subcritical(&z1));
        assert!(PercolationModel::site(0.45).known_subcritical(&tree));
        assert!(!PercolationModel::site(0.55).known_subcritical(&tree));
    }
}
