//! Monte Carlo IDS of percolation operators from sampled anchor clusters.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::operators::{assemble, OperatorKind, TransitionKernel};
use crate::percolation::Sampler;
use crate::rng::{reduce_samples, Mergeable, Moments, SampleStream};
use crate::spectra::{kernel_tolerance, DenseSpectrum};

use super::{CurveSource, IDSCurve, IdsPoint};

/// Curves for several kinds sharing the same sampled clusters.
#[derive(Clone, Debug, Serialize)]
pub struct IdsRun {
    pub curves: Vec<IDSCurve>,
    /// Second atom estimator `E[1{x ∈ V(ω)} / |C_x|]`, for kinds with constant kernel.
    pub atom_inverse_size: Option<(f64, f64)>,
    /// Grid points checked for `count^N ≥ count^A ≥ count^D` on the same cluster.
    pub weyl_checks: u64,
    pub weyl_violations: u64,
}

#[derive(Default)]
struct KindAcc {
    est: Vec<Moments>,
    low: Vec<f64>,
    high: Vec<f64>,
    atom: Moments,
}

#[derive(Default)]
struct Acc {
    kinds: Vec<KindAcc>,
    inverse_size: Moments,
    absent: u64,
    censored: u64,
    weyl_checks: u64,
    weyl_violations: u64,
    error: Option<String>,
}

impl Mergeable for Acc {
    fn merge(&mut self, other: Self) {
        for (a, b) in self.kinds.iter_mut().zip(other.kinds) {
            for (x, y) in a.est.iter_mut().zip(b.est) {
                x.merge(y);
            }
            for (x, y) in a.low.iter_mut().zip(b.low) {
                *x += y;
            }
            for (x, y) in a.high.iter_mut().zip(b.high) {
                *x += y;
            }
            a.atom.merge(b.atom);
        }
        self.inverse_size.merge(other.inverse_size);
        self.absent += other.absent;
        self.censored += other.censored;
        self.weyl_checks += other.weyl_checks;
        self.weyl_violations += other.weyl_violations;
        if self.error.is_none() {
            self.error = other.error;
        }
    }
}

/// `N^#(E) - N^#(0) = E ⟨δ_x, χ_{]0,E]}(H^#(C_x)) δ_x⟩` for each kind on `grid`, with
/// `N^#(0)` from the kernel weight. Censored clusters enter the estimate as computed and
/// bracket it with weights 0 and 1.
pub fn ids_percolation(
    sampler: &Sampler,
    anchor: usize,
    kinds: &[OperatorKind],
    kernel: Option<&TransitionKernel>,
    grid: &[f64],
    stream: &SampleStream,
) -> Result<IdsRun> {
    if !sampler.model.declared_subcritical {
        return invalid("IDS estimation requires a model declared subcritical");
    }
    if kinds.is_empty() {
        return invalid("no operator kinds requested");
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("energy grid must be strictly increasing");
    }
    let g = grid.len();
    let pos = |k: OperatorKind| kinds.iter().position(|&x| x == k);
    let weyl = (pos(OperatorKind::N), pos(OperatorKind::A), pos(OperatorKind::D));
    let make = || Acc {
        kinds: kinds
            .iter()
            .map(|_| KindAcc { est: vec![Moments::default(); g], low: vec![0.0; g], high: vec![0.0; g], atom: Moments::default() })
            .collect(),
        ..Acc::default()
    };
    let acc = reduce_samples(stream, make, |acc, i| {
        if acc.error.is_some() {
            return;
        }
        let mut rng = stream.rng(i);
        let Some(c) = sampler.sample(anchor, &mut rng) else {
            acc.absent += 1;
            return;
        };
        let graph = sampler.cluster_graph(&c);
        acc.censored += c.censored as u64;
        acc.inverse_size.push(1.0 / c.len() as f64);
        let mut counts: Vec<Vec<usize>> = Vec::with_capacity(kinds.len());
        for (ka, &kind) in acc.kinds.iter_mut().zip(kinds) {
            let spec = match assemble(&graph, kind, kernel).and_then(|op| Ok((DenseSpectrum::new(&op)?, kernel_tolerance(&op)))) {
                Ok(s) => s,
                Err(e) => {
                    acc.error = Some(e.to_string());
                    return;
                }
            };
            let (d, ktol) = spec;
            let mut atom = 0.0;
            let mut j = 0;
            while j < d.dim() && d.values[j] < ktol {
                atom += d.vectors[(0, j)].powi(2);
                j += 1;
            }
            ka.atom.push(atom);
            let mut cum = 0.0;
            let mut count = Vec::with_capacity(g);
            for (gi, &e) in grid.iter().enumerate() {
                while j < d.dim() && d.values[j] <= e {
                    cum += d.vectors[(0, j)].powi(2);
                    j += 1;
                }
                count.push(j);
                let w = cum.min(1.0);
                ka.est[gi].push(w);
                ka.low[gi] += if c.censored { 0.0 } else { w };
                ka.high[gi] += if c.censored { 1.0 } else { w };
            }
            counts.push(count);
        }
        if let (Some(n), Some(a), Some(dd)) = weyl {
            for gi in 0..g {
                acc.weyl_checks += 1;
                if !(counts[n][gi] >= counts[a][gi] && counts[a][gi] >= counts[dd][gi]) {
                    acc.weyl_violations += 1;
                }
            }
        }
    });
    if let Some(e) = acc.error {
        return Err(Error::Invariant(format!("cluster spectrum failed: {e}")));
    }
    let total = stream.len() as f64;
    let mut curves = Vec::new();
    for (mut ka, &kind) in acc.kinds.into_iter().zip(kinds) {
        ka.atom.push_zeros(acc.absent);
        let points = grid
            .iter()
            .enumerate()
            .map(|(gi, &e)| {
                let mut m = ka.est[gi];
                m.push_zeros(acc.absent);
                let n = m.mean();
                IdsPoint { e, n, stderr: m.stderr(), n_low: ka.low[gi] / total, n_high: ka.high[gi] / total, ln_n: n.ln() }
            })
            .collect();
        curves.push(IDSCurve {
            kind,
            family: sampler.window.family.to_string(),
            model: Some(sampler.model.to_string()),
            source: CurveSource::MonteCarlo { samples: stream.len(), seed: stream.master_seed, window_radius: sampler.window.radius },
            points,
            atom: ka.atom.mean(),
            atom_stderr: ka.atom.stderr(),
            fundamental_domain: 1,
            censored_fraction: acc.censored as f64 / total,
        });
    }
    let atom_inverse_size = kinds.iter().any(|k| k.has_constant_kernel()).then(|| {
        let mut m = acc.inverse_size;
        m.push_zeros(acc.absent);
        (m.mean(), m.stderr())
    });
    Ok(IdsRun { curves, atom_inverse_size, weyl_checks: acc.weyl_checks, weyl_violations: acc.weyl_violations })
}

/// `N^N(0)` by the kernel-weight trace and by `E[1{x ∈ V(ω)} / |C_x|]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AtomEstimate {
    pub kernel_trace: f64,
    pub kernel_trace_stderr: f64,
    pub inverse_size: f64,
    pub inverse_size_stderr: f64,
    pub joint_stderr: f64,
    /// The estimators differ by at most four joint standard errors.
    pub agree: bool,
    pub censored_fraction: f64,
}

pub fn atom_at_zero(sampler: &Sampler, anchor: usize, stream: &SampleStream) -> Result<AtomEstimate> {
    let run = ids_percolation(sampler, anchor, &[OperatorKind::N], None, &[], stream)?;
    let c = &run.curves[0];
    let (inv, inv_se) = run.atom_inverse_size.unwrap();
    let joint = (c.atom_stderr.powi(2) + inv_se.powi(2)).sqrt();
    let diff = (c.atom - inv).abs();
    let agree = diff <= 4.0 * joint || diff <= 1e-12 * inv.abs().max(1e-300);
    if !agree {
        return Err(Error::Invariant(format!("atom estimators disagree: {} vs {inv} (joint stderr {joint})", c.atom)));
    }
    Ok(AtomEstimate {
        kernel_trace: c.atom,
        kernel_trace_stderr: c.atom_stderr,
        inverse_size: inv,
        inverse_size_stderr: inv_se,
        joint_stderr: joint,
        agree,
        censored_fraction: c.censored_fraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::{build_window, GraphFamily};
    use crate::ids::log_grid;
    use crate::ids::series::z1_site_series;
    use crate::percolation::PercolationModel;

    #[test]
    fn matches_series_on_z1() {
        let f = GraphFamily::ZLattice { dim: 1 };
        let w = build_window(f, f.identity(), 40).unwrap();
        let s = Sampler::new(&w, PercolationModel::site(0.3).declare_subcritical()).unwrap();
        let grid = log_grid(0.05, 6.0, 12).unwrap();
        let kinds = [OperatorKind::N, OperatorKind::A, OperatorKind::D];
        let run = ids_percolation(&s, s.anchor_index(&f.identity()).unwrap(), &kinds, None, &grid, &SampleStream::new(11, 200_000)).unwrap();
        assert_eq!(run.weyl_violations, 0);
        for (c, &kind) in run.curves.iter().zip(&kinds) {
            let exact = z1_site_series(0.3, kind, &grid).unwrap();
            for (a, b) in c.points.iter().zip(&exact.points) {
                // Weights lie in [0, 1], so the per-sample variance is at most the mean.
                let se = a.stderr.max((b.n / 200_000.0).sqrt());
                assert!((a.n - b.n).abs() <= 4.0 * se, "{kind} E={}: {} vs {}", a.e, a.n, b.n);
            }
            assert!((c.atom - exact.atom).abs() <= 4.0 * c.atom_stderr.max(1e-12));
        }
    }

    #[test]
    fn atom_estimators_agree() {
        let f = GraphFamily::ZLattice { dim: 2 };
        let w = build_window(f, f.identity(), 12).unwrap();
        let s = Sampler::new(&w, PercolationModel::site(0.4).declare_subcritical()).unwrap();
        let a = atom_at_zero(&s, 0, &SampleStream::new(3, 20_000)).unwrap();
        assert!(a.agree);
        let none = Sampler::new(&w, PercolationModel::bond(0.0).declare_subcritical()).unwrap();
        assert_eq!(atom_at_zero(&none, 0, &SampleStream::new(3, 1000)).unwrap().kernel_trace, 0.0);
    }
}
