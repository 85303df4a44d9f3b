//! Upper and lower IDS envelopes with fitted constants.
//!
//! Upper envelopes bound `N(E) - N(0)` by the probability of a large cluster: either through
//! the Faber–Krahn route `exp(-(a/2) V(⌊E^{-1/2}/(8√2 k) - 1⌋))` (kinds A, D, P) or through
//! the Cheeger bound `λ^N(C) ≥ 2/|C|²`, which gives `exp(-a ⌈√(2/E)⌉)` (kinds N, R). Lower
//! envelopes use a family of shapes `G'_n` with `λ(G'_n) ≤ c_n`: every translate of `G'_n`
//! that is exactly the cluster of the anchor contributes `1/|G'_n|`, so
//! `N(E) - N(0) ≥ P(G'_{n(E)} is a cluster)` with `n(E) = min{n ≥ n0 : c_n ≤ E}`.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graphs::{build_window, growth_table, linear_subgraph, tetrahedron, FiniteGraph, GraphFamily, GrowthOrder, LampGenerators};
use crate::operators::{assemble, OperatorKind};
use crate::percolation::{cluster_probability_exact, ModelKind, PercolationModel, TailEstimate};
use crate::spectra::lowest_eigenvalue;

use super::IDSCurve;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Theorem {
    DirichletArbitrary,
    DirichletPoly,
    Neumann,
    LamplighterPerc,
    MarkovPoly,
    Regularized,
    LongRangeNeumann,
}

impl Theorem {
    pub const ALL: [Theorem; 7] = [
        Theorem::DirichletArbitrary,
        Theorem::DirichletPoly,
        Theorem::Neumann,
        Theorem::LamplighterPerc,
        Theorem::MarkovPoly,
        Theorem::Regularized,
        Theorem::LongRangeNeumann,
    ];

    fn name(&self) -> &'static str {
        match self {
            Theorem::DirichletArbitrary => "dirichlet-arbitrary",
            Theorem::DirichletPoly => "dirichlet-poly",
            Theorem::Neumann => "neumann",
            Theorem::LamplighterPerc => "lamplighter",
            Theorem::MarkovPoly => "markov-poly",
            Theorem::Regularized => "regularized",
            Theorem::LongRangeNeumann => "longrange-neumann",
        }
    }
}

impl fmt::Display for Theorem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Theorem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        Theorem::ALL
            .into_iter()
            .find(|t| {
                let name: String = t.name().chars().filter(|c| c.is_ascii_alphanumeric()).collect();
                name == key || format!("{t:?}").to_ascii_lowercase() == key
            })
            .ok_or_else(|| Error::InvalidInput(format!("unknown theorem {s:?}")))
    }
}

/// Everything the envelopes need besides the curve.
#[derive(Clone, Debug)]
pub struct EnvelopeInputs {
    pub family: GraphFamily,
    pub model: PercolationModel,
    /// Exponential rate with `P(|C| ≥ n) ≤ exp(-a n)`, from [`fit_decay_rate`].
    pub a_p: f64,
    /// `(min 𝒫, max 𝒫)` over generators, for kinds P and R.
    pub kernel_range: Option<(f64, f64)>,
}

/// Largest ball used as a lower-envelope shape; `P(B is a cluster)` underflows long before.
pub const BALL_LIMIT: usize = 4000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeRow {
    pub e: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub ln_estimate: f64,
    pub resolved: bool,
    pub ln_upper: f64,
    pub upper_holds: Option<bool>,
    /// Shape index `n(E)` and `ln P(G'_{n(E)} is a cluster)`.
    pub shape_n: Option<usize>,
    pub ln_lower: Option<f64>,
    pub lower_holds: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub theorem: Theorem,
    pub kind: OperatorKind,
    pub family: String,
    pub model: String,
    pub a_p: f64,
    /// Ball constant `β` with `λ^D(B(n)) ≤ β k / n²` on every ball used.
    pub beta: Option<f64>,
    pub lower_shapes: Option<String>,
    pub rows: Vec<EnvelopeRow>,
    pub upper_checked: usize,
    pub lower_checked: usize,
    pub violations: usize,
    pub holds: bool,
}

/// Conservative exponential rate `min_n -ln(S(n) + censored(n) + 3 se(n)) / n` over rows
/// resolved above five standard errors.
pub fn fit_decay_rate(tail: &TailEstimate) -> Result<f64> {
    let mut best = f64::INFINITY;
    for r in &tail.rows {
        if r.survival <= 0.0 || r.survival <= 5.0 * r.stderr {
            continue;
        }
        let s = r.survival + r.censored_fraction + 3.0 * r.stderr;
        if s < 1.0 {
            best = best.min(-s.ln() / r.n as f64);
        }
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Err(Error::Resolution("no resolved tail row below survival 1".into()))
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Upper {
    FaberKrahn,
    Cheeger,
}

#[derive(Clone, Copy, PartialEq)]
enum Shapes {
    Paths,
    Balls,
    Tetrahedra,
}

impl Shapes {
    fn name(&self) -> &'static str {
        match self {
            Shapes::Paths => "paths",
            Shapes::Balls => "balls",
            Shapes::Tetrahedra => "tetrahedra",
        }
    }
}

fn plan(theorem: Theorem, kind: OperatorKind, inputs: &EnvelopeInputs) -> Result<(Upper, Option<Shapes>)> {
    let family = &inputs.family;
    let long_range = matches!(inputs.model.kind, ModelKind::LongRange { .. });
    let polynomial = matches!(family.growth_order(), GrowthOrder::Polynomial(_));
    let lamplighter = matches!(family, GraphFamily::Lamplighter { .. });
    let needs = |ok: bool, what: &str| if ok { Ok(()) } else { invalid(format!("{theorem} {what}")) };
    if long_range != (theorem == Theorem::LongRangeNeumann) {
        return invalid(format!("{theorem} does not apply to model {}", inputs.model));
    }
    use OperatorKind as K;
    match theorem {
        Theorem::DirichletArbitrary | Theorem::DirichletPoly => {
            needs(matches!(kind, K::A | K::D), "covers kinds A and D")?;
            needs(theorem == Theorem::DirichletArbitrary || polynomial, "needs a family of polynomial growth")?;
            Ok((Upper::FaberKrahn, Some(Shapes::Balls)))
        }
        Theorem::Neumann | Theorem::LongRangeNeumann => {
            needs(kind == K::N, "covers kind N")?;
            Ok((Upper::Cheeger, Some(Shapes::Paths)))
        }
        Theorem::LamplighterPerc => {
            needs(lamplighter, "needs a lamplighter family")?;
            needs(matches!(kind, K::N | K::A | K::D), "covers kinds N, A and D")?;
            let upper = if kind == K::N { Upper::Cheeger } else { Upper::FaberKrahn };
            let s0 = matches!(family, GraphFamily::Lamplighter { generators: LampGenerators::S0, .. });
            Ok((upper, s0.then_some(Shapes::Tetrahedra)))
        }
        Theorem::MarkovPoly => {
            needs(kind == K::P, "covers kind P")?;
            needs(polynomial, "needs a family of polynomial growth")?;
            Ok((Upper::FaberKrahn, Some(Shapes::Balls)))
        }
        Theorem::Regularized => {
            needs(kind == K::R, "covers kind R")?;
            Ok((Upper::Cheeger, Some(Shapes::Paths)))
        }
    }
}

/// Lower-envelope shapes with cached probabilities and (for balls) eigenvalues.
struct ShapeFamily<'a> {
    shapes: Shapes,
    inputs: &'a EnvelopeInputs,
    /// Multiplier on `c_n` from the kernel comparison.
    scale: f64,
    beta: f64,
    /// Largest ball radius within [`BALL_LIMIT`].
    max_radius: usize,
    graphs: HashMap<usize, Option<FiniteGraph>>,
    lambdas: HashMap<usize, f64>,
    ln_probs: HashMap<usize, f64>,
}

impl<'a> ShapeFamily<'a> {
    fn n0(&self) -> usize {
        match self.shapes {
            Shapes::Tetrahedra => 2,
            _ => 1,
        }
    }

    fn c(&self, n: usize) -> f64 {
        let n2 = (n * n) as f64;
        let base = match self.shapes {
            Shapes::Paths => 12.0 / n2,
            Shapes::Balls => self.beta * self.inputs.family.degree() as f64 / n2,
            Shapes::Tetrahedra => {
                let GraphFamily::Lamplighter { m, .. } = self.inputs.family else { unreachable!() };
                m as f64 * std::f64::consts::PI.powi(2) / n2
            }
        };
        self.scale * base
    }

    fn n_of(&self, e: f64) -> usize {
        let n0 = self.n0();
        if self.c(n0) <= e {
            return n0;
        }
        // c_n = C/n², so the minimum is ⌈√(C/E)⌉ up to rounding.
        let mut n = ((self.c(1) / e).sqrt().ceil() as usize).max(n0);
        while n > n0 && self.c(n - 1) <= e {
            n -= 1;
        }
        while self.c(n) > e {
            n += 1;
        }
        n
    }

    fn graph(&mut self, n: usize) -> Result<Option<&FiniteGraph>> {
        if !self.graphs.contains_key(&n) {
            let family = self.inputs.family;
            let g = match self.shapes {
                Shapes::Paths => Some(linear_subgraph(family, n)?),
                Shapes::Balls if n <= self.max_radius => Some(build_window(family, family.identity(), n)?.graph),
                Shapes::Balls => None,
                Shapes::Tetrahedra => {
                    let GraphFamily::Lamplighter { m, .. } = family else { unreachable!() };
                    match tetrahedron(m, n) {
                        Ok(t) if t.len() <= BALL_LIMIT => Some(t.graph),
                        Ok(_) | Err(Error::Budget { .. }) => None,
                        Err(e) => return Err(e),
                    }
                }
            };
            self.graphs.insert(n, g);
        }
        Ok(self.graphs[&n].as_ref())
    }

    fn ball_lambda(&mut self, n: usize) -> Result<Option<f64>> {
        if let Some(&l) = self.lambdas.get(&n) {
            return Ok(Some(l));
        }
        let Some(g) = self.graph(n)? else { return Ok(None) };
        let l = lowest_eigenvalue(&assemble(g, OperatorKind::D, None)?)?;
        self.lambdas.insert(n, l);
        Ok(Some(l))
    }

    /// Raises `β` until `λ^D(B(n(E))) ≤ c_{n(E)}` on every computable ball the grid uses.
    fn fit_beta(&mut self, grid: &[f64], initial_n: usize) -> Result<()> {
        let k = self.inputs.family.degree() as f64;
        for n in 1..=initial_n {
            if let Some(l) = self.ball_lambda(n)? {
                self.beta = self.beta.max(l * (n * n) as f64 / k);
            }
        }
        loop {
            let mut raised = false;
            for &e in grid {
                let n = self.n_of(e);
                if let Some(l) = self.ball_lambda(n)? {
                    if l * self.scale > self.c(n) {
                        self.beta = l * (n * n) as f64 / k;
                        raised = true;
                    }
                }
            }
            if !raised {
                return Ok(());
            }
        }
    }

    fn ln_probability(&mut self, n: usize) -> Result<Option<f64>> {
        if let Some(&p) = self.ln_probs.get(&n) {
            return Ok(Some(p));
        }
        let family = self.inputs.family;
        let model = self.inputs.model;
        let Some(g) = self.graph(n)? else { return Ok(None) };
        let cp = cluster_probability_exact(&family, g, &model)?;
        self.ln_probs.insert(n, cp.ln_lower);
        Ok(Some(cp.ln_lower))
    }
}

/// Evaluates the theorem's envelopes on the curve. Bounds are checked only at resolved grid
/// points: the upper one holds when `N_low - 3 se ≤ upper`, the lower one when
/// `N_high + 3 se ≥ lower`. Exact curves are compared in the log domain.
pub fn check_envelope(curve: &IDSCurve, theorem: Theorem, inputs: &EnvelopeInputs) -> Result<EnvelopeReport> {
    if !(inputs.a_p > 0.0 && inputs.a_p.is_finite()) {
        return invalid(format!("decay rate must be positive, got {}", inputs.a_p));
    }
    let kind = curve.kind;
    let (upper, shapes) = plan(theorem, kind, inputs)?;
    let (min_p, max_p) = match kind {
        OperatorKind::P | OperatorKind::R => {
            inputs.kernel_range.ok_or_else(|| Error::InvalidInput(format!("{theorem} needs the kernel weight range")))?
        }
        _ => (1.0, 1.0),
    };
    let k = inputs.family.degree() as f64;
    let a = inputs.a_p;
    let energies = curve.energies();

    // Faber–Krahn radii: one growth table up to the largest radius needed.
    let radius = |e: f64| ((e / min_p).powf(-0.5) / (8.0 * 2f64.sqrt() * k) - 1.0).floor() as i64;
    let max_radius = energies.iter().map(|&e| radius(e)).max().unwrap_or(-1);
    let table = if upper == Upper::FaberKrahn && max_radius >= 0 { Some(growth_table(inputs.family, max_radius as usize)?) } else { None };
    let ln_upper = |e: f64| -> Result<f64> {
        Ok(match upper {
            Upper::FaberKrahn => {
                let r = radius(e);
                // Without a table every radius is negative and V = 0.
                let v = match &table {
                    Some(t) => t.volume(r)? as f64,
                    None => 0.0,
                };
                -(a / 2.0) * v
            }
            Upper::Cheeger => -a * (2.0 * min_p / e).sqrt().ceil(),
        })
    };

    let mut sf = shapes.map(|s| ShapeFamily {
        shapes: s,
        inputs,
        scale: max_p,
        beta: 0.0,
        max_radius: if s == Shapes::Balls { max_ball_radius(inputs.family) } else { 0 },
        graphs: HashMap::new(),
        lambdas: HashMap::new(),
        ln_probs: HashMap::new(),
    });
    if let Some(f) = sf.as_mut() {
        if f.shapes == Shapes::Balls {
            let resolved: Vec<f64> = curve.points.iter().filter(|p| p.resolved()).map(|p| p.e).collect();
            f.fit_beta(&resolved, 30.min(f.max_radius))?;
        }
    }

    let exact = curve.points.iter().all(|p| p.stderr == 0.0);
    let mut rows = Vec::with_capacity(curve.points.len());
    let (mut upper_checked, mut lower_checked, mut violations) = (0, 0, 0);
    for p in &curve.points {
        let resolved = p.resolved();
        let lu = ln_upper(p.e)?;
        let (mut shape_n, mut ln_lower) = (None, None);
        if let Some(f) = sf.as_mut() {
            let n = f.n_of(p.e);
            shape_n = Some(n);
            ln_lower = f.ln_probability(n)?;
            if ln_lower.is_none() {
                // Shape beyond the size limit: its probability is below the f64 range.
                ln_lower = Some(f64::NEG_INFINITY);
            }
        }
        let (mut upper_holds, mut lower_holds) = (None, None);
        if resolved {
            upper_checked += 1;
            let ok = if exact {
                p.ln_n <= lu + 1e-9 * lu.abs().max(1.0)
            } else {
                p.n_low - 3.0 * p.stderr <= lu.exp()
            };
            upper_holds = Some(ok);
            violations += usize::from(!ok);
            if let Some(ll) = ln_lower {
                lower_checked += 1;
                let ok = if exact {
                    p.ln_n >= ll - 1e-9 * ll.abs().max(1.0)
                } else {
                    p.n_high + 3.0 * p.stderr >= ll.exp()
                };
                lower_holds = Some(ok);
                violations += usize::from(!ok);
            }
        }
        rows.push(EnvelopeRow {
            e: p.e,
            estimate: p.n,
            stderr: p.stderr,
            ln_estimate: p.ln_n,
            resolved,
            ln_upper: lu,
            upper_holds,
            shape_n,
            ln_lower,
            lower_holds,
        });
    }
    Ok(EnvelopeReport {
        theorem,
        kind,
        family: inputs.family.to_string(),
        model: inputs.model.to_string(),
        a_p: a,
        beta: sf.as_ref().filter(|f| f.shapes == Shapes::Balls).map(|f| f.beta),
        lower_shapes: sf.as_ref().map(|f| f.shapes.name().to_string()),
        rows,
        upper_checked,
        lower_checked,
        violations,
        holds: violations == 0,
    })
}

/// Largest radius with `V(n) ≤` [`BALL_LIMIT`].
fn max_ball_radius(family: GraphFamily) -> usize {
    let mut n = 0;
    while let Ok(t) = growth_table(family, n + 1) {
        if t.volume(n as i64 + 1).unwrap() as usize > BALL_LIMIT {
            break;
        }
        n += 1;
    }
    n
}
