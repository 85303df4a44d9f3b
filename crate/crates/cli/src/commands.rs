//! Subcommand implementations.

use std::path::Path;

use rayon::prelude::*;
use serde_json::json;

use perclap::graphs::{build_window, growth_table, GraphFamily};
use perclap::ids::series::{z1_site_series, z1_site_tail};
use perclap::ids::{
    check_envelope, default_grid, fit_decay_rate, fit_exponent, ids_percolation, ids_periodic, log_grid, EnvelopeInputs, FitKind,
    IDSCurve, PeriodicMethod, Theorem,
};
use perclap::operators::{OperatorKind, TransitionKernel};
use perclap::percolation::{tail_estimate, ModelKind, PercolationModel, Sampler, TailEstimate, TailRow};
use perclap::rng::{sample_rng, SampleStream};
use perclap::spectra::bounds::{cheeger, dirichlet_ball, faber_krahn, fitted_dirichlet_constant, linear_path, tetrahedron_facts, BoundReport};
use perclap::walks::{return_probabilities, WalkMethod};
use perclap::{Error, Result};

use crate::artifact::{self, Artifact};
use crate::config::{missing, ExperimentConfig};
use crate::report;

/// Default windows stop growing at this many vertices.
const DEFAULT_WINDOW_VERTICES: u64 = 50_000;
const MAX_DEFAULT_RADIUS: usize = 64;

pub fn dispatch(command: &str, cfg: &ExperimentConfig) -> Result<()> {
    let mut cfg = cfg.clone();
    match command {
        "ids" => ids(&mut cfg),
        "periodic" => periodic(&mut cfg),
        "fit" => fit(&mut cfg),
        "envelope" => envelope(&cfg),
        "bounds-check" => bounds_check(&mut cfg),
        "tetra" => tetra(&cfg),
        "walk" => walk(&mut cfg),
        "tail" => tail(&mut cfg),
        "report" => report::run(&cfg),
        _ => Err(Error::InvalidInput(format!("unknown command {command}"))),
    }
}

fn out(cfg: &ExperimentConfig) -> Option<&Path> {
    cfg.out.as_deref()
}

/// Largest ball with at most [`DEFAULT_WINDOW_VERTICES`] vertices, capped at radius 64.
fn default_radius(family: GraphFamily) -> usize {
    let mut best = 1;
    for r in 1..=MAX_DEFAULT_RADIUS {
        match growth_table(family, r).and_then(|t| t.volume(r as i64)) {
            Ok(v) if v <= DEFAULT_WINDOW_VERTICES => best = r,
            _ => break,
        }
    }
    best
}

/// The energy grid, with its parameters written back into the config.
fn grid(cfg: &mut ExperimentConfig, k: usize) -> Result<Vec<f64>> {
    if cfg.emin.is_none() && cfg.emax.is_none() && cfg.points.is_none() && cfg.linear != Some(true) {
        let g = default_grid(k);
        cfg.emin = Some(g[0]);
        cfg.emax = Some(g[g.len() - 1]);
        cfg.points = Some(g.len());
        return Ok(g);
    }
    let emin = *cfg.emin.get_or_insert(1e-5);
    let emax = *cfg.emax.get_or_insert(8.0 * k as f64);
    let points = *cfg.points.get_or_insert(400);
    if cfg.linear == Some(true) {
        if !(emin > 0.0 && emax > emin) || points < 2 {
            return Err(Error::InvalidInput(format!("linear grid needs 0 < emin < emax and two points, got [{emin}, {emax}] x {points}")));
        }
        return Ok((0..points).map(|i| emin + (emax - emin) * i as f64 / (points - 1) as f64).collect());
    }
    log_grid(emin, emax, points)
}

fn sampling_window(cfg: &mut ExperimentConfig, family: GraphFamily) -> usize {
    *cfg.window_radius.get_or_insert_with(|| default_radius(family))
}

fn truncation_meta(model: &PercolationModel, meta: &mut Vec<(&str, String)>) {
    if let ModelKind::LongRange { truncation, .. } = model.kind {
        meta.push(("truncation", truncation.to_string()));
    }
}

fn ids(cfg: &mut ExperimentConfig) -> Result<()> {
    let family = cfg.family()?;
    let model = cfg.model(&family)?;
    let kind = cfg.operator()?;
    let kernel = cfg.kernel(family)?;
    let grid = grid(cfg, family.degree())?;
    let mut meta = vec![("operator", kind.to_string()), ("family", family.to_string()), ("model", model.to_string())];
    let curve = if cfg.exact_series == Some(true) {
        let (ModelKind::Site { p }, GraphFamily::ZLattice { dim: 1 }) = (model.kind, family) else {
            return Err(Error::InvalidInput("the exact series covers site percolation on z:1".into()));
        };
        meta.push(("source", "exact-series".into()));
        z1_site_series(p, kind, &grid)?
    } else {
        let samples = cfg.samples()?;
        let seed = cfg.seed()?;
        let radius = sampling_window(cfg, family);
        let window = build_window(family, family.identity(), radius)?;
        let sampler = Sampler::new(&window, model)?;
        let anchor = sampler.anchor_index(&family.identity())?;
        let run = ids_percolation(&sampler, anchor, &[kind], kernel.as_ref(), &grid, &SampleStream::new(seed, samples))?;
        let curve = run.curves.into_iter().next().expect("one kind requested");
        meta.push(("source", "monte-carlo".into()));
        meta.push(("censored_fraction", format!("{:e}", curve.censored_fraction)));
        truncation_meta(&model, &mut meta);
        curve
    };
    let unresolved = curve.unresolved().len();
    meta.push(("unresolved_points", unresolved.to_string()));
    if unresolved > 0 {
        eprintln!("warning: {unresolved} of {} grid points are below five standard errors", curve.points.len());
    }
    artifact::emit(out(cfg), &artifact::csv("ids", cfg, &meta, &curve.to_csv()))
}

fn periodic(cfg: &mut ExperimentConfig) -> Result<()> {
    let family = cfg.family()?;
    let method = cfg.method.get_or_insert_with(|| "closed".into()).clone();
    let method = match method.as_str() {
        "closed" => PeriodicMethod::ClosedForm,
        m => match m.strip_prefix("folner:").map(str::parse::<usize>) {
            Some(Ok(level)) => PeriodicMethod::Folner { level },
            _ => return Err(Error::InvalidInput(format!("unknown periodic method {m:?}; use closed or folner:<level>"))),
        },
    };
    let grid = grid(cfg, family.degree())?;
    let curve = ids_periodic(family, method, &grid)?;
    let mut meta = vec![("operator", curve.kind.to_string()), ("family", family.to_string())];
    if let perclap::ids::CurveSource::Folner { vertices, boundary_ratio, .. } = curve.source {
        meta.push(("folner_vertices", vertices.to_string()));
        meta.push(("boundary_ratio", format!("{boundary_ratio:e}")));
    }
    artifact::emit(out(cfg), &artifact::csv("periodic", cfg, &meta, &curve.to_csv()))
}

/// An IDS curve file with the config that produced it.
fn load_curve(path: &Path) -> Result<(IDSCurve, ExperimentConfig)> {
    let Artifact::Csv { header, text } = Artifact::load(path)? else {
        return Err(Error::InvalidInput(format!("{} is not a curve file", path.display())));
    };
    if header.command != "ids" && header.command != "periodic" {
        return Err(Error::InvalidInput(format!("{} holds `{}` output, not a curve", path.display(), header.command)));
    }
    let kind = match header.meta.iter().find(|(k, _)| k == "operator") {
        Some((_, v)) => v.parse()?,
        None => header.config.operator()?,
    };
    let mut curve = IDSCurve::from_csv(&text, kind)?;
    curve.family = header.config.graph.clone().unwrap_or_default();
    curve.model = header.config.model.clone();
    Ok((curve, header.config))
}

fn fit(cfg: &mut ExperimentConfig) -> Result<()> {
    let input = cfg.input.clone().ok_or_else(|| missing("input"))?;
    let kind: FitKind = cfg.kind.as_deref().ok_or_else(|| missing("kind"))?.parse()?;
    let (curve, source) = load_curve(&input)?;
    let (first, last) = match (curve.points.first(), curve.points.last()) {
        (Some(a), Some(b)) => (a.e, b.e),
        _ => return Err(Error::Resolution("curve has no points".into())),
    };
    let emin = *cfg.emin.get_or_insert(first);
    let emax = *cfg.emax.get_or_insert(last);
    let f = fit_exponent(&curve, kind, emin, emax)?;
    let extra = [("source", serde_json::to_value(source.embedded()).unwrap()), ("operator", json!(curve.kind.to_string()))];
    artifact::emit(out(cfg), &artifact::json("fit", cfg, &extra, &f))
}

pub fn parse_tail(text: &str) -> Result<TailEstimate> {
    let mut n_samples = 0;
    let mut rows = Vec::new();
    let mut censored_fraction = 0.0;
    for line in text.lines() {
        if let Some(m) = line.strip_prefix("# n_samples=") {
            n_samples = m.trim().parse().map_err(|_| Error::InvalidInput(format!("bad sample count {m:?}")))?;
        }
        if let Some(m) = line.strip_prefix("# censored_fraction=") {
            censored_fraction = m.trim().parse().map_err(|_| Error::InvalidInput(format!("bad censored fraction {m:?}")))?;
        }
        if line.starts_with('#') || line.starts_with('n') || line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::InvalidInput(format!("bad tail row {line:?}"));
        if f.len() != 4 {
            return Err(bad());
        }
        let x = |i: usize| f[i].trim().parse::<f64>().map_err(|_| bad());
        rows.push(TailRow { n: f[0].trim().parse().map_err(|_| bad())?, survival: x(1)?, stderr: x(2)?, censored_fraction: x(3)? });
    }
    Ok(TailEstimate { n_samples, rows, censored_fraction })
}

/// `P(|C| ≥ n)` for site percolation on `z:1`, until it underflows.
fn exact_z1_tail(p: f64) -> TailEstimate {
    let rows = (1..)
        .map(|n| TailRow { n, survival: z1_site_tail(p, n), stderr: 0.0, censored_fraction: 0.0 })
        .take_while(|r| r.survival > 1e-300)
        .collect();
    TailEstimate { n_samples: 0, rows, censored_fraction: 0.0 }
}

fn envelope(cfg: &ExperimentConfig) -> Result<()> {
    let input = cfg.input.clone().ok_or_else(|| missing("input"))?;
    let theorem: Theorem = cfg.theorem.as_deref().ok_or_else(|| missing("theorem"))?.parse()?;
    let tail_spec = cfg.tail.as_deref().ok_or_else(|| missing("tail"))?;
    let (curve, source) = load_curve(&input)?;
    let family = source.family()?;
    let model = source.model(&family)?;
    let tail = if tail_spec == "exact" {
        let (ModelKind::Site { p }, GraphFamily::ZLattice { dim: 1 }) = (model.kind, family) else {
            return Err(Error::InvalidInput("the exact tail covers site percolation on z:1".into()));
        };
        exact_z1_tail(p)
    } else {
        let path = Path::new(tail_spec);
        let art = Artifact::load(path)?;
        if art.command() != "tail" {
            return Err(Error::InvalidInput(format!("{tail_spec} holds `{}` output, not a tail", art.command())));
        }
        let tc = art.config();
        if tc.graph != source.graph || tc.model != source.model {
            return Err(Error::InvalidInput(format!(
                "lineage mismatch: tail is for {:?}/{:?}, curve for {:?}/{:?}",
                tc.graph, tc.model, source.graph, source.model
            )));
        }
        parse_tail(&artifact::read(path)?)?
    };
    let a_p = fit_decay_rate(&tail)?;
    let kernel_range = match curve.kind {
        OperatorKind::P | OperatorKind::R => {
            let k = source.kernel(family)?.unwrap_or_else(|| TransitionKernel::uniform(family));
            Some((k.min_weight(), k.max_weight()))
        }
        _ => None,
    };
    let inputs = EnvelopeInputs { family, model, a_p, kernel_range };
    let r = check_envelope(&curve, theorem, &inputs)?;
    let extra = [("source", serde_json::to_value(source.embedded()).unwrap()), ("tail_censored_fraction", json!(tail.censored_fraction))];
    artifact::emit(out(cfg), &artifact::json("envelope", cfg, &extra, &r))?;
    if r.holds {
        Ok(())
    } else {
        Err(Error::Invariant(format!("{theorem} envelope fails at {} of {} checked points", r.violations, r.upper_checked + r.lower_checked)))
    }
}

fn bounds_check(cfg: &mut ExperimentConfig) -> Result<()> {
    let family = cfg.family()?;
    let mut reports: Vec<BoundReport> = Vec::new();
    let mut meta: Vec<(&str, String)> = Vec::new();
    if cfg.model.is_some() {
        let model = cfg.model(&family)?;
        let samples = cfg.samples()?;
        let seed = cfg.seed()?;
        let radius = sampling_window(cfg, family);
        let window = build_window(family, family.identity(), radius)?;
        let sampler = Sampler::new(&window, model)?;
        let anchor = sampler.anchor_index(&family.identity())?;
        let clusters: Vec<_> = (0..samples).into_par_iter().map(|i| sampler.sample(anchor, &mut sample_rng(seed, i))).collect();
        let largest = clusters.iter().flatten().map(|c| c.len()).max().unwrap_or(0) as u64;
        let mut r = radius;
        let table = loop {
            let t = growth_table(family, r)?;
            if t.volume(r as i64)? >= 2 * largest {
                break t;
            }
            r += 1;
        };
        let per: Vec<Vec<BoundReport>> = clusters
            .par_iter()
            .enumerate()
            .filter_map(|(i, c)| c.as_ref().map(|c| (i, c)))
            .map(|(i, c)| {
                let g = sampler.cluster_graph(c);
                let name = format!("{family}/{model}/sample{i}");
                let mut v = vec![faber_krahn(&g, &table, &name)?];
                if g.len() >= 2 {
                    v.push(cheeger(&g, &name)?);
                }
                Ok(v)
            })
            .collect::<Result<_>>()?;
        meta.push(("clusters", per.len().to_string()));
        meta.push(("censored", clusters.iter().flatten().filter(|c| c.censored).count().to_string()));
        truncation_meta(&model, &mut meta);
        reports.extend(per.into_iter().flatten());
    }
    let balls = cfg.balls.unwrap_or(0);
    let mut ball_lambdas = Vec::new();
    for n in 1..=balls {
        match dirichlet_ball(family, n) {
            Ok(b) => {
                ball_lambdas.push((n, b.lhs));
                reports.push(b);
            }
            Err(Error::Budget { .. }) => {
                eprintln!("warning: balls of radius {n} and above exceed the vertex budget and were not checked");
                meta.push(("balls_checked", (n - 1).to_string()));
                break;
            }
            Err(e) => return Err(e),
        }
    }
    if !ball_lambdas.is_empty() {
        meta.push(("beta", format!("{:e}", fitted_dirichlet_constant(&family, &ball_lambdas))));
    }
    let paths = cfg.paths.unwrap_or(0);
    let path_reports: Vec<BoundReport> = (1..=paths).into_par_iter().map(|n| linear_path(family, n)).collect::<Result<_>>()?;
    reports.extend(path_reports);
    let violations = reports.iter().filter(|r| !r.holds).count();
    meta.push(("checked", reports.len().to_string()));
    meta.push(("violations", violations.to_string()));
    let mut body = format!("{}\n", BoundReport::CSV_HEADER);
    for r in &reports {
        body.push_str(&r.csv_row());
        body.push('\n');
    }
    artifact::emit(out(cfg), &artifact::csv("bounds-check", cfg, &meta, &body))?;
    if violations == 0 {
        Ok(())
    } else {
        Err(Error::Invariant(format!("{violations} of {} bound checks fail", reports.len())))
    }
}

/// Largest witness residual and boundary ratio accepted.
const WITNESS_RESIDUAL: f64 = 1e-8;
const WITNESS_BOUNDARY: f64 = 1e-6;

fn tetra(cfg: &ExperimentConfig) -> Result<()> {
    let m = cfg.m.ok_or_else(|| missing("m"))?;
    let n = cfg.n.ok_or_else(|| missing("n"))?;
    let kinds = match cfg.operator.as_deref() {
        Some(k) => vec![k.parse()?],
        None => vec![OperatorKind::N, OperatorKind::A, OperatorKind::D],
    };
    let facts = tetrahedron_facts(m, n, &kinds, WITNESS_RESIDUAL)?;
    let mut pass = facts.vertices == facts.expected_vertices && facts.connected && facts.dirichlet.holds;
    println!("lambda={:.15e}", facts.lambda);
    println!("vertices={} expected={}", facts.vertices, facts.expected_vertices);
    for e in &facts.eigen {
        println!(
            "operator={} is_eigenvalue={} residual={:e} witness_residual={:e} witness_boundary_ratio={:e}",
            e.kind, e.is_eigenvalue, e.residual, e.witness_residual, e.witness_boundary_ratio
        );
        pass &= e.is_eigenvalue && e.witness_residual <= WITNESS_RESIDUAL && e.witness_boundary_ratio <= WITNESS_BOUNDARY;
    }
    println!("dirichlet_bound={} lhs={:e} rhs={:e}", facts.dirichlet.holds, facts.dirichlet.lhs, facts.dirichlet.rhs);
    if let Some(p) = out(cfg) {
        artifact::emit(Some(p), &artifact::json("tetra", cfg, &[("pass", json!(pass))], &facts))?;
    }
    if pass {
        Ok(())
    } else {
        Err(Error::Invariant(format!("tetrahedron facts fail for m = {m}, n = {n}")))
    }
}

fn walk_method(cfg: &ExperimentConfig) -> Result<WalkMethod> {
    let spec = cfg.method.as_deref().unwrap_or("exact");
    match spec {
        "exact" => Ok(WalkMethod::ExactMatvec),
        "range" => Ok(WalkMethod::LampRange),
        s => match s.strip_prefix("mc:").map(str::parse::<u64>) {
            Some(Ok(samples)) => Ok(WalkMethod::MonteCarlo { samples, seed: cfg.seed()? }),
            _ => Err(Error::InvalidInput(format!("unknown walk method {s:?}; use exact, range or mc:<samples>"))),
        },
    }
}

fn walk(cfg: &mut ExperimentConfig) -> Result<()> {
    let family = cfg.family()?;
    let steps = cfg.steps.ok_or_else(|| missing("steps"))?;
    cfg.method.get_or_insert_with(|| "exact".into());
    let method = walk_method(cfg)?;
    let s = return_probabilities(family, steps, method)?;
    let bad = s.even_monotonicity_violations();
    if !bad.is_empty() {
        eprintln!("warning: return probability increases after {} even steps", bad.len());
    }
    let meta = [("family", family.to_string()), ("monotonicity_violations", bad.len().to_string())];
    artifact::emit(out(cfg), &artifact::csv("walk", cfg, &meta, &s.to_csv()))
}

fn tail(cfg: &mut ExperimentConfig) -> Result<()> {
    let family = cfg.family()?;
    let model = cfg.model(&family)?;
    let samples = cfg.samples()?;
    let seed = cfg.seed()?;
    let radius = sampling_window(cfg, family);
    let window = build_window(family, family.identity(), radius)?;
    let sampler = Sampler::new(&window, model)?;
    let anchor = sampler.anchor_index(&family.identity())?;
    let t = tail_estimate(&sampler, anchor, &SampleStream::new(seed, samples))?;
    let mut meta = vec![("n_samples", t.n_samples.to_string()), ("censored_fraction", format!("{:e}", t.censored_fraction))];
    truncation_meta(&model, &mut meta);
    let mut body = String::from("n,survival,stderr,censored_fraction\n");
    for r in &t.rows {
        body.push_str(&format!("{},{:e},{:e},{:e}\n", r.n, r.survival, r.stderr, r.censored_fraction));
    }
    artifact::emit(out(cfg), &artifact::csv("tail", cfg, &meta, &body))
}
