//! Joins the outputs of one pipeline into verdicts.

use std::path::PathBuf;

use serde::Serialize;
use serde_json::{json, Value};

use perclap::graphs::{GraphFamily, GrowthOrder};
use perclap::percolation::{ModelKind, PercolationModel};
use perclap::walks::{tauberian_exponent, ReturnProbabilitySeries, TauberianMode, WalkMethod};
use perclap::{Error, Result};

use crate::artifact::{self, Artifact};
use crate::config::ExperimentConfig;

pub const LIFSHITZ_TOLERANCE: f64 = 0.05;
pub const VAN_HOVE_TOLERANCE: f64 = 0.02;
pub const RETURN_TOLERANCE: f64 = 0.1;
/// Band for the stretched-exponential exponent of return probabilities on lamplighter groups.
pub const STRETCHED_BAND: [f64; 2] = [0.25, 0.40];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    /// No reference value applies to this input.
    Unchecked,
}

#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    pub name: String,
    pub status: Status,
    pub input: PathBuf,
    pub detail: Value,
}

#[derive(Clone, Debug, Serialize)]
pub struct Substitution {
    pub what: &'static str,
    pub input: PathBuf,
    pub value: Value,
}

fn status(ok: bool) -> Status {
    if ok {
        Status::Pass
    } else {
        Status::Fail
    }
}

fn dimension(graph: Option<&str>) -> Option<usize> {
    let family: GraphFamily = graph?.parse().ok()?;
    match family.growth_order() {
        GrowthOrder::Polynomial(d) => Some(d),
        _ => None,
    }
}

/// Every input must agree on graph, model and seed wherever it records them.
fn check_lineage(arts: &[(PathBuf, Artifact)]) -> Result<Value> {
    let mut lineage = serde_json::Map::new();
    type Get = fn(&ExperimentConfig) -> Option<String>;
    let fields: [(&str, Get); 3] =
        [("graph", |c| c.graph.clone()), ("model", |c| c.model.clone()), ("seed", |c| c.seed.map(|s| s.to_string()))];
    for (name, get) in fields {
        let mut seen: Option<(String, &PathBuf)> = None;
        for (path, a) in arts {
            let Some(v) = get(&a.lineage()) else { continue };
            match &seen {
                Some((w, first)) if *w != v => {
                    return Err(Error::InvalidInput(format!(
                        "lineage mismatch: {} has {name} {w}, {} has {v}",
                        first.display(),
                        path.display()
                    )))
                }
                Some(_) => {}
                None => seen = Some((v, path)),
            }
        }
        if let Some((v, _)) = seen {
            lineage.insert(name.into(), json!(v));
        }
    }
    Ok(Value::Object(lineage))
}

fn meta<'a>(a: &'a Artifact, key: &str) -> Option<&'a str> {
    match a {
        Artifact::Csv { header, .. } => header.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str()),
        Artifact::Json { .. } => None,
    }
}

fn csv_rows(text: &str) -> Vec<Vec<&str>> {
    text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()).skip(1).map(|l| l.split(',').collect()).collect()
}

fn walk_series(a: &Artifact) -> Result<ReturnProbabilitySeries> {
    let Artifact::Csv { header, text } = a else { unreachable!("walk outputs are CSV") };
    let mut values = Vec::new();
    let mut stderr = Vec::new();
    for r in csv_rows(text) {
        let x = |i: usize| r.get(i).and_then(|s| s.trim().parse::<f64>().ok()).ok_or_else(|| Error::InvalidInput("bad walk row".into()));
        values.push(x(1)?);
        stderr.push(x(2)?);
    }
    let method = match header.config.method.as_deref() {
        Some("range") => WalkMethod::LampRange,
        Some(m) if m.starts_with("mc:") => {
            WalkMethod::MonteCarlo { samples: m[3..].parse().unwrap_or(0), seed: header.config.seed.unwrap_or(0) }
        }
        _ => WalkMethod::ExactMatvec,
    };
    Ok(ReturnProbabilitySeries { family: header.config.graph.clone().unwrap_or_default(), method, values, stderr })
}

fn verdicts_for(path: &PathBuf, a: &Artifact, all: &[(PathBuf, Artifact)], out: &mut Vec<Verdict>, subs: &mut Vec<Substitution>) -> Result<()> {
    let lineage = a.lineage();
    let v = |name: &str, status: Status, detail: Value| Verdict { name: name.into(), status, input: path.clone(), detail };
    let sub = |what: &'static str, value: Value| Substitution { what, input: path.clone(), value };
    match (a.command(), a) {
        ("fit", Artifact::Json { value, .. }) => {
            let slope = value["slope"].as_f64().unwrap_or(f64::NAN);
            let operator = value["operator"].as_str().unwrap_or("");
            let d = dimension(lineage.graph.as_deref());
            match value["kind"].as_str() {
                Some("Lifshitz") => {
                    let name = if matches!(operator, "N" | "R") { "neumann_lifshitz" } else { "dirichlet_lifshitz" };
                    // Envelopes on the same curve, if any were passed.
                    let envelopes: Vec<bool> = all
                        .iter()
                        .filter(|(_, b)| b.command() == "envelope" && b.lineage() == lineage)
                        .filter_map(|(_, b)| match b {
                            Artifact::Json { value, .. } if value["kind"].as_str() == Some(operator) => value["holds"].as_bool(),
                            _ => None,
                        })
                        .collect();
                    let env_ok = envelopes.iter().all(|&h| h);
                    match d {
                        Some(d) => {
                            let expected = d as f64 / 2.0;
                            let ok = (slope - expected).abs() <= LIFSHITZ_TOLERANCE && env_ok;
                            let detail = json!({"slope": slope, "expected": expected, "tolerance": LIFSHITZ_TOLERANCE, "envelopes": envelopes});
                            out.push(v(name, status(ok), detail));
                        }
                        None => out.push(v(name, Status::Unchecked, json!({"slope": slope, "reason": "no polynomial growth degree"}))),
                    }
                }
                Some("VanHove") => match d {
                    Some(d) => {
                        let expected = d as f64 / 2.0;
                        let ok = (slope - expected).abs() <= VAN_HOVE_TOLERANCE;
                        out.push(v("van_hove", status(ok), json!({"slope": slope, "expected": expected, "tolerance": VAN_HOVE_TOLERANCE})));
                    }
                    None => out.push(v("van_hove", Status::Unchecked, json!({"slope": slope, "reason": "no polynomial growth degree"}))),
                },
                _ => out.push(v("double_log", Status::Unchecked, json!({"slope": slope}))),
            }
        }
        ("envelope", Artifact::Json { value, .. }) => {
            let theorem = value["theorem"].as_str().unwrap_or("unknown");
            let name = format!("envelope_{}", theorem.to_ascii_lowercase());
            let holds = value["holds"].as_bool().unwrap_or(false);
            let detail = json!({
                "operator": value["kind"],
                "upper_checked": value["upper_checked"],
                "lower_checked": value["lower_checked"],
                "violations": value["violations"],
            });
            out.push(v(&name, status(holds), detail));
            subs.push(sub("decay_rate", value["a_p"].clone()));
            if !value["beta"].is_null() {
                subs.push(sub("ball_constant", value["beta"].clone()));
            }
        }
        ("bounds-check", Artifact::Csv { text, .. }) => {
            let rows = csv_rows(text);
            let failed = rows.iter().filter(|r| r.get(4).map(|s| s.trim()) != Some("true")).count();
            out.push(v("eigenvalue_bounds", status(failed == 0), json!({"checked": rows.len(), "violations": failed})));
            if let Some(b) = meta(a, "beta") {
                subs.push(sub("ball_constant", json!(b.parse::<f64>().ok())));
            }
            if let Some(c) = meta(a, "censored") {
                subs.push(sub("censored_clusters", json!(c.parse::<u64>().ok())));
            }
            if let Some(n) = meta(a, "balls_checked") {
                subs.push(sub("balls_checked", json!(n.parse::<u64>().ok())));
            }
        }
        ("tetra", Artifact::Json { value, .. }) => {
            let detail = json!({"m": value["m"], "n": value["n"], "lambda": value["lambda"]});
            out.push(v("tetrahedron", status(value["pass"].as_bool() == Some(true)), detail));
        }
        ("walk", _) => {
            let s = walk_series(a)?;
            let n_max = s.n_max();
            let family: Option<GraphFamily> = lineage.graph.as_deref().and_then(|g| g.parse().ok());
            match (dimension(lineage.graph.as_deref()), family) {
                (Some(d), _) => {
                    let range = [(n_max / 4).max(10), n_max];
                    let f = tauberian_exponent(&s, TauberianMode::PowerLaw, range[0], range[1])?;
                    let expected = -(d as f64) / 2.0;
                    let ok = (f.slope - expected).abs() <= RETURN_TOLERANCE;
                    out.push(v("return_exponent", status(ok), json!({"slope": f.slope, "expected": expected, "tolerance": RETURN_TOLERANCE, "range": range})));
                }
                (None, Some(GraphFamily::Lamplighter { .. })) => {
                    let range = [n_max / 3, n_max];
                    let f = tauberian_exponent(&s, TauberianMode::StretchedExp, range[0], range[1])?;
                    let ok = (STRETCHED_BAND[0]..=STRETCHED_BAND[1]).contains(&f.slope);
                    out.push(v("return_exponent", status(ok), json!({"slope": f.slope, "band": STRETCHED_BAND, "range": range})));
                }
                _ => out.push(v("return_exponent", Status::Unchecked, json!({"reason": "no reference exponent for this graph"}))),
            }
        }
        ("ids" | "tail", _) => {
            if let Some(c) = meta(a, "censored_fraction") {
                subs.push(sub("censored_fraction", json!(c.parse::<f64>().ok())));
            }
            if let Some(t) = meta(a, "truncation") {
                subs.push(sub("long_range_truncation", json!(t.parse::<u64>().ok())));
            }
            let model: Option<PercolationModel> = lineage.model.as_deref().and_then(|m| m.parse().ok());
            if let (Some(ModelKind::LongRange { .. }), None) = (model.map(|m| m.kind), meta(a, "truncation")) {
                subs.push(sub("long_range_truncation", Value::Null));
            }
        }
        _ => {}
    }
    Ok(())
}

pub fn run(cfg: &ExperimentConfig) -> Result<()> {
    let inputs = cfg.inputs.clone().unwrap_or_default();
    if inputs.is_empty() {
        return Err(Error::InvalidInput("report needs at least one input".into()));
    }
    let arts: Vec<(PathBuf, Artifact)> = inputs.iter().map(|p| Artifact::load(p).map(|a| (p.clone(), a))).collect::<Result<_>>()?;
    let lineage = check_lineage(&arts)?;
    let mut verdicts = Vec::new();
    let mut substitutions = Vec::new();
    for (path, a) in &arts {
        verdicts_for(path, a, &arts, &mut verdicts, &mut substitutions)?;
    }
    let pass = verdicts.iter().all(|v| v.status != Status::Fail);
    let result = json!({
        "inputs": arts.iter().map(|(p, a)| json!({"path": p, "command": a.command()})).collect::<Vec<_>>(),
        "lineage": lineage,
        "verdicts": verdicts,
        "substitutions": substitutions,
        "pass": pass,
    });
    artifact::emit(cfg.out.as_deref(), &artifact::json("report", cfg, &[], &result))?;
    if pass {
        Ok(())
    } else {
        let failed: Vec<&str> = verdicts.iter().filter(|v| v.status == Status::Fail).map(|v| v.name.as_str()).collect();
        Err(Error::Invariant(format!("failed verdicts: {}", failed.join(", "))))
    }
}
