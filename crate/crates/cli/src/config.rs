//! Experiment configuration: a JSON document whose fields command-line flags override.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use perclap::graphs::{GraphFamily, BUDGET_ENV};
use perclap::operators::{OperatorKind, TransitionKernel};
use perclap::percolation::PercolationModel;
use perclap::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub graph: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    /// Subcriticality asserted for models the library cannot certify on its own.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assume_subcritical: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub operator: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub emin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub emax: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window_radius: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vertex_budget: Option<usize>,
    /// `ids`: use the exact cluster series (`z:1` site models).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact_series: Option<bool>,
    /// `periodic`: `closed` or `folner:<level>`; `walk`: `exact`, `range` or `mc:<samples>`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    /// `periodic`: evenly spaced grid instead of a logarithmic one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub linear: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    /// `fit`: `vanhove`, `lifshitz` or `doublelog`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theorem: Option<String>,
    /// `envelope`: tail CSV, or `exact` for the closed-form `z:1` site tail.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub balls: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paths: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inputs: Option<Vec<PathBuf>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

macro_rules! overlay {
    ($base:ident, $top:ident, $($field:ident),*) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field.clone(); } )*
    };
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::InvalidInput(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidInput(format!("bad config {}: {e}", path.display())))
    }

    /// Fields set in `flags` replace those of `self`.
    pub fn merged(mut self, flags: &ExperimentConfig) -> Self {
        overlay!(
            self, flags, graph, model, assume_subcritical, operator, kernel, emin, emax, points, samples, seed, window_radius, vertex_budget,
            exact_series, method, linear, input, kind, theorem, tail, balls, paths, m, n, steps, inputs, out
        );
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// The config as embedded in outputs. The output path is left out so that a rerun into
    /// another file is byte-identical.
    pub fn embedded(&self) -> ExperimentConfig {
        ExperimentConfig { out: None, ..self.clone() }
    }

    /// Exports the vertex budget to the library before any graph is built.
    pub fn apply_budget(&self) {
        if let Some(b) = self.vertex_budget {
            std::env::set_var(BUDGET_ENV, b.to_string());
        }
    }

    pub fn family(&self) -> Result<GraphFamily> {
        self.graph.as_deref().ok_or_else(|| missing("graph"))?.parse()
    }

    pub fn model(&self, family: &GraphFamily) -> Result<PercolationModel> {
        let m: PercolationModel = self.model.as_deref().ok_or_else(|| missing("model"))?.parse()?;
        m.validate(family)?;
        if m.known_subcritical(family) || self.assume_subcritical == Some(true) {
            Ok(m.declare_subcritical())
        } else {
            Err(Error::InvalidInput(format!(
                "{m} on {family} is not covered by the built-in subcriticality criterion; pass --assume-subcritical to assert it"
            )))
        }
    }

    pub fn operator(&self) -> Result<OperatorKind> {
        self.operator.as_deref().ok_or_else(|| missing("operator"))?.parse()
    }

    pub fn kernel(&self, family: GraphFamily) -> Result<Option<TransitionKernel>> {
        self.kernel.as_deref().map(|k| TransitionKernel::parse(k, family)).transpose()
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| missing("seed"))
    }

    pub fn samples(&self) -> Result<u64> {
        self.samples.ok_or_else(|| missing("samples"))
    }
}

pub fn missing(field: &str) -> Error {
    Error::InvalidInput(format!("missing required setting `{field}`"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_json() {
        let c = ExperimentConfig {
            graph: Some("z:1".into()),
            model: Some("site:0.3".into()),
            emin: Some(1e-5),
            samples: Some(1000),
            seed: Some(42),
            out: Some("a.csv".into()),
            ..Default::default()
        };
        let back: ExperimentConfig = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn flags_override_file_values() {
        let file = ExperimentConfig { graph: Some("z:2".into()), seed: Some(1), ..Default::default() };
        let flags = ExperimentConfig { seed: Some(7), ..Default::default() };
        let m = file.merged(&flags);
        assert_eq!(m.graph.as_deref(), Some("z:2"));
        assert_eq!(m.seed, Some(7));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"graf": "z:1"}"#).is_err());
    }
}
