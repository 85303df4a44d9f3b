//! Output files with their embedded configuration.
//!
//! CSV outputs start with `# perclap <command> config=<json>`, followed by optional
//! `# key=value` lines. JSON outputs are objects with `command` and `config` members next to
//! the result fields.

use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};

use perclap::{Error, Result};

use crate::config::ExperimentConfig;

const PREFIX: &str = "# perclap ";

pub fn csv(command: &str, config: &ExperimentConfig, meta: &[(&str, String)], body: &str) -> String {
    let mut out = format!("{PREFIX}{command} config={}\n", config.embedded().to_json());
    for (k, v) in meta {
        out.push_str(&format!("# {k}={v}\n"));
    }
    out.push_str(body);
    out
}

pub fn json(command: &str, config: &ExperimentConfig, extra: &[(&str, Value)], result: &impl Serialize) -> String {
    let mut obj = Map::new();
    obj.insert("command".into(), command.into());
    obj.insert("config".into(), serde_json::to_value(config.embedded()).expect("config serializes"));
    for (k, v) in extra {
        obj.insert((*k).into(), v.clone());
    }
    match serde_json::to_value(result).expect("result serializes") {
        Value::Object(fields) => obj.extend(fields),
        other => {
            obj.insert("result".into(), other);
        }
    }
    let mut text = serde_json::to_string_pretty(&Value::Object(obj)).expect("json serializes");
    text.push('\n');
    text
}

/// Writes to `path`, or to stdout without one.
pub fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::InvalidInput(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))
}

/// Header of a CSV output.
#[derive(Clone, Debug)]
pub struct CsvHeader {
    pub command: String,
    pub config: ExperimentConfig,
    pub meta: Vec<(String, String)>,
}

pub fn csv_header(text: &str) -> Option<CsvHeader> {
    let mut lines = text.lines();
    let first = lines.next()?.strip_prefix(PREFIX)?;
    let (command, config) = first.split_once(" config=")?;
    let config = serde_json::from_str(config).ok()?;
    let meta = lines
        .take_while(|l| l.starts_with('#'))
        .filter_map(|l| l.trim_start_matches('#').trim().split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
        .collect();
    Some(CsvHeader { command: command.to_string(), config, meta })
}

/// Any output: command, embedded config, and the parsed body.
#[derive(Clone, Debug)]
pub enum Artifact {
    Csv { header: CsvHeader, text: String },
    Json { command: String, config: ExperimentConfig, value: Value },
}

impl Artifact {
    pub fn load(path: &Path) -> Result<Self> {
        let text = read(path)?;
        if let Some(header) = csv_header(&text) {
            return Ok(Artifact::Csv { header, text });
        }
        let value: Value =
            serde_json::from_str(&text).map_err(|_| Error::InvalidInput(format!("{} is not a perclap output", path.display())))?;
        let command = value.get("command").and_then(Value::as_str).map(str::to_string);
        let config = value.get("config").cloned().map(serde_json::from_value::<ExperimentConfig>);
        match (command, config) {
            (Some(command), Some(Ok(config))) => Ok(Artifact::Json { command, config, value }),
            _ => Err(Error::InvalidInput(format!("{} lacks an embedded perclap config", path.display()))),
        }
    }

    pub fn command(&self) -> &str {
        match self {
            Artifact::Csv { header, .. } => &header.command,
            Artifact::Json { command, .. } => command,
        }
    }

    pub fn config(&self) -> &ExperimentConfig {
        match self {
            Artifact::Csv { header, .. } => &header.config,
            Artifact::Json { config, .. } => config,
        }
    }

    /// Config of the run that produced the data: the input's config for derived outputs.
    pub fn lineage(&self) -> ExperimentConfig {
        if let Artifact::Json { value, .. } = self {
            if let Some(Ok(src)) = value.get("source").cloned().map(serde_json::from_value::<ExperimentConfig>) {
                return src;
            }
        }
        self.config().clone()
    }
}
