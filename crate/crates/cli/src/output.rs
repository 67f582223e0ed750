//! Report emission: structured records and atomic file writes.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Map, Value};
use severity_core::spec::SpecFile;
use severity_core::{EstimateOptions, ModelSpec, Result};

use crate::{Flags, Format};

/// Everything that determined a run, embedded in each record.
#[derive(Serialize)]
pub struct RunConfig {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub inputs: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub specs: Vec<SpecFile>,
    pub estimate: EstimateOptions,
    pub flags: Flags,
    #[serde(skip_serializing_if = "Map::is_empty")]
    pub command_options: Map<String, Value>,
}

impl RunConfig {
    pub fn new(command: &'static str, flags: &Flags, inputs: &[&Path]) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            specs: Vec::new(),
            estimate: estimate_options(flags),
            flags: flags.clone(),
            command_options: Map::new(),
        }
    }

    pub fn spec(mut self, spec: &ModelSpec) -> Self {
        self.specs.push(SpecFile::from_spec(spec));
        self
    }

    pub fn option(mut self, key: &str, value: impl Serialize) -> Self {
        self.command_options
            .insert(key.to_string(), serde_json::to_value(value).expect("serializable option"));
        self
    }
}

pub fn estimate_options(flags: &Flags) -> EstimateOptions {
    EstimateOptions {
        tol: flags.tol,
        max_iter: flags.max_iter,
        ..EstimateOptions::default()
    }
}

/// Collects output lines and writes them once at the end.
pub struct Report {
    config: Value,
    format: Format,
    text: String,
}

impl Report {
    pub fn new(config: RunConfig, format: Format) -> Self {
        Self {
            config: serde_json::to_value(config).expect("serializable config"),
            format,
            text: String::new(),
        }
    }

    pub fn is_table(&self) -> bool {
        self.format == Format::Table
    }

    pub fn text(&mut self, s: &str) {
        self.text.push_str(s);
        if !s.ends_with('\n') {
            self.text.push('\n');
        }
    }

    /// Appends `{"record": kind, "config": ..., <payload fields>}` as one line.
    pub fn record(&mut self, kind: &str, payload: impl Serialize) {
        let mut object = Map::new();
        object.insert("record".into(), json!(kind));
        object.insert("config".into(), self.config.clone());
        match serde_json::to_value(payload).expect("serializable payload") {
            Value::Object(fields) => object.extend(fields),
            other => {
                object.insert("value".into(), other);
            }
        }
        self.text
            .push_str(&serde_json::to_string(&Value::Object(object)).expect("serializable record"));
        self.text.push('\n');
    }

    pub fn finish(self, destination: Option<&Path>) -> Result<()> {
        write_output(destination, self.text.as_bytes())
    }
}

/// Writes to `destination` through a temporary file in the same directory
/// renamed into place, or to standard output when no path is given.
pub fn write_output(destination: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match destination {
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
        }
        Some(path) => {
            let dir = match path.parent() {
                Some(p) if !p.as_os_str().is_empty() => p,
                _ => Path::new("."),
            };
            let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
            tmp.write_all(bytes)?;
            tmp.as_file().sync_all()?;
            tmp.persist(path).map_err(|e| e.error)?;
        }
    }
    Ok(())
}
