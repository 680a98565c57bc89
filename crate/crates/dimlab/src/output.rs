//! Report emission. Every report is a table plus a few summary values; as
//! CSV the summary goes into `#` comment lines under a header that records
//! the schema version, the seed and a SHA-256 of the resolved config.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub command: String,
    pub seed: u64,
    pub config: Value,
    pub summary: Vec<(String, Value)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

/// SHA-256 of the compact JSON form. `serde_json` keeps object keys sorted,
/// so equal configs hash equally.
pub fn config_hash(config: &Value) -> String {
    let digest = Sha256::digest(config.to_string().as_bytes());
    format!("{digest:x}")
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

impl Report {
    pub fn new(command: &str, seed: u64, config: Value) -> Self {
        Report { command: command.into(), seed, config, summary: Vec::new(), columns: Vec::new(), rows: Vec::new() }
    }

    pub fn summary(&mut self, key: &str, value: impl Into<Value>) -> &mut Self {
        self.summary.push((key.into(), value.into()));
        self
    }

    pub fn columns(&mut self, cols: &[&str]) -> &mut Self {
        self.columns = cols.iter().map(|c| c.to_string()).collect();
        self
    }

    pub fn row(&mut self, values: Vec<Value>) {
        debug_assert_eq!(values.len(), self.columns.len());
        self.rows.push(values);
    }

    pub fn header_line(&self) -> String {
        format!(
            "# dimlab schema={SCHEMA} command={} seed={} config={}",
            self.command,
            self.seed,
            config_hash(&self.config)
        )
    }

    /// The CSV table alone, without any comment lines.
    pub fn csv_body(&self) -> Result<String, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        if !self.columns.is_empty() {
            w.write_record(&self.columns).map_err(|e| CliError::Io(e.to_string()))?;
        }
        for r in &self.rows {
            w.write_record(r.iter().map(cell)).map_err(|e| CliError::Io(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))
    }

    pub fn to_csv(&self) -> Result<String, CliError> {
        let mut out = self.header_line();
        out.push('\n');
        for (k, v) in &self.summary {
            out.push_str(&format!("# {k}={}\n", cell(v)));
        }
        out.push_str(&self.csv_body()?);
        Ok(out)
    }

    pub fn to_json(&self) -> Value {
        let summary: Map<String, Value> = self.summary.iter().cloned().collect();
        json!({
            "schema": SCHEMA,
            "command": self.command,
            "seed": self.seed,
            "config": config_hash(&self.config),
            "summary": summary,
            "columns": self.columns,
            "rows": self.rows,
        })
    }

    pub fn render(&self, format: Format) -> Result<String, CliError> {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => {
                let mut s = serde_json::to_string_pretty(&self.to_json()).map_err(|e| CliError::Io(e.to_string()))?;
                s.push('\n');
                Ok(s)
            }
        }
    }

    /// Writes to `path`, or to stdout when `path` is `None` or `-`.
    pub fn emit(&self, format: Format, path: Option<&Path>) -> Result<(), CliError> {
        let text = self.render(format)?;
        match path {
            Some(p) if p.as_os_str() != "-" => {
                fs::write(p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))
            }
            _ => {
                let mut out = std::io::stdout().lock();
                out.write_all(text.as_bytes()).map_err(|e| CliError::Io(e.to_string()))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_body() {
        let mut r = Report::new("demo", 7, json!({"b": 1, "a": [1, 2]}));
        r.summary("slope", 0.5);
        r.columns(&["n", "x"]);
        r.row(vec![json!(1), json!(0.25)]);
        r.row(vec![json!(2), json!("w")]);
        let text = r.to_csv().unwrap();
        let mut lines = text.lines();
        let head = lines.next().unwrap();
        assert!(head.starts_with("# dimlab schema=1 command=demo seed=7 config="));
        assert_eq!(head.len(), "# dimlab schema=1 command=demo seed=7 config=".len() + 64);
        assert_eq!(lines.next(), Some("# slope=0.5"));
        assert_eq!(r.csv_body().unwrap(), "n,x\n1,0.25\n2,w\n");
        assert_eq!(config_hash(&json!({"a": [1, 2], "b": 1})), config_hash(&r.config));
    }
}
