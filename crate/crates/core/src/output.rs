//! Tabular output with reproducible metadata headers.
//!
//! CSV files start with `#`-prefixed metadata lines (full config echo, code
//! version, RNG algorithm), then a header row and comma-separated data with
//! `.` decimals; floats are printed in shortest round-trip form so identical
//! runs produce byte-identical files. JSON output wraps the same content in
//! a `{metadata, columns, rows}` envelope.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

impl std::str::FromStr for OutputFormat {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(crate::error::Error::Config(format!(
                "unknown format '{other}' (expected csv or json)"
            ))),
        }
    }
}

/// A table of stringified values plus its metadata.
#[derive(Debug, Clone)]
pub struct Table {
    pub metadata: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            metadata: Vec::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn meta(&mut self, key: &str, value: impl std::fmt::Display) {
        self.metadata.push((key.to_string(), value.to_string()));
    }

    pub fn push_row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.columns.len());
        self.rows.push(cells);
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Csv => self.render_csv(),
            OutputFormat::Json => self.render_json(),
        }
    }

    fn render_csv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.metadata {
            let _ = writeln!(out, "# {k} = {v}");
        }
        let _ = writeln!(out, "{}", self.columns.join(","));
        for row in &self.rows {
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    fn render_json(&self) -> String {
        let metadata: serde_json::Map<String, serde_json::Value> = self
            .metadata
            .iter()
            .map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone())))
            .collect();
        let value = serde_json::json!({
            "metadata": metadata,
            "columns": self.columns,
            "rows": self.rows,
        });
        let mut rendered = serde_json::to_string_pretty(&value).expect("static structure");
        rendered.push('\n');
        rendered
    }

    pub fn write(&self, path: &Path, format: OutputFormat) -> Result<()> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        std::fs::write(path, self.render(format))?;
        Ok(())
    }
}

/// Shortest round-trip decimal form of a float (deterministic across runs).
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Columnar serialization of a trajectory record: a metadata header carrying
/// the physical parameters, step size, seed, and code version, followed by
/// one (step, dW, dq) row per integration step.
pub fn trajectory_record_table(
    record: &crate::dynamics::TrajectoryRecord,
    p: &crate::dynamics::SystemParams,
    frame: crate::dynamics::Frame,
) -> Table {
    let mut table = Table::new(&["step", "dW", "dq"]);
    table.meta("E", p.drive);
    table.meta("g", p.coupling);
    table.meta("kappa", p.kappa);
    table.meta("eta", p.eta);
    table.meta("phi", p.phi);
    table.meta("n_max", p.spec.n_max());
    table.meta("frame_beta", frame.beta);
    table.meta("dt", record.dt);
    table.meta("seed", record.seed);
    table.meta("version", env!("CARGO_PKG_VERSION"));
    table.meta("rng", crate::dynamics::RNG_ALGORITHM);
    for (step, (dw, dq)) in record.noise.iter().zip(&record.charge).enumerate() {
        table.push_row(vec![step.to_string(), fmt_f64(*dw), fmt_f64(*dq)]);
    }
    table
}
