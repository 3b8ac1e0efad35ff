use crate::error::{CliError, CliResult};
use serde::Serialize;
use std::path::Path;

/// Stringly typed CSV table; rows are formatted after sorting so the bytes
/// depend only on the data.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(headers: &[&'static str]) -> Self {
        Self { headers: headers.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self, stamp: &str) -> CliResult<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.headers)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        let body = w.into_inner().map_err(|e| CliError::io("<csv buffer>", e.into_error()))?;
        Ok(format!("# {stamp}\n{}", String::from_utf8_lossy(&body)))
    }
}

pub fn float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn opt_float(v: Option<f64>) -> String {
    v.map(float).unwrap_or_default()
}

pub fn stamp() -> String {
    format!("generated by ringvib {} at {}", env!("CARGO_PKG_VERSION"), chrono::Utc::now().to_rfc3339())
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_stamp_then_header() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec![float(1.5), opt_float(None)]);
        let s = t.to_csv("x").unwrap();
        assert_eq!(s, "# x\na,b\n1.5000000000000000e0,\n");
    }
}
