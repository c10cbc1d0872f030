use std::fs;
use std::path::Path;

use crate::config::RunConfig;
use crate::CliError;

/// Nine significant digits in scientific notation.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        format!("{x:.8e}")
    }
}

/// An in-memory CSV table with an optional configuration echo.
pub struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// CSV bytes, preceded by the configuration as `# `-prefixed TOML.
    pub fn to_bytes(&self, config: Option<&RunConfig>) -> Result<Vec<u8>, CliError> {
        let mut out = Vec::new();
        if let Some(cfg) = config {
            for line in cfg.to_toml().lines() {
                out.extend_from_slice(b"# ");
                out.extend_from_slice(line.as_bytes());
                out.push(b'\n');
            }
        }
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        let fail = |e: csv::Error| CliError::Runtime(format!("csv encoding: {e}"));
        w.write_record(&self.header).map_err(fail)?;
        for row in &self.rows {
            w.write_record(row).map_err(fail)?;
        }
        w.into_inner()
            .map_err(|e| CliError::Runtime(format!("csv encoding: {e}")))
    }

    pub fn write(&self, path: &Path, config: Option<&RunConfig>) -> Result<(), CliError> {
        let bytes = self.to_bytes(config)?;
        fs::write(path, bytes)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
    }
}

/// Reads a CSV written by this tool (or any CSV with a header row), skipping
/// `#` comment lines. Returns the header and the raw records.
pub fn read(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), CliError> {
    let bad = |e: &dyn std::fmt::Display| CliError::Input(format!("{}: {e}", path.display()));
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| bad(&e))?;
    let header = r
        .headers()
        .map_err(|e| bad(&e))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(
            rec.map_err(|e| bad(&e))?
                .iter()
                .map(str::to_owned)
                .collect(),
        );
    }
    Ok((header, rows))
}
