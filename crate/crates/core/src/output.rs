//! Columnar text output with a provenance header.
//!
//! ```text
//! # donor-qubit <version>
//! # kind = rz-angle-curve
//! # seed = 7
//! # param.hyperfine_a = 117 MHz
//! # summary.max_gap_rad = 4.1e-2
//! #! kind = "rz-angle-curve"
//! #! ...verbatim canonical manifest...
//! # columns: T_ns theta_sim_rad theta_pred_rad
//! 2.0000000000e0 ...
//! ```
//!
//! Lines starting with `#!` hold the canonical manifest, so a run can be
//! reproduced from its output alone. No timestamps or host details are
//! written, which keeps reruns byte-identical.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Prefix of the lines that carry the manifest.
pub const MANIFEST_PREFIX: &str = "#! ";

/// A rectangular table plus summary values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DataTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// Scalar results shown in the header and on stdout.
    pub summary: Vec<(String, String)>,
}

impl DataTable {
    pub fn new(columns: &[&str]) -> Self {
        DataTable {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            ..Default::default()
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn note(&mut self, key: &str, value: impl std::fmt::Display) {
        self.summary.push((key.to_string(), value.to_string()));
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    /// The data section: column line and rows.
    pub fn data_section(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# columns: {}", self.columns.join(" "));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|x| format!("{x:.10e}")).collect();
            let _ = writeln!(s, "{}", cells.join(" "));
        }
        s
    }
}

/// Renders the complete file.
pub fn render(provenance: &[(String, String)], manifest_toml: &str, table: &DataTable) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# donor-qubit {}", env!("CARGO_PKG_VERSION"));
    for (k, v) in provenance {
        let _ = writeln!(s, "# {k} = {v}");
    }
    for (k, v) in &table.summary {
        let _ = writeln!(s, "# summary.{k} = {v}");
    }
    for line in manifest_toml.lines() {
        let _ = writeln!(s, "{MANIFEST_PREFIX}{line}");
    }
    s.push_str(&table.data_section());
    s
}

/// Writes the rendered file in one go.
pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(contents.as_bytes())?;
    Ok(())
}

/// The manifest text embedded in an output file.
pub fn embedded_manifest(text: &str) -> Result<String> {
    let body: Vec<&str> = text
        .lines()
        .filter_map(|l| l.strip_prefix(MANIFEST_PREFIX).or_else(|| (l == "#!").then_some("")))
        .collect();
    if body.is_empty() {
        return Err(Error::Parse("no embedded manifest (`#!` lines) found".into()));
    }
    Ok(body.join("\n") + "\n")
}

/// Parses the data section back into a table (summary left empty).
pub fn parse_data(text: &str) -> Result<DataTable> {
    let mut table = DataTable::default();
    for (n, line) in text.lines().enumerate() {
        if let Some(cols) = line.strip_prefix("# columns:") {
            table.columns = cols.split_whitespace().map(String::from).collect();
        } else if line.starts_with('#') || line.trim().is_empty() {
            continue;
        } else {
            let row = line
                .split_whitespace()
                .map(|x| x.parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", n + 1)))?;
            if row.len() != table.columns.len() {
                return Err(Error::Parse(format!(
                    "line {}: {} values for {} columns",
                    n + 1,
                    row.len(),
                    table.columns.len()
                )));
            }
            table.rows.push(row);
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_and_parse_round_trip() {
        let mut t = DataTable::new(&["x", "y"]);
        t.push(vec![1.0, -2.5e-7]);
        t.push(vec![3.0, 0.125]);
        t.note("gap", 0.5);
        let text = render(
            &[("seed".into(), "3".into())],
            "kind = \"a\"\n\n[grid]\npoints = 2\n",
            &t,
        );
        assert!(text.contains("# seed = 3"));
        assert!(text.contains("# summary.gap = 0.5"));
        assert_eq!(
            embedded_manifest(&text).unwrap(),
            "kind = \"a\"\n\n[grid]\npoints = 2\n"
        );
        let back = parse_data(&text).unwrap();
        assert_eq!(back.columns, t.columns);
        assert_eq!(back.rows, t.rows);
    }
}
