//! CSV tables with `#` metadata headers.
//!
//! Numbers are written in scientific notation with 12 significant digits and LF
//! line endings, so identical runs produce identical files.

use crate::bcf::{CorrelationFunction, FilteredSpectrum};
use crate::error::{Error, Result};
use num_complex::Complex64;
use std::fmt::Write as _;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// 12 significant digits, scientific notation.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        // avoid "-0"
        return "0.00000000000e0".to_string();
    }
    format!("{x:.11e}")
}

/// Ordered `# key: value` lines; the tool version is always first.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metadata {
    pub entries: Vec<(String, String)>,
}

impl Metadata {
    pub fn new() -> Self {
        Metadata { entries: vec![("tool".into(), format!("bathsmith {TOOL_VERSION}"))] }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.entries.push((key.to_string(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn write(&self, out: &mut String) {
        for (k, v) in &self.entries {
            let _ = writeln!(out, "# {k}: {}", v.replace('\n', " "));
        }
    }
}

/// A table with a header row and numeric columns.
pub fn write_table(meta: &Metadata, columns: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut out = String::new();
    meta.write(&mut out);
    out.push_str(&columns.join(","));
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|&x| fmt_num(x)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Parsed table: metadata, column names and rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub meta: Metadata,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let k = self
            .columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::parse(format!("missing column {name}"), None))?;
        Ok(self.rows.iter().map(|r| r[k]).collect())
    }
}

pub fn read_table(text: &str) -> Result<Table> {
    let mut meta = Metadata::default();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.split_once(':') {
                meta.entries.push((k.trim().to_string(), v.trim().to_string()));
            }
        }
    }
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let columns: Vec<String> =
        rdr.headers().map_err(|e| Error::parse(e.to_string(), None))?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::parse(e.to_string(), e.position().map(|p| p.line() as usize)))?;
        let line = rec.position().map(|p| p.line() as usize);
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| Error::parse(format!("not a number: {s:?}"), line)))
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != columns.len() {
            return Err(Error::parse("row length differs from header", line));
        }
        rows.push(row);
    }
    Ok(Table { meta, columns, rows })
}

pub fn correlation_csv(c: &CorrelationFunction, extra: Metadata) -> String {
    let mut meta = extra
        .with("kind", "correlation")
        .with("label", &c.label)
        .with("temperature_K", c.temperature)
        .with("dt_fs", c.dt);
    if let Some(s) = c.filter_sigma {
        meta = meta.with("filter_sigma_fs", s);
    }
    let rows = c.values.iter().enumerate().map(|(j, v)| vec![c.time(j), v.re, v.im]);
    write_table(&meta, &["t_fs", "re", "im"], rows)
}

/// Inverse of [`correlation_csv`]; the grid must be uniform.
pub fn read_correlation_csv(text: &str) -> Result<CorrelationFunction> {
    let t = read_table(text)?;
    let times = t.column("t_fs")?;
    let re = t.column("re")?;
    let im = t.column("im")?;
    if times.len() < 2 {
        return Err(Error::parse("need at least two samples", None));
    }
    let dt = times[1] - times[0];
    for (j, &tj) in times.iter().enumerate() {
        if (tj - j as f64 * dt).abs() > 1e-9 * dt.max(1.0) * (j as f64 + 1.0) {
            return Err(Error::parse(format!("non-uniform time grid at row {}", j + 1), None));
        }
    }
    let values = re.iter().zip(&im).map(|(&a, &b)| Complex64::new(a, b)).collect();
    let temperature = t.meta.get("temperature_K").and_then(|v| v.parse().ok()).unwrap_or(0.0);
    let label = t.meta.get("label").unwrap_or("").to_string();
    let mut c = CorrelationFunction::new(dt, values, temperature, label);
    c.filter_sigma = t.meta.get("filter_sigma_fs").and_then(|v| v.parse().ok());
    Ok(c)
}

pub fn spectrum_csv(s: &FilteredSpectrum, extra: Metadata) -> String {
    let mut meta = extra.with("kind", "spectrum").with("label", &s.label).with("temperature_K", s.temperature);
    if let Some(sig) = s.filter_sigma {
        meta = meta.with("filter_sigma_fs", sig);
    }
    let rows = s.omega.iter().zip(&s.values).map(|(&w, &v)| vec![w, v]);
    write_table(&meta, &["omega_cm1", "value"], rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_num(1.0), "1.00000000000e0");
        assert_eq!(fmt_num(-123456.7890123456), "-1.23456789012e5");
        assert_eq!(fmt_num(-0.0), fmt_num(0.0));
    }

    #[test]
    fn correlation_round_trip() {
        let values = (0..50).map(|j| Complex64::new((j as f64).cos(), -(j as f64) * 0.1)).collect();
        let mut c = CorrelationFunction::new(0.25, values, 77.0, "x");
        c.filter_sigma = Some(100.0);
        let text = correlation_csv(&c, Metadata::new());
        assert!(text.starts_with("# tool: bathsmith"));
        assert!(!text.contains('\r'));
        let back = read_correlation_csv(&text).unwrap();
        assert_eq!(back.len(), 50);
        assert_eq!(back.filter_sigma, Some(100.0));
        for (a, b) in back.values.iter().zip(&c.values) {
            assert!((a - b).norm() < 1e-11 * b.norm().max(1e-300) + 1e-300);
        }
    }

    #[test]
    fn malformed_rows_are_rejected() {
        assert!(read_table("a,b\n1,2\n3\n").is_err());
        assert!(read_table("a,b\n1,x\n").is_err());
    }
}
