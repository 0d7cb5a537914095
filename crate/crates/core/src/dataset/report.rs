//! Tabular reports rendered as delimited text, aligned text, or JSON.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde_json::{json, Value};

use crate::error::DatasetError;

pub const SIGNIFICANT_DIGITS: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Real(f64),
    Text(String),
}

impl Cell {
    pub fn text(s: impl Into<String>) -> Cell {
        Cell::Text(s.into())
    }

    pub fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Real(v) => format_real(*v),
            Cell::Text(s) => s.clone(),
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Cell::Int(v) => json!(v),
            Cell::Real(v) if v.is_finite() => {
                json!(format_real(*v).parse::<f64>().expect("formatted real parses"))
            }
            Cell::Real(v) => json!(format_real(*v)),
            Cell::Text(s) => json!(s),
        }
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Real(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// Formats like C's `%.6g`: six significant digits, trailing zeros dropped,
/// scientific notation outside `[1e-4, 1e6)`.
pub fn format_real(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= SIGNIFICANT_DIGITS as i32 {
        let m = trim_zeros(mantissa);
        format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        let decimals = (SIGNIFICANT_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width in table {}", self.name);
        self.rows.push(row);
    }

    /// Tab-separated, header first. Tabs, newlines and backslashes inside
    /// cells are escaped.
    pub fn to_delimited(&self) -> String {
        let mut out = String::new();
        let line = |cells: Vec<String>| cells.iter().map(|c| escape(c)).collect::<Vec<_>>().join("\t");
        out.push_str(&line(self.columns.clone()));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&line(row.iter().map(Cell::render).collect()));
            out.push('\n');
        }
        out
    }

    /// Space-padded columns; numbers right-aligned.
    pub fn to_aligned(&self) -> String {
        let rendered: Vec<Vec<String>> = self.rows.iter().map(|r| r.iter().map(Cell::render).collect()).collect();
        let mut widths: Vec<usize> = self.columns.iter().map(|c| c.chars().count()).collect();
        for row in &rendered {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = String::new();
        let header: Vec<String> = self
            .columns
            .iter()
            .zip(&widths)
            .map(|(c, &w)| pad(c, w, false))
            .collect();
        writeln!(out, "{}", header.join("  ").trim_end()).unwrap();
        let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
        writeln!(out, "{}", rule.join("  ")).unwrap();
        for (row, cells) in rendered.iter().zip(&self.rows) {
            let parts: Vec<String> = row
                .iter()
                .zip(cells)
                .zip(&widths)
                .map(|((s, cell), &w)| pad(s, w, !matches!(cell, Cell::Text(_))))
                .collect();
            writeln!(out, "{}", parts.join("  ").trim_end()).unwrap();
        }
        out
    }

    pub fn to_json(&self) -> Value {
        json!({
            "name": self.name,
            "columns": self.columns,
            "rows": self.rows.iter().map(|r| r.iter().map(Cell::to_json).collect::<Vec<_>>()).collect::<Vec<_>>(),
        })
    }
}

fn pad(s: &str, width: usize, right: bool) -> String {
    let fill = " ".repeat(width - s.chars().count());
    if right {
        format!("{fill}{s}")
    } else {
        format!("{s}{fill}")
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('\t', "\\t").replace('\n', "\\n")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Table,
    Delimited,
    Document,
}

impl FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "table" => Ok(ReportFormat::Table),
            "delimited" => Ok(ReportFormat::Delimited),
            "document" => Ok(ReportFormat::Document),
            other => Err(format!("unknown format {other:?}")),
        }
    }
}

/// A named collection of tables plus free-text notes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub title: String,
    pub tables: Vec<Table>,
    pub notes: Vec<String>,
}

impl Report {
    pub fn new(title: &str) -> Self {
        Report {
            title: title.to_string(),
            ..Default::default()
        }
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "title": self.title,
            "tables": self.tables.iter().map(Table::to_json).collect::<Vec<_>>(),
            "notes": self.notes,
        })
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Document => {
                let mut s = serde_json::to_string_pretty(&self.to_json()).expect("report serializes");
                s.push('\n');
                s
            }
            ReportFormat::Delimited => self
                .tables
                .iter()
                .map(|t| format!("# {}\n{}", t.name, t.to_delimited()))
                .collect::<Vec<_>>()
                .join("\n"),
            ReportFormat::Table => self
                .tables
                .iter()
                .map(|t| format!("{}\n{}", t.name, t.to_aligned()))
                .collect::<Vec<_>>()
                .join("\n"),
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), DatasetError> {
    std::fs::write(path, text).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn save_report(report: &Report, path: &Path, format: ReportFormat) -> Result<(), DatasetError> {
    write_file(path, &report.render(format))
}

/// Writes one table; an empty delimited table is just its header line.
pub fn save_table(table: &Table, path: &Path, format: ReportFormat) -> Result<(), DatasetError> {
    let text = match format {
        ReportFormat::Delimited => table.to_delimited(),
        ReportFormat::Table => table.to_aligned(),
        ReportFormat::Document => {
            let mut s = serde_json::to_string_pretty(&table.to_json()).expect("table serializes");
            s.push('\n');
            s
        }
    };
    write_file(path, &text)
}
