use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde_json::Value;

/// Output of one subcommand: a JSON verdict, CSV tables and a summary line.
#[derive(Debug, Clone)]
pub struct Report {
    pub name: &'static str,
    pub json: Value,
    /// `(file stem, csv text)` pairs; the first is the main table.
    pub tables: Vec<(String, String)>,
    pub summary: String,
    /// `Some(false)` when a check subcommand found a violation.
    pub passed: Option<bool>,
}

impl Report {
    pub fn new(name: &'static str, json: Value, summary: String) -> Self {
        Self { name, json, tables: Vec::new(), summary, passed: None }
    }

    pub fn table(mut self, stem: impl Into<String>, csv: Csv) -> Self {
        self.tables.push((stem.into(), csv.finish()));
        self
    }

    pub fn raw_table(mut self, stem: impl Into<String>, text: String) -> Self {
        self.tables.push((stem.into(), text));
        self
    }

    pub fn check(mut self, passed: bool) -> Self {
        self.passed = Some(passed);
        if let Value::Object(map) = &mut self.json {
            map.insert("passed".into(), Value::Bool(passed));
        }
        self
    }

    pub fn write(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        let mut json = serde_json::to_string_pretty(&self.json).map_err(io::Error::other)?;
        json.push('\n');
        fs::write(dir.join(format!("{}.json", self.name)), json)?;
        for (stem, text) in &self.tables {
            fs::write(dir.join(format!("{stem}.csv")), text)?;
        }
        Ok(())
    }
}

/// Minimal CSV builder for numeric tables.
#[derive(Debug, Clone)]
pub struct Csv {
    text: String,
    columns: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self { text: format!("{}\n", header.join(",")), columns: header.len() }
    }

    pub fn row(&mut self, cells: &[String]) {
        debug_assert_eq!(cells.len(), self.columns);
        let _ = writeln!(self.text, "{}", cells.join(","));
    }

    pub fn finish(self) -> String {
        self.text
    }
}

/// Formats an optional number, leaving the cell empty when absent.
pub fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

pub fn coords(p: &[f64]) -> String {
    p.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}
