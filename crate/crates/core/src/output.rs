//! CSV and JSON writers. Every file starts with a run header carrying
//! the config hash and master seed; CSV headers are `#` comment lines, JSON
//! files carry a `header` object.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Header shared by all files of one run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Header {
    pub tool: String,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    /// Free-form `key: value` notes, written in order.
    pub notes: Vec<(String, String)>,
}

impl Header {
    pub fn new(command: impl Into<String>, config_hash: impl Into<String>, seed: u64) -> Self {
        Self {
            tool: format!("rcons {}", env!("CARGO_PKG_VERSION")),
            command: command.into(),
            config_hash: config_hash.into(),
            seed,
            notes: Vec::new(),
        }
    }

    pub fn note(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.notes.push((key.into(), value.to_string()));
        self
    }

    fn csv_block(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# tool: {}", self.tool);
        let _ = writeln!(s, "# command: {}", self.command);
        let _ = writeln!(s, "# config_hash: {}", self.config_hash);
        let _ = writeln!(s, "# seed: {}", self.seed);
        for (k, v) in &self.notes {
            let _ = writeln!(s, "# {k}: {v}");
        }
        s
    }
}

/// In-memory CSV table with a fixed column list.
#[derive(Debug, Clone)]
pub struct Csv {
    columns: Vec<&'static str>,
    body: String,
}

impl Csv {
    pub fn new(columns: &[&'static str]) -> Self {
        Self { columns: columns.to_vec(), body: String::new() }
    }

    pub fn row(&mut self, cells: &[Cell]) {
        debug_assert_eq!(cells.len(), self.columns.len());
        for (k, c) in cells.iter().enumerate() {
            if k > 0 {
                self.body.push(',');
            }
            match c {
                Cell::Int(v) => {
                    let _ = write!(self.body, "{v}");
                }
                Cell::Real(v) => {
                    let _ = write!(self.body, "{v:e}");
                }
                Cell::Text(v) => self.body.push_str(v),
            }
        }
        self.body.push('\n');
    }

    pub fn render(&self, header: &Header) -> String {
        let mut s = header.csv_block();
        s.push_str(&self.columns.join(","));
        s.push('\n');
        s.push_str(&self.body);
        s
    }
}

pub enum Cell {
    Int(u64),
    Real(f64),
    Text(String),
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
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

/// `{"header": ..., "body": ...}` pretty-printed.
pub fn json_document<T: Serialize>(header: &Header, body: &T) -> Result<String> {
    #[derive(Serialize)]
    struct Doc<'a, T> {
        header: &'a Header,
        body: &'a T,
    }
    let mut s = serde_json::to_string_pretty(&Doc { header, body })
        .map_err(|e| Error::Numeric(format!("cannot serialise report: {e}")))?;
    s.push('\n');
    Ok(s)
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), contents)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut c = Csv::new(&["trial", "value"]);
        c.row(&[3usize.into(), 0.5.into()]);
        let text = c.render(&Header::new("simulate", "abc", 9).note("graph", "ring(n=4)"));
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[2], "# config_hash: abc");
        assert_eq!(lines[3], "# seed: 9");
        assert_eq!(lines[4], "# graph: ring(n=4)");
        assert_eq!(lines[5], "trial,value");
        assert_eq!(lines[6], "3,5e-1");
    }

    #[test]
    fn reals_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 1e22] {
            let mut c = Csv::new(&["v"]);
            c.row(&[v.into()]);
            let body = c.render(&Header::new("x", "h", 0));
            let last = body.lines().last().unwrap();
            assert_eq!(last.parse::<f64>().unwrap(), v);
        }
    }
}
