//! Report bundles: a metadata header plus named tables, written either as
//! tab-separated text or as a JSON-like document.

use std::fmt::Write as _;

use crate::modelfile::fmt_num;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    /// A cell that could not be computed.
    Missing,
}

impl Cell {
    fn tsv(&self) -> String {
        match self {
            Cell::Num(v) => num_text(*v),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Missing => "n/a".into(),
        }
    }

    fn json(&self) -> String {
        match self {
            Cell::Num(v) => num_text(*v),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => quote(s),
            Cell::Missing => "\"n/a\"".into(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

fn num_text(v: f64) -> String {
    if v.is_nan() {
        "n/a".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        fmt_num(v)
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Tsv,
    JsonLike,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReportBundle {
    pub metadata: Vec<(String, String)>,
    pub tables: Vec<Table>,
}

impl ReportBundle {
    pub fn meta(&mut self, key: &str, value: impl ToString) {
        self.metadata.push((key.to_string(), value.to_string()));
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Tsv => self.to_tsv(),
            Format::JsonLike => self.to_json_like(),
        }
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.metadata {
            let _ = writeln!(s, "# {k}\t{v}");
        }
        for t in &self.tables {
            let _ = writeln!(s, "\n[{}]", t.name);
            let _ = writeln!(s, "{}", t.columns.join("\t"));
            for row in &t.rows {
                let cells: Vec<String> = row.iter().map(Cell::tsv).collect();
                let _ = writeln!(s, "{}", cells.join("\t"));
            }
        }
        s
    }

    /// JSON layout with bare `inf` for unbounded values.
    pub fn to_json_like(&self) -> String {
        let mut s = String::from("{\n  \"metadata\": {\n");
        let meta: Vec<String> = self
            .metadata
            .iter()
            .map(|(k, v)| format!("    {}: {}", quote(k), quote(v)))
            .collect();
        s.push_str(&meta.join(",\n"));
        s.push_str("\n  }");
        for t in &self.tables {
            let _ = write!(s, ",\n  {}: {{\n    \"columns\": [", quote(&t.name));
            let cols: Vec<String> = t.columns.iter().map(|c| quote(c)).collect();
            s.push_str(&cols.join(", "));
            s.push_str("],\n    \"rows\": [");
            let rows: Vec<String> = t
                .rows
                .iter()
                .map(|r| format!("\n      [{}]", r.iter().map(Cell::json).collect::<Vec<_>>().join(", ")))
                .collect();
            s.push_str(&rows.join(","));
            if !t.rows.is_empty() {
                s.push_str("\n    ");
            }
            s.push_str("]\n  }");
        }
        s.push_str("\n}\n");
        s
    }
}
