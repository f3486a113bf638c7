//! TOML model files.
//!
//! ```toml
//! [params]
//! k = 10.0
//!
//! [network]
//! external_inputs = 1
//! external_outputs = 2
//! iedges = [[1, 2, "-k"], [2, 2, "k"]]
//! einedges = [[1, 1]]          # weight omitted: 1
//! eoutedges = [[1, 1], [2, 2]]
//! eedges = []
//!
//! [[subsystem]]
//! label = "G1"
//! A = [[-1.0]]
//! B = [[1.0, 0.0]]
//! C = [[1.0]]
//! D = [[0.0, 0.0]]
//! ```
//!
//! Edge weights are numbers, parameter names, or negated parameter names.
//! Matrices with no rows are written `[]`; their width is inferred from the
//! other matrices of the subsystem.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use strucred::network::{assemble_network, Edge, EdgeLists, NetworkMatrix};
use strucred::{BlockDiagonalPlant, Matrix, StateSpaceModel};
use toml::{Table, Value};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum Weight {
    /// Omitted in the file; means 1.
    Unit,
    Value(f64),
    Param { name: String, negated: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeRow {
    pub from: usize,
    pub to: usize,
    pub weight: Weight,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EdgeRows {
    pub iedges: Vec<EdgeRow>,
    pub einedges: Vec<EdgeRow>,
    pub eoutedges: Vec<EdgeRow>,
    pub eedges: Vec<EdgeRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub params: BTreeMap<String, f64>,
    pub external_inputs: usize,
    pub external_outputs: usize,
    pub edges: EdgeRows,
    pub subsystems: Vec<StateSpaceModel>,
}

fn perr(msg: impl Into<String>) -> CliError {
    CliError::Parse(msg.into())
}

fn number(v: &Value, what: &str) -> Result<f64, CliError> {
    let x = match v {
        Value::Float(f) => *f,
        Value::Integer(i) => *i as f64,
        _ => return Err(perr(format!("{what}: expected a number, found {v}"))),
    };
    if !x.is_finite() {
        return Err(perr(format!("{what}: non-finite value")));
    }
    Ok(x)
}

fn index(v: &Value, what: &str) -> Result<usize, CliError> {
    match v {
        Value::Integer(i) if *i >= 1 => Ok(*i as usize),
        _ => Err(perr(format!("{what}: expected a positive integer index, found {v}"))),
    }
}

// (rows, width if known)
type RawMatrix = (Vec<Vec<f64>>, Option<usize>);

fn raw_matrix(v: Option<&Value>, what: &str) -> Result<RawMatrix, CliError> {
    let rows = v
        .ok_or_else(|| perr(format!("{what}: missing")))?
        .as_array()
        .ok_or_else(|| perr(format!("{what}: expected an array of rows")))?;
    let mut out = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let row = row
            .as_array()
            .ok_or_else(|| perr(format!("{what}: row {} is not an array", i + 1)))?;
        out.push(
            row.iter()
                .map(|x| number(x, what))
                .collect::<Result<Vec<_>, _>>()?,
        );
    }
    let width = out.first().map(|r| r.len());
    if out.iter().any(|r| Some(r.len()) != width) {
        return Err(perr(format!("{what}: rows have different lengths")));
    }
    Ok((out, width))
}

fn to_matrix(raw: &RawMatrix, cols: usize) -> Matrix {
    let rows = raw.0.len();
    Matrix::from_fn(rows, cols, |i, j| raw.0[i][j])
}

fn parse_subsystem(t: &Table, idx: usize) -> Result<StateSpaceModel, CliError> {
    let what = |m: &str| format!("subsystem {idx} {m}");
    for key in t.keys() {
        if !matches!(key.as_str(), "label" | "A" | "B" | "C" | "D") {
            return Err(perr(format!("subsystem {idx}: unknown key '{key}'")));
        }
    }
    let a = raw_matrix(t.get("A"), &what("A"))?;
    let b = raw_matrix(t.get("B"), &what("B"))?;
    let c = raw_matrix(t.get("C"), &what("C"))?;
    let d = raw_matrix(t.get("D"), &what("D"))?;
    let n = a.0.len();
    let m = b.1.or(d.1).unwrap_or(0);
    let p = if c.0.is_empty() { d.0.len() } else { c.0.len() };
    let b = match b.1 {
        Some(w) => to_matrix(&b, w),
        None => Matrix::zeros(0, m),
    };
    let c = match c.1 {
        Some(w) => to_matrix(&c, w),
        None => Matrix::zeros(if n == 0 { p } else { 0 }, n),
    };
    let d = match d.1 {
        Some(w) => to_matrix(&d, w),
        None => Matrix::zeros(0, m),
    };
    let sys = StateSpaceModel::new(to_matrix(&a, a.1.unwrap_or(0)), b, c, d)
        .map_err(|e| perr(format!("subsystem {idx}: {e}")))?;
    let label = match t.get("label") {
        None => format!("G{idx}"),
        Some(Value::String(s)) => s.clone(),
        Some(v) => return Err(perr(format!("subsystem {idx}: label must be a string, found {v}"))),
    };
    Ok(sys.with_label(label))
}

fn parse_weight(v: &Value, what: &str) -> Result<Weight, CliError> {
    match v {
        Value::String(s) => {
            let (negated, name) = match s.strip_prefix('-') {
                Some(rest) => (true, rest),
                None => (false, s.as_str()),
            };
            let ok = name.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
                && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
            if !ok {
                return Err(perr(format!("{what}: '{s}' is not a parameter name")));
            }
            Ok(Weight::Param {
                name: name.to_string(),
                negated,
            })
        }
        other => Ok(Weight::Value(number(other, what)?)),
    }
}

fn parse_edges(net: &Table, key: &str) -> Result<Vec<EdgeRow>, CliError> {
    let Some(v) = net.get(key) else {
        return Ok(Vec::new());
    };
    let rows = v
        .as_array()
        .ok_or_else(|| perr(format!("{key}: expected an array of edges")))?;
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            let what = format!("{key} row {}", i + 1);
            let row = row
                .as_array()
                .ok_or_else(|| perr(format!("{what}: expected [from, to] or [from, to, weight]")))?;
            match row.as_slice() {
                [f, t] => Ok(EdgeRow {
                    from: index(f, &what)?,
                    to: index(t, &what)?,
                    weight: Weight::Unit,
                }),
                [f, t, w] => Ok(EdgeRow {
                    from: index(f, &what)?,
                    to: index(t, &what)?,
                    weight: parse_weight(w, &what)?,
                }),
                _ => Err(perr(format!("{what}: expected 2 or 3 entries, found {}", row.len()))),
            }
        })
        .collect()
}

fn count(net: &Table, key: &str) -> Result<usize, CliError> {
    match net.get(key) {
        Some(Value::Integer(i)) if *i >= 0 => Ok(*i as usize),
        Some(v) => Err(perr(format!("network.{key}: expected a nonnegative integer, found {v}"))),
        None => Err(perr(format!("network.{key}: missing"))),
    }
}

impl ModelFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let doc: Table = text.parse().map_err(|e: toml::de::Error| perr(e.to_string()))?;
        for key in doc.keys() {
            if !matches!(key.as_str(), "params" | "network" | "subsystem") {
                return Err(perr(format!("unknown top-level key '{key}'")));
            }
        }
        let mut params = BTreeMap::new();
        if let Some(p) = doc.get("params") {
            let p = p.as_table().ok_or_else(|| perr("params must be a table"))?;
            for (k, v) in p {
                params.insert(k.clone(), number(v, &format!("params.{k}"))?);
            }
        }
        let net = doc
            .get("network")
            .and_then(Value::as_table)
            .ok_or_else(|| perr("missing [network] table"))?;
        for key in net.keys() {
            if !matches!(
                key.as_str(),
                "external_inputs" | "external_outputs" | "iedges" | "einedges" | "eoutedges" | "eedges"
            ) {
                return Err(perr(format!("network: unknown key '{key}'")));
            }
        }
        let edges = EdgeRows {
            iedges: parse_edges(net, "iedges")?,
            einedges: parse_edges(net, "einedges")?,
            eoutedges: parse_edges(net, "eoutedges")?,
            eedges: parse_edges(net, "eedges")?,
        };
        let subs = doc
            .get("subsystem")
            .and_then(Value::as_array)
            .ok_or_else(|| perr("no [[subsystem]] entries"))?;
        let subsystems = subs
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let t = s.as_table().ok_or_else(|| perr("subsystem entries must be tables"))?;
                parse_subsystem(t, i + 1)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let file = Self {
            params,
            external_inputs: count(net, "external_inputs")?,
            external_outputs: count(net, "external_outputs")?,
            edges,
            subsystems,
        };
        file.network()?;
        Ok(file)
    }

    fn resolve(&self, rows: &[EdgeRow]) -> Result<Vec<Edge>, CliError> {
        rows.iter()
            .map(|r| {
                let w = match &r.weight {
                    Weight::Unit => 1.0,
                    Weight::Value(v) => *v,
                    Weight::Param { name, negated } => {
                        let v = *self
                            .params
                            .get(name)
                            .ok_or_else(|| perr(format!("undefined parameter '{name}'")))?;
                        if *negated {
                            -v
                        } else {
                            v
                        }
                    }
                };
                Ok(Edge::new(r.from, r.to, w))
            })
            .collect()
    }

    pub fn edge_lists(&self) -> Result<EdgeLists, CliError> {
        Ok(EdgeLists {
            iedges: self.resolve(&self.edges.iedges)?,
            einedges: self.resolve(&self.edges.einedges)?,
            eoutedges: self.resolve(&self.edges.eoutedges)?,
            eedges: self.resolve(&self.edges.eedges)?,
            m_ext: self.external_inputs,
            p_ext: self.external_outputs,
        })
    }

    pub fn plant(&self) -> Result<BlockDiagonalPlant, CliError> {
        Ok(BlockDiagonalPlant::aggregate(self.subsystems.clone())?)
    }

    pub fn network(&self) -> Result<(BlockDiagonalPlant, NetworkMatrix), CliError> {
        let plant = self.plant()?;
        let net = assemble_network(&self.edge_lists()?, &plant)?;
        Ok((plant, net))
    }

    /// Same network and parameters with the subsystems replaced.
    pub fn with_subsystems(&self, plant: &BlockDiagonalPlant) -> Self {
        Self {
            subsystems: plant.subsystems().to_vec(),
            ..self.clone()
        }
    }

    pub fn from_parts(
        plant: &BlockDiagonalPlant,
        edges: &EdgeLists,
        params: BTreeMap<String, f64>,
        symbolic: impl Fn(&Edge) -> Weight,
    ) -> Self {
        let rows = |v: &[Edge]| -> Vec<EdgeRow> {
            v.iter()
                .map(|e| EdgeRow {
                    from: e.from,
                    to: e.to,
                    weight: symbolic(e),
                })
                .collect()
        };
        Self {
            params,
            external_inputs: edges.m_ext,
            external_outputs: edges.p_ext,
            edges: EdgeRows {
                iedges: rows(&edges.iedges),
                einedges: rows(&edges.einedges),
                eoutedges: rows(&edges.eoutedges),
                eedges: rows(&edges.eedges),
            },
            subsystems: plant.subsystems().to_vec(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if !self.params.is_empty() {
            s.push_str("[params]\n");
            for (k, v) in &self.params {
                let _ = writeln!(s, "{k} = {}", fmt_num(*v));
            }
            s.push('\n');
        }
        s.push_str("[network]\n");
        let _ = writeln!(s, "external_inputs = {}", self.external_inputs);
        let _ = writeln!(s, "external_outputs = {}", self.external_outputs);
        for (key, rows) in [
            ("iedges", &self.edges.iedges),
            ("einedges", &self.edges.einedges),
            ("eoutedges", &self.edges.eoutedges),
            ("eedges", &self.edges.eedges),
        ] {
            let items: Vec<String> = rows.iter().map(edge_text).collect();
            let _ = writeln!(s, "{key} = [{}]", items.join(", "));
        }
        for sys in &self.subsystems {
            s.push_str("\n[[subsystem]]\n");
            let _ = writeln!(s, "label = {}", Value::String(sys.label.clone()));
            for (name, m) in [("A", sys.a()), ("B", sys.b()), ("C", sys.c()), ("D", sys.d())] {
                let _ = writeln!(s, "{name} = {}", matrix_text(m));
            }
        }
        s
    }
}

/// 17 significant digits: parses back to the same bits.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

fn edge_text(r: &EdgeRow) -> String {
    match &r.weight {
        Weight::Unit => format!("[{}, {}]", r.from, r.to),
        Weight::Value(v) => format!("[{}, {}, {}]", r.from, r.to, fmt_num(*v)),
        Weight::Param { name, negated } => {
            format!("[{}, {}, \"{}{}\"]", r.from, r.to, if *negated { "-" } else { "" }, name)
        }
    }
}

fn matrix_text(m: &Matrix) -> String {
    if m.nrows() == 0 {
        return "[]".into();
    }
    let rows: Vec<String> = m
        .row_iter()
        .map(|r| format!("  [{}],", r.iter().map(|v| fmt_num(*v)).collect::<Vec<_>>().join(", ")))
        .collect();
    format!("[\n{}\n]", rows.join("\n"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
[params]
k = 10

[network]
external_inputs = 1
external_outputs = 1
iedges = [[1, 2, "-k"], [2, 1, 0.5]]
einedges = [[1, 1]]
eoutedges = [[1, 1, 2e0]]

[[subsystem]]
A = [[-1.0]]
B = [[1.0]]
C = [[1.0]]
D = [[0.0]]

[[subsystem]]
label = "pure gain"
A = []
B = []
C = []
D = [[3]]
"#;

    #[test]
    fn parses_weights_params_and_static_gains() {
        let f = ModelFile::parse(SAMPLE).unwrap();
        assert_eq!(f.subsystems.len(), 2);
        assert_eq!(f.subsystems[0].label, "G1");
        assert_eq!(f.subsystems[1].order(), 0);
        assert_eq!(f.subsystems[1].d()[(0, 0)], 3.0);
        let e = f.edge_lists().unwrap();
        assert_eq!(e.iedges[0].weight, -10.0);
        assert_eq!(e.einedges[0].weight, 1.0);
        assert_eq!(e.eoutedges[0].weight, 2.0);
        let (_, net) = f.network().unwrap();
        assert_eq!(net.dk[(1, 0)], -10.0);
    }

    #[test]
    fn round_trip_is_exact() {
        let f = ModelFile::parse(SAMPLE).unwrap();
        let again = ModelFile::parse(&f.to_text()).unwrap();
        assert_eq!(f, again);
        assert_eq!(f.to_text(), again.to_text());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ModelFile::parse("[network]\nexternal_inputs = 1\nexternal_outputs = 1\n").is_err());
        let undefined = SAMPLE.replace("\"-k\"", "\"-kk\"");
        assert!(ModelFile::parse(&undefined).is_err());
        let bad_row = SAMPLE.replace("[[1, 1]]", "[[1]]");
        assert!(ModelFile::parse(&bad_row).is_err());
        let bad_index = SAMPLE.replace("[[1, 1]]", "[[1, 9]]");
        assert!(ModelFile::parse(&bad_index).is_err());
        let ragged = SAMPLE.replace("A = [[-1.0]]", "A = [[-1.0], [1.0, 2.0]]");
        assert!(ModelFile::parse(&ragged).is_err());
    }
}
