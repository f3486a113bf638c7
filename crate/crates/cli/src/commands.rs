//! The five commands as library functions. Each returns a report and the
//! files it would write; `main` decides where they go.

use std::collections::BTreeMap;

use rayon::prelude::*;
use strucred::gramians::{regular_gramians, structured_gramians, GramianKind, LmiOptions};
use strucred::linalg::{freq_response, is_hurwitz, sigma_max, FrequencyGrid};
use strucred::network::{close_loop, Edge, NetworkMatrix};
use strucred::reduction::{
    balance, balance_network, hankel_singular_values, reduce_balanced, suggest_orders, theorem1_bound,
    BalancedRealization, ReducedModel, ReductionMethod, DEFAULT_DROP_RATIO,
};
use strucred::subgradient::{build_error_plant, improve as descend, DescentOptions, DescentReport};
use strucred::{closed_loop_error, mass_spring, BlockDiagonalPlant, Error, MassSpringOptions, OrderVector};

use crate::error::CliError;
use crate::modelfile::{ModelFile, Weight};
use crate::report::{Cell, Format, ReportBundle, Table};

/// Relative tolerance of every reported H-infinity value.
pub const HINF_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settings {
    pub method: ReductionMethod,
    pub gramians: GramianKind,
    /// Relative-improvement stopping tolerance of the descent.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub format: Format,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            method: ReductionMethod::Truncation,
            gramians: GramianKind::Structured,
            tol: 1e-5,
            max_iter: 300,
            seed: 0,
            format: Format::Tsv,
        }
    }
}

impl Settings {
    fn descent(&self) -> DescentOptions {
        DescentOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            ..DescentOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub report: ReportBundle,
    /// `(file name, contents)` pairs besides the report.
    pub files: Vec<(String, String)>,
    pub warnings: Vec<String>,
}

fn header(command: &str, source: &str, s: &Settings) -> ReportBundle {
    let mut r = ReportBundle::default();
    r.meta("tool", concat!("strucred ", env!("CARGO_PKG_VERSION")));
    r.meta("command", command);
    r.meta("model", source);
    r.meta("method", s.method);
    r.meta("gramians", s.gramians);
    r.meta("hinf_tol", format!("{HINF_TOL:e}"));
    r.meta("tol", format!("{:e}", s.tol));
    r.meta("max_iter", s.max_iter);
    r.meta("seed", s.seed);
    r
}

fn tuple(orders: &[usize]) -> String {
    let parts: Vec<String> = orders.iter().map(|r| r.to_string()).collect();
    format!("({})", parts.join(","))
}

/// `"6,3"` -> `(6, 3)`.
pub fn parse_orders(text: &str) -> Result<OrderVector, CliError> {
    let orders = text
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Parse(format!("invalid order '{t}' in '{text}'")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(OrderVector::new(orders))
}

/// `"8,6,4,2;10,8,6,4,2"`: one candidate list per subsystem.
pub fn parse_grid(text: &str) -> Result<Vec<Vec<usize>>, CliError> {
    if !text.contains(';') {
        return Ok(parse_orders(text)?.0.into_iter().map(|r| vec![r]).collect());
    }
    text.split(';').map(|part| parse_orders(part).map(|o| o.0)).collect()
}

/// `n_i, n_i - 2, ...` down to 2 (or 1 for odd orders).
pub fn default_grid(plant: &BlockDiagonalPlant) -> Vec<Vec<usize>> {
    plant
        .state_dims()
        .iter()
        .map(|&n| {
            let mut v: Vec<usize> = (1..=n).rev().step_by(2).collect();
            if v.is_empty() {
                v.push(0);
            }
            v
        })
        .collect()
}

fn lmi_options() -> LmiOptions {
    LmiOptions::default()
}

pub fn hankel(model: &ModelFile, source: &str, s: &Settings) -> Result<Output, CliError> {
    let (plant, net) = model.network()?;
    let cl = close_loop(&plant, &net)?;
    if !cl.hurwitz {
        return Err(Error::NotStable { abscissa: cl.abscissa }.into());
    }
    let grams = structured_gramians(&cl, &plant.state_dims())?;
    let mut report = header("hankel", source, s);
    let mut warnings = grams.diagnostics.warnings.clone();
    if let Ok(bal) = balance(&plant, &grams) {
        let r = suggest_orders(&bal, DEFAULT_DROP_RATIO)?;
        report.meta("drop_ratio", DEFAULT_DROP_RATIO);
        report.meta("suggested_orders", tuple(&r.0));
    }
    let mut table = Table::new("hankel", &["subsystem", "k", "structured", "regular"]);
    for (i, sys) in plant.subsystems().iter().enumerate() {
        let structured = hankel_singular_values(&grams.p_blocks[i], &grams.q_blocks[i]);
        let regular = match is_hurwitz(sys.a()) {
            Ok(st) if st.hurwitz || sys.order() == 0 => {
                let (p, q) = regular_gramians(sys)?;
                Some(hankel_singular_values(&p, &q))
            }
            _ => {
                warnings.push(format!("subsystem {} is not stable in isolation", i + 1));
                None
            }
        };
        for (k, &sv) in structured.iter().enumerate() {
            let reg = regular.as_ref().map_or(Cell::Missing, |r| Cell::Num(r[k]));
            table.push(vec![Cell::Int(i as i64 + 1), Cell::Int(k as i64 + 1), Cell::Num(sv), reg]);
        }
    }
    report.tables.push(table);
    Ok(Output {
        report,
        files: Vec::new(),
        warnings,
    })
}

fn balanced(plant: &BlockDiagonalPlant, net: &NetworkMatrix, s: &Settings) -> Result<BalancedRealization, CliError> {
    Ok(balance_network(plant, net, s.gramians, &lmi_options())?)
}

fn dc_gain_gap(net: &NetworkMatrix, full: &BlockDiagonalPlant, reduced: &BlockDiagonalPlant) -> Option<f64> {
    let g = freq_response(close_loop(full, net).ok()?.system(), 0.0).ok()?;
    let g_hat = freq_response(close_loop(reduced, net).ok()?.system(), 0.0).ok()?;
    Some((&g - &g_hat).norm() / g.norm().max(1.0))
}

fn d_matrices_equal(net: &NetworkMatrix, full: &BlockDiagonalPlant, reduced: &BlockDiagonalPlant) -> Option<bool> {
    Some(close_loop(full, net).ok()?.d() == close_loop(reduced, net).ok()?.d())
}

pub fn reduce(model: &ModelFile, source: &str, orders: &OrderVector, s: &Settings) -> Result<Output, CliError> {
    let (plant, net) = model.network()?;
    orders.validate(&plant)?;
    let bal = balanced(&plant, &net, s)?;
    let mut red = reduce_balanced(&bal, orders, s.method)?;
    let err = red.evaluate(&net, &plant, HINF_TOL)?;
    let bound = theorem1_bound(&bal, orders)?;
    let mut warnings = red.warnings.clone();
    if err.is_infinite() {
        warnings.push(format!("reduced closed loop with orders {} is unstable", tuple(&orders.0)));
    }
    let mut report = header("reduce", source, s);
    report.meta("orders", tuple(&orders.0));
    let mut t = Table::new("reduce", &["quantity", "value"]);
    let text = |v: &str| Cell::Text(v.to_string());
    t.push(vec![text("error"), Cell::Num(err)]);
    t.push(vec![text("bound"), Cell::Num(bound.value)]);
    t.push(vec![text("bound_heuristic"), text(&bound.heuristic.to_string())]);
    t.push(vec![
        text("d_match"),
        d_matrices_equal(&net, &plant, &red.plant).map_or(Cell::Missing, |b| text(&b.to_string())),
    ]);
    t.push(vec![
        text("dc_rel_diff"),
        dc_gain_gap(&net, &plant, &red.plant).map_or(Cell::Missing, Cell::Num),
    ]);
    report.tables.push(t);
    Ok(Output {
        report,
        files: vec![("reduced.toml".into(), model.with_subsystems(&red.plant).to_text())],
        warnings,
    })
}

/// One sweep cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub orders: Vec<usize>,
    /// `Ok(+inf)` for an unstable reduced closed loop.
    pub error: Result<f64, String>,
    pub bound: Option<f64>,
    pub improved: Option<Result<DescentReport, String>>,
}

fn run_cell(
    plant: &BlockDiagonalPlant,
    net: &NetworkMatrix,
    bal: &BalancedRealization,
    orders: &[usize],
    s: &Settings,
    with_improve: bool,
) -> CellResult {
    let r = OrderVector::new(orders.to_vec());
    let bound = theorem1_bound(bal, &r).ok().map(|b| b.value);
    let reduced: Result<ReducedModel, Error> = reduce_balanced(bal, &r, s.method);
    let error = reduced
        .as_ref()
        .map_err(|e| e.to_string())
        .and_then(|red| closed_loop_error(net, plant, &red.plant, HINF_TOL).map_err(|e| e.to_string()));
    let improved = match (&reduced, &error) {
        (Ok(red), Ok(e)) if with_improve && e.is_finite() => Some(
            build_error_plant(net, plant, &r)
                .and_then(|ep| descend(&ep, red, &s.descent()))
                .map(|(_, rep)| rep)
                .map_err(|e| e.to_string()),
        ),
        _ => None,
    };
    CellResult {
        orders: orders.to_vec(),
        error,
        bound,
        improved,
    }
}

fn cartesian(grid: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for choices in grid {
        let mut next = Vec::with_capacity(out.len() * choices.len());
        for prefix in &out {
            for &c in choices {
                let mut v = prefix.clone();
                v.push(c);
                next.push(v);
            }
        }
        out = next;
    }
    out
}

fn sorted_desc(v: &[usize]) -> Vec<usize> {
    let mut v = v.to_vec();
    v.sort_by(|a, b| b.cmp(a));
    v.dedup();
    v
}

fn error_cell(e: &Result<f64, String>) -> Cell {
    match e {
        Ok(v) => Cell::Num(*v),
        Err(_) => Cell::Missing,
    }
}

fn improved_cell(c: &CellResult) -> Cell {
    match (&c.error, &c.improved) {
        (_, Some(Ok(rep))) => Cell::Num(rep.final_point.objective),
        (Ok(v), None) if v.is_infinite() => Cell::Num(f64::INFINITY),
        _ => Cell::Missing,
    }
}

/// `rows r_2 desc x columns r_1 desc` for two subsystems, otherwise one
/// row per order tuple.
fn grid_table(name: &str, grid: &[Vec<usize>], cells: &[CellResult], value: impl Fn(&CellResult) -> Cell) -> Table {
    if grid.len() == 2 {
        let (r1s, r2s) = (sorted_desc(&grid[0]), sorted_desc(&grid[1]));
        let mut cols = vec!["r2/r1".to_string()];
        cols.extend(r1s.iter().map(|r| r.to_string()));
        let mut t = Table {
            name: name.into(),
            columns: cols,
            rows: Vec::new(),
        };
        for &r2 in &r2s {
            let mut row = vec![Cell::Int(r2 as i64)];
            for &r1 in &r1s {
                let c = cells.iter().find(|c| c.orders == [r1, r2]);
                row.push(c.map_or(Cell::Missing, &value));
            }
            t.rows.push(row);
        }
        t
    } else {
        let mut t = Table::new(name, &["orders", "value"]);
        for c in cells {
            t.push(vec![Cell::Text(tuple(&c.orders)), value(c)]);
        }
        t
    }
}

/// Sweep results in grid order (used by the report and by tests).
pub fn sweep_cells(
    model: &ModelFile,
    grid: &[Vec<usize>],
    with_improve: bool,
    s: &Settings,
) -> Result<(Vec<CellResult>, BalancedRealization), CliError> {
    let (plant, net) = model.network()?;
    if grid.len() != plant.len() {
        return Err(Error::InvalidOrder(format!(
            "order grid has {} entries for {} subsystems",
            grid.len(),
            plant.len()
        ))
        .into());
    }
    for (i, choices) in grid.iter().enumerate() {
        if let Some(&bad) = choices.iter().find(|&&r| r > plant.state_dims()[i]) {
            return Err(Error::InvalidOrder(format!("order {bad} exceeds subsystem {} state dimension", i + 1)).into());
        }
    }
    let cl = close_loop(&plant, &net)?;
    if !cl.hurwitz {
        return Err(Error::NotStable { abscissa: cl.abscissa }.into());
    }
    let bal = balanced(&plant, &net, s)?;
    let tuples = cartesian(grid);
    let cells: Vec<CellResult> = tuples
        .par_iter()
        .map(|o| run_cell(&plant, &net, &bal, o, s, with_improve))
        .collect();
    Ok((cells, bal))
}

pub fn sweep(model: &ModelFile, source: &str, grid: &[Vec<usize>], with_improve: bool, s: &Settings) -> Result<Output, CliError> {
    let (cells, bal) = sweep_cells(model, grid, with_improve, s)?;
    let mut report = header(if with_improve { "sweep --improve" } else { "sweep" }, source, s);
    let grid_text: Vec<String> = grid
        .iter()
        .map(|g| g.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(","))
        .collect();
    report.meta("grid", grid_text.join(";"));
    report.meta("bound", if bal.kind == GramianKind::Structured { "heuristic" } else { "guaranteed" });
    let mut warnings = bal.warnings.clone();
    for c in &cells {
        match &c.error {
            Ok(v) if v.is_infinite() => warnings.push(format!("orders {}: reduced closed loop unstable", tuple(&c.orders))),
            Err(e) => warnings.push(format!("orders {}: {e}", tuple(&c.orders))),
            _ => {}
        }
        if let Some(Err(e)) = &c.improved {
            warnings.push(format!("orders {}: improvement failed: {e}", tuple(&c.orders)));
        }
    }
    report.tables.push(grid_table("error", grid, &cells, |c| error_cell(&c.error)));
    report.tables.push(grid_table("bound", grid, &cells, |c| c.bound.map_or(Cell::Missing, Cell::Num)));
    if with_improve {
        report.tables.push(grid_table("improved", grid, &cells, improved_cell));
        let mut summary = Table::new("descent_summary", &["orders", "termination", "iterations", "evaluations", "initial", "final"]);
        let mut hist = Table::new("descent_history", &["orders", "step", "objective"]);
        for c in &cells {
            if let Some(Ok(rep)) = &c.improved {
                let o = tuple(&c.orders);
                summary.push(vec![
                    Cell::Text(o.clone()),
                    Cell::Text(rep.termination.to_string()),
                    Cell::Int(rep.iterations as i64),
                    Cell::Int(rep.evaluations as i64),
                    Cell::Num(rep.history[0]),
                    Cell::Num(rep.final_point.objective),
                ]);
                for (k, v) in rep.history.iter().enumerate() {
                    hist.push(vec![Cell::Text(o.clone()), Cell::Int(k as i64), Cell::Num(*v)]);
                }
            }
        }
        report.tables.push(summary);
        report.tables.push(hist);
    }
    Ok(Output {
        report,
        files: Vec::new(),
        warnings,
    })
}

pub fn improve(model: &ModelFile, source: &str, seed: &ModelFile, s: &Settings) -> Result<Output, CliError> {
    let (plant, net) = model.network()?;
    let seed_plant = seed.plant()?;
    if !plant.same_io_partition(&seed_plant) {
        return Err(Error::DimensionMismatch("reduced model ports differ from the full model".into()).into());
    }
    let orders = OrderVector::new(seed_plant.state_dims());
    orders.validate(&plant)?;
    let init = ReducedModel {
        plant: seed_plant,
        orders: orders.clone(),
        method: s.method,
        kind: s.gramians,
        error: None,
        warnings: Vec::new(),
    };
    let ep = build_error_plant(&net, &plant, &orders)?;
    let (red, rep) = descend(&ep, &init, &s.descent())?;
    let mut report = header("improve", source, s);
    report.meta("orders", tuple(&orders.0));
    report.meta("termination", rep.termination);
    let mut summary = Table::new("improve", &["quantity", "value"]);
    summary.push(vec![Cell::Text("initial".into()), Cell::Num(rep.history[0])]);
    summary.push(vec![Cell::Text("final".into()), Cell::Num(rep.final_point.objective)]);
    summary.push(vec![Cell::Text("accepted_steps".into()), Cell::Int(rep.accepted_steps() as i64)]);
    summary.push(vec![Cell::Text("iterations".into()), Cell::Int(rep.iterations as i64)]);
    summary.push(vec![Cell::Text("evaluations".into()), Cell::Int(rep.evaluations as i64)]);
    report.tables.push(summary);
    let mut hist = Table::new("descent_history", &["step", "objective"]);
    for (k, v) in rep.history.iter().enumerate() {
        hist.push(vec![Cell::Int(k as i64), Cell::Num(*v)]);
    }
    report.tables.push(hist);
    Ok(Output {
        report,
        files: vec![("improved.toml".into(), model.with_subsystems(&red.plant).to_text())],
        warnings: red.warnings,
    })
}

/// Stand-in model file for coupling `k` and body orders `n1`, `n2`.
pub fn demo_model(k: f64, n1: usize, n2: usize) -> Result<ModelFile, CliError> {
    let demo = mass_spring(k, n1, n2, &MassSpringOptions::default())?;
    let params = BTreeMap::from([("k".to_string(), k)]);
    let symbolic = |e: &Edge| {
        if e.weight == k {
            Weight::Param {
                name: "k".into(),
                negated: false,
            }
        } else if e.weight == -k {
            Weight::Param {
                name: "k".into(),
                negated: true,
            }
        } else if e.weight == 1.0 {
            Weight::Unit
        } else {
            Weight::Value(e.weight)
        }
    };
    Ok(ModelFile::from_parts(&demo.plant, &demo.edges, params, symbolic))
}

pub fn demo_massspring(k: f64, n1: usize, n2: usize, s: &Settings) -> Result<Output, CliError> {
    let model = demo_model(k, n1, n2)?;
    let (plant, net) = model.network()?;
    let mut report = header("demo-massspring", "-", s);
    report.meta("k", model.params["k"]);
    report.meta("orders", tuple(&[n1, n2]));
    let n = net.to_matrix();
    let cols: Vec<String> = (1..=n.ncols()).map(|j| j.to_string()).collect();
    let mut col_refs = vec!["row"];
    col_refs.extend(cols.iter().map(String::as_str));
    let mut t = Table::new("network", &col_refs);
    for i in 0..n.nrows() {
        let mut row = vec![Cell::Int(i as i64 + 1)];
        row.extend(n.row(i).iter().map(|v| Cell::Num(*v)));
        t.push(row);
    }
    report.tables.push(t);
    let grid = FrequencyGrid::logspace(1e-1, 1e3, 200)?;
    let mut bode = Table::new("bode", &["subsystem", "omega", "magnitude"]);
    for (i, sys) in plant.subsystems().iter().enumerate() {
        for &w in grid.points() {
            let mag = freq_response(sys, w).map(|g| sigma_max(&g)).map_or(Cell::Missing, Cell::Num);
            bode.push(vec![Cell::Int(i as i64 + 1), Cell::Num(w), mag]);
        }
    }
    report.tables.push(bode);
    let stable = close_loop(&plant, &net)?.hurwitz;
    report.meta("closed_loop_stable", stable);
    Ok(Output {
        report,
        files: vec![("massspring.toml".into(), model.to_text())],
        warnings: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_parsing() {
        assert_eq!(parse_orders("6,3").unwrap().0, vec![6, 3]);
        assert!(parse_orders("6,x").is_err());
        assert_eq!(parse_grid("8,6;10,2").unwrap(), vec![vec![8, 6], vec![10, 2]]);
        assert_eq!(parse_grid("8,10").unwrap(), vec![vec![8], vec![10]]);
    }

    #[test]
    fn default_grid_steps_by_two() {
        let model = demo_model(10.0, 8, 10).unwrap();
        let plant = model.plant().unwrap();
        assert_eq!(default_grid(&plant), vec![vec![8, 6, 4, 2], vec![10, 8, 6, 4, 2]]);
    }

    #[test]
    fn cartesian_product_order() {
        let c = cartesian(&[vec![2, 1], vec![3]]);
        assert_eq!(c, vec![vec![2, 3], vec![1, 3]]);
    }
}
