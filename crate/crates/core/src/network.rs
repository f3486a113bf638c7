//! Static interconnection networks and the lower LFT `F(N, G(s))`.
//!
//! The network maps `[w; y]` to `[z; u]`:
//!
//! ```text
//! z = D_E w + D_F y
//! u = D_H w + D_K y
//! ```
//!
//! where `w`/`z` are the external inputs/outputs and `y`/`u` the stacked
//! subsystem outputs/inputs.

use crate::error::{Error, Result};
use crate::linalg::{hinf_norm, is_hurwitz, Matrix};
use crate::sysmodel::{BlockDiagonalPlant, StateSpaceModel};

/// Well-posedness limit on the condition number of `I - D_K D_G`.
pub const MAX_LOOP_COND: f64 = 1e12;

/// A weighted edge. Indices are one-based, as in the edge-list notation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub weight: f64,
}

impl Edge {
    pub fn new(from: usize, to: usize, weight: f64) -> Self {
        Self { from, to, weight }
    }

    /// Edge with the default unit weight.
    pub fn unit(from: usize, to: usize) -> Self {
        Self::new(from, to, 1.0)
    }
}

/// Edge-list description of a network.
///
/// * `iedges`: internal output -> internal input (`D_K`)
/// * `einedges`: external input -> internal input (`D_H`)
/// * `eoutedges`: internal output -> external output (`D_F`)
/// * `eedges`: external input -> external output (`D_E`)
///
/// Parallel edges into the same port are summed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EdgeLists {
    pub iedges: Vec<Edge>,
    pub einedges: Vec<Edge>,
    pub eoutedges: Vec<Edge>,
    pub eedges: Vec<Edge>,
    /// Number of external inputs `m'`.
    pub m_ext: usize,
    /// Number of external outputs `p'`.
    pub p_ext: usize,
}

/// `N = [D_E D_F; D_H D_K]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkMatrix {
    pub de: Matrix,
    pub df: Matrix,
    pub dh: Matrix,
    pub dk: Matrix,
}

impl NetworkMatrix {
    pub fn new(de: Matrix, df: Matrix, dh: Matrix, dk: Matrix) -> Result<Self> {
        let (p_ext, m_ext) = de.shape();
        let (m, p) = dk.shape();
        if df.shape() != (p_ext, p) || dh.shape() != (m, m_ext) {
            return Err(Error::DimensionMismatch(format!(
                "network blocks D_E {:?}, D_F {:?}, D_H {:?}, D_K {:?}",
                de.shape(),
                df.shape(),
                dh.shape(),
                dk.shape()
            )));
        }
        Ok(Self { de, df, dh, dk })
    }

    pub fn external_inputs(&self) -> usize {
        self.de.ncols()
    }
    pub fn external_outputs(&self) -> usize {
        self.de.nrows()
    }

    /// The full `(p' + m) x (m' + p)` matrix.
    pub fn to_matrix(&self) -> Matrix {
        let (pe, me) = self.de.shape();
        let (m, p) = self.dk.shape();
        let mut n = Matrix::zeros(pe + m, me + p);
        n.view_mut((0, 0), (pe, me)).copy_from(&self.de);
        n.view_mut((0, me), (pe, p)).copy_from(&self.df);
        n.view_mut((pe, 0), (m, me)).copy_from(&self.dh);
        n.view_mut((pe, me), (m, p)).copy_from(&self.dk);
        n
    }

    fn check_plant(&self, plant: &BlockDiagonalPlant) -> Result<()> {
        if self.dk.shape() != (plant.inputs(), plant.outputs()) {
            return Err(Error::DimensionMismatch(format!(
                "network D_K is {:?} but the plant has {} inputs and {} outputs",
                self.dk.shape(),
                plant.inputs(),
                plant.outputs()
            )));
        }
        Ok(())
    }
}

fn add_edges(
    target: &mut Matrix,
    edges: &[Edge],
    what: &'static str,
    row_of: impl Fn(&Edge) -> usize,
    col_of: impl Fn(&Edge) -> usize,
) -> Result<()> {
    let (rows, cols) = target.shape();
    for e in edges {
        if !e.weight.is_finite() {
            return Err(Error::InvalidParameter(format!("{what}: non-finite weight")));
        }
        let (r, c) = (row_of(e), col_of(e));
        if r == 0 || r > rows {
            return Err(Error::IndexOutOfRange { what, index: r, len: rows });
        }
        if c == 0 || c > cols {
            return Err(Error::IndexOutOfRange { what, index: c, len: cols });
        }
        target[(r - 1, c - 1)] += e.weight;
    }
    Ok(())
}

/// Build `N` from edge lists against the plant's port counts.
pub fn assemble_network(edges: &EdgeLists, plant: &BlockDiagonalPlant) -> Result<NetworkMatrix> {
    let (m, p) = (plant.inputs(), plant.outputs());
    let (me, pe) = (edges.m_ext, edges.p_ext);
    let mut dk = Matrix::zeros(m, p);
    let mut dh = Matrix::zeros(m, me);
    let mut df = Matrix::zeros(pe, p);
    let mut de = Matrix::zeros(pe, me);
    add_edges(&mut dk, &edges.iedges, "iedge", |e| e.to, |e| e.from)?;
    add_edges(&mut dh, &edges.einedges, "einedge", |e| e.to, |e| e.from)?;
    add_edges(&mut df, &edges.eoutedges, "eoutedge", |e| e.to, |e| e.from)?;
    add_edges(&mut de, &edges.eedges, "eedge", |e| e.to, |e| e.from)?;
    NetworkMatrix::new(de, df, dh, dk)
}

/// Realization of `F(N, G(s))` together with its stability flag.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoop {
    system: StateSpaceModel,
    pub hurwitz: bool,
    pub abscissa: f64,
}

impl ClosedLoop {
    pub fn system(&self) -> &StateSpaceModel {
        &self.system
    }
    pub fn a(&self) -> &Matrix {
        self.system.a()
    }
    pub fn b(&self) -> &Matrix {
        self.system.b()
    }
    pub fn c(&self) -> &Matrix {
        self.system.c()
    }
    pub fn d(&self) -> &Matrix {
        self.system.d()
    }
    pub fn order(&self) -> usize {
        self.system.order()
    }
}

/// `(I - X)^{-1}` with a condition check.
pub(crate) fn loop_inverse(x: &Matrix) -> Result<Matrix> {
    let k = x.nrows();
    let m = Matrix::identity(k, k) - x;
    if k == 0 {
        return Ok(m);
    }
    let sv = m.clone().singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(cond <= MAX_LOOP_COND) {
        return Err(Error::IllPosed { cond });
    }
    m.try_inverse().ok_or(Error::IllPosed { cond })
}

/// Close the loop:
///
/// ```text
/// A = A_G + B_G (I - D_K D_G)^{-1} D_K C_G
/// B = B_G (I - D_K D_G)^{-1} D_H
/// C = D_F (I - D_G D_K)^{-1} C_G
/// D = D_E + D_F D_G (I - D_K D_G)^{-1} D_H
/// ```
pub fn close_loop(plant: &BlockDiagonalPlant, net: &NetworkMatrix) -> Result<ClosedLoop> {
    net.check_plant(plant)?;
    let (ag, bg, cg, dg) = (plant.a(), plant.b(), plant.c(), plant.d());
    let inv_kg = loop_inverse(&(&net.dk * dg))?;
    let inv_gk = loop_inverse(&(dg * &net.dk))?;
    let a = ag + bg * &inv_kg * &net.dk * cg;
    let b = bg * &inv_kg * &net.dh;
    let c = &net.df * &inv_gk * cg;
    let d = &net.de + &net.df * dg * &inv_kg * &net.dh;
    let system = StateSpaceModel::new(a, b, c, d)?.with_label("F(N,G)");
    let stab = is_hurwitz(system.a())?;
    Ok(ClosedLoop {
        system,
        hurwitz: stab.hurwitz,
        abscissa: stab.abscissa,
    })
}

/// Parallel realization of `sys1 - sys2` (states stacked, outputs subtracted).
pub fn difference_system(sys1: &StateSpaceModel, sys2: &StateSpaceModel) -> Result<StateSpaceModel> {
    if sys1.inputs() != sys2.inputs() || sys1.outputs() != sys2.outputs() {
        return Err(Error::DimensionMismatch(
            "difference of systems with different I/O sizes".into(),
        ));
    }
    let a = crate::linalg::block_diag(&[sys1.a(), sys2.a()]);
    let mut b = Matrix::zeros(a.nrows(), sys1.inputs());
    b.view_mut((0, 0), sys1.b().shape()).copy_from(sys1.b());
    b.view_mut((sys1.order(), 0), sys2.b().shape()).copy_from(sys2.b());
    let mut c = Matrix::zeros(sys1.outputs(), a.nrows());
    c.view_mut((0, 0), sys1.c().shape()).copy_from(sys1.c());
    c.view_mut((0, sys1.order()), sys2.c().shape()).copy_from(&(-sys2.c()));
    StateSpaceModel::new(a, b, c, sys1.d() - sys2.d())
}

/// `||F(N, G_hat) - F(N, G)||_inf`, or `+inf` when `F(N, G_hat)` is unstable.
pub fn closed_loop_error(
    net: &NetworkMatrix,
    full: &BlockDiagonalPlant,
    reduced: &BlockDiagonalPlant,
    rel_tol: f64,
) -> Result<f64> {
    if !full.same_io_partition(reduced) {
        return Err(Error::DimensionMismatch(
            "reduced plant must keep the subsystem input/output partition".into(),
        ));
    }
    let cl = close_loop(full, net)?;
    let cl_hat = close_loop(reduced, net)?;
    if !cl.hurwitz {
        return Err(Error::NotStable { abscissa: cl.abscissa });
    }
    if !cl_hat.hurwitz {
        return Ok(f64::INFINITY);
    }
    error_between(&cl, &cl_hat, rel_tol)
}

/// H-infinity norm of the difference of two stable closed loops.
pub fn error_between(cl: &ClosedLoop, cl_hat: &ClosedLoop, rel_tol: f64) -> Result<f64> {
    let diff = difference_system(cl.system(), cl_hat.system())?;
    Ok(hinf_norm(&diff, rel_tol)?.value)
}
