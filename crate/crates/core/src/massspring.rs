//! Two elastic bodies joined by a spring of stiffness `k`.
//!
//! Each body is a uniform chain of `n_i / 2` masses (total mass 1) with
//! Rayleigh damping `C = alpha M + beta K`. Body 1 is grounded by a wall
//! spring at its left end, body 2 at its right end.
//!
//! * `G_1`: inputs `[w, u_12]` (forces on the left and right end masses),
//!   output `y_1` (right end position)
//! * `G_2`: input `u_2` and output `y_2` at its left end
//!
//! The coupling spring gives `u_12 = -k (y_1 - y_2)` and `u_2 = k (y_1 - y_2)`.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::network::{Edge, EdgeLists};
use crate::sysmodel::{BlockDiagonalPlant, StateSpaceModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassSpringOptions {
    /// Nominal stiffness of each body; chain springs are `N * stiffness`.
    pub stiffness: [f64; 2],
    pub alpha: f64,
    pub beta: f64,
}

impl Default for MassSpringOptions {
    fn default() -> Self {
        Self {
            stiffness: [50.0, 80.0],
            alpha: 0.0,
            beta: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MassSpringModel {
    pub plant: BlockDiagonalPlant,
    pub edges: EdgeLists,
    pub k: f64,
}

enum Wall {
    Left,
    Right,
}

/// Chain of `masses` nodes: returns `(A, positions->states map)` pieces.
fn chain(masses: usize, stiffness: f64, wall: Wall, opts: &MassSpringOptions) -> (Matrix, Matrix) {
    let nm = masses;
    let ks = nm as f64 * stiffness;
    let mass = 1.0 / nm as f64;
    let mut k = Matrix::zeros(nm, nm);
    for i in 0..nm.saturating_sub(1) {
        k[(i, i)] += ks;
        k[(i + 1, i + 1)] += ks;
        k[(i, i + 1)] -= ks;
        k[(i + 1, i)] -= ks;
    }
    match wall {
        Wall::Left => k[(0, 0)] += ks,
        Wall::Right => k[(nm - 1, nm - 1)] += ks,
    }
    let m_inv = Matrix::identity(nm, nm) / mass;
    let damping = Matrix::identity(nm, nm) * (opts.alpha * mass) + &k * opts.beta;
    let mut a = Matrix::zeros(2 * nm, 2 * nm);
    a.view_mut((0, nm), (nm, nm)).fill_with_identity();
    a.view_mut((nm, 0), (nm, nm)).copy_from(&(-(&m_inv * &k)));
    a.view_mut((nm, nm), (nm, nm)).copy_from(&(-(&m_inv * damping)));
    (a, m_inv)
}

fn force_input(nm: usize, node: usize, m_inv: &Matrix) -> Matrix {
    let mut b = Matrix::zeros(2 * nm, 1);
    b[(nm + node, 0)] = m_inv[(node, node)];
    b
}

fn position_output(nm: usize, node: usize) -> Matrix {
    let mut c = Matrix::zeros(1, 2 * nm);
    c[(0, node)] = 1.0;
    c
}

/// The demo network for coupling stiffness `k` and body orders `n1`, `n2`
/// (even, at least 2).
pub fn mass_spring(k: f64, n1: usize, n2: usize, opts: &MassSpringOptions) -> Result<MassSpringModel> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::InvalidParameter(format!("coupling stiffness must be positive, got {k}")));
    }
    for n in [n1, n2] {
        if n < 2 || n % 2 != 0 {
            return Err(Error::InvalidParameter(format!("body order must be even and at least 2, got {n}")));
        }
    }
    if !(opts.beta > 0.0 && opts.alpha >= 0.0 && opts.stiffness.iter().all(|s| *s > 0.0)) {
        return Err(Error::InvalidParameter("damping and stiffness must be positive".into()));
    }
    let (m1, m2) = (n1 / 2, n2 / 2);

    let (a1, mi1) = chain(m1, opts.stiffness[0], Wall::Left, opts);
    let mut b1 = Matrix::zeros(n1, 2);
    b1.set_column(0, &force_input(m1, 0, &mi1).column(0));
    b1.set_column(1, &force_input(m1, m1 - 1, &mi1).column(0));
    let g1 = StateSpaceModel::new(a1, b1, position_output(m1, m1 - 1), Matrix::zeros(1, 2))?.with_label("G1");

    let (a2, mi2) = chain(m2, opts.stiffness[1], Wall::Right, opts);
    let g2 = StateSpaceModel::new(a2, force_input(m2, 0, &mi2), position_output(m2, 0), Matrix::zeros(1, 1))?
        .with_label("G2");

    let edges = EdgeLists {
        iedges: vec![
            Edge::new(1, 2, -k),
            Edge::new(2, 2, k),
            Edge::new(1, 3, k),
            Edge::new(2, 3, -k),
        ],
        einedges: vec![Edge::unit(1, 1)],
        eoutedges: vec![Edge::unit(1, 1), Edge::unit(2, 2)],
        eedges: vec![],
        m_ext: 1,
        p_ext: 2,
    };
    Ok(MassSpringModel {
        plant: BlockDiagonalPlant::aggregate(vec![g1, g2])?,
        edges,
        k,
    })
}
