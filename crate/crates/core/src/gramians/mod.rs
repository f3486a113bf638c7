//! Structured and generalized structured Gramians of an interconnection.
//!
//! Structured Gramians are the diagonal blocks of the closed-loop
//! Gramians; generalized ones are block-diagonal solutions of the Lyapunov
//! inequalities of minimal trace, found with the solver in [`lmi`].

pub mod lmi;

pub use lmi::{solve_block_lmi, LmiOptions, LmiProblem, LmiSide, LmiSolution};

use crate::error::{Error, Result};
use crate::linalg::{solve_lyapunov, sym_eig, Matrix};
use crate::network::ClosedLoop;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GramianKind {
    Structured,
    Generalized,
}

impl std::fmt::Display for GramianKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GramianKind::Structured => "structured",
            GramianKind::Generalized => "generalized",
        })
    }
}

/// Residual diagnostics.
///
/// For structured Gramians these are relative Frobenius residuals of the
/// full Lyapunov equations; for generalized ones the largest eigenvalue of
/// the LMI residual in original units.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GramianDiagnostics {
    pub controllability_residual: f64,
    pub observability_residual: f64,
    pub warnings: Vec<String>,
}

/// Block-diagonal controllability/observability Gramians, one block per subsystem.
#[derive(Debug, Clone, PartialEq)]
pub struct GramianPair {
    pub kind: GramianKind,
    pub p_blocks: Vec<Matrix>,
    pub q_blocks: Vec<Matrix>,
    pub diagnostics: GramianDiagnostics,
}

impl GramianPair {
    pub fn partition(&self) -> Vec<usize> {
        self.p_blocks.iter().map(|b| b.nrows()).collect()
    }
}

fn check_partition(cl: &ClosedLoop, partition: &[usize]) -> Result<()> {
    if partition.iter().sum::<usize>() != cl.order() {
        return Err(Error::DimensionMismatch(format!(
            "partition {:?} does not match closed-loop order {}",
            partition,
            cl.order()
        )));
    }
    if !cl.hurwitz {
        return Err(Error::NotStable { abscissa: cl.abscissa });
    }
    Ok(())
}

fn diagonal_blocks(m: &Matrix, partition: &[usize]) -> Vec<Matrix> {
    let mut off = 0;
    partition
        .iter()
        .map(|&k| {
            let b = m.view((off, off), (k, k)).into_owned();
            off += k;
            b
        })
        .collect()
}

fn lyapunov_residual(a: &Matrix, x: &Matrix, w: &Matrix) -> f64 {
    (a * x + x * a.transpose() + w).norm() / w.norm().max(1.0)
}

// A full Gramian with a relative eigenvalue floor this small is treated as
// rank deficient by the diagnostic minimality check.
const RANK_FLOOR: f64 = 1e-12;

fn rank_warning(x: &Matrix, what: &str) -> Option<String> {
    if x.nrows() == 0 {
        return None;
    }
    let ev = sym_eig(x).values;
    let (top, low) = (ev[0], ev[ev.len() - 1]);
    (low <= RANK_FLOOR * top.max(f64::MIN_POSITIVE))
        .then(|| format!("closed loop may not be {what}: Gramian eigenvalue ratio {:.3e}", low / top))
}

/// Diagonal blocks of the closed-loop Gramians.
pub fn structured_gramians(cl: &ClosedLoop, partition: &[usize]) -> Result<GramianPair> {
    check_partition(cl, partition)?;
    let a = cl.a();
    let bb = cl.b() * cl.b().transpose();
    let cc = cl.c().transpose() * cl.c();
    let p = solve_lyapunov(a, &bb)?;
    let q = solve_lyapunov(&a.transpose(), &cc)?;
    let warnings = [rank_warning(&p, "controllable"), rank_warning(&q, "observable")]
        .into_iter()
        .flatten()
        .collect();
    Ok(GramianPair {
        kind: GramianKind::Structured,
        p_blocks: diagonal_blocks(&p, partition),
        q_blocks: diagonal_blocks(&q, partition),
        diagnostics: GramianDiagnostics {
            controllability_residual: lyapunov_residual(a, &p, &bb),
            observability_residual: lyapunov_residual(&a.transpose(), &q, &cc),
            warnings,
        },
    })
}

/// Trace-minimal block-diagonal solutions of both Lyapunov inequalities.
pub fn generalized_gramians(cl: &ClosedLoop, partition: &[usize], opts: &LmiOptions) -> Result<GramianPair> {
    check_partition(cl, partition)?;
    let a = cl.a().clone();
    let bb = cl.b() * cl.b().transpose();
    let cc = cl.c().transpose() * cl.c();
    let pp = LmiProblem::new(a.clone(), bb, partition.to_vec(), LmiSide::Controllability)?;
    let qp = LmiProblem::new(a, cc, partition.to_vec(), LmiSide::Observability)?;
    let (p, q) = std::thread::scope(|s| {
        let hp = s.spawn(|| solve_block_lmi(&pp, opts));
        let q = solve_block_lmi(&qp, opts);
        (hp.join().expect("LMI worker panicked"), q)
    });
    let (p, q) = (p?, q?);
    let mut warnings = Vec::new();
    if !p.converged || !q.converged {
        warnings.push("LMI Newton budget exhausted before the gap target".to_string());
    }
    Ok(GramianPair {
        kind: GramianKind::Generalized,
        diagnostics: GramianDiagnostics {
            controllability_residual: p.residual,
            observability_residual: q.residual,
            warnings,
        },
        p_blocks: p.blocks,
        q_blocks: q.blocks,
    })
}

/// Regular Gramians of a single system.
pub fn regular_gramians(sys: &crate::sysmodel::StateSpaceModel) -> Result<(Matrix, Matrix)> {
    let p = solve_lyapunov(sys.a(), &(sys.b() * sys.b().transpose()))?;
    let q = solve_lyapunov(&sys.a().transpose(), &(sys.c().transpose() * sys.c()))?;
    Ok((p, q))
}
