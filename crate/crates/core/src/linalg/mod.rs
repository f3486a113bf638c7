//! Dense numerical kernels: Lyapunov equations, stability tests, frequency
//! responses, the H-infinity norm and symmetric eigendecompositions.
//!
//! Everything here is a pure function of its inputs. Tolerances live in
//! [`KernelConfig`]; the plain entry points use [`KernelConfig::default`].

mod eig;
mod freq;
mod hinf;
mod lyapunov;

pub use eig::{is_hurwitz, is_hurwitz_with, sym_eig, Stability, SymEig};
pub use freq::{
    freq_response, freq_response_with, sigma_max, FrequencyEvaluator, FrequencyGrid, GridScale,
};
pub(crate) use hinf::{hinf_parts, local_peaks_parts};
pub use hinf::{hinf_norm, hinf_norm_with, local_peaks, HinfNorm};
pub use lyapunov::{solve_lyapunov, solve_lyapunov_with};

use nalgebra::{Complex, DMatrix};

/// Real dense matrix.
pub type Matrix = DMatrix<f64>;
/// Complex dense matrix.
pub type CMatrix = DMatrix<Complex<f64>>;

/// Module-level tolerances. The defaults are the documented behaviour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig {
    /// A matrix counts as stable only if its spectral abscissa is below `-stability_margin`.
    pub stability_margin: f64,
    /// Resolvent solves with a 1-norm condition estimate above this are rejected.
    pub max_resolvent_cond: f64,
    /// Number of log-spaced points in the initial H-infinity sweep.
    pub hinf_grid_points: usize,
    /// Fall back to a dense sweep when a singular value of D lies this close
    /// (relatively) to the bisection level.
    pub hinf_d_gap: f64,
    /// Relative real-part threshold under which a Hamiltonian eigenvalue counts as imaginary.
    pub imag_axis_tol: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            stability_margin: 1e-12,
            max_resolvent_cond: 1e14,
            hinf_grid_points: 200,
            hinf_d_gap: 1e-8,
            imag_axis_tol: 1e-6,
        }
    }
}


pub(crate) fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

pub(crate) fn all_finite(m: &Matrix) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// Block-diagonal stacking of arbitrary (possibly empty or non-square) blocks.
pub fn block_diag(blocks: &[&Matrix]) -> Matrix {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}
