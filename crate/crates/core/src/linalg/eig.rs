use nalgebra::{Complex, DVector, Schur, SymmetricEigen};

use super::{KernelConfig, Matrix};
use crate::error::{Error, Result};

/// Result of a stability test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stability {
    pub hurwitz: bool,
    /// Largest real part over the spectrum (`-inf` for an empty matrix).
    pub abscissa: f64,
}

/// Eigendecomposition of a symmetric matrix, eigenvalues descending.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub values: DVector<f64>,
    /// Orthonormal eigenvectors, column `k` belongs to `values[k]`.
    pub vectors: Matrix,
}

pub(crate) fn schur(a: &Matrix) -> Result<Schur<f64, nalgebra::Dyn>> {
    if !super::all_finite(a) {
        return Err(Error::NumericalBreakdown("non-finite matrix entry".into()));
    }
    Schur::try_new(a.clone(), f64::EPSILON, 100 * a.nrows().max(10))
        .ok_or_else(|| Error::NumericalBreakdown("real Schur iteration did not converge".into()))
}

pub(crate) fn eigenvalues(a: &Matrix) -> Result<Vec<Complex<f64>>> {
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    Ok(schur(a)?.complex_eigenvalues().iter().copied().collect())
}

pub(crate) fn abscissa_of(eigs: &[Complex<f64>]) -> f64 {
    eigs.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max)
}

/// Hurwitz test. `hurwitz` is true iff the spectral abscissa is strictly
/// below `-stability_margin` of the default [`KernelConfig`].
pub fn is_hurwitz(a: &Matrix) -> Result<Stability> {
    is_hurwitz_with(a, &KernelConfig::default())
}

pub fn is_hurwitz_with(a: &Matrix, cfg: &KernelConfig) -> Result<Stability> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "stability test needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let abscissa = abscissa_of(&eigenvalues(a)?);
    Ok(Stability {
        hurwitz: abscissa < -cfg.stability_margin,
        abscissa,
    })
}

/// Symmetric eigendecomposition with eigenvalues sorted descending.
///
/// The input is symmetrized first. Ties keep the order produced by the
/// underlying solver.
pub fn sym_eig(m: &Matrix) -> SymEig {
    let n = m.nrows();
    if n == 0 {
        return SymEig {
            values: DVector::zeros(0),
            vectors: Matrix::zeros(0, 0),
        };
    }
    let eig = SymmetricEigen::new(super::symmetrize(m));
    let mut order: Vec<usize> = (0..n).collect();
    // stable sort: equal eigenvalues keep solver order
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    SymEig { values, vectors }
}
