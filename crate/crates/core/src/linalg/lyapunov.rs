//! Continuous Lyapunov equation `A X + X A^T + W = 0`, Bartels-Stewart on the
//! real Schur form of `A`.

use nalgebra::{Dyn, LU};

use super::eig::{abscissa_of, schur};
use super::{symmetrize, KernelConfig, Matrix};
use crate::error::{Error, Result};

/// Solve `A X + X A^T + W = 0` for Hurwitz `A` and symmetric `W`.
pub fn solve_lyapunov(a: &Matrix, w: &Matrix) -> Result<Matrix> {
    solve_lyapunov_with(a, w, &KernelConfig::default())
}

pub fn solve_lyapunov_with(a: &Matrix, w: &Matrix, cfg: &KernelConfig) -> Result<Matrix> {
    let n = a.nrows();
    if a.ncols() != n || w.nrows() != n || w.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "lyapunov: A is {}x{}, W is {}x{}",
            a.nrows(),
            a.ncols(),
            w.nrows(),
            w.ncols()
        )));
    }
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    let sch = schur(a)?;
    let eigs: Vec<_> = sch.complex_eigenvalues().iter().copied().collect();
    let abscissa = abscissa_of(&eigs);
    if abscissa >= -cfg.stability_margin {
        return Err(Error::NotStable { abscissa });
    }
    let (u, t) = sch.unpack();
    let rhs = -(u.transpose() * symmetrize(w) * &u);
    let y = solve_quasi_triangular(&t, &rhs)?;
    Ok(symmetrize(&(&u * y * u.transpose())))
}

/// Diagonal blocks (offset, size) of a real quasi-upper-triangular matrix.
fn diagonal_blocks(t: &Matrix) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let mut blocks = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            blocks.push((i, 2));
            i += 2;
        } else {
            blocks.push((i, 1));
            i += 1;
        }
    }
    blocks
}

/// Solve `T Y + Y T^T = C` with `T` quasi-upper-triangular.
///
/// Blocks are resolved bottom-right to top-left; each step is a Sylvester
/// equation of size at most 2x2 solved through its Kronecker form.
fn solve_quasi_triangular(t: &Matrix, c: &Matrix) -> Result<Matrix> {
    let n = t.nrows();
    let blocks = diagonal_blocks(t);
    let mut y = Matrix::zeros(n, n);

    for &(rj, sj) in blocks.iter().rev() {
        let tail_j = rj + sj;
        for &(ri, si) in blocks.iter().rev() {
            let tail_i = ri + si;
            let mut rhs = c.view((ri, rj), (si, sj)).clone_owned();
            if tail_i < n {
                rhs -= t.view((ri, tail_i), (si, n - tail_i)) * y.view((tail_i, rj), (n - tail_i, sj));
            }
            if tail_j < n {
                rhs -= y.view((ri, tail_j), (si, n - tail_j))
                    * t.view((rj, tail_j), (sj, n - tail_j)).transpose();
            }
            let tii = t.view((ri, ri), (si, si));
            let tjj = t.view((rj, rj), (sj, sj));
            // vec(Tii Y + Y Tjj^T) = (I (x) Tii + Tjj (x) I) vec(Y), column-major vec
            let k = si * sj;
            let mut kron = Matrix::zeros(k, k);
            for q in 0..sj {
                for p in 0..si {
                    let row = q * si + p;
                    for p2 in 0..si {
                        kron[(row, q * si + p2)] += tii[(p, p2)];
                    }
                    for q2 in 0..sj {
                        kron[(row, q2 * si + p)] += tjj[(q, q2)];
                    }
                }
            }
            let b = nalgebra::DVector::from_iterator(k, rhs.iter().copied());
            let lu: LU<f64, Dyn, Dyn> = kron.lu();
            let sol = lu.solve(&b).ok_or_else(|| {
                Error::NumericalBreakdown("Lyapunov block system is singular".into())
            })?;
            y.view_mut((ri, rj), (si, sj))
                .copy_from_slice(sol.as_slice());
        }
    }
    Ok(y)
}
