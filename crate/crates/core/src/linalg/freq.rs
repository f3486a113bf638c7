use nalgebra::{linalg::Hessenberg, Complex};

use super::{CMatrix, KernelConfig, Matrix};
use crate::error::{Error, Result};
use crate::sysmodel::StateSpaceModel;

type C64 = Complex<f64>;

/// Spacing of a [`FrequencyGrid`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridScale {
    Log,
    Linear,
}

/// Strictly increasing list of nonnegative angular frequencies (rad/s).
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    points: Vec<f64>,
    scale: GridScale,
}

impl FrequencyGrid {
    pub fn new(points: Vec<f64>, scale: GridScale) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidParameter("empty frequency grid".into()));
        }
        if points.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidParameter(
                "frequencies must be finite and nonnegative".into(),
            ));
        }
        if points.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::InvalidParameter(
                "frequency grid must be strictly increasing".into(),
            ));
        }
        Ok(Self { points, scale })
    }

    /// `count` points log-spaced between `lo` and `hi` (both > 0), inclusive.
    pub fn logspace(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if !(lo > 0.0 && hi > lo && count >= 2) {
            return Err(Error::InvalidParameter(format!(
                "bad log grid [{lo}, {hi}] x {count}"
            )));
        }
        let (l0, l1) = (lo.log10(), hi.log10());
        let step = (l1 - l0) / (count - 1) as f64;
        let points = (0..count)
            .map(|k| 10f64.powf(l0 + step * k as f64))
            .collect();
        Self::new(points, GridScale::Log)
    }

    pub fn linspace(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if !(lo >= 0.0 && hi > lo && count >= 2) {
            return Err(Error::InvalidParameter(format!(
                "bad linear grid [{lo}, {hi}] x {count}"
            )));
        }
        let step = (hi - lo) / (count - 1) as f64;
        Self::new((0..count).map(|k| lo + step * k as f64).collect(), GridScale::Linear)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn scale(&self) -> GridScale {
        self.scale
    }
}

/// `C (jwI - A)^{-1} B + D`, rejecting numerically singular resolvents.
pub fn freq_response(sys: &StateSpaceModel, omega: f64) -> Result<CMatrix> {
    freq_response_with(sys, omega, &KernelConfig::default())
}

pub fn freq_response_with(sys: &StateSpaceModel, omega: f64, cfg: &KernelConfig) -> Result<CMatrix> {
    let n = sys.order();
    let d = to_complex(sys.d());
    if n == 0 {
        return Ok(d);
    }
    let mut m = to_complex(&(-sys.a()));
    for i in 0..n {
        m[(i, i)] += C64::new(0.0, omega);
    }
    let norm1 = one_norm(&m);
    let lu = m.lu();
    let inv = lu.try_inverse().ok_or(Error::SingularResolvent {
        omega,
        cond: f64::INFINITY,
    })?;
    let cond = norm1 * one_norm(&inv);
    if !cond.is_finite() || cond > cfg.max_resolvent_cond {
        return Err(Error::SingularResolvent { omega, cond });
    }
    let x = inv * to_complex(sys.b());
    Ok(to_complex(sys.c()) * x + d)
}

fn one_norm(m: &CMatrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub(crate) fn to_complex(m: &Matrix) -> CMatrix {
    m.map(|v| C64::new(v, 0.0))
}

/// Largest singular value of a complex matrix.
pub fn sigma_max(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    if m.nrows() == 1 || m.ncols() == 1 {
        return m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    }
    m.clone()
        .singular_values()
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// Repeated frequency-response evaluation of one system.
///
/// `A` is reduced to Hessenberg form once; each evaluation is then an
/// `O(n^2 m)` Hessenberg solve. No conditioning check is performed, so the
/// caller must guarantee `A` has no eigenvalue on the imaginary axis.
#[derive(Debug, Clone)]
pub struct FrequencyEvaluator {
    h: Matrix,
    q: Matrix,
    bq: Matrix,
    cq: Matrix,
    d: Matrix,
}

impl FrequencyEvaluator {
    pub fn new(sys: &StateSpaceModel) -> Self {
        Self::from_parts(sys.a(), sys.b(), sys.c(), sys.d())
    }

    pub fn from_parts(a: &Matrix, b: &Matrix, c: &Matrix, d: &Matrix) -> Self {
        if a.nrows() == 0 {
            return Self {
                h: a.clone(),
                q: a.clone(),
                bq: b.clone(),
                cq: c.clone(),
                d: d.clone(),
            };
        }
        let (q, h) = Hessenberg::new(a.clone()).unpack();
        Self {
            bq: q.transpose() * b,
            cq: c * &q,
            h,
            q,
            d: d.clone(),
        }
    }

    pub fn order(&self) -> usize {
        self.h.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.d.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.d.nrows()
    }

    /// Frequency response at `omega`; `omega = +inf` returns `D`.
    pub fn eval(&self, omega: f64) -> CMatrix {
        let d = to_complex(&self.d);
        if self.order() == 0 || omega.is_infinite() {
            return d;
        }
        let x = self.resolvent_times(omega, &self.bq);
        to_complex(&self.cq) * x + d
    }

    /// `(jwI - H)^{-1} rhs` in Hessenberg coordinates.
    fn resolvent_times(&self, omega: f64, rhs: &Matrix) -> CMatrix {
        let n = self.h.nrows();
        let mut m = to_complex(&(-&self.h));
        for i in 0..n {
            m[(i, i)] += C64::new(0.0, omega);
        }
        let mut x = to_complex(rhs);
        hessenberg_solve(&mut m, &mut x);
        x
    }

    /// `left (jwI - A)^{-1} right` for arbitrary `left`/`right` given in the
    /// original state coordinates, reusing the Hessenberg form.
    pub fn transfer(&self, omega: f64, left: &Matrix, right: &Matrix) -> CMatrix {
        if self.order() == 0 {
            return CMatrix::zeros(left.nrows(), right.ncols());
        }
        let x = self.resolvent_times(omega, &(self.q.transpose() * right));
        to_complex(&(left * &self.q)) * x
    }
}

/// In-place Gaussian elimination on an upper-Hessenberg system with
/// adjacent-row partial pivoting. On return `rhs` holds the solution.
fn hessenberg_solve(m: &mut CMatrix, rhs: &mut CMatrix) {
    let n = m.nrows();
    let k_rhs = rhs.ncols();
    for k in 0..n.saturating_sub(1) {
        if m[(k + 1, k)].norm() > m[(k, k)].norm() {
            m.swap_rows(k, k + 1);
            rhs.swap_rows(k, k + 1);
        }
        let piv = m[(k, k)];
        if piv.norm() == 0.0 {
            continue;
        }
        let f = m[(k + 1, k)] / piv;
        if f.norm() == 0.0 {
            continue;
        }
        m[(k + 1, k)] = C64::new(0.0, 0.0);
        for j in (k + 1)..n {
            let v = m[(k, j)];
            m[(k + 1, j)] -= f * v;
        }
        for j in 0..k_rhs {
            let v = rhs[(k, j)];
            rhs[(k + 1, j)] -= f * v;
        }
    }
    for j in 0..k_rhs {
        for i in (0..n).rev() {
            let mut s = rhs[(i, j)];
            for l in (i + 1)..n {
                s -= m[(i, l)] * rhs[(l, j)];
            }
            rhs[(i, j)] = s / m[(i, i)];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lag() -> StateSpaceModel {
        StateSpaceModel::new(
            Matrix::from_element(1, 1, -1.0),
            Matrix::from_element(1, 1, 1.0),
            Matrix::from_element(1, 1, 1.0),
            Matrix::zeros(1, 1),
        )
        .unwrap()
    }

    #[test]
    fn first_order_lag() {
        let g0 = freq_response(&lag(), 0.0).unwrap();
        assert!((g0[(0, 0)] - C64::new(1.0, 0.0)).norm() < 1e-15);
        let g1 = freq_response(&lag(), 1.0).unwrap();
        let expected = C64::new(1.0, 0.0) / C64::new(1.0, 1.0);
        assert!((g1[(0, 0)] - expected).norm() < 1e-15);
        assert!((g1[(0, 0)].norm() - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn evaluator_agrees_with_direct_solve() {
        let a = Matrix::from_row_slice(
            4,
            4,
            &[-1.0, 2.0, 0.0, 0.3, -2.0, -0.5, 1.0, 0.0, 0.1, 0.0, -3.0, 1.0, 0.0, 0.4, -1.0, -0.2],
        );
        let b = Matrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.5, -0.5]);
        let c = Matrix::from_row_slice(2, 4, &[1.0, 0.0, 0.5, 0.0, 0.0, 1.0, 0.0, 2.0]);
        let d = Matrix::from_row_slice(2, 2, &[0.1, 0.0, 0.0, 0.2]);
        let sys = StateSpaceModel::new(a, b, c, d).unwrap();
        let ev = FrequencyEvaluator::new(&sys);
        for &w in &[0.0, 0.3, 1.0, 2.5, 40.0] {
            let g1 = freq_response(&sys, w).unwrap();
            let g2 = ev.eval(w);
            assert!((g1 - g2).norm() < 1e-12, "w = {w}");
        }
    }

    #[test]
    fn singular_resolvent_detected() {
        let sys = StateSpaceModel::new(
            Matrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
            Matrix::from_row_slice(2, 1, &[0.0, 1.0]),
            Matrix::from_row_slice(1, 2, &[1.0, 0.0]),
            Matrix::zeros(1, 1),
        )
        .unwrap();
        assert!(matches!(
            freq_response(&sys, 1.0),
            Err(Error::SingularResolvent { .. })
        ));
    }

    #[test]
    fn grid_validation() {
        assert!(FrequencyGrid::new(vec![1.0, 1.0], GridScale::Linear).is_err());
        assert!(FrequencyGrid::new(vec![-1.0, 1.0], GridScale::Linear).is_err());
        let g = FrequencyGrid::logspace(1e-2, 1e2, 5).unwrap();
        assert!((g.points()[2] - 1.0).abs() < 1e-12);
        assert_eq!(g.scale(), GridScale::Log);
    }
}
