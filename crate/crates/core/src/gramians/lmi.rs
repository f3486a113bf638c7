//! Small log-barrier interior-point solver for block-diagonal Lyapunov LMIs:
//!
//! ```text
//! minimize trace(P)  s.t.  A P + P A^T + W <= 0,  P = diag(P_1, ..., P_q) >= 0
//! ```
//!
//! Phase I minimizes `s` subject to `A P + P A^T < s I`, `P_i > 0`,
//! `trace(P) = 1`; a negative optimum yields a strictly feasible start for
//! phase II after rescaling. Both phases use damped Newton centering on the
//! barrier with the parameter schedule `t <- 10 t`.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{is_hurwitz, sym_eig, Matrix};

/// Which Gramian inequality the problem encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LmiSide {
    /// `A P + P A^T + B B^T <= 0`
    Controllability,
    /// `A^T Q + Q A + C^T C <= 0`
    Observability,
}

/// Data of one block-diagonal Lyapunov LMI.
#[derive(Debug, Clone)]
pub struct LmiProblem {
    a: Matrix,
    w: Matrix,
    partition: Vec<usize>,
    side: LmiSide,
}

impl LmiProblem {
    /// `a` is the closed-loop state matrix as given; the observability side
    /// transposes it internally. `w` is `B B^T` or `C^T C` respectively.
    pub fn new(a: Matrix, w: Matrix, partition: Vec<usize>, side: LmiSide) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || w.shape() != (n, n) {
            return Err(Error::DimensionMismatch(format!(
                "LMI data: A is {:?}, W is {:?}",
                a.shape(),
                w.shape()
            )));
        }
        if partition.iter().sum::<usize>() != n {
            return Err(Error::DimensionMismatch(format!(
                "partition {partition:?} does not cover {n} states"
            )));
        }
        let stab = is_hurwitz(&a)?;
        if !stab.hurwitz {
            return Err(Error::NotStable { abscissa: stab.abscissa });
        }
        Ok(Self { a, w, partition, side })
    }

    pub fn side(&self) -> LmiSide {
        self.side
    }
    pub fn partition(&self) -> &[usize] {
        &self.partition
    }

    /// State matrix in the `A X + X A^T` orientation.
    fn oriented_a(&self) -> Matrix {
        match self.side {
            LmiSide::Controllability => self.a.clone(),
            LmiSide::Observability => self.a.transpose(),
        }
    }
}

/// Solver settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmiOptions {
    /// Accepted `lambda_max` of the LMI residual, relative to `max(1, ||W||)`.
    pub residual_tol: f64,
    /// Phase II stops once the barrier gap `m / t` drops below
    /// `gap_per_state * n` (on the normalized problem).
    pub gap_per_state: f64,
    /// Total Newton step budget over both phases.
    pub max_newton: usize,
}

impl Default for LmiOptions {
    fn default() -> Self {
        Self {
            residual_tol: 1e-7,
            gap_per_state: 1e-6,
            max_newton: 3000,
        }
    }
}

/// Solution of [`solve_block_lmi`].
#[derive(Debug, Clone)]
pub struct LmiSolution {
    pub blocks: Vec<Matrix>,
    /// `lambda_max(A X + X A^T + W)` in original units.
    pub residual: f64,
    /// Final barrier gap bound `m / t`, in original units of `trace`.
    pub gap: f64,
    pub newton_steps: usize,
    /// False when the Newton budget ran out in phase II (the point is still feasible).
    pub converged: bool,
}

impl LmiSolution {
    pub fn full(&self) -> Matrix {
        let refs: Vec<&Matrix> = self.blocks.iter().collect();
        crate::linalg::block_diag(&refs)
    }
    pub fn trace(&self) -> f64 {
        self.blocks.iter().map(|b| b.trace()).sum()
    }
}

// `F(y) = F0 + sum_k y_k F_k > 0`, with the terms sparse in the variables.
struct Constraint {
    f0: Matrix,
    terms: Vec<(usize, Matrix)>,
}

impl Constraint {
    fn value(&self, y: &DVector<f64>) -> Matrix {
        let mut f = self.f0.clone();
        for (k, fk) in &self.terms {
            if y[*k] != 0.0 {
                f += fk * y[*k];
            }
        }
        f
    }
}

struct Barrier {
    constraints: Vec<Constraint>,
    cost: DVector<f64>,
    // single equality a^T y = const, kept by the Newton steps
    equality: Option<DVector<f64>>,
}

struct Local {
    f: f64,
    g: DVector<f64>,
    h: Matrix,
}

fn chol_logdet_inv(f: Matrix, want_inv: bool) -> Option<(f64, Option<Matrix>)> {
    if !f.iter().all(|v| v.is_finite()) {
        return None;
    }
    let ch = f.cholesky()?;
    let logdet = 2.0 * ch.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let inv = want_inv.then(|| ch.inverse());
    Some((logdet, inv))
}

impl Barrier {
    fn nvars(&self) -> usize {
        self.cost.len()
    }

    fn barrier_dim(&self) -> f64 {
        self.constraints.iter().map(|c| c.f0.nrows()).sum::<usize>() as f64
    }

    fn value(&self, y: &DVector<f64>, t: f64) -> Option<f64> {
        let mut f = t * self.cost.dot(y);
        for c in &self.constraints {
            let (logdet, _) = chol_logdet_inv(c.value(y), false)?;
            f -= logdet;
        }
        Some(f)
    }

    fn local(&self, y: &DVector<f64>, t: f64) -> Option<Local> {
        let nv = self.nvars();
        let mut f = t * self.cost.dot(y);
        let mut g = &self.cost * t;
        let mut h = Matrix::zeros(nv, nv);
        for c in &self.constraints {
            let (logdet, inv) = chol_logdet_inv(c.value(y), true)?;
            let inv = inv.unwrap();
            f -= logdet;
            let m = c.f0.nrows();
            // rows: vec(F^{-1} F_k), and its transpose for tr(M_k M_l)
            let mut mk = Matrix::zeros(c.terms.len(), m * m);
            let mut mkt = Matrix::zeros(c.terms.len(), m * m);
            for (row, (k, fk)) in c.terms.iter().enumerate() {
                let prod = &inv * fk;
                g[*k] -= prod.trace();
                for (idx, v) in prod.iter().enumerate() {
                    mk[(row, idx)] = *v;
                }
                for (idx, v) in prod.transpose().iter().enumerate() {
                    mkt[(row, idx)] = *v;
                }
            }
            let local_h = &mk * mkt.transpose();
            for (r, (k, _)) in c.terms.iter().enumerate() {
                for (s, (l, _)) in c.terms.iter().enumerate() {
                    h[(*k, *l)] += local_h[(r, s)];
                }
            }
        }
        h = (&h + h.transpose()) * 0.5;
        Some(Local { f, g, h })
    }

    fn newton_direction(&self, loc: &Local) -> Option<DVector<f64>> {
        let nv = self.nvars();
        match &self.equality {
            None => {
                let neg_g = -&loc.g;
                if let Some(ch) = loc.h.clone().cholesky() {
                    return Some(ch.solve(&neg_g));
                }
                loc.h.clone().lu().solve(&neg_g)
            }
            Some(a) => {
                let mut kkt = Matrix::zeros(nv + 1, nv + 1);
                kkt.view_mut((0, 0), (nv, nv)).copy_from(&loc.h);
                for k in 0..nv {
                    kkt[(k, nv)] = a[k];
                    kkt[(nv, k)] = a[k];
                }
                let mut rhs = DVector::zeros(nv + 1);
                rhs.rows_mut(0, nv).copy_from(&(-&loc.g));
                let sol = kkt.lu().solve(&rhs)?;
                Some(sol.rows(0, nv).into_owned())
            }
        }
    }

    /// Damped Newton centering at fixed `t`. Returns early (true) as soon as
    /// `stop` holds for an accepted iterate.
    fn center(
        &self,
        y: &mut DVector<f64>,
        t: f64,
        budget: &mut usize,
        stop: &dyn Fn(&DVector<f64>) -> bool,
    ) -> Result<bool> {
        loop {
            if *budget == 0 {
                return Ok(false);
            }
            let loc = self
                .local(y, t)
                .ok_or_else(|| Error::NumericalBreakdown("barrier iterate left the feasible set".into()))?;
            let dy = self
                .newton_direction(&loc)
                .ok_or_else(|| Error::NumericalBreakdown("singular Newton system".into()))?;
            if !dy.iter().all(|v| v.is_finite()) {
                return Err(Error::NumericalBreakdown("non-finite Newton step".into()));
            }
            let slope = loc.g.dot(&dy);
            let decrement = -slope;
            if decrement * 0.5 <= 1e-10 {
                return Ok(false);
            }
            *budget -= 1;
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let trial = &*y + &dy * alpha;
                if let Some(f_new) = self.value(&trial, t) {
                    if f_new <= loc.f + 0.01 * alpha * slope {
                        *y = trial;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                // no progress representable at this t: treat as centred
                return Ok(false);
            }
            if stop(y) {
                return Ok(true);
            }
        }
    }
}

struct Basis {
    // (block, i, j) with global offsets, i <= j
    vars: Vec<(usize, usize, usize)>,
    offsets: Vec<usize>,
    partition: Vec<usize>,
}

impl Basis {
    fn new(partition: &[usize]) -> Self {
        let mut vars = Vec::new();
        let mut offsets = Vec::with_capacity(partition.len());
        let mut off = 0;
        for (b, &nb) in partition.iter().enumerate() {
            offsets.push(off);
            for i in 0..nb {
                for j in i..nb {
                    vars.push((b, off + i, off + j));
                }
            }
            off += nb;
        }
        Self {
            vars,
            offsets,
            partition: partition.to_vec(),
        }
    }

    fn unit(&self, k: usize, n: usize) -> Matrix {
        let (_, i, j) = self.vars[k];
        let mut e = Matrix::zeros(n, n);
        e[(i, j)] = 1.0;
        e[(j, i)] = 1.0;
        e
    }

    fn local_unit(&self, k: usize) -> Matrix {
        let (b, i, j) = self.vars[k];
        let (o, nb) = (self.offsets[b], self.partition[b]);
        let mut e = Matrix::zeros(nb, nb);
        e[(i - o, j - o)] = 1.0;
        e[(j - o, i - o)] = 1.0;
        e
    }

    fn assemble(&self, y: &DVector<f64>, n: usize) -> Matrix {
        let mut p = Matrix::zeros(n, n);
        for (k, &(_, i, j)) in self.vars.iter().enumerate() {
            p[(i, j)] = y[k];
            p[(j, i)] = y[k];
        }
        p
    }

    fn blocks(&self, p: &Matrix) -> Vec<Matrix> {
        self.partition
            .iter()
            .zip(&self.offsets)
            .map(|(&nb, &o)| p.view((o, o), (nb, nb)).into_owned())
            .collect()
    }

    fn scaled_identity(&self, scale: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.vars.len(),
            self.vars.iter().map(|&(_, i, j)| if i == j { scale } else { 0.0 }),
        )
    }
}

fn lambda_max(m: &Matrix) -> f64 {
    if m.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    sym_eig(m).values[0]
}

fn lambda_min(m: &Matrix) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    let e = sym_eig(m);
    e.values[e.values.len() - 1]
}

fn spectral_norm(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().max()
}

/// Solve the trace-minimizing block-diagonal LMI.
///
/// Returns [`Error::Infeasible`] carrying the phase I optimum when no
/// strictly feasible block-diagonal point exists.
pub fn solve_block_lmi(prob: &LmiProblem, opts: &LmiOptions) -> Result<LmiSolution> {
    let a_raw = prob.oriented_a();
    let n = a_raw.nrows();
    let basis = Basis::new(&prob.partition);
    let w_norm = spectral_norm(&prob.w);
    let a_norm = spectral_norm(&a_raw);
    if n == 0 || w_norm == 0.0 {
        return Ok(LmiSolution {
            blocks: prob.partition.iter().map(|&k| Matrix::zeros(k, k)).collect(),
            residual: lambda_max(&prob.w),
            gap: 0.0,
            newton_steps: 0,
            converged: true,
        });
    }
    // normalized data: a * (A_n P_n + P_n A_n^T) + w W_n with P = (w / a) P_n
    let a = &a_raw / a_norm;
    let w = &prob.w / w_norm;
    let delta = 1e-9;
    let nv = basis.vars.len();
    let lyap_terms: Vec<(usize, Matrix)> = (0..nv)
        .map(|k| {
            let e = basis.unit(k, n);
            (k, &a * &e + &e * a.transpose())
        })
        .collect();
    let block_terms = |b: usize| -> Vec<(usize, Matrix)> {
        (0..nv)
            .filter(|&k| basis.vars[k].0 == b)
            .map(|k| (k, basis.local_unit(k)))
            .collect()
    };
    let mut budget = opts.max_newton;

    // ---- phase I over (y, s)
    let s_idx = nv;
    let mut c1_terms: Vec<(usize, Matrix)> = lyap_terms.iter().map(|(k, l)| (*k, -l)).collect();
    c1_terms.push((s_idx, Matrix::identity(n, n)));
    let mut phase1 = vec![Constraint {
        f0: Matrix::zeros(n, n),
        terms: c1_terms,
    }];
    for b in 0..prob.partition.len() {
        let nb = prob.partition[b];
        if nb > 0 {
            phase1.push(Constraint {
                f0: Matrix::zeros(nb, nb),
                terms: block_terms(b),
            });
        }
    }
    let mut cost = DVector::zeros(nv + 1);
    cost[s_idx] = 1.0;
    let mut eq = DVector::zeros(nv + 1);
    for (k, &(_, i, j)) in basis.vars.iter().enumerate() {
        if i == j {
            eq[k] = 1.0;
        }
    }
    let b1 = Barrier {
        constraints: phase1,
        cost,
        equality: Some(eq),
    };
    let y0 = basis.scaled_identity(1.0 / n as f64);
    let p0 = basis.assemble(&y0, n);
    let s0 = lambda_max(&(&a * &p0 + &p0 * a.transpose())) + 1.0;
    let mut z = DVector::zeros(nv + 1);
    z.rows_mut(0, nv).copy_from(&y0);
    z[s_idx] = s0;
    let m1 = b1.barrier_dim();
    let mut t = 1.0;
    let negative = |z: &DVector<f64>| z[s_idx] < 0.0;
    let mut found = negative(&z);
    while !found {
        found = b1.center(&mut z, t, &mut budget, &negative)?;
        if found || m1 / t < 1e-10 || budget == 0 {
            break;
        }
        t *= 10.0;
    }
    if !found {
        return Err(Error::Infeasible {
            phase1_objective: z[s_idx],
        });
    }

    // ---- rescale into the phase II interior
    let s = z[s_idx];
    let y_feas = z.rows(0, nv).into_owned();
    let p_feas = basis.assemble(&y_feas, n);
    let min_block = basis
        .blocks(&p_feas)
        .iter()
        .map(lambda_min)
        .fold(f64::INFINITY, f64::min);
    let mut scale = (2.0 * (lambda_max(&w) + delta) / s.abs()).max(2.0 * delta / min_block);

    let mut phase2 = vec![Constraint {
        f0: -&w - Matrix::identity(n, n) * delta,
        terms: lyap_terms.iter().map(|(k, l)| (*k, -l)).collect(),
    }];
    for b in 0..prob.partition.len() {
        let nb = prob.partition[b];
        if nb > 0 {
            phase2.push(Constraint {
                f0: -Matrix::identity(nb, nb) * delta,
                terms: block_terms(b),
            });
        }
    }
    let b2 = Barrier {
        constraints: phase2,
        cost: basis.scaled_identity(1.0),
        equality: None,
    };
    let mut y = &y_feas * scale;
    let mut tries = 0;
    while b2.value(&y, 1.0).is_none() {
        tries += 1;
        if tries > 20 {
            return Err(Error::NumericalBreakdown("could not enter the phase II interior".into()));
        }
        scale *= 2.0;
        y = &y_feas * scale;
    }
    let m2 = b2.barrier_dim();
    let gap_target = opts.gap_per_state * n as f64;
    let mut t = m2 / b2.cost.dot(&y).max(1e-12);
    let never = |_: &DVector<f64>| false;
    let mut converged = false;
    loop {
        b2.center(&mut y, t, &mut budget, &never)?;
        if m2 / t < gap_target {
            converged = true;
            break;
        }
        if budget == 0 {
            break;
        }
        t *= 10.0;
    }

    // ---- back to original units
    let p = basis.assemble(&y, n) * (w_norm / a_norm);
    let residual = lambda_max(&(&a_raw * &p + &p * a_raw.transpose() + &prob.w));
    if !(residual <= opts.residual_tol * w_norm.max(1.0)) {
        return Err(Error::NumericalBreakdown(format!(
            "LMI residual {residual:e} above tolerance"
        )));
    }
    Ok(LmiSolution {
        blocks: basis.blocks(&p),
        residual,
        gap: m2 / t * w_norm / a_norm,
        newton_steps: opts.max_newton - budget,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::solve_lyapunov;

    fn m(rows: usize, cols: usize, v: &[f64]) -> Matrix {
        Matrix::from_row_slice(rows, cols, v)
    }

    #[test]
    fn scalar_lmi_picks_smallest_feasible() {
        let prob = LmiProblem::new(m(1, 1, &[-1.0]), m(1, 1, &[1.0]), vec![1], LmiSide::Controllability).unwrap();
        let sol = solve_block_lmi(&prob, &LmiOptions::default()).unwrap();
        assert!((sol.blocks[0][(0, 0)] - 0.5).abs() < 1e-5, "{:?}", sol.blocks);
        assert!(sol.residual <= 1e-7);
    }

    #[test]
    fn full_block_matches_lyapunov() {
        let a = m(3, 3, &[-2.0, 1.0, 0.0, -1.0, -3.0, 0.5, 0.3, 0.0, -1.5]);
        let b = m(3, 2, &[1.0, 0.0, 0.5, 1.0, -1.0, 0.2]);
        let w = &b * b.transpose();
        let x = solve_lyapunov(&a, &w).unwrap();
        let prob = LmiProblem::new(a, w, vec![3], LmiSide::Controllability).unwrap();
        let opts = LmiOptions {
            gap_per_state: 1e-10,
            ..Default::default()
        };
        let sol = solve_block_lmi(&prob, &opts).unwrap();
        let err = (sol.full() - &x).norm() / x.norm();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn diagonal_blocks_of_unstable_diagonal_are_infeasible() {
        // Hurwitz, but a11 > 0 rules out any diagonal P
        let a = m(2, 2, &[1.0, 3.0, -3.0, -2.0]);
        let prob = LmiProblem::new(a, Matrix::identity(2, 2), vec![1, 1], LmiSide::Controllability).unwrap();
        match solve_block_lmi(&prob, &LmiOptions::default()) {
            Err(Error::Infeasible { phase1_objective }) => assert!(phase1_objective > 0.0),
            other => panic!("expected Infeasible, got {other:?}"),
        }
    }

    #[test]
    fn unstable_matrix_rejected() {
        let r = LmiProblem::new(m(1, 1, &[1.0]), m(1, 1, &[1.0]), vec![1], LmiSide::Controllability);
        assert!(matches!(r, Err(Error::NotStable { .. })));
    }

    #[test]
    fn observability_side_transposes() {
        let a = m(2, 2, &[-1.0, 5.0, 0.0, -2.0]);
        let c = m(1, 2, &[1.0, 1.0]);
        let w = c.transpose() * &c;
        let q = solve_lyapunov(&a.transpose(), &w).unwrap();
        let prob = LmiProblem::new(a, w, vec![2], LmiSide::Observability).unwrap();
        let opts = LmiOptions {
            gap_per_state: 1e-10,
            ..Default::default()
        };
        let sol = solve_block_lmi(&prob, &opts).unwrap();
        assert!((sol.full() - &q).norm() / q.norm() < 1e-6);
    }
}
