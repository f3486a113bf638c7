//! Local refinement of reduced models by projected subgradient descent.
//!
//! All reduced-model unknowns are stacked into one static gain
//!
//! ```text
//! Phi = [A_hat B_hat; C_hat D_hat]      ((r + p) x (r + m))
//! ```
//!
//! closed around an error plant `P(s)` whose states are the full closed
//! loop plus a bank of `r` integrators, so that
//! `F(N, G) - F(N, G_hat) = F_l(P, Phi)`. Block-diagonal structure is kept
//! by masking every step with `Psi = [Psi_A Psi_B; Psi_C Psi_D]`.

use nalgebra::Complex;

use crate::error::{Error, Result};
use crate::linalg::{hinf_norm, hinf_parts, is_hurwitz, local_peaks_parts, sigma_max, FrequencyEvaluator, KernelConfig, Matrix};
use crate::network::{close_loop, loop_inverse, ClosedLoop, NetworkMatrix};
use crate::reduction::ReducedModel;
use crate::sysmodel::{BlockDiagonalPlant, OrderVector, StateSpaceModel};

type C64 = Complex<f64>;

/// 0/1 sparsity pattern of `Phi`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMask {
    mask: Matrix,
}

fn fill_blocks(target: &mut Matrix, r0: usize, c0: usize, rows: &[usize], cols: &[usize]) {
    let (mut r, mut c) = (r0, c0);
    for (&nr, &nc) in rows.iter().zip(cols) {
        target.view_mut((r, c), (nr, nc)).fill(1.0);
        r += nr;
        c += nc;
    }
}

impl ProjectionMask {
    /// Mask for reduced orders `r_i` and port counts `m_i`, `p_i`.
    pub fn new(orders: &[usize], inputs: &[usize], outputs: &[usize]) -> Self {
        let r: usize = orders.iter().sum();
        let m: usize = inputs.iter().sum();
        let p: usize = outputs.iter().sum();
        let mut mask = Matrix::zeros(r + p, r + m);
        fill_blocks(&mut mask, 0, 0, orders, orders);
        fill_blocks(&mut mask, 0, r, orders, inputs);
        fill_blocks(&mut mask, r, 0, outputs, orders);
        fill_blocks(&mut mask, r, r, outputs, inputs);
        Self { mask }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.mask
    }

    pub fn shape(&self) -> (usize, usize) {
        self.mask.shape()
    }

    /// True iff every entry outside the pattern is exactly zero.
    pub fn conforms(&self, phi: &Matrix) -> bool {
        phi.shape() == self.mask.shape() && phi.iter().zip(self.mask.iter()).all(|(v, k)| *k != 0.0 || *v == 0.0)
    }
}

/// Hadamard product `g o Psi`.
pub fn project_subgradient(g: &Matrix, mask: &ProjectionMask) -> Result<Matrix> {
    if g.shape() != mask.shape() {
        return Err(Error::DimensionMismatch(format!(
            "subgradient {:?} vs mask {:?}",
            g.shape(),
            mask.shape()
        )));
    }
    Ok(g.component_mul(&mask.mask))
}

/// A gain together with its objective value.
#[derive(Debug, Clone, PartialEq)]
pub struct GainPoint {
    pub phi: Matrix,
    /// `||F_l(P, Phi)||_inf`, `+inf` when the reduced closed loop is unstable.
    pub objective: f64,
    pub stable: bool,
    /// Peak frequency (`NaN` when unstable).
    pub peak_omega: f64,
}

/// The closed error system for one gain, with the pieces the chain rule needs.
struct ClosedError {
    sys: (Matrix, Matrix, Matrix, Matrix),
    // (I - Phi D22)^{-1}
    e: Matrix,
}

/// Error plant `P(s)` of a network and full plant for fixed reduced orders.
#[derive(Debug, Clone)]
pub struct ErrorPlant {
    a_p: Matrix,
    b1: Matrix,
    b2: Matrix,
    c1: Matrix,
    c2: Matrix,
    d11: Matrix,
    d12: Matrix,
    d21: Matrix,
    d22: Matrix,
    n: usize,
    orders: OrderVector,
    inputs: Vec<usize>,
    outputs: Vec<usize>,
    mask: ProjectionMask,
    full_norm: f64,
    closed_loop: ClosedLoop,
}

/// Relative H-infinity tolerance used for objective evaluations.
pub const OBJECTIVE_TOL: f64 = 1e-9;

pub fn build_error_plant(net: &NetworkMatrix, plant: &BlockDiagonalPlant, r: &OrderVector) -> Result<ErrorPlant> {
    r.validate(plant)?;
    let cl = close_loop(plant, net)?;
    if !cl.hurwitz {
        return Err(Error::NotStable { abscissa: cl.abscissa });
    }
    let full_norm = hinf_norm(cl.system(), OBJECTIVE_TOL)?.value;
    let n = cl.order();
    let rt = r.total();
    let (m, p) = (plant.inputs(), plant.outputs());
    let (pe, me) = (net.external_outputs(), net.external_inputs());

    let mut a_p = Matrix::zeros(n + rt, n + rt);
    a_p.view_mut((0, 0), (n, n)).copy_from(cl.a());
    let mut b1 = Matrix::zeros(n + rt, me);
    b1.view_mut((0, 0), (n, me)).copy_from(cl.b());
    let mut b2 = Matrix::zeros(n + rt, rt + p);
    b2.view_mut((n, 0), (rt, rt)).fill_with_identity();
    let mut c1 = Matrix::zeros(pe, n + rt);
    c1.view_mut((0, 0), (pe, n)).copy_from(cl.c());
    let d11 = cl.d() - &net.de;
    let mut d12 = Matrix::zeros(pe, rt + p);
    d12.view_mut((0, rt), (pe, p)).copy_from(&(-&net.df));
    let mut c2 = Matrix::zeros(rt + m, n + rt);
    c2.view_mut((0, n), (rt, rt)).fill_with_identity();
    let mut d21 = Matrix::zeros(rt + m, me);
    d21.view_mut((rt, 0), (m, me)).copy_from(&net.dh);
    let mut d22 = Matrix::zeros(rt + m, rt + p);
    d22.view_mut((rt, rt), (m, p)).copy_from(&net.dk);

    Ok(ErrorPlant {
        a_p,
        b1,
        b2,
        c1,
        c2,
        d11,
        d12,
        d21,
        d22,
        n,
        mask: ProjectionMask::new(&r.0, &plant.input_dims(), &plant.output_dims()),
        orders: r.clone(),
        inputs: plant.input_dims(),
        outputs: plant.output_dims(),
        full_norm,
        closed_loop: cl,
    })
}

impl ErrorPlant {
    pub fn mask(&self) -> &ProjectionMask {
        &self.mask
    }

    pub fn orders(&self) -> &OrderVector {
        &self.orders
    }

    /// `||F(N, G)||_inf`, the scale for the zero-objective test.
    pub fn full_norm(&self) -> f64 {
        self.full_norm
    }

    pub fn closed_loop(&self) -> &ClosedLoop {
        &self.closed_loop
    }

    /// Open-loop `P(s)` as one state-space model with inputs `[w; u_phi]`
    /// and outputs `[z'; y_phi]`.
    pub fn as_state_space(&self) -> Result<StateSpaceModel> {
        let stack_h = |l: &Matrix, r: &Matrix| {
            let mut out = Matrix::zeros(l.nrows(), l.ncols() + r.ncols());
            out.view_mut((0, 0), l.shape()).copy_from(l);
            out.view_mut((0, l.ncols()), r.shape()).copy_from(r);
            out
        };
        let stack_v = |t: &Matrix, b: &Matrix| {
            let mut out = Matrix::zeros(t.nrows() + b.nrows(), t.ncols());
            out.view_mut((0, 0), t.shape()).copy_from(t);
            out.view_mut((t.nrows(), 0), b.shape()).copy_from(b);
            out
        };
        StateSpaceModel::new(
            self.a_p.clone(),
            stack_h(&self.b1, &self.b2),
            stack_v(&self.c1, &self.c2),
            stack_v(&stack_h(&self.d11, &self.d12), &stack_h(&self.d21, &self.d22)),
        )
    }

    /// `Phi` of a reduced model with these orders.
    pub fn encode(&self, reduced: &BlockDiagonalPlant) -> Result<Matrix> {
        if reduced.state_dims() != self.orders.0
            || reduced.input_dims() != self.inputs
            || reduced.output_dims() != self.outputs
        {
            return Err(Error::DimensionMismatch(
                "reduced model does not match the error plant's orders or ports".into(),
            ));
        }
        let (rt, m, p) = (self.orders.total(), reduced.inputs(), reduced.outputs());
        let mut phi = Matrix::zeros(rt + p, rt + m);
        phi.view_mut((0, 0), (rt, rt)).copy_from(reduced.a());
        phi.view_mut((0, rt), (rt, m)).copy_from(reduced.b());
        phi.view_mut((rt, 0), (p, rt)).copy_from(reduced.c());
        phi.view_mut((rt, rt), (p, m)).copy_from(reduced.d());
        Ok(phi)
    }

    /// Block-diagonal reduced plant read back from `Phi`.
    pub fn decode(&self, phi: &Matrix) -> Result<BlockDiagonalPlant> {
        if phi.shape() != self.mask.shape() {
            return Err(Error::DimensionMismatch(format!(
                "gain is {:?}, expected {:?}",
                phi.shape(),
                self.mask.shape()
            )));
        }
        let rt = self.orders.total();
        let (mut ro, mut mo, mut po) = (0, 0, 0);
        let mut subs = Vec::with_capacity(self.orders.0.len());
        for i in 0..self.orders.0.len() {
            let (ri, mi, pi) = (self.orders.0[i], self.inputs[i], self.outputs[i]);
            subs.push(StateSpaceModel::new(
                phi.view((ro, ro), (ri, ri)).into_owned(),
                phi.view((ro, rt + mo), (ri, mi)).into_owned(),
                phi.view((rt + po, ro), (pi, ri)).into_owned(),
                phi.view((rt + po, rt + mo), (pi, mi)).into_owned(),
            )?);
            ro += ri;
            mo += mi;
            po += pi;
        }
        BlockDiagonalPlant::aggregate(subs)
    }

    fn close(&self, phi: &Matrix) -> Result<ClosedError> {
        let e = loop_inverse(&(phi * &self.d22))?;
        let ephi = &e * phi;
        let a = &self.a_p + &self.b2 * &ephi * &self.c2;
        let b = &self.b1 + &self.b2 * &ephi * &self.d21;
        let c = &self.c1 + &self.d12 * &ephi * &self.c2;
        let d = &self.d11 + &self.d12 * &ephi * &self.d21;
        Ok(ClosedError { sys: (a, b, c, d), e })
    }

    /// `F_l(P, Phi)` as a state-space model (possibly unstable).
    pub fn lft(&self, phi: &Matrix) -> Result<StateSpaceModel> {
        let (a, b, c, d) = self.close(phi)?.sys;
        StateSpaceModel::new(a, b, c, d)
    }

    /// Objective at `phi`; `hints` seed the frequency sweep.
    pub fn evaluate(&self, phi: &Matrix, hints: &[f64]) -> Result<GainPoint> {
        let unstable = GainPoint {
            phi: phi.clone(),
            objective: f64::INFINITY,
            stable: false,
            peak_omega: f64::NAN,
        };
        let closed = match self.close(phi) {
            Ok(c) => c,
            Err(Error::IllPosed { .. }) => return Ok(unstable),
            Err(e) => return Err(e),
        };
        let (a, b, c, d) = &closed.sys;
        // the full closed-loop block is stable; only the reduced block can fail
        let n = self.n;
        let rt = self.orders.total();
        let reduced_a = a.view((n, n), (rt, rt)).into_owned();
        match is_hurwitz(&reduced_a) {
            Ok(s) if s.hurwitz => {}
            Ok(_) => return Ok(unstable),
            Err(Error::NumericalBreakdown(_)) => return Ok(unstable),
            Err(e) => return Err(e),
        }
        match hinf_parts(a, b, c, d, OBJECTIVE_TOL, &KernelConfig::default(), hints) {
            Ok(h) => Ok(GainPoint {
                phi: phi.clone(),
                objective: h.value,
                stable: true,
                peak_omega: h.peak_omega,
            }),
            Err(Error::NotStable { .. }) => Ok(unstable),
            Err(e) => Err(e),
        }
    }

    /// Gradient of `sigma_max(T(j omega))` with respect to `Phi` at a fixed
    /// frequency, for the top singular pair.
    fn gradient_at(&self, phi: &Matrix, closed: &ClosedError, omega: f64) -> Matrix {
        let (a, b, c, d) = &closed.sys;
        let e = &closed.e;
        let ephi = e * phi;
        // y_phi = (I - D22 Phi)^{-1} (C2 x + D21 w),  (I - D22 Phi)^{-1} = I + D22 E Phi
        let k = self.d22.nrows();
        let gain = Matrix::identity(k, k) + &self.d22 * &ephi;
        let c_y = &gain * &self.c2;
        let d_yw = &gain * &self.d21;
        let b_l = &self.b2 * e;
        let d_l = &self.d12 * e;
        let to_c = |m: &Matrix| m.map(|v| C64::new(v, 0.0));

        let ev = FrequencyEvaluator::from_parts(a, b, c, d);
        let (t, l, r) = if omega.is_infinite() {
            (to_c(d), to_c(&d_l), to_c(&d_yw))
        } else {
            (
                ev.eval(omega),
                ev.transfer(omega, c, &b_l) + to_c(&d_l),
                ev.transfer(omega, &c_y, b) + to_c(&d_yw),
            )
        };
        let svd = t.svd(true, true);
        let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
        let top = svd.singular_values.imax();
        let u1 = u.column(top).into_owned();
        let v1 = v_t.row(top).adjoint();
        let left = l.adjoint() * u1;
        let right = r * v1;
        Matrix::from_fn(phi.nrows(), phi.ncols(), |i, j| (left[i].conj() * right[j]).re)
    }
}

/// One Clarke subgradient of `||F_l(P, Phi)||_inf` at the peak frequency.
pub fn hinf_subgradient(ep: &ErrorPlant, pt: &GainPoint) -> Result<Matrix> {
    if !pt.stable {
        return Err(Error::UnstableIterate);
    }
    if pt.objective <= 1e-10 * ep.full_norm {
        return Err(Error::ObjectiveAtZero);
    }
    let closed = ep.close(&pt.phi)?;
    Ok(ep.gradient_at(&pt.phi, &closed, pt.peak_omega))
}

/// Projected descent direction; near-tied peaks are merged by the
/// minimum-norm convex combination of their projected subgradients.
fn descent_direction(ep: &ErrorPlant, pt: &GainPoint, peak_gap: f64) -> Result<Matrix> {
    let g1 = project_subgradient(&hinf_subgradient(ep, pt)?, &ep.mask)?;
    if pt.peak_omega.is_infinite() {
        return Ok(g1);
    }
    let closed = ep.close(&pt.phi)?;
    let (a, b, c, d) = &closed.sys;
    let w0 = pt.peak_omega;
    let second = local_peaks_parts(a, b, c, d, &[w0])?
        .into_iter()
        .filter(|(w, _)| (w - w0).abs() > 1e-6 * w0.max(1.0))
        .find(|(_, v)| *v >= (1.0 - peak_gap) * pt.objective);
    let dinf = if d.is_empty() { 0.0 } else { sigma_max(&d.map(|v| C64::new(v, 0.0))) };
    let second = second.or_else(|| (dinf >= (1.0 - peak_gap) * pt.objective).then_some((f64::INFINITY, dinf)));
    let Some((w2, _)) = second else {
        return Ok(g1);
    };
    let g2 = project_subgradient(&ep.gradient_at(&pt.phi, &closed, w2), &ep.mask)?;
    let diff = &g1 - &g2;
    let dd = diff.norm_squared();
    if dd == 0.0 {
        return Ok(g1);
    }
    let theta = ((-&diff).dot(&g2) / dd).clamp(0.0, 1.0);
    Ok(&g1 * theta + &g2 * (1.0 - theta))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentOptions {
    /// Relative improvement below which a step counts as stalled.
    pub tol: f64,
    /// Consecutive stalled steps before stopping.
    pub patience: usize,
    pub max_iter: usize,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    pub max_halvings: usize,
    /// Relative value gap under which two peaks are treated as tied.
    pub peak_gap: f64,
}

impl Default for DescentOptions {
    fn default() -> Self {
        Self {
            tol: 1e-5,
            patience: 5,
            max_iter: 300,
            armijo: 1e-4,
            max_halvings: 30,
            peak_gap: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Relative improvement stayed below `tol` for `patience` steps.
    Stalled,
    MaxIter,
    /// No step passed the Armijo test.
    LineSearch,
    /// The objective is zero up to rounding.
    ZeroObjective,
    /// The projected subgradient vanished.
    ZeroDirection,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Termination::Stalled => "stalled",
            Termination::MaxIter => "max-iter",
            Termination::LineSearch => "line-search",
            Termination::ZeroObjective => "zero-objective",
            Termination::ZeroDirection => "zero-direction",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescentReport {
    /// Objective of the initial point and of every accepted step.
    pub history: Vec<f64>,
    pub termination: Termination,
    pub final_point: GainPoint,
    pub iterations: usize,
    pub evaluations: usize,
}

impl DescentReport {
    pub fn accepted_steps(&self) -> usize {
        self.history.len() - 1
    }
}

/// Projected subgradient descent on the closed-loop error, from `init`.
pub fn improve(ep: &ErrorPlant, init: &ReducedModel, opts: &DescentOptions) -> Result<(ReducedModel, DescentReport)> {
    let phi0 = ep.encode(&init.plant)?;
    let mut pt = ep.evaluate(&phi0, &[])?;
    let mut evaluations = 1;
    if !pt.stable {
        return Err(Error::UnstableInit {
            orders: init.orders.0.clone(),
        });
    }
    let mut history = vec![pt.objective];
    let mut termination = Termination::MaxIter;
    let mut iterations = 0;
    let mut prev: Option<(Matrix, Matrix)> = None;
    let mut last_step = 0.0;
    let mut stalled = 0;

    while iterations < opts.max_iter {
        let g = match descent_direction(ep, &pt, opts.peak_gap) {
            Ok(g) => g,
            Err(Error::ObjectiveAtZero) => {
                termination = Termination::ZeroObjective;
                break;
            }
            Err(e) => return Err(e),
        };
        let gn2 = g.norm_squared();
        if gn2 == 0.0 || !gn2.is_finite() {
            termination = Termination::ZeroDirection;
            break;
        }
        iterations += 1;
        let mut step = match &prev {
            None => 1e-2 * pt.phi.norm().max(1.0) / gn2.sqrt(),
            Some((phi_old, g_old)) => {
                let s = &pt.phi - phi_old;
                let y = &g - g_old;
                let sy = s.dot(&y);
                if sy > 0.0 {
                    s.norm_squared() / sy
                } else {
                    2.0 * last_step
                }
            }
        };
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let cand_phi = &pt.phi - &g * step;
            let cand = ep.evaluate(&cand_phi, &[pt.peak_omega])?;
            evaluations += 1;
            if cand.objective <= pt.objective - opts.armijo * step * gn2 {
                accepted = Some(cand);
                break;
            }
            step *= 0.5;
        }
        let Some(cand) = accepted else {
            termination = Termination::LineSearch;
            break;
        };
        assert!(ep.mask.conforms(&cand.phi), "iterate left the block-diagonal pattern");
        let improvement = (pt.objective - cand.objective) / pt.objective;
        prev = Some((pt.phi.clone(), g));
        last_step = step;
        pt = cand;
        history.push(pt.objective);
        if improvement < opts.tol {
            stalled += 1;
            if stalled >= opts.patience {
                termination = Termination::Stalled;
                break;
            }
        } else {
            stalled = 0;
        }
    }

    let mut plant = ep.decode(&pt.phi)?;
    // keep labels of the seed subsystems
    let labelled: Vec<StateSpaceModel> = plant
        .subsystems()
        .iter()
        .zip(init.plant.subsystems())
        .map(|(s, t)| s.clone().with_label(t.label.clone()))
        .collect();
    plant = BlockDiagonalPlant::aggregate(labelled)?;
    let reduced = ReducedModel {
        plant,
        orders: init.orders.clone(),
        method: init.method,
        kind: init.kind,
        error: Some(pt.objective),
        warnings: init.warnings.clone(),
    };
    Ok((
        reduced,
        DescentReport {
            history,
            termination,
            final_point: pt,
            iterations,
            evaluations,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_blocks_for_two_subsystems() {
        let mask = ProjectionMask::new(&[2, 1], &[2, 1], &[1, 1]);
        let k = mask.matrix();
        assert_eq!(k.shape(), (3 + 2, 3 + 3));
        #[rustfmt::skip]
        let expected = Matrix::from_row_slice(5, 6, &[
            1., 1., 0., 1., 1., 0.,
            1., 1., 0., 1., 1., 0.,
            0., 0., 1., 0., 0., 1.,
            1., 1., 0., 1., 1., 0.,
            0., 0., 1., 0., 0., 1.,
        ]);
        assert_eq!(k, &expected);
    }

    #[test]
    fn projection_is_idempotent_and_checks_shape() {
        let mask = ProjectionMask::new(&[1, 1], &[1, 1], &[1, 1]);
        let g = Matrix::from_fn(4, 4, |i, j| (i * 4 + j) as f64 + 1.0);
        let once = project_subgradient(&g, &mask).unwrap();
        assert_eq!(project_subgradient(&once, &mask).unwrap(), once);
        assert!(mask.conforms(&once));
        assert!(project_subgradient(&Matrix::zeros(3, 4), &mask).is_err());
    }
}
