//! Per-subsystem balancing, balanced truncation, singular perturbation,
//! the tail-sum error bound and order suggestions.

use crate::error::{Error, Result};
use crate::gramians::{generalized_gramians, structured_gramians, GramianKind, GramianPair, LmiOptions};
use crate::linalg::{sym_eig, Matrix};
use crate::network::{close_loop, closed_loop_error, NetworkMatrix};
use crate::sysmodel::{BlockDiagonalPlant, OrderVector, StateSpaceModel};

/// A Gramian block whose eigenvalue ratio is below this cannot be balanced.
pub const DEGENERATE_RATIO: f64 = 1e-12;
/// `A_22` blocks with a larger condition number are rejected by singular perturbation.
pub const MAX_FAST_COND: f64 = 1e12;
pub const DEFAULT_DROP_RATIO: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReductionMethod {
    Truncation,
    Perturbation,
}

impl std::fmt::Display for ReductionMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ReductionMethod::Truncation => "truncation",
            ReductionMethod::Perturbation => "perturbation",
        })
    }
}

/// One balanced subsystem: `x_bar = T x`.
#[derive(Debug, Clone, PartialEq)]
pub struct BalancedSubsystem {
    pub t: Matrix,
    pub t_inv: Matrix,
    /// Structured Hankel singular values, nonincreasing.
    pub sigma: Vec<f64>,
    pub system: StateSpaceModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BalancedRealization {
    pub subsystems: Vec<BalancedSubsystem>,
    pub kind: GramianKind,
    pub warnings: Vec<String>,
}

impl BalancedRealization {
    pub fn state_dims(&self) -> Vec<usize> {
        self.subsystems.iter().map(|s| s.sigma.len()).collect()
    }

    pub fn hankel_values(&self) -> Vec<&[f64]> {
        self.subsystems.iter().map(|s| s.sigma.as_slice()).collect()
    }

    fn check_orders(&self, r: &OrderVector) -> Result<()> {
        let dims = self.state_dims();
        if r.0.len() != dims.len() {
            return Err(Error::InvalidOrder(format!(
                "{} orders given for {} subsystems",
                r.0.len(),
                dims.len()
            )));
        }
        for (i, (&ri, &ni)) in r.0.iter().zip(&dims).enumerate() {
            if ri > ni {
                return Err(Error::InvalidOrder(format!(
                    "order {ri} exceeds state dimension {ni} of subsystem {}",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    fn near_singular_warnings(&self, r: &OrderVector) -> Vec<String> {
        let mut out = Vec::new();
        for (i, (s, &ri)) in self.subsystems.iter().zip(&r.0).enumerate() {
            if let Some(&first) = s.sigma.first() {
                if s.sigma[..ri].iter().any(|&v| v < 1e-12 * first) {
                    out.push(format!(
                        "NearSingularBalance: subsystem {} keeps Hankel values below 1e-12 of the largest",
                        i + 1
                    ));
                }
            }
        }
        out
    }
}

/// Reduced subsystems together with how they were obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedModel {
    pub plant: BlockDiagonalPlant,
    pub orders: OrderVector,
    pub method: ReductionMethod,
    pub kind: GramianKind,
    /// Closed-loop H-infinity error, when evaluated.
    pub error: Option<f64>,
    pub warnings: Vec<String>,
}

impl ReducedModel {
    /// Measure `||F(N, G) - F(N, G_hat)||_inf` and store it.
    pub fn evaluate(&mut self, net: &NetworkMatrix, full: &BlockDiagonalPlant, rel_tol: f64) -> Result<f64> {
        let e = closed_loop_error(net, full, &self.plant, rel_tol)?;
        self.error = Some(e);
        Ok(e)
    }
}

/// `2 * sum_i sum_{k > r_i} sigma_{i,k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorBound {
    pub value: f64,
    pub tails: Vec<f64>,
    /// Set when the Hankel values come from structured (extracted)
    /// Gramians, for which the bound is not guaranteed.
    pub heuristic: bool,
}

/// Square factor `L` with `X = L L^T`; eigen fallback for semidefinite blocks.
fn psd_factor(x: &Matrix) -> Matrix {
    let sym = (x + x.transpose()) * 0.5;
    if let Some(ch) = sym.clone().cholesky() {
        return ch.l();
    }
    let e = sym_eig(&sym);
    let mut l = e.vectors.clone();
    for (k, &v) in e.values.iter().enumerate() {
        let s = v.max(0.0).sqrt();
        l.column_mut(k).scale_mut(s);
    }
    l
}

fn eig_ratio(x: &Matrix) -> f64 {
    let ev = sym_eig(x).values;
    let top = ev[0];
    if top <= 0.0 {
        return 0.0;
    }
    ev[ev.len() - 1] / top
}

/// SVD of `a` with singular values sorted descending (stable).
fn sorted_svd(a: Matrix) -> (Matrix, Vec<f64>, Matrix) {
    let svd = a.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let k = svd.singular_values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sigma = order.iter().map(|&i| svd.singular_values[i]).collect();
    let mut us = Matrix::zeros(u.nrows(), k);
    let mut vs = Matrix::zeros(vt.ncols(), k);
    for (dst, &src) in order.iter().enumerate() {
        us.set_column(dst, &u.column(src));
        vs.set_column(dst, &vt.row(src).transpose());
    }
    (us, sigma, vs)
}

/// Hankel singular values `sqrt(lambda(P Q))`, descending.
pub fn hankel_singular_values(p: &Matrix, q: &Matrix) -> Vec<f64> {
    if p.nrows() == 0 {
        return Vec::new();
    }
    let (lp, lq) = (psd_factor(p), psd_factor(q));
    sorted_svd(lq.transpose() * lp).1
}

fn balance_one(sys: &StateSpaceModel, p: &Matrix, q: &Matrix, index: usize) -> Result<BalancedSubsystem> {
    let n = sys.order();
    if p.shape() != (n, n) || q.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!(
            "Gramian blocks of subsystem {} do not match its order {n}",
            index + 1
        )));
    }
    if n == 0 {
        return Ok(BalancedSubsystem {
            t: Matrix::zeros(0, 0),
            t_inv: Matrix::zeros(0, 0),
            sigma: Vec::new(),
            system: sys.clone(),
        });
    }
    for x in [p, q] {
        let ratio = eig_ratio(x);
        if !(ratio >= DEGENERATE_RATIO) {
            return Err(Error::DegenerateGramian {
                subsystem: index + 1,
                ratio,
            });
        }
    }
    let (lp, lq) = (psd_factor(p), psd_factor(q));
    let (u, sigma, v) = sorted_svd(lq.transpose() * &lp);
    let inv_sqrt = Matrix::from_diagonal(&nalgebra::DVector::from_iterator(
        n,
        sigma.iter().map(|s| 1.0 / s.sqrt()),
    ));
    let t = &inv_sqrt * u.transpose() * lq.transpose();
    let t_inv = lp * v * &inv_sqrt;
    let system = StateSpaceModel::new(
        &t * sys.a() * &t_inv,
        &t * sys.b(),
        sys.c() * &t_inv,
        sys.d().clone(),
    )?
    .with_label(sys.label.clone());
    Ok(BalancedSubsystem { t, t_inv, sigma, system })
}

/// Square-root balancing of every subsystem against its Gramian blocks.
pub fn balance(plant: &BlockDiagonalPlant, grams: &GramianPair) -> Result<BalancedRealization> {
    if grams.p_blocks.len() != plant.len() || grams.q_blocks.len() != plant.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} Gramian blocks for {} subsystems",
            grams.p_blocks.len(),
            plant.len()
        )));
    }
    let subsystems = plant
        .subsystems()
        .iter()
        .enumerate()
        .map(|(i, sys)| balance_one(sys, &grams.p_blocks[i], &grams.q_blocks[i], i))
        .collect::<Result<Vec<_>>>()?;
    Ok(BalancedRealization {
        subsystems,
        kind: grams.kind,
        warnings: grams.diagnostics.warnings.clone(),
    })
}

fn split(sys: &StateSpaceModel, r: usize) -> [Matrix; 7] {
    let n = sys.order();
    let f = n - r;
    let (a, b, c) = (sys.a(), sys.b(), sys.c());
    let (m, p) = (sys.inputs(), sys.outputs());
    [
        a.view((0, 0), (r, r)).into_owned(),
        a.view((0, r), (r, f)).into_owned(),
        a.view((r, 0), (f, r)).into_owned(),
        a.view((r, r), (f, f)).into_owned(),
        b.view((0, 0), (r, m)).into_owned(),
        b.view((r, 0), (f, m)).into_owned(),
        c.view((0, 0), (p, r)).into_owned(),
    ]
}

fn finish(
    bal: &BalancedRealization,
    r: &OrderVector,
    method: ReductionMethod,
    subs: Vec<StateSpaceModel>,
) -> Result<ReducedModel> {
    let mut warnings = bal.warnings.clone();
    warnings.extend(bal.near_singular_warnings(r));
    Ok(ReducedModel {
        plant: BlockDiagonalPlant::aggregate(subs)?,
        orders: r.clone(),
        method,
        kind: bal.kind,
        error: None,
        warnings,
    })
}

/// Keep the leading `r_i` balanced states; `D_hat_i = D_i`.
pub fn truncate(bal: &BalancedRealization, r: &OrderVector) -> Result<ReducedModel> {
    bal.check_orders(r)?;
    let subs = bal
        .subsystems
        .iter()
        .zip(&r.0)
        .map(|(s, &ri)| {
            let [a11, _, _, _, b1, _, c1] = split(&s.system, ri);
            StateSpaceModel::new(a11, b1, c1, s.system.d().clone()).map(|m| m.with_label(s.system.label.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    finish(bal, r, ReductionMethod::Truncation, subs)
}

/// Residualize the trailing balanced states.
pub fn singular_perturbation(bal: &BalancedRealization, r: &OrderVector) -> Result<ReducedModel> {
    bal.check_orders(r)?;
    let mut subs = Vec::with_capacity(r.0.len());
    for (i, (s, &ri)) in bal.subsystems.iter().zip(&r.0).enumerate() {
        let sys = &s.system;
        if ri == sys.order() {
            subs.push(sys.clone());
            continue;
        }
        let [a11, a12, a21, a22, b1, b2, c1] = split(sys, ri);
        let c2 = sys.c().columns(ri, sys.order() - ri).into_owned();
        let sv = a22.clone().singular_values();
        let cond = sv.max() / sv.min();
        if !(cond <= MAX_FAST_COND) {
            return Err(Error::SingularFastBlock { subsystem: i + 1 });
        }
        let lu = a22.lu();
        let x_a = lu.solve(&a21).ok_or(Error::SingularFastBlock { subsystem: i + 1 })?;
        let x_b = lu.solve(&b2).ok_or(Error::SingularFastBlock { subsystem: i + 1 })?;
        let reduced = StateSpaceModel::new(
            &a11 - &a12 * &x_a,
            &b1 - &a12 * &x_b,
            &c1 - &c2 * &x_a,
            sys.d() - &c2 * &x_b,
        )?
        .with_label(sys.label.clone());
        subs.push(reduced);
    }
    finish(bal, r, ReductionMethod::Perturbation, subs)
}

/// Twice the sum of the discarded Hankel values.
pub fn theorem1_bound(bal: &BalancedRealization, r: &OrderVector) -> Result<ErrorBound> {
    bal.check_orders(r)?;
    let tails: Vec<f64> = bal
        .subsystems
        .iter()
        .zip(&r.0)
        .map(|(s, &ri)| s.sigma[ri..].iter().fold(0.0, |acc, v| acc + v))
        .collect();
    Ok(ErrorBound {
        value: 2.0 * tails.iter().fold(0.0, |acc, v| acc + v),
        tails,
        heuristic: bal.kind == GramianKind::Structured,
    })
}

/// Smallest `k` per subsystem with `sigma_k / sigma_{k+1} >= drop_ratio`,
/// or the full order when there is no such gap.
pub fn suggest_orders(bal: &BalancedRealization, drop_ratio: f64) -> Result<OrderVector> {
    if !(drop_ratio > 1.0) {
        return Err(Error::InvalidParameter(format!("drop ratio must exceed 1, got {drop_ratio}")));
    }
    Ok(OrderVector::new(
        bal.subsystems
            .iter()
            .map(|s| {
                s.sigma
                    .windows(2)
                    .position(|w| w[0] > 0.0 && w[0] >= drop_ratio * w[1])
                    .map_or(s.sigma.len(), |k| k + 1)
            })
            .collect(),
    ))
}

/// Gramians of the interconnection, then balancing.
pub fn balance_network(
    plant: &BlockDiagonalPlant,
    net: &NetworkMatrix,
    kind: GramianKind,
    lmi: &LmiOptions,
) -> Result<BalancedRealization> {
    let cl = close_loop(plant, net)?;
    let dims = plant.state_dims();
    let grams = match kind {
        GramianKind::Structured => structured_gramians(&cl, &dims)?,
        GramianKind::Generalized => generalized_gramians(&cl, &dims, lmi)?,
    };
    balance(plant, &grams)
}

pub fn reduce_balanced(bal: &BalancedRealization, r: &OrderVector, method: ReductionMethod) -> Result<ReducedModel> {
    match method {
        ReductionMethod::Truncation => truncate(bal, r),
        ReductionMethod::Perturbation => singular_perturbation(bal, r),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gramians::GramianDiagnostics;

    fn m(rows: usize, cols: usize, v: &[f64]) -> Matrix {
        Matrix::from_row_slice(rows, cols, v)
    }

    fn pair(p: Vec<Matrix>, q: Vec<Matrix>, kind: GramianKind) -> GramianPair {
        GramianPair {
            kind,
            p_blocks: p,
            q_blocks: q,
            diagnostics: GramianDiagnostics::default(),
        }
    }

    fn bal_with_sigma(sigma: Vec<f64>) -> BalancedRealization {
        let n = sigma.len();
        BalancedRealization {
            subsystems: vec![BalancedSubsystem {
                t: Matrix::identity(n, n),
                t_inv: Matrix::identity(n, n),
                sigma,
                system: StateSpaceModel::new(
                    -Matrix::identity(n, n),
                    Matrix::zeros(n, 1),
                    Matrix::zeros(1, n),
                    Matrix::zeros(1, 1),
                )
                .unwrap(),
            }],
            kind: GramianKind::Generalized,
            warnings: vec![],
        }
    }

    #[test]
    fn balanced_scalar_is_untouched() {
        let sys = StateSpaceModel::new(m(1, 1, &[-1.0]), m(1, 1, &[1.0]), m(1, 1, &[1.0]), m(1, 1, &[0.0])).unwrap();
        let plant = BlockDiagonalPlant::aggregate(vec![sys]).unwrap();
        let g = pair(vec![m(1, 1, &[0.5])], vec![m(1, 1, &[0.5])], GramianKind::Structured);
        let bal = balance(&plant, &g).unwrap();
        assert!((bal.subsystems[0].t[(0, 0)].abs() - 1.0).abs() < 1e-15);
        assert!((bal.subsystems[0].sigma[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn sigma_from_product_eigenvalues() {
        let p = m(2, 2, &[4.0, 0.0, 0.0, 1.0]);
        let q = m(2, 2, &[1.0, 0.0, 0.0, 4.0]);
        let s = hankel_singular_values(&p, &q);
        assert!((s[0] - 2.0).abs() < 1e-14 && (s[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn perturbation_hand_example() {
        let sys = StateSpaceModel::new(
            m(2, 2, &[-1.0, 1.0, 1.0, -3.0]),
            m(2, 1, &[1.0, 1.0]),
            m(1, 2, &[1.0, 1.0]),
            m(1, 1, &[0.0]),
        )
        .unwrap();
        let bal = BalancedRealization {
            subsystems: vec![BalancedSubsystem {
                t: Matrix::identity(2, 2),
                t_inv: Matrix::identity(2, 2),
                sigma: vec![1.0, 0.5],
                system: sys,
            }],
            kind: GramianKind::Structured,
            warnings: vec![],
        };
        let red = singular_perturbation(&bal, &OrderVector::new(vec![1])).unwrap();
        let s = red.plant.subsystem(0);
        let close = |x: f64, y: f64| (x - y).abs() < 1e-14;
        assert!(close(s.a()[(0, 0)], -2.0 / 3.0));
        assert!(close(s.b()[(0, 0)], 4.0 / 3.0));
        assert!(close(s.c()[(0, 0)], 4.0 / 3.0));
        assert!(close(s.d()[(0, 0)], 1.0 / 3.0));
        let red = singular_perturbation(&bal, &OrderVector::new(vec![2])).unwrap();
        assert_eq!(red.plant.subsystem(0), &bal.subsystems[0].system);
    }

    #[test]
    fn singular_fast_block_rejected() {
        let sys = StateSpaceModel::new(
            m(2, 2, &[-1.0, 1.0, 1.0, 0.0]),
            m(2, 1, &[1.0, 1.0]),
            m(1, 2, &[1.0, 1.0]),
            m(1, 1, &[0.0]),
        )
        .unwrap();
        let mut bal = bal_with_sigma(vec![1.0, 0.5]);
        bal.subsystems[0].system = sys;
        assert!(matches!(
            singular_perturbation(&bal, &OrderVector::new(vec![1])),
            Err(Error::SingularFastBlock { subsystem: 1 })
        ));
    }

    #[test]
    fn suggest_orders_examples() {
        let bal = bal_with_sigma(vec![10.0, 9.0, 0.01, 0.001]);
        assert_eq!(suggest_orders(&bal, 100.0).unwrap().0, vec![2]);
        let bal = bal_with_sigma(vec![1.0; 5]);
        assert_eq!(suggest_orders(&bal, 100.0).unwrap().0, vec![5]);
        assert!(suggest_orders(&bal, 1.0).is_err());
    }

    #[test]
    fn bound_is_twice_the_tail() {
        let bal = bal_with_sigma(vec![3.0, 2.0, 1.0]);
        let b = theorem1_bound(&bal, &OrderVector::new(vec![1])).unwrap();
        assert_eq!(b.value, 6.0);
        assert!(!b.heuristic);
        assert_eq!(theorem1_bound(&bal, &OrderVector::new(vec![3])).unwrap().value, 0.0);
        assert!(theorem1_bound(&bal, &OrderVector::new(vec![4])).is_err());
    }

    #[test]
    fn degenerate_gramian_rejected() {
        let sys = StateSpaceModel::new(
            -Matrix::identity(2, 2),
            m(2, 1, &[1.0, 0.0]),
            m(1, 2, &[1.0, 1.0]),
            m(1, 1, &[0.0]),
        )
        .unwrap();
        let plant = BlockDiagonalPlant::aggregate(vec![sys]).unwrap();
        let g = pair(
            vec![m(2, 2, &[0.5, 0.0, 0.0, 0.0])],
            vec![Matrix::identity(2, 2)],
            GramianKind::Structured,
        );
        assert!(matches!(balance(&plant, &g), Err(Error::DegenerateGramian { subsystem: 1, .. })));
    }
}
