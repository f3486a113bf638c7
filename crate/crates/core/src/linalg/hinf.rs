//! H-infinity norm of a stable continuous-time system.
//!
//! A coarse log grid gives a lower bound `lb`. The Hamiltonian of the level
//! `gamma = (1 + rel_tol) lb` is then tested for imaginary-axis eigenvalues;
//! their frequencies bracket the intervals where `sigma_max` exceeds
//! `gamma`, and evaluating at the interval midpoints raises `lb`. When no
//! imaginary eigenvalue remains the norm lies in `[lb, gamma)`. A final
//! golden-section pass polishes the peak frequency.

use nalgebra::Complex;

use super::eig::{abscissa_of, eigenvalues};
use super::freq::{sigma_max, FrequencyEvaluator};
use super::{KernelConfig, Matrix};
use crate::error::{Error, Result};
use crate::sysmodel::StateSpaceModel;

/// H-infinity norm and the frequency attaining it (`+inf` when the peak is
/// the feedthrough term).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HinfNorm {
    pub value: f64,
    pub peak_omega: f64,
}

pub fn hinf_norm(sys: &StateSpaceModel, rel_tol: f64) -> Result<HinfNorm> {
    hinf_norm_with(sys, rel_tol, &KernelConfig::default())
}

pub fn hinf_norm_with(sys: &StateSpaceModel, rel_tol: f64, cfg: &KernelConfig) -> Result<HinfNorm> {
    hinf_parts(sys.a(), sys.b(), sys.c(), sys.d(), rel_tol, cfg, &[])
}

/// Local maxima of `sigma_max(G(jw))` found from the initial sweep, each
/// polished by golden-section search, sorted by decreasing value.
pub fn local_peaks(sys: &StateSpaceModel) -> Result<Vec<(f64, f64)>> {
    let cfg = KernelConfig::default();
    let search = PeakSearch::new(sys.a(), sys.b(), sys.c(), sys.d(), &cfg)?;
    Ok(search.local_peaks(&cfg, &[]))
}

pub(crate) fn local_peaks_parts(
    a: &Matrix,
    b: &Matrix,
    c: &Matrix,
    d: &Matrix,
    hints: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let cfg = KernelConfig::default();
    let search = PeakSearch::new(a, b, c, d, &cfg)?;
    Ok(search.local_peaks(&cfg, hints))
}

/// Norm computation on raw matrices. `hints` are extra frequencies added
/// to the initial sweep (for example the previous peak during descent).
pub(crate) fn hinf_parts(
    a: &Matrix,
    b: &Matrix,
    c: &Matrix,
    d: &Matrix,
    rel_tol: f64,
    cfg: &KernelConfig,
    hints: &[f64],
) -> Result<HinfNorm> {
    if !(rel_tol > 0.0 && rel_tol <= 0.1) {
        return Err(Error::InvalidParameter(format!(
            "relative tolerance {rel_tol} outside (0, 0.1]"
        )));
    }
    let sigma_d = d_sigma_max(d);
    if a.nrows() == 0 {
        return Ok(HinfNorm {
            value: sigma_d,
            peak_omega: 0.0,
        });
    }
    let search = PeakSearch::new(a, b, c, d, cfg)?;
    let mut samples = search.initial_samples(cfg, hints);
    samples.push((f64::INFINITY, sigma_d));
    let (mut w_lb, mut lb) = best(&samples);

    let scale = 1f64.max(b.norm() * c.norm()).max(d.norm());
    if lb <= 1e-14 * scale {
        return Ok(HinfNorm {
            value: lb,
            peak_omega: w_lb,
        });
    }

    let d_svals: Vec<f64> = if d.is_empty() {
        Vec::new()
    } else {
        d.clone().singular_values().iter().copied().collect()
    };
    let mut dense_fallback = false;
    for _ in 0..60 {
        let gamma = (1.0 + rel_tol) * lb;
        if d_svals
            .iter()
            .any(|s| (s - gamma).abs() <= cfg.hinf_d_gap * gamma)
        {
            dense_fallback = true;
            break;
        }
        let ham = hamiltonian(a, b, c, d, gamma);
        let eigs = match eigenvalues(&ham) {
            Ok(e) => e,
            Err(_) => {
                dense_fallback = true;
                break;
            }
        };
        let mut crossings: Vec<f64> = eigs
            .iter()
            .filter(|l| l.re.abs() <= cfg.imag_axis_tol * l.norm().max(1.0))
            .map(|l| l.im.abs())
            .collect();
        if crossings.is_empty() {
            break;
        }
        crossings.sort_by(f64::total_cmp);
        crossings.dedup_by(|x, y| (*x - *y).abs() <= 1e-14 * y.abs().max(1e-300));
        let mut probe = vec![0.0];
        probe.extend_from_slice(&crossings);
        probe.extend(crossings.windows(2).map(|p| 0.5 * (p[0] + p[1])));
        probe.push(0.5 * crossings[0]);
        let new: Vec<(f64, f64)> = probe.iter().map(|&w| (w, search.sigma(w))).collect();
        let (w_new, v_new) = best(&new);
        samples.extend(new);
        if v_new <= lb {
            break;
        }
        lb = v_new;
        w_lb = w_new;
    }

    if dense_fallback {
        let (lo, hi) = search.band();
        let count = 2000;
        let step = (hi / lo).ln() / (count - 1) as f64;
        samples.extend((0..count).map(|k| {
            let w = lo * (step * k as f64).exp();
            (w, search.sigma(w))
        }));
        let (w, v) = best(&samples);
        w_lb = w;
        lb = v;
    }

    let (w_pk, v_pk) = search.polish(&samples, w_lb, lb);
    Ok(HinfNorm {
        value: v_pk,
        peak_omega: w_pk,
    })
}

fn d_sigma_max(d: &Matrix) -> f64 {
    if d.is_empty() {
        0.0
    } else {
        d.clone().singular_values().iter().copied().fold(0.0, f64::max)
    }
}

fn best(samples: &[(f64, f64)]) -> (f64, f64) {
    samples
        .iter()
        .copied()
        .fold((0.0, f64::NEG_INFINITY), |acc, s| if s.1 > acc.1 { s } else { acc })
}

/// Hamiltonian whose imaginary eigenvalues `jw` mark frequencies where
/// `gamma` is a singular value of `G(jw)`. Requires `gamma > sigma_max(D)`.
fn hamiltonian(a: &Matrix, b: &Matrix, c: &Matrix, d: &Matrix, gamma: f64) -> Matrix {
    let n = a.nrows();
    let m = d.ncols();
    let p = d.nrows();
    let r = Matrix::identity(m, m) * (gamma * gamma) - d.transpose() * d;
    let r_inv = r
        .clone()
        .cholesky()
        .map(|ch| ch.inverse())
        .or_else(|| r.try_inverse())
        .unwrap_or_else(|| Matrix::identity(m, m) / (gamma * gamma));
    let h11 = a + b * &r_inv * d.transpose() * c;
    let h12 = b * &r_inv * b.transpose();
    let h21 = -(c.transpose() * (Matrix::identity(p, p) + d * &r_inv * d.transpose()) * c);
    let mut h = Matrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&h11);
    h.view_mut((0, n), (n, n)).copy_from(&h12);
    h.view_mut((n, 0), (n, n)).copy_from(&h21);
    h.view_mut((n, n), (n, n)).copy_from(&(-h11.transpose()));
    h
}

struct PeakSearch {
    ev: FrequencyEvaluator,
    eig_freqs: Vec<f64>,
    eig_mags: Vec<f64>,
}

impl PeakSearch {
    fn new(a: &Matrix, b: &Matrix, c: &Matrix, d: &Matrix, cfg: &KernelConfig) -> Result<Self> {
        let eigs: Vec<Complex<f64>> = eigenvalues(a)?;
        let abscissa = abscissa_of(&eigs);
        if a.nrows() > 0 && abscissa >= -cfg.stability_margin {
            return Err(Error::NotStable { abscissa });
        }
        Ok(Self {
            ev: FrequencyEvaluator::from_parts(a, b, c, d),
            eig_freqs: eigs.iter().map(|l| l.im.abs()).filter(|w| *w > 0.0).collect(),
            eig_mags: eigs.iter().map(|l| l.norm()).collect(),
        })
    }

    fn sigma(&self, w: f64) -> f64 {
        sigma_max(&self.ev.eval(w))
    }

    /// Frequency band covering the system dynamics.
    fn band(&self) -> (f64, f64) {
        let min = self.eig_mags.iter().copied().fold(f64::INFINITY, f64::min);
        let max = self.eig_mags.iter().copied().fold(0.0, f64::max);
        let lo = (0.1 * min).max(1e-8);
        let hi = (10.0 * max).max(10.0 * lo);
        (lo, hi)
    }

    fn initial_samples(&self, cfg: &KernelConfig, hints: &[f64]) -> Vec<(f64, f64)> {
        let (lo, hi) = self.band();
        let count = cfg.hinf_grid_points.max(2);
        let step = (hi / lo).ln() / (count - 1) as f64;
        let mut ws: Vec<f64> = (0..count).map(|k| lo * (step * k as f64).exp()).collect();
        ws.push(0.0);
        ws.extend_from_slice(&self.eig_freqs);
        ws.extend(hints.iter().copied().filter(|w| w.is_finite() && *w >= 0.0));
        ws.iter().map(|&w| (w, self.sigma(w))).collect()
    }

    fn local_peaks(&self, cfg: &KernelConfig, hints: &[f64]) -> Vec<(f64, f64)> {
        let mut samples = self.initial_samples(cfg, hints);
        samples.sort_by(|x, y| x.0.total_cmp(&y.0));
        samples.dedup_by(|x, y| x.0 == y.0);
        let mut peaks = Vec::new();
        for k in 0..samples.len() {
            let left = if k > 0 { samples[k - 1].1 } else { f64::NEG_INFINITY };
            let right = samples.get(k + 1).map_or(f64::NEG_INFINITY, |s| s.1);
            let v = samples[k].1;
            if v >= left && v >= right && (v > left || v > right) {
                peaks.push(self.polish(&samples, samples[k].0, v));
            }
        }
        peaks.sort_by(|x, y| y.1.total_cmp(&x.1));
        peaks
    }

    /// Golden-section maximization between the sampled neighbours of `w0`.
    fn polish(&self, samples: &[(f64, f64)], w0: f64, v0: f64) -> (f64, f64) {
        if !w0.is_finite() {
            return (w0, v0);
        }
        let lo = samples
            .iter()
            .map(|s| s.0)
            .filter(|&w| w < w0)
            .fold(f64::NEG_INFINITY, f64::max);
        let hi = samples
            .iter()
            .map(|s| s.0)
            .filter(|&w| w > w0 && w.is_finite())
            .fold(f64::INFINITY, f64::min);
        let lo = if lo.is_finite() { lo } else { 0.0 };
        let hi = if hi.is_finite() { hi } else { 2.0 * w0.max(1e-8) };
        golden_max(|w| self.sigma(w), lo, hi, (w0, v0))
    }
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, start: (f64, f64)) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut best = start;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..200 {
        if (b - a) <= 1e-10 * b.abs().max(1e-12) {
            break;
        }
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
        for (x, v) in [(x1, f1), (x2, f2)] {
            if v > best.1 {
                best = (x, v);
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn siso(a: Matrix, b: Matrix, c: Matrix) -> StateSpaceModel {
        StateSpaceModel::new(a, b, c, Matrix::zeros(1, 1)).unwrap()
    }

    #[test]
    fn first_order_lag_peaks_at_dc() {
        let g = siso(
            Matrix::from_element(1, 1, -1.0),
            Matrix::from_element(1, 1, 1.0),
            Matrix::from_element(1, 1, 1.0),
        );
        let h = hinf_norm(&g, 1e-6).unwrap();
        assert!((h.value - 1.0).abs() < 1e-9);
        assert!(h.peak_omega.abs() < 1e-6);
    }

    #[test]
    fn second_order_resonance_matches_analytic_peak() {
        // w0^2 / (s^2 + 2 zeta w0 s + w0^2), zeta = 0.1, w0 = 1
        let zeta = 0.1;
        let g = siso(
            Matrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -2.0 * zeta]),
            Matrix::from_row_slice(2, 1, &[0.0, 1.0]),
            Matrix::from_row_slice(1, 2, &[1.0, 0.0]),
        );
        let h = hinf_norm(&g, 1e-8).unwrap();
        let exact = 1.0 / (2.0 * zeta * (1.0 - zeta * zeta).sqrt());
        assert!((h.value - exact).abs() <= 1e-8 * exact, "{} vs {exact}", h.value);
        let w_peak = (1.0 - 2.0 * zeta * zeta).sqrt();
        assert!((h.peak_omega - w_peak).abs() < 1e-4);
    }

    #[test]
    fn feedthrough_dominated_peak_is_at_infinity() {
        // G(s) = 2 - 1/(s+1): |G| increases from 1 at DC to 2 at infinity
        let g = StateSpaceModel::new(
            Matrix::from_element(1, 1, -1.0),
            Matrix::from_element(1, 1, 1.0),
            Matrix::from_element(1, 1, -1.0),
            Matrix::from_element(1, 1, 2.0),
        )
        .unwrap();
        let h = hinf_norm(&g, 1e-6).unwrap();
        assert!((h.value - 2.0).abs() < 1e-6);
    }

    #[test]
    fn unstable_is_rejected() {
        let g = siso(
            Matrix::from_element(1, 1, 0.5),
            Matrix::from_element(1, 1, 1.0),
            Matrix::from_element(1, 1, 1.0),
        );
        assert!(matches!(hinf_norm(&g, 1e-3), Err(Error::NotStable { .. })));
    }

    #[test]
    fn tolerance_range_checked() {
        let g = siso(
            Matrix::from_element(1, 1, -1.0),
            Matrix::from_element(1, 1, 1.0),
            Matrix::from_element(1, 1, 1.0),
        );
        assert!(hinf_norm(&g, 0.0).is_err());
        assert!(hinf_norm(&g, 0.5).is_err());
    }

    #[test]
    fn two_resonances_reported_as_peaks() {
        // two decoupled lightly damped modes at 1 and 5 rad/s
        let a = Matrix::from_row_slice(
            4,
            4,
            &[
                0.0, 1.0, 0.0, 0.0, -1.0, -0.05, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, -25.0, -0.3,
            ],
        );
        let b = Matrix::from_row_slice(4, 1, &[0.0, 1.0, 0.0, 25.0]);
        let c = Matrix::from_row_slice(1, 4, &[1.0, 0.0, 1.0, 0.0]);
        let g = siso(a, b, c);
        let peaks = local_peaks(&g).unwrap();
        assert!(peaks.len() >= 2);
        let h = hinf_norm(&g, 1e-9).unwrap();
        assert!((peaks[0].1 - h.value).abs() <= 1e-8 * h.value);
    }
}
