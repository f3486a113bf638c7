//! Seeded random instances and independent numerical oracles.
//!
//! Compiled only for tests or with the `testkit` feature. The oracles take
//! deliberately different routes from the library code: explicit inverses
//! instead of solves, characteristic polynomials instead of resolvents,
//! time-domain quadrature instead of Schur methods.

use nalgebra::Complex;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::linalg::{block_diag, is_hurwitz, CMatrix, Matrix};
use crate::network::{close_loop, NetworkMatrix};
use crate::sysmodel::{BlockDiagonalPlant, StateSpaceModel};

type C64 = Complex<f64>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

fn abscissa(a: &Matrix) -> f64 {
    is_hurwitz(a).map(|s| s.abscissa).unwrap_or(0.0)
}

/// Random Hurwitz matrix with spectral abscissa in `[-1, -0.1]`.
pub fn random_hurwitz(rng: &mut impl Rng, n: usize) -> Matrix {
    let m = random_matrix(rng, n, n) * 2.0;
    if n == 0 {
        return m;
    }
    let shift = abscissa(&m) + rng.gen_range(0.1..1.0);
    m - Matrix::identity(n, n) * shift
}

/// Random stable system (`D` random when `with_d`).
pub fn random_stable(rng: &mut impl Rng, n: usize, m: usize, p: usize, with_d: bool) -> StateSpaceModel {
    let a = random_hurwitz(rng, n);
    let b = random_matrix(rng, n, m);
    let c = random_matrix(rng, p, n);
    let d = if with_d {
        random_matrix(rng, p, m) * 0.5
    } else {
        Matrix::zeros(p, m)
    };
    StateSpaceModel::new(a, b, c, d).unwrap()
}

/// Random system whose `A` has a negative definite symmetric part, so
/// `A P + P A^T < 0` holds for `P = I`.
pub fn random_dissipative(rng: &mut impl Rng, n: usize, m: usize, p: usize) -> StateSpaceModel {
    let s = random_matrix(rng, n, n);
    let k = random_matrix(rng, n, n) * 2.0;
    let a = -(&s * s.transpose()) - Matrix::identity(n, n) * rng.gen_range(0.3..1.0) + (&k - k.transpose());
    StateSpaceModel::new(
        a,
        random_matrix(rng, n, m),
        random_matrix(rng, p, n),
        Matrix::zeros(p, m),
    )
    .unwrap()
}

/// Random interconnection instance with a stable closed loop.
pub struct NetworkInstance {
    pub plant: BlockDiagonalPlant,
    pub net: NetworkMatrix,
}

/// `q` random stable subsystems (orders `1..=max_order`, one or two ports)
/// in a random well-posed network with a Hurwitz closed loop.
pub fn random_network(rng: &mut impl Rng, q: usize, max_order: usize, with_d: bool) -> NetworkInstance {
    loop {
        let subs: Vec<_> = (0..q)
            .map(|_| {
                let n = rng.gen_range(1..=max_order);
                let m = rng.gen_range(1..=2);
                let p = rng.gen_range(1..=2);
                random_stable(rng, n, m, p, with_d)
            })
            .collect();
        let plant = BlockDiagonalPlant::aggregate(subs).unwrap();
        let me = rng.gen_range(1..=2);
        let pe = rng.gen_range(1..=2);
        let scale = rng.gen_range(0.05..0.6);
        let net = NetworkMatrix::new(
            random_matrix(rng, pe, me) * 0.3,
            random_matrix(rng, pe, plant.outputs()),
            random_matrix(rng, plant.inputs(), me),
            random_matrix(rng, plant.inputs(), plant.outputs()) * scale,
        )
        .unwrap();
        if let Ok(cl) = close_loop(&plant, &net) {
            if cl.hurwitz && cl.abscissa < -0.02 {
                return NetworkInstance { plant, net };
            }
        }
    }
}

/// `q` dissipative subsystems with weak feedback coupling; generalized
/// Gramians of the closed loop exist for such instances.
pub fn weakly_coupled_network(
    rng: &mut impl Rng,
    orders: &[usize],
    coupling: f64,
) -> NetworkInstance {
    loop {
        let subs: Vec<_> = orders
            .iter()
            .map(|&n| random_dissipative(rng, n, 1, 1))
            .collect();
        let plant = BlockDiagonalPlant::aggregate(subs).unwrap();
        let q = orders.len();
        let mut dk = Matrix::zeros(q, q);
        for i in 0..q {
            for j in 0..q {
                if i != j {
                    dk[(i, j)] = coupling * rng.gen_range(-1.0..1.0);
                }
            }
        }
        let net = NetworkMatrix::new(
            Matrix::zeros(q, 1),
            Matrix::identity(q, q),
            Matrix::from_fn(q, 1, |_, _| rng.gen_range(0.5..1.0)),
            dk,
        )
        .unwrap();
        if close_loop(&plant, &net).map(|c| c.hurwitz).unwrap_or(false) {
            return NetworkInstance { plant, net };
        }
    }
}

// ---------------------------------------------------------------- oracles

/// `int_0^T e^{At} W e^{A^T t} dt` by composite Simpson quadrature.
pub fn quadrature_gramian(a: &Matrix, w: &Matrix, horizon: f64, steps: usize) -> Matrix {
    let steps = steps + steps % 2;
    let h = horizon / steps as f64;
    let step = (a * h).exp();
    let mut phi = Matrix::identity(a.nrows(), a.nrows());
    let mut acc = Matrix::zeros(a.nrows(), a.nrows());
    for k in 0..=steps {
        let weight = if k == 0 || k == steps {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += (&phi * w * phi.transpose()) * weight;
        phi = &step * phi;
    }
    acc * (h / 3.0)
}

/// Frequency response through an explicit inverse of `jwI - A`.
pub fn inverse_freq_response(sys: &StateSpaceModel, omega: f64) -> CMatrix {
    let n = sys.order();
    let to_c = |m: &Matrix| m.map(|v| C64::new(v, 0.0));
    if n == 0 {
        return to_c(sys.d());
    }
    let mut m = to_c(&(-sys.a()));
    for i in 0..n {
        m[(i, i)] += C64::new(0.0, omega);
    }
    let inv = m.try_inverse().expect("resolvent invertible");
    to_c(sys.c()) * inv * to_c(sys.b()) + to_c(sys.d())
}

/// Transfer matrix as `C adj(sI - A) B / det(sI - A) + D`, with the
/// adjugate and determinant coefficients from the Faddeev-LeVerrier
/// recursion. Built once, cheap to evaluate.
pub struct PolynomialResponse {
    // det(sI - A) = sum_k den[k] s^{n-k}
    den: Vec<f64>,
    // C adj(sI - A) B = sum_k num[k] s^{n-1-k}
    num: Vec<CMatrix>,
    d: CMatrix,
}

impl PolynomialResponse {
    pub fn new(sys: &StateSpaceModel) -> Self {
        let n = sys.order();
        let a = sys.a();
        let to_c = |m: &Matrix| m.map(|v| C64::new(v, 0.0));
        let mut den = vec![1.0];
        let mut num = Vec::with_capacity(n);
        let mut nk = Matrix::identity(n, n);
        for k in 1..=n {
            num.push(to_c(&(sys.c() * &nk * sys.b())));
            let an = a * &nk;
            let ck = -an.trace() / k as f64;
            den.push(ck);
            nk = an + Matrix::identity(n, n) * ck;
        }
        Self {
            den,
            num,
            d: to_c(sys.d()),
        }
    }

    pub fn eval(&self, omega: f64) -> CMatrix {
        let s = C64::new(0.0, omega);
        let det = self.den.iter().fold(C64::new(0.0, 0.0), |acc, &c| acc * s + c);
        let mut acc = CMatrix::zeros(self.d.nrows(), self.d.ncols());
        for mat in &self.num {
            acc = acc * s + mat;
        }
        acc / det + &self.d
    }
}

pub fn polynomial_freq_response(sys: &StateSpaceModel, omega: f64) -> CMatrix {
    PolynomialResponse::new(sys).eval(omega)
}

/// Largest singular value via the eigenvalues of `M^H M` (no SVD).
pub fn sigma_max_oracle(m: &CMatrix) -> f64 {
    let g = if m.ncols() <= m.nrows() { m.adjoint() * m } else { m * m.adjoint() };
    if g.nrows() == 1 {
        return g[(0, 0)].re.max(0.0).sqrt();
    }
    // Hermitian to real symmetric embedding [Re -Im; Im Re]
    let k = g.nrows();
    let mut big = Matrix::zeros(2 * k, 2 * k);
    for i in 0..k {
        for j in 0..k {
            big[(i, j)] = g[(i, j)].re;
            big[(i + k, j + k)] = g[(i, j)].re;
            big[(i, j + k)] = -g[(i, j)].im;
            big[(i + k, j)] = g[(i, j)].im;
        }
    }
    let ev = nalgebra::SymmetricEigen::new(big).eigenvalues;
    ev.iter().copied().fold(0.0, f64::max).max(0.0).sqrt()
}

/// Dense log-grid sweep of `sigma_max(G(jw))` plus `w = 0`, the imaginary
/// parts of the poles and `w = inf`.
pub fn grid_hinf(sys: &StateSpaceModel, lo: f64, hi: f64, points: usize) -> f64 {
    let mut ws: Vec<f64> = vec![0.0];
    let step = (hi / lo).ln() / (points - 1) as f64;
    ws.extend((0..points).map(|k| lo * (step * k as f64).exp()));
    if sys.order() > 0 {
        let eig = sys.a().clone().complex_eigenvalues();
        ws.extend(eig.iter().map(|l| l.im.abs()));
    }
    let poly = PolynomialResponse::new(sys);
    let mut best = sigma_max_oracle(&sys.d().map(|v| C64::new(v, 0.0)));
    for w in ws {
        best = best.max(sigma_max_oracle(&poly.eval(w)));
    }
    best
}

/// `D_E + D_F (I - G D_K)^{-1} G D_H` from the subsystem responses.
pub fn lft_transfer(plant: &BlockDiagonalPlant, net: &NetworkMatrix, omega: f64) -> CMatrix {
    let blocks: Vec<CMatrix> = plant
        .subsystems()
        .iter()
        .map(|s| inverse_freq_response(s, omega))
        .collect();
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut g = CMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in &blocks {
        g.view_mut((r, c), b.shape()).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    let to_c = |m: &Matrix| m.map(|v| C64::new(v, 0.0));
    let dk = to_c(&net.dk);
    let loop_inv = (CMatrix::identity(rows, rows) - &g * &dk)
        .try_inverse()
        .expect("well-posed loop");
    to_c(&net.de) + to_c(&net.df) * loop_inv * g * to_c(&net.dh)
}

/// Relative difference `||x - y|| / max(||y||, floor)`.
pub fn rel_diff_c(x: &CMatrix, y: &CMatrix, floor: f64) -> f64 {
    (x - y).norm() / y.norm().max(floor)
}

/// Block-diagonal helper for tests.
pub fn blkdiag(blocks: &[&Matrix]) -> Matrix {
    block_diag(blocks)
}
