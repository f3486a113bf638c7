use proptest::prelude::*;
use rand::Rng;
use strucred::gramians::LmiOptions;
use strucred::linalg::{hinf_norm, local_peaks, Matrix};
use strucred::reduction::balance_network;
use strucred::subgradient::{hinf_subgradient, project_subgradient};
use strucred::testkit::{random_matrix, random_network, rng, NetworkInstance};
use strucred::{
    build_error_plant, improve, truncate, BlockDiagonalPlant, DescentOptions, Error, ErrorPlant, GainPoint,
    GramianKind, NetworkMatrix, OrderVector, ProjectionMask, StateSpaceModel,
};

fn objective(ep: &ErrorPlant, phi: &Matrix) -> f64 {
    hinf_norm(&ep.lft(phi).unwrap(), 1e-13).unwrap().value
}

fn fd_gradient(ep: &ErrorPlant, phi: &Matrix, h: f64) -> Matrix {
    let mask = ep.mask().matrix();
    Matrix::from_fn(phi.nrows(), phi.ncols(), |i, j| {
        if mask[(i, j)] == 0.0 {
            return 0.0;
        }
        let mut plus = phi.clone();
        plus[(i, j)] += h;
        let mut minus = phi.clone();
        minus[(i, j)] -= h;
        (objective(ep, &plus) - objective(ep, &minus)) / (2.0 * h)
    })
}

/// A stable gain near the balanced-truncation seed whose error peak is
/// finite and clearly separated from every other local peak.
fn simple_peak_point(r: &mut impl Rng) -> (ErrorPlant, GainPoint) {
    loop {
        let NetworkInstance { plant, net } = random_network(r, 2, 4, true);
        let bal = balance_network(&plant, &net, GramianKind::Structured, &LmiOptions::default()).unwrap();
        let orders = OrderVector::new(plant.state_dims().iter().map(|&n| r.gen_range(0..n.max(1)).min(n)).collect());
        let Ok(seed) = truncate(&bal, &orders) else { continue };
        let Ok(ep) = build_error_plant(&net, &plant, &orders) else { continue };
        let mut phi = ep.encode(&seed.plant).unwrap();
        let noise = random_matrix(r, phi.nrows(), phi.ncols()).component_mul(ep.mask().matrix()) * 0.05;
        phi += noise;
        let Ok(pt) = ep.evaluate(&phi, &[]) else { continue };
        if !pt.stable || !pt.peak_omega.is_finite() || pt.objective < 1e-6 * ep.full_norm() {
            continue;
        }
        let peaks = local_peaks(&ep.lft(&phi).unwrap()).unwrap();
        let top = pt.objective;
        let rivals = peaks
            .iter()
            .filter(|(w, _)| (w - pt.peak_omega).abs() > 1e-3 * pt.peak_omega.max(1.0))
            .any(|(_, v)| *v > 0.9 * top);
        if rivals {
            continue;
        }
        return (ep, pt);
    }
}

#[test]
fn subgradient_matches_finite_differences() {
    let mut r = rng(101);
    for _ in 0..10 {
        let (ep, pt) = simple_peak_point(&mut r);
        let g = project_subgradient(&hinf_subgradient(&ep, &pt).unwrap(), ep.mask()).unwrap();
        let fd = fd_gradient(&ep, &pt.phi, 1e-6);
        let rel = (&g - &fd).norm() / fd.norm().max(1e-12);
        assert!(rel <= 1e-4, "relative difference {rel:e}");
    }
}

fn scalar_lag() -> (BlockDiagonalPlant, NetworkMatrix) {
    let g = StateSpaceModel::new(
        Matrix::from_element(1, 1, -1.0),
        Matrix::from_element(1, 1, 1.0),
        Matrix::from_element(1, 1, 1.0),
        Matrix::zeros(1, 1),
    )
    .unwrap();
    let net = NetworkMatrix::new(
        Matrix::zeros(1, 1),
        Matrix::identity(1, 1),
        Matrix::identity(1, 1),
        Matrix::zeros(1, 1),
    )
    .unwrap();
    (BlockDiagonalPlant::aggregate(vec![g]).unwrap(), net)
}

#[test]
fn static_approximation_of_a_first_order_lag() {
    // |1/(jw+1) - d| peaks at w = 0 with value 1 - d for d < 1/2,
    // so the subgradient with respect to d is -1
    let (plant, net) = scalar_lag();
    let ep = build_error_plant(&net, &plant, &OrderVector::new(vec![0])).unwrap();
    let phi = Matrix::from_element(1, 1, 0.2);
    let pt = ep.evaluate(&phi, &[]).unwrap();
    assert!((pt.objective - 0.8).abs() < 1e-9);
    let g = hinf_subgradient(&ep, &pt).unwrap();
    assert!((g[(0, 0)] + 1.0).abs() < 1e-8, "{g}");
}

#[test]
fn descent_on_a_first_order_lag_reaches_the_optimum() {
    // best static gain is d = 1/2 with error 1/2
    let (plant, net) = scalar_lag();
    let r = OrderVector::new(vec![0]);
    let ep = build_error_plant(&net, &plant, &r).unwrap();
    let bal = balance_network(&plant, &net, GramianKind::Structured, &LmiOptions::default()).unwrap();
    let seed = truncate(&bal, &r).unwrap();
    let (red, rep) = improve(&ep, &seed, &DescentOptions::default()).unwrap();
    assert!((rep.final_point.objective - 0.5).abs() < 1e-3);
    assert!((red.plant.d()[(0, 0)] - 0.5).abs() < 1e-2);
}

#[test]
fn descent_is_monotone_and_keeps_the_structure() {
    let mut r = rng(55);
    let mut runs = 0;
    while runs < 4 {
        let NetworkInstance { plant, net } = random_network(&mut r, 2, 4, true);
        let orders = OrderVector::new(plant.state_dims().iter().map(|&n| n.saturating_sub(1)).collect());
        let bal = balance_network(&plant, &net, GramianKind::Structured, &LmiOptions::default()).unwrap();
        let seed = truncate(&bal, &orders).unwrap();
        let ep = build_error_plant(&net, &plant, &orders).unwrap();
        let (red, rep) = match improve(&ep, &seed, &DescentOptions::default()) {
            Ok(x) => x,
            Err(Error::UnstableInit { .. }) => continue,
            Err(e) => panic!("{e}"),
        };
        runs += 1;
        assert!(rep.history.windows(2).all(|w| w[1] <= w[0]));
        assert!(rep.final_point.objective <= rep.history[0]);
        assert!(rep.final_point.stable);
        assert!(ep.mask().conforms(&rep.final_point.phi));
        assert_eq!(red.plant.state_dims(), orders.0);
        assert!(red.plant.same_io_partition(&plant));
    }
}

#[test]
fn full_order_seed_is_returned_unchanged() {
    let mut r = rng(9);
    let NetworkInstance { plant, net } = random_network(&mut r, 2, 3, true);
    let full = OrderVector::full(&plant);
    let bal = balance_network(&plant, &net, GramianKind::Structured, &LmiOptions::default()).unwrap();
    let seed = truncate(&bal, &full).unwrap();
    let ep = build_error_plant(&net, &plant, &full).unwrap();
    let (red, rep) = improve(&ep, &seed, &DescentOptions::default()).unwrap();
    assert_eq!(rep.accepted_steps(), 0);
    assert_eq!(rep.iterations, 0);
    assert_eq!(red.plant, seed.plant);
}

#[test]
fn unstable_seed_is_rejected() {
    let (plant, net) = scalar_lag();
    let r = OrderVector::new(vec![1]);
    let ep = build_error_plant(&net, &plant, &r).unwrap();
    let bad = StateSpaceModel::new(
        Matrix::from_element(1, 1, 2.0),
        Matrix::from_element(1, 1, 1.0),
        Matrix::from_element(1, 1, 1.0),
        Matrix::zeros(1, 1),
    )
    .unwrap();
    let bal = balance_network(&plant, &net, GramianKind::Structured, &LmiOptions::default()).unwrap();
    let mut seed = truncate(&bal, &r).unwrap();
    seed.plant = BlockDiagonalPlant::aggregate(vec![bad]).unwrap();
    assert!(matches!(
        improve(&ep, &seed, &DescentOptions::default()),
        Err(Error::UnstableInit { .. })
    ));
}

#[test]
fn mask_of_two_subsystems() {
    let m = ProjectionMask::new(&[2, 1], &[1, 2], &[1, 1]);
    assert_eq!(m.shape(), (5, 6));
    let expected = Matrix::from_row_slice(
        5,
        6,
        &[
            1., 1., 0., 1., 0., 0., //
            1., 1., 0., 1., 0., 0., //
            0., 0., 1., 0., 1., 1., //
            1., 1., 0., 1., 0., 0., //
            0., 0., 1., 0., 1., 1., //
        ],
    );
    assert_eq!(m.matrix(), &expected);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn encode_decode_round_trip(seed in any::<u64>()) {
        let mut r = rng(seed);
        let NetworkInstance { plant, net } = random_network(&mut r, 3, 4, true);
        let orders = OrderVector::new(plant.state_dims().iter().map(|&n| r.gen_range(0..=n)).collect());
        let ep = build_error_plant(&net, &plant, &orders).unwrap();
        let phi = random_matrix(&mut r, ep.mask().shape().0, ep.mask().shape().1)
            .component_mul(ep.mask().matrix());
        let decoded = ep.decode(&phi).unwrap();
        prop_assert_eq!(ep.encode(&decoded).unwrap(), phi);
        prop_assert_eq!(decoded.state_dims(), orders.0.clone());
    }

    #[test]
    fn projection_zeroes_cross_terms_and_is_idempotent(seed in any::<u64>(), q in 1usize..=4) {
        let mut r = rng(seed);
        let orders: Vec<usize> = (0..q).map(|_| r.gen_range(0..=3)).collect();
        let inputs: Vec<usize> = (0..q).map(|_| r.gen_range(1..=2)).collect();
        let outputs: Vec<usize> = (0..q).map(|_| r.gen_range(1..=2)).collect();
        let mask = ProjectionMask::new(&orders, &inputs, &outputs);
        let (rows, cols) = mask.shape();
        let g = random_matrix(&mut r, rows, cols);
        let once = project_subgradient(&g, &mask).unwrap();
        prop_assert!(mask.conforms(&once));
        prop_assert_eq!(project_subgradient(&once, &mask).unwrap(), once.clone());
        let kept = once.iter().filter(|v| **v != 0.0).count();
        prop_assert!(kept <= mask.matrix().iter().filter(|v| **v == 1.0).count());
        prop_assert!(project_subgradient(&Matrix::zeros(rows + 1, cols), &mask).is_err());
    }
}
