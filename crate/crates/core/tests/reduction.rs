use proptest::prelude::*;
use rand::Rng;
use strucred::gramians::LmiOptions;
use strucred::linalg::{freq_response, Matrix};
use strucred::reduction::{balance_network, hankel_singular_values, reduce_balanced};
use strucred::testkit::{random_network, rel_diff_c, rng, weakly_coupled_network};
use strucred::{
    assemble_network, close_loop, closed_loop_error, mass_spring, singular_perturbation, theorem1_bound, truncate,
    BlockDiagonalPlant, GramianKind, MassSpringOptions, NetworkMatrix, OrderVector, ReductionMethod,
};

fn demo() -> (BlockDiagonalPlant, NetworkMatrix) {
    let m = mass_spring(10.0, 8, 10, &MassSpringOptions::default()).unwrap();
    let net = assemble_network(&m.edges, &m.plant).unwrap();
    (m.plant, net)
}

fn all_orders(dims: &[usize]) -> Vec<OrderVector> {
    let mut out = vec![Vec::new()];
    for &n in dims {
        out = out
            .into_iter()
            .flat_map(|p: Vec<usize>| {
                (0..=n).map(move |r| {
                    let mut v = p.clone();
                    v.push(r);
                    v
                })
            })
            .collect();
    }
    out.into_iter().map(OrderVector::new).collect()
}

#[test]
fn balanced_coordinates_diagonalize_both_gramians() {
    let mut r = rng(2);
    for _ in 0..8 {
        let inst = random_network(&mut r, 2, 5, true);
        let cl = close_loop(&inst.plant, &inst.net).unwrap();
        let g = strucred::structured_gramians(&cl, &inst.plant.state_dims()).unwrap();
        let bal = strucred::balance(&inst.plant, &g).unwrap();
        for (i, s) in bal.subsystems.iter().enumerate() {
            let sigma = Matrix::from_diagonal(&nalgebra::DVector::from_vec(s.sigma.clone()));
            let p_bar = &s.t * &g.p_blocks[i] * s.t.transpose();
            let q_bar = s.t_inv.transpose() * &g.q_blocks[i] * &s.t_inv;
            let scale = sigma.norm().max(1e-300);
            assert!((&p_bar - &sigma).norm() <= 1e-8 * scale);
            assert!((&q_bar - &sigma).norm() <= 1e-8 * scale);
            assert!((&s.t * &s.t_inv - Matrix::identity(s.sigma.len(), s.sigma.len())).norm() < 1e-8);
            let hsv = hankel_singular_values(&g.p_blocks[i], &g.q_blocks[i]);
            for (a, b) in hsv.iter().zip(&s.sigma) {
                assert!((a - b).abs() <= 1e-8 * hsv[0]);
            }
            let orig = inst.plant.subsystem(i);
            for w in [0.0, 1.0, 10.0] {
                let x = freq_response(&s.system, w).unwrap();
                let y = freq_response(orig, w).unwrap();
                assert!(rel_diff_c(&x, &y, 1e-12) < 1e-8);
            }
        }
    }
}

#[test]
fn full_order_reduction_is_exact_on_the_demo() {
    let (plant, net) = demo();
    let bal = balance_network(&plant, &net, GramianKind::Structured, &LmiOptions::default()).unwrap();
    let r = OrderVector::new(vec![8, 10]);
    for method in [ReductionMethod::Truncation, ReductionMethod::Perturbation] {
        let red = reduce_balanced(&bal, &r, method).unwrap();
        let e = closed_loop_error(&net, &plant, &red.plant, 1e-9).unwrap();
        assert!(e <= 1e-10, "{method}: {e:e}");
    }
}

#[test]
fn method_signatures_on_the_demo_grid() {
    let (plant, net) = demo();
    let bal = balance_network(&plant, &net, GramianKind::Structured, &LmiOptions::default()).unwrap();
    let full = close_loop(&plant, &net).unwrap();
    let dc = freq_response(full.system(), 0.0).unwrap();
    for r1 in [8, 6, 4, 2] {
        for r2 in [10, 8, 6, 4, 2] {
            let r = OrderVector::new(vec![r1, r2]);
            let t = truncate(&bal, &r).unwrap();
            let cl_t = close_loop(&t.plant, &net).unwrap();
            assert_eq!(cl_t.d(), full.d());
            let s = singular_perturbation(&bal, &r).unwrap();
            let cl_s = close_loop(&s.plant, &net).unwrap();
            let dc_s = freq_response(cl_s.system(), 0.0).unwrap();
            assert!(rel_diff_c(&dc_s, &dc, 1e-12) <= 1e-8, "({r1},{r2})");
        }
    }
}

#[test]
fn theorem_one_bound_holds_with_generalized_gramians() {
    let mut r = rng(41);
    for _ in 0..4 {
        let orders = [r.gen_range(2..=4), r.gen_range(2..=4)];
        let inst = weakly_coupled_network(&mut r, &orders, 0.1);
        let bal = balance_network(&inst.plant, &inst.net, GramianKind::Generalized, &LmiOptions::default()).unwrap();
        for ro in all_orders(&orders) {
            let red = truncate(&bal, &ro).unwrap();
            let bound = theorem1_bound(&bal, &ro).unwrap();
            assert!(!bound.heuristic);
            let e = closed_loop_error(&inst.net, &inst.plant, &red.plant, 1e-9).unwrap();
            assert!(e <= bound.value * (1.0 + 1e-6) + 1e-12, "{:?}: {e:e} > {:e}", ro.0, bound.value);
        }
    }
}

#[test]
fn full_order_bound_is_exactly_zero() {
    let (plant, net) = demo();
    let bal = balance_network(&plant, &net, GramianKind::Structured, &LmiOptions::default()).unwrap();
    let b = theorem1_bound(&bal, &OrderVector::new(vec![8, 10])).unwrap();
    assert_eq!(b.value.to_bits(), 0.0f64.to_bits());
    assert!(b.heuristic);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn truncation_keeps_d_and_perturbation_keeps_dc(seed in any::<u64>(), q in 1usize..=3, frac in 0.0f64..1.0) {
        let mut r = rng(seed);
        let inst = random_network(&mut r, q, 5, true);
        let bal = balance_network(&inst.plant, &inst.net, GramianKind::Structured, &LmiOptions::default()).unwrap();
        let orders = OrderVector::new(
            inst.plant.state_dims().iter().map(|&n| ((n as f64) * frac).round() as usize).collect(),
        );
        let t = truncate(&bal, &orders).unwrap();
        for (i, s) in t.plant.subsystems().iter().enumerate() {
            prop_assert_eq!(s.d(), inst.plant.subsystem(i).d());
            prop_assert_eq!(s.order(), orders.0[i]);
        }
        if let Ok(s) = singular_perturbation(&bal, &orders) {
            for (i, sub) in s.plant.subsystems().iter().enumerate() {
                let x = freq_response(sub, 0.0).unwrap();
                let y = freq_response(inst.plant.subsystem(i), 0.0).unwrap();
                prop_assert!(rel_diff_c(&x, &y, 1e-12) <= 1e-8);
            }
        }
    }

    #[test]
    fn hankel_values_nonincreasing_and_nonnegative(seed in any::<u64>(), q in 1usize..=3) {
        let mut r = rng(seed);
        let inst = random_network(&mut r, q, 6, false);
        let bal = balance_network(&inst.plant, &inst.net, GramianKind::Structured, &LmiOptions::default()).unwrap();
        for s in &bal.subsystems {
            prop_assert!(s.sigma.iter().all(|v| *v >= 0.0));
            prop_assert!(s.sigma.windows(2).all(|w| w[0] >= w[1]));
        }
    }
}
