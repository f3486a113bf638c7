use proptest::prelude::*;
use rand::Rng;
use strucred::linalg::{freq_response, Matrix};
use strucred::testkit::{lft_transfer, random_network, random_stable, rel_diff_c, rng};
use strucred::{
    assemble_network, close_loop, closed_loop_error, mass_spring, BlockDiagonalPlant, Edge, EdgeLists, Error,
    MassSpringOptions, NetworkMatrix,
};

fn unit_loop(dk: f64) -> (BlockDiagonalPlant, NetworkMatrix) {
    let g = strucred::StateSpaceModel::new(
        Matrix::from_element(1, 1, -1.0),
        Matrix::from_element(1, 1, 1.0),
        Matrix::from_element(1, 1, 1.0),
        Matrix::from_element(1, 1, 1.0),
    )
    .unwrap();
    let plant = BlockDiagonalPlant::aggregate(vec![g]).unwrap();
    let net = NetworkMatrix::new(
        Matrix::zeros(1, 1),
        Matrix::identity(1, 1),
        Matrix::identity(1, 1),
        Matrix::from_element(1, 1, dk),
    )
    .unwrap();
    (plant, net)
}

#[test]
fn closure_matches_lft_on_random_networks() {
    let mut r = rng(3);
    for _ in 0..20 {
        let q = r.gen_range(1..=4);
        let inst = random_network(&mut r, q, 5, true);
        let cl = close_loop(&inst.plant, &inst.net).unwrap();
        for w in [0.0, 0.3, 2.0, 40.0] {
            let x = freq_response(cl.system(), w).unwrap();
            let y = lft_transfer(&inst.plant, &inst.net, w);
            assert!(rel_diff_c(&x, &y, 1e-12) < 1e-8);
        }
    }
}

#[test]
fn algebraic_loop_at_unity_is_ill_posed() {
    let (plant, net) = unit_loop(1.0);
    assert!(matches!(close_loop(&plant, &net), Err(Error::IllPosed { .. })));
    let (plant, net) = unit_loop(0.5);
    assert!(close_loop(&plant, &net).is_ok());
}

#[test]
fn mass_spring_network_matrix() {
    let k = 10.0;
    let demo = mass_spring(k, 8, 10, &MassSpringOptions::default()).unwrap();
    let n = assemble_network(&demo.edges, &demo.plant).unwrap().to_matrix();
    #[rustfmt::skip]
    let expected = Matrix::from_row_slice(5, 3, &[
        0.0, 1.0, 0.0,
        0.0, 0.0, 1.0,
        1.0, 0.0, 0.0,
        0.0, -k, k,
        0.0, k, -k,
    ]);
    assert_eq!(n, expected);
}

#[test]
fn duplicate_edges_accumulate_and_bad_indices_fail() {
    let mut r = rng(1);
    let plant = BlockDiagonalPlant::aggregate(vec![random_stable(&mut r, 2, 1, 1, false)]).unwrap();
    let mut edges = EdgeLists {
        iedges: vec![Edge::new(1, 1, 0.25), Edge::new(1, 1, 0.5)],
        einedges: vec![Edge::unit(1, 1)],
        eoutedges: vec![Edge::unit(1, 1)],
        eedges: vec![],
        m_ext: 1,
        p_ext: 1,
    };
    assert_eq!(assemble_network(&edges, &plant).unwrap().dk[(0, 0)], 0.75);
    edges.iedges.push(Edge::new(2, 1, 1.0));
    assert!(matches!(
        assemble_network(&edges, &plant),
        Err(Error::IndexOutOfRange { .. })
    ));
}

#[test]
fn error_of_identical_plants_is_zero() {
    let mut r = rng(21);
    let inst = random_network(&mut r, 3, 4, true);
    let e = closed_loop_error(&inst.net, &inst.plant, &inst.plant, 1e-9).unwrap();
    assert!(e <= 1e-12);
}

#[test]
fn unstable_reduced_loop_reports_infinity() {
    let (plant, net) = unit_loop(0.25);
    let bad = strucred::StateSpaceModel::new(
        Matrix::from_element(1, 1, 3.0),
        Matrix::from_element(1, 1, 1.0),
        Matrix::from_element(1, 1, 1.0),
        Matrix::from_element(1, 1, 1.0),
    )
    .unwrap();
    let reduced = BlockDiagonalPlant::aggregate(vec![bad]).unwrap();
    assert_eq!(closed_loop_error(&net, &plant, &reduced, 1e-9).unwrap(), f64::INFINITY);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn closure_is_the_lft(seed in any::<u64>(), q in 1usize..=4, w in 0.0f64..100.0) {
        let mut r = rng(seed);
        let inst = random_network(&mut r, q, 6, true);
        let cl = close_loop(&inst.plant, &inst.net).unwrap();
        let x = freq_response(cl.system(), w).unwrap();
        let y = lft_transfer(&inst.plant, &inst.net, w);
        prop_assert!(rel_diff_c(&x, &y, 1e-12) < 1e-8);
    }

    #[test]
    fn n_matrix_blocks_round_trip(seed in any::<u64>(), q in 1usize..=3) {
        let mut r = rng(seed);
        let inst = random_network(&mut r, q, 3, false);
        let n = inst.net.to_matrix();
        let (pe, me) = inst.net.de.shape();
        prop_assert_eq!(n.view((0, 0), (pe, me)).clone_owned(), inst.net.de.clone());
        prop_assert_eq!(n.view((pe, me), inst.net.dk.shape()).clone_owned(), inst.net.dk.clone());
    }
}
