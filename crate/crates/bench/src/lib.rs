//! Shared fixtures for the criterion benches.

use strucred::testkit::{random_stable, rng, weakly_coupled_network, NetworkInstance};
use strucred::{assemble_network, mass_spring, BlockDiagonalPlant, MassSpringOptions, NetworkMatrix, StateSpaceModel};

pub fn stable_system(n: usize, seed: u64) -> StateSpaceModel {
    random_stable(&mut rng(seed), n, 2, 2, true)
}

pub fn demo_network(k: f64) -> (BlockDiagonalPlant, NetworkMatrix) {
    let m = mass_spring(k, 8, 10, &MassSpringOptions::default()).expect("valid demo parameters");
    let net = assemble_network(&m.edges, &m.plant).expect("demo edges fit the plant");
    (m.plant, net)
}

pub fn weak_network(orders: &[usize], seed: u64) -> NetworkInstance {
    weakly_coupled_network(&mut rng(seed), orders, 0.1)
}
