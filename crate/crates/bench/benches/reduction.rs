use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use strucred::gramians::LmiOptions;
use strucred::reduction::balance_network;
use strucred::{
    build_error_plant, close_loop, closed_loop_error, generalized_gramians, improve, truncate, DescentOptions,
    GramianKind, OrderVector,
};
use strucred_bench::{demo_network, weak_network};

fn structured_balance(c: &mut Criterion) {
    let (plant, net) = demo_network(10.0);
    c.bench_function("balance_structured_demo", |b| {
        b.iter(|| balance_network(black_box(&plant), &net, GramianKind::Structured, &LmiOptions::default()).unwrap())
    });
}

fn generalized(c: &mut Criterion) {
    let inst = weak_network(&[4, 4], 3);
    let cl = close_loop(&inst.plant, &inst.net).unwrap();
    let mut g = c.benchmark_group("generalized_gramians");
    g.sample_size(10);
    g.bench_function("weak_4_4", |b| {
        b.iter(|| generalized_gramians(black_box(&cl), &[4, 4], &LmiOptions::default()).unwrap())
    });
    g.finish();
}

fn sweep_cell(c: &mut Criterion) {
    let (plant, net) = demo_network(10.0);
    let bal = balance_network(&plant, &net, GramianKind::Structured, &LmiOptions::default()).unwrap();
    let r = OrderVector::new(vec![6, 4]);
    c.bench_function("truncate_and_measure_6_4", |b| {
        b.iter(|| {
            let red = truncate(&bal, black_box(&r)).unwrap();
            closed_loop_error(&net, &plant, &red.plant, 1e-9).unwrap()
        })
    });
    let seed = truncate(&bal, &r).unwrap();
    let ep = build_error_plant(&net, &plant, &r).unwrap();
    let opts = DescentOptions {
        max_iter: 5,
        ..DescentOptions::default()
    };
    let mut g = c.benchmark_group("descent");
    g.sample_size(10);
    g.bench_function("five_iterations_6_4", |b| b.iter(|| improve(&ep, black_box(&seed), &opts).unwrap()));
    g.finish();
}

criterion_group!(benches, structured_balance, generalized, sweep_cell);
criterion_main!(benches);
