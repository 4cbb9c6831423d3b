use criterion::{criterion_group, criterion_main, Criterion};
use swarmkin_core::hierarchy::ClPairSolver;
use swarmkin_core::master::{bdg_master_rhs, cl_master_rhs};
use swarmkin_core::oracle::marginal_recursion;
use swarmkin_core::{
    BiasModel, CorrelationParams, GridField, MasterField, MasterKernel, NoiseModel,
};

fn recursion(c: &mut Criterion) {
    let p = CorrelationParams::from_gamma(0.05).unwrap();
    c.bench_function("marginal_recursion k=2 n_max=64", |b| {
        b.iter(|| marginal_recursion(2, &p, 64).unwrap())
    });
    c.bench_function("marginal_recursion k=3 n_max=16", |b| {
        b.iter(|| marginal_recursion(3, &p, 16).unwrap())
    });
}

fn pair_pde(c: &mut Criterion) {
    let g = 256;
    let mut solver = ClPairSolver::new(
        &GridField::uniform(1, g).unwrap(),
        &GridField::uniform(2, g).unwrap(),
        0.314,
    )
    .unwrap();
    c.bench_function("cl pair advance 256^2", |b| b.iter(|| solver.advance(0.5)));
}

fn master(c: &mut Criterion) {
    let noise = NoiseModel::new(0.05, 2).unwrap();
    let bias = BiasModel::new(0.5, 2).unwrap();
    let cl = MasterKernel::from_models(128, &noise, None).unwrap();
    let bdg = MasterKernel::from_models(64, &noise, Some(&bias)).unwrap();
    let f2 = MasterField::symmetrized(
        GridField::from_fn(2, 128, |t| 1.0 + 0.3 * (t[0] - t[1]).cos()).unwrap(),
    )
    .unwrap();
    let f2b = MasterField::symmetrized(
        GridField::from_fn(2, 64, |t| 1.0 + 0.3 * (t[0] - t[1]).cos()).unwrap(),
    )
    .unwrap();
    c.bench_function("cl master rhs N=2 G=128", |b| {
        b.iter(|| cl_master_rhs(&f2, &cl).unwrap())
    });
    c.bench_function("bdg master rhs N=2 G=64", |b| {
        b.iter(|| bdg_master_rhs(&f2b, &bdg).unwrap())
    });
    let noise3 = NoiseModel::new(0.05, 3).unwrap();
    let k3 = MasterKernel::from_models(24, &noise3, None).unwrap();
    let f3 = MasterField::uniform(3, 24).unwrap();
    c.bench_function("cl master rhs N=3 G=24", |b| {
        b.iter(|| cl_master_rhs(&f3, &k3).unwrap())
    });
}

criterion_group!(benches, recursion, pair_pde, master);
criterion_main!(benches);
