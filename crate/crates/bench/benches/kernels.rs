use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use fracbubble::energy::{Objective, ReducedEnergy};
use fracbubble::green::BallRestricted;
use fracbubble::kernel::KernelK;
use fracbubble::Criticality;
use fracbubble_bench::{desk_constants, reduction_system, restricted_interval};

fn kernel(c: &mut Criterion) {
    let k = KernelK::new(1, 0.3);
    c.bench_function("kernel_partials", |b| b.iter(|| k.partials(std::hint::black_box(0.7), 1.3)));
}

fn operators(c: &mut Criterion) {
    let mut g = c.benchmark_group("restricted");
    g.sample_size(10);
    g.bench_function("build_400", |b| b.iter(|| restricted_interval(400).unwrap()));
    let op = restricted_interval(400).unwrap();
    let f = vec![1.0; op.grid().len()];
    g.bench_function("solve_400", |b| {
        b.iter_batched(|| op.clone(), |fresh| fresh.solve(&f).unwrap(), BatchSize::LargeInput)
    });
    g.finish();
}

fn reduction(c: &mut Criterion) {
    let consts = desk_constants().unwrap();
    let sys = reduction_system(&consts, 0.04, Some(400)).unwrap();
    let h: Vec<f64> = sys.nodes().iter().map(|&x| sys.norm.weight(x)).collect();
    let mut g = c.benchmark_group("reduction");
    g.sample_size(10);
    g.bench_function("projected_linear_400", |b| b.iter(|| sys.solve_projected_linear(&h).unwrap()));
    g.bench_function("nonlinear_400", |b| b.iter(|| sys.solve_nonlinear(50, 1e-10).unwrap()));
    g.finish();
}

fn landscape(c: &mut Criterion) {
    let consts = desk_constants().unwrap();
    let ball = BallRestricted::new(&consts, vec![0.0], 1.0);
    let e = ReducedEnergy::new(&ball, 2, Criticality::Supercritical);
    c.bench_function("psi_gradient_m2", |b| b.iter(|| e.evaluate(&[-0.3, 0.4, 1.1, 0.8]).unwrap()));
}

criterion_group!(benches, kernel, operators, reduction, landscape);
criterion_main!(benches);
