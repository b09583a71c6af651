use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gp_bench::kernel_suite;
use gp_core::simulate::bench_data;
use gp_core::{GpExact, MeanFunction};

/// Log-likelihood plus gradient for each benchmark kernel.
fn mll_and_gradient(c: &mut Criterion) {
    let (n, d) = (1000, 10);
    let (x, y) = bench_data(n, d, 0);
    let mut group = c.benchmark_group("mll_gradient");
    group.sample_size(10);
    for (name, kernel) in kernel_suite(d) {
        let mut gp = GpExact::fit(x.clone(), y.clone(), MeanFunction::Zero, kernel, 0.0).expect("benchmark problem fits");
        let params = gp.params();
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                gp.set_params(&params).expect("parameters are unchanged");
                std::hint::black_box(gp.grad_log_marginal())
            })
        });
    }
    group.finish();
}

criterion_group!(benches, mll_and_gradient);
criterion_main!(benches);
