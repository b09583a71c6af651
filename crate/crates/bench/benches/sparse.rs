use criterion::{criterion_group, criterion_main, Criterion};
use gp_core::simulate::{quantiles, sparse_demo_data, SPARSE_DEMO_QUANTILES};
use gp_core::{nearest_inducing_blocks, DMatrix, GpExact, Kernel, MeanFunction, Scheme, SparseGp};

fn fits(c: &mut Criterion) {
    let (x, y) = sparse_demo_data(5000, 10.0, 0);
    let xu = DMatrix::from_row_slice(1, 12, &quantiles(x.row(0).transpose().as_slice(), &SPARSE_DEMO_QUANTILES));
    let mean = MeanFunction::Const(y.mean());
    let kernel = Kernel::se_iso(0.0, 0.0);
    let log_noise = 10f64.ln();

    let mut group = c.benchmark_group("fit_n5000_m12");
    group.sample_size(10);
    group.bench_function("Exact", |b| {
        b.iter(|| GpExact::fit(x.clone(), y.clone(), mean.clone(), kernel.clone(), log_noise).expect("exact fit"))
    });
    let schemes = [Scheme::Sor, Scheme::Dtc, Scheme::Fitc, Scheme::Fsa { blocks: nearest_inducing_blocks(&x, &xu) }];
    for scheme in schemes {
        group.bench_function(scheme.name(), |b| {
            b.iter(|| {
                SparseGp::fit(scheme.clone(), x.clone(), xu.clone(), y.clone(), mean.clone(), kernel.clone(), log_noise)
                    .expect("sparse fit")
            })
        });
    }
    group.finish();
}

criterion_group!(benches, fits);
criterion_main!(benches);
