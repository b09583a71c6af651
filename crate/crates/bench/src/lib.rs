//! Workloads shared by the benchmarks.

use gp_core::{Kernel, MaternOrder};

/// The benchmark kernel set over `d`-dimensional inputs, keyed by the
/// expression each one is written as on the command line.
pub fn kernel_suite(d: usize) -> Vec<(&'static str, Kernel)> {
    let se = || Kernel::se_iso(0.0, 0.0);
    let rq = || Kernel::rq_iso(0.0, 0.0, 0.0);
    vec![
        ("fix(SE(0.0,0.0), σ)", Kernel::fixed(se(), vec![true, false]).expect("SE has two parameters")),
        ("SE(0.0,0.0)", se()),
        ("Matern(1/2,0.0,0.0)", Kernel::matern_iso(MaternOrder::Half, 0.0, 0.0)),
        ("Masked(SE(0.0,0.0), [1])", Kernel::masked(se(), vec![0]).expect("dimension 0 exists")),
        ("RQ(0.0,0.0,0.0)", rq()),
        ("SE(0.0,0.0) + RQ(0.0,0.0,0.0)", Kernel::Sum(vec![se(), rq()])),
        (
            "Masked(SE(0.0,0.0), [1]) + Masked(RQ(0.0,0.0,0.0), collect(2:d))",
            Kernel::Sum(vec![
                Kernel::masked(se(), vec![0]).expect("dimension 0 exists"),
                Kernel::masked(rq(), (1..d).collect()).expect("d >= 2"),
            ]),
        ),
        ("(SE(0.0,0.0) + SE(0.5,0.5)) * RQ(0.0,0.0,0.0)", Kernel::Product(vec![Kernel::Sum(vec![se(), Kernel::se_iso(0.5, 0.5)]), rq()])),
        ("SE(0.0,0.0) * RQ(0.0,0.0,0.0)", Kernel::Product(vec![se(), rq()])),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_kernel_accepts_the_dimension() {
        for (name, k) in kernel_suite(10) {
            k.validate(10).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }
}
