use gp_core::simulate::sin_data;
use gp_core::{
    map_optimize, optimize, sample_prior, DMatrix, DVector, GpExact, Kernel, MeanFunction, Objective, OptimizeOptions,
    ParamGroup, Prior,
};

fn sin_gp() -> GpExact {
    let (x, y) = sin_data(10, 0.05, 1);
    GpExact::fit(x, y, MeanFunction::Zero, Kernel::se_iso(0.0, 0.0), -1.0).unwrap()
}

fn fd_gradient(gp: &mut GpExact, f: impl Fn(&GpExact) -> f64) -> Vec<f64> {
    let p0 = gp.params();
    let h = 1e-5;
    let g = (0..p0.len())
        .map(|j| {
            let mut p = p0.clone();
            p[j] += h;
            gp.set_params(&p).unwrap();
            let up = f(gp);
            p[j] -= 2.0 * h;
            gp.set_params(&p).unwrap();
            (up - f(gp)) / (2.0 * h)
        })
        .collect();
    gp.set_params(&p0).unwrap();
    g
}

#[test]
fn elastic_gp_reproduces_the_listing() {
    let mut gp = GpExact::elastic(2, MeanFunction::Const(0.0), Kernel::se_ard(vec![0.0, 0.0], 5.0), 0.0, 3000, 1000).unwrap();
    let empty = gp.to_string();
    assert!(empty.contains("Number of observations = 0"), "{empty}");
    assert!(empty.contains("No observation data"), "{empty}");
    assert_eq!(gp.log_marginal(), 0.0);

    let x = DMatrix::from_column_slice(2, 1, &[1.0, 2.0]);
    gp.append(&x, &[0.4]).unwrap();
    gp.append(&x, &[0.4]).unwrap();
    let shown = gp.to_string();
    assert!(shown.contains("Number of observations = 2"), "{shown}");
    assert!(shown.contains("Variance of observation noise = 1"), "{shown}");
    assert!(shown.contains("Marginal Log-Likelihood = -7.184"), "{shown}");
    assert_eq!(gp.capacity(), 3000);
}

#[test]
fn elastic_growth_preserves_data() {
    let mut gp = GpExact::elastic(1, MeanFunction::Zero, Kernel::se_iso(0.0, 0.0), -1.0, 3, 2).unwrap();
    for i in 0..5 {
        gp.append(&DMatrix::from_element(1, 1, i as f64), &[i as f64 * 0.1]).unwrap();
    }
    assert!(gp.capacity() >= 5);
    assert_eq!(gp.x().row(0).iter().copied().collect::<Vec<_>>(), [0.0, 1.0, 2.0, 3.0, 4.0]);
    assert!(gp.append(&DMatrix::from_element(2, 1, 0.0), &[0.0]).is_err());
}

#[test]
fn single_observation_prediction_closed_form() {
    let (x, xs) = (0.3, 1.1);
    let k = Kernel::se_iso(0.2, -0.1);
    let mean = MeanFunction::Const(0.5);
    let gp = GpExact::fit(DMatrix::from_element(1, 1, x), DVector::from_element(1, 2.0), mean, k.clone(), -0.7).unwrap();
    let (kxx, kxs, kss) = (k.eval(&[x], &[x]).unwrap(), k.eval(&[x], &[xs]).unwrap(), k.eval(&[xs], &[xs]).unwrap());
    let s2 = (-1.4f64).exp();
    let (m, v) = gp.predict_f(&DMatrix::from_element(1, 1, xs)).unwrap();
    assert!((m[0] - (0.5 + kxs / (kxx + s2) * 1.5)).abs() < 1e-14);
    assert!((v[0] - (kss - kxs * kxs / (kxx + s2))).abs() < 1e-14);
}

#[test]
fn zero_residual_leaves_only_the_determinant() {
    let (x, _) = sin_data(6, 0.0, 2);
    let mean = MeanFunction::Lin(vec![0.4]);
    let y = mean.eval(&x).unwrap();
    let gp = GpExact::fit(x, y, mean, Kernel::matern_iso(gp_core::MaternOrder::FiveHalves, 0.1, 0.2), -0.5).unwrap();
    let expected = -0.5 * gp.cholesky().log_det() - 3.0 * (2.0 * std::f64::consts::PI).ln();
    assert!((gp.log_marginal() - expected).abs() < 1e-12);
}

#[test]
fn noise_kernel_prior_draws_are_white() {
    let xs = DMatrix::from_row_slice(1, 4, &[0.0, 1.0, 2.0, 3.0]);
    let draws = sample_prior(&MeanFunction::Zero, &Kernel::noise(0.5f64.ln()), &xs, 10_000, 5).unwrap();
    let target = 0.25;
    for j in 0..4 {
        let col = draws.column(j);
        let var = col.iter().map(|v| v * v).sum::<f64>() / col.len() as f64;
        // Var of a squared normal is 2σ⁴.
        let se = (2.0 * target * target / col.len() as f64).sqrt();
        assert!((var - target).abs() < 3.0 * se, "column {j}: {var}");
    }
    assert_eq!(draws, sample_prior(&MeanFunction::Zero, &Kernel::noise(0.5f64.ln()), &xs, 10_000, 5).unwrap());
}

#[test]
fn prior_draw_covariance_matches_the_gram_matrix() {
    let xs = DMatrix::from_row_slice(1, 3, &[0.0, 0.4, 1.5]);
    let k = Kernel::se_iso(0.0, 0.0);
    let count = 10_000;
    let draws = sample_prior(&MeanFunction::Zero, &k, &xs, count, 9).unwrap();
    let gram = k.gram(&xs).unwrap().values;
    for a in 0..3 {
        for b in 0..3 {
            let prod: Vec<f64> = (0..count).map(|i| draws[(i, a)] * draws[(i, b)]).collect();
            let mean = prod.iter().sum::<f64>() / count as f64;
            let sd = (prod.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (count - 1) as f64).sqrt();
            assert!((mean - gram[(a, b)]).abs() < 3.0 * sd / (count as f64).sqrt(), "({a},{b}): {mean} vs {}", gram[(a, b)]);
        }
    }
}

#[test]
fn posterior_draws_collapse_onto_noiseless_data() {
    let (x, y) = sin_data(5, 0.0, 3);
    let gp = GpExact::fit(x.clone(), y.clone(), MeanFunction::Zero, Kernel::se_iso(0.0, 0.0), -9.0).unwrap();
    let draws = gp.sample_posterior(&x, 50, 1).unwrap();
    for row in draws.row_iter() {
        assert!((row.transpose() - &y).amax() < 1e-3);
    }
}

#[test]
fn optimize_improves_the_marginal_likelihood_to_a_stationary_point() {
    let mut gp = sin_gp();
    let initial = gp.log_marginal();
    let result = optimize(&mut gp, &OptimizeOptions::default()).unwrap();
    assert!(gp.log_marginal() > initial);
    assert_eq!(result.minimizer, gp.params());
    assert!((result.minimum + gp.log_marginal()).abs() < 1e-12);
    let g = fd_gradient(&mut gp, |gp| gp.log_marginal());
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(norm < 1e-6, "finite-difference gradient {g:?}");
}

#[test]
fn frozen_groups_are_bitwise_unchanged() {
    let mut gp = sin_gp();
    gp.set_params(&[-0.7, 0.3, -0.2]).unwrap();
    let before = gp.params();
    optimize(&mut gp, &OptimizeOptions { noise: false, ..OptimizeOptions::default() }).unwrap();
    let after = gp.params();
    assert_eq!(after[0].to_bits(), before[0].to_bits());
    assert_ne!(after[1..], before[1..]);

    let mut gp = sin_gp();
    let before = gp.params();
    optimize(&mut gp, &OptimizeOptions { kern: false, ..OptimizeOptions::default() }).unwrap();
    assert_eq!(gp.params()[1..].iter().map(|v| v.to_bits()).collect::<Vec<_>>(), before[1..].iter().map(|v| v.to_bits()).collect::<Vec<_>>());
}

#[test]
fn flat_priors_leave_the_trajectory_unchanged() {
    let mut plain = sin_gp();
    let ml = optimize(&mut plain, &OptimizeOptions::default()).unwrap();
    let mut flat = sin_gp();
    flat.set_priors(ParamGroup::Kernel, &[Prior::Flat, Prior::Flat]).unwrap();
    let map = map_optimize(&mut flat, &OptimizeOptions::default()).unwrap();
    assert_eq!(ml.iterations, map.iterations);
    for (a, b) in ml.minimizer.iter().zip(&map.minimizer) {
        assert!((a - b).abs() < 1e-8);
    }
}

#[test]
fn a_normal_prior_pulls_the_estimate_toward_its_mean() {
    let mut ml_gp = sin_gp();
    optimize(&mut ml_gp, &OptimizeOptions::default()).unwrap();
    let ml = ml_gp.params()[2];
    assert!(ml.abs() > 0.1, "log σ_f at the ML estimate is {ml}");

    let mut map_gp = sin_gp();
    map_gp.set_priors(ParamGroup::Kernel, &[Prior::Flat, Prior::Normal { mean: 0.0, sd: 1.0 }]).unwrap();
    map_optimize(&mut map_gp, &OptimizeOptions::default()).unwrap();
    let map = map_gp.params()[2];
    assert!(map.abs() < ml.abs() && map * ml >= 0.0, "ML {ml}, MAP {map}");

    let g = fd_gradient(&mut map_gp, |gp| gp.log_posterior());
    assert!(g.iter().all(|v| v.abs() < 1e-5), "{g:?}");
}

#[test]
fn bounds_project_the_start_and_hold_throughout() {
    let mut gp = sin_gp();
    let bounds = vec![(-0.5, 0.5), (-1.0, 1.0), (-1.0, 1.0)];
    let r = map_optimize(&mut gp, &OptimizeOptions { bounds: Some(bounds.clone()), ..OptimizeOptions::default() }).unwrap();
    for (v, (lo, hi)) in r.minimizer.iter().zip(&bounds) {
        assert!(lo <= v && v <= hi, "{v} outside [{lo}, {hi}]");
    }
    // The starting log-noise −1 lies below its lower bound.
    assert!(r.minimizer[0] >= -0.5);
}

#[test]
fn mll_decreases_as_responses_move_away_from_the_mean() {
    let (x, y) = sin_data(8, 0.1, 4);
    let mut last = f64::INFINITY;
    for scale in [1.0, 2.0, 4.0, 8.0] {
        let gp = GpExact::fit(x.clone(), &y * scale, MeanFunction::Zero, Kernel::se_iso(0.0, 0.0), -1.0).unwrap();
        assert!(gp.log_marginal() < last);
        last = gp.log_marginal();
    }
}

#[test]
fn objective_interface_mirrors_inherent_methods() {
    let gp = sin_gp();
    assert_eq!(Objective::params(&gp), gp.params());
    assert_eq!(Objective::param_groups(&gp), [ParamGroup::Noise, ParamGroup::Kernel, ParamGroup::Kernel]);
    assert_eq!(Objective::log_marginal(&gp), gp.log_marginal());
}
