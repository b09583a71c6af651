use gp_core::simulate::sin_data;
use gp_core::{
    mcmc, optimize, DMatrix, DVector, GpExact, GpMc, HmcConfig, Kernel, Likelihood, MeanFunction, OptimizeOptions,
    ParamGroup, Prior, DEFAULT_QUAD_ORDER,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[test]
fn marginalizing_the_whitened_latents_recovers_the_exact_evidence() {
    let x = DMatrix::from_row_slice(1, 4, &[-1.0, -0.2, 0.5, 1.4]);
    let y = DVector::from_vec(vec![-0.6, 0.1, 0.4, 1.1]);
    let (mean, kernel, log_sigma) = (MeanFunction::Const(0.1), Kernel::se_iso(0.2, -0.1), -0.5);
    let exact = GpExact::fit(x.clone(), y.clone(), mean.clone(), kernel.clone(), log_sigma).unwrap();
    let mut mc = GpMc::new(x, y, mean, kernel, Likelihood::Gaussian { log_sigma }).unwrap();

    // Proposal v ~ N(0, I) cancels the latent prior, leaving p(y | f(v)).
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut state = mc.params();
    let draws = 200_000;
    let weights: Vec<f64> = (0..draws)
        .map(|_| {
            let mut sq = 0.0;
            for v in state.iter_mut().take(4) {
                *v = StandardNormal.sample(&mut rng);
                sq += *v * *v;
            }
            mc.set_params(&state).unwrap();
            (mc.log_posterior() - (-0.5 * sq - 2.0 * LN_2PI)).exp()
        })
        .collect();
    let (estimate, se) = mean_and_se(&weights);
    let evidence = exact.log_marginal().exp();
    assert!((estimate - evidence).abs() < 3.0 * se, "{estimate} ± {se} vs {evidence}");
}

#[test]
fn whitened_latents_push_forward_to_the_gram_matrix() {
    let x = DMatrix::from_row_slice(1, 3, &[0.0, 0.5, 2.0]);
    let kernel = Kernel::matern_iso(gp_core::MaternOrder::FiveHalves, 0.0, 0.3);
    let gram = kernel.gram(&x).unwrap().values;
    let mut mc = GpMc::new(x, DVector::from_vec(vec![1.0, 0.0, 2.0]), MeanFunction::Zero, kernel, Likelihood::Poisson).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let count = 10_000;
    let mut state = mc.params();
    let fs: Vec<DVector<f64>> = (0..count)
        .map(|_| {
            for v in state.iter_mut().take(3) {
                *v = StandardNormal.sample(&mut rng);
            }
            mc.set_params(&state).unwrap();
            mc.latent().clone()
        })
        .collect();
    for a in 0..3 {
        for b in 0..3 {
            let prods: Vec<f64> = fs.iter().map(|f| f[a] * f[b]).collect();
            let (m, se) = mean_and_se(&prods);
            assert!((m - gram[(a, b)]).abs() < 3.0 * se, "({a},{b}): {m} vs {}", gram[(a, b)]);
        }
    }
}

#[test]
fn uniform_priors_confine_the_chain() {
    let x = DMatrix::from_row_slice(1, 5, &[0.0, 1.0, 2.0, 3.0, 4.0]);
    let y = DVector::from_vec(vec![0.0, 1.0, 1.0, 0.0, 1.0]);
    let mut gp = GpMc::new(x, y, MeanFunction::Zero, Kernel::se_iso(0.0, 0.0), Likelihood::Bernoulli).unwrap();
    let (lo, hi) = (-0.3, 0.3);
    gp.set_priors(ParamGroup::Kernel, &[Prior::Uniform { lower: lo, upper: hi }; 2]).unwrap();
    let cfg = HmcConfig { epsilon: 0.2, n_iter: 2000, seed: 8, ..HmcConfig::default() };
    let chain = mcmc(&mut gp, &cfg).unwrap();
    let theta = chain.samples.rows(5, 2);
    assert!(theta.iter().all(|&t| (lo..=hi).contains(&t)));
    assert!(chain.acceptance_rate < 1.0, "some proposals must leave the support");
    assert!(theta.row(0).iter().any(|&t| t != 0.0));

    let mut outside = gp.params();
    outside[5] = 0.5;
    gp.set_params(&outside).unwrap();
    assert_eq!(gp.log_posterior(), f64::NEG_INFINITY);
}

#[test]
fn hyperparameter_chain_concentrates_near_the_ml_estimate() {
    let (x, y) = sin_data(30, 0.1, 12);
    let mut gp = GpExact::fit(x, y, MeanFunction::Zero, Kernel::se_iso(0.0, 0.0), -1.0).unwrap();
    optimize(&mut gp, &OptimizeOptions::default()).unwrap();
    let ml = gp.params();
    let cfg = HmcConfig { epsilon: 0.05, n_iter: 3000, burn: 500, seed: 2, ..HmcConfig::default() };
    let chain = mcmc(&mut gp, &cfg).unwrap();
    for (i, name) in chain.names.iter().enumerate() {
        let mean = chain.samples.row(i).mean();
        assert!((mean - ml[i]).abs() < 0.5, "{name}: posterior mean {mean} vs ML {}", ml[i]);
    }
}

#[test]
fn vanishing_steps_are_always_accepted() {
    let (x, y) = sin_data(6, 0.1, 5);
    let mut gp = GpMc::new(x, y, MeanFunction::Zero, Kernel::se_iso(0.0, 0.0), Likelihood::Gaussian { log_sigma: -1.0 }).unwrap();
    let cfg = HmcConfig { epsilon: 1e-6, l_min: 1, l_max: 1, n_iter: 200, seed: 4, ..HmcConfig::default() };
    assert_eq!(mcmc(&mut gp, &cfg).unwrap().acceptance_rate, 1.0);
}

#[test]
fn predictions_are_deterministic_given_samples() {
    let x = DMatrix::from_row_slice(1, 6, &[0.0, 0.5, 1.0, 1.5, 2.0, 2.5]);
    let y = DVector::from_vec(vec![3.0, 1.0, 4.0, 1.0, 5.0, 9.0]);
    let mut gp = GpMc::new(x, y, MeanFunction::Zero, Kernel::se_iso(0.0, 0.5), Likelihood::Poisson).unwrap();
    let chain = mcmc(&mut gp, &HmcConfig { epsilon: 0.05, n_iter: 200, seed: 1, ..HmcConfig::default() }).unwrap();
    let xs = DMatrix::from_row_slice(1, 3, &[-0.5, 1.25, 3.0]);
    let a = gp.predict_y(&chain.samples, &xs, DEFAULT_QUAD_ORDER).unwrap();
    let b = gp.predict_y(&chain.samples, &xs, DEFAULT_QUAD_ORDER).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.mean.shape(), (200, 3));
    assert!(a.mean.iter().all(|&m| m > 0.0) && a.variance.iter().all(|&v| v > 0.0));
}
