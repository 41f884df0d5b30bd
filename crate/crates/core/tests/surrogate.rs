use mixbo::space::{BlockInput, ParamSpec, SearchSpace};
use mixbo::surrogate::{
    gram_matrix, indicator_kernel, linear_kernel, matern52, mixture_kernel, GpModel, IndicatorMode, KernelParams,
    SurrogateConfig,
};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mixed_space() -> SearchSpace {
    SearchSpace::new(vec![
        ParamSpec::real("a", 0.0, 1.0),
        ParamSpec::real_log("b", 1e-3, 1.0),
        ParamSpec::real("c", -5.0, 5.0),
        ParamSpec::integer("n", 0, 10),
        ParamSpec::integer("m", 1, 64),
        ParamSpec::categorical("k", ["p", "q", "r", "s"]),
        ParamSpec::boolean("f"),
    ])
    .unwrap()
}

fn random_inputs(space: &SearchSpace, n: usize, rng: &mut ChaCha8Rng) -> Vec<BlockInput> {
    (0..n)
        .map(|_| {
            let p = space.random_point(rng);
            space.blocks(&space.warp(&p).unwrap().0, false)
        })
        .collect()
}

fn random_params(rng: &mut ChaCha8Rng, d: usize) -> KernelParams {
    let ls = (0..d).map(|_| 10f64.powf(rng.random_range(-2.3..0.3))).collect();
    KernelParams::new(ls, rng.random_range(0.05..20.0), rng.random_range(0.0..=1.0), rng.random_range(1e-6..1e-2))
}

/// Modified Bessel function of the second kind by quadrature of
/// `K_nu(z) = ∫_0^∞ exp(-z cosh t) cosh(nu t) dt`.
fn bessel_k(nu: f64, z: f64) -> f64 {
    let (upper, n) = (12.0, 200_000);
    let h = upper / n as f64;
    let f = |t: f64| (-z * t.cosh()).exp() * (nu * t).cosh();
    let mut s = f(0.0) + f(upper);
    for i in 1..n {
        s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn matern_bessel_form(d: f64, nu: f64) -> f64 {
    // Γ(2.5) = 3√π / 4
    let gamma = 0.75 * std::f64::consts::PI.sqrt();
    let r = (2.0 * nu).sqrt() * d;
    2f64.powf(1.0 - nu) / gamma * r.powf(nu) * bessel_k(nu, r)
}

#[test]
fn matern_closed_form_matches_bessel_form() {
    for &d in &[0.05, 0.3, 1.0, 1.7, 3.0] {
        let closed = matern52(&[d], &[0.0], &[1.0], 1.0).unwrap();
        let bessel = matern_bessel_form(d, 2.5);
        assert!((closed - bessel).abs() < 1e-7, "d={d}: {closed} vs {bessel}");
    }
    let v = matern52(&[1.0], &[0.0], &[1.0], 1.0).unwrap();
    assert!((v - 0.52399).abs() < 1e-5);
}

#[test]
fn matern_properties() {
    let k = |d: f64| matern52(&[d], &[0.0], &[1.0], 2.0).unwrap();
    assert_eq!(k(0.0), 2.0);
    assert!(k(0.5) > k(1.0) && k(1.0) > k(2.0));
    assert!(k(40.0) > 0.0 && k(40.0) < 2.0);
    assert!(matern52(&[0.0, 1.0], &[0.0], &[1.0], 1.0).is_err());
}

#[test]
fn sub_kernel_examples() {
    assert_eq!(linear_kernel(&[1.0, 2.0], &[3.0, 4.0], 1.0).unwrap(), 11.0);
    assert_eq!(linear_kernel(&[0.0, 0.0], &[3.0, 4.0], 1.0).unwrap(), 0.0);
    assert_eq!(linear_kernel(&[0.3, 0.7], &[0.2, 0.9], 2.0).unwrap(), 2.0 * linear_kernel(&[0.3, 0.7], &[0.2, 0.9], 1.0).unwrap());
    assert_eq!(indicator_kernel(&[0, 1], &[0, 1], IndicatorMode::Mean).unwrap(), 1.0);
    assert_eq!(indicator_kernel(&[0, 1], &[0, 2], IndicatorMode::Mean).unwrap(), 0.5);
    assert_eq!(indicator_kernel(&[0, 1], &[0, 2], IndicatorMode::Strict).unwrap(), 0.0);
    assert_eq!(indicator_kernel(&[0], &[1], IndicatorMode::Mean).unwrap(), 0.0);
    assert_eq!(indicator_kernel(&[], &[], IndicatorMode::Mean).unwrap(), 1.0);
}

#[test]
fn gram_psd_on_mixed_points() {
    let space = mixed_space();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let inputs = random_inputs(&space, 50, &mut rng);
    let p = random_params(&mut rng, 3);
    let mut g = gram_matrix(&inputs, &p, IndicatorMode::Mean);
    for i in 0..50 {
        g[(i, i)] += 1e-6;
    }
    assert!(SymmetricEigen::new(g).eigenvalues.min() >= 0.0);
}

#[test]
fn gram_rows_of_duplicates_match() {
    let space = mixed_space();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut inputs = random_inputs(&space, 6, &mut rng);
    inputs.push(inputs[2].clone());
    let p = random_params(&mut rng, 3);
    let g = gram_matrix(&inputs, &p, IndicatorMode::Mean);
    assert_eq!(g.row(2), g.row(6));
    let single = gram_matrix(&inputs[..1], &p, IndicatorMode::Mean);
    assert_eq!(single[(0, 0)], mixture_kernel(&inputs[0], &inputs[0], &p, IndicatorMode::Mean).unwrap());
}

proptest! {
    #[test]
    fn mixture_symmetric(seed in any::<u64>()) {
        let space = mixed_space();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_inputs(&space, 2, &mut rng);
        let p = random_params(&mut rng, 3);
        for mode in [IndicatorMode::Mean, IndicatorMode::Strict] {
            prop_assert_eq!(mixture_kernel(&h[0], &h[1], &p, mode).unwrap(), mixture_kernel(&h[1], &h[0], &p, mode).unwrap());
        }
    }
}

fn dense_oracle(
    inputs: &[BlockInput],
    targets: &[f64],
    params: &KernelParams,
    queries: &[BlockInput],
    jitter: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = inputs.len();
    let mean = targets.iter().sum::<f64>() / n as f64;
    let std = (targets.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n as f64).sqrt().max(1e-8);
    let y = DVector::from_iterator(n, targets.iter().map(|t| (t - mean) / std));
    let k = |a: &BlockInput, b: &BlockInput| mixture_kernel(a, b, params, IndicatorMode::Mean).unwrap();
    let kk = DMatrix::from_fn(n, n, |i, j| k(&inputs[i], &inputs[j]) + if i == j { params.noise_variance + jitter } else { 0.0 });
    let inv = kk.try_inverse().unwrap();
    let mut means = vec![];
    let mut vars = vec![];
    for q in queries {
        let ks = DVector::from_iterator(n, inputs.iter().map(|h| k(h, q)));
        means.push(mean + std * (ks.transpose() * &inv * &y)[0]);
        vars.push(std * std * (k(q, q) - (ks.transpose() * &inv * &ks)[0]));
    }
    (means, vars)
}

fn x_only(v: &[f64]) -> BlockInput {
    BlockInput { x: v.to_vec(), y: vec![], z: vec![] }
}

#[test]
fn posterior_matches_dense_solve_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let space = mixed_space();
    for n in [2, 3] {
        // pure Matérn and full mixture cases
        let cases: Vec<(Vec<BlockInput>, KernelParams)> = vec![
            ((0..n).map(|i| x_only(&[0.1 + 0.35 * i as f64, 0.5])).collect(), KernelParams::new(vec![0.4, 0.7], 1.3, 0.5, 1e-4)),
            (random_inputs(&space, n, &mut rng), random_params(&mut rng, 3)),
        ];
        for (inputs, params) in cases {
            let targets: Vec<f64> = (0..n).map(|i| (i as f64 * 1.7).sin() + 0.2 * i as f64).collect();
            let queries: Vec<BlockInput> = if inputs[0].y.is_empty() {
                vec![x_only(&[0.2, 0.4]), x_only(&[0.9, 0.1])]
            } else {
                random_inputs(&space, 2, &mut rng)
            };
            let model = GpModel::with_params(inputs.clone(), &targets, params.clone(), IndicatorMode::Mean).unwrap();
            let (m, v) = model.predict(&queries).unwrap();
            let (om, ov) = dense_oracle(&inputs, &targets, &params, &queries, model.jitter);
            for j in 0..queries.len() {
                assert!((m[j] - om[j]).abs() < 1e-10, "n={n} mean {} vs {}", m[j], om[j]);
                assert!((v[j] - ov[j].max(0.0)).abs() < 1e-10, "n={n} var {} vs {}", v[j], ov[j]);
            }
        }
    }
}

#[test]
fn fitted_gp_interpolates_sine() {
    let xs: Vec<f64> = (0..8).map(|i| i as f64 / 7.0).collect();
    let ys: Vec<f64> = xs.iter().map(|x| (6.0 * x).sin()).collect();
    let inputs: Vec<BlockInput> = xs.iter().map(|&x| x_only(&[x])).collect();
    let model = GpModel::fit(inputs.clone(), &ys, &SurrogateConfig::default(), 0).unwrap();
    let m = model.predict_mean(&inputs).unwrap();
    for (a, b) in m.iter().zip(&ys) {
        assert!((a - b).abs() < 1e-3, "{a} vs {b}");
    }
}

#[test]
fn fit_beats_defaults_and_every_probe() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let space = mixed_space();
    let inputs = random_inputs(&space, 30, &mut rng);
    let targets: Vec<f64> = inputs.iter().map(|h| h.x[0] * 3.0 - h.y[0] + h.z[0] as f64 * 0.5).collect();
    let config = SurrogateConfig::default();
    let model = GpModel::fit(inputs, &targets, &config, 11).unwrap();
    let default = model.log_likelihood_at(&config.default_params(3)).unwrap();
    assert!(model.log_marginal_likelihood >= default - 1e-9);
    assert!(!model.probes.is_empty());
    for p in &model.probes {
        assert!(model.log_marginal_likelihood >= p - 1e-9);
    }
}

#[test]
fn cholesky_reconstructs_covariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let space = mixed_space();
    let inputs = random_inputs(&space, 25, &mut rng);
    let targets: Vec<f64> = (0..25).map(|_| rng.random::<f64>()).collect();
    let model = GpModel::fit(inputs.clone(), &targets, &SurrogateConfig::default(), 1).unwrap();
    let mut k = gram_matrix(&inputs, &model.params, model.indicator);
    for i in 0..25 {
        k[(i, i)] += model.params.noise_variance + model.jitter;
    }
    let rec = &model.cholesky * model.cholesky.transpose();
    assert!((rec - &k).norm() / k.norm() < 1e-8);
    // training targets are reproduced within the noise level (standardized units)
    let m = model.predict_mean(&inputs).unwrap();
    for (a, b) in m.iter().zip(&targets) {
        let resid = (a - b).abs() / model.target_std;
        assert!(resid <= 3.0 * (model.params.noise_variance + model.jitter).sqrt() + 1e-9, "{resid}");
    }
}

#[test]
fn destandardization_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let space = mixed_space();
    let inputs = random_inputs(&space, 12, &mut rng);
    let queries = random_inputs(&space, 5, &mut rng);
    let y: Vec<f64> = (0..12).map(|_| rng.random::<f64>()).collect();
    let params = random_params(&mut rng, 3);
    let (c, b) = (3.5, -20.0);
    let ty: Vec<f64> = y.iter().map(|v| c * v + b).collect();
    let m1 = GpModel::with_params(inputs.clone(), &y, params.clone(), IndicatorMode::Mean).unwrap().predict_mean(&queries).unwrap();
    let m2 = GpModel::with_params(inputs, &ty, params, IndicatorMode::Mean).unwrap().predict_mean(&queries).unwrap();
    for (a, t) in m1.iter().zip(&m2) {
        assert!((c * a + b - t).abs() < 1e-8);
    }
}

#[test]
fn far_query_reverts_to_prior() {
    let inputs: Vec<BlockInput> = (0..5).map(|i| x_only(&[i as f64 * 0.02])).collect();
    let targets = [1.0, 2.0, 0.5, 3.0, 1.5];
    let params = KernelParams::new(vec![0.01], 1.0, 0.5, 1e-4);
    let model = GpModel::with_params(inputs, &targets, params, IndicatorMode::Mean).unwrap();
    let (m, v) = model.predict(&[x_only(&[50.0])]).unwrap();
    let prior = model.target_std * model.target_std;
    assert!((m[0] - model.target_mean).abs() < 1e-6);
    assert!((v[0] - prior).abs() / prior < 0.01);
}

#[test]
fn constant_targets() {
    let inputs: Vec<BlockInput> = (0..6).map(|i| x_only(&[i as f64 / 5.0])).collect();
    let model = GpModel::fit(inputs, &[4.0; 6], &SurrogateConfig::default(), 0).unwrap();
    let (m, v) = model.predict(&[x_only(&[0.33]), x_only(&[0.9])]).unwrap();
    for (a, s2) in m.iter().zip(&v) {
        assert!((a - 4.0).abs() < 1e-6);
        assert!(*s2 <= model.target_std * model.target_std * model.params.signal_variance * 1.000001);
    }
}

#[test]
fn sampling_statistics() {
    let inputs: Vec<BlockInput> = [0.1, 0.4, 0.8].iter().map(|&x| x_only(&[x])).collect();
    let model = GpModel::with_params(inputs.clone(), &[1.0, -0.5, 0.3], KernelParams::new(vec![0.3], 1.0, 0.5, 1e-4), IndicatorMode::Mean).unwrap();
    let queries = vec![x_only(&[0.25]), x_only(&[0.6]), x_only(&[0.95])];
    let (mean, cov) = model.posterior(&queries).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let count = 10_000;
    let s = model.sample(&queries, count, &mut rng).unwrap();
    let emp_mean: Vec<f64> = (0..3).map(|j| s.column(j).sum() / count as f64).collect();
    for j in 0..3 {
        let se = (cov[(j, j)] / count as f64).sqrt();
        assert!((emp_mean[j] - mean[j]).abs() <= 3.0 * se, "dim {j}");
    }
    let emp_cov = DMatrix::from_fn(3, 3, |a, b| {
        (0..count).map(|r| (s[(r, a)] - emp_mean[a]) * (s[(r, b)] - emp_mean[b])).sum::<f64>() / (count - 1) as f64
    });
    assert!((&emp_cov - &cov).norm() / cov.norm() < 0.05);

    // exact training input of a near-noiseless model: samples collapse onto the target
    let tight = GpModel::with_params(inputs.clone(), &[1.0, -0.5, 0.3], KernelParams::new(vec![0.3], 1.0, 0.5, 1e-8), IndicatorMode::Mean).unwrap();
    let s = tight.sample(&inputs[..1], 1000, &mut rng).unwrap();
    assert!(s.iter().all(|v| (v - 1.0).abs() < 1e-2));

    // reproducible given the rng seed
    let a = model.sample(&queries, 5, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let b = model.sample(&queries, 5, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert_eq!(a, b);
}
