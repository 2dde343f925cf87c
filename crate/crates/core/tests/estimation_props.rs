use nalgebra::{DMatrix, DVector};
use panel_hd::lasso::{self, Quadratic, SolverOpts};
use panel_hd::longrun::{self, KernelSpec};
use panel_hd::montecarlo::{self, DgpSpec, Model};
use panel_hd::nodewise::{self, NodewiseTuning};
use panel_hd::PanelDataset;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

#[test]
fn nodewise_recovers_population_coefficient() {
    // x2 = 0.5 x1 + sqrt(0.75) z gives corr 0.5 and gamma_1 = 0.5
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let n = 10_000;
    let mut x = DMatrix::zeros(n, 2);
    for r in 0..n {
        let a = normal(&mut rng);
        x[(r, 0)] = a;
        x[(r, 1)] = 0.5 * a + 0.75f64.sqrt() * normal(&mut rng);
    }
    let ds = PanelDataset::from_arrays(100, 100, DVector::zeros(n), x).unwrap();
    let prec = nodewise::nodewise_fit(&ds, &NodewiseTuning::BicPerRow, &SolverOpts::default()).unwrap();
    assert!((prec.gamma[0][0] - 0.5).abs() < 0.05, "gamma = {}", prec.gamma[0][0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn exact_inverse_debiasing_is_least_squares(seed in any::<u64>(), d in 2usize..10, frac in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 4 * d + 10;
        let x = DMatrix::from_fn(n, d, |_, _| normal(&mut rng));
        let y = DVector::from_fn(n, |_, _| normal(&mut rng));
        let q = Quadratic::from_design(&x, &y).unwrap();
        let ones = vec![1.0; d];
        let fit = lasso::solve(&q, frac * lasso::lambda_max(&q, &ones), &ones, None, &SolverOpts::default()).unwrap();
        let mut prec = nodewise::nodewise_from_quadratic(&q, &NodewiseTuning::Fixed(vec![0.1; d]), &SolverOpts::default()).unwrap();
        prec.omega = q.gram.clone().try_inverse().unwrap();
        let bc = nodewise::debias_quadratic(&q, &fit, &prec).unwrap();
        let ols = (x.transpose() * &x).try_inverse().unwrap() * x.transpose() * &y;
        prop_assert!((bc.beta_bc - ols).amax() < 1e-8);
    }

    #[test]
    fn thresholding_is_idempotent_and_symmetric(seed in any::<u64>(), d in 1usize..8, u in 0.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(d, d, |_, _| normal(&mut rng));
        let sym = &a + a.transpose();
        let once = longrun::threshold_matrix(&sym, u);
        prop_assert_eq!(&longrun::threshold_matrix(&once, u), &once);
        prop_assert_eq!(&once.transpose(), &once);
        for (x, y) in once.iter().zip(sym.iter()) {
            prop_assert!(*x == 0.0 || x == y);
        }
    }
}

fn diagonal_scores(seed: u64, t_len: usize, d: usize) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(t_len, d, |_, j| (1.0 + j as f64) * normal(&mut rng))
}

#[test]
fn cv_threshold_beats_raw_estimate_on_diagonal_truth() {
    let (t_len, d) = (400, 6);
    let kernel = KernelSpec::bartlett_default(t_len);
    let truth = DMatrix::from_fn(d, d, |i, j| if i == j { (1.0 + i as f64).powi(2) } else { 0.0 });
    let good = (0..50u64)
        .filter(|&k| {
            let s = diagonal_scores(500 + k, t_len, d);
            let full = longrun::hac(&s, &kernel).unwrap();
            let grid = longrun::default_threshold_grid(&full.theta);
            let u = longrun::cv_threshold_scores(&s, &kernel, &grid).unwrap();
            let t = longrun::threshold(&full, u).theta;
            (0..d).all(|i| t[(i, i)] != 0.0) && (&t - &truth).norm() <= (&full.theta - &truth).norm()
        })
        .count();
    assert!(good >= 45, "{good}/50 runs improved on the raw estimate");
}

#[test]
fn pooled_and_robust_agree_without_dependence() {
    let kernel = KernelSpec::bartlett_default(200);
    let mut ratios = Vec::new();
    for seed in 0..20 {
        let mut spec = DgpSpec::new(Model::Dgp1, 50, 200, 5, 0.0, 0.0);
        spec.seed = seed;
        let (ds, truth) = montecarlo::generate(&spec).unwrap();
        let ds = ds.demean_time().unwrap();
        let beta = DVector::from_vec(truth.beta0);
        let pooled = longrun::pooled_hac(&ds, &beta, &kernel).unwrap();
        let robust = longrun::hac(&longrun::aggregated_scores(&ds, &beta).unwrap(), &kernel).unwrap();
        ratios.push(robust.theta.trace() / pooled.theta.trace());
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    assert!((mean - 1.0).abs() < 0.1, "mean ratio {mean}");
}
