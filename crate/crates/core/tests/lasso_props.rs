use nalgebra::{DMatrix, DVector};
use panel_hd::lasso::{self, Quadratic, SolverOpts};
use panel_hd::montecarlo::{self, DgpSpec, Model};
use panel_hd::PanelDataset;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn instance(seed: u64, n: usize, d: usize) -> Quadratic {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let b = DVector::from_fn(d, |j, _| if j < 2 { 1.0 } else { 0.0 });
    let y = &x * b + DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    Quadratic::from_design(&x, &y).unwrap()
}

fn tight() -> SolverOpts {
    SolverOpts {
        tol: 1e-12,
        max_iter: 100_000,
        ..SolverOpts::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kkt_holds_with_exact_zeros(seed in any::<u64>(), d in 1usize..15, n in 5usize..80, frac in 0.0f64..1.1) {
        let q = instance(seed, n, d);
        let w: Vec<f64> = (0..d).map(|j| 0.5 + (j % 3) as f64 * 0.5).collect();
        let pen = frac * lasso::lambda_max(&q, &w);
        let opts = SolverOpts::default();
        let fit = lasso::solve(&q, pen, &w, None, &opts).unwrap();
        prop_assert!(lasso::kkt_violation(&q, &fit) <= 10.0 * opts.tol);
        let nonzero: Vec<usize> = (0..d).filter(|&j| fit.beta[j] != 0.0).collect();
        prop_assert_eq!(nonzero, fit.active_set);
    }

    #[test]
    fn warm_start_equals_cold_start(seed in any::<u64>(), d in 2usize..12) {
        let q = instance(seed, 60, d);
        let ones = vec![1.0; d];
        let grid = lasso::log_grid(lasso::lambda_max(&q, &ones), 1e-3, 15);
        let mut warm = None;
        for &p in &grid {
            let w = lasso::solve(&q, p, &ones, warm.as_ref(), &tight()).unwrap();
            let c = lasso::solve(&q, p, &ones, None, &tight()).unwrap();
            prop_assert!((&w.beta - &c.beta).amax() < 1e-6);
            warm = Some(w.beta);
        }
    }

    #[test]
    fn response_scaling_is_equivariant(seed in any::<u64>(), d in 1usize..10, c in 0.1f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(40, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(40, |_, _| rng.sample::<f64, _>(StandardNormal));
        let q1 = Quadratic::from_design(&x, &y).unwrap();
        let q2 = Quadratic::from_design(&x, &(&y * c)).unwrap();
        let ones = vec![1.0; d];
        let lam = 0.2 * lasso::lambda_max(&q1, &ones);
        let f1 = lasso::solve(&q1, lam, &ones, None, &tight()).unwrap();
        let f2 = lasso::solve(&q2, c * lam, &ones, None, &tight()).unwrap();
        prop_assert!((&f2.beta - &f1.beta * c).amax() < 1e-10 * c.max(1.0));
    }
}

#[test]
fn grid_head_is_empty_fit() {
    let q = instance(3, 50, 8);
    let ones = vec![1.0; 8];
    let grid = lasso::penalty_grid_weighted(&q, &ones, &SolverOpts::default());
    let fit = lasso::solve(&q, grid[0], &ones, None, &SolverOpts::default()).unwrap();
    assert!(fit.active_set.is_empty());
    assert!(grid.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn bic_keeps_pure_noise_empty() {
    let opts = SolverOpts::default();
    let empty = (0..200u64)
        .filter(|&k| {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + k);
            let x = DMatrix::from_fn(2500, 10, |_, _| rng.sample::<f64, _>(StandardNormal));
            let y = DVector::from_fn(2500, |_, _| rng.sample::<f64, _>(StandardNormal));
            let ds = PanelDataset::from_arrays(50, 50, y, x).unwrap();
            let grid = lasso::penalty_grid(&ds, 100).unwrap();
            lasso::bic_select(&ds, &grid, &[1.0; 10], &opts).unwrap().chosen_fit.active_set.is_empty()
        })
        .count();
    assert!(empty >= 190, "{empty}/200 empty fits");
}

#[test]
fn bic_retains_true_signals() {
    let opts = SolverOpts::default();
    let hits = (0..200u64)
        .filter(|&k| {
            let mut spec = DgpSpec::new(Model::Dgp1, 50, 50, 50, 0.2, 0.2);
            spec.seed = 77 + k;
            let ds = montecarlo::generate(&spec).unwrap().0.demean_time().unwrap();
            let grid = lasso::penalty_grid(&ds, 100).unwrap();
            let fit = lasso::bic_select(&ds, &grid, &[1.0; 50], &opts).unwrap().chosen_fit;
            (0..5).all(|j| fit.active_set.contains(&j))
        })
        .count();
    assert!(hits >= 190, "{hits}/200 fits kept all signals");
}
