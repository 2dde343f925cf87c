use nalgebra::{DMatrix, DVector};
use panel_hd::ife::{self, IfeOpts};
use panel_hd::longrun;
use panel_hd::PanelDataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn noise_panel(seed: u64, n: usize, t_len: usize, d: usize) -> PanelDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n * t_len, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y = DVector::from_fn(n * t_len, |_, _| rng.sample::<f64, _>(StandardNormal));
    PanelDataset::from_arrays(n, t_len, y, x).unwrap()
}

#[test]
fn pure_noise_selects_no_factors_and_no_regressors() {
    let opts = IfeOpts::default();
    let empty = (0..40u64)
        .filter(|&k| {
            let ds = noise_panel(400 + k, 50, 50, 10);
            let g1 = ife::default_w1_grid(&ds);
            let g2 = ife::default_w2_grid(50, 50);
            let fit = ife::tune_l1_nuclear(&ds, &g1, &g2, &opts).unwrap().fit;
            fit.r_hat == 0 && fit.active_set().is_empty()
        })
        .count();
    assert!(empty >= 36, "{empty}/40 empty fits");
}

#[test]
fn rank_rule_counts_large_singular_values() {
    let sv = DVector::from_vec(vec![100.0, 40.0, 0.5, 0.0]);
    assert_eq!(ife::rank_rule(&sv, 1.0), 2);
    assert_eq!(ife::rank_rule(&sv, 1e-3), 3);
    assert_eq!(ife::rank_rule(&DVector::zeros(3), 1.0), 0);
}

#[test]
fn half_split_of_four_periods() {
    let (a, b) = longrun::half_split(4);
    assert_eq!((a, b), (0..2, 2..4));
    let (a, b) = longrun::half_split(5);
    assert_eq!((a.len(), b.len()), (2, 3));
}

#[test]
fn objective_trace_never_increases() {
    let ds = noise_panel(77, 15, 12, 4);
    let fit = ife::fit_l1_nuclear(&ds, 0.01, 0.05, &IfeOpts::default()).unwrap();
    assert!(fit.solver_trace.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
}
