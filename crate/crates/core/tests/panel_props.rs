use nalgebra::{DMatrix, DVector};
use panel_hd::lasso::{self, Quadratic, SolverOpts};
use panel_hd::{Error, PanelDataset};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn random_panel(seed: u64, n: usize, t_len: usize, d: usize) -> PanelDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = || 3.0 + 2.0 * rng.sample::<f64, _>(StandardNormal);
    let x = DMatrix::from_fn(n * t_len, d, |_, _| g());
    let y = DVector::from_fn(n * t_len, |_, _| g());
    PanelDataset::from_arrays(n, t_len, y, x).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn standardize_round_trips(seed in any::<u64>(), n in 1usize..6, t_len in 2usize..10, d in 1usize..5) {
        let ds = random_panel(seed, n, t_len, d);
        let (st, rec) = ds.standardize().unwrap();
        for j in 0..d {
            let col = st.x().column(j);
            prop_assert!(col.mean().abs() < 1e-10);
            prop_assert!((col.variance() - 1.0).abs() < 1e-10);
        }
        let back = st.unstandardize(&rec).unwrap();
        prop_assert!((back.x() - ds.x()).amax() < 1e-9);
        prop_assert!((back.y() - ds.y()).amax() < 1e-9);
    }

    #[test]
    fn standardize_is_idempotent(seed in any::<u64>(), n in 1usize..6, t_len in 2usize..10) {
        let (once, _) = random_panel(seed, n, t_len, 3).standardize().unwrap();
        let (twice, rec) = once.standardize().unwrap();
        prop_assert!((twice.x() - once.x()).amax() < 1e-9);
        prop_assert!(rec.regressors.iter().all(|e| e.mean.abs() < 1e-10 && (e.sd - 1.0).abs() < 1e-10));
    }

    #[test]
    fn demeaned_units_have_zero_time_mean(seed in any::<u64>(), n in 1usize..6, t_len in 2usize..10) {
        let dm = random_panel(seed, n, t_len, 2).demean_time().unwrap();
        for i in 0..n {
            let s: f64 = (0..t_len).map(|t| dm.y_at(i, t)).sum();
            prop_assert!(s.abs() < 1e-9);
        }
        prop_assert!(matches!(dm.demean_time(), Err(Error::AlreadyTransformed(_))));
    }
}

#[test]
fn csv_round_trip_keeps_values() {
    let ds = random_panel(4, 3, 5, 2);
    let mut buf = Vec::new();
    ds.write_csv(&mut buf).unwrap();
    let back = PanelDataset::read_csv(buf.as_slice(), &Default::default()).unwrap();
    assert_eq!(back.fingerprint(), ds.fingerprint());
}

#[test]
fn demeaning_removes_fixed_effect_bias() {
    // regressor correlated with a large unit effect
    let (n, t_len) = (200, 10);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut x = DMatrix::zeros(n * t_len, 1);
    let mut y = DVector::zeros(n * t_len);
    for i in 0..n {
        let alpha = 5.0 * rng.sample::<f64, _>(StandardNormal);
        for t in 0..t_len {
            let v = alpha + rng.sample::<f64, _>(StandardNormal);
            x[(i * t_len + t, 0)] = v;
            y[i * t_len + t] = v + alpha + rng.sample::<f64, _>(StandardNormal);
        }
    }
    let ds = PanelDataset::from_arrays(n, t_len, y, x).unwrap();
    let slope = |ds: &PanelDataset| {
        let q = Quadratic::from_dataset(ds);
        lasso::solve(&q, 0.0, &[1.0], None, &SolverOpts::default()).unwrap().beta[0]
    };
    assert!(slope(&ds) > 1.5);
    assert!((slope(&ds.demean_time().unwrap()) - 1.0).abs() < 0.05);
}
