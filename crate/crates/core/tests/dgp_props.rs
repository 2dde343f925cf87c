use nalgebra::DVector;
use panel_hd::lasso::SolverOpts;
use panel_hd::montecarlo::{self, DgpSpec, InnovationScale, Model, PipelineOpts};

/// Errors `e = y - x b0 - alpha` of a DGP1 draw, stacked unit by unit.
fn errors(spec: &DgpSpec) -> Vec<f64> {
    let (ds, truth) = montecarlo::generate(spec).unwrap();
    let fit = ds.x() * DVector::from_vec(truth.beta0);
    let alpha = truth.alpha.unwrap();
    (0..ds.n_obs())
        .map(|r| ds.y()[r] - fit[r] - alpha[r / spec.n_periods])
        .collect()
}

fn corr(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn error_autocorrelation_matches_rho() {
    for rho in [0.0, 0.5] {
        let mut spec = DgpSpec::new(Model::Dgp1, 1, 5000, 2, rho, 0.0);
        spec.seed = 31;
        let e = errors(&spec);
        let r1 = corr(&e[1..], &e[..e.len() - 1]);
        assert!((r1 - rho).abs() < 0.03, "rho {rho}: lag-1 autocorrelation {r1}");
    }
}

#[test]
fn neighbouring_units_share_delta_correlation() {
    let mut spec = DgpSpec::new(Model::Dgp1, 2, 100_000, 2, 0.0, 0.5);
    spec.seed = 32;
    let e = errors(&spec);
    let r = corr(&e[..100_000], &e[100_000..]);
    assert!((r - 0.5).abs() < 0.03, "contemporaneous correlation {r}");
}

#[test]
fn innovations_have_t5_kurtosis() {
    let mut spec = DgpSpec::new(Model::Dgp1, 1, 1_000_000, 2, 0.0, 0.0);
    spec.seed = 33;
    spec.innovation = InnovationScale::UnitVariance;
    let e = errors(&spec);
    let n = e.len() as f64;
    let mean = e.iter().sum::<f64>() / n;
    let m2 = e.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m4 = e.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    assert!((m2 - 1.0).abs() < 0.02, "variance {m2}");
    assert!((m4 / (m2 * m2) - 9.0).abs() < 0.9, "kurtosis {}", m4 / (m2 * m2));
}

#[test]
fn noiseless_design_is_recovered() {
    let mut spec = DgpSpec::new(Model::Dgp1, 30, 30, 20, 0.2, 0.2);
    spec.noiseless = true;
    let opts = PipelineOpts {
        solver: SolverOpts {
            grid_ratio: 1e-9,
            tol: 1e-12,
            max_iter: 100_000,
            ..SolverOpts::default()
        },
        ..PipelineOpts::default()
    };
    let rows = montecarlo::run_cell(&spec, 5, 1, &opts).unwrap();
    let get = |m: &str| rows.iter().find(|r| r.metric == m).unwrap().value;
    assert!(get("RMSE") < 1e-6, "RMSE {}", get("RMSE"));
    assert_eq!(get("RSC"), 1.0);
}

#[test]
fn identical_cells_give_identical_rows() {
    let spec = DgpSpec::new(Model::Dgp1, 20, 20, 10, 0.5, 0.2);
    let opts = PipelineOpts::default();
    let a = montecarlo::run_cell(&spec, 17, 6, &opts).unwrap();
    let b = montecarlo::run_cell(&spec.clone(), 17, 6, &opts).unwrap();
    assert_eq!(a, b);
    let c = montecarlo::run_cell(&spec, 18, 6, &opts).unwrap();
    assert_ne!(a, c);
}

#[test]
#[ignore = "full table 1 at 50 replications; slow on one core"]
fn table_one_smoke() {
    let cells = montecarlo::table_cells(1, None).unwrap();
    let report = montecarlo::run_grid(&cells, 1, 50, 1, &PipelineOpts::default(), "smoke").unwrap();
    assert_eq!(report.rows.len(), 64);
    assert!(report.rows.iter().all(|r| r.value.is_finite()));
}
