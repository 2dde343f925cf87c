use std::path::Path;

use nalgebra::{DMatrix, DVector};
use panel_hd::ife::{self, ExplainedVariance, FactorFitRecord, LowRankFit, OmegaThreshold};
use panel_hd::inference::{self, CiReport, Contrast, TestResult, VarianceSource};
use panel_hd::lasso::{self, BicRow, LassoFit, LassoFitRecord, Quadratic};
use panel_hd::longrun::{self, LongRunCov, LongRunCovRecord};
use panel_hd::montecarlo::{self, McReport};
use panel_hd::nodewise::{self, DebiasedFit, NodewiseTuning, PrecisionEstimate, PrecisionRecord};
use panel_hd::{Error, PanelDataset, Result, ScaleRecord};
use serde::{Deserialize, Serialize};

use crate::artifact::{self, Artifact};
use crate::config::{
    self, EstimateConfig, IfeConfig, LongRunConfig, McConfig, OmegaRule, SimulateConfig, StageConfig, VarianceChoice,
};

#[derive(Debug, Serialize, Deserialize)]
pub struct FitPayload {
    pub regressors: Vec<String>,
    pub fit: LassoFitRecord,
    pub bic: Option<Vec<BicRow>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PrecisionPayload {
    pub precision: PrecisionRecord,
    pub beta_bc: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Diagnostics {
    pub cd: TestResult,
    /// Jarque-Bera test of each unit's residual series.
    pub jarque_bera: Vec<TestResult>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct IfePayload {
    pub regressors: Vec<String>,
    pub w1: f64,
    pub w2: f64,
    pub r_hat: usize,
    pub initial_beta: Vec<f64>,
    pub singular_values: Vec<f64>,
    pub fit: FactorFitRecord,
    pub explained: ExplainedVariance,
}

fn contrast(coords: &Option<Vec<usize>>, d: usize) -> Result<Contrast> {
    let idx = coords.clone().unwrap_or_else(|| (0..d).collect());
    if let Some(bad) = idx.iter().find(|&&j| j >= d) {
        return Err(Error::InvalidArgument(format!("coordinate {bad} out of range (d = {d})")));
    }
    Ok(Contrast::Coordinates(idx))
}

fn tuning(penalty: Option<f64>, d: usize) -> NodewiseTuning {
    match penalty {
        Some(p) => NodewiseTuning::Fixed(vec![p; d]),
        None => NodewiseTuning::BicPerRow,
    }
}

fn long_run(ds: &PanelDataset, beta: &DVector<f64>, cfg: &LongRunConfig) -> Result<(LongRunCov, VarianceSource)> {
    let kernel = cfg.kernel.spec(ds.n_periods());
    match cfg.variance {
        VarianceChoice::Pooled => Ok((longrun::pooled_hac(ds, beta, &kernel)?, VarianceSource::PooledHac)),
        VarianceChoice::Robust => {
            let cov = match cfg.threshold {
                Some(u) => longrun::threshold(&longrun::hac(&longrun::aggregated_scores(ds, beta)?, &kernel)?, u),
                None => longrun::robust_thresholded(ds, beta, &kernel)?,
            };
            Ok((cov, VarianceSource::RobustHac))
        }
    }
}

fn write_ci(out: &Path, report: &CiReport, scale: Option<&ScaleRecord>) -> Result<()> {
    let report = match scale {
        Some(s) => report.to_original_scale(s)?,
        None => report.clone(),
    };
    report.write_csv(std::fs::File::create(out.join("ci.csv"))?)
}

pub fn simulate(cfg: &SimulateConfig, out: &Path) -> Result<()> {
    let hash = config::hash(cfg);
    let (ds, truth) = montecarlo::generate(&cfg.spec())?;
    ds.write_csv(std::fs::File::create(out.join("panel.csv"))?)?;
    Artifact::new("truth", &hash, &ds.fingerprint(), truth).write(&out.join("truth.json"))?;
    config::write_echo(out, cfg)
}

/// LASSO, nodewise precision, debiasing, long-run covariance and intervals.
pub fn estimate(cfg: &EstimateConfig, out: &Path) -> Result<()> {
    let hash = config::hash(cfg);
    let (ds, scale) = cfg.data.load()?;
    let dh = ds.fingerprint();
    let q = Quadratic::from_dataset(&ds);
    let d = q.dim();
    let ones = vec![1.0; d];
    let (fit, bic) = match cfg.penalty {
        Some(p) => (lasso::solve(&q, p, &ones, None, &cfg.solver)?, None),
        None => {
            let grid = lasso::penalty_grid_weighted(&q, &ones, &cfg.solver);
            let sel = lasso::bic_select_quadratic(&q, &grid, &ones, d, &cfg.solver)?;
            (sel.chosen_fit, Some(sel.score_table))
        }
    };
    fit.ensure_converged()?;
    let precision = nodewise::nodewise_from_quadratic(&q, &tuning(cfg.nodewise_penalty, d), &cfg.solver)?;
    let debiased = nodewise::debias_quadratic(&q, &fit, &precision)?;
    let (cov, source) = long_run(&ds, &fit.beta, &cfg.longrun)?;
    let report = inference::ci_debiased(&debiased, &cov, ds.n_obs(), &contrast(&cfg.coordinates, d)?, cfg.level, source)?;

    let payload = FitPayload {
        regressors: ds.regressor_names().to_vec(),
        fit: fit.to_record(),
        bic,
    };
    Artifact::new("lasso_fit", &hash, &dh, payload).write(&out.join("fit.json"))?;
    let prec = PrecisionPayload {
        precision: precision.to_record(),
        beta_bc: debiased.beta_bc.iter().copied().collect(),
    };
    Artifact::new("precision", &hash, &dh, prec).write(&out.join("precision.json"))?;
    Artifact::new("lrcov", &hash, &dh, cov.to_record()).write(&out.join("lrcov.json"))?;
    write_ci(out, &report, scale.as_ref())?;
    config::write_echo(out, cfg)
}

fn required<'a>(p: &'a Option<std::path::PathBuf>, flag: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::InvalidArgument(format!("missing {flag}")))
}

fn load_fit(cfg: &StageConfig, dh: &str) -> Result<LassoFit> {
    let payload: FitPayload = artifact::read(required(&cfg.fit, "--fit")?, "lasso_fit", dh)?;
    LassoFit::from_record(&payload.fit)
}

pub fn debias(cfg: &StageConfig, out: &Path) -> Result<()> {
    let hash = config::hash(cfg);
    let (ds, _) = cfg.data.load()?;
    let dh = ds.fingerprint();
    let fit = load_fit(cfg, &dh)?;
    let q = Quadratic::from_dataset(&ds);
    let precision = nodewise::nodewise_from_quadratic(&q, &tuning(cfg.nodewise_penalty, q.dim()), &cfg.solver)?;
    let debiased = nodewise::debias_quadratic(&q, &fit, &precision)?;
    let prec = PrecisionPayload {
        precision: precision.to_record(),
        beta_bc: debiased.beta_bc.iter().copied().collect(),
    };
    Artifact::new("precision", &hash, &dh, prec).write(&out.join("precision.json"))?;
    config::write_echo(out, cfg)
}

pub fn hac(cfg: &StageConfig, out: &Path) -> Result<()> {
    let hash = config::hash(cfg);
    let (ds, _) = cfg.data.load()?;
    let dh = ds.fingerprint();
    let fit = load_fit(cfg, &dh)?;
    let (cov, _) = long_run(&ds, &fit.beta, &cfg.longrun)?;
    Artifact::new("lrcov", &hash, &dh, cov.to_record()).write(&out.join("lrcov.json"))?;
    config::write_echo(out, cfg)
}

/// Intervals from stored fit, precision and covariance artifacts, plus
/// residual diagnostics.
pub fn infer(cfg: &StageConfig, out: &Path) -> Result<()> {
    let hash = config::hash(cfg);
    let (ds, scale) = cfg.data.load()?;
    let dh = ds.fingerprint();
    let fit = load_fit(cfg, &dh)?;
    let prec: PrecisionPayload = artifact::read(required(&cfg.precision, "--precision")?, "precision", &dh)?;
    let cov_rec: LongRunCovRecord = artifact::read(required(&cfg.lrcov, "--lrcov")?, "lrcov", &dh)?;
    let cov = LongRunCov::from_record(&cov_rec)?;
    let source = if cov.score_builder == "pooled_unitwise" {
        VarianceSource::PooledHac
    } else {
        VarianceSource::RobustHac
    };
    let debiased = DebiasedFit {
        beta_bc: DVector::from_vec(prec.beta_bc),
        base_fit: fit.clone(),
        precision: PrecisionEstimate::from_record(&prec.precision)?,
    };
    let d = ds.n_regressors();
    let report = inference::ci_debiased(&debiased, &cov, ds.n_obs(), &contrast(&cfg.coordinates, d)?, cfg.level, source)?;
    write_ci(out, &report, scale.as_ref())?;

    let resid = ds.to_period_unit(&(ds.y() - ds.x() * &fit.beta));
    let diag = diagnostics(&resid)?;
    Artifact::new("diagnostics", &hash, &dh, diag).write(&out.join("diagnostics.json"))?;
    config::write_echo(out, cfg)
}

/// CD test and unitwise Jarque-Bera on a `T x N` residual matrix.
fn diagnostics(resid: &DMatrix<f64>) -> Result<Diagnostics> {
    let cd = inference::cd_test(&resid.transpose())?;
    let jarque_bera = resid
        .column_iter()
        .map(|c| inference::jarque_bera(c.as_slice()))
        .collect::<Result<Vec<_>>>()?;
    Ok(Diagnostics { cd, jarque_bera })
}

pub fn ife(cfg: &IfeConfig, out: &Path) -> Result<()> {
    let hash = config::hash(cfg);
    let (ds, scale) = cfg.data.load()?;
    let dh = ds.fingerprint();
    let g1 = cfg.w1_grid.clone().unwrap_or_else(|| ife::default_w1_grid(&ds));
    let g2 = cfg
        .w2_grid
        .clone()
        .unwrap_or_else(|| ife::default_w2_grid(ds.n_units(), ds.n_periods()));
    let first: LowRankFit = ife::tune_l1_nuclear(&ds, &g1, &g2, &cfg.opts)?.fit;
    let g3 = cfg.w3_grid.clone().unwrap_or_else(|| ife::default_w3_grid(&first.beta_init));
    let (mut fit, _) = ife::tune_w3(&ds, &first, &g3, &cfg.opts)?;
    if cfg.bias_correct && !fit.active_set.is_empty() {
        let rule = match cfg.omega_threshold {
            OmegaRule::Cv => OmegaThreshold::Cv,
            OmegaRule::Rate(c) => OmegaThreshold::Rate(c),
            OmegaRule::Value(u) => OmegaThreshold::Value(u),
        };
        fit = ife::bias_correct(&ds, &fit, &cfg.kernel.spec(ds.n_periods()), rule, &cfg.opts)?;
        let coords = Contrast::Coordinates((0..fit.active_set.len()).collect());
        let report = inference::ci_factor(&fit, &coords, cfg.level)?;
        write_ci(out, &report, scale.as_ref())?;
    }
    let explained = ife::explained_variance(&ds, &fit)?;
    let payload = IfePayload {
        regressors: ds.regressor_names().to_vec(),
        w1: first.w1,
        w2: first.w2,
        r_hat: first.r_hat,
        initial_beta: first.beta_init.iter().copied().collect(),
        singular_values: first.singular_values.iter().copied().collect(),
        fit: fit.to_record(),
        explained,
    };
    Artifact::new("factor_fit", &hash, &dh, payload).write(&out.join("fit.json"))?;
    config::write_echo(out, cfg)
}

pub fn mc(cfg: &McConfig, threads: usize, out: &Path) -> Result<McReport> {
    let hash = config::hash(cfg);
    let cells = if !cfg.cells.is_empty() {
        cfg.cells.clone()
    } else {
        let table = cfg
            .table
            .ok_or_else(|| Error::InvalidArgument("mc needs --table or a cell list".into()))?;
        montecarlo::table_cells(table, cfg.sizes.as_deref())?
    };
    let report = montecarlo::run_grid(&cells, cfg.seed, cfg.reps, threads, &cfg.pipeline, &hash)?;
    report.write_csv(std::fs::File::create(out.join("mc_report.csv"))?)?;
    std::fs::write(out.join("mc_report.txt"), report.text_table())?;
    config::write_echo(out, cfg)?;
    Ok(report)
}
