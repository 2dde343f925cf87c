//! Simulation designs (fixed effects and interactive fixed effects), the
//! replication harness and the summary metrics.
//!
//! Every replication draws from its own `ChaCha8Rng` stream seeded from
//! `(base seed, cell hash, replication index)`, so results do not depend on
//! how replications are scheduled across threads.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ife::{self, IfeOpts, OmegaThreshold};
use crate::inference::{self, Contrast, VarianceSource};
use crate::lasso::{self, Quadratic, SolverOpts, WeightMode};
use crate::longrun::{self, KernelSpec};
use crate::nodewise::{self, NodewiseTuning};
use crate::panel::PanelDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    /// `y_it = a_i + x_it' b + e_it`.
    Dgp1,
    /// `y_it = x_it' b + l_i' f_t + e_it`.
    Dgp2,
}

impl Model {
    pub fn as_str(&self) -> &'static str {
        match self {
            Model::Dgp1 => "dgp1",
            Model::Dgp2 => "dgp2",
        }
    }

    pub fn metric_names(&self) -> &'static [&'static str] {
        match self {
            Model::Dgp1 => &["RMSE", "ECR", "ECR2", "RSC"],
            Model::Dgp2 => &["RMSE1", "RMSE2", "ECR", "TPR", "FPR", "EER"],
        }
    }
}

/// Scaling of the multivariate t(5) innovations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnovationScale {
    /// Raw t(5) draws (variance 5/3).
    Raw,
    /// Rescaled to unit variance.
    UnitVariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub model: Model,
    pub n_units: usize,
    pub n_periods: usize,
    pub n_regressors: usize,
    pub rho_e: f64,
    pub delta_eps: f64,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_scale")]
    pub innovation: InnovationScale,
    /// Forces the error process to zero.
    #[serde(default)]
    pub noiseless: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_burn_in() -> usize {
    100
}

fn default_scale() -> InnovationScale {
    InnovationScale::Raw
}

impl DgpSpec {
    pub fn new(model: Model, n_units: usize, n_periods: usize, n_regressors: usize, rho_e: f64, delta_eps: f64) -> Self {
        Self {
            model,
            n_units,
            n_periods,
            n_regressors,
            rho_e,
            delta_eps,
            burn_in: default_burn_in(),
            innovation: InnovationScale::Raw,
            noiseless: false,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho_e.abs() < 1.0) || !(self.delta_eps.abs() < 1.0) {
            return Err(Error::InvalidArgument("rho_e and delta_eps must lie in (-1, 1)".into()));
        }
        if self.n_units == 0 || self.n_periods == 0 || self.n_regressors == 0 {
            return Err(Error::InvalidArgument("N, T and d must be positive".into()));
        }
        if self.model == Model::Dgp2 && self.n_regressors < 4 {
            return Err(Error::InvalidArgument("the factor design needs d >= 4".into()));
        }
        Ok(())
    }

    /// Stable 64-bit hash of every field except the seed.
    pub fn cell_hash(&self) -> u64 {
        let key = format!(
            "{}|{}|{}|{}|{:016x}|{:016x}|{}|{:?}|{}",
            self.model.as_str(),
            self.n_units,
            self.n_periods,
            self.n_regressors,
            self.rho_e.to_bits(),
            self.delta_eps.to_bits(),
            self.burn_in,
            self.innovation,
            self.noiseless
        );
        let digest = Sha256::digest(key.as_bytes());
        u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
    }

    pub fn beta0(&self) -> DVector<f64> {
        true_coefficients(self.n_regressors)
    }
}

/// `b_j = 0.2 + 0.1 j` for `j = 1..5`, zero afterwards.
pub fn true_coefficients(d: usize) -> DVector<f64> {
    DVector::from_fn(d, |j, _| if j < 5 { 0.2 + 0.1 * (j + 1) as f64 } else { 0.0 })
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replication `rep` in a cell.
pub fn replication_seed(base: u64, cell_hash: u64, rep: u64) -> u64 {
    splitmix64(base ^ splitmix64(cell_hash ^ splitmix64(rep)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub beta0: Vec<f64>,
    pub alpha: Option<Vec<f64>>,
    /// `N x 2` loadings, row-major.
    pub loadings: Option<Vec<Vec<f64>>>,
    /// `T x 2` factors, row-major.
    pub factors: Option<Vec<Vec<f64>>>,
    pub spec: DgpSpec,
}

/// Applies the lower Cholesky factor of the Toeplitz matrix `{r^|i-j|}` in place.
fn ar1_cholesky_apply(v: &mut [f64], r: f64) {
    if r == 0.0 {
        return;
    }
    let s = (1.0 - r * r).sqrt();
    let mut prev = v[0];
    for x in v.iter_mut().skip(1) {
        let next = r * prev + s * *x;
        *x = next;
        prev = next;
    }
}

/// Spherical t(5) vector `z / sqrt(chi2_5 / 5)` mixed by the AR(1)-Toeplitz factor.
fn t5_vector(rng: &mut ChaCha8Rng, out: &mut [f64], mixing: f64, scale: f64) {
    let chi = ChiSquared::<f64>::new(5.0).expect("valid degrees of freedom");
    for x in out.iter_mut() {
        *x = rng.sample::<f64, _>(StandardNormal);
    }
    let w: f64 = (chi.sample(rng) / 5.0f64).sqrt();
    for x in out.iter_mut() {
        *x *= scale / w;
    }
    ar1_cholesky_apply(out, mixing);
}

/// Simulates one panel and its truth record.
pub fn generate(spec: &DgpSpec) -> Result<(PanelDataset, Truth)> {
    spec.validate()?;
    let (n, t_len, d) = (spec.n_units, spec.n_periods, spec.n_regressors);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let scale = match spec.innovation {
        InnovationScale::Raw => 1.0,
        InnovationScale::UnitVariance => (3.0f64 / 5.0).sqrt(),
    };
    let steps = spec.burn_in + t_len;
    let mut x = DMatrix::zeros(n * t_len, d);
    let mut buf = vec![0.0; n];
    for l in 0..d {
        let level: f64 = rng.sample(StandardNormal);
        let mut state = vec![0.0; n];
        for step in 0..steps {
            t5_vector(&mut rng, &mut buf, 0.2, scale);
            for i in 0..n {
                state[i] = level + 0.2 * state[i] + buf[i];
            }
            if step >= spec.burn_in {
                let t = step - spec.burn_in;
                for i in 0..n {
                    x[(i * t_len + t, l)] = state[i];
                }
            }
        }
    }
    let mut e = vec![0.0; n * t_len];
    let mut state = vec![0.0; n];
    for step in 0..steps {
        t5_vector(&mut rng, &mut buf, spec.delta_eps, scale);
        for i in 0..n {
            state[i] = spec.rho_e * state[i] + buf[i];
        }
        if step >= spec.burn_in {
            let t = step - spec.burn_in;
            for i in 0..n {
                e[i * t_len + t] = if spec.noiseless { 0.0 } else { state[i] };
            }
        }
    }
    let beta0 = spec.beta0();
    let mut y = &x * &beta0 + DVector::from_vec(e);
    let mut truth = Truth {
        beta0: beta0.iter().copied().collect(),
        alpha: None,
        loadings: None,
        factors: None,
        spec: spec.clone(),
    };
    match spec.model {
        Model::Dgp1 => {
            let alpha: Vec<f64> = (0..n)
                .map(|i| (0..t_len).map(|t| x[(i * t_len + t, 0)] + x[(i * t_len + t, 1.min(d - 1))]).sum::<f64>() / t_len as f64)
                .collect();
            for i in 0..n {
                for t in 0..t_len {
                    y[i * t_len + t] += alpha[i];
                }
            }
            truth.alpha = Some(alpha);
        }
        Model::Dgp2 => {
            let loadings: Vec<Vec<f64>> = (0..n).map(|i| vec![x[(i * t_len, 0)], x[(i * t_len, 1)]]).collect();
            let factors: Vec<Vec<f64>> = (0..t_len).map(|t| vec![x[(t, 2)], x[(t, 3)]]).collect();
            for i in 0..n {
                for t in 0..t_len {
                    y[i * t_len + t] += loadings[i][0] * factors[t][0] + loadings[i][1] * factors[t][1];
                }
            }
            truth.loadings = Some(loadings);
            truth.factors = Some(factors);
        }
    }
    Ok((PanelDataset::from_arrays(n, t_len, y, x)?, truth))
}

/// Estimation settings shared by all replications.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineOpts {
    pub solver: SolverOpts,
    pub ife: IfeOpts,
    pub level: f64,
}

impl Default for PipelineOpts {
    fn default() -> Self {
        Self {
            solver: SolverOpts::default(),
            ife: IfeOpts::default(),
            level: 0.95,
        }
    }
}

/// Per-replication results; fields not produced by a design are `None`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Outcome {
    pub sq_err: Option<f64>,
    pub sq_err2: Option<f64>,
    pub ecr: Option<f64>,
    pub ecr2: Option<f64>,
    pub rsc: Option<f64>,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub eer: Option<f64>,
}

pub fn covers(low: f64, high: f64, truth: f64) -> bool {
    low <= truth && truth <= high
}

pub fn sign_pattern_matches(estimate: &DVector<f64>, truth: &DVector<f64>) -> bool {
    estimate.iter().zip(truth.iter()).all(|(a, b)| {
        let sa = if *a > 0.0 { 1 } else if *a < 0.0 { -1 } else { 0 };
        let sb = if *b > 0.0 { 1 } else if *b < 0.0 { -1 } else { 0 };
        sa == sb
    })
}

/// Share of the true signals `0..k` whose interval covers the truth.
fn coverage_share(report: &inference::CiReport, beta0: &DVector<f64>, k: usize) -> f64 {
    let hits = (0..k)
        .filter(|&j| {
            report
                .rows
                .iter()
                .find(|r| r.index == j)
                .is_some_and(|r| covers(r.ci_low, r.ci_high, beta0[j]))
        })
        .count();
    hits as f64 / k as f64
}

/// Plain LASSO, adaptive LASSO, debiasing and both variance estimators on a
/// demeaned panel.
pub fn dgp1_pipeline(ds: &PanelDataset, beta0: &DVector<f64>, opts: &PipelineOpts) -> Result<Outcome> {
    let q = Quadratic::from_dataset(ds);
    let d = q.dim();
    let ones = vec![1.0; d];
    let grid = lasso::penalty_grid_weighted(&q, &ones, &opts.solver);
    let fit = lasso::bic_select_quadratic(&q, &grid, &ones, d, &opts.solver)?.chosen_fit;

    // the weighted step reuses the first-step penalty
    let weights = lasso::adaptive_weights(&fit, WeightMode::Adaptive, 0.0)?;
    let wfit = lasso::solve(&q, fit.penalty, &weights, Some(&fit.beta), &opts.solver)?;

    let precision = nodewise::nodewise_from_quadratic(&q, &NodewiseTuning::BicPerRow, &opts.solver)?;
    let debiased = nodewise::debias_quadratic(&q, &fit, &precision)?;
    let kernel = KernelSpec::bartlett_default(ds.n_periods());
    let robust = longrun::robust_thresholded(ds, &fit.beta, &kernel)?;
    let pooled = longrun::pooled_hac(ds, &fit.beta, &kernel)?;
    let k = 5.min(d);
    let coords = Contrast::Coordinates((0..k).collect());
    let ci = inference::ci_debiased(&debiased, &robust, ds.n_obs(), &coords, opts.level, VarianceSource::RobustHac)?;
    let ci2 = inference::ci_debiased(&debiased, &pooled, ds.n_obs(), &coords, opts.level, VarianceSource::PooledHac)?;
    Ok(Outcome {
        sq_err: Some((&fit.beta - beta0).norm_squared()),
        ecr: Some(coverage_share(&ci, beta0, k)),
        ecr2: Some(coverage_share(&ci2, beta0, k)),
        rsc: Some(if sign_pattern_matches(&wfit.beta, beta0) { 1.0 } else { 0.0 }),
        ..Outcome::default()
    })
}

/// l1 + nuclear-norm start, iterated weighted LASSO/PCA and the bias-corrected
/// intervals.
pub fn dgp2_pipeline(ds: &PanelDataset, beta0: &DVector<f64>, opts: &PipelineOpts) -> Result<Outcome> {
    let grid1 = ife::default_w1_grid(ds);
    let grid2 = ife::default_w2_grid(ds.n_units(), ds.n_periods());
    let first = ife::tune_l1_nuclear(ds, &grid1, &grid2, &opts.ife)?.fit;
    let w3_grid = ife::default_w3_grid(&first.beta_init);
    let (fit, _) = ife::tune_w3(ds, &first, &w3_grid, &opts.ife)?;

    let d = beta0.len();
    let k = 5.min(d);
    let relevant: Vec<usize> = (0..d).filter(|&j| beta0[j] != 0.0).collect();
    let picked_relevant = fit.active_set.iter().filter(|j| beta0[**j] != 0.0).count();
    let picked_irrelevant = fit.active_set.len() - picked_relevant;
    let tpr = picked_relevant as f64 / relevant.len().max(1) as f64;
    let fpr = picked_irrelevant as f64 / (d - relevant.len()).max(1) as f64;

    let ecr = if fit.active_set.is_empty() {
        0.0
    } else {
        let kernel = KernelSpec::bartlett_default(ds.n_periods());
        let bc = ife::bias_correct(ds, &fit, &kernel, OmegaThreshold::Cv, &opts.ife)?;
        let coords = Contrast::Coordinates((0..bc.active_set.len()).collect());
        let ci = inference::ci_factor(&bc, &coords, opts.level)?;
        coverage_share(&ci, beta0, k)
    };
    Ok(Outcome {
        sq_err: Some((&first.beta_init - beta0).norm_squared()),
        sq_err2: Some((&fit.beta - beta0).norm_squared()),
        ecr: Some(ecr),
        tpr: Some(tpr),
        fpr: Some(fpr),
        eer: Some(if first.r_hat == 2 { 1.0 } else { 0.0 }),
        ..Outcome::default()
    })
}

/// Generates replication `rep` of a cell and runs the design's pipeline.
pub fn run_replication(spec: &DgpSpec, base_seed: u64, rep: u64, opts: &PipelineOpts) -> Result<Outcome> {
    let mut s = spec.clone();
    s.seed = replication_seed(base_seed, spec.cell_hash(), rep);
    let (ds, truth) = generate(&s)?;
    let beta0 = DVector::from_vec(truth.beta0);
    match spec.model {
        Model::Dgp1 => dgp1_pipeline(&ds.demean_time()?, &beta0, opts),
        Model::Dgp2 => dgp2_pipeline(&ds, &beta0, opts),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McRow {
    pub model: Model,
    pub n_units: usize,
    pub n_periods: usize,
    pub n_regressors: usize,
    pub rho_e: f64,
    pub delta_eps: f64,
    pub metric: String,
    pub value: f64,
    pub replications: usize,
    pub failures: usize,
    pub std_error: f64,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Root mean squared error from per-replication squared errors, with a
/// delta-method standard error.
pub fn rmse(sq_errs: &[f64]) -> (f64, f64) {
    let (m, sd) = mean_sd(sq_errs);
    let r = m.sqrt();
    let se = if r > 0.0 { sd / (2.0 * r * (sq_errs.len() as f64).sqrt()) } else { 0.0 };
    (r, se)
}

/// Aggregates outcomes of one cell into report rows (in the design's metric order).
pub fn summarize(spec: &DgpSpec, outcomes: &[Result<Outcome>]) -> Vec<McRow> {
    let ok: Vec<&Outcome> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
    let failures = outcomes.len() - ok.len();
    let collect = |f: fn(&Outcome) -> Option<f64>| -> Vec<f64> { ok.iter().filter_map(|o| f(o)).collect() };
    spec.model
        .metric_names()
        .iter()
        .map(|&name| {
            let (value, se) = match name {
                "RMSE" | "RMSE1" => rmse(&collect(|o| o.sq_err)),
                "RMSE2" => rmse(&collect(|o| o.sq_err2)),
                other => {
                    let vals = collect(match other {
                        "ECR" => |o: &Outcome| o.ecr,
                        "ECR2" => |o: &Outcome| o.ecr2,
                        "RSC" => |o: &Outcome| o.rsc,
                        "TPR" => |o: &Outcome| o.tpr,
                        "FPR" => |o: &Outcome| o.fpr,
                        _ => |o: &Outcome| o.eer,
                    });
                    let (m, sd) = mean_sd(&vals);
                    (m, sd / (vals.len() as f64).sqrt())
                }
            };
            McRow {
                model: spec.model,
                n_units: spec.n_units,
                n_periods: spec.n_periods,
                n_regressors: spec.n_regressors,
                rho_e: spec.rho_e,
                delta_eps: spec.delta_eps,
                metric: name.to_string(),
                value: if ok.is_empty() { f64::NAN } else { value },
                replications: ok.len(),
                failures,
                std_error: if ok.is_empty() { f64::NAN } else { se },
            }
        })
        .collect()
}

/// Runs `n_reps` replications of one cell in parallel; results are reduced in
/// replication order.
pub fn run_cell(spec: &DgpSpec, base_seed: u64, n_reps: usize, opts: &PipelineOpts) -> Result<Vec<McRow>> {
    if n_reps == 0 {
        return Err(Error::InvalidArgument("n_reps must be >= 1".into()));
    }
    spec.validate()?;
    let outcomes: Vec<Result<Outcome>> = (0..n_reps as u64)
        .into_par_iter()
        .map(|rep| run_replication(spec, base_seed, rep, opts))
        .collect();
    Ok(summarize(spec, &outcomes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub rows: Vec<McRow>,
    pub base_seed: u64,
    pub config_hash: String,
    pub version: String,
}

/// Runs every cell on a pool of `threads` workers.
pub fn run_grid(
    cells: &[DgpSpec],
    base_seed: u64,
    n_reps: usize,
    threads: usize,
    opts: &PipelineOpts,
    config_hash: &str,
) -> Result<McReport> {
    if cells.is_empty() {
        return Err(Error::InvalidArgument("empty simulation grid".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let rows = pool.install(|| -> Result<Vec<McRow>> {
        let mut rows = Vec::new();
        for cell in cells {
            rows.extend(run_cell(cell, base_seed, n_reps, opts)?);
        }
        Ok(rows)
    })?;
    Ok(McReport {
        rows,
        base_seed,
        config_hash: config_hash.to_string(),
        version: crate::VERSION.to_string(),
    })
}

impl McReport {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "model",
            "n_units",
            "n_periods",
            "n_regressors",
            "rho_e",
            "delta_eps",
            "metric",
            "value",
            "replications",
            "failures",
            "std_error",
            "base_seed",
            "config_hash",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.model.as_str().to_string(),
                r.n_units.to_string(),
                r.n_periods.to_string(),
                r.n_regressors.to_string(),
                format!("{:?}", r.rho_e),
                format!("{:?}", r.delta_eps),
                r.metric.clone(),
                format!("{:?}", r.value),
                r.replications.to_string(),
                r.failures.to_string(),
                format!("{:?}", r.std_error),
                self.base_seed.to_string(),
                self.config_hash.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    /// Fixed-width text table: one block per `(rho_e, delta_eps)` pair,
    /// rows ordered by `N` then `T`.
    pub fn text_table(&self) -> String {
        let mut out = String::new();
        let mut blocks: Vec<(Model, usize, f64, f64)> = Vec::new();
        for r in &self.rows {
            let key = (r.model, r.n_regressors, r.rho_e, r.delta_eps);
            if !blocks.contains(&key) {
                blocks.push(key);
            }
        }
        for (model, d, rho, delta) in blocks {
            let metrics = model.metric_names();
            out.push_str(&format!("{} d={d} rho_e={rho} delta_eps={delta}\n", model.as_str()));
            out.push_str(&format!("{:>5} {:>5}", "N", "T"));
            for m in metrics {
                out.push_str(&format!(" {m:>7}"));
            }
            out.push('\n');
            let mut cells: Vec<(usize, usize)> = Vec::new();
            for r in self.rows.iter().filter(|r| (r.model, r.n_regressors, r.rho_e, r.delta_eps) == (model, d, rho, delta)) {
                if !cells.contains(&(r.n_units, r.n_periods)) {
                    cells.push((r.n_units, r.n_periods));
                }
            }
            for (n, t) in cells {
                out.push_str(&format!("{n:>5} {t:>5}"));
                for m in metrics {
                    let v = self
                        .rows
                        .iter()
                        .find(|r| {
                            (r.model, r.n_regressors, r.rho_e, r.delta_eps, r.n_units, r.n_periods) == (model, d, rho, delta, n, t)
                                && r.metric == *m
                        })
                        .map_or(f64::NAN, |r| r.value);
                    out.push_str(&format!(" {v:>7.3}"));
                }
                out.push('\n');
            }
            out.push('\n');
        }
        out
    }
}

/// Parameter blocks in table order.
pub const PARAMETER_BLOCKS: [(f64, f64); 4] = [(0.2, 0.2), (0.2, 0.5), (0.5, 0.2), (0.5, 0.5)];

/// Cells of the preset tables 1..=8: designs 1 and 2, `d` in {50, 500}, with
/// sizes {50, 100, 200, 400} (tables 1, 2, 5, 6) or {20, 30, 40} (3, 4, 7, 8).
/// `sizes` overrides the size list.
pub fn table_cells(table: u32, sizes: Option<&[usize]>) -> Result<Vec<DgpSpec>> {
    let (model, d, default_sizes): (Model, usize, &[usize]) = match table {
        1 => (Model::Dgp1, 50, &[50, 100, 200, 400]),
        2 => (Model::Dgp1, 500, &[50, 100, 200, 400]),
        3 => (Model::Dgp1, 50, &[20, 30, 40]),
        4 => (Model::Dgp1, 500, &[20, 30, 40]),
        5 => (Model::Dgp2, 50, &[50, 100, 200, 400]),
        6 => (Model::Dgp2, 500, &[50, 100, 200, 400]),
        7 => (Model::Dgp2, 50, &[20, 30, 40]),
        8 => (Model::Dgp2, 500, &[20, 30, 40]),
        other => return Err(Error::InvalidArgument(format!("no preset table {other}"))),
    };
    let sizes = sizes.unwrap_or(default_sizes);
    let mut cells = Vec::new();
    for (rho, delta) in PARAMETER_BLOCKS {
        for &n in sizes {
            for &t in sizes {
                cells.push(DgpSpec::new(model, n, t, d, rho, delta));
            }
        }
    }
    Ok(cells)
}
