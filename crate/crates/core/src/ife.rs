//! Panel regression with interactive fixed effects `y_t = X_t b + L f_t + e_t`.
//!
//! Step 1 solves the convex l1 + nuclear-norm problem
//! `(1/2NT)|y - Xb - vec(Xi)|^2 + w1 |b|_1 + (w2/sqrt(NT)) |Xi|_*` by exact
//! block minimization, reads off the rank and the loadings. Step 2 alternates
//! a weighted LASSO with the factors concentrated out and a PCA update of the
//! loadings. Step 3 applies the half-panel jackknife plus an analytic term and
//! builds the plug-in sandwich variance for the active coefficients.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lasso::{self, LassoFit, Quadratic, SolverOpts};
use crate::linalg;
use crate::longrun::{self, KernelSpec};
use crate::panel::PanelDataset;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IfeOpts {
    pub solver: SolverOpts,
    /// Relative objective change that ends the l1 + nuclear-norm iterations.
    pub outer_tol: f64,
    /// Sup-norm coefficient change that ends the LASSO/PCA iterations.
    pub beta_tol: f64,
    pub max_outer: usize,
}

impl Default for IfeOpts {
    fn default() -> Self {
        Self {
            solver: SolverOpts::default(),
            outer_tol: 1e-6,
            beta_tol: 1e-6,
            max_outer: 100,
        }
    }
}

/// Per-period view of a panel (optionally restricted to some regressors and a
/// period range) with its pooled sufficient statistics.
#[derive(Debug, Clone)]
pub struct PeriodPanel {
    n_units: usize,
    n_periods: usize,
    /// `X_t`, `N x d` for each period.
    xs: Vec<DMatrix<f64>>,
    /// Response as `T x N`.
    y: DMatrix<f64>,
    quad: Quadratic,
}

impl PeriodPanel {
    pub fn new(ds: &PanelDataset) -> Self {
        Self::restricted(ds, None, 0..ds.n_periods())
    }

    pub fn restricted(ds: &PanelDataset, columns: Option<&[usize]>, periods: Range<usize>) -> Self {
        let (n, d) = (ds.n_units(), ds.n_regressors());
        let cols: Vec<usize> = match columns {
            Some(c) => c.to_vec(),
            None => (0..d).collect(),
        };
        let t_len = periods.len();
        let xs: Vec<DMatrix<f64>> = periods
            .clone()
            .map(|t| DMatrix::from_fn(n, cols.len(), |i, k| ds.x_at(i, t, cols[k])))
            .collect();
        let y = DMatrix::from_fn(t_len, n, |t, i| ds.y_at(i, periods.start + t));
        let quad = if columns.is_none() && periods.len() == ds.n_periods() {
            Quadratic::from_dataset(ds)
        } else {
            let rows: Vec<usize> = (0..n)
                .flat_map(|i| periods.clone().map(move |t| (i, t)))
                .map(|(i, t)| ds.row(i, t))
                .collect();
            let x = ds.x().select_rows(rows.iter()).select_columns(cols.iter());
            let yv = DVector::from_iterator(rows.len(), rows.iter().map(|&r| ds.y()[r]));
            Quadratic::from_design(&x, &yv).expect("consistent dimensions")
        };
        Self {
            n_units: n,
            n_periods: t_len,
            xs,
            y,
            quad,
        }
    }

    pub fn n_obs(&self) -> usize {
        self.n_units * self.n_periods
    }

    pub fn dim(&self) -> usize {
        self.quad.dim()
    }

    pub fn quadratic(&self) -> &Quadratic {
        &self.quad
    }

    /// `Y - X b` as `T x N`.
    pub fn residual_matrix(&self, beta: &DVector<f64>) -> DMatrix<f64> {
        let mut r = self.y.clone();
        for (t, xt) in self.xs.iter().enumerate() {
            let fit = xt * beta;
            for i in 0..self.n_units {
                r[(t, i)] -= fit[i];
            }
        }
        r
    }

    /// `sum_t X_t' m_t` for a `T x N` matrix `m` (row `t` is `m_t`).
    fn cross(&self, m: &DMatrix<f64>) -> DVector<f64> {
        let mut acc = DVector::zeros(self.dim());
        for (t, xt) in self.xs.iter().enumerate() {
            acc += xt.tr_mul(&m.row(t).transpose());
        }
        acc
    }

    /// Sufficient statistics of the LASSO with loadings `l` concentrated out.
    fn concentrated(&self, l: &DMatrix<f64>) -> Quadratic {
        if l.ncols() == 0 {
            return self.quad.clone();
        }
        let n = self.n_units as f64;
        let nobs = self.n_obs() as f64;
        let d = self.dim();
        let mut gram_adj = DMatrix::zeros(d, d);
        let mut xty_adj = DVector::zeros(d);
        let mut yty_adj = 0.0;
        for (t, xt) in self.xs.iter().enumerate() {
            let a = l.tr_mul(xt);
            let ly = l.tr_mul(&self.y.row(t).transpose());
            gram_adj += a.tr_mul(&a);
            xty_adj += a.tr_mul(&ly);
            yty_adj += ly.norm_squared();
        }
        let scale = 1.0 / (n * nobs);
        let gram = &self.quad.gram - gram_adj * scale;
        Quadratic {
            gram: (&gram + gram.transpose()) * 0.5,
            xty: &self.quad.xty - xty_adj * scale,
            yty: self.quad.yty - yty_adj * scale,
            n_obs: self.quad.n_obs,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LowRankFit {
    pub beta_init: DVector<f64>,
    pub xi: DMatrix<f64>,
    pub w1: f64,
    pub w2: f64,
    pub r_hat: usize,
    /// `sqrt(N)` times the leading `r_hat` right singular vectors of `xi`.
    pub lambda_init: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub solver_trace: Vec<f64>,
    pub converged: bool,
}

impl LowRankFit {
    pub fn active_set(&self) -> Vec<usize> {
        (0..self.beta_init.len()).filter(|&j| self.beta_init[j] != 0.0).collect()
    }

    /// Number of nonzero singular values of `xi`.
    pub fn xi_rank(&self) -> usize {
        self.singular_values.len()
    }

    /// Loadings built from the leading `r` right singular vectors of `xi`.
    pub fn loadings_with_rank(&self, r: usize) -> Result<DMatrix<f64>> {
        let n = self.xi.ncols();
        if r > self.xi.nrows().min(n) {
            return Err(Error::InvalidArgument(format!("rank {r} exceeds min(T, N)")));
        }
        let svd = linalg::thin_svd(&self.xi)?;
        Ok(svd.v.columns(0, r).into_owned() * (n as f64).sqrt())
    }
}

fn l1(beta: &DVector<f64>) -> f64 {
    beta.iter().map(|v| v.abs()).sum()
}

/// `#{k : psi_k >= sqrt(tau * psi_1)}` with `tau = w2 sqrt(NT)`.
pub fn rank_rule(singular_values: &DVector<f64>, tau: f64) -> usize {
    let top = match singular_values.iter().copied().reduce(f64::max) {
        Some(v) if v > 0.0 => v,
        _ => return 0,
    };
    let cut = (tau * top).sqrt();
    singular_values.iter().filter(|&&s| s >= cut).count()
}

/// l1 + nuclear-norm estimator by alternating exact block minimization.
pub fn fit_l1_nuclear(ds: &PanelDataset, w1: f64, w2: f64, opts: &IfeOpts) -> Result<LowRankFit> {
    fit_l1_nuclear_panel(&PeriodPanel::new(ds), w1, w2, None, opts)
}

pub fn fit_l1_nuclear_panel(
    panel: &PeriodPanel,
    w1: f64,
    w2: f64,
    warm: Option<(&DVector<f64>, &DMatrix<f64>)>,
    opts: &IfeOpts,
) -> Result<LowRankFit> {
    if !(w1 >= 0.0) || !(w2 >= 0.0) {
        return Err(Error::InvalidArgument("w1 and w2 must be >= 0".into()));
    }
    let (t_len, n) = (panel.n_periods, panel.n_units);
    let nobs = panel.n_obs() as f64;
    let root = nobs.sqrt();
    let tau = w2 * root;
    let d = panel.dim();
    let ones = vec![1.0; d];
    let (mut beta, mut xi) = match warm {
        Some((b, x)) => (b.clone(), x.clone()),
        None => (DVector::zeros(d), DMatrix::zeros(t_len, n)),
    };
    let mut svd = linalg::thin_svd(&xi)?;
    svd.singular_values.iter_mut().for_each(|s| {
        if *s < 1e-300 {
            *s = 0.0
        }
    });
    let mut nuc = svd.singular_values.sum();
    let objective = |r: &DMatrix<f64>, xi: &DMatrix<f64>, beta: &DVector<f64>, nuc: f64| {
        0.5 * (r - xi).norm_squared() / nobs + w1 * l1(beta) + w2 / root * nuc
    };
    let mut trace = vec![objective(&panel.residual_matrix(&beta), &xi, &beta, nuc)];
    let mut converged = false;
    let mut kept = linalg::ThinSvd {
        u: DMatrix::zeros(t_len, 0),
        singular_values: DVector::zeros(0),
        v: DMatrix::zeros(n, 0),
    };
    for _ in 0..opts.max_outer {
        let target = &panel.y - &xi;
        let xty = &panel.quad.xty - panel.cross(&xi) / nobs;
        let q = panel.quad.with_response(xty, target.norm_squared() / nobs);
        beta = lasso::solve(&q, w1, &ones, Some(&beta), &opts.solver)?.beta;
        let r = panel.residual_matrix(&beta);
        kept = linalg::svt_factors(&r, tau)?;
        xi = kept.compose(t_len, n);
        nuc = kept.singular_values.sum();
        let obj = objective(&r, &xi, &beta, nuc);
        let prev = *trace.last().expect("trace starts nonempty");
        trace.push(obj);
        if (prev - obj).abs() <= opts.outer_tol * prev.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }
    let r_hat = rank_rule(&kept.singular_values, tau);
    let lambda_init = kept.v.columns(0, r_hat).into_owned() * (n as f64).sqrt();
    Ok(LowRankFit {
        beta_init: beta,
        xi,
        w1,
        w2,
        r_hat,
        lambda_init,
        singular_values: kept.singular_values,
        solver_trace: trace,
        converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowRankBicRow {
    pub w1: f64,
    pub w2: f64,
    pub rss_term: f64,
    pub active: usize,
    pub rank: usize,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct LowRankTuning {
    pub w1: f64,
    pub w2: f64,
    pub fit: LowRankFit,
    pub table: Vec<LowRankBicRow>,
}

/// Ten log-spaced values from the plain-LASSO `lambda_max` down by a factor 1e3.
pub fn default_w1_grid(ds: &PanelDataset) -> Vec<f64> {
    let q = Quadratic::from_dataset(ds);
    let top = lasso::lambda_max(&q, &vec![1.0; q.dim()]);
    lasso::log_grid(top.max(f64::MIN_POSITIVE), 1e-3, 10)
}

/// `c max(1/sqrt N, 1/sqrt T)` for ten log-spaced `c` in `[0.1, 10]`.
pub fn default_w2_grid(n_units: usize, n_periods: usize) -> Vec<f64> {
    let rate = (1.0 / (n_units as f64).sqrt()).max(1.0 / (n_periods as f64).sqrt());
    lasso::log_grid(10.0 * rate, 1e-2, 10)
}

/// Product-grid search minimizing
/// `rss/NT + |J| log(NT)/NT log(log d) + rank(Xi) (N + T)/NT`.
/// Ties go to the lexicographically larger `(w1, w2)`.
pub fn tune_l1_nuclear(
    ds: &PanelDataset,
    grid1: &[f64],
    grid2: &[f64],
    opts: &IfeOpts,
) -> Result<LowRankTuning> {
    if grid1.is_empty() || grid2.is_empty() {
        return Err(Error::InvalidArgument("empty tuning grid".into()));
    }
    let panel = PeriodPanel::new(ds);
    let nobs = panel.n_obs() as f64;
    let cost = lasso::bic_complexity(panel.n_obs(), panel.dim());
    let rank_cost = (panel.n_units + panel.n_periods) as f64 / nobs;
    let desc = |g: &[f64]| {
        let mut v = g.to_vec();
        v.sort_by(|a, b| b.total_cmp(a));
        v.dedup();
        v
    };
    let (g1, g2) = (desc(grid1), desc(grid2));
    let mut table = Vec::with_capacity(g1.len() * g2.len());
    let mut best: Option<(f64, LowRankFit)> = None;
    let mut column_start: Option<(DVector<f64>, DMatrix<f64>)> = None;
    for &w2 in &g2 {
        let mut warm = column_start.clone();
        for (k, &w1) in g1.iter().enumerate() {
            let fit = fit_l1_nuclear_panel(&panel, w1, w2, warm.as_ref().map(|(b, x)| (b, x)), opts)?;
            let resid = panel.residual_matrix(&fit.beta_init) - &fit.xi;
            let rss_term = resid.norm_squared() / nobs;
            let active = fit.active_set().len();
            let rank = fit.xi_rank();
            let score = rss_term + active as f64 * cost + rank as f64 * rank_cost;
            table.push(LowRankBicRow {
                w1,
                w2,
                rss_term,
                active,
                rank,
                score,
            });
            warm = Some((fit.beta_init.clone(), fit.xi.clone()));
            if k == 0 {
                column_start = warm.clone();
            }
            let better = match &best {
                None => true,
                Some((s, b)) => score < *s || (score == *s && (w1, w2) > (b.w1, b.w2)),
            };
            if better {
                best = Some((score, fit));
            }
        }
    }
    let (_, fit) = best.expect("grids are nonempty");
    Ok(LowRankTuning {
        w1: fit.w1,
        w2: fit.w2,
        fit,
        table,
    })
}

/// Penalty weights `g_j = 1(|b_j| < w3)`.
pub fn indicator_weights(beta_init: &DVector<f64>, w3: f64) -> Vec<f64> {
    beta_init.iter().map(|b| if b.abs() < w3 { 1.0 } else { 0.0 }).collect()
}

/// Bias-correction and variance components for the active coefficients.
#[derive(Debug, Clone)]
pub struct FactorInference {
    pub beta_bc: DVector<f64>,
    pub beta_bc_jackknife: DVector<f64>,
    pub mu_zeta_hat: DVector<f64>,
    pub sigma_j: DMatrix<f64>,
    pub theta_j: DMatrix<f64>,
    pub omega_e: DMatrix<f64>,
    pub omega_threshold: f64,
    pub half_panel: (DVector<f64>, DVector<f64>),
    pub kernel: KernelSpec,
}

#[derive(Debug, Clone)]
pub struct FactorFit {
    pub n_units: usize,
    pub n_periods: usize,
    pub beta: DVector<f64>,
    pub active_set: Vec<usize>,
    /// `T x r` estimated factors.
    pub factors: DMatrix<f64>,
    /// `N x r` estimated loadings, normalized to `L'L/N = I`.
    pub loadings: DMatrix<f64>,
    pub r_hat: usize,
    pub w3: f64,
    pub weights: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Set when the rank is zero and the fit is a plain weighted LASSO.
    pub no_factors: bool,
    pub inference: Option<FactorInference>,
}

impl FactorFit {
    /// `e_t = y_t - X_t b - L f_t` as `T x N`.
    pub fn residuals(&self, ds: &PanelDataset) -> DMatrix<f64> {
        let panel = PeriodPanel::new(ds);
        panel.residual_matrix(&self.beta) - &self.factors * self.loadings.transpose()
    }

    /// Projector `L L' / N` onto the loading space.
    pub fn loading_projector(&self) -> DMatrix<f64> {
        &self.loadings * self.loadings.transpose() / self.n_units as f64
    }

    pub fn to_record(&self) -> FactorFitRecord {
        let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
        };
        let vec = |v: &DVector<f64>| v.iter().copied().collect::<Vec<_>>();
        FactorFitRecord {
            n_units: self.n_units,
            n_periods: self.n_periods,
            dim: self.beta.len(),
            beta: self
                .active_set
                .iter()
                .map(|&j| (j, self.beta[j]))
                .collect(),
            active_set: self.active_set.clone(),
            r_hat: self.r_hat,
            w3: self.w3,
            iterations: self.iterations,
            converged: self.converged,
            no_factors: self.no_factors,
            loadings: rows(&self.loadings),
            factors: rows(&self.factors),
            inference: self.inference.as_ref().map(|inf| FactorInferenceRecord {
                beta_bc: vec(&inf.beta_bc),
                beta_bc_jackknife: vec(&inf.beta_bc_jackknife),
                mu_zeta_hat: vec(&inf.mu_zeta_hat),
                sigma_j: rows(&inf.sigma_j),
                theta_j: rows(&inf.theta_j),
                omega_threshold: inf.omega_threshold,
                half_panel: (vec(&inf.half_panel.0), vec(&inf.half_panel.1)),
                kernel: inf.kernel,
            }),
        }
    }
}

/// JSON form of a factor fit: sparse coefficients, dense loadings and factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorFitRecord {
    pub n_units: usize,
    pub n_periods: usize,
    pub dim: usize,
    pub beta: std::collections::BTreeMap<usize, f64>,
    pub active_set: Vec<usize>,
    pub r_hat: usize,
    pub w3: f64,
    pub iterations: usize,
    pub converged: bool,
    pub no_factors: bool,
    pub loadings: Vec<Vec<f64>>,
    pub factors: Vec<Vec<f64>>,
    pub inference: Option<FactorInferenceRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorInferenceRecord {
    pub beta_bc: Vec<f64>,
    pub beta_bc_jackknife: Vec<f64>,
    pub mu_zeta_hat: Vec<f64>,
    pub sigma_j: Vec<Vec<f64>>,
    pub theta_j: Vec<Vec<f64>>,
    pub omega_threshold: f64,
    pub half_panel: (Vec<f64>, Vec<f64>),
    pub kernel: KernelSpec,
}

struct Iterated {
    beta: DVector<f64>,
    loadings: DMatrix<f64>,
    factors: DMatrix<f64>,
    iterations: usize,
    converged: bool,
}

fn top_loadings(resid: &DMatrix<f64>, r: usize, nobs: f64) -> Result<DMatrix<f64>> {
    let n = resid.ncols();
    let cov = resid.tr_mul(resid) / nobs;
    let (_, vecs) = linalg::sym_eigen_desc(&cov)?;
    Ok(vecs.columns(0, r).into_owned() * (n as f64).sqrt())
}

fn iterate_panel(
    panel: &PeriodPanel,
    weights: &[f64],
    w3: f64,
    loadings0: &DMatrix<f64>,
    start: &DVector<f64>,
    opts: &IfeOpts,
) -> Result<Iterated> {
    let r = loadings0.ncols();
    let n = panel.n_units as f64;
    let nobs = panel.n_obs() as f64;
    if r == 0 {
        let fit = lasso::solve(&panel.quad, w3, weights, None, &opts.solver)?;
        return Ok(Iterated {
            beta: fit.beta,
            loadings: DMatrix::zeros(panel.n_units, 0),
            factors: DMatrix::zeros(panel.n_periods, 0),
            iterations: 1,
            converged: fit.converged,
        });
    }
    let mut loadings = loadings0.clone();
    let mut beta = start.clone();
    let mut converged = false;
    let mut iterations = 0;
    let mut resid = panel.residual_matrix(&beta);
    while iterations < opts.max_outer {
        iterations += 1;
        let q = panel.concentrated(&loadings);
        let next = lasso::solve(&q, w3, weights, Some(&beta), &opts.solver)?.beta;
        resid = panel.residual_matrix(&next);
        loadings = top_loadings(&resid, r, nobs)?;
        let delta = (&next - &beta).amax();
        beta = next;
        if delta < opts.beta_tol {
            converged = true;
            break;
        }
    }
    let factors = &resid * &loadings / n;
    Ok(Iterated {
        beta,
        loadings,
        factors,
        iterations,
        converged,
    })
}

fn assemble_fit(panel: &PeriodPanel, it: Iterated, w3: f64, weights: Vec<f64>) -> FactorFit {
    let r_hat = it.loadings.ncols();
    FactorFit {
        n_units: panel.n_units,
        n_periods: panel.n_periods,
        active_set: (0..it.beta.len()).filter(|&j| it.beta[j] != 0.0).collect(),
        beta: it.beta,
        factors: it.factors,
        loadings: it.loadings,
        r_hat,
        w3,
        weights,
        iterations: it.iterations,
        converged: it.converged,
        no_factors: r_hat == 0,
        inference: None,
    }
}

/// Iterated weighted LASSO / PCA starting from the step-1 loadings, with
/// weights `g_j = 1(|b_init_j| < w3)`.
pub fn iterate_factor_lasso(
    ds: &PanelDataset,
    init: &LowRankFit,
    w3: f64,
    opts: &IfeOpts,
) -> Result<FactorFit> {
    iterate_with_loadings(ds, &init.beta_init, &init.lambda_init, w3, opts)
}

pub fn iterate_with_loadings(
    ds: &PanelDataset,
    beta_init: &DVector<f64>,
    loadings0: &DMatrix<f64>,
    w3: f64,
    opts: &IfeOpts,
) -> Result<FactorFit> {
    if !(w3 > 0.0) {
        return Err(Error::InvalidArgument(format!("w3 must be > 0, got {w3}")));
    }
    let panel = PeriodPanel::new(ds);
    let weights = indicator_weights(beta_init, w3);
    let it = iterate_panel(&panel, &weights, w3, loadings0, beta_init, opts)?;
    Ok(assemble_fit(&panel, it, w3, weights))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct W3BicRow {
    pub w3: f64,
    pub rss_term: f64,
    pub active: usize,
    pub score: f64,
}

/// Twenty log-spaced values from `max|b_init|` down by a factor 100.
pub fn default_w3_grid(beta_init: &DVector<f64>) -> Vec<f64> {
    let top = beta_init.amax();
    if top > 0.0 {
        lasso::log_grid(top, 1e-2, 20)
    } else {
        vec![1.0]
    }
}

/// Picks `w3` minimizing `|y - X b - vec(F L')|^2/NT + |J| log(NT)/NT log(log d)`;
/// ties go to the larger value.
pub fn tune_w3(
    ds: &PanelDataset,
    init: &LowRankFit,
    grid: &[f64],
    opts: &IfeOpts,
) -> Result<(FactorFit, Vec<W3BicRow>)> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty w3 grid".into()));
    }
    let panel = PeriodPanel::new(ds);
    let nobs = panel.n_obs() as f64;
    let cost = lasso::bic_complexity(panel.n_obs(), panel.dim());
    let mut g = grid.to_vec();
    g.sort_by(|a, b| b.total_cmp(a));
    g.dedup();
    let mut table = Vec::new();
    let mut best: Option<(f64, FactorFit)> = None;
    for &w3 in &g {
        if !(w3 > 0.0) {
            return Err(Error::InvalidArgument(format!("w3 must be > 0, got {w3}")));
        }
        let weights = indicator_weights(&init.beta_init, w3);
        let it = iterate_panel(&panel, &weights, w3, &init.lambda_init, &init.beta_init, opts)?;
        let fit = assemble_fit(&panel, it, w3, weights);
        let resid = panel.residual_matrix(&fit.beta) - &fit.factors * fit.loadings.transpose();
        let rss_term = resid.norm_squared() / nobs;
        let score = rss_term + fit.active_set.len() as f64 * cost;
        table.push(W3BicRow {
            w3,
            rss_term,
            active: fit.active_set.len(),
            score,
        });
        if best.as_ref().map_or(true, |(s, _)| score < *s) {
            best = Some((score, fit));
        }
    }
    Ok((best.expect("grid is nonempty").1, table))
}

/// How the residual covariance threshold is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OmegaThreshold {
    /// Two-fold CV over the halves of the sample.
    Cv,
    /// `u = c sqrt(log N / T)`.
    Rate(f64),
    /// Fixed `u`.
    Value(f64),
}

/// Half-panel jackknife, analytic correction and plug-in variance.
pub fn bias_correct(
    ds: &PanelDataset,
    fit: &FactorFit,
    kernel: &KernelSpec,
    omega_threshold: OmegaThreshold,
    opts: &IfeOpts,
) -> Result<FactorFit> {
    let j_set = fit.active_set.clone();
    if j_set.is_empty() {
        return Err(Error::EmptyActiveSet);
    }
    let (n, t_len) = (ds.n_units(), ds.n_periods());
    if t_len < 4 {
        return Err(Error::InvalidArgument(format!("bias correction needs T >= 4, got {t_len}")));
    }
    let nf = n as f64;
    let nobs = (n * t_len) as f64;
    let r = fit.r_hat;
    let beta_j = DVector::from_iterator(j_set.len(), j_set.iter().map(|&j| fit.beta[j]));
    let weights_j: Vec<f64> = j_set.iter().map(|&j| fit.weights[j]).collect();

    let (s1, s2) = longrun::half_split(t_len);
    let refit = |periods: Range<usize>| -> Result<DVector<f64>> {
        let panel = PeriodPanel::restricted(ds, Some(&j_set), periods);
        Ok(iterate_panel(&panel, &weights_j, fit.w3, &fit.loadings, &beta_j, opts)?.beta)
    };
    let (h1, h2) = rayon::join(|| refit(s1), || refit(s2));
    let (h1, h2) = (h1?, h2?);
    let jackknife = &beta_j * 2.0 - (&h1 + &h2) * 0.5;

    let panel_j = PeriodPanel::restricted(ds, Some(&j_set), 0..t_len);
    let resid = panel_j.residual_matrix(&beta_j) - &fit.factors * fit.loadings.transpose();
    let omega_full = resid.tr_mul(&resid) / t_len as f64;
    let u = match omega_threshold {
        OmegaThreshold::Value(u) => u,
        OmegaThreshold::Rate(c) => c * ((n.max(2) as f64).ln() / t_len as f64).sqrt(),
        OmegaThreshold::Cv => {
            let (a, b) = longrun::half_split(t_len);
            let ra = resid.rows(a.start, a.len());
            let rb = resid.rows(b.start, b.len());
            let fa = ra.tr_mul(&ra) / a.len() as f64;
            let fb = rb.tr_mul(&rb) / b.len() as f64;
            longrun::cv_select(&fa, &fb, &longrun::default_threshold_grid(&omega_full))?
        }
    };
    let omega_e = longrun::threshold_matrix(&omega_full, u);

    let m_proj = DMatrix::<f64>::identity(n, n) - fit.loading_projector();
    // time projection F (F'F/T)^-1 F' / T and the analytic term's N x r factor
    let (time_proj, k_mat) = if r > 0 {
        let ff = fit.factors.tr_mul(&fit.factors) / t_len as f64;
        let ff_inv = ff.try_inverse().ok_or(Error::SingularDJ(f64::INFINITY))?;
        let p = &fit.factors * &ff_inv * fit.factors.transpose() / t_len as f64;
        let k = &m_proj * &omega_e * &fit.loadings * &ff_inv;
        (Some(p), Some(k))
    } else {
        (None, None)
    };

    // X_hat_{J,t}: regressor-by-regressor T x N panels with the factor part projected out over time
    let jn = j_set.len();
    let mut xhat: Vec<DMatrix<f64>> = j_set
        .iter()
        .map(|&j| DMatrix::from_fn(t_len, n, |t, i| ds.x_at(i, t, j)))
        .collect();
    if let Some(p) = &time_proj {
        for xm in xhat.iter_mut() {
            *xm = &*xm - p * &*xm;
        }
    }
    let xhat_t = |t: usize| DMatrix::from_fn(n, jn, |i, k| xhat[k][(t, i)]);

    let mut sigma = DMatrix::zeros(jn, jn);
    let mut scores = DMatrix::zeros(t_len, jn);
    let mut mu_sum = DVector::zeros(jn);
    for t in 0..t_len {
        let xt = xhat_t(t);
        let mx = &m_proj * &xt;
        sigma += xt.tr_mul(&mx);
        let s = mx.tr_mul(&resid.row(t).transpose()) / nf.sqrt();
        scores.set_row(t, &s.transpose());
        if let Some(k) = &k_mat {
            let x_raw = &panel_j.xs[t];
            let kf = k * fit.factors.row(t).transpose();
            mu_sum += (&m_proj * x_raw).tr_mul(&kf);
        }
    }
    sigma /= nobs;
    let sigma = (&sigma + sigma.transpose()) * 0.5;
    let cond = linalg::condition_number(&sigma)?;
    if !(cond <= 1e12) {
        return Err(Error::SingularDJ(cond));
    }
    let sigma_inv = linalg::spd_inverse(&sigma).ok_or(Error::SingularSigmaJ)?;
    let mu_zeta = -(&sigma_inv * mu_sum) / nobs;
    let beta_bc = &jackknife - &mu_zeta / nf;
    let theta = longrun::hac(&scores, kernel)?.theta;

    let mut out = fit.clone();
    out.inference = Some(FactorInference {
        beta_bc,
        beta_bc_jackknife: jackknife,
        mu_zeta_hat: mu_zeta,
        sigma_j: sigma,
        theta_j: theta,
        omega_e,
        omega_threshold: u,
        half_panel: (h1, h2),
        kernel: *kernel,
    });
    Ok(out)
}

/// `Sigma_J` and `Theta_J` of a bias-corrected fit.
pub fn plugin_variance(fit: &FactorFit) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let inf = fit.inference.as_ref().ok_or(Error::EmptyActiveSet)?;
    Ok((inf.sigma_j.clone(), inf.theta_j.clone()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShareRow {
    pub component: String,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainedVariance {
    pub regressors: Vec<ShareRow>,
    pub factors: Vec<ShareRow>,
    pub total_regressors: f64,
    pub total_factors: f64,
}

fn pooled_variance(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (mut n, mut sum) = (0usize, 0.0);
    for v in values.clone() {
        n += 1;
        sum += v;
    }
    let mean = sum / n as f64;
    values.map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64
}

/// Pooled variance shares of each selected regressor's contribution and each
/// factor component, relative to the variance of `y`.
pub fn explained_variance(ds: &PanelDataset, fit: &FactorFit) -> Result<ExplainedVariance> {
    let vy = pooled_variance(ds.y().iter().copied());
    if !(vy > 0.0) {
        return Err(Error::ZeroVariance(0));
    }
    let names = ds.regressor_names();
    let regressors: Vec<ShareRow> = fit
        .active_set
        .iter()
        .map(|&j| {
            let b = fit.beta[j];
            ShareRow {
                component: names[j].clone(),
                share: pooled_variance(ds.x().column(j).iter().map(move |x| x * b)) / vy,
            }
        })
        .collect();
    let (n, t_len) = (ds.n_units(), ds.n_periods());
    let factors: Vec<ShareRow> = (0..fit.r_hat)
        .map(|k| {
            let vals = (0..n).flat_map(|i| (0..t_len).map(move |t| (i, t)));
            let vals = vals.map(|(i, t)| fit.loadings[(i, k)] * fit.factors[(t, k)]);
            ShareRow {
                component: format!("factor{}", k + 1),
                share: pooled_variance(vals) / vy,
            }
        })
        .collect();
    Ok(ExplainedVariance {
        total_regressors: regressors.iter().map(|r| r.share).sum(),
        total_factors: factors.iter().map(|r| r.share).sum(),
        regressors,
        factors,
    })
}

/// Weighted LASSO fit on the same data, used to cross-check the rank-zero case.
pub fn plain_weighted_lasso(ds: &PanelDataset, beta_init: &DVector<f64>, w3: f64, opts: &IfeOpts) -> Result<LassoFit> {
    lasso::fit_weighted_lasso(ds, w3, &indicator_weights(beta_init, w3), &opts.solver)
}
