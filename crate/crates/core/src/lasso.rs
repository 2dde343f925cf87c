//! Weighted LASSO by cyclic coordinate descent with covariance updates, plus
//! penalty grids and modified-BIC tuning.
//!
//! The objective is
//!
//! ```text
//! (1/2n) |y - X b|^2 + penalty * sum_j g_j |b_j|
//! ```
//!
//! and is solved from the scaled Gram matrix `X'X/n`, so every fit on the same
//! design (a penalty path, the nodewise regressions) shares one pass over the data.
//! A weight of `+inf` freezes the coefficient at zero; a weight of `0` leaves it
//! unpenalized.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::PanelDataset;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOpts {
    /// Convergence threshold on the largest coordinate update in a sweep.
    pub tol: f64,
    pub max_iter: usize,
    /// Number of points in generated penalty grids.
    pub grid_size: usize,
    /// Ratio between the smallest and the largest grid penalty.
    pub grid_ratio: f64,
}

impl Default for SolverOpts {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iter: 10_000,
            grid_size: 100,
            grid_ratio: 1e-4,
        }
    }
}

/// `sign(z) * max(|z| - t, 0)`.
#[inline]
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Sufficient statistics `(X'X/n, X'y/n, y'y/n)` of a least-squares problem.
#[derive(Debug, Clone)]
pub struct Quadratic {
    pub gram: DMatrix<f64>,
    pub xty: DVector<f64>,
    pub yty: f64,
    pub n_obs: usize,
}

impl Quadratic {
    pub fn from_design(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "design has {} rows, response {}",
                x.nrows(),
                y.len()
            )));
        }
        let n = x.nrows() as f64;
        Ok(Self {
            gram: x.tr_mul(x) / n,
            xty: x.tr_mul(y) / n,
            yty: y.norm_squared() / n,
            n_obs: x.nrows(),
        })
    }

    pub fn from_dataset(ds: &PanelDataset) -> Self {
        Self::from_design(ds.x(), ds.y()).expect("panel dimensions are consistent")
    }

    pub fn dim(&self) -> usize {
        self.xty.len()
    }

    /// Same design, different response.
    pub fn with_response(&self, xty: DVector<f64>, yty: f64) -> Self {
        Self {
            gram: self.gram.clone(),
            xty,
            yty,
            n_obs: self.n_obs,
        }
    }

    /// Regression of column `j` on the remaining columns, read off the Gram matrix.
    pub fn nodewise(&self, j: usize) -> Self {
        let keep: Vec<usize> = (0..self.dim()).filter(|&k| k != j).collect();
        let gram = self.gram.select_rows(keep.iter()).select_columns(keep.iter());
        let xty = DVector::from_iterator(keep.len(), keep.iter().map(|&k| self.gram[(k, j)]));
        Self {
            gram,
            xty,
            yty: self.gram[(j, j)],
            n_obs: self.n_obs,
        }
    }

    /// `|y - X b|^2 / n`.
    pub fn rss(&self, beta: &DVector<f64>) -> f64 {
        let gb = &self.gram * beta;
        (self.yty - 2.0 * self.xty.dot(beta) + beta.dot(&gb)).max(0.0)
    }

    /// `X'(y - X b) / n`.
    pub fn score(&self, beta: &DVector<f64>) -> DVector<f64> {
        &self.xty - &self.gram * beta
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub beta: DVector<f64>,
    pub penalty: f64,
    pub weights: Vec<f64>,
    pub active_set: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
}

impl LassoFit {
    /// Returns the fit if the solver converged, `DidNotConverge` otherwise.
    pub fn ensure_converged(&self) -> Result<&Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::DidNotConverge {
                solver: "coordinate descent",
                iterations: self.iterations,
            })
        }
    }

    pub fn to_record(&self) -> LassoFitRecord {
        LassoFitRecord {
            dim: self.beta.len(),
            beta: self
                .active_set
                .iter()
                .map(|&j| (j, self.beta[j]))
                .collect(),
            penalty: self.penalty,
            weights: self
                .weights
                .iter()
                .map(|w| if w.is_finite() { Some(*w) } else { None })
                .collect(),
            active_set: self.active_set.clone(),
            iterations: self.iterations,
            converged: self.converged,
            objective: self.objective,
        }
    }

    pub fn from_record(rec: &LassoFitRecord) -> Result<Self> {
        if rec.weights.len() != rec.dim {
            return Err(Error::ArtifactMismatch("weights length differs from dim".into()));
        }
        let mut beta = DVector::zeros(rec.dim);
        for (&j, &v) in &rec.beta {
            if j >= rec.dim {
                return Err(Error::ArtifactMismatch(format!("beta index {j} out of range")));
            }
            beta[j] = v;
        }
        Ok(Self {
            beta,
            penalty: rec.penalty,
            weights: rec
                .weights
                .iter()
                .map(|w| w.unwrap_or(f64::INFINITY))
                .collect(),
            active_set: rec.active_set.clone(),
            iterations: rec.iterations,
            converged: rec.converged,
            objective: rec.objective,
        })
    }
}

/// JSON form of a [`LassoFit`]: sparse coefficients, `null` for frozen weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoFitRecord {
    pub dim: usize,
    pub beta: BTreeMap<usize, f64>,
    pub penalty: f64,
    pub weights: Vec<Option<f64>>,
    pub active_set: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
}

fn validate_weights(weights: &[f64], dim: usize, penalty: f64) -> Result<()> {
    if weights.len() != dim {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {dim} coefficients",
            weights.len()
        )));
    }
    if weights.iter().any(|w| w.is_nan() || *w < 0.0) {
        return Err(Error::InvalidArgument("weights must be non-negative".into()));
    }
    if !(penalty >= 0.0) || !penalty.is_finite() {
        return Err(Error::InvalidArgument(format!("penalty {penalty} must be >= 0")));
    }
    Ok(())
}

fn penalty_value(beta: &DVector<f64>, penalty: f64, weights: &[f64]) -> f64 {
    beta.iter()
        .zip(weights)
        .filter(|(b, _)| **b != 0.0)
        .map(|(b, w)| w * b.abs())
        .sum::<f64>()
        * penalty
}

/// Objective value of the weighted LASSO at `beta`.
pub fn objective(q: &Quadratic, beta: &DVector<f64>, penalty: f64, weights: &[f64]) -> f64 {
    0.5 * q.rss(beta) + penalty_value(beta, penalty, weights)
}

/// Cyclic coordinate descent on the weighted LASSO objective.
///
/// `warm_start` seeds the iterate; frozen coordinates are reset to zero.
/// Non-convergence is reported through `converged = false`, with the last
/// iterate returned.
pub fn solve(
    q: &Quadratic,
    penalty: f64,
    weights: &[f64],
    warm_start: Option<&DVector<f64>>,
    opts: &SolverOpts,
) -> Result<LassoFit> {
    let d = q.dim();
    validate_weights(weights, d, penalty)?;
    let mut beta = match warm_start {
        Some(b) if b.len() == d => b.clone(),
        Some(b) => {
            return Err(Error::DimensionMismatch(format!(
                "warm start has length {}, expected {d}",
                b.len()
            )))
        }
        None => DVector::zeros(d),
    };
    for (b, w) in beta.iter_mut().zip(weights) {
        if w.is_infinite() {
            *b = 0.0;
        }
    }
    let mut gb = &q.gram * &beta;
    let quad = |beta: &DVector<f64>, gb: &DVector<f64>| {
        0.5 * (q.yty - 2.0 * q.xty.dot(beta) + beta.dot(gb))
    };
    let mut obj = quad(&beta, &gb) + penalty_value(&beta, penalty, weights);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        iterations += 1;
        let mut max_delta: f64 = 0.0;
        for j in 0..d {
            let w = weights[j];
            if w.is_infinite() {
                continue;
            }
            let gjj = q.gram[(j, j)];
            if gjj <= 0.0 {
                // all-zero column: coefficient is not identified
                continue;
            }
            let z = q.xty[j] - gb[j] + gjj * beta[j];
            let new = soft_threshold(z, penalty * w) / gjj;
            let delta = new - beta[j];
            if delta != 0.0 {
                gb.axpy(delta, &q.gram.column(j), 1.0);
                beta[j] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        let new_obj = quad(&beta, &gb) + penalty_value(&beta, penalty, weights);
        debug_assert!(
            new_obj <= obj + 1e-10 * (1.0 + obj.abs()),
            "objective increased: {obj} -> {new_obj}"
        );
        obj = new_obj;
        if max_delta < opts.tol {
            converged = true;
            break;
        }
    }

    let active_set = (0..d).filter(|&j| beta[j] != 0.0).collect();
    Ok(LassoFit {
        beta,
        penalty,
        weights: weights.to_vec(),
        active_set,
        iterations,
        converged,
        objective: obj,
    })
}

/// Weighted LASSO on a panel; all-ones weights give the plain LASSO.
pub fn fit_weighted_lasso(
    ds: &PanelDataset,
    penalty: f64,
    weights: &[f64],
    opts: &SolverOpts,
) -> Result<LassoFit> {
    let q = Quadratic::from_dataset(ds);
    solve(&q, penalty, weights, None, opts)
}

/// Largest violation of the weighted LASSO optimality conditions at `fit`.
///
/// For active `j` the score must equal `penalty * g_j * sign(b_j)`; for inactive
/// `j` its magnitude must not exceed `penalty * g_j`. Frozen coordinates are skipped.
pub fn kkt_violation(q: &Quadratic, fit: &LassoFit) -> f64 {
    let score = q.score(&fit.beta);
    let mut worst: f64 = 0.0;
    for j in 0..q.dim() {
        let w = fit.weights[j];
        if w.is_infinite() || q.gram[(j, j)] <= 0.0 {
            continue;
        }
        let bound = fit.penalty * w;
        let v = if fit.beta[j] != 0.0 {
            (score[j] - bound * fit.beta[j].signum()).abs()
        } else {
            (score[j].abs() - bound).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// `g_j = 1/|b_j|`; zero pilot coefficients get `+inf` (frozen at zero).
    Adaptive,
    /// `g_j = w / max(|b_j|, w)`.
    Conservative,
}

pub fn adaptive_weights(init: &LassoFit, mode: WeightMode, threshold: f64) -> Result<Vec<f64>> {
    match mode {
        WeightMode::Adaptive => Ok(init
            .beta
            .iter()
            .map(|b| if *b == 0.0 { f64::INFINITY } else { 1.0 / b.abs() })
            .collect()),
        WeightMode::Conservative => {
            if !(threshold > 0.0) {
                return Err(Error::InvalidArgument(
                    "conservative weights need a positive threshold".into(),
                ));
            }
            Ok(init
                .beta
                .iter()
                .map(|b| threshold / b.abs().max(threshold))
                .collect())
        }
    }
}

/// Default conservative threshold `sqrt(log d / n)`.
pub fn default_conservative_threshold(n_obs: usize, dim: usize) -> f64 {
    ((dim.max(2) as f64).ln() / n_obs as f64).sqrt()
}

/// Smallest penalty at which every penalized coefficient is zero.
pub fn lambda_max(q: &Quadratic, weights: &[f64]) -> f64 {
    q.xty
        .iter()
        .zip(weights)
        .filter(|(_, w)| w.is_finite() && **w > 0.0)
        .map(|(c, w)| c.abs() / w)
        .fold(0.0, f64::max)
}

/// Log-spaced, strictly decreasing grid from `lambda_max` down to `lambda_max * ratio`.
pub fn log_grid(top: f64, ratio: f64, n_points: usize) -> Vec<f64> {
    assert!(n_points >= 2, "grid needs at least two points");
    let step = ratio.ln() / (n_points - 1) as f64;
    (0..n_points)
        .map(|k| {
            if k == n_points - 1 {
                top * ratio
            } else {
                top * (step * k as f64).exp()
            }
        })
        .collect()
}

pub fn penalty_grid_weighted(q: &Quadratic, weights: &[f64], opts: &SolverOpts) -> Vec<f64> {
    log_grid(lambda_max(q, weights), opts.grid_ratio, opts.grid_size.max(2))
}

/// Plain-LASSO penalty grid for a panel with `n_points` values.
pub fn penalty_grid(ds: &PanelDataset, n_points: usize) -> Result<Vec<f64>> {
    if n_points < 2 {
        return Err(Error::InvalidArgument("penalty grid needs n_points >= 2".into()));
    }
    let q = Quadratic::from_dataset(ds);
    let ones = vec![1.0; q.dim()];
    Ok(log_grid(lambda_max(&q, &ones), SolverOpts::default().grid_ratio, n_points))
}

/// Per-selected-variable cost `log(n)/n * log(log d)`, with `d` floored at 3.
pub fn bic_complexity(n_obs: usize, dim: usize) -> f64 {
    let n = n_obs as f64;
    n.ln() / n * (dim.max(3) as f64).ln().ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BicRow {
    pub penalty: f64,
    pub rss_term: f64,
    pub penalty_term: f64,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct BicSelection {
    pub chosen_penalty: f64,
    pub score_table: Vec<BicRow>,
    pub chosen_fit: LassoFit,
}

/// Picks the penalty minimizing `rss/n + |J| * log(n)/n * log(log d)` over a
/// warm-started path. `bic_dim` is the `d` entering the criterion. Ties go to
/// the larger penalty.
pub fn bic_select_quadratic(
    q: &Quadratic,
    grid: &[f64],
    weights: &[f64],
    bic_dim: usize,
    opts: &SolverOpts,
) -> Result<BicSelection> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty penalty grid".into()));
    }
    let cost = bic_complexity(q.n_obs, bic_dim);
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid[b].total_cmp(&grid[a]));

    let mut rows = vec![None; grid.len()];
    let mut best: Option<(f64, f64, LassoFit)> = None;
    let mut warm: Option<DVector<f64>> = None;
    for &k in &order {
        let fit = solve(q, grid[k], weights, warm.as_ref(), opts)?;
        let rss_term = q.rss(&fit.beta);
        let penalty_term = fit.active_set.len() as f64 * cost;
        let score = rss_term + penalty_term;
        rows[k] = Some(BicRow {
            penalty: grid[k],
            rss_term,
            penalty_term,
            score,
        });
        warm = Some(fit.beta.clone());
        // descending order: only a strictly better score displaces a larger penalty
        let better = match &best {
            None => true,
            Some((s, _, _)) => score < *s,
        };
        if better {
            best = Some((score, grid[k], fit));
        }
    }
    let (_, chosen_penalty, chosen_fit) = best.expect("grid is nonempty");
    Ok(BicSelection {
        chosen_penalty,
        score_table: rows.into_iter().map(|r| r.expect("every grid point fitted")).collect(),
        chosen_fit,
    })
}

pub fn bic_select(
    ds: &PanelDataset,
    grid: &[f64],
    weights: &[f64],
    opts: &SolverOpts,
) -> Result<BicSelection> {
    let q = Quadratic::from_dataset(ds);
    bic_select_quadratic(&q, grid, weights, q.dim(), opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_problem(n: usize, d: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        (x, y)
    }

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(-2.5, 1.0), -1.5);
        for z in [-3.7, 0.0, 1e-9, 42.0] {
            assert_eq!(soft_threshold(z, 0.0), z);
        }
    }

    #[test]
    fn lambda_max_zeroes_everything() {
        let (x, y) = random_problem(60, 8, 1);
        let q = Quadratic::from_design(&x, &y).unwrap();
        let ones = vec![1.0; 8];
        let lmax = lambda_max(&q, &ones);
        let fit = solve(&q, lmax, &ones, None, &SolverOpts::default()).unwrap();
        assert!(fit.active_set.is_empty());
        let fit = solve(&q, lmax * 0.99, &ones, None, &SolverOpts::default()).unwrap();
        assert_eq!(fit.active_set.len(), 1);
    }

    #[test]
    fn zero_penalty_is_least_squares() {
        let (x, y) = random_problem(40, 5, 2);
        let q = Quadratic::from_design(&x, &y).unwrap();
        let opts = SolverOpts {
            tol: 1e-12,
            ..Default::default()
        };
        let fit = solve(&q, 0.0, &[1.0; 5], None, &opts).unwrap();
        let ols = (x.transpose() * &x).lu().solve(&(x.transpose() * &y)).unwrap();
        assert!((fit.beta - ols).amax() < 1e-6);
    }

    #[test]
    fn frozen_and_unpenalized_coordinates() {
        let (x, y) = random_problem(50, 4, 3);
        let q = Quadratic::from_design(&x, &y).unwrap();
        let weights = [f64::INFINITY, 0.0, 1.0, 1.0];
        let lmax = lambda_max(&q, &weights);
        let fit = solve(&q, 10.0 * lmax, &weights, None, &SolverOpts::default()).unwrap();
        assert_eq!(fit.beta[0], 0.0);
        assert!(fit.beta[1] != 0.0, "unpenalized coordinate stays active");
        assert!(kkt_violation(&q, &fit) < 1e-6);
    }

    #[test]
    fn adaptive_and_conservative_weights() {
        let fit = LassoFit {
            beta: DVector::from_vec(vec![1.0, 0.1, 0.0]),
            penalty: 0.1,
            weights: vec![1.0; 3],
            active_set: vec![0, 1],
            iterations: 1,
            converged: true,
            objective: 0.0,
        };
        let g = adaptive_weights(&fit, WeightMode::Adaptive, 0.0).unwrap();
        assert_eq!(g[0], 1.0);
        assert!((g[1] - 10.0).abs() < 1e-12);
        assert!(g[2].is_infinite());
        let c = adaptive_weights(&fit, WeightMode::Conservative, 0.05).unwrap();
        assert_eq!(c[2], 1.0);
        assert!((c[1] - 0.5).abs() < 1e-12);
        assert!(c.iter().all(|w| *w > 0.0 && *w <= 1.0));
        assert!(adaptive_weights(&fit, WeightMode::Conservative, 0.0).is_err());
    }

    #[test]
    fn grid_construction() {
        let g = log_grid(2.0, 1e-4, 50);
        assert!(g.windows(2).all(|w| w[0] > w[1]));
        assert!((g[49] / g[0] - 1e-4).abs() < 1e-12);
    }

    #[test]
    fn singleton_grid_bic() {
        let (x, y) = random_problem(30, 4, 4);
        let q = Quadratic::from_design(&x, &y).unwrap();
        let sel = bic_select_quadratic(&q, &[0.05], &[1.0; 4], 4, &SolverOpts::default()).unwrap();
        assert_eq!(sel.chosen_penalty, 0.05);
        assert_eq!(sel.score_table.len(), 1);
    }

    #[test]
    fn bic_prefers_larger_penalty_on_ties() {
        // y orthogonal to X: every penalty gives beta = 0 and the same score
        let x = DMatrix::from_column_slice(4, 1, &[1.0, -1.0, 0.0, 0.0]);
        let y = DVector::from_vec(vec![0.0, 0.0, 1.0, 1.0]);
        let q = Quadratic::from_design(&x, &y).unwrap();
        let sel =
            bic_select_quadratic(&q, &[0.1, 0.3, 0.2], &[1.0], 1, &SolverOpts::default()).unwrap();
        assert_eq!(sel.chosen_penalty, 0.3);
    }

    #[test]
    fn record_round_trip() {
        let (x, y) = random_problem(40, 6, 5);
        let q = Quadratic::from_design(&x, &y).unwrap();
        let mut w = vec![1.0; 6];
        w[2] = f64::INFINITY;
        let fit = solve(&q, 0.05, &w, None, &SolverOpts::default()).unwrap();
        let json = serde_json::to_string(&fit.to_record()).unwrap();
        let back: LassoFitRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(LassoFit::from_record(&back).unwrap(), fit);
    }

    #[test]
    fn nodewise_problem_matches_direct_regression() {
        let (x, _) = random_problem(50, 4, 6);
        let q = Quadratic::from_design(&x, &DVector::zeros(50)).unwrap();
        let node = q.nodewise(1);
        let rest = x.clone().remove_column(1);
        let direct = Quadratic::from_design(&rest, &x.column(1).into_owned()).unwrap();
        assert!((node.gram - direct.gram).amax() < 1e-12);
        assert!((node.xty - direct.xty).amax() < 1e-12);
        assert!((node.yty - direct.yty).abs() < 1e-12);
    }
}
