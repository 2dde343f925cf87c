//! Nodewise LASSO precision estimate and the debiased LASSO.
//!
//! Row `j` regresses column `X_j` on the other columns,
//!
//! ```text
//! gamma_j = argmin_b (1/n)|X_j - X_{-j} b|^2 + 2 w_j |b|_1
//! tau_j^2 = (1/n)|X_j - X_{-j} gamma_j|^2 + w_j |gamma_j|_1
//! ```
//!
//! and `Omega[j, .] = (e_j - gamma_j) / tau_j^2` with `gamma_j` embedded at the
//! off-diagonal positions. The matrix is built row by row and is not symmetric.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lasso::{self, LassoFit, Quadratic, SolverOpts};
use crate::panel::PanelDataset;

/// Below this `tau_j^2` the column is treated as collinear with the rest.
pub const TAU_SQ_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum NodewiseTuning {
    /// Modified BIC over each row's own log-spaced grid.
    BicPerRow,
    /// One penalty per row.
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionEstimate {
    /// Row `j` holds the `d - 1` coefficients of `X_j` on `X_{-j}`.
    pub gamma: Vec<DVector<f64>>,
    pub tau_sq: DVector<f64>,
    pub omega: DMatrix<f64>,
    pub penalties: Vec<f64>,
}

fn embed(gamma: &DVector<f64>, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
    gamma
        .iter()
        .enumerate()
        .map(move |(k, v)| (if k < j { k } else { k + 1 }, *v))
}

impl PrecisionEstimate {
    fn assemble(rows: Vec<(DVector<f64>, f64, f64)>) -> Self {
        let d = rows.len();
        let mut omega = DMatrix::zeros(d, d);
        let mut gamma = Vec::with_capacity(d);
        let mut tau_sq = DVector::zeros(d);
        let mut penalties = Vec::with_capacity(d);
        for (j, (g, tau, pen)) in rows.into_iter().enumerate() {
            omega[(j, j)] = 1.0 / tau;
            for (k, v) in embed(&g, j) {
                omega[(j, k)] = -v / tau;
            }
            tau_sq[j] = tau;
            penalties.push(pen);
            gamma.push(g);
        }
        Self {
            gamma,
            tau_sq,
            omega,
            penalties,
        }
    }

    pub fn dim(&self) -> usize {
        self.tau_sq.len()
    }

    pub fn to_record(&self) -> PrecisionRecord {
        PrecisionRecord {
            dim: self.dim(),
            tau_sq: self.tau_sq.iter().copied().collect(),
            penalties: self.penalties.clone(),
            gamma: self
                .gamma
                .iter()
                .enumerate()
                .map(|(j, g)| embed(g, j).filter(|(_, v)| *v != 0.0).collect())
                .collect(),
        }
    }

    pub fn from_record(rec: &PrecisionRecord) -> Result<Self> {
        let d = rec.dim;
        if rec.tau_sq.len() != d || rec.gamma.len() != d || rec.penalties.len() != d {
            return Err(Error::ArtifactMismatch("precision record sizes disagree".into()));
        }
        let rows = (0..d)
            .map(|j| {
                let mut g = DVector::zeros(d.saturating_sub(1));
                for (&k, &v) in &rec.gamma[j] {
                    if k == j || k >= d {
                        return Err(Error::ArtifactMismatch(format!("bad gamma index {k} in row {j}")));
                    }
                    g[if k < j { k } else { k - 1 }] = v;
                }
                Ok((g, rec.tau_sq[j], rec.penalties[j]))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::assemble(rows))
    }
}

/// JSON form with sparse rows keyed by full regressor index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRecord {
    pub dim: usize,
    pub tau_sq: Vec<f64>,
    pub penalties: Vec<f64>,
    pub gamma: Vec<BTreeMap<usize, f64>>,
}

/// One nodewise regression. Returns the fit and `tau_j^2`.
pub fn nodewise_row(
    q: &Quadratic,
    j: usize,
    penalty: Option<f64>,
    opts: &SolverOpts,
) -> Result<(LassoFit, f64)> {
    let row = q.nodewise(j);
    let ones = vec![1.0; row.dim()];
    let fit = match penalty {
        Some(p) => lasso::solve(&row, p, &ones, None, opts)?,
        None => {
            let grid = lasso::penalty_grid_weighted(&row, &ones, opts);
            lasso::bic_select_quadratic(&row, &grid, &ones, q.dim(), opts)?.chosen_fit
        }
    };
    let l1: f64 = fit.beta.iter().map(|v| v.abs()).sum();
    let tau_sq = row.rss(&fit.beta) + fit.penalty * l1;
    if !(tau_sq >= TAU_SQ_FLOOR) {
        return Err(Error::DegenerateColumn { column: j, tau_sq });
    }
    Ok((fit, tau_sq))
}

/// Nodewise precision estimate from the scaled Gram matrix. Rows are fitted in
/// parallel and assembled in index order.
pub fn nodewise_from_quadratic(
    q: &Quadratic,
    tuning: &NodewiseTuning,
    opts: &SolverOpts,
) -> Result<PrecisionEstimate> {
    let d = q.dim();
    if d < 2 {
        return Err(Error::InvalidArgument("nodewise regression needs d >= 2".into()));
    }
    if let NodewiseTuning::Fixed(p) = tuning {
        if p.len() != d {
            return Err(Error::DimensionMismatch(format!("{} penalties for {d} rows", p.len())));
        }
    }
    let rows = (0..d)
        .into_par_iter()
        .map(|j| {
            let pen = match tuning {
                NodewiseTuning::BicPerRow => None,
                NodewiseTuning::Fixed(p) => Some(p[j]),
            };
            let (fit, tau) = nodewise_row(q, j, pen, opts)?;
            Ok((fit.beta, tau, fit.penalty))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PrecisionEstimate::assemble(rows))
}

pub fn nodewise_fit(
    ds: &PanelDataset,
    tuning: &NodewiseTuning,
    opts: &SolverOpts,
) -> Result<PrecisionEstimate> {
    nodewise_from_quadratic(&Quadratic::from_dataset(ds), tuning, opts)
}

/// `|Sigma_hat Omega_j' - e_j|_inf` for every row `j`.
pub fn precision_kkt_residuals(q: &Quadratic, prec: &PrecisionEstimate) -> Vec<f64> {
    let prod = &q.gram * prec.omega.transpose();
    (0..prec.dim())
        .map(|j| {
            prod.column(j)
                .iter()
                .enumerate()
                .map(|(k, v)| (v - if k == j { 1.0 } else { 0.0 }).abs())
                .fold(0.0, f64::max)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct DebiasedFit {
    pub beta_bc: DVector<f64>,
    pub base_fit: LassoFit,
    pub precision: PrecisionEstimate,
}

/// `beta + Omega X'(y - X beta) / n` from sufficient statistics.
pub fn debias_quadratic(
    q: &Quadratic,
    fit: &LassoFit,
    precision: &PrecisionEstimate,
) -> Result<DebiasedFit> {
    if fit.beta.len() != q.dim() || precision.dim() != q.dim() {
        return Err(Error::DimensionMismatch(format!(
            "fit has {} coefficients, precision {}, data {}",
            fit.beta.len(),
            precision.dim(),
            q.dim()
        )));
    }
    let correction = &precision.omega * q.score(&fit.beta);
    Ok(DebiasedFit {
        beta_bc: &fit.beta + correction,
        base_fit: fit.clone(),
        precision: precision.clone(),
    })
}

pub fn debias(
    ds: &PanelDataset,
    fit: &LassoFit,
    precision: &PrecisionEstimate,
) -> Result<DebiasedFit> {
    if fit.beta.len() != ds.n_regressors() {
        return Err(Error::DimensionMismatch(format!(
            "fit has {} coefficients, panel has {} regressors",
            fit.beta.len(),
            ds.n_regressors()
        )));
    }
    // direct residual form, no Gram matrix needed
    let resid = ds.y() - ds.x() * &fit.beta;
    let score = ds.x().tr_mul(&resid) / ds.n_obs() as f64;
    if precision.dim() != score.len() {
        return Err(Error::DimensionMismatch("precision size".into()));
    }
    Ok(DebiasedFit {
        beta_bc: &fit.beta + &precision.omega * score,
        base_fit: fit.clone(),
        precision: precision.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    #[test]
    fn orthogonal_design_gives_diagonal_precision() {
        // Hadamard-like orthogonal columns: Gram = I
        let x = DMatrix::from_row_slice(
            4,
            3,
            &[1.0, 1.0, 1.0, 1.0, -1.0, 1.0, 1.0, 1.0, -1.0, 1.0, -1.0, -1.0],
        );
        let q = Quadratic::from_design(&x, &DVector::zeros(4)).unwrap();
        let prec = nodewise_from_quadratic(&q, &NodewiseTuning::Fixed(vec![0.1; 3]), &SolverOpts::default())
            .unwrap();
        for g in &prec.gamma {
            assert!(g.iter().all(|v| *v == 0.0));
        }
        for j in 0..3 {
            assert!((prec.omega[(j, j)] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn kkt_residual_bound_per_row() {
        let x = gaussian(200, 6, 1);
        let q = Quadratic::from_design(&x, &DVector::zeros(200)).unwrap();
        let opts = SolverOpts {
            tol: 1e-10,
            ..Default::default()
        };
        let prec = nodewise_from_quadratic(&q, &NodewiseTuning::BicPerRow, &opts).unwrap();
        let res = precision_kkt_residuals(&q, &prec);
        for j in 0..6 {
            assert!(prec.tau_sq[j] > 0.0);
            assert!((prec.omega[(j, j)] - 1.0 / prec.tau_sq[j]).abs() < 1e-12);
            assert!(
                res[j] <= prec.penalties[j] / prec.tau_sq[j] + 1e-8,
                "row {j}: {} > {}",
                res[j],
                prec.penalties[j] / prec.tau_sq[j]
            );
        }
    }

    #[test]
    fn row_equals_weighted_lasso_on_derived_regression() {
        let x = gaussian(120, 5, 2);
        let q = Quadratic::from_design(&x, &DVector::zeros(120)).unwrap();
        let opts = SolverOpts::default();
        let prec = nodewise_from_quadratic(&q, &NodewiseTuning::Fixed(vec![0.05; 5]), &opts).unwrap();
        let ds = PanelDataset::from_arrays(1, 120, x.column(2).into_owned(), x.clone().remove_column(2))
            .unwrap();
        let direct = lasso::fit_weighted_lasso(&ds, 0.05, &[1.0; 4], &opts).unwrap();
        assert!((&direct.beta - &prec.gamma[2]).amax() < 1e-9);
    }

    #[test]
    fn collinear_column_is_degenerate() {
        let mut x = gaussian(50, 3, 3);
        let c = x.column(0) + x.column(1);
        x.set_column(2, &c);
        let q = Quadratic::from_design(&x, &DVector::zeros(50)).unwrap();
        let err = nodewise_from_quadratic(&q, &NodewiseTuning::Fixed(vec![0.0; 3]), &SolverOpts {
            tol: 1e-14,
            max_iter: 100_000,
            ..Default::default()
        })
        .unwrap_err();
        assert!(matches!(err, Error::DegenerateColumn { .. }), "{err}");
    }

    #[test]
    fn zero_residual_leaves_estimate_unchanged() {
        let x = gaussian(30, 3, 4);
        let beta = DVector::from_vec(vec![0.5, 0.0, -1.0]);
        let y = &x * &beta;
        let ds = PanelDataset::from_arrays(3, 10, y, x).unwrap();
        let q = Quadratic::from_dataset(&ds);
        let prec = nodewise_from_quadratic(&q, &NodewiseTuning::BicPerRow, &SolverOpts::default()).unwrap();
        let fit = LassoFit {
            beta: beta.clone(),
            penalty: 0.0,
            weights: vec![1.0; 3],
            active_set: vec![0, 2],
            iterations: 0,
            converged: true,
            objective: 0.0,
        };
        let db = debias(&ds, &fit, &prec).unwrap();
        assert!((db.beta_bc - beta).amax() < 1e-12);
    }

    #[test]
    fn record_round_trip() {
        let x = gaussian(80, 4, 5);
        let q = Quadratic::from_design(&x, &DVector::zeros(80)).unwrap();
        let prec = nodewise_from_quadratic(&q, &NodewiseTuning::BicPerRow, &SolverOpts::default()).unwrap();
        let json = serde_json::to_string(&prec.to_record()).unwrap();
        let back = PrecisionEstimate::from_record(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, prec);
    }
}
