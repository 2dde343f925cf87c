//! Kernel HAC estimation of the long-run covariance of cross-sectionally
//! aggregated scores, entrywise hard thresholding, and the 2-fold
//! cross-validated threshold choice.
//!
//! With scores `s_t = (1/sqrt N) sum_i x_it (y_it - x_it' b)` the estimator is
//!
//! ```text
//! Theta = G_0 + sum_{k=1}^{floor(l)} a(k/l) (G_k + G_k'),   G_k = (1/T) sum_{t>k} s_t s_{t-k}'
//! ```
//!
//! which equals `(1/T) sum_{s,t} a((t-s)/l) s_t s_s'`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::PanelDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Bartlett,
    Parzen,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub bandwidth: f64,
}

impl KernelSpec {
    pub fn new(kind: KernelKind, bandwidth: f64) -> Self {
        Self { kind, bandwidth }
    }

    /// Bartlett kernel with bandwidth `ceil(0.75 T^(1/3))`.
    pub fn bartlett_default(n_periods: usize) -> Self {
        Self::new(KernelKind::Bartlett, default_bandwidth(n_periods))
    }

    /// Kernel value `a(x)`; zero outside `[-1, 1]`.
    pub fn weight(&self, x: f64) -> f64 {
        let ax = x.abs();
        if ax > 1.0 {
            return 0.0;
        }
        match self.kind {
            KernelKind::Bartlett => 1.0 - ax,
            KernelKind::Parzen => {
                if ax <= 0.5 {
                    1.0 - 6.0 * ax * ax + 6.0 * ax * ax * ax
                } else {
                    2.0 * (1.0 - ax).powi(3)
                }
            }
        }
    }

    /// Weights `a(k/l)` for lags `k = 0..=floor(l)` capped at `max_lag`.
    pub fn lag_weights(&self, max_lag: usize) -> Vec<f64> {
        let top = (self.bandwidth.floor() as usize).min(max_lag);
        (0..=top).map(|k| self.weight(k as f64 / self.bandwidth)).collect()
    }
}

/// `ceil(0.75 T^(1/3))`.
pub fn default_bandwidth(n_periods: usize) -> f64 {
    (0.75 * (n_periods as f64).cbrt()).ceil()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LongRunCov {
    pub theta: DMatrix<f64>,
    pub kernel: KernelSpec,
    pub threshold: f64,
    pub thresholded: bool,
    pub score_builder: String,
}

impl LongRunCov {
    pub fn dim(&self) -> usize {
        self.theta.nrows()
    }

    pub fn to_record(&self) -> LongRunCovRecord {
        let d = self.dim();
        let lower = (0..d)
            .flat_map(|i| (0..=i).map(move |j| (i, j)))
            .map(|(i, j)| self.theta[(i, j)])
            .collect();
        LongRunCovRecord {
            dim: d,
            lower_triangle: lower,
            kernel: self.kernel,
            threshold: self.threshold,
            thresholded: self.thresholded,
            score_builder: self.score_builder.clone(),
        }
    }

    pub fn from_record(rec: &LongRunCovRecord) -> Result<Self> {
        let d = rec.dim;
        if rec.lower_triangle.len() != d * (d + 1) / 2 {
            return Err(Error::ArtifactMismatch("lower triangle has the wrong length".into()));
        }
        let mut theta = DMatrix::zeros(d, d);
        let mut it = rec.lower_triangle.iter();
        for i in 0..d {
            for j in 0..=i {
                let v = *it.next().expect("length checked");
                theta[(i, j)] = v;
                theta[(j, i)] = v;
            }
        }
        Ok(Self {
            theta,
            kernel: rec.kernel,
            threshold: rec.threshold,
            thresholded: rec.thresholded,
            score_builder: rec.score_builder.clone(),
        })
    }
}

/// JSON form: dense lower triangle in row-major order plus metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongRunCovRecord {
    pub dim: usize,
    pub lower_triangle: Vec<f64>,
    pub kernel: KernelSpec,
    pub threshold: f64,
    pub thresholded: bool,
    pub score_builder: String,
}

fn residuals(ds: &PanelDataset, beta: &DVector<f64>) -> Result<DVector<f64>> {
    if beta.len() != ds.n_regressors() {
        return Err(Error::DimensionMismatch(format!(
            "beta has length {}, panel has {} regressors",
            beta.len(),
            ds.n_regressors()
        )));
    }
    Ok(ds.y() - ds.x() * beta)
}

/// Cross-sectionally aggregated scores as a `T x d` matrix (row `t` is `s_t`).
pub fn aggregated_scores(ds: &PanelDataset, beta: &DVector<f64>) -> Result<DMatrix<f64>> {
    let resid = residuals(ds, beta)?;
    let (n, t_len, d) = (ds.n_units(), ds.n_periods(), ds.n_regressors());
    let scale = 1.0 / (n as f64).sqrt();
    let mut scores = DMatrix::zeros(t_len, d);
    for j in 0..d {
        let col = ds.x().column(j);
        for i in 0..n {
            for t in 0..t_len {
                let r = i * t_len + t;
                scores[(t, j)] += col[r] * resid[r];
            }
        }
    }
    scores *= scale;
    Ok(scores)
}

fn check_bandwidth(kernel: &KernelSpec, t_len: usize) -> Result<()> {
    if t_len < 2 {
        return Err(Error::InvalidArgument(format!("HAC needs T >= 2, got {t_len}")));
    }
    if !(kernel.bandwidth >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "bandwidth must be >= 1, got {}",
            kernel.bandwidth
        )));
    }
    if kernel.bandwidth >= t_len as f64 {
        return Err(Error::BandwidthTooLarge {
            bandwidth: kernel.bandwidth,
            periods: t_len,
        });
    }
    Ok(())
}

/// Unnormalized lag-sum `sum_k a(k/l) (S_k' S_0 + S_0' S_k)` over rows of `scores`, symmetrized.
fn lag_sum(scores: &DMatrix<f64>, weights: &[f64]) -> DMatrix<f64> {
    let t_len = scores.nrows();
    let mut acc = scores.tr_mul(scores);
    for (k, &w) in weights.iter().enumerate().skip(1) {
        if w == 0.0 || k >= t_len {
            continue;
        }
        let lead = scores.rows(k, t_len - k);
        let lag = scores.rows(0, t_len - k);
        let gk = lead.tr_mul(&lag);
        acc += (&gk + gk.transpose()) * w;
    }
    (&acc + acc.transpose()) * 0.5
}

/// Kernel HAC estimate from a `T x d` score matrix.
pub fn hac(scores: &DMatrix<f64>, kernel: &KernelSpec) -> Result<LongRunCov> {
    let t_len = scores.nrows();
    check_bandwidth(kernel, t_len)?;
    let weights = kernel.lag_weights(t_len - 1);
    Ok(LongRunCov {
        theta: lag_sum(scores, &weights) / t_len as f64,
        kernel: *kernel,
        threshold: 0.0,
        thresholded: false,
        score_builder: "aggregated".into(),
    })
}

/// Entrywise hard threshold: keeps entries with `|v| >= u`, diagonal included.
pub fn threshold(cov: &LongRunCov, u: f64) -> LongRunCov {
    LongRunCov {
        theta: threshold_matrix(&cov.theta, u),
        kernel: cov.kernel,
        threshold: u,
        thresholded: true,
        score_builder: cov.score_builder.clone(),
    }
}

pub fn threshold_matrix(m: &DMatrix<f64>, u: f64) -> DMatrix<f64> {
    m.map(|v| if v.abs() >= u { v } else { 0.0 })
}

/// Two-fold CV choice of `u` given the two fold estimates: minimizes the average of
/// `|T_u(A) - B|_F^2` and `|T_u(B) - A|_F^2`; ties go to the larger `u`.
pub fn cv_select(fold_a: &DMatrix<f64>, fold_b: &DMatrix<f64>, grid: &[f64]) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty threshold grid".into()));
    }
    if grid.iter().any(|u| !(*u >= 0.0)) {
        return Err(Error::InvalidArgument("thresholds must be >= 0".into()));
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted.dedup();
    let loss = |u: f64| {
        let la: f64 = fold_a
            .iter()
            .zip(fold_b.iter())
            .map(|(a, b)| {
                let ta = if a.abs() >= u { *a } else { 0.0 };
                let tb = if b.abs() >= u { *b } else { 0.0 };
                (ta - b).powi(2) + (tb - a).powi(2)
            })
            .sum();
        0.5 * la
    };
    let mut best = (f64::INFINITY, sorted[0]);
    for &u in &sorted {
        let l = loss(u);
        if l < best.0 {
            best = (l, u);
        }
    }
    Ok(best.1)
}

/// Twenty log-spaced values from `1e-3 m` to `m` (`m` = largest off-diagonal
/// magnitude), clipped at the smallest diagonal entry.
pub fn default_threshold_grid(theta: &DMatrix<f64>) -> Vec<f64> {
    let d = theta.nrows();
    let mut m: f64 = 0.0;
    let mut min_diag = f64::INFINITY;
    for i in 0..d {
        min_diag = min_diag.min(theta[(i, i)]);
        for j in 0..d {
            if i != j {
                m = m.max(theta[(i, j)].abs());
            }
        }
    }
    if !(m > 0.0) {
        return vec![0.0];
    }
    let cap = min_diag.max(0.0);
    let mut grid: Vec<f64> = crate::lasso::log_grid(m, 1e-3, 20)
        .into_iter()
        .map(|u| u.min(cap))
        .collect();
    grid.sort_by(|a, b| b.total_cmp(a));
    grid.dedup();
    grid
}

/// Splits rows into `0..floor(T/2)` and `floor(T/2)..T`.
pub fn half_split(t_len: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
    let h = t_len / 2;
    (0..h, h..t_len)
}

/// Threshold chosen by 2-fold CV over the two halves of the score series.
pub fn cv_threshold_scores(scores: &DMatrix<f64>, kernel: &KernelSpec, grid: &[f64]) -> Result<f64> {
    let t_len = scores.nrows();
    if t_len < 4 {
        return Err(Error::InvalidArgument(format!("threshold CV needs T >= 4, got {t_len}")));
    }
    let (a, b) = half_split(t_len);
    let fold_a = hac(&scores.rows(a.start, a.len()).into_owned(), kernel)?;
    let fold_b = hac(&scores.rows(b.start, b.len()).into_owned(), kernel)?;
    cv_select(&fold_a.theta, &fold_b.theta, grid)
}

pub fn cv_threshold(
    ds: &PanelDataset,
    beta: &DVector<f64>,
    kernel: &KernelSpec,
    grid: &[f64],
) -> Result<f64> {
    cv_threshold_scores(&aggregated_scores(ds, beta)?, kernel, grid)
}

/// Unitwise HAC averaged over units; ignores covariance between units.
pub fn pooled_hac(ds: &PanelDataset, beta: &DVector<f64>, kernel: &KernelSpec) -> Result<LongRunCov> {
    let resid = residuals(ds, beta)?;
    let (n, t_len, d) = (ds.n_units(), ds.n_periods(), ds.n_regressors());
    check_bandwidth(kernel, t_len)?;
    let weights = kernel.lag_weights(t_len - 1);
    let mut acc = DMatrix::zeros(d, d);
    let mut unit_scores = DMatrix::zeros(t_len, d);
    for i in 0..n {
        for j in 0..d {
            let col = ds.x().column(j);
            for t in 0..t_len {
                let r = i * t_len + t;
                unit_scores[(t, j)] = col[r] * resid[r];
            }
        }
        acc += lag_sum(&unit_scores, &weights);
    }
    Ok(LongRunCov {
        theta: acc / (n * t_len) as f64,
        kernel: *kernel,
        threshold: 0.0,
        thresholded: false,
        score_builder: "pooled_unitwise".into(),
    })
}

/// Full robust pipeline: aggregated scores, HAC, CV-chosen threshold on the default grid.
pub fn robust_thresholded(
    ds: &PanelDataset,
    beta: &DVector<f64>,
    kernel: &KernelSpec,
) -> Result<LongRunCov> {
    let scores = aggregated_scores(ds, beta)?;
    let full = hac(&scores, kernel)?;
    let grid = default_threshold_grid(&full.theta);
    let u = cv_threshold_scores(&scores, kernel, &grid)?;
    Ok(threshold(&full, u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn kernel_values() {
        let b = KernelSpec::new(KernelKind::Bartlett, 2.0);
        assert_eq!(b.weight(0.0), 1.0);
        assert_eq!(b.weight(0.5), 0.5);
        assert_eq!(b.weight(-0.5), 0.5);
        assert_eq!(b.weight(1.5), 0.0);
        let p = KernelSpec::new(KernelKind::Parzen, 2.0);
        assert_eq!(p.weight(0.0), 1.0);
        assert!((p.weight(0.5) - 0.25).abs() < 1e-15);
        assert!((p.weight(0.75) - 2.0 * 0.25f64.powi(3)).abs() < 1e-15);
        assert_eq!(p.weight(1.0), 0.0);
        assert_eq!(default_bandwidth(50), 3.0);
        assert_eq!(default_bandwidth(20_000), 21.0);
    }

    #[test]
    fn hand_aggregated_score() {
        // N=2, T=1, d=1: x = (1, 2), residual = (3, 4)
        let x = DMatrix::from_column_slice(2, 1, &[1.0, 2.0]);
        let y = DVector::from_vec(vec![3.0, 4.0]);
        let ds = PanelDataset::from_arrays(2, 1, y, x).unwrap();
        let s = aggregated_scores(&ds, &DVector::zeros(1)).unwrap();
        assert!((s[(0, 0)] - 11.0 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn single_unit_scores_and_zero_residuals() {
        let x = DMatrix::from_column_slice(3, 1, &[1.0, -2.0, 0.5]);
        let y = DVector::from_vec(vec![2.0, 1.0, 1.0]);
        let ds = PanelDataset::from_arrays(1, 3, y.clone(), x.clone()).unwrap();
        let s = aggregated_scores(&ds, &DVector::zeros(1)).unwrap();
        assert_eq!(s.column(0).as_slice(), &[2.0, -2.0, 0.5]);
        let beta = DVector::from_vec(vec![0.7]);
        let ds = PanelDataset::from_arrays(1, 3, &x * &beta, x).unwrap();
        assert_eq!(aggregated_scores(&ds, &beta).unwrap().amax(), 0.0);
    }

    #[test]
    fn bartlett_unit_bandwidth_is_contemporaneous() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = DMatrix::from_fn(30, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let out = hac(&s, &KernelSpec::new(KernelKind::Bartlett, 1.0)).unwrap();
        assert!((out.theta - s.tr_mul(&s) / 30.0).amax() < 1e-12);
    }

    #[test]
    fn lag_form_matches_double_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = DMatrix::from_fn(25, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        for kernel in [
            KernelSpec::new(KernelKind::Bartlett, 4.0),
            KernelSpec::new(KernelKind::Parzen, 5.5),
        ] {
            let out = hac(&s, &kernel).unwrap();
            let mut direct = DMatrix::zeros(3, 3);
            for t in 0..25 {
                for u in 0..25 {
                    let w = kernel.weight((t as f64 - u as f64) / kernel.bandwidth);
                    direct += s.row(t).transpose() * s.row(u) * w;
                }
            }
            direct /= 25.0;
            assert!((&out.theta - direct).amax() < 1e-12);
            assert_eq!(out.theta, out.theta.transpose());
        }
    }

    #[test]
    fn bandwidth_too_large() {
        let s = DMatrix::zeros(5, 2);
        assert!(matches!(
            hac(&s, &KernelSpec::new(KernelKind::Bartlett, 5.0)),
            Err(Error::BandwidthTooLarge { .. })
        ));
    }

    #[test]
    fn threshold_rules() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.1, 0.1, 3.0]);
        let cov = LongRunCov {
            theta: m.clone(),
            kernel: KernelSpec::bartlett_default(10),
            threshold: 0.0,
            thresholded: false,
            score_builder: "test".into(),
        };
        assert_eq!(threshold(&cov, 0.0).theta, m);
        assert_eq!(threshold(&cov, 3.5).theta, DMatrix::zeros(2, 2));
        let t = threshold(&cov, 0.5);
        assert_eq!(t.theta, DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]));
        assert!(t.thresholded);
        assert_eq!(threshold(&t, 0.5).theta, t.theta);
    }

    #[test]
    fn cv_singleton_and_all_large() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = DMatrix::from_fn(40, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let k = KernelSpec::bartlett_default(40);
        assert_eq!(cv_threshold_scores(&s, &k, &[0.0]).unwrap(), 0.0);
        let u = cv_threshold_scores(&s, &k, &[1e3, 2e3, 5e3]).unwrap();
        assert_eq!(u, 5e3);
    }

    #[test]
    fn pooled_equals_robust_for_one_unit() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = DMatrix::from_fn(30, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(30, |_, _| rng.sample::<f64, _>(StandardNormal));
        let ds = PanelDataset::from_arrays(1, 30, y, x).unwrap();
        let beta = DVector::from_vec(vec![0.3, -0.1]);
        let k = KernelSpec::bartlett_default(30);
        let pooled = pooled_hac(&ds, &beta, &k).unwrap();
        let robust = hac(&aggregated_scores(&ds, &beta).unwrap(), &k).unwrap();
        assert!((pooled.theta - robust.theta).amax() < 1e-12);
    }

    #[test]
    fn record_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = DMatrix::from_fn(20, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
        let cov = threshold(&hac(&s, &KernelSpec::bartlett_default(20)).unwrap(), 0.05);
        let json = serde_json::to_string(&cov.to_record()).unwrap();
        let back = LongRunCov::from_record(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, cov);
    }
}
