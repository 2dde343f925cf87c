//! Confidence intervals for debiased and factor-model estimates, plus the CD
//! and Jarque-Bera residual diagnostics.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ife::FactorFit;
use crate::longrun::LongRunCov;
use crate::nodewise::DebiasedFit;
use crate::panel::ScaleRecord;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Upper tail `P(Z > x)`, accurate far into the tail.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Inverse standard normal CDF: Acklam's rational approximation followed by one
/// Halley correction step.
pub fn normal_quantile(p: f64) -> f64 {
    if !(p > 0.0 && p < 1.0) {
        return if p == 0.0 {
            f64::NEG_INFINITY
        } else if p == 1.0 {
            f64::INFINITY
        } else {
            f64::NAN
        };
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;
    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let e = normal_cdf(x) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (0.5 * x * x).exp();
    x - u / (1.0 + 0.5 * x * u)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceSource {
    RobustHac,
    PooledHac,
    FactorPlugin,
}

impl VarianceSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::RobustHac => "robust_hac",
            Self::PooledHac => "pooled_hac",
            Self::FactorPlugin => "factor_plugin",
        }
    }
}

/// Which linear combinations to report.
#[derive(Debug, Clone, PartialEq)]
pub enum Contrast {
    /// One interval per listed coordinate.
    Coordinates(Vec<usize>),
    /// A single interval for `rho' beta`.
    Vector(DVector<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiRow {
    pub index: usize,
    pub estimate: f64,
    pub std_error: f64,
    pub z_stat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiReport {
    pub rows: Vec<CiRow>,
    pub variance_source: VarianceSource,
    pub contrast: Option<Vec<f64>>,
}

impl CiReport {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "index",
            "estimate",
            "std_error",
            "z_stat",
            "ci_low",
            "ci_high",
            "level",
            "variance_source",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.index.to_string(),
                format!("{:?}", r.estimate),
                format!("{:?}", r.std_error),
                format!("{:?}", r.z_stat),
                format!("{:?}", r.ci_low),
                format!("{:?}", r.ci_high),
                format!("{:?}", r.level),
                self.variance_source.as_str().to_string(),
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

    /// Maps estimates and standard errors of standardized-regressor fits back to
    /// the original units. Only coordinate reports can be mapped.
    pub fn to_original_scale(&self, scale: &ScaleRecord) -> Result<CiReport> {
        if self.contrast.is_some() {
            return Err(Error::InvalidArgument(
                "only coordinate reports can be rescaled".into(),
            ));
        }
        let z = |level: f64| normal_quantile(0.5 + level / 2.0);
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let c = scale.coefficient_scale(r.index);
                let est = r.estimate * c;
                let se = r.std_error * c.abs();
                let half = z(r.level) * se;
                CiRow {
                    index: r.index,
                    estimate: est,
                    std_error: se,
                    z_stat: r.z_stat,
                    ci_low: est - half,
                    ci_high: est + half,
                    level: r.level,
                }
            })
            .collect();
        Ok(CiReport {
            rows,
            variance_source: self.variance_source,
            contrast: None,
        })
    }
}

fn check_level(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("level must be in (0, 1), got {level}")));
    }
    Ok(normal_quantile(0.5 + level / 2.0))
}

fn ci_row(index: usize, estimate: f64, variance: f64, z: f64, level: f64) -> Result<CiRow> {
    if !(variance > 0.0) || !variance.is_finite() {
        return Err(Error::NonPositiveVariance(variance));
    }
    let se = variance.sqrt();
    Ok(CiRow {
        index,
        estimate,
        std_error: se,
        z_stat: estimate / se,
        ci_low: estimate - z * se,
        ci_high: estimate + z * se,
        level,
    })
}

/// Intervals with variance `a' M a / n`, where `a` is the row of `loading`
/// for a coordinate or `loading' rho` for a general contrast.
fn sandwich_report(
    estimate: &DVector<f64>,
    loading: &DMatrix<f64>,
    middle: &DMatrix<f64>,
    n_obs: usize,
    contrast: &Contrast,
    labels: &[usize],
    level: f64,
    source: VarianceSource,
) -> Result<CiReport> {
    let z = check_level(level)?;
    let dim = estimate.len();
    let n = n_obs as f64;
    match contrast {
        Contrast::Coordinates(idx) => {
            let rows = idx
                .iter()
                .map(|&j| {
                    if j >= dim {
                        return Err(Error::DimensionMismatch(format!(
                            "coordinate {j} out of range for dimension {dim}"
                        )));
                    }
                    let a = loading.row(j).transpose();
                    let var = (a.transpose() * middle * &a)[(0, 0)] / n;
                    ci_row(labels[j], estimate[j], var, z, level)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(CiReport {
                rows,
                variance_source: source,
                contrast: None,
            })
        }
        Contrast::Vector(rho) => {
            if rho.len() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "contrast has length {}, estimate {dim}",
                    rho.len()
                )));
            }
            let a = loading.tr_mul(rho);
            let var = (a.transpose() * middle * &a)[(0, 0)] / n;
            Ok(CiReport {
                rows: vec![ci_row(0, rho.dot(estimate), var, z, level)?],
                variance_source: source,
                contrast: Some(rho.iter().copied().collect()),
            })
        }
    }
}

/// Intervals for the debiased LASSO with variance `rho' Omega T_u(Theta) Omega' rho / NT`.
pub fn ci_debiased(
    fit: &DebiasedFit,
    cov: &LongRunCov,
    n_obs: usize,
    contrast: &Contrast,
    level: f64,
    source: VarianceSource,
) -> Result<CiReport> {
    let d = fit.beta_bc.len();
    if cov.dim() != d || fit.precision.dim() != d {
        return Err(Error::DimensionMismatch(format!(
            "estimate has {d} coefficients, covariance {}, precision {}",
            cov.dim(),
            fit.precision.dim()
        )));
    }
    let labels: Vec<usize> = (0..d).collect();
    sandwich_report(
        &fit.beta_bc,
        &fit.precision.omega,
        &cov.theta,
        n_obs,
        contrast,
        &labels,
        level,
        source,
    )
}

/// Intervals for the bias-corrected active coefficients of a factor fit with
/// variance `rho' S^-1 Theta_J S^-1 rho / NT`. Coordinates index positions
/// within the active set; rows report the original regressor index.
pub fn ci_factor(fit: &FactorFit, contrast: &Contrast, level: f64) -> Result<CiReport> {
    let inference = fit.inference.as_ref().ok_or(Error::EmptyActiveSet)?;
    let sigma_inv = crate::linalg::spd_inverse(&inference.sigma_j).ok_or(Error::SingularSigmaJ)?;
    sandwich_report(
        &inference.beta_bc,
        &sigma_inv,
        &inference.theta_j,
        fit.n_units * fit.n_periods,
        contrast,
        &fit.active_set,
        level,
        VarianceSource::FactorPlugin,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Cross-sectional dependence test on an `N x T` residual matrix:
/// `sqrt(2T / (N(N-1))) sum_{i<j} corr_ij` with a two-sided normal p-value.
pub fn cd_test(residuals: &DMatrix<f64>) -> Result<TestResult> {
    let (n, t_len) = residuals.shape();
    if n < 2 || t_len < 3 {
        return Err(Error::InvalidArgument(format!(
            "CD test needs N >= 2 and T >= 3, got N = {n}, T = {t_len}"
        )));
    }
    let mut centered = residuals.clone();
    for i in 0..n {
        let mut row = centered.row_mut(i);
        let mean = row.mean();
        row.add_scalar_mut(-mean);
        let norm = row.norm();
        if !(norm > 0.0) {
            return Err(Error::ConstantResidualSeries(i));
        }
        row /= norm;
    }
    let corr = &centered * centered.transpose();
    let mut sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            sum += corr[(i, j)];
        }
    }
    let stat = (2.0 * t_len as f64 / (n * (n - 1)) as f64).sqrt() * sum;
    Ok(TestResult {
        statistic: stat,
        p_value: 2.0 * normal_sf(stat.abs()),
    })
}

/// Jarque-Bera normality test with a chi-square(2) p-value.
pub fn jarque_bera(series: &[f64]) -> Result<TestResult> {
    let n = series.len();
    if n < 8 {
        return Err(Error::InvalidArgument(format!("Jarque-Bera needs >= 8 observations, got {n}")));
    }
    let nf = n as f64;
    let mean = series.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in series {
        let c = v - mean;
        let c2 = c * c;
        m2 += c2;
        m3 += c2 * c;
        m4 += c2 * c2;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    if !(m2 > 0.0) {
        return Err(Error::ZeroVariance(0));
    }
    let skew = m3 / m2.powf(1.5);
    let kurt = m4 / (m2 * m2);
    let stat = nf / 6.0 * (skew * skew + (kurt - 3.0).powi(2) / 4.0);
    Ok(TestResult {
        statistic: stat,
        p_value: (-stat / 2.0).exp(),
    })
}
