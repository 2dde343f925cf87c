use std::path::{Path, PathBuf};

use panel_hd::ife::IfeOpts;
use panel_hd::lasso::SolverOpts;
use panel_hd::longrun::{KernelKind, KernelSpec};
use panel_hd::montecarlo::{DgpSpec, InnovationScale, Model};
use panel_hd::{ColumnSchema, Error, PanelDataset, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Reads a JSON config, or the default when no path is given.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            Ok(serde_json::from_str(&text)?)
        }
    }
}

/// Hex SHA-256 of the compact JSON form.
pub fn hash<T: Serialize>(config: &T) -> String {
    let json = serde_json::to_string(config).expect("configs serialize");
    Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_echo<T: Serialize>(out: &Path, config: &T) -> Result<()> {
    std::fs::write(out.join("config.echo.json"), serde_json::to_string_pretty(config)? + "\n")?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub path: Option<PathBuf>,
    pub schema: ColumnSchema,
    pub demean: bool,
    pub standardize: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            path: None,
            schema: ColumnSchema::default(),
            demean: false,
            standardize: false,
        }
    }
}

impl DataConfig {
    /// Loads the panel and applies the configured transforms in order
    /// (demean, then standardize).
    pub fn load(&self) -> Result<(PanelDataset, Option<panel_hd::ScaleRecord>)> {
        let path = self
            .path
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("no input data given (--data)".into()))?;
        let mut ds = PanelDataset::load_csv(path, &self.schema)?;
        if self.demean {
            ds = ds.demean_time()?;
        }
        if self.standardize {
            let (s, rec) = ds.standardize()?;
            return Ok((s, Some(rec)));
        }
        Ok((ds, None))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum VarianceChoice {
    /// Cross-sectionally aggregated scores, thresholded HAC.
    Robust,
    /// Unitwise HAC averaged over units.
    Pooled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    pub kind: KernelKind,
    /// `None` uses `ceil(0.75 T^(1/3))`.
    pub bandwidth: Option<f64>,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            kind: KernelKind::Bartlett,
            bandwidth: None,
        }
    }
}

impl KernelConfig {
    pub fn spec(&self, n_periods: usize) -> KernelSpec {
        let bw = self.bandwidth.unwrap_or_else(|| panel_hd::longrun::default_bandwidth(n_periods));
        KernelSpec::new(self.kind, bw)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LongRunConfig {
    pub kernel: KernelConfig,
    pub variance: VarianceChoice,
    /// Fixed threshold for the robust estimator; `None` selects it by 2-fold CV.
    pub threshold: Option<f64>,
}

impl Default for LongRunConfig {
    fn default() -> Self {
        Self {
            kernel: KernelConfig::default(),
            variance: VarianceChoice::Robust,
            threshold: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateConfig {
    pub data: DataConfig,
    pub solver: SolverOpts,
    /// Fixed LASSO penalty; `None` tunes it by the modified BIC.
    pub penalty: Option<f64>,
    /// Fixed nodewise penalty for every row; `None` tunes each row by BIC.
    pub nodewise_penalty: Option<f64>,
    pub longrun: LongRunConfig,
    pub level: f64,
    /// Coefficients to report; `None` reports all.
    pub coordinates: Option<Vec<usize>>,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self {
            data: DataConfig::default(),
            solver: SolverOpts::default(),
            penalty: None,
            nodewise_penalty: None,
            longrun: LongRunConfig::default(),
            level: 0.95,
            coordinates: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageConfig {
    pub data: DataConfig,
    pub solver: SolverOpts,
    pub nodewise_penalty: Option<f64>,
    pub longrun: LongRunConfig,
    pub level: f64,
    pub coordinates: Option<Vec<usize>>,
    pub fit: Option<PathBuf>,
    pub precision: Option<PathBuf>,
    pub lrcov: Option<PathBuf>,
}

impl Default for StageConfig {
    fn default() -> Self {
        Self {
            data: DataConfig::default(),
            solver: SolverOpts::default(),
            nodewise_penalty: None,
            longrun: LongRunConfig::default(),
            level: 0.95,
            coordinates: None,
            fit: None,
            precision: None,
            lrcov: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "value")]
pub enum OmegaRule {
    Cv,
    Rate(f64),
    Value(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IfeConfig {
    pub data: DataConfig,
    pub opts: IfeOpts,
    /// Explicit `w1` grid; `None` uses the default.
    pub w1_grid: Option<Vec<f64>>,
    pub w2_grid: Option<Vec<f64>>,
    pub w3_grid: Option<Vec<f64>>,
    pub kernel: KernelConfig,
    pub omega_threshold: OmegaRule,
    pub level: f64,
    pub bias_correct: bool,
}

impl Default for IfeConfig {
    fn default() -> Self {
        Self {
            data: DataConfig::default(),
            opts: IfeOpts::default(),
            w1_grid: None,
            w2_grid: None,
            w3_grid: None,
            kernel: KernelConfig::default(),
            omega_threshold: OmegaRule::Cv,
            level: 0.95,
            bias_correct: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub model: Model,
    pub n_units: usize,
    pub n_periods: usize,
    pub n_regressors: usize,
    pub rho_e: f64,
    pub delta_eps: f64,
    pub burn_in: usize,
    pub innovation: InnovationScale,
    pub noiseless: bool,
    pub seed: u64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            model: Model::Dgp1,
            n_units: 50,
            n_periods: 50,
            n_regressors: 50,
            rho_e: 0.2,
            delta_eps: 0.2,
            burn_in: 100,
            innovation: InnovationScale::Raw,
            noiseless: false,
            seed: 0,
        }
    }
}

impl SimulateConfig {
    pub fn spec(&self) -> DgpSpec {
        DgpSpec {
            model: self.model,
            n_units: self.n_units,
            n_periods: self.n_periods,
            n_regressors: self.n_regressors,
            rho_e: self.rho_e,
            delta_eps: self.delta_eps,
            burn_in: self.burn_in,
            innovation: self.innovation,
            noiseless: self.noiseless,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    /// Preset table 1..=8; ignored when `cells` is nonempty.
    pub table: Option<u32>,
    /// Overrides the preset's `N`/`T` sizes.
    pub sizes: Option<Vec<usize>>,
    pub cells: Vec<DgpSpec>,
    pub reps: usize,
    pub seed: u64,
    pub pipeline: panel_hd::montecarlo::PipelineOpts,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            table: None,
            sizes: None,
            cells: Vec::new(),
            reps: 1000,
            seed: 0,
            pipeline: Default::default(),
        }
    }
}
