//! Estimation and inference for high-dimensional panel regressions.
//!
//! - [`panel`]: balanced panel storage, CSV ingestion, demeaning, standardization
//! - [`lasso`]: weighted LASSO solver, penalty grids, modified-BIC tuning
//! - [`nodewise`]: nodewise precision estimate and the debiased LASSO
//! - [`longrun`]: kernel HAC long-run covariance, hard thresholding, 2-fold CV
//! - [`ife`]: interactive fixed effects via an l1 + nuclear-norm start and iterated PCA
//! - [`inference`]: confidence intervals, CD and Jarque-Bera diagnostics
//! - [`montecarlo`]: simulation designs, replication harness and table metrics

pub mod error;
pub mod ife;
pub mod inference;
pub mod lasso;
pub mod linalg;
pub mod longrun;
pub mod montecarlo;
pub mod nodewise;
pub mod panel;

pub use error::{Error, Result};
pub use panel::{ColumnSchema, PanelDataset, ScaleRecord};

/// Library version embedded in serialized artifacts.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
