//! `panel-hd`: estimation, inference and simulation runs for high-dimensional
//! panel regressions.
//!
//! Every subcommand takes an optional JSON `--config`; flags override its
//! fields. Outputs go to `--out` together with `config.echo.json`, which
//! reproduces the run when passed back as `--config`.

mod artifact;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use panel_hd::lasso::SolverOpts;
use panel_hd::longrun::KernelKind;
use panel_hd::montecarlo::{InnovationScale, Model};
use panel_hd::{Error, Result};
use serde_json::json;

use config::{DataConfig, LongRunConfig, VarianceChoice};

#[derive(Parser)]
#[command(name = "panel-hd", version, about = "High-dimensional panel regression toolkit")]
struct Cli {
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct DataArgs {
    /// Input CSV with one row per (unit, time).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    unit_col: Option<String>,
    #[arg(long)]
    time_col: Option<String>,
    #[arg(long)]
    response_col: Option<String>,
    /// Comma-separated regressor columns (default: all remaining columns).
    #[arg(long, value_delimiter = ',')]
    regressors: Option<Vec<String>>,
    /// Remove unit time means before estimation.
    #[arg(long)]
    demean: bool,
    /// Standardize the pooled columns; intervals are reported in original units.
    #[arg(long)]
    standardize: bool,
}

impl DataArgs {
    fn apply(&self, cfg: &mut DataConfig) {
        if let Some(p) = &self.data {
            cfg.path = Some(p.clone());
        }
        if let Some(c) = &self.unit_col {
            cfg.schema.unit = c.clone();
        }
        if let Some(c) = &self.time_col {
            cfg.schema.time = c.clone();
        }
        if let Some(c) = &self.response_col {
            cfg.schema.response = c.clone();
        }
        if let Some(r) = &self.regressors {
            cfg.schema.regressors = Some(r.clone());
        }
        cfg.demean |= self.demean;
        cfg.standardize |= self.standardize;
    }
}

#[derive(Args)]
struct LongRunArgs {
    #[arg(long, value_enum)]
    variance: Option<VarianceChoice>,
    /// Fixed hard threshold for the robust estimator (default: 2-fold CV).
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    bandwidth: Option<f64>,
    /// `bartlett` or `parzen`.
    #[arg(long, value_parser = parse_kernel)]
    kernel: Option<KernelKind>,
}

fn parse_kernel(s: &str) -> std::result::Result<KernelKind, String> {
    match s {
        "bartlett" => Ok(KernelKind::Bartlett),
        "parzen" => Ok(KernelKind::Parzen),
        other => Err(format!("unknown kernel `{other}`")),
    }
}

impl LongRunArgs {
    fn apply(&self, cfg: &mut LongRunConfig) {
        if let Some(v) = self.variance {
            cfg.variance = v;
        }
        if self.threshold.is_some() {
            cfg.threshold = self.threshold;
        }
        if self.bandwidth.is_some() {
            cfg.kernel.bandwidth = self.bandwidth;
        }
        if let Some(k) = self.kernel {
            cfg.kernel.kind = k;
        }
    }
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
}

impl SolverArgs {
    fn apply(&self, opts: &mut SolverOpts) {
        if let Some(t) = self.tol {
            opts.tol = t;
        }
        if let Some(m) = self.max_iter {
            opts.max_iter = m;
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a panel from one of the simulation designs.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_model)]
        model: Option<Model>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        t: Option<usize>,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        rho_e: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        noiseless: bool,
        /// Rescale t(5) innovations to unit variance.
        #[arg(long)]
        unit_variance: bool,
    },
    /// LASSO, debiasing, long-run covariance and confidence intervals.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        longrun: LongRunArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// Fixed LASSO penalty (default: modified BIC).
        #[arg(long)]
        penalty: Option<f64>,
        #[arg(long)]
        nodewise_penalty: Option<f64>,
        #[arg(long)]
        level: Option<f64>,
        /// Comma-separated coefficient indices to report.
        #[arg(long, value_delimiter = ',')]
        coords: Option<Vec<usize>>,
    },
    /// Nodewise precision estimate and debiased coefficients for a stored fit.
    Debias {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        fit: Option<PathBuf>,
        #[arg(long)]
        nodewise_penalty: Option<f64>,
    },
    /// Long-run covariance of the scores of a stored fit.
    Hac {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        longrun: LongRunArgs,
        #[arg(long)]
        fit: Option<PathBuf>,
    },
    /// Intervals and residual diagnostics from stored artifacts.
    Infer {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        fit: Option<PathBuf>,
        #[arg(long)]
        precision: Option<PathBuf>,
        #[arg(long)]
        lrcov: Option<PathBuf>,
        #[arg(long)]
        level: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        coords: Option<Vec<usize>>,
    },
    /// Interactive fixed effects: l1 + nuclear-norm start, iterated LASSO/PCA, bias correction.
    Ife {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        level: Option<f64>,
        /// Skip the bias correction and intervals.
        #[arg(long)]
        no_bias_correct: bool,
    },
    /// Monte Carlo replications of a preset table or a configured cell list.
    Mc {
        #[command(flatten)]
        common: Common,
        /// Preset table 1..=8.
        #[arg(long)]
        table: Option<u32>,
        #[arg(long)]
        reps: Option<usize>,
        /// Comma-separated N = T sizes replacing the preset's.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn parse_model(s: &str) -> std::result::Result<Model, String> {
    match s {
        "dgp1" | "1" => Ok(Model::Dgp1),
        "dgp2" | "2" => Ok(Model::Dgp2),
        other => Err(format!("unknown model `{other}`")),
    }
}

fn prepare_out(common: &Common) -> Result<PathBuf> {
    std::fs::create_dir_all(&common.out)?;
    Ok(common.out.clone())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::InvalidArgument("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    }
    let threads = cli.threads.unwrap_or_else(rayon::current_num_threads);
    match cli.command {
        Command::Simulate {
            common,
            model,
            n,
            t,
            d,
            rho_e,
            delta,
            seed,
            noiseless,
            unit_variance,
        } => {
            let mut cfg: config::SimulateConfig = config::load(common.config.as_deref())?;
            if let Some(m) = model {
                cfg.model = m;
            }
            if let Some(v) = n {
                cfg.n_units = v;
            }
            if let Some(v) = t {
                cfg.n_periods = v;
            }
            if let Some(v) = d {
                cfg.n_regressors = v;
            }
            if let Some(v) = rho_e {
                cfg.rho_e = v;
            }
            if let Some(v) = delta {
                cfg.delta_eps = v;
            }
            if let Some(v) = seed {
                cfg.seed = v;
            }
            cfg.noiseless |= noiseless;
            if unit_variance {
                cfg.innovation = InnovationScale::UnitVariance;
            }
            commands::simulate(&cfg, &prepare_out(&common)?)
        }
        Command::Estimate {
            common,
            data,
            longrun,
            solver,
            penalty,
            nodewise_penalty,
            level,
            coords,
        } => {
            let mut cfg: config::EstimateConfig = config::load(common.config.as_deref())?;
            data.apply(&mut cfg.data);
            longrun.apply(&mut cfg.longrun);
            solver.apply(&mut cfg.solver);
            if penalty.is_some() {
                cfg.penalty = penalty;
            }
            if nodewise_penalty.is_some() {
                cfg.nodewise_penalty = nodewise_penalty;
            }
            if let Some(l) = level {
                cfg.level = l;
            }
            if coords.is_some() {
                cfg.coordinates = coords;
            }
            commands::estimate(&cfg, &prepare_out(&common)?)
        }
        Command::Debias {
            common,
            data,
            solver,
            fit,
            nodewise_penalty,
        } => {
            let mut cfg: config::StageConfig = config::load(common.config.as_deref())?;
            data.apply(&mut cfg.data);
            solver.apply(&mut cfg.solver);
            if fit.is_some() {
                cfg.fit = fit;
            }
            if nodewise_penalty.is_some() {
                cfg.nodewise_penalty = nodewise_penalty;
            }
            commands::debias(&cfg, &prepare_out(&common)?)
        }
        Command::Hac {
            common,
            data,
            longrun,
            fit,
        } => {
            let mut cfg: config::StageConfig = config::load(common.config.as_deref())?;
            data.apply(&mut cfg.data);
            longrun.apply(&mut cfg.longrun);
            if fit.is_some() {
                cfg.fit = fit;
            }
            commands::hac(&cfg, &prepare_out(&common)?)
        }
        Command::Infer {
            common,
            data,
            fit,
            precision,
            lrcov,
            level,
            coords,
        } => {
            let mut cfg: config::StageConfig = config::load(common.config.as_deref())?;
            data.apply(&mut cfg.data);
            if fit.is_some() {
                cfg.fit = fit;
            }
            if precision.is_some() {
                cfg.precision = precision;
            }
            if lrcov.is_some() {
                cfg.lrcov = lrcov;
            }
            if let Some(l) = level {
                cfg.level = l;
            }
            if coords.is_some() {
                cfg.coordinates = coords;
            }
            commands::infer(&cfg, &prepare_out(&common)?)
        }
        Command::Ife {
            common,
            data,
            level,
            no_bias_correct,
        } => {
            let mut cfg: config::IfeConfig = config::load(common.config.as_deref())?;
            data.apply(&mut cfg.data);
            if let Some(l) = level {
                cfg.level = l;
            }
            if no_bias_correct {
                cfg.bias_correct = false;
            }
            commands::ife(&cfg, &prepare_out(&common)?)
        }
        Command::Mc {
            common,
            table,
            reps,
            sizes,
            seed,
        } => {
            let mut cfg: config::McConfig = config::load(common.config.as_deref())?;
            if table.is_some() {
                cfg.table = table;
                cfg.cells.clear();
            }
            if let Some(r) = reps {
                cfg.reps = r;
            }
            if sizes.is_some() {
                cfg.sizes = sizes;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let report = commands::mc(&cfg, threads, &prepare_out(&common)?)?;
            print!("{}", report.text_table());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let report = json!({ "kind": "config", "message": e.to_string() });
            eprintln!("{report}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = json!({ "kind": e.kind(), "message": e.to_string() });
            eprintln!("{report}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
