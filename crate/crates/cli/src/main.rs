//! `recwalk`: walk-based top-n recommendation pipeline.
//!
//! Subcommands cover the full flow: `split` -> `train` -> `evaluate` /
//! `recommend` / `spectrum` / `coverage` / `grid`. Exit codes: 0 success,
//! 1 usage or configuration error, 2 data error, 3 numerical failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{parse_neighborhood, ConfigError, RunConfig};
use recwalk_core::eval::Objective;
use recwalk_core::item_model::NeighborhoodSize;
use recwalk_core::spectral::DENSE_MAX_ORDER;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(recwalk_core::Error),
}

impl From<recwalk_core::Error> for CliError {
    fn from(e: recwalk_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.0)
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Core(recwalk_core::Error::NotConverged(_)) => 3,
            CliError::Core(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

#[derive(Parser)]
#[command(name = "recwalk", version, about = "Walk-based top-n recommendation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand; each one overrides the corresponding
/// config-file key.
#[derive(Args)]
struct Common {
    /// Plain-text key=value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Interaction file: one `user item` pair per line ("::", tab or comma separated)
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Artifact directory (also settable via RECWALK_OUTDIR)
    #[arg(long)]
    outdir: Option<PathBuf>,
    /// Master seed; all randomness derives from it
    #[arg(long)]
    seed: Option<u64>,
    /// Drop users with fewer interactions
    #[arg(long)]
    min_user_deg: Option<usize>,
    /// Drop items with fewer interactions
    #[arg(long)]
    min_item_deg: Option<usize>,
    /// Neighborhood size: a count ("100") or a percentage of items ("2.5%")
    #[arg(long, value_name = "C")]
    c: Option<String>,
    /// L1 regularization weight
    #[arg(long)]
    gamma1: Option<f64>,
    /// L2 regularization weight
    #[arg(long)]
    gamma2: Option<f64>,
    /// Coordinate-descent convergence tolerance
    #[arg(long)]
    fit_tol: Option<f64>,
    /// Coordinate-descent sweep cap
    #[arg(long)]
    max_sweeps: Option<usize>,
    /// Walk mixing weight
    #[arg(long)]
    alpha: Option<f64>,
    /// Number of walk steps for k-step strategies
    #[arg(long)]
    k: Option<usize>,
    /// Damping factor for restart strategies
    #[arg(long)]
    eta: Option<f64>,
    /// Restart-walk convergence tolerance
    #[arg(long)]
    walk_tol: Option<f64>,
    /// Recommendation cutoff
    #[arg(long)]
    n: Option<usize>,
    /// Worker pool size (default: hardware parallelism)
    #[arg(long)]
    threads: Option<usize>,
    /// Restrict a disconnected interaction graph to its largest component
    #[arg(long)]
    giant_component: bool,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        if let Some(v) = &self.dataset {
            cfg.dataset = Some(v.clone());
        }
        if let Some(v) = &self.outdir {
            cfg.outdir = v.clone();
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.min_user_deg {
            cfg.min_user_deg = v;
        }
        if let Some(v) = self.min_item_deg {
            cfg.min_item_deg = v;
        }
        if let Some(v) = &self.c {
            cfg.c = parse_neighborhood(v)?;
        }
        if let Some(v) = self.gamma1 {
            cfg.gamma1 = v;
        }
        if let Some(v) = self.gamma2 {
            cfg.gamma2 = v;
        }
        if let Some(v) = self.fit_tol {
            cfg.fit_tol = v;
        }
        if let Some(v) = self.max_sweeps {
            cfg.max_sweeps = v;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.k {
            cfg.k = v;
        }
        if let Some(v) = self.eta {
            cfg.eta = v;
        }
        if let Some(v) = self.walk_tol {
            cfg.walk_tol = v;
        }
        if let Some(v) = self.n {
            cfg.n = v;
        }
        if let Some(v) = self.threads {
            cfg.threads = v;
        }
        if self.giant_component {
            cfg.giant_component = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write leave-one-out test and validation splits
    Split {
        #[command(flatten)]
        common: Common,
    },
    /// Fit the item model and assemble the walk transition matrix
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Score a strategy on a split and write the metric report
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// kstep | pr | srw | pr-base | base | kstep-mi | pr-mi
        #[arg(long, default_value = "kstep")]
        strategy: String,
        /// test | validation
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Emit top-n lists as `user<TAB>item:score,...`
    Recommend {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "kstep")]
        strategy: String,
        /// Comma-separated external user ids (default: all users)
        #[arg(long, value_delimiter = ',')]
        users: Option<Vec<String>>,
    },
    /// Eigenvalue spectrum, coupling degree and landing-drift diagnostics
    Spectrum {
        #[command(flatten)]
        common: Common,
        /// Dense eigensolver cap on the matrix order
        #[arg(long, default_value_t = DENSE_MAX_ORDER)]
        max_order: usize,
        /// Number of users profiled in the drift report
        #[arg(long, default_value_t = 10)]
        drift_users: usize,
    },
    /// Fraction of users whose scores support most of the itemspace
    Coverage {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "kstep")]
        strategy: String,
        /// Itemspace fractions to audit against
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.5, 0.9])]
        thresholds: Vec<f64>,
    },
    /// Sweep hyperparameters on the validation split
    Grid {
        #[command(flatten)]
        common: Common,
        /// kstep | pr
        #[arg(long, default_value = "kstep")]
        strategy: String,
        /// Neighborhood sizes, e.g. "2.5%,5%,100"
        #[arg(long, value_delimiter = ',', default_values_t = vec!["10%".to_string()])]
        c_list: Vec<String>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![1.0, 5.0])]
        gamma1_list: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.1, 1.0])]
        gamma2_list: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![3, 7, 12])]
        k_list: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.9])]
        eta_list: Vec<f64>,
        /// hr | arhr | ndcg
        #[arg(long, default_value = "ndcg")]
        objective: String,
    },
}

fn init_threads(cfg: &RunConfig) {
    // a second init in the same process (tests) is harmless
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build_global();
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Split { common } => {
            let cfg = common.resolve()?;
            init_threads(&cfg);
            commands::cmd_split(&cfg)
        }
        Command::Train { common } => {
            let cfg = common.resolve()?;
            init_threads(&cfg);
            commands::cmd_train(&cfg)
        }
        Command::Evaluate {
            common,
            strategy,
            split,
        } => {
            let cfg = common.resolve()?;
            init_threads(&cfg);
            commands::cmd_evaluate(&cfg, &strategy, &split)
        }
        Command::Recommend {
            common,
            strategy,
            users,
        } => {
            let cfg = common.resolve()?;
            init_threads(&cfg);
            commands::cmd_recommend(&cfg, &strategy, users)
        }
        Command::Spectrum {
            common,
            max_order,
            drift_users,
        } => {
            let cfg = common.resolve()?;
            init_threads(&cfg);
            commands::cmd_spectrum(&cfg, max_order, drift_users)
        }
        Command::Coverage {
            common,
            strategy,
            thresholds,
        } => {
            let cfg = common.resolve()?;
            init_threads(&cfg);
            commands::cmd_coverage(&cfg, &strategy, &thresholds)
        }
        Command::Grid {
            common,
            strategy,
            c_list,
            gamma1_list,
            gamma2_list,
            k_list,
            eta_list,
            objective,
        } => {
            let cfg = common.resolve()?;
            init_threads(&cfg);
            let c_list: Vec<NeighborhoodSize> = c_list
                .iter()
                .map(|s| parse_neighborhood(s))
                .collect::<Result<_, _>>()?;
            let objective = match objective.as_str() {
                "hr" => Objective::Hr,
                "arhr" => Objective::Arhr,
                "ndcg" => Objective::Ndcg,
                other => {
                    return Err(CliError::Config(format!(
                        "unknown objective {other:?} (hr|arhr|ndcg)"
                    )))
                }
            };
            commands::cmd_grid(
                &cfg,
                &strategy,
                &c_list,
                &gamma1_list,
                &gamma2_list,
                &k_list,
                &eta_list,
                objective,
            )
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version are success; anything else is a usage error
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
