use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cbo::cli::{
    cmd_conditions, cmd_ensemble, cmd_list_objectives, cmd_run, cmd_verify, CliError, VerifyOverrides,
    VerifySuite,
};
use cbo::config::{parse_noise_mode, parse_scheme, ConfigError, RunConfig};

#[derive(Parser)]
#[command(
    name = "cbo",
    version,
    about = "Consensus-based optimization: runs, parameter checks, and verification against closed-form consensus rates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one run and export the trajectory (CSV/JSONL)
    Run(RunArgs),
    /// Run many seeds of one configuration and aggregate the summaries
    Ensemble(EnsembleArgs),
    /// Check simulated dynamics against closed-form consensus rates
    Verify(VerifyArgs),
    /// Report which consensus-theorem hypotheses the configuration meets
    Conditions(ConditionsArgs),
    /// List registered objectives and their parameter keys
    ListObjectives,
}

/// Configuration sources; flags override file keys, which override defaults.
#[derive(Args)]
struct ConfigArgs {
    /// Config file: flat `key = value` lines, `#` comments
    #[arg(long)]
    config: Option<PathBuf>,
    /// Objective name (see `list-objectives`)
    #[arg(long)]
    objective: Option<String>,
    /// Rastrigin minimizer location (key `B`)
    #[arg(long = "B")]
    shift: Option<f64>,
    /// Rastrigin minimum value (key `C`)
    #[arg(long = "C")]
    offset: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    n_particles: Option<usize>,
    /// Drift rate lambda
    #[arg(long)]
    lambda: Option<f64>,
    /// Noise intensity sigma
    #[arg(long)]
    sigma: Option<f64>,
    /// Inverse temperature beta
    #[arg(long)]
    beta: Option<f64>,
    /// Time step h
    #[arg(long = "h")]
    time_step: Option<f64>,
    /// euler | semi_exact | deterministic
    #[arg(long)]
    scheme: Option<String>,
    /// common | independent
    #[arg(long)]
    noise_mode: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Init box lower bounds: one scalar or `dim` comma-separated values
    #[arg(long)]
    init_low: Option<String>,
    /// Init box upper bounds: one scalar or `dim` comma-separated values
    #[arg(long)]
    init_high: Option<String>,
    #[arg(long)]
    max_steps: Option<u64>,
    /// Stop once the ensemble diameter drops below this
    #[arg(long)]
    diameter_tol: Option<f64>,
    /// Record diagnostics every this many steps
    #[arg(long)]
    record_stride: Option<u64>,
    #[arg(long)]
    out_csv: Option<PathBuf>,
    #[arg(long)]
    out_jsonl: Option<PathBuf>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        let over = |key: &str, reason: String| {
            CliError::Config(ConfigError::BadOverride { key: key.to_string(), reason })
        };
        if let Some(v) = &self.objective {
            cfg.objective = Some(v.clone());
        }
        if let Some(v) = self.shift {
            cfg.objective_params.insert("B".to_string(), v);
        }
        if let Some(v) = self.offset {
            cfg.objective_params.insert("C".to_string(), v);
        }
        if let Some(v) = self.dim {
            cfg.dim = v;
        }
        if let Some(v) = self.n_particles {
            cfg.n_particles = v;
        }
        if let Some(v) = self.lambda {
            cfg.lambda = v;
        }
        if let Some(v) = self.sigma {
            cfg.sigma = v;
        }
        if let Some(v) = self.beta {
            cfg.beta = v;
        }
        if let Some(v) = self.time_step {
            cfg.h = v;
        }
        if let Some(v) = &self.scheme {
            cfg.scheme = parse_scheme(v).map_err(|r| over("scheme", r))?;
        }
        if let Some(v) = &self.noise_mode {
            cfg.noise_mode = parse_noise_mode(v).map_err(|r| over("noise_mode", r))?;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.init_low {
            cfg.set("init_low", v).map_err(|r| over("init_low", r))?;
        }
        if let Some(v) = &self.init_high {
            cfg.set("init_high", v).map_err(|r| over("init_high", r))?;
        }
        if let Some(v) = self.max_steps {
            cfg.max_steps = v;
        }
        if let Some(v) = self.diameter_tol {
            cfg.diameter_tol = v;
        }
        if let Some(v) = self.record_stride {
            cfg.record_stride = v;
        }
        if let Some(v) = &self.out_csv {
            cfg.out_csv = Some(v.clone());
        }
        if let Some(v) = &self.out_jsonl {
            cfg.out_jsonl = Some(v.clone());
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct EnsembleArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Number of seeds (seed indices 0..n derived from the master seed)
    #[arg(long, default_value_t = 20)]
    seeds: usize,
    /// Success radius around the known minimizer
    #[arg(long, default_value_t = 0.25)]
    success_radius: f64,
    /// Max concurrent runs (default: one per core)
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct VerifyArgs {
    /// all | thm31 | thm33 | thm34i | thm34ii | thm34iii | laplace
    #[arg(long, default_value = "all")]
    suite: String,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long = "h")]
    time_step: Option<f64>,
    /// Steps per path (per-suite default otherwise)
    #[arg(long)]
    steps: Option<u64>,
    /// MC paths / sweep seeds (per-suite default otherwise)
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Max concurrent paths (default: one per core)
    #[arg(long)]
    jobs: Option<usize>,
    /// Betas for the laplace sweep, comma-separated
    #[arg(long)]
    betas: Option<String>,
    #[arg(long)]
    out_jsonl: Option<PathBuf>,
}

#[derive(Args)]
struct ConditionsArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// MC draws for the initial-data expectations
    #[arg(long, default_value_t = 10_000)]
    draws: usize,
}

fn parse_betas(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|p| {
            p.trim().parse::<f64>().map_err(|e| {
                CliError::Config(ConfigError::BadOverride {
                    key: "betas".to_string(),
                    reason: format!("'{p}' is not a number ({e})"),
                })
            })
        })
        .collect()
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => {
            cmd_run(&args.config.resolve()?)?;
            Ok(())
        }
        Command::Ensemble(args) => {
            let cfg = args.config.resolve()?;
            cmd_ensemble(&cfg, args.seeds, args.success_radius, args.jobs)?;
            Ok(())
        }
        Command::Verify(args) => {
            let suite: VerifySuite = args.suite.parse()?;
            let overrides = VerifyOverrides {
                lambda: args.lambda,
                sigma: args.sigma,
                h: args.time_step,
                steps: args.steps,
                runs: args.runs,
                seed: args.seed,
                jobs: args.jobs,
                betas: args.betas.as_deref().map(parse_betas).transpose()?,
                out_jsonl: args.out_jsonl,
            };
            cmd_verify(suite, &overrides)?;
            Ok(())
        }
        Command::Conditions(args) => cmd_conditions(&args.config.resolve()?, args.draws),
        Command::ListObjectives => {
            cmd_list_objectives();
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
