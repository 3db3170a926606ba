//! Command implementations behind the `cbo` binary.
//!
//! Outputs are deterministic for a fixed config and seed: CSV floats are
//! printed with 17 significant digits (round-trip safe), JSONL objects carry
//! a `kind` field (`step`, `summary`, `run_error`, `aggregate`, `report`,
//! `sweep_row`, `conditions`) and wall-clock times stay out of serialized
//! records.
//!
//! Seed derivation: run `i` of a command with master seed `s` uses
//! `run_seed = split_seed(s, i)`; stream 0 of `run_seed` draws the initial
//! ensemble, stream 1 the per-step noise, stream 2 condition-check MC draws.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::diagnostics::{self, ConditionCheck, NearMinimumVerdict, StepRecord};
use crate::dynamics::{self, DynamicsError, StopCriteria, StopReason, Trajectory};
use crate::exec;
use crate::model::{Params, Scheme};
use crate::objectives::{registry_names, Objective};
use crate::rng::{split_seed, RngStream};
use crate::verify::{
    beta_sweep, verify_theorem, BetaSweepRow, McEstimate, SweepConfig, TheoremId, ToleranceRule,
    VerificationReport, Verdict, VerifyConfig, VerifyError,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{failed} of {total} verification checks failed")]
    VerificationFailed { failed: usize, total: usize },
    #[error("all {0} seeds failed")]
    AllSeedsFailed(usize),
    #[error("unknown suite '{0}' (expected all, thm31, thm33, thm34i, thm34ii, thm34iii, laplace)")]
    UnknownSuite(String),
}

impl CliError {
    /// 2 for configuration problems, 1 for run/verification failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::UnknownSuite(_) => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

/// Final state of one run.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub seed_index: u64,
    pub run_seed: u64,
    pub steps: u64,
    pub stop_reason: StopReason,
    pub final_diameter: f64,
    pub final_consensus: Vec<f64>,
    /// Objective value at the final consensus point.
    pub final_value: f64,
    pub distance_to_minimizer: Option<f64>,
    /// Wall time is reported on stdout but never serialized, so identical
    /// configs reproduce byte-identical files.
    #[serde(skip)]
    pub wall_time_s: f64,
}

#[derive(Serialize)]
struct Tagged<'a, T: Serialize> {
    kind: &'a str,
    #[serde(flatten)]
    value: &'a T,
}

fn jsonl_line<T: Serialize>(kind: &str, value: &T) -> String {
    serde_json::to_string(&Tagged { kind, value }).expect("serializable record")
}

/// `%.16e` gives 17 significant digits, enough to round-trip an f64.
fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_header(dim: usize) -> String {
    let mut cols: Vec<String> = vec!["step".into(), "time".into(), "diameter".into()];
    for prefix in ["diam", "min", "max", "mean", "cons"] {
        for l in 1..=dim {
            cols.push(format!("{prefix}_{l}"));
        }
    }
    cols.extend(["mean_to_cons".into(), "energy".into(), "log_gibbs_mass".into(), "obj_at_cons".into()]);
    cols.join(",")
}

fn csv_row(r: &StepRecord) -> String {
    let mut fields: Vec<String> = vec![r.step.to_string(), fmt_f64(r.time), fmt_f64(r.diameter)];
    for group in [&r.component_diameters, &r.component_min, &r.component_max, &r.mean, &r.consensus_point] {
        fields.extend(group.iter().map(|&x| fmt_f64(x)));
    }
    fields.extend([
        fmt_f64(r.mean_to_consensus),
        fmt_f64(r.energy),
        fmt_f64(r.log_gibbs_mass),
        fmt_f64(r.objective_at_consensus),
    ]);
    fields.join(",")
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn summarize_run(
    seed_index: u64,
    run_seed: u64,
    trajectory: &Trajectory,
    objective: &Objective,
    wall_time_s: f64,
) -> RunSummary {
    let rec = trajectory.final_record();
    RunSummary {
        seed_index,
        run_seed,
        steps: trajectory.final_ensemble.step(),
        stop_reason: trajectory.stop_reason,
        final_diameter: rec.diameter,
        final_consensus: rec.consensus_point.clone(),
        final_value: rec.objective_at_consensus,
        distance_to_minimizer: objective
            .known_min_point()
            .map(|m| distance(&rec.consensus_point, m)),
        wall_time_s,
    }
}

fn execute(
    cfg: &RunConfig,
    params: &Params,
    objective: &Objective,
    seed_index: u64,
    record_stride: u64,
) -> Result<(Trajectory, RunSummary), CliError> {
    let started = Instant::now();
    let run_seed = split_seed(cfg.seed, seed_index);
    let (low, high) = cfg.init_box()?;
    let mut init_rng = RngStream::new(run_seed, 0);
    let mut noise_rng = RngStream::new(run_seed, 1);
    let init = dynamics::init_uniform(params, &low, &high, &mut init_rng)?;
    let stop = StopCriteria {
        max_steps: cfg.max_steps,
        diameter_tol: cfg.diameter_tol,
        wall_limit: None,
    };
    let rng = (params.scheme != Scheme::Deterministic).then_some(&mut noise_rng);
    let trajectory = dynamics::run(init, params, objective, &stop, record_stride, rng)?;
    let summary =
        summarize_run(seed_index, run_seed, &trajectory, objective, started.elapsed().as_secs_f64());
    Ok((trajectory, summary))
}

/// Executes one run (seed index 0 of the master seed), writing the
/// trajectory CSV and/or JSONL when configured. The summary is printed as a
/// final JSON object on stdout.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunSummary, CliError> {
    let params = cfg.params()?;
    let objective = cfg.objective()?;
    let (trajectory, summary) = execute(cfg, &params, &objective, 0, cfg.record_stride)?;
    if let Some(path) = &cfg.out_csv {
        let file = File::create(path).map_err(io_err(path))?;
        let mut w = BufWriter::new(file);
        (|| -> std::io::Result<()> {
            writeln!(w, "{}", csv_header(params.dim))?;
            for rec in &trajectory.records {
                writeln!(w, "{}", csv_row(rec))?;
            }
            w.flush()
        })()
        .map_err(io_err(path))?;
    }
    if let Some(path) = &cfg.out_jsonl {
        let file = File::create(path).map_err(io_err(path))?;
        let mut w = BufWriter::new(file);
        (|| -> std::io::Result<()> {
            for rec in &trajectory.records {
                writeln!(w, "{}", jsonl_line("step", rec))?;
            }
            writeln!(w, "{}", jsonl_line("summary", &summary))?;
            w.flush()
        })()
        .map_err(io_err(path))?;
    }
    println!(
        "run: stopped at step {} ({:?}), diameter {:.3e}, L(consensus) {:.6e}, wall {:.2}s",
        summary.steps,
        summary.stop_reason,
        summary.final_diameter,
        summary.final_value,
        summary.wall_time_s
    );
    println!("{}", jsonl_line("summary", &summary));
    Ok(summary)
}

/// Seed-level statistics over an ensemble of runs.
#[derive(Debug, Clone, Serialize)]
pub struct EnsembleAggregate {
    pub seeds: usize,
    pub failures: usize,
    pub median_final_value: f64,
    /// Fraction of successful runs ending within `success_radius` of the
    /// known minimizer; absent when the objective has no minimizer metadata.
    pub success_rate: Option<f64>,
    pub success_radius: f64,
    pub mean_steps: f64,
}

pub struct EnsembleOutcome {
    pub summaries: Vec<Result<RunSummary, String>>,
    pub aggregate: EnsembleAggregate,
}

/// Runs seed indices `0..n_seeds`, optionally in parallel, and aggregates.
/// Per-seed failures are recorded and skipped in the aggregate; the command
/// fails only if every seed fails.
pub fn cmd_ensemble(
    cfg: &RunConfig,
    n_seeds: usize,
    success_radius: f64,
    jobs: Option<usize>,
) -> Result<EnsembleOutcome, CliError> {
    let params = cfg.params()?;
    let objective = cfg.objective()?;
    // summaries only; record first and last step of each trajectory
    let stride = cfg.max_steps.max(1);
    let summaries: Vec<Result<RunSummary, String>> =
        exec::run_indexed(n_seeds, jobs, |seed_index| {
            execute(cfg, &params, &objective, seed_index as u64, stride)
                .map(|(_, summary)| summary)
                .map_err(|e| e.to_string())
        });
    let ok: Vec<&RunSummary> = summaries.iter().filter_map(|r| r.as_ref().ok()).collect();
    if ok.is_empty() {
        for (i, r) in summaries.iter().enumerate() {
            if let Err(e) = r {
                eprintln!("seed {i}: {e}");
            }
        }
        return Err(CliError::AllSeedsFailed(n_seeds));
    }
    let mut finals: Vec<f64> = ok.iter().map(|s| s.final_value).collect();
    finals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median_final_value = if finals.len() % 2 == 1 {
        finals[finals.len() / 2]
    } else {
        0.5 * (finals[finals.len() / 2 - 1] + finals[finals.len() / 2])
    };
    let success_rate = objective.known_min_point().map(|_| {
        ok.iter()
            .filter(|s| s.distance_to_minimizer.is_some_and(|d| d < success_radius))
            .count() as f64
            / ok.len() as f64
    });
    let aggregate = EnsembleAggregate {
        seeds: n_seeds,
        failures: n_seeds - ok.len(),
        median_final_value,
        success_rate,
        success_radius,
        mean_steps: ok.iter().map(|s| s.steps as f64).sum::<f64>() / ok.len() as f64,
    };
    if let Some(path) = &cfg.out_jsonl {
        let file = File::create(path).map_err(io_err(path))?;
        let mut w = BufWriter::new(file);
        (|| -> std::io::Result<()> {
            for (i, r) in summaries.iter().enumerate() {
                match r {
                    Ok(s) => writeln!(w, "{}", jsonl_line("summary", s))?,
                    Err(e) => writeln!(
                        w,
                        "{}",
                        jsonl_line("run_error", &serde_json::json!({ "seed_index": i, "error": e }))
                    )?,
                }
            }
            writeln!(w, "{}", jsonl_line("aggregate", &aggregate))?;
            w.flush()
        })()
        .map_err(io_err(path))?;
    }
    println!("seed  steps  stop              final_L        dist_to_min");
    for (i, r) in summaries.iter().enumerate() {
        match r {
            Ok(s) => println!(
                "{i:<5} {:<6} {:<17} {:<14.6e} {}",
                s.steps,
                format!("{:?}", s.stop_reason),
                s.final_value,
                s.distance_to_minimizer.map_or("-".to_string(), |d| format!("{d:.4e}")),
            ),
            Err(e) => println!("{i:<5} failed: {e}"),
        }
    }
    println!(
        "aggregate: {} seeds ({} failed), median final L {:.6e}, success rate {}, mean steps {:.1}",
        aggregate.seeds,
        aggregate.failures,
        aggregate.median_final_value,
        aggregate
            .success_rate
            .map_or("n/a".to_string(), |r| format!("{:.2} (radius {})", r, success_radius)),
        aggregate.mean_steps
    );
    Ok(EnsembleOutcome { summaries, aggregate })
}

/// Which verification checks to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifySuite {
    All,
    Theorem(TheoremId),
    Laplace,
}

impl std::str::FromStr for VerifySuite {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "all" => VerifySuite::All,
            "thm31" => VerifySuite::Theorem(TheoremId::Thm31),
            "thm33" => VerifySuite::Theorem(TheoremId::Thm33),
            "thm34i" => VerifySuite::Theorem(TheoremId::Thm34i),
            "thm34ii" => VerifySuite::Theorem(TheoremId::Thm34ii),
            "thm34iii" => VerifySuite::Theorem(TheoremId::Thm34iii),
            "laplace" => VerifySuite::Laplace,
            other => return Err(CliError::UnknownSuite(other.to_string())),
        })
    }
}

/// Optional overrides for the per-theorem default configurations.
#[derive(Debug, Clone, Default)]
pub struct VerifyOverrides {
    pub lambda: Option<f64>,
    pub sigma: Option<f64>,
    pub h: Option<f64>,
    pub steps: Option<u64>,
    pub runs: Option<usize>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub betas: Option<Vec<f64>>,
    pub out_jsonl: Option<PathBuf>,
}

impl VerifyOverrides {
    fn apply(&self, mut cfg: VerifyConfig) -> VerifyConfig {
        if let Some(v) = self.lambda {
            cfg.lambda = v;
        }
        if let Some(v) = self.sigma {
            cfg.sigma = v;
        }
        if let Some(v) = self.h {
            cfg.h = v;
        }
        if let Some(v) = self.steps {
            cfg.steps = v;
        }
        if let Some(v) = self.runs {
            cfg.runs = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        cfg.jobs = self.jobs;
        cfg
    }
}

/// Reference sweep for the Laplace-principle trend: Rastrigin in 2d with the
/// reference parameters, `sigma = 1`, overridable seed count.
fn laplace_sweep(ov: &VerifyOverrides) -> Result<(Vec<f64>, Vec<BetaSweepRow>), VerifyError> {
    let params = Params {
        lambda: ov.lambda.unwrap_or(1.0),
        sigma: ov.sigma.unwrap_or(1.0),
        h: ov.h.unwrap_or(0.01),
        n_particles: 100,
        dim: 2,
        scheme: Scheme::SemiExact,
        ..Params::default()
    };
    let objective = crate::objectives::registry_get(
        "rastrigin",
        2,
        &[("B".to_string(), 0.0), ("C".to_string(), 0.0)].into(),
    )
    .expect("rastrigin is registered");
    let cfg = SweepConfig {
        params,
        objective,
        init_low: vec![-2.0, -2.0],
        init_high: vec![2.0, 2.0],
        n_seeds: ov.runs.unwrap_or(20),
        master_seed: ov.seed.unwrap_or(0),
        max_steps: ov.steps.unwrap_or(1000),
        diameter_tol: 1e-3,
        success_radius: 0.25,
        jobs: ov.jobs,
    };
    let betas = ov.betas.clone().unwrap_or_else(|| vec![1.0, 10.0, 100.0]);
    let rows = beta_sweep(&cfg, &betas)?;
    Ok((betas, rows))
}

fn laplace_reports(rows: &[BetaSweepRow], seeds: usize) -> Vec<VerificationReport> {
    rows.windows(2)
        .map(|pair| {
            VerificationReport::judged(
                "laplace",
                &format!(
                    "median final L nonincreasing from beta={} to beta={}",
                    pair[0].beta, pair[1].beta
                ),
                pair[0].median_final_value,
                McEstimate {
                    mean: pair[1].median_final_value,
                    std_error: 0.0,
                    n_samples: seeds,
                },
                ToleranceRule::UpperBound,
                [
                    ("beta_low".to_string(), pair[0].beta),
                    ("beta_high".to_string(), pair[1].beta),
                ]
                .into(),
            )
        })
        .collect()
}

/// Runs the selected verification suite, printing one line per report and
/// appending machine-readable JSONL when configured. Hypothesis violations
/// count as skips; returns an error if any check fails.
pub fn cmd_verify(suite: VerifySuite, ov: &VerifyOverrides) -> Result<Vec<VerificationReport>, CliError> {
    let mut reports = Vec::new();
    let mut sweep_rows: Vec<BetaSweepRow> = Vec::new();
    let theorem_ids = [
        TheoremId::Thm31,
        TheoremId::Thm33,
        TheoremId::Thm34i,
        TheoremId::Thm34ii,
        TheoremId::Thm34iii,
    ];
    match suite {
        VerifySuite::Theorem(id) => {
            reports.push(verify_theorem(id, &ov.apply(VerifyConfig::for_theorem(id)))?);
        }
        VerifySuite::Laplace => {
            let (_, rows) = laplace_sweep(ov)?;
            reports.extend(laplace_reports(&rows, ov.runs.unwrap_or(20)));
            sweep_rows = rows;
        }
        VerifySuite::All => {
            for id in theorem_ids {
                reports.push(verify_theorem(id, &ov.apply(VerifyConfig::for_theorem(id)))?);
            }
            let (_, rows) = laplace_sweep(ov)?;
            reports.extend(laplace_reports(&rows, ov.runs.unwrap_or(20)));
            sweep_rows = rows;
        }
    }
    for row in &sweep_rows {
        println!(
            "beta={:<8} median final L={:.6e} success rate={:.2} ({} seeds)",
            row.beta, row.median_final_value, row.success_rate, row.seeds
        );
    }
    for report in &reports {
        println!("{report}");
    }
    if let Some(path) = &ov.out_jsonl {
        let file = File::create(path).map_err(io_err(path))?;
        let mut w = BufWriter::new(file);
        (|| -> std::io::Result<()> {
            for row in &sweep_rows {
                writeln!(w, "{}", jsonl_line("sweep_row", row))?;
            }
            for report in &reports {
                writeln!(w, "{}", jsonl_line("report", report))?;
            }
            w.flush()
        })()
        .map_err(io_err(path))?;
    }
    let failed = reports.iter().filter(|r| r.failed()).count();
    let skipped = reports
        .iter()
        .filter(|r| matches!(r.verdict, Verdict::HypothesesUnmet { .. }))
        .count();
    println!(
        "verify: {} passed, {} skipped, {} failed",
        reports.len() - failed - skipped,
        skipped,
        failed
    );
    if failed > 0 {
        return Err(CliError::VerificationFailed { failed, total: reports.len() });
    }
    Ok(reports)
}

fn print_check(name: &str, c: &ConditionCheck) {
    println!(
        "  {name:<34} {} (margin {:+.6e})",
        if c.satisfied { "ok    " } else { "UNMET " },
        c.margin
    );
}

/// Prints the condition report for a configuration, including the MC
/// near-minimum feasibility check over `draws` fresh initial samples.
pub fn cmd_conditions(cfg: &RunConfig, draws: usize) -> Result<(), CliError> {
    let params = cfg.params()?;
    let objective = cfg.objective()?;
    let (low, high) = cfg.init_box()?;
    let mut rng = RngStream::new(split_seed(cfg.seed, 0), 2);
    let stats = diagnostics::estimate_init_stats(&params, &objective, &low, &high, draws, &mut rng);
    let report = diagnostics::check_conditions(&params, &objective, Some(&stats));
    println!(
        "conditions for lambda={} sigma={} beta={} h={} (objective {}):",
        params.lambda,
        params.effective_sigma(),
        params.beta,
        params.h,
        objective.name()
    );
    print_check("lambda > 0", &report.lambda_positive);
    print_check("h < 1/lambda", &report.h_below_contraction_bound);
    print_check("2*lambda > sigma^2", &report.drift_dominates_noise);
    print_check("h < (2*lambda - sigma^2)/lambda", &report.h_below_second_moment_bound);
    println!("  decay margin m = {:.6e}", report.decay_margin);
    match &report.near_minimum {
        NearMinimumVerdict::Unknown { missing } => {
            println!("  near-minimum condition: unknown ({missing})");
        }
        NearMinimumVerdict::Checked { feasible, epsilon_max, lhs, rhs, min_value_positive } => {
            println!(
                "  near-minimum condition: {} (largest epsilon = {:.6e})",
                if *feasible { "feasible" } else { "infeasible" },
                epsilon_max
            );
            println!(
                "    E exp(-beta*L(init)) = {:.6e} (se {:.2e}, n={})",
                lhs.mean, lhs.std_error, lhs.n_samples
            );
            println!("    required bound       = {rhs:.6e}");
            if !min_value_positive {
                println!("    note: known minimum is not positive; the stated hypothesis assumes it is");
            }
        }
    }
    if let Some(path) = &cfg.out_jsonl {
        let file = File::create(path).map_err(io_err(path))?;
        let mut w = BufWriter::new(file);
        writeln!(w, "{}", jsonl_line("conditions", &report)).map_err(io_err(path))?;
        w.flush().map_err(io_err(path))?;
    }
    Ok(())
}

/// One line per registered objective, alphabetical.
pub fn cmd_list_objectives() {
    for (name, params) in registry_names() {
        if params.is_empty() {
            println!("{name:<12} params: (none)");
        } else {
            println!("{name:<12} params: {}", params.join(", "));
        }
    }
}
