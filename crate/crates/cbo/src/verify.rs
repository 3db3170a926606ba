//! Closed-form consensus oracles and the Monte Carlo harness that tests the
//! simulator against them.
//!
//! Each check pairs an estimator driven through the real dynamics with an
//! independently computed target, under one of three tolerance rules:
//! deterministic comparisons at relative 1e-12, MC means at 3 standard
//! errors, fitted rates at 10% relative. The verdict is always derived from
//! the stated rule, never hand-assigned.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::diagnostics::decay_margin;
use crate::dynamics::{self, DynamicsError, StopCriteria};
use crate::exec;
use crate::model::{Ensemble, NoiseMode, Params, Scheme};
use crate::objectives::Objective;
use crate::rng::{split_seed, RngStream};

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("lambda*h must lie in (0,1), got {0}")]
    LambdaHOutOfRange(f64),
    #[error("at least 2 runs are required, got {0}")]
    TooFewRuns(usize),
    #[error("beta sweep needs at least 2 entries, got {0}")]
    TooFewBetas(usize),
    #[error("slope window [{0}, {1}] holds fewer than 2 sample times")]
    DegenerateWindow(f64, f64),
    #[error("objective '{0}' has no known minimizer; success rates need one")]
    MissingMinimizer(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Mean, standard error and sample count of a Monte Carlo estimate.
#[derive(Debug, Clone, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_samples: usize,
}

impl McEstimate {
    /// Welford one-pass mean and standard error. Needs at least two samples.
    pub fn from_samples(samples: impl IntoIterator<Item = f64>) -> Self {
        let mut n = 0usize;
        let mut mean = 0.0f64;
        let mut m2 = 0.0f64;
        for x in samples {
            n += 1;
            let delta = x - mean;
            mean += delta / n as f64;
            m2 += delta * (x - mean);
        }
        assert!(n >= 2, "Monte Carlo estimate needs at least 2 samples, got {n}");
        McEstimate { mean, std_error: (m2 / (n - 1) as f64 / n as f64).sqrt(), n_samples: n }
    }
}

/// `exp(-lambda*t) * D0`: continuous-time diameter envelope of the
/// noise-free flow, exact for pairwise differences.
pub fn oracle_deterministic_diameter(d0: f64, lambda: f64, t: f64) -> f64 {
    (-lambda * t).exp() * d0
}

/// `(1 - lambda*h)^n * diff0`: the signed pairwise mean after `n` discrete
/// steps. An equality, not a bound.
pub fn oracle_discrete_mean(diff0: f64, lambda: f64, h: f64, n: u64) -> Result<f64, VerifyError> {
    let lh = lambda * h;
    if !(lh > 0.0 && lh < 1.0) {
        return Err(VerifyError::LambdaHOutOfRange(lh));
    }
    Ok((1.0 - lh).powi(n as i32) * diff0)
}

/// `(1 - h*m)^n * sq0` with `m = 2*lambda - lambda^2*h - sigma^2`: the
/// squared pairwise distance after `n` steps. `1 - h*m` equals
/// `E[(1 - lambda*h + sigma*sqrt(h)*Z)^2]`, so it is nonnegative for every
/// parameter choice and the identity is exact.
pub fn oracle_discrete_second_moment(sq0: f64, lambda: f64, h: f64, sigma: f64, n: u64) -> f64 {
    (1.0 - h * decay_margin(lambda, h, sigma)).powi(n as i32) * sq0
}

/// `-(lambda + sigma^2/2)`: the almost-sure exponential rate of
/// `log|x^{i,l} - x^{j,l}|` for the continuous flow; the Brownian term has
/// zero time-average slope.
pub fn oracle_continuous_exponent(lambda: f64, sigma: f64) -> f64 {
    -(lambda + sigma * sigma / 2.0)
}

/// Which pairwise quantity to estimate over independent noise paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairStatistic {
    /// Signed first-component difference `x^{1,1} - x^{2,1}` at the final step.
    MeanDiff,
    /// Squared Euclidean distance `|X^1 - X^2|^2` at the final step.
    SecondMoment,
    /// Least-squares slope of the across-path mean of `log|x^{1,1} - x^{2,1}|`
    /// versus `t` over `slope_window`.
    LogDiffSlope,
}

/// Configuration for pairwise MC estimates. The initial ensemble is fixed
/// across paths; randomness enters only through the noise, matching the
/// conditioning in the closed-form targets.
#[derive(Debug, Clone)]
pub struct PairwiseConfig {
    pub params: Params,
    pub objective: Objective,
    pub init: Ensemble,
    /// Steps per path.
    pub steps: u64,
    /// Independent noise paths.
    pub runs: usize,
    pub master_seed: u64,
    /// Time window for `LogDiffSlope`.
    pub slope_window: (f64, f64),
    pub jobs: Option<usize>,
}

impl PairwiseConfig {
    /// Two particles on the first axis at `±gap/2`, so the initial signed
    /// difference is exactly `gap`.
    pub fn pair(params: Params, objective: Objective, gap: f64) -> Self {
        let dim = params.dim;
        let mut positions = vec![0.0; 2 * dim];
        positions[0] = gap / 2.0;
        positions[dim] = -gap / 2.0;
        let init = Ensemble::new(positions, 2, dim).expect("finite pair");
        PairwiseConfig {
            params: Params { n_particles: 2, ..params },
            objective,
            init,
            steps: 500,
            runs: 10_000,
            master_seed: 0,
            slope_window: (1.0, 10.0),
            jobs: None,
        }
    }

    pub fn initial_signed_diff(&self) -> f64 {
        self.init.particle(0)[0] - self.init.particle(1)[0]
    }

    pub fn initial_sq_distance(&self) -> f64 {
        self.init
            .particle(0)
            .iter()
            .zip(self.init.particle(1))
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    fn noise_rng(&self, path: usize) -> RngStream {
        RngStream::new(self.master_seed, path as u64)
    }
}

fn advance_path(
    cfg: &PairwiseConfig,
    path: usize,
    mut observe: impl FnMut(u64, &Ensemble),
) -> Result<(), DynamicsError> {
    let needs_rng = cfg.params.scheme != Scheme::Deterministic;
    let mut rng = cfg.noise_rng(path);
    let mut e = cfg.init.clone();
    observe(0, &e);
    for n in 1..=cfg.steps {
        let rng = needs_rng.then_some(&mut rng);
        e = dynamics::step(&e, &cfg.params, &cfg.objective, rng)?;
        observe(n, &e);
    }
    Ok(())
}

fn signed_diff(e: &Ensemble) -> f64 {
    e.particle(0)[0] - e.particle(1)[0]
}

fn sq_distance(e: &Ensemble) -> f64 {
    e.particle(0)
        .iter()
        .zip(e.particle(1))
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// Runs `cfg.runs` independently seeded paths through the real dynamics and
/// estimates the requested statistic.
pub fn estimate_pairwise_statistic(
    cfg: &PairwiseConfig,
    statistic: PairStatistic,
) -> Result<McEstimate, VerifyError> {
    if cfg.runs < 2 {
        return Err(VerifyError::TooFewRuns(cfg.runs));
    }
    match statistic {
        PairStatistic::MeanDiff | PairStatistic::SecondMoment => {
            let results = exec::run_indexed(cfg.runs, cfg.jobs, |path| {
                let mut last = 0.0;
                advance_path(cfg, path, |n, e| {
                    if n == cfg.steps {
                        last = match statistic {
                            PairStatistic::MeanDiff => signed_diff(e),
                            _ => sq_distance(e),
                        };
                    }
                })
                .map(|_| last)
            });
            let mut samples = Vec::with_capacity(cfg.runs);
            for r in results {
                samples.push(r?);
            }
            Ok(McEstimate::from_samples(samples))
        }
        PairStatistic::LogDiffSlope => estimate_log_diff_slope(cfg),
    }
}

fn estimate_log_diff_slope(cfg: &PairwiseConfig) -> Result<McEstimate, VerifyError> {
    let (t0, t1) = cfg.slope_window;
    let h = cfg.params.h;
    let first = (t0 / h).ceil() as u64;
    let last = ((t1 / h).floor() as u64).min(cfg.steps);
    if last < first + 1 {
        return Err(VerifyError::DegenerateWindow(t0, t1));
    }
    let count = (last - first + 1) as usize;
    let results = exec::run_indexed(cfg.runs, cfg.jobs, |path| {
        let mut logs = vec![0.0f64; count];
        advance_path(cfg, path, |n, e| {
            if n >= first && n <= last {
                logs[(n - first) as usize] = signed_diff(e).abs().ln();
            }
        })
        .map(|_| logs)
    });
    let mut mean_curve = vec![0.0f64; count];
    let mut paths = 0usize;
    for r in results {
        let logs = r?;
        for (acc, v) in mean_curve.iter_mut().zip(&logs) {
            *acc += v;
        }
        paths += 1;
    }
    for v in &mut mean_curve {
        *v /= paths as f64;
    }
    let times: Vec<f64> = (first..=last).map(|n| n as f64 * h).collect();
    let (slope, se) = least_squares_slope(&times, &mean_curve);
    Ok(McEstimate { mean: slope, std_error: se, n_samples: cfg.runs })
}

/// Ordinary least squares slope with its residual-based standard error.
pub fn least_squares_slope(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let xm = x.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|&v| (v - xm) * (v - xm)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(&a, &b)| (a - xm) * (b - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let ss_resid: f64 = x
        .iter()
        .zip(y)
        .map(|(&a, &b)| {
            let r = b - (intercept + slope * a);
            r * r
        })
        .sum();
    let dof = (x.len().saturating_sub(2)).max(1) as f64;
    (slope, (ss_resid / dof / sxx).sqrt())
}

/// Maximum absolute deviation of `y` from its least-squares line.
pub fn max_residual_from_line(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let xm = x.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|&v| (v - xm) * (v - xm)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(&a, &b)| (a - xm) * (b - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    x.iter()
        .zip(y)
        .map(|(&a, &b)| (b - (intercept + slope * a)).abs())
        .fold(0.0f64, f64::max)
}

/// How a report's estimate is compared against its oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ToleranceRule {
    /// `|estimate - oracle| <= tol * |oracle|` (deterministic checks).
    ExactRelative { tol: f64 },
    /// `|estimate - oracle| <= k * std_error` (MC means).
    StdErrors { k: f64 },
    /// `|estimate - oracle| <= pct/100 * |oracle|` (fitted rates).
    RelativePercent { pct: f64 },
    /// `estimate <= oracle` (monotone-trend comparisons).
    UpperBound,
}

impl ToleranceRule {
    pub fn check(&self, oracle: f64, estimate: &McEstimate) -> bool {
        let err = (estimate.mean - oracle).abs();
        match *self {
            ToleranceRule::ExactRelative { tol } => err <= tol * oracle.abs(),
            ToleranceRule::StdErrors { k } => err <= k * estimate.std_error,
            ToleranceRule::RelativePercent { pct } => err <= pct / 100.0 * oracle.abs(),
            ToleranceRule::UpperBound => estimate.mean <= oracle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// The theorem's hypotheses do not hold for these parameters; counts as
    /// a skip, not a failure.
    HypothesesUnmet { reason: String },
}

/// Outcome of one oracle-vs-estimate comparison.
#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub theorem: String,
    pub description: String,
    pub oracle: f64,
    pub estimate: McEstimate,
    pub rule: ToleranceRule,
    pub verdict: Verdict,
    pub parameters: BTreeMap<String, f64>,
}

impl VerificationReport {
    /// Builds the report with the verdict derived from the rule.
    pub fn judged(
        theorem: &str,
        description: &str,
        oracle: f64,
        estimate: McEstimate,
        rule: ToleranceRule,
        parameters: BTreeMap<String, f64>,
    ) -> Self {
        let verdict = if rule.check(oracle, &estimate) { Verdict::Pass } else { Verdict::Fail };
        VerificationReport {
            theorem: theorem.to_string(),
            description: description.to_string(),
            oracle,
            estimate,
            rule,
            verdict,
            parameters,
        }
    }

    pub fn skipped(theorem: &str, description: &str, reason: &str) -> Self {
        VerificationReport {
            theorem: theorem.to_string(),
            description: description.to_string(),
            oracle: f64::NAN,
            estimate: McEstimate { mean: f64::NAN, std_error: 0.0, n_samples: 2 },
            rule: ToleranceRule::ExactRelative { tol: 0.0 },
            verdict: Verdict::HypothesesUnmet { reason: reason.to_string() },
            parameters: BTreeMap::new(),
        }
    }

    /// True when the stored verdict agrees with re-applying the rule.
    pub fn consistent(&self) -> bool {
        match &self.verdict {
            Verdict::Pass => self.rule.check(self.oracle, &self.estimate),
            Verdict::Fail => !self.rule.check(self.oracle, &self.estimate),
            Verdict::HypothesesUnmet { .. } => true,
        }
    }

    pub fn passed(&self) -> bool {
        matches!(self.verdict, Verdict::Pass)
    }

    pub fn failed(&self) -> bool {
        matches!(self.verdict, Verdict::Fail)
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match &self.verdict {
            Verdict::Pass => "PASS".to_string(),
            Verdict::Fail => "FAIL".to_string(),
            Verdict::HypothesesUnmet { reason } => format!("SKIP ({reason})"),
        };
        let rule = match self.rule {
            ToleranceRule::ExactRelative { tol } => format!("exact@{tol:.0e}"),
            ToleranceRule::StdErrors { k } => format!("{k}*SE"),
            ToleranceRule::RelativePercent { pct } => format!("{pct}%rel"),
            ToleranceRule::UpperBound => "upper-bound".to_string(),
        };
        write!(
            f,
            "[{tag}] {}: {} | oracle={:.6e} estimate={:.6e} se={:.2e} n={} rule={rule}",
            self.theorem,
            self.description,
            self.oracle,
            self.estimate.mean,
            self.estimate.std_error,
            self.estimate.n_samples,
        )?;
        if !self.parameters.is_empty() {
            let params: Vec<String> =
                self.parameters.iter().map(|(k, v)| format!("{k}={v}")).collect();
            write!(f, " [{}]", params.join(" "))?;
        }
        Ok(())
    }
}

/// The consensus statements with closed-form targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TheoremId {
    /// Continuous noise-free diameter envelope `e^{-lambda t}`.
    Thm31,
    /// Discrete noise-free contraction `(1 - lambda h)^n`.
    Thm33,
    /// Mean pairwise decay `(1 - lambda h)^n` under noise.
    Thm34i,
    /// Second-moment decay `(1 - h m)^n`.
    Thm34ii,
    /// Strong consensus: the per-step rate variable tends to `h m / 2`.
    Thm34iii,
}

impl TheoremId {
    pub fn name(self) -> &'static str {
        match self {
            TheoremId::Thm31 => "thm31",
            TheoremId::Thm33 => "thm33",
            TheoremId::Thm34i => "thm34i",
            TheoremId::Thm34ii => "thm34ii",
            TheoremId::Thm34iii => "thm34iii",
        }
    }
}

/// Scalar knobs for [`verify_theorem`]; `for_theorem` supplies per-theorem
/// defaults (path counts and horizons sized so each check resolves its
/// tolerance comfortably).
#[derive(Debug, Clone)]
pub struct VerifyConfig {
    pub lambda: f64,
    pub sigma: f64,
    pub h: f64,
    pub steps: u64,
    pub runs: usize,
    pub seed: u64,
    pub jobs: Option<usize>,
}

impl VerifyConfig {
    pub fn for_theorem(id: TheoremId) -> Self {
        let base = VerifyConfig {
            lambda: 1.0,
            sigma: 1.0,
            h: 0.01,
            steps: 500,
            runs: 10_000,
            seed: 1,
            jobs: None,
        };
        match id {
            TheoremId::Thm31 => VerifyConfig { sigma: 0.0, steps: 1000, runs: 2, ..base },
            TheoremId::Thm33 => VerifyConfig { sigma: 0.0, steps: 2000, runs: 2, ..base },
            TheoremId::Thm34i | TheoremId::Thm34ii => base,
            TheoremId::Thm34iii => VerifyConfig { steps: 5000, runs: 100, ..base },
        }
    }

    fn parameter_map(&self) -> BTreeMap<String, f64> {
        let mut map = BTreeMap::new();
        map.insert("lambda".to_string(), self.lambda);
        map.insert("sigma".to_string(), self.sigma);
        map.insert("h".to_string(), self.h);
        map.insert("steps".to_string(), self.steps as f64);
        map.insert("runs".to_string(), self.runs as f64);
        map.insert("seed".to_string(), self.seed as f64);
        map
    }
}

fn sphere_objective(dim: usize) -> Objective {
    crate::objectives::registry_get("sphere", dim, &BTreeMap::new())
        .expect("sphere is registered")
}

/// Deterministic diameter check shared by the Thm31/Thm33 verifiers: a
/// mirrored 100-particle ensemble (consensus pinned at the origin so the
/// contraction stays exact to roundoff over thousands of steps), run twice
/// from different stream indices to double as a seed-independence check.
fn deterministic_diameter_ratio(
    cfg: &VerifyConfig,
    scheme: Scheme,
) -> Result<(f64, McEstimate), VerifyError> {
    let params = Params {
        lambda: cfg.lambda,
        sigma: 0.0,
        h: cfg.h,
        n_particles: 100,
        dim: 2,
        scheme,
        noise_mode: NoiseMode::Common,
        ..Params::default()
    };
    let objective = sphere_objective(2);
    let init = dynamics::init_mirrored(&params, 2.0, &mut RngStream::new(cfg.seed, 0));
    let d0 = init.diameter();
    let runs = cfg.runs.max(2);
    let ratios = exec::run_indexed(runs, cfg.jobs, |path| {
        let mut rng = RngStream::new(cfg.seed, path as u64 + 1);
        let needs_rng = scheme != Scheme::Deterministic;
        let mut e = init.clone();
        for _ in 0..cfg.steps {
            e = dynamics::step(&e, &params, &objective, needs_rng.then_some(&mut rng))?;
        }
        Ok::<f64, DynamicsError>(e.diameter() / d0)
    });
    let mut samples = Vec::with_capacity(runs);
    for r in ratios {
        samples.push(r?);
    }
    Ok((d0, McEstimate::from_samples(samples)))
}

/// Estimates the strong-consensus rate variable: per path, the observed
/// per-step pairwise factors `f_l` give `Y_n = (1/2n) sum (1 - f_l^2)`,
/// whose expectation per term is exactly `h*m`; paths are then averaged.
fn estimate_strong_rate(cfg: &PairwiseConfig) -> Result<McEstimate, VerifyError> {
    if cfg.runs < 2 {
        return Err(VerifyError::TooFewRuns(cfg.runs));
    }
    let results = exec::run_indexed(cfg.runs, cfg.jobs, |path| {
        let mut prev = 0.0;
        let mut acc = 0.0;
        advance_path(cfg, path, |n, e| {
            let diff = signed_diff(e);
            if n > 0 {
                let factor = diff / prev;
                acc += 1.0 - factor * factor;
            }
            prev = diff;
        })
        .map(|_| acc / (2.0 * cfg.steps as f64))
    });
    let mut samples = Vec::with_capacity(cfg.runs);
    for r in results {
        samples.push(r?);
    }
    Ok(McEstimate::from_samples(samples))
}

/// Runs the estimator matching `id`, compares against the matching oracle
/// under the stated rule, and reports. Hypothesis violations come back as
/// `HypothesesUnmet`, not failures.
pub fn verify_theorem(id: TheoremId, cfg: &VerifyConfig) -> Result<VerificationReport, VerifyError> {
    let params = cfg.parameter_map();
    match id {
        TheoremId::Thm31 => {
            let (d0, estimate) = deterministic_diameter_ratio(cfg, Scheme::SemiExact)?;
            let t = cfg.steps as f64 * cfg.h;
            let oracle = oracle_deterministic_diameter(d0, cfg.lambda, t) / d0;
            Ok(VerificationReport::judged(
                id.name(),
                "noise-free diameter envelope exp(-lambda*t)",
                oracle,
                estimate,
                ToleranceRule::ExactRelative { tol: 1e-12 },
                params,
            ))
        }
        TheoremId::Thm33 => {
            let lh = cfg.lambda * cfg.h;
            if !(lh > 0.0 && lh < 1.0) {
                return Ok(VerificationReport::skipped(
                    id.name(),
                    "discrete noise-free contraction (1-lambda*h)^n",
                    &format!("needs 0 < lambda*h < 1, got {lh}"),
                ));
            }
            let (_, estimate) = deterministic_diameter_ratio(cfg, Scheme::Deterministic)?;
            let oracle = oracle_discrete_mean(1.0, cfg.lambda, cfg.h, cfg.steps)?;
            Ok(VerificationReport::judged(
                id.name(),
                "discrete noise-free contraction (1-lambda*h)^n",
                oracle,
                estimate,
                ToleranceRule::ExactRelative { tol: 1e-12 },
                params,
            ))
        }
        TheoremId::Thm34i => {
            let lh = cfg.lambda * cfg.h;
            if cfg.sigma <= 0.0 {
                return Ok(VerificationReport::skipped(
                    id.name(),
                    "mean pairwise decay (1-lambda*h)^n",
                    "needs sigma > 0 (noise-free case is thm33)",
                ));
            }
            if !(lh > 0.0 && lh < 1.0) {
                return Ok(VerificationReport::skipped(
                    id.name(),
                    "mean pairwise decay (1-lambda*h)^n",
                    &format!("needs 0 < lambda*h < 1, got {lh}"),
                ));
            }
            let pair = pair_config(cfg, Scheme::Euler);
            let estimate = estimate_pairwise_statistic(&pair, PairStatistic::MeanDiff)?;
            let oracle =
                oracle_discrete_mean(pair.initial_signed_diff(), cfg.lambda, cfg.h, cfg.steps)?;
            Ok(VerificationReport::judged(
                id.name(),
                "mean pairwise decay (1-lambda*h)^n",
                oracle,
                estimate,
                ToleranceRule::StdErrors { k: 3.0 },
                params,
            ))
        }
        TheoremId::Thm34ii => {
            if let Some(reason) = second_moment_hypotheses(cfg) {
                return Ok(VerificationReport::skipped(
                    id.name(),
                    "second-moment decay (1-h*m)^n",
                    &reason,
                ));
            }
            let pair = pair_config(cfg, Scheme::Euler);
            let estimate = estimate_pairwise_statistic(&pair, PairStatistic::SecondMoment)?;
            let oracle = oracle_discrete_second_moment(
                pair.initial_sq_distance(),
                cfg.lambda,
                cfg.h,
                cfg.sigma,
                cfg.steps,
            );
            Ok(VerificationReport::judged(
                id.name(),
                "second-moment decay (1-h*m)^n",
                oracle,
                estimate,
                ToleranceRule::StdErrors { k: 3.0 },
                params,
            ))
        }
        TheoremId::Thm34iii => {
            if let Some(reason) = second_moment_hypotheses(cfg) {
                return Ok(VerificationReport::skipped(
                    id.name(),
                    "strong-consensus rate h*m/2",
                    &reason,
                ));
            }
            let pair = pair_config(cfg, Scheme::Euler);
            let estimate = estimate_strong_rate(&pair)?;
            let oracle = cfg.h * decay_margin(cfg.lambda, cfg.h, cfg.sigma) / 2.0;
            Ok(VerificationReport::judged(
                id.name(),
                "strong-consensus rate h*m/2",
                oracle,
                estimate,
                ToleranceRule::RelativePercent { pct: 10.0 },
                params,
            ))
        }
    }
}

fn second_moment_hypotheses(cfg: &VerifyConfig) -> Option<String> {
    if cfg.sigma <= 0.0 {
        return Some("needs sigma > 0 (noise-free case is thm33)".to_string());
    }
    let gap = 2.0 * cfg.lambda - cfg.sigma * cfg.sigma;
    if gap <= 0.0 {
        return Some(format!(
            "needs 2*lambda > sigma^2, got 2*{} <= {}^2",
            cfg.lambda, cfg.sigma
        ));
    }
    if !(cfg.h > 0.0 && cfg.h < gap / cfg.lambda) {
        return Some(format!("needs 0 < h < (2*lambda-sigma^2)/lambda = {}", gap / cfg.lambda));
    }
    None
}

fn pair_config(cfg: &VerifyConfig, scheme: Scheme) -> PairwiseConfig {
    let params = Params {
        lambda: cfg.lambda,
        sigma: cfg.sigma,
        h: cfg.h,
        n_particles: 2,
        dim: 1,
        scheme,
        noise_mode: NoiseMode::Common,
        ..Params::default()
    };
    let mut pair = PairwiseConfig::pair(params, sphere_objective(1), 1.0);
    pair.steps = cfg.steps;
    pair.runs = cfg.runs;
    pair.master_seed = cfg.seed;
    pair.jobs = cfg.jobs;
    pair
}

/// One row of a beta sweep.
#[derive(Debug, Clone, Serialize)]
pub struct BetaSweepRow {
    pub beta: f64,
    pub median_final_value: f64,
    /// Fraction of seeds whose final consensus point lies within
    /// `success_radius` of the known minimizer.
    pub success_rate: f64,
    pub seeds: usize,
}

/// Configuration for [`beta_sweep`]: each beta runs `n_seeds` full
/// trajectories from seed-dependent uniform initializations (the same
/// initial data across betas for a given seed).
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub params: Params,
    pub objective: Objective,
    pub init_low: Vec<f64>,
    pub init_high: Vec<f64>,
    pub n_seeds: usize,
    pub master_seed: u64,
    pub max_steps: u64,
    pub diameter_tol: f64,
    pub success_radius: f64,
    pub jobs: Option<usize>,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Runs every seed to consensus for each beta and tabulates the final
/// objective value at the consensus point and the success rate against the
/// known minimizer.
pub fn beta_sweep(cfg: &SweepConfig, betas: &[f64]) -> Result<Vec<BetaSweepRow>, VerifyError> {
    if betas.len() < 2 {
        return Err(VerifyError::TooFewBetas(betas.len()));
    }
    let min_point = cfg
        .objective
        .known_min_point()
        .ok_or_else(|| VerifyError::MissingMinimizer(cfg.objective.name().to_string()))?
        .to_vec();
    let mut rows = Vec::with_capacity(betas.len());
    for &beta in betas {
        let params = Params { beta, ..cfg.params.clone() };
        let stop = StopCriteria {
            max_steps: cfg.max_steps,
            diameter_tol: cfg.diameter_tol,
            wall_limit: None,
        };
        let outcomes = exec::run_indexed(cfg.n_seeds, cfg.jobs, |seed| {
            let run_seed = split_seed(cfg.master_seed, seed as u64);
            let mut init_rng = RngStream::new(run_seed, 0);
            let mut noise_rng = RngStream::new(run_seed, 1);
            let init =
                dynamics::init_uniform(&params, &cfg.init_low, &cfg.init_high, &mut init_rng)?;
            let t = dynamics::run(
                init,
                &params,
                &cfg.objective,
                &stop,
                cfg.max_steps.max(1),
                Some(&mut noise_rng),
            )?;
            let rec = t.final_record();
            let dist: f64 = rec
                .consensus_point
                .iter()
                .zip(&min_point)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            Ok::<(f64, bool), DynamicsError>((
                rec.objective_at_consensus,
                dist < cfg.success_radius,
            ))
        });
        let mut finals = Vec::with_capacity(cfg.n_seeds);
        let mut successes = 0usize;
        for o in outcomes {
            let (value, ok) = o?;
            finals.push(value);
            successes += ok as usize;
        }
        finals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        rows.push(BetaSweepRow {
            beta,
            median_final_value: median(&finals),
            success_rate: successes as f64 / cfg.n_seeds as f64,
            seeds: cfg.n_seeds,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol * (1.0 + b.abs()), "{a} vs {b}");
    }

    #[test]
    fn diameter_oracle_values() {
        assert_eq!(oracle_deterministic_diameter(4.0, 1.0, 0.0), 4.0);
        close(oracle_deterministic_diameter(4.0, 1.0, std::f64::consts::LN_2), 2.0, 1e-15);
    }

    #[test]
    fn mean_oracle_values() {
        assert_eq!(oracle_discrete_mean(3.5, 1.0, 0.01, 0).unwrap(), 3.5);
        close(oracle_discrete_mean(1.0, 1.0, 0.01, 100).unwrap(), 0.3660323412732295, 1e-13);
        assert!(matches!(
            oracle_discrete_mean(1.0, 1.0, 1.0, 5),
            Err(VerifyError::LambdaHOutOfRange(_))
        ));
    }

    #[test]
    fn second_moment_oracle_values() {
        close(
            oracle_discrete_second_moment(1.0, 1.0, 0.01, 1.0, 500),
            0.006910830731218368,
            1e-12,
        );
    }

    #[test]
    fn second_moment_oracle_reduces_to_squared_mean_oracle_without_noise() {
        // grid of 100 (lambda, h, n) triples
        let lambdas = [0.2, 0.5, 1.0, 2.0, 4.0];
        let hs = [0.001, 0.01, 0.05, 0.1];
        let ns = [1u64, 10, 50, 100, 200];
        let mut checked = 0;
        for &lambda in &lambdas {
            for &h in &hs {
                if lambda * h >= 1.0 {
                    continue;
                }
                for &n in &ns {
                    let sq = oracle_discrete_second_moment(1.0, lambda, h, 0.0, n);
                    let mean = oracle_discrete_mean(1.0, lambda, h, n).unwrap();
                    assert!(
                        (sq - mean * mean).abs() <= 1e-12 * sq.abs(),
                        "lambda={lambda} h={h} n={n}: {sq} vs {}",
                        mean * mean
                    );
                    checked += 1;
                }
            }
        }
        assert_eq!(checked, 100);
    }

    #[test]
    fn continuous_exponent_values() {
        assert_eq!(oracle_continuous_exponent(1.0, 0.0), -1.0);
        assert_eq!(oracle_continuous_exponent(1.0, 1.0), -1.5);
        assert_eq!(oracle_continuous_exponent(1.0, 2.0), -3.0);
    }

    #[test]
    fn moment_factor_identity_single_triple() {
        // E[(1 - lambda*h + sigma*sqrt(h)*Z)^2] = 1 - h*m
        let (lambda, h, sigma) = (1.0f64, 0.01f64, 1.0f64);
        let mut rng = RngStream::new(77, 0);
        let est = McEstimate::from_samples((0..1_000_000).map(|_| {
            let f = 1.0 - lambda * h + sigma * h.sqrt() * rng.standard_normal();
            f * f
        }));
        let target = 1.0 - h * decay_margin(lambda, h, sigma);
        assert!(
            (est.mean - target).abs() <= 3.0 * est.std_error,
            "{} vs {target} (se {})",
            est.mean,
            est.std_error
        );
    }

    #[test]
    fn welford_matches_two_pass() {
        let xs = [1.0, 2.0, 4.0, 8.0, 16.5];
        let est = McEstimate::from_samples(xs.iter().copied());
        let mean: f64 = xs.iter().sum::<f64>() / 5.0;
        let var: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 4.0;
        close(est.mean, mean, 1e-15);
        close(est.std_error, (var / 5.0).sqrt(), 1e-15);
        assert_eq!(est.n_samples, 5);
    }

    #[test]
    fn noise_free_mean_diff_has_zero_se_and_matches_oracle() {
        let mut cfg = pair_config(
            &VerifyConfig { sigma: 0.0, ..VerifyConfig::for_theorem(TheoremId::Thm34i) },
            Scheme::Euler,
        );
        cfg.runs = 4;
        cfg.steps = 100;
        let est = estimate_pairwise_statistic(&cfg, PairStatistic::MeanDiff).unwrap();
        assert_eq!(est.std_error, 0.0);
        let oracle = oracle_discrete_mean(1.0, 1.0, 0.01, 100).unwrap();
        close(est.mean, oracle, 1e-12);
    }

    #[test]
    fn mean_diff_mc_matches_oracle_within_3se() {
        let mut cfg = pair_config(&VerifyConfig::for_theorem(TheoremId::Thm34i), Scheme::Euler);
        cfg.runs = 2000;
        cfg.steps = 200;
        cfg.master_seed = 41;
        let est = estimate_pairwise_statistic(&cfg, PairStatistic::MeanDiff).unwrap();
        let oracle = oracle_discrete_mean(1.0, 1.0, 0.01, 200).unwrap();
        assert!((est.mean - oracle).abs() <= 3.0 * est.std_error);
    }

    #[test]
    fn strong_rate_estimator_converges_to_hm_over_2() {
        let cfg = VerifyConfig { runs: 50, steps: 3000, seed: 3, ..VerifyConfig::for_theorem(TheoremId::Thm34iii) };
        let report = verify_theorem(TheoremId::Thm34iii, &cfg).unwrap();
        assert!(report.passed(), "{report}");
        close(report.oracle, 0.00495, 1e-12);
    }

    #[test]
    fn thm31_and_thm33_exact(){
        for id in [TheoremId::Thm31, TheoremId::Thm33] {
            let report = verify_theorem(id, &VerifyConfig::for_theorem(id)).unwrap();
            assert!(report.passed(), "{report}");
            assert_eq!(report.estimate.std_error, 0.0);
        }
    }

    #[test]
    fn thm34ii_skips_when_noise_dominates() {
        let cfg = VerifyConfig { sigma: 2.0, ..VerifyConfig::for_theorem(TheoremId::Thm34ii) };
        let report = verify_theorem(TheoremId::Thm34ii, &cfg).unwrap();
        assert!(matches!(report.verdict, Verdict::HypothesesUnmet { .. }), "{report}");
        assert!(report.consistent());
    }

    #[test]
    fn reports_are_rule_consistent() {
        let est = McEstimate { mean: 1.05, std_error: 0.1, n_samples: 100 };
        let pass = VerificationReport::judged(
            "x",
            "demo",
            1.0,
            est.clone(),
            ToleranceRule::StdErrors { k: 3.0 },
            BTreeMap::new(),
        );
        assert!(pass.passed() && pass.consistent());
        let fail = VerificationReport::judged(
            "x",
            "demo",
            1.0,
            est,
            ToleranceRule::ExactRelative { tol: 1e-12 },
            BTreeMap::new(),
        );
        assert!(fail.failed() && fail.consistent());
    }

    #[test]
    fn slope_window_must_hold_two_points() {
        let mut cfg = pair_config(&VerifyConfig::for_theorem(TheoremId::Thm34i), Scheme::SemiExact);
        cfg.slope_window = (1.0, 1.0001);
        cfg.runs = 2;
        cfg.steps = 200;
        assert!(matches!(
            estimate_pairwise_statistic(&cfg, PairStatistic::LogDiffSlope),
            Err(VerifyError::DegenerateWindow(_, _))
        ));
    }

    #[test]
    fn noise_free_log_slope_is_minus_lambda() {
        let mut cfg = pair_config(
            &VerifyConfig { sigma: 0.0, ..VerifyConfig::for_theorem(TheoremId::Thm34i) },
            Scheme::SemiExact,
        );
        cfg.runs = 2;
        cfg.steps = 1000;
        cfg.slope_window = (1.0, 10.0);
        let est = estimate_pairwise_statistic(&cfg, PairStatistic::LogDiffSlope).unwrap();
        close(est.mean, oracle_continuous_exponent(1.0, 0.0), 1e-10);
    }

    #[test]
    fn beta_sweep_requires_two_entries() {
        let cfg = sweep_fixture(4);
        assert!(matches!(beta_sweep(&cfg, &[10.0]), Err(VerifyError::TooFewBetas(1))));
    }

    #[test]
    fn beta_sweep_on_sphere_always_succeeds() {
        let cfg = sweep_fixture(8);
        let rows = beta_sweep(&cfg, &[1.0, 10.0]).unwrap();
        assert_eq!(rows.len(), 2);
        for row in rows {
            assert_eq!(row.success_rate, 1.0, "beta={}", row.beta);
            assert!(row.median_final_value < 0.05);
        }
    }

    fn sweep_fixture(n_seeds: usize) -> SweepConfig {
        SweepConfig {
            params: Params {
                n_particles: 30,
                dim: 2,
                scheme: Scheme::SemiExact,
                ..Params::default()
            },
            objective: sphere_objective(2),
            init_low: vec![-1.0, -1.0],
            init_high: vec![1.0, 1.0],
            n_seeds,
            master_seed: 11,
            max_steps: 1200,
            diameter_tol: 1e-4,
            success_radius: 0.5,
            jobs: None,
        }
    }
}
