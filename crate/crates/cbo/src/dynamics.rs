//! Time stepping and full trajectories.
//!
//! Each step evaluates the objective once per particle, forms the Gibbs
//! summary, and moves every particle relative to the consensus point. With
//! common noise the same per-dimension normal multiplies every particle's
//! deviation, so all pairwise differences contract by one shared factor per
//! component — the property the verification harness leans on.
//!
//! One run is strictly sequential; independent runs share nothing and may
//! execute concurrently, each owning its [`RngStream`].

use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::diagnostics::{self, StepRecord};
use crate::gibbs::{self, GibbsError};
use crate::model::{Ensemble, Params, Scheme};
use crate::objectives::Objective;
use crate::rng::{draw_step_noise, NoiseBlock, RngStream};

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("objective returned {value} for particle {particle} at step {step}")]
    ObjectiveNonFinite { step: u64, particle: usize, value: f64 },
    #[error("ensemble is {n}x{d} but params specify {expected_n}x{expected_d}")]
    ShapeMismatch { n: usize, d: usize, expected_n: usize, expected_d: usize },
    #[error("scheme '{0}' needs a randomness source")]
    MissingRng(&'static str),
    #[error("max_steps must be at least 1")]
    ZeroMaxSteps,
    #[error("init box degenerate in component {component}: low {low} >= high {high}")]
    DegenerateBox { component: usize, low: f64, high: f64 },
    #[error(transparent)]
    Gibbs(#[from] GibbsError),
}

/// When to stop a run. The diameter tolerance is checked on the current
/// state before each step, so `diameter_tol = 0` never fires.
#[derive(Debug, Clone)]
pub struct StopCriteria {
    pub max_steps: u64,
    pub diameter_tol: f64,
    pub wall_limit: Option<Duration>,
}

impl StopCriteria {
    pub fn max_steps(max_steps: u64) -> Self {
        StopCriteria { max_steps, diameter_tol: 0.0, wall_limit: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxSteps,
    DiameterBelowTol,
    WallLimit,
}

/// A completed run: per-step records (every `record_stride` steps plus the
/// final state), the final ensemble, and why it stopped.
#[derive(Debug)]
pub struct Trajectory {
    pub records: Vec<StepRecord>,
    pub final_ensemble: Ensemble,
    pub stop_reason: StopReason,
}

impl Trajectory {
    pub fn final_record(&self) -> &StepRecord {
        self.records.last().expect("trajectory always records the final step")
    }
}

fn evaluate(e: &Ensemble, objective: &Objective) -> Result<Vec<f64>, DynamicsError> {
    let mut values = Vec::with_capacity(e.n_particles());
    for (particle, p) in e.particles().enumerate() {
        let value = objective.eval(p);
        if !value.is_finite() {
            return Err(DynamicsError::ObjectiveNonFinite { step: e.step(), particle, value });
        }
        values.push(value);
    }
    Ok(values)
}

/// Position update shared by all schemes. `sig_sqrt_h` is zero for the
/// deterministic scheme; `noise` is `None` only when the kick is zero.
fn advance(
    e: &Ensemble,
    cons: &[f64],
    scheme: Scheme,
    lambda_h: f64,
    sig_sqrt_h: f64,
    noise: Option<&NoiseBlock>,
) -> Vec<f64> {
    let dim = e.dim();
    let mut next = Vec::with_capacity(e.positions().len());
    let kick = |i: usize, l: usize| match noise {
        Some(nb) => sig_sqrt_h * nb.value(i, l, dim),
        None => 0.0,
    };
    match scheme {
        Scheme::Euler | Scheme::Deterministic => {
            for (i, p) in e.particles().enumerate() {
                for (l, &x) in p.iter().enumerate() {
                    let dev = x - cons[l];
                    next.push(x + dev * (kick(i, l) - lambda_h));
                }
            }
        }
        Scheme::SemiExact => {
            let relax = (-lambda_h).exp();
            for (i, p) in e.particles().enumerate() {
                for (l, &x) in p.iter().enumerate() {
                    let hat = cons[l] + (x - cons[l]) * relax;
                    next.push(hat + (hat - cons[l]) * kick(i, l));
                }
            }
        }
    }
    next
}

fn step_with(
    e: &Ensemble,
    p: &Params,
    objective: &Objective,
    scheme: Scheme,
    sigma: f64,
    rng: Option<&mut RngStream>,
) -> Result<Ensemble, DynamicsError> {
    let values = evaluate(e, objective)?;
    let summary = gibbs::summarize(e, &values, p.beta)?;
    let noise = match (scheme, rng) {
        (Scheme::Deterministic, _) => None,
        (_, Some(rng)) => Some(draw_step_noise(rng, p)),
        (_, None) => return Err(DynamicsError::MissingRng(scheme.as_str())),
    };
    let next = advance(e, &summary.consensus_point, scheme, p.lambda * p.h, sigma * p.h.sqrt(), noise.as_ref());
    Ok(e.advanced(next))
}

/// One explicit step `X += (X - Xc) * (sigma*sqrt(h)*Z - lambda*h)`, with the
/// consensus point from the current objective values.
pub fn step_euler(
    e: &Ensemble,
    p: &Params,
    objective: &Objective,
    rng: &mut RngStream,
) -> Result<Ensemble, DynamicsError> {
    step_with(e, p, objective, Scheme::Euler, p.sigma, Some(rng))
}

/// One two-stage step: exact relaxation `Xhat = Xc + (X - Xc)*exp(-lambda*h)`
/// followed by the kick `X' = Xhat + sigma*sqrt(h)*(Xhat - Xc)*Z`, both
/// stages measured from the same consensus point.
pub fn step_semi_exact(
    e: &Ensemble,
    p: &Params,
    objective: &Objective,
    rng: &mut RngStream,
) -> Result<Ensemble, DynamicsError> {
    step_with(e, p, objective, Scheme::SemiExact, p.sigma, Some(rng))
}

/// The Euler step with the noise term removed; needs no randomness source.
pub fn step_deterministic(
    e: &Ensemble,
    p: &Params,
    objective: &Objective,
) -> Result<Ensemble, DynamicsError> {
    step_with(e, p, objective, Scheme::Deterministic, 0.0, None)
}

/// One step under `p.scheme`. `rng` may be `None` only for the deterministic
/// scheme.
pub fn step(
    e: &Ensemble,
    p: &Params,
    objective: &Objective,
    rng: Option<&mut RngStream>,
) -> Result<Ensemble, DynamicsError> {
    match (p.scheme, rng) {
        (Scheme::Deterministic, _) => step_deterministic(e, p, objective),
        (scheme, Some(rng)) => step_with(e, p, objective, scheme, p.effective_sigma(), Some(rng)),
        (scheme, None) => Err(DynamicsError::MissingRng(scheme.as_str())),
    }
}

/// Iterates the configured scheme until a stop criterion fires.
///
/// Diagnostics are recorded every `record_stride` steps and always for the
/// final state. `rng` may be `None` only for the deterministic scheme.
pub fn run(
    init: Ensemble,
    p: &Params,
    objective: &Objective,
    stop: &StopCriteria,
    record_stride: u64,
    mut rng: Option<&mut RngStream>,
) -> Result<Trajectory, DynamicsError> {
    if stop.max_steps == 0 {
        return Err(DynamicsError::ZeroMaxSteps);
    }
    if init.n_particles() != p.n_particles || init.dim() != p.dim {
        return Err(DynamicsError::ShapeMismatch {
            n: init.n_particles(),
            d: init.dim(),
            expected_n: p.n_particles,
            expected_d: p.dim,
        });
    }
    let stride = record_stride.max(1);
    let sigma = p.effective_sigma();
    let started = Instant::now();
    let mut e = init;
    let mut records = Vec::new();
    loop {
        let values = evaluate(&e, objective)?;
        let summary = gibbs::summarize(&e, &values, p.beta)?;
        let rec = diagnostics::record(&e, &summary, objective, p.h);
        let diameter = rec.diameter;
        let on_stride = e.step().is_multiple_of(stride);
        let stop_reason = if diameter < stop.diameter_tol {
            Some(StopReason::DiameterBelowTol)
        } else if e.step() >= stop.max_steps {
            Some(StopReason::MaxSteps)
        } else if stop.wall_limit.is_some_and(|limit| started.elapsed() >= limit) {
            Some(StopReason::WallLimit)
        } else {
            None
        };
        if on_stride || stop_reason.is_some() {
            records.push(rec);
        }
        if let Some(stop_reason) = stop_reason {
            return Ok(Trajectory { records, final_ensemble: e, stop_reason });
        }
        let noise = match (p.scheme, rng.as_deref_mut()) {
            (Scheme::Deterministic, _) => None,
            (_, Some(rng)) => Some(draw_step_noise(rng, p)),
            (scheme, None) => return Err(DynamicsError::MissingRng(scheme.as_str())),
        };
        let next = advance(
            &e,
            &summary.consensus_point,
            p.scheme,
            p.lambda * p.h,
            sigma * p.h.sqrt(),
            noise.as_ref(),
        );
        e = e.advanced(next);
    }
}

/// `N x d` i.i.d. uniform coordinates in the box `[low, high)`, drawn
/// particle-major.
pub fn init_uniform(
    p: &Params,
    low: &[f64],
    high: &[f64],
    rng: &mut RngStream,
) -> Result<Ensemble, DynamicsError> {
    for l in 0..p.dim {
        let ordered = low[l].is_finite() && high[l].is_finite() && low[l] < high[l];
        if !ordered {
            return Err(DynamicsError::DegenerateBox { component: l, low: low[l], high: high[l] });
        }
    }
    let mut positions = Vec::with_capacity(p.n_particles * p.dim);
    for _ in 0..p.n_particles {
        for l in 0..p.dim {
            positions.push(rng.uniform(low[l], high[l]));
        }
    }
    Ok(Ensemble::new(positions, p.n_particles, p.dim).expect("finite uniform draws"))
}

/// Uniform ensemble in `[-half_width, half_width]^d` with the point set
/// mirrored through the origin (pairs adjacent, plus one particle at 0 for
/// odd `N`), so the ensemble mean is exactly zero. With an even objective the
/// consensus point then stays exactly at the origin, which keeps contraction
/// roundoff proportional to the shrinking scale — long exactness checks need
/// this.
pub fn init_mirrored(p: &Params, half_width: f64, rng: &mut RngStream) -> Ensemble {
    let mut positions = Vec::with_capacity(p.n_particles * p.dim);
    for _ in 0..p.n_particles / 2 {
        let point: Vec<f64> =
            (0..p.dim).map(|_| rng.uniform(-half_width, half_width)).collect();
        positions.extend(point.iter().copied());
        positions.extend(point.iter().map(|x| -x));
    }
    if p.n_particles % 2 == 1 {
        positions.extend(std::iter::repeat_n(0.0, p.dim));
    }
    Ensemble::new(positions, p.n_particles, p.dim).expect("finite draws")
}
