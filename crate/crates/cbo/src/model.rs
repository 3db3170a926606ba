//! Model parameters and particle state.
//!
//! The optimizer evolves `N` particles in `R^d` toward a Gibbs-weighted
//! average of their own positions. Everything here is an immutable value
//! type; stepping produces a fresh [`Ensemble`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// How the per-step standard normals are shared across particles.
///
/// In the common mode one draw per dimension is applied to every particle,
/// which is what makes pairwise differences evolve by a single multiplicative
/// factor per component. Independent mode draws one normal per particle and
/// dimension instead and is offered for experimentation only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    #[default]
    Common,
    Independent,
}

/// Time-stepping scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Explicit update `X += -lambda*h*(X - Xc) + sigma*sqrt(h)*(X - Xc)*Z`.
    Euler,
    /// Two-step scheme: exact exponential relaxation toward the consensus
    /// point, then a componentwise noise kick measured from the same point.
    #[default]
    SemiExact,
    /// Euler drift with the noise term removed; needs no randomness source.
    Deterministic,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Euler => "euler",
            Scheme::SemiExact => "semi_exact",
            Scheme::Deterministic => "deterministic",
        }
    }
}

impl NoiseMode {
    pub fn as_str(self) -> &'static str {
        match self {
            NoiseMode::Common => "common",
            NoiseMode::Independent => "independent",
        }
    }
}

/// Model and scheme constants for one run.
///
/// `lambda` is the drift rate, `sigma` the noise intensity, `beta` the
/// inverse temperature of the Gibbs weights and `h` the time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub lambda: f64,
    pub sigma: f64,
    pub beta: f64,
    pub h: f64,
    pub n_particles: usize,
    pub dim: usize,
    pub noise_mode: NoiseMode,
    pub scheme: Scheme,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParamError {
    #[error("lambda must be positive and finite, got {0}")]
    BadLambda(String),
    #[error("sigma must be nonnegative and finite, got {0}")]
    BadSigma(String),
    #[error("beta must be positive and finite, got {0}")]
    BadBeta(String),
    #[error("h must be positive and finite, got {0}")]
    BadStep(String),
    #[error("n_particles must be at least 1")]
    NoParticles,
    #[error("dim must be at least 1")]
    NoDimensions,
}

impl Params {
    /// Checks the hard domain constraints and returns the parameters
    /// unchanged. Scheme-quality conditions (step-size bounds, `2*lambda >
    /// sigma^2`) are reported by `diagnostics::check_conditions`, not here.
    pub fn validated(self) -> Result<Self, ParamError> {
        if !self.lambda.is_finite() || self.lambda <= 0.0 {
            return Err(ParamError::BadLambda(format!("{}", self.lambda)));
        }
        if !self.sigma.is_finite() || self.sigma < 0.0 {
            return Err(ParamError::BadSigma(format!("{}", self.sigma)));
        }
        if !self.beta.is_finite() || self.beta <= 0.0 {
            return Err(ParamError::BadBeta(format!("{}", self.beta)));
        }
        if !self.h.is_finite() || self.h <= 0.0 {
            return Err(ParamError::BadStep(format!("{}", self.h)));
        }
        if self.n_particles == 0 {
            return Err(ParamError::NoParticles);
        }
        if self.dim == 0 {
            return Err(ParamError::NoDimensions);
        }
        Ok(self)
    }

    /// Noise intensity actually applied by the configured scheme: the
    /// deterministic scheme forces it to zero regardless of `sigma`.
    pub fn effective_sigma(&self) -> f64 {
        match self.scheme {
            Scheme::Deterministic => 0.0,
            _ => self.sigma,
        }
    }
}

impl Default for Params {
    /// The reference configuration used throughout: `lambda=1`, `sigma=1`,
    /// `beta=10`, `h=0.01`, 100 particles in 2 dimensions, common noise.
    fn default() -> Self {
        Params {
            lambda: 1.0,
            sigma: 1.0,
            beta: 10.0,
            h: 0.01,
            n_particles: 100,
            dim: 2,
            noise_mode: NoiseMode::Common,
            scheme: Scheme::SemiExact,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EnsembleError {
    #[error("position buffer has {len} entries, expected {expected} ({n} x {d})")]
    ShapeMismatch { len: usize, expected: usize, n: usize, d: usize },
    #[error("particle {particle} component {component} is not finite")]
    NonFinite { particle: usize, component: usize },
}

/// Positions of all particles at one step, stored row-major (`N x d`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    positions: Vec<f64>,
    n_particles: usize,
    dim: usize,
    step: u64,
}

impl Ensemble {
    /// Wraps a row-major buffer, checking shape and finiteness.
    pub fn new(
        positions: Vec<f64>,
        n_particles: usize,
        dim: usize,
    ) -> Result<Self, EnsembleError> {
        let expected = n_particles * dim;
        if positions.len() != expected {
            return Err(EnsembleError::ShapeMismatch {
                len: positions.len(),
                expected,
                n: n_particles,
                d: dim,
            });
        }
        for (k, &x) in positions.iter().enumerate() {
            if !x.is_finite() {
                return Err(EnsembleError::NonFinite {
                    particle: k / dim,
                    component: k % dim,
                });
            }
        }
        Ok(Ensemble { positions, n_particles, dim, step: 0 })
    }

    /// Successor state holding `positions`, with the step index advanced.
    /// Callers guarantee the buffer has the same shape as `self`.
    pub(crate) fn advanced(&self, positions: Vec<f64>) -> Self {
        debug_assert_eq!(positions.len(), self.positions.len());
        Ensemble {
            positions,
            n_particles: self.n_particles,
            dim: self.dim,
            step: self.step + 1,
        }
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// Simulation time `t = step * h`, recomputed from the step index so the
    /// identity holds exactly.
    pub fn time(&self, h: f64) -> f64 {
        self.step as f64 * h
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn particles(&self) -> impl Iterator<Item = &[f64]> {
        self.positions.chunks_exact(self.dim)
    }

    /// Componentwise ensemble mean.
    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        for p in self.particles() {
            for (m, &x) in mean.iter_mut().zip(p) {
                *m += x;
            }
        }
        let inv = 1.0 / self.n_particles as f64;
        for m in &mut mean {
            *m *= inv;
        }
        mean
    }

    /// Per-component minimum and maximum over all particles.
    pub fn component_extremes(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for p in self.particles() {
            for l in 0..self.dim {
                lo[l] = lo[l].min(p[l]);
                hi[l] = hi[l].max(p[l]);
            }
        }
        (lo, hi)
    }

    /// Largest pairwise Euclidean distance, by exact O(N^2) scan.
    pub fn diameter(&self) -> f64 {
        let mut best = 0.0f64;
        for i in 0..self.n_particles {
            let pi = self.particle(i);
            for j in (i + 1)..self.n_particles {
                let pj = self.particle(j);
                let sq: f64 = pi
                    .iter()
                    .zip(pj)
                    .map(|(a, b)| {
                        let d = a - b;
                        d * d
                    })
                    .sum();
                best = best.max(sq);
            }
        }
        best.sqrt()
    }
}
