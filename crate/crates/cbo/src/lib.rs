//! Consensus-based optimization (CBO): gradient-free global minimization by
//! interacting particles.
//!
//! Particles drift toward a Gibbs-weighted average of their positions
//! (weights `exp(-beta * L)`) while a componentwise multiplicative noise,
//! shared across particles by default, rescales their deviations. Pairwise
//! differences then contract at known closed-form rates, which makes the
//! whole scheme unusually testable: the [`verify`] module re-derives those
//! rates from simulation and compares them against the closed forms under
//! pinned tolerance rules.
//!
//! Modules:
//! - [`model`], [`rng`]: parameter/state types and the deterministic
//!   randomness contract.
//! - [`gibbs`]: stabilized weights, consensus point, log Gibbs mass.
//! - [`objectives`]: benchmark objectives with exact-answer metadata.
//! - [`dynamics`]: the Euler, semi-exact and deterministic steppers plus the
//!   run loop.
//! - [`diagnostics`]: per-step observables and parameter-regime checks.
//! - [`verify`]: closed-form oracles and the MC harness.
//! - [`exec`]: ordered fan-out of independent runs (rayon behind the
//!   `parallel` feature).
//! - [`config`], [`cli`]: the command-line front end.

pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod dynamics;
pub mod exec;
pub mod gibbs;
pub mod model;
pub mod objectives;
pub mod rng;
pub mod verify;

pub use model::{Ensemble, NoiseMode, Params, Scheme};
pub use objectives::Objective;
pub use rng::RngStream;
