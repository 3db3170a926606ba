//! Test objectives with optimizer-facing metadata.
//!
//! An [`Objective`] bundles the evaluable function with its known minimizer,
//! minimum and a global bound on second derivatives where available; the
//! condition checks and success-rate reports consume the metadata. Objectives
//! are total on `R^d` — box constraints are the caller's concern.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use thiserror::Error;

type EvalFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Debug, Error, PartialEq)]
pub enum ObjectiveError {
    #[error("unknown objective '{0}' (see `list-objectives`)")]
    UnknownName(String),
    #[error("objective '{name}' requires parameter '{param}'")]
    MissingParam { name: &'static str, param: &'static str },
    #[error("known_min_point evaluates to {got}, declared minimum {declared}")]
    InconsistentMinimum { got: f64, declared: f64 },
    #[error("curvature bound must be nonnegative, got {0}")]
    NegativeCurvature(f64),
}

/// An evaluable objective `L` with optional exact-answer metadata.
#[derive(Clone)]
pub struct Objective {
    name: String,
    dim: usize,
    f: EvalFn,
    known_min_point: Option<Vec<f64>>,
    known_min_value: Option<f64>,
    /// Global bound on both the Hessian spectral norm and every diagonal
    /// second derivative.
    curvature_bound: Option<f64>,
}

impl std::fmt::Debug for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Objective")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("known_min_point", &self.known_min_point)
            .field("known_min_value", &self.known_min_value)
            .field("curvature_bound", &self.curvature_bound)
            .finish()
    }
}

impl Objective {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Objective {
            name: name.into(),
            dim,
            f: Arc::new(f),
            known_min_point: None,
            known_min_value: None,
            curvature_bound: None,
        }
    }

    /// Attaches the known minimizer and minimum, checking they agree.
    pub fn with_minimum(mut self, point: Vec<f64>, value: f64) -> Result<Self, ObjectiveError> {
        let got = (self.f)(&point);
        if (got - value).abs() > 1e-12 * (1.0 + value.abs()) {
            return Err(ObjectiveError::InconsistentMinimum { got, declared: value });
        }
        self.known_min_point = Some(point);
        self.known_min_value = Some(value);
        Ok(self)
    }

    pub fn with_curvature_bound(mut self, bound: f64) -> Result<Self, ObjectiveError> {
        if !bound.is_finite() || bound < 0.0 {
            return Err(ObjectiveError::NegativeCurvature(bound));
        }
        self.curvature_bound = Some(bound);
        Ok(self)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn known_min_point(&self) -> Option<&[f64]> {
        self.known_min_point.as_deref()
    }

    pub fn known_min_value(&self) -> Option<f64> {
        self.known_min_value
    }

    pub fn curvature_bound(&self) -> Option<f64> {
        self.curvature_bound
    }
}

/// Rastrigin function shifted so the unique global minimizer is `(B,...,B)`
/// with minimum value `C`:
/// `sum_l [(x_l-B)^2 - 10*cos(2*pi*(x_l-B)) + 10] + C`.
pub fn rastrigin(x: &[f64], shift: f64, offset: f64) -> f64 {
    let sum: f64 = x
        .iter()
        .map(|&xl| {
            let y = xl - shift;
            y * y - 10.0 * (2.0 * PI * y).cos() + 10.0
        })
        .sum();
    sum + offset
}

/// Convex baseline `sum_l x_l^2`.
pub fn sphere(x: &[f64]) -> f64 {
    x.iter().map(|&xl| xl * xl).sum()
}

/// `sup |d^2/dx_l^2|` of the Rastrigin summand `y^2 - 10 cos(2 pi y) + 10`,
/// attained where the cosine term is extremal. The Hessian is diagonal, so
/// this also bounds its spectral norm.
pub const RASTRIGIN_CURVATURE: f64 = 2.0 + 40.0 * PI * PI;

/// Registered objective names, alphabetical, with their parameter keys.
pub fn registry_names() -> Vec<(&'static str, &'static [&'static str])> {
    vec![("rastrigin", &["B", "C"]), ("sphere", &[])]
}

/// Builds a registered objective by name with metadata populated.
///
/// Parameter keys are the CLI contract: `rastrigin` takes `B` (minimizer
/// location per component) and `C` (minimum value); `sphere` takes none.
pub fn registry_get(
    name: &str,
    dim: usize,
    params: &BTreeMap<String, f64>,
) -> Result<Objective, ObjectiveError> {
    match name {
        "rastrigin" => {
            let shift = *params
                .get("B")
                .ok_or(ObjectiveError::MissingParam { name: "rastrigin", param: "B" })?;
            let offset = *params
                .get("C")
                .ok_or(ObjectiveError::MissingParam { name: "rastrigin", param: "C" })?;
            Objective::new("rastrigin", dim, move |x| rastrigin(x, shift, offset))
                .with_minimum(vec![shift; dim], offset)?
                .with_curvature_bound(RASTRIGIN_CURVATURE)
        }
        "sphere" => Objective::new("sphere", dim, sphere)
            .with_minimum(vec![0.0; dim], 0.0)?
            .with_curvature_bound(2.0),
        other => Err(ObjectiveError::UnknownName(other.to_string())),
    }
}
