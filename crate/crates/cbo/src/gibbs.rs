//! Gibbs weights and the weighted consensus point.
//!
//! Particle `k` receives weight `psi_k = exp(-beta*L_k) / sum_j
//! exp(-beta*L_j)`. Evaluating that literally underflows once `beta*L`
//! reaches a few hundred, so every exponent is shifted by the minimum value
//! first; the shift cancels in the normalization and is exact in real
//! arithmetic.

use serde::Serialize;
use thiserror::Error;

use crate::model::Ensemble;

#[derive(Debug, Error, PartialEq)]
pub enum GibbsError {
    #[error("objective value at index {index} is not finite ({value})")]
    NonFiniteValue { index: usize, value: f64 },
    #[error("empty value vector")]
    Empty,
    #[error("got {weights} weights for {particles} particles")]
    SizeMismatch { weights: usize, particles: usize },
}

/// Weights, consensus point and log Gibbs mass of one ensemble snapshot.
#[derive(Debug, Clone, Serialize)]
pub struct GibbsSummary {
    pub weights: Vec<f64>,
    pub consensus_point: Vec<f64>,
    /// `log[(1/N) * sum_i exp(-beta*L_i)]`.
    pub log_mass: f64,
}

fn check_values(values: &[f64]) -> Result<f64, GibbsError> {
    if values.is_empty() {
        return Err(GibbsError::Empty);
    }
    let mut min = f64::INFINITY;
    for (index, &value) in values.iter().enumerate() {
        if !value.is_finite() {
            return Err(GibbsError::NonFiniteValue { index, value });
        }
        min = min.min(value);
    }
    Ok(min)
}

/// Neumaier-compensated sum; keeps the exp sums accurate enough that the
/// Laplace sandwich below holds with only ulp-level slack.
fn compensated_sum(terms: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for t in terms {
        let new = sum + t;
        if sum.abs() >= t.abs() {
            comp += (sum - new) + t;
        } else {
            comp += (t - new) + sum;
        }
        sum = new;
    }
    sum + comp
}

/// Normalized Gibbs weights `psi_k` of the objective values at inverse
/// temperature `beta`, stabilized by the min shift. Weights are nonnegative
/// and sum to 1 up to roundoff; ties in the minimum need no tie-breaking
/// because the shift uses the value, not an index.
pub fn gibbs_weights(values: &[f64], beta: f64) -> Result<Vec<f64>, GibbsError> {
    let min = check_values(values)?;
    let mut weights: Vec<f64> = values.iter().map(|&v| (-beta * (v - min)).exp()).collect();
    let total = compensated_sum(weights.iter().copied());
    for w in &mut weights {
        *w /= total;
    }
    Ok(weights)
}

/// Weighted average of particle positions. The result is a convex
/// combination, so each component is clamped into the per-component particle
/// range, which roundoff could otherwise leave by an ulp.
pub fn consensus_point(ensemble: &Ensemble, weights: &[f64]) -> Result<Vec<f64>, GibbsError> {
    if weights.len() != ensemble.n_particles() {
        return Err(GibbsError::SizeMismatch {
            weights: weights.len(),
            particles: ensemble.n_particles(),
        });
    }
    let dim = ensemble.dim();
    let mut point = vec![0.0; dim];
    for (p, &w) in ensemble.particles().zip(weights) {
        for (c, &x) in point.iter_mut().zip(p) {
            *c += w * x;
        }
    }
    let (lo, hi) = ensemble.component_extremes();
    for l in 0..dim {
        point[l] = point[l].clamp(lo[l], hi[l]);
    }
    Ok(point)
}

/// `log[(1/N) * sum_i exp(-beta*L_i)]` through the same shifted summation.
///
/// `-log_mass / beta` is squeezed between `min_i L_i` and `min_i L_i +
/// log(N)/beta`, which is how the Gibbs mass tracks the running minimum.
pub fn gibbs_mass_log(values: &[f64], beta: f64) -> Result<f64, GibbsError> {
    let min = check_values(values)?;
    let sum = compensated_sum(values.iter().map(|&v| (-beta * (v - min)).exp()));
    Ok(-beta * min + (sum.ln() - (values.len() as f64).ln()))
}

/// Weights, consensus point and log mass in one pass over the values.
pub fn summarize(
    ensemble: &Ensemble,
    values: &[f64],
    beta: f64,
) -> Result<GibbsSummary, GibbsError> {
    if values.len() != ensemble.n_particles() {
        return Err(GibbsError::SizeMismatch {
            weights: values.len(),
            particles: ensemble.n_particles(),
        });
    }
    let weights = gibbs_weights(values, beta)?;
    let consensus_point = consensus_point(ensemble, &weights)?;
    let log_mass = gibbs_mass_log(values, beta)?;
    Ok(GibbsSummary { weights, consensus_point, log_mass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn equal_values_give_uniform_weights() {
        for n in [1usize, 2, 7, 100] {
            let w = gibbs_weights(&vec![3.25; n], 10.0).unwrap();
            for wk in w {
                assert_close(wk, 1.0 / n as f64, 1e-15);
            }
        }
    }

    #[test]
    fn vanishing_beta_flattens_weights() {
        let w = gibbs_weights(&[0.0, 5.0], 1e-12).unwrap();
        assert_close(w[0], 0.5, 1e-10);
        assert_close(w[1], 0.5, 1e-10);
    }

    #[test]
    fn two_thirds_one_third() {
        let w = gibbs_weights(&[0.0, std::f64::consts::LN_2], 1.0).unwrap();
        assert_close(w[0], 2.0 / 3.0, 1e-15);
        assert_close(w[1], 1.0 / 3.0, 1e-15);
    }

    #[test]
    fn nan_reported_with_index() {
        let err = gibbs_weights(&[0.0, 1.0, f64::NAN, 2.0], 1.0).unwrap_err();
        assert!(matches!(err, GibbsError::NonFiniteValue { index: 2, .. }));
        let err = gibbs_mass_log(&[f64::INFINITY], 1.0).unwrap_err();
        assert!(matches!(err, GibbsError::NonFiniteValue { index: 0, .. }));
    }

    #[test]
    fn consensus_of_identical_points_is_that_point() {
        let e = Ensemble::new(vec![1.5, -2.25, 1.5, -2.25, 1.5, -2.25], 3, 2).unwrap();
        let w = gibbs_weights(&[0.7, 0.7, 0.7], 4.0).unwrap();
        let c = consensus_point(&e, &w).unwrap();
        assert_eq!(c, vec![1.5, -2.25]);
    }

    #[test]
    fn consensus_midpoint() {
        let e = Ensemble::new(vec![0.0, 0.0, 2.0, 4.0], 2, 2).unwrap();
        let c = consensus_point(&e, &[0.5, 0.5]).unwrap();
        assert_eq!(c, vec![1.0, 2.0]);
    }

    #[test]
    fn one_hot_weight_selects_particle() {
        let e = Ensemble::new(vec![0.25, -1.0, 3.5, 0.125, -7.0, 2.0], 3, 2).unwrap();
        let c = consensus_point(&e, &[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(c, e.particle(1));
    }

    #[test]
    fn consensus_size_mismatch() {
        let e = Ensemble::new(vec![0.0, 0.0], 1, 2).unwrap();
        assert!(matches!(
            consensus_point(&e, &[0.5, 0.5]),
            Err(GibbsError::SizeMismatch { .. })
        ));
    }

    #[test]
    fn mass_log_of_constant_values() {
        assert_close(gibbs_mass_log(&[0.3, 0.3, 0.3], 10.0).unwrap(), -3.0, 1e-12);
        assert_eq!(gibbs_mass_log(&[2.0; 5], 7.0).unwrap(), -14.0);
    }

    #[test]
    fn mass_log_survives_huge_spread() {
        // second term underflows to zero after the shift: log((1+0)/2)
        let got = gibbs_mass_log(&[0.0, 1e4], 1.0).unwrap();
        assert_close(got, -std::f64::consts::LN_2, 1e-12);
    }

    #[test]
    fn monotone_in_value() {
        let values = [0.4, 0.1, 2.0, -3.0, 0.1000001];
        let w = gibbs_weights(&values, 3.0).unwrap();
        for i in 0..values.len() {
            for j in 0..values.len() {
                if values[i] < values[j] {
                    assert!(w[i] > w[j], "psi not monotone at ({i},{j})");
                }
            }
        }
    }

    proptest! {
        // Shift invariance is algebraically exact; dyadic grids make the
        // shifted inputs exact in floating point too, so the comparison can
        // be bitwise.
        #[test]
        fn shift_invariance_on_dyadic_grid(
            ks in proptest::collection::vec(-(1i64 << 40)..(1i64 << 40), 1..40),
            kc in -(1i64 << 40)..(1i64 << 40),
            scale_exp in -30i32..10,
            beta in 1e-6f64..1e6,
        ) {
            let scale = (scale_exp as f64).exp2();
            let values: Vec<f64> = ks.iter().map(|&k| k as f64 * scale).collect();
            let shift = kc as f64 * scale;
            let shifted: Vec<f64> = values.iter().map(|&v| v + shift).collect();
            let a = gibbs_weights(&values, beta).unwrap();
            let b = gibbs_weights(&shifted, beta).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }

        #[test]
        fn weights_normalized_and_finite_under_extreme_spread(
            base in proptest::collection::vec(0.0f64..1.0, 2..60),
            spread in 1e-6f64..1e4,
            beta_scale in 0.0f64..1.0,
        ) {
            // beta * range(values) covers (0, 1e4]
            let values: Vec<f64> = base.iter().map(|b| b * spread).collect();
            let beta = beta_scale * 1e4 / spread + 1e-9;
            let w = gibbs_weights(&values, beta).unwrap();
            let sum: f64 = w.iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
            for wk in &w {
                prop_assert!(wk.is_finite() && *wk >= 0.0);
            }
        }

        #[test]
        fn laplace_sandwich(
            values in proptest::collection::vec(-1e3f64..1e3, 1..50),
            beta in 1e-6f64..1e3,
        ) {
            let n = values.len() as f64;
            let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let m = gibbs_mass_log(&values, beta).unwrap();
            let v = -m / beta;
            let slack = 1e-12 * (1.0 + min.abs());
            prop_assert!(v >= min - slack, "below min: {v} < {min}");
            prop_assert!(v <= min + n.ln() / beta + slack, "above min + logN/beta");
        }

        #[test]
        fn consensus_in_particle_box(
            flat in proptest::collection::vec(-1e3f64..1e3, 2..60),
            values_seed in proptest::collection::vec(-5.0f64..5.0, 30),
            beta in 1e-3f64..1e3,
        ) {
            let dim = 2usize;
            let n = flat.len() / dim;
            prop_assume!(n >= 1);
            let e = Ensemble::new(flat[..n * dim].to_vec(), n, dim).unwrap();
            let values: Vec<f64> = (0..n).map(|i| values_seed[i % values_seed.len()]).collect();
            let w = gibbs_weights(&values, beta).unwrap();
            let c = consensus_point(&e, &w).unwrap();
            let (lo, hi) = e.component_extremes();
            for l in 0..dim {
                prop_assert!(c[l] >= lo[l] && c[l] <= hi[l]);
            }
        }
    }
}
