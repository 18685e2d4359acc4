//! Exponential componentwise envelopes for `u' = A u` with Metzler, Hurwitz
//! `A`, and the finite-time convergence search built on them.
//!
//! For a decay rate `alpha` with `A + alpha·I` Hurwitz, every solution with
//! `0 ⪯ u(0) ⪯ theta_bar` satisfies `u_i(t) ≤ gamma_i · exp(-alpha·t)`,
//! where `gamma_i` is the infimum over `r ≻ 0` of the rational function
//!
//! ```text
//! Gamma_i(r) = (a · r) / (b · r),   a = N theta_bar,   b = N e_i,
//! N = -(A + alpha·I)⁻¹ ⪰ 0.
//! ```
//!
//! The infimum of a ratio of nonnegative linear forms over the open orthant
//! is attained along a coordinate ray, so `gamma_i = min { a_j / b_j : b_j > 0 }`.

use crate::linalg::{DenseMatrix, DenseVector, LinalgError};
use crate::stability::{alpha_max, hurwitz_negated_inverse, StabilityError};

/// Denominator coefficients at or below this are excluded from the minimum.
pub const INDEX_SET_THRESHOLD: f64 = 1e-12;

/// Default increment of the decay-rate grid.
pub const DEFAULT_ALPHA_STEP: f64 = 0.001;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnvelopeError {
    #[error("decay rate {alpha} is too large: A + alpha I is not Hurwitz")]
    DecayRateTooLarge { alpha: f64 },
    #[error("decay rate must be positive, got {0}")]
    NonpositiveDecayRate(f64),
    #[error("no positive denominator coefficient for component {component}")]
    EmptyIndexSet { component: usize },
    #[error("threshold for component {component} must be positive, got {value}")]
    NonpositiveThreshold { component: usize, value: f64 },
    #[error("theta_bar must be nonnegative (component {component} is {value})")]
    NegativeInitialBound { component: usize, value: f64 },
    #[error("alpha grid is empty: step {step} exceeds the largest admissible decay rate")]
    EmptyAlphaGrid { step: f64 },
    #[error(transparent)]
    Stability(#[from] StabilityError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// `u(t) ⪯ gamma · exp(-alpha t)` for every admissible initial condition.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentialEstimate {
    pub alpha: f64,
    pub gamma: DenseVector,
}

impl ExponentialEstimate {
    pub fn bound_at(&self, t: f64) -> DenseVector {
        self.gamma.scale((-self.alpha * t).exp())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceResult {
    /// Time after which `u(t) ⪯ delta`: the largest per-component time.
    pub t: f64,
    pub per_component_t: DenseVector,
    /// Decay rate at which each per-component time was attained.
    pub per_component_alpha: DenseVector,
}

/// `-(A + alpha·I)⁻¹`, or `DecayRateTooLarge` if `A + alpha·I` fails the
/// Hurwitz test.
fn shifted_negated_inverse(a: &DenseMatrix, alpha: f64) -> Result<DenseMatrix, EnvelopeError> {
    let shifted = a.shift_diagonal(alpha)?;
    hurwitz_negated_inverse(&shifted).ok_or(EnvelopeError::DecayRateTooLarge { alpha })
}

/// `min_{j ∈ J} (N theta)_j / N_{j,i}` for a precomputed `N`; ties go to the
/// smallest `j`.
fn gamma_from_inverse(
    neg_inv: &DenseMatrix,
    numerators: &DenseVector,
    i: usize,
) -> Result<f64, EnvelopeError> {
    let mut best: Option<f64> = None;
    for j in 0..neg_inv.rows() {
        let b = neg_inv[(j, i)];
        if b > INDEX_SET_THRESHOLD {
            let ratio = numerators[j] / b;
            if best.is_none_or(|cur| ratio < cur) {
                best = Some(ratio);
            }
        }
    }
    best.ok_or(EnvelopeError::EmptyIndexSet { component: i })
}

fn check_theta(theta_bar: &DenseVector) -> Result<(), EnvelopeError> {
    match theta_bar.iter().position(|&v| v < 0.0) {
        Some(component) => Err(EnvelopeError::NegativeInitialBound {
            component,
            value: theta_bar[component],
        }),
        None => Ok(()),
    }
}

/// Smallest factor `gamma_i` with `u_i(t) ≤ gamma_i exp(-alpha t)` for a
/// fixed decay rate.
pub fn gamma_component(
    a: &DenseMatrix,
    alpha: f64,
    theta_bar: &DenseVector,
    i: usize,
) -> Result<f64, EnvelopeError> {
    if !(alpha > 0.0) {
        return Err(EnvelopeError::NonpositiveDecayRate(alpha));
    }
    check_theta(theta_bar)?;
    let neg_inv = shifted_negated_inverse(a, alpha)?;
    let numerators = neg_inv.mul_vec(theta_bar)?;
    gamma_from_inverse(&neg_inv, &numerators, i)
}

/// All components of the optimized envelope at decay rate `alpha`.
pub fn exponential_estimate(
    a: &DenseMatrix,
    alpha: f64,
    theta_bar: &DenseVector,
) -> Result<ExponentialEstimate, EnvelopeError> {
    if !(alpha > 0.0) {
        return Err(EnvelopeError::NonpositiveDecayRate(alpha));
    }
    check_theta(theta_bar)?;
    let neg_inv = shifted_negated_inverse(a, alpha)?;
    let numerators = neg_inv.mul_vec(theta_bar)?;
    let gamma = (0..a.rows())
        .map(|i| gamma_from_inverse(&neg_inv, &numerators, i))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ExponentialEstimate {
        alpha,
        gamma: DenseVector::new(gamma)?,
    })
}

/// Smallest `t ≥ 0` with `gamma_i · exp(-alpha t) ≤ delta_i`.
pub fn time_to_threshold(gamma_i: f64, delta_i: f64, alpha: f64) -> Result<f64, EnvelopeError> {
    if !(delta_i > 0.0) {
        return Err(EnvelopeError::NonpositiveThreshold {
            component: 0,
            value: delta_i,
        });
    }
    if !(alpha > 0.0) {
        return Err(EnvelopeError::NonpositiveDecayRate(alpha));
    }
    if gamma_i <= delta_i {
        Ok(0.0)
    } else {
        Ok(-(delta_i / gamma_i).ln() / alpha)
    }
}

/// Finite time `T` after which every solution of `u' = A u` started in
/// `[0, theta_bar]` stays in `[0, delta]`.
///
/// Each component sweeps the decay-rate grid `alpha_step, 2·alpha_step, …,
/// alpha_max` and keeps the earliest crossing time; `T` is the largest of
/// those per-component minima.
pub fn finite_time(
    a: &DenseMatrix,
    theta_bar: &DenseVector,
    delta: &DenseVector,
    alpha_step: f64,
) -> Result<ConvergenceResult, EnvelopeError> {
    let n = a.rows();
    if theta_bar.dim() != n {
        return Err(LinalgError::DimensionMismatch {
            expected: n,
            actual: theta_bar.dim(),
        }
        .into());
    }
    if delta.dim() != n {
        return Err(LinalgError::DimensionMismatch {
            expected: n,
            actual: delta.dim(),
        }
        .into());
    }
    if let Some(component) = delta.iter().position(|&d| !(d > 0.0)) {
        return Err(EnvelopeError::NonpositiveThreshold {
            component,
            value: delta[component],
        });
    }
    check_theta(theta_bar)?;

    let top = alpha_max(a, alpha_step)?;
    let steps = (top / alpha_step).round() as u64;
    if steps == 0 {
        return Err(EnvelopeError::EmptyAlphaGrid { step: alpha_step });
    }

    let mut best_t = vec![f64::INFINITY; n];
    let mut best_alpha = vec![0.0; n];
    for k in 1..=steps {
        let alpha = k as f64 * alpha_step;
        let neg_inv = shifted_negated_inverse(a, alpha)?;
        let numerators = neg_inv.mul_vec(theta_bar)?;
        for i in 0..n {
            let gamma = gamma_from_inverse(&neg_inv, &numerators, i)?;
            let t = time_to_threshold(gamma, delta[i], alpha)?;
            if t < best_t[i] {
                best_t[i] = t;
                best_alpha[i] = alpha;
            }
        }
    }

    let t = best_t.iter().copied().fold(0.0, f64::max);
    Ok(ConvergenceResult {
        t,
        per_component_t: DenseVector::new(best_t)?,
        per_component_alpha: DenseVector::new(best_alpha)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::example_system;

    fn mat(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_rows(rows).unwrap()
    }

    fn vecd(v: &[f64]) -> DenseVector {
        DenseVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn gamma_scalar() {
        let g = gamma_component(&mat(&[&[-1.0]]), 0.5, &vecd(&[2.0]), 0).unwrap();
        assert!((g - 2.0).abs() < 1e-14);
    }

    #[test]
    fn gamma_decoupled_modes() {
        let a = DenseMatrix::diagonal(&[-1.0, -2.0]).unwrap();
        for i in 0..2 {
            let g = gamma_component(&a, 0.5, &vecd(&[1.0, 1.0]), i).unwrap();
            assert!((g - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn gamma_rejects_large_alpha() {
        let err = gamma_component(&mat(&[&[-1.0]]), 1.5, &vecd(&[1.0]), 0).unwrap_err();
        assert!(matches!(err, EnvelopeError::DecayRateTooLarge { .. }));
        let err = gamma_component(&mat(&[&[-1.0]]), 0.0, &vecd(&[1.0]), 0).unwrap_err();
        assert!(matches!(err, EnvelopeError::NonpositiveDecayRate(_)));
    }

    #[test]
    fn gamma_dominates_initial_bound() {
        // u(0) = theta_bar is admissible, so gamma ⪰ theta_bar.
        let a = example_system().a;
        let theta = vecd(&[0.3, 1.0, 0.2]);
        let est = exponential_estimate(&a, 0.7, &theta).unwrap();
        for i in 0..3 {
            assert!(est.gamma[i] >= theta[i] - 1e-12);
        }
    }

    #[test]
    fn threshold_times() {
        assert_eq!(time_to_threshold(1.0, 2.0, 0.3).unwrap(), 0.0);
        assert!((time_to_threshold(2.0, 1.0, 2f64.ln()).unwrap() - 1.0).abs() < 1e-14);
        assert!((time_to_threshold(2.0, 1.0, 1.0).unwrap() - 2f64.ln()).abs() < 1e-14);
        assert!(matches!(
            time_to_threshold(2.0, 0.0, 1.0),
            Err(EnvelopeError::NonpositiveThreshold { .. })
        ));
    }

    #[test]
    fn finite_time_scalar_already_inside() {
        let r = finite_time(&mat(&[&[-1.0]]), &vecd(&[1.0]), &vecd(&[1.0]), 0.001).unwrap();
        assert_eq!(r.t, 0.0);
    }

    #[test]
    fn finite_time_scalar_matches_exact_crossing() {
        // Exact solution u(t) = 2 exp(-t) crosses 1 at ln 2; the grid's best
        // rate is 0.999.
        let r = finite_time(&mat(&[&[-1.0]]), &vecd(&[2.0]), &vecd(&[1.0]), 0.001).unwrap();
        assert!((r.t - 2f64.ln() / 0.999).abs() < 1e-12);
        assert!((r.t - 2f64.ln()).abs() < 0.002);
        assert!((r.per_component_alpha[0] - 0.999).abs() < 1e-12);
    }

    #[test]
    fn finite_time_diagonal_is_near_minimal() {
        let a = DenseMatrix::diagonal(&[-1.0, -3.0]).unwrap();
        // The decay-rate grid stops at the slow mode, so near-minimality is
        // only claimed when the slow component binds.
        let theta = vecd(&[5.0, 2.0]);
        let delta = vecd(&[1.0, 1.0]);
        let step = 0.001;
        let r = finite_time(&a, &theta, &delta, step).unwrap();
        let exact = |t: f64| [5.0 * (-t).exp(), 2.0 * (-3.0 * t).exp()];
        let at_t = exact(r.t);
        assert!(at_t[0] <= 1.0 + 1e-12 && at_t[1] <= 1.0 + 1e-12);
        let earlier = exact(r.t - 2.0 * step * r.t);
        assert!(earlier[0] > 1.0);
    }

    #[test]
    fn finite_time_rejects_nonpositive_delta() {
        let err = finite_time(&mat(&[&[-1.0]]), &vecd(&[2.0]), &vecd(&[0.0]), 0.001).unwrap_err();
        assert!(matches!(err, EnvelopeError::NonpositiveThreshold { .. }));
        let err = finite_time(&mat(&[&[1.0]]), &vecd(&[2.0]), &vecd(&[1.0]), 0.001).unwrap_err();
        assert!(matches!(
            err,
            EnvelopeError::Stability(StabilityError::NotStable)
        ));
    }

    #[test]
    fn finite_time_coarse_step_has_empty_grid() {
        let err = finite_time(&mat(&[&[-1.0]]), &vecd(&[2.0]), &vecd(&[1.0]), 2.0).unwrap_err();
        assert!(matches!(err, EnvelopeError::EmptyAlphaGrid { .. }));
    }
}
