//! Certified componentwise bounds for the disturbed system.
//!
//! The pipeline has six steps:
//!
//! 1. read the system;
//! 2. compute the ultimate bound `[eta; varsigma] = -[[A, B], [C, D - I]]⁻¹ [omega_bar; d_bar]`
//!    and stop if the initial bounds already lie below it;
//! 3. scale a positive block witness into comparison vectors `(p, q)` that
//!    dominate the shifted initial bounds;
//! 4. extract the contraction factor `mu`;
//! 5. find the largest admissible decay rate of `A`;
//! 6. compute the finite convergence time `T` and the dwell `T* = max(T, h_M)`.
//!
//! The resulting staircase bound is
//!
//! ```text
//! x(t) ⪯ eta      + (1 - mu)^k     p
//! y(t) ⪯ varsigma + (1 - mu)^(k+1) q,     t ∈ [k T*, (k+1) T*).
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::envelope::{finite_time, ConvergenceResult, EnvelopeError, DEFAULT_ALPHA_STEP};
use crate::linalg::{all_greater, cmp_leq, DenseMatrix, DenseVector, LinalgError};
use crate::model::{validate_structure, SystemSpec};
use crate::stability::{block_matrix, block_witness, check_joint_condition_with, StabilityError};

/// Multiplier applied to the closed-form contraction factor so that none of
/// the three contraction inequalities is tight.
pub const MU_SAFETY: f64 = 0.999;
pub const MU_MIN: f64 = 1e-9;
pub const MU_MAX: f64 = 0.999;
/// Lower clamp on the witness scaling factor.
pub const RHO_MIN: f64 = 1e-9;

/// The step of the bound computation that produced an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlgorithmStep {
    Input,
    UltimateBound,
    ComparisonVectors,
    ContractionFactor,
    DecayRateSearch,
    FiniteTime,
}

impl AlgorithmStep {
    pub fn number(self) -> u8 {
        match self {
            AlgorithmStep::Input => 1,
            AlgorithmStep::UltimateBound => 2,
            AlgorithmStep::ComparisonVectors => 3,
            AlgorithmStep::ContractionFactor => 4,
            AlgorithmStep::DecayRateSearch => 5,
            AlgorithmStep::FiniteTime => 6,
        }
    }
}

impl fmt::Display for AlgorithmStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            AlgorithmStep::Input => "input validation",
            AlgorithmStep::UltimateBound => "ultimate bound",
            AlgorithmStep::ComparisonVectors => "comparison vectors",
            AlgorithmStep::ContractionFactor => "contraction factor",
            AlgorithmStep::DecayRateSearch => "decay-rate search",
            AlgorithmStep::FiniteTime => "finite-time convergence",
        };
        write!(f, "step {} ({name})", self.number())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CertificateError {
    #[error("invalid system structure:\n{0}")]
    InvalidStructure(String),
    #[error("stability hypotheses fail: {0}")]
    HypothesesFail(String),
    #[error("contraction inequalities fail: raw mu = {raw_mu}")]
    HypothesisViolated { raw_mu: f64 },
    #[error("xi must be strictly positive with {expected} entries")]
    InvalidXi { expected: usize },
    #[error("time must be nonnegative, got {0}")]
    NegativeTime(f64),
    #[error("{step}: {source}")]
    AtStep {
        step: AlgorithmStep,
        #[source]
        source: Box<CertificateError>,
    },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Stability(#[from] StabilityError),
    #[error(transparent)]
    Envelope(#[from] EnvelopeError),
}

impl CertificateError {
    fn at(self, step: AlgorithmStep) -> Self {
        CertificateError::AtStep {
            step,
            source: Box::new(self),
        }
    }

    /// Step tag of the failure, if the error came out of the pipeline.
    pub fn step(&self) -> Option<AlgorithmStep> {
        match self {
            CertificateError::AtStep { step, .. } => Some(*step),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateOptions {
    pub alpha_step: f64,
    /// Right-hand side of the block witness system; all ones when `None`.
    pub xi: Option<DenseVector>,
}

impl Default for CertificateOptions {
    fn default() -> Self {
        Self {
            alpha_step: DEFAULT_ALPHA_STEP,
            xi: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCertificate {
    pub eta: DenseVector,
    pub varsigma: DenseVector,
    pub p: DenseVector,
    pub q: DenseVector,
    /// Contraction factor used by the staircase (after the safety factor).
    pub mu: f64,
    /// Closed-form contraction factor before the safety factor.
    pub mu_raw: f64,
    pub t_star: f64,
    pub convergence: ConvergenceResult,
    /// Initial bounds already lie below the ultimate bound; the bound is the
    /// constant `(eta, varsigma)`.
    pub constant_bound: bool,
}

/// Contraction factor before and after the safety margin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contraction {
    pub raw: f64,
    pub mu: f64,
}

/// `[eta; varsigma] = -[[A, B], [C, D - I]]⁻¹ [omega_bar; d_bar]`.
pub fn ultimate_bound(spec: &SystemSpec) -> Result<(DenseVector, DenseVector), CertificateError> {
    let rhs = spec.omega_bar.concat(&spec.d_bar).scale(-1.0);
    let mut sol = block_matrix(spec)?.solve(&rhs)?;
    // The exact solution is nonnegative; drop sign round-off.
    for i in 0..sol.dim() {
        if sol[i] < 0.0 && sol[i] > -1e-12 {
            sol[i] = 0.0;
        }
    }
    Ok(sol.split_at(spec.n()))
}

/// Positive vectors `(p, q)` satisfying the strict block inequalities and
/// dominating the given initial bounds.
pub fn comparison_vectors(
    spec: &SystemSpec,
    xi: &DenseVector,
    init_x_bound: &DenseVector,
    init_y_bound: &DenseVector,
) -> Result<(DenseVector, DenseVector), CertificateError> {
    let (n, m) = (spec.n(), spec.m());
    if xi.dim() != n + m || !all_greater(xi, 0.0) {
        return Err(CertificateError::InvalidXi { expected: n + m });
    }
    if init_x_bound.dim() != n {
        return Err(LinalgError::DimensionMismatch {
            expected: n,
            actual: init_x_bound.dim(),
        }
        .into());
    }
    if init_y_bound.dim() != m {
        return Err(LinalgError::DimensionMismatch {
            expected: m,
            actual: init_y_bound.dim(),
        }
        .into());
    }
    let (p_base, q_base) = block_witness(spec, xi)?;
    if !all_greater(&p_base, 0.0) || !all_greater(&q_base, 0.0) {
        return Err(CertificateError::HypothesesFail(
            "block witness is not strictly positive".into(),
        ));
    }
    let ratios = init_x_bound
        .iter()
        .zip(p_base.iter())
        .chain(init_y_bound.iter().zip(q_base.iter()))
        .map(|(bound, base)| bound / base);
    let rho = ratios.fold(RHO_MIN, f64::max);
    Ok((p_base.scale(rho), q_base.scale(rho)))
}

/// The three vectors the contraction factor is read off from:
/// `-A⁻¹Bq`, `(I - D)⁻¹Cp`, and `Cp + Dq`.
fn contraction_terms(
    spec: &SystemSpec,
    p: &DenseVector,
    q: &DenseVector,
) -> Result<[DenseVector; 3], CertificateError> {
    let neg_ainv_bq = spec.a.solve(&spec.b.mul_vec(q)?)?.scale(-1.0);
    let i_minus_d = DenseMatrix::identity(spec.m()).sub(&spec.d)?;
    let cp = spec.c.mul_vec(p)?;
    let resolvent_cp = i_minus_d.solve(&cp)?;
    let cp_dq = cp.add(&spec.d.mul_vec(q)?)?;
    Ok([neg_ainv_bq, resolvent_cp, cp_dq])
}

/// Contraction factor `mu` with `-A⁻¹Bq ⪯ (1-mu)p`, `(I-D)⁻¹Cp ⪯ (1-mu)q`
/// and `Cp + Dq ⪯ (1-mu)q`, shrunk by [`MU_SAFETY`] and clamped to
/// `[MU_MIN, MU_MAX]`.
pub fn contraction_factor(
    spec: &SystemSpec,
    p: &DenseVector,
    q: &DenseVector,
) -> Result<Contraction, CertificateError> {
    let [m1, m2, m3] = contraction_terms(spec, p, q)?;
    let worst = m1
        .iter()
        .zip(p.iter())
        .chain(m2.iter().zip(q.iter()))
        .chain(m3.iter().zip(q.iter()))
        .map(|(num, den)| num / den)
        .fold(f64::NEG_INFINITY, f64::max);
    let raw = 1.0 - worst.max(0.0);
    if !(raw > 0.0) {
        return Err(CertificateError::HypothesisViolated {
            raw_mu: 1.0 - worst,
        });
    }
    Ok(Contraction {
        raw,
        mu: (MU_SAFETY * raw).clamp(MU_MIN, MU_MAX),
    })
}

/// Runs the full pipeline with default options.
pub fn compute_certificate(
    spec: &SystemSpec,
    alpha_step: f64,
) -> Result<BoundCertificate, CertificateError> {
    compute_certificate_with(
        spec,
        &CertificateOptions {
            alpha_step,
            xi: None,
        },
    )
}

pub fn compute_certificate_with(
    spec: &SystemSpec,
    options: &CertificateOptions,
) -> Result<BoundCertificate, CertificateError> {
    use AlgorithmStep::*;

    let structure = validate_structure(spec);
    if !structure.is_valid() {
        return Err(CertificateError::InvalidStructure(structure.to_string()).at(Input));
    }
    let xi = options
        .xi
        .clone()
        .unwrap_or_else(|| DenseVector::filled(spec.n() + spec.m(), 1.0));
    let report = check_joint_condition_with(spec, &xi);
    if !report.all_pass() {
        return Err(CertificateError::HypothesesFail(report.diagnostics.join("; ")).at(Input));
    }

    let (eta, varsigma) = ultimate_bound(spec).map_err(|e| e.at(UltimateBound))?;
    let constant_bound =
        cmp_leq(&spec.psi_bar, &eta, 0.0)? && cmp_leq(&spec.phi_bar, &varsigma, 0.0)?;

    let shifted_x = spec.psi_bar.max(&eta)?.sub(&eta)?;
    let shifted_y = spec.phi_bar.max(&varsigma)?.sub(&varsigma)?;
    let (p, q) = comparison_vectors(spec, &xi, &shifted_x, &shifted_y)
        .map_err(|e| e.at(ComparisonVectors))?;

    let contraction = contraction_factor(spec, &p, &q).map_err(|e| e.at(ContractionFactor))?;
    let mu = contraction.mu;

    let ainv_bq = spec
        .a
        .solve(&spec.b.mul_vec(&q)?)
        .map_err(|e| CertificateError::from(e).at(FiniteTime))?;
    let theta_bar = p.add(&ainv_bq)?;
    let delta = p.scale(1.0 - mu).add(&ainv_bq)?;
    let convergence =
        finite_time(&spec.a, &theta_bar, &delta, options.alpha_step).map_err(|e| match e {
            EnvelopeError::Stability(_) | EnvelopeError::EmptyAlphaGrid { .. } => {
                CertificateError::from(e).at(DecayRateSearch)
            }
            other => CertificateError::from(other).at(FiniteTime),
        })?;

    let t_star = convergence.t.max(spec.h_max);
    if !(t_star > 0.0) {
        return Err(
            CertificateError::Envelope(EnvelopeError::NonpositiveThreshold {
                component: 0,
                value: t_star,
            })
            .at(FiniteTime),
        );
    }

    Ok(BoundCertificate {
        eta,
        varsigma,
        p,
        q,
        mu,
        mu_raw: contraction.raw,
        t_star,
        convergence,
        constant_bound,
    })
}

impl BoundCertificate {
    /// Decay factor per dwell, `1 - mu`.
    pub fn decay(&self) -> f64 {
        1.0 - self.mu
    }

    /// Geometric bound on the `k`-th dwell interval, ignoring the constant
    /// short-circuit.
    pub fn geometric_bound(&self, k: u64) -> (DenseVector, DenseVector) {
        let kf = k as f64;
        let x = self
            .eta
            .add(&self.p.scale(self.decay().powf(kf)))
            .expect("certificate dimensions");
        let y = self
            .varsigma
            .add(&self.q.scale(self.decay().powf(kf + 1.0)))
            .expect("certificate dimensions");
        (x, y)
    }

    /// Staircase bound at time `t`.
    pub fn staircase(&self, t: f64) -> Result<(DenseVector, DenseVector), CertificateError> {
        if !(t >= 0.0) {
            return Err(CertificateError::NegativeTime(t));
        }
        if self.constant_bound {
            return Ok((self.eta.clone(), self.varsigma.clone()));
        }
        let k = (t / self.t_star).floor();
        Ok(self.geometric_bound(if k.is_finite() { k as u64 } else { u64::MAX }))
    }

    /// Smooth envelope `eta + (1 - mu)^(t/T* - 1) p` that lies above the
    /// staircase. Only the staircase itself is certified.
    pub fn continuous_envelope(
        &self,
        t: f64,
    ) -> Result<(DenseVector, DenseVector), CertificateError> {
        if !(t >= 0.0) {
            return Err(CertificateError::NegativeTime(t));
        }
        if self.constant_bound {
            return Ok((self.eta.clone(), self.varsigma.clone()));
        }
        let e = t / self.t_star - 1.0;
        let x = self.eta.add(&self.p.scale(self.decay().powf(e)))?;
        let y = self
            .varsigma
            .add(&self.q.scale(self.decay().powf(e + 1.0)))?;
        Ok((x, y))
    }

    /// Checks the three contraction inequalities against `spec` with
    /// additive slack.
    pub fn contraction_inequalities_hold(
        &self,
        spec: &SystemSpec,
        slack: f64,
    ) -> Result<bool, CertificateError> {
        let [m1, m2, m3] = contraction_terms(spec, &self.p, &self.q)?;
        let one_minus_mu = 1.0 - self.mu;
        Ok(cmp_leq(&m1, &self.p.scale(one_minus_mu), slack)?
            && cmp_leq(&m2, &self.q.scale(one_minus_mu), slack)?
            && cmp_leq(&m3, &self.q.scale(one_minus_mu), slack)?)
    }

    pub fn to_record(&self) -> CertificateRecord {
        CertificateRecord {
            eta: self.eta.clone(),
            varsigma: self.varsigma.clone(),
            p: self.p.clone(),
            q: self.q.clone(),
            mu: self.mu,
            t_star: self.t_star,
            constant_bound: self.constant_bound,
            t: self.convergence.t,
            per_component_t: self.convergence.per_component_t.clone(),
        }
    }
}

/// JSON form of a certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateRecord {
    pub eta: DenseVector,
    pub varsigma: DenseVector,
    pub p: DenseVector,
    pub q: DenseVector,
    pub mu: f64,
    #[serde(rename = "T_star")]
    pub t_star: f64,
    pub constant_bound: bool,
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(rename = "per_component_T")]
    pub per_component_t: DenseVector,
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

    fn assert_close(got: &DenseVector, want: &[f64], tol: f64) {
        assert_eq!(got.dim(), want.len());
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() <= tol, "{got:?} vs {want:?}");
        }
    }

    /// x' = -x + y(t-h) + w, y = 0.5 x.
    fn scalar_coupled() -> SystemSpec {
        SystemSpec {
            a: mat(&[&[-1.0]]),
            b: mat(&[&[1.0]]),
            c: mat(&[&[0.5]]),
            d: mat(&[&[0.0]]),
            h_max: 1.0,
            omega_bar: vecd(&[1.0]),
            d_bar: vecd(&[0.0]),
            psi_bar: vecd(&[2.0]),
            phi_bar: vecd(&[1.0]),
        }
    }

    #[test]
    fn ultimate_bound_example() {
        let (eta, vs) = ultimate_bound(&example_system()).unwrap();
        assert_close(&eta, &[0.7249, 1.4756, 0.5780], 5e-5);
        assert_close(&vs, &[3.7739, 1.1469], 5e-5);
    }

    #[test]
    fn ultimate_bound_homogeneous_is_zero() {
        let spec =
            example_system().with_disturbance_bounds(DenseVector::zeros(3), DenseVector::zeros(2));
        let (eta, vs) = ultimate_bound(&spec).unwrap();
        assert!(eta.iter().chain(vs.iter()).all(|&v| v == 0.0));
    }

    #[test]
    fn ultimate_bound_scalar_fixed_point() {
        // Steady state: 0 = -x + 0.5 x + 1 gives x = 2, y = 1.
        let (eta, vs) = ultimate_bound(&scalar_coupled()).unwrap();
        assert_close(&eta, &[2.0], 1e-14);
        assert_close(&vs, &[1.0], 1e-14);
    }

    #[test]
    fn comparison_vectors_example() {
        let spec = example_system();
        let (eta, vs) = ultimate_bound(&spec).unwrap();
        let sx = spec.psi_bar.max(&eta).unwrap().sub(&eta).unwrap();
        let sy = spec.phi_bar.max(&vs).unwrap().sub(&vs).unwrap();
        let (p, q) = comparison_vectors(&spec, &DenseVector::filled(5, 1.0), &sx, &sy).unwrap();
        assert_close(&p, &[2.3951, 5.5118, 2.4220], 5e-3);
        assert_close(&q, &[14.1659, 4.9990], 5e-3);
    }

    #[test]
    fn comparison_vectors_zero_bounds_hit_clamp() {
        let spec = example_system();
        let xi = DenseVector::filled(5, 1.0);
        let (p, q) =
            comparison_vectors(&spec, &xi, &DenseVector::zeros(3), &DenseVector::zeros(2)).unwrap();
        let (pb, qb) = block_witness(&spec, &xi).unwrap();
        assert_close(&p, pb.scale(RHO_MIN).as_slice(), 1e-24);
        assert_close(&q, qb.scale(RHO_MIN).as_slice(), 1e-24);
        assert!(all_greater(&p, 0.0) && all_greater(&q, 0.0));
    }

    #[test]
    fn comparison_vectors_scalar_binding_ratio() {
        // Block system [[-1, 1], [0.5, -1]] [p; q] = -[1; 1] gives
        // p~ = 4, q~ = 3; ratios 2/4 and 1/3, so rho = 0.5.
        let spec = scalar_coupled();
        let (p, q) =
            comparison_vectors(&spec, &vecd(&[1.0, 1.0]), &vecd(&[2.0]), &vecd(&[1.0])).unwrap();
        assert_close(&p, &[2.0], 1e-14);
        assert_close(&q, &[1.5], 1e-14);
        assert!(p[0] >= 2.0 && q[0] >= 1.0);
    }

    #[test]
    fn comparison_vectors_rejects_bad_xi() {
        let spec = scalar_coupled();
        let err = comparison_vectors(&spec, &vecd(&[1.0, 0.0]), &vecd(&[2.0]), &vecd(&[1.0]))
            .unwrap_err();
        assert!(matches!(err, CertificateError::InvalidXi { expected: 2 }));
    }

    #[test]
    fn contraction_factor_example() {
        let spec = example_system();
        let p = vecd(&[2.3951, 5.5118, 2.4220]);
        let q = vecd(&[14.1659, 4.9990]);
        let c = contraction_factor(&spec, &p, &q).unwrap();
        assert!((c.raw - 0.0707).abs() < 5e-4, "{}", c.raw);
        assert!((c.mu - MU_SAFETY * c.raw).abs() < 1e-15);
    }

    #[test]
    fn contraction_factor_without_coupling_is_clamped() {
        let mut spec = example_system();
        spec.b = DenseMatrix::zeros(3, 2);
        spec.c = DenseMatrix::zeros(2, 3);
        spec.d = DenseMatrix::zeros(2, 2);
        let c = contraction_factor(&spec, &vecd(&[1.0, 1.0, 1.0]), &vecd(&[1.0, 1.0])).unwrap();
        assert_eq!(c.raw, 1.0);
        assert_eq!(c.mu, MU_MAX);
    }

    #[test]
    fn contraction_factor_detects_violation() {
        // M1 = 1, M2 = 2, M3 = 2 against p = 4, q = 1.
        let err = contraction_factor(&scalar_coupled(), &vecd(&[4.0]), &vecd(&[1.0])).unwrap_err();
        match err {
            CertificateError::HypothesisViolated { raw_mu } => {
                assert!((raw_mu + 1.0).abs() < 1e-12)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn certificate_example() {
        let spec = example_system();
        let cert = compute_certificate(&spec, 0.001).unwrap();
        assert!(!cert.constant_bound);
        assert!((cert.convergence.t - 1.2056).abs() < 0.05);
        assert_eq!(cert.t_star, 2.0);
        assert!(cert.contraction_inequalities_hold(&spec, 1e-10).unwrap());
        let (x0, _) = cert.staircase(1.0).unwrap();
        assert_close(&x0, &[3.1200, 6.9874, 3.0000], 1e-3);
        let (x1, _) = cert.staircase(2.0).unwrap();
        let expect: Vec<f64> = (0..3)
            .map(|i| cert.eta[i] + cert.decay() * cert.p[i])
            .collect();
        assert_close(&x1, &expect, 1e-12);
        assert!((cert.decay() - 0.9293).abs() < 5e-4);
    }

    #[test]
    fn certificate_short_circuit() {
        let spec = example_system();
        let (eta, vs) = ultimate_bound(&spec).unwrap();
        let low = spec.with_initial_bounds(eta.scale(0.5), vs.scale(0.5));
        let cert = compute_certificate(&low, 0.001).unwrap();
        assert!(cert.constant_bound);
        for t in [0.0, 1.0, 7.5, 1e6] {
            let (x, y) = cert.staircase(t).unwrap();
            assert_eq!(x, cert.eta);
            assert_eq!(y, cert.varsigma);
        }
    }

    #[test]
    fn certificate_zero_initial_bounds() {
        let spec =
            example_system().with_initial_bounds(DenseVector::zeros(3), DenseVector::zeros(2));
        let cert = compute_certificate(&spec, 0.001).unwrap();
        assert!(cert.constant_bound);
        let (pb, _) = block_witness(&spec, &DenseVector::filled(5, 1.0)).unwrap();
        assert_close(&cert.p, pb.scale(RHO_MIN).as_slice(), 1e-20);
        let (x0, _) = cert.geometric_bound(0);
        let near = cert.eta.add(&cert.p).unwrap();
        assert!(cmp_leq(&x0, &near, 1e-15).unwrap());
        assert!(cert.contraction_inequalities_hold(&spec, 1e-10).unwrap());
        assert!(cert.t_star >= spec.h_max);
    }

    #[test]
    fn staircase_limits_and_errors() {
        let cert = compute_certificate(&example_system(), 0.001).unwrap();
        let far = cert.t_star * 1e6;
        let (x, y) = cert.staircase(far).unwrap();
        assert_close(&x, cert.eta.as_slice(), 1e-12);
        assert_close(&y, cert.varsigma.as_slice(), 1e-12);
        assert!(matches!(
            cert.staircase(-0.5),
            Err(CertificateError::NegativeTime(_))
        ));
        for t in [0.0, 0.7, 2.5, 9.9] {
            let (xs, ys) = cert.staircase(t).unwrap();
            let (xc, yc) = cert.continuous_envelope(t).unwrap();
            assert!(cmp_leq(&xs, &xc, 1e-12).unwrap());
            assert!(cmp_leq(&ys, &yc, 1e-12).unwrap());
        }
    }

    #[test]
    fn pipeline_errors_are_tagged() {
        let mut spec = example_system();
        spec.d = DenseMatrix::identity(2);
        let err = compute_certificate(&spec, 0.001).unwrap_err();
        assert_eq!(err.step(), Some(AlgorithmStep::Input));
        assert!(err.to_string().contains("D not Schur"));

        let spec = example_system();
        let err = compute_certificate(&spec, 5.0).unwrap_err();
        assert_eq!(err.step(), Some(AlgorithmStep::DecayRateSearch));
        assert!(err.to_string().starts_with("step 5"));
    }

    #[test]
    fn record_keys() {
        let cert = compute_certificate(&example_system(), 0.001).unwrap();
        let json = serde_json::to_value(cert.to_record()).unwrap();
        let mut keys: Vec<_> = json.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(
            keys,
            [
                "T",
                "T_star",
                "constant_bound",
                "eta",
                "mu",
                "p",
                "per_component_T",
                "q",
                "varsigma"
            ]
        );
    }
}
