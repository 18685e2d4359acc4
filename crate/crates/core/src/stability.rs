//! Stability tests for the positive-systems class.
//!
//! Nothing here computes eigenvalues. For a Metzler matrix `M`, Hurwitz
//! stability is equivalent to `M⁻¹ ⪯ 0`; for a nonnegative `D`, Schur
//! stability is equivalent to `(I - D)⁻¹ ⪰ 0`. The joint condition
//! `s(A + B(I - D)⁻¹C) < 0` is decided by solving the block system
//!
//! ```text
//! [A   B    ] [p]     [xi_x]
//! [C   D - I] [q] = - [xi_y]
//! ```
//!
//! and checking that the solution is strictly positive.

use crate::linalg::{all_greater, DenseMatrix, DenseVector, LinalgError};
use crate::model::{SystemSpec, SIGN_TOLERANCE};

/// Witness entries must exceed this to count as strictly positive.
pub const STRICT_POSITIVITY: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StabilityError {
    #[error("matrix is not Metzler: off-diagonal entry ({row}, {col}) is negative")]
    NotMetzler { row: usize, col: usize },
    #[error("matrix is not nonnegative at ({row}, {col})")]
    NotNonnegative { row: usize, col: usize },
    #[error("A is not Hurwitz stable")]
    NotStable,
    #[error("search step must be positive, got {0}")]
    InvalidStep(f64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub a_is_metzler: bool,
    pub bcd_nonnegative: bool,
    pub d_is_schur: bool,
    /// `s(A + B(I - D)⁻¹C) < 0`, decided through the block system.
    pub joint_condition_holds: bool,
    pub witness_p: Option<DenseVector>,
    pub witness_q: Option<DenseVector>,
    pub diagnostics: Vec<String>,
}

impl StabilityReport {
    pub fn all_pass(&self) -> bool {
        self.a_is_metzler && self.bcd_nonnegative && self.d_is_schur && self.joint_condition_holds
    }
}

/// Returns `-M⁻¹` when the Metzler matrix `m` is Hurwitz stable, `None`
/// otherwise. The caller is responsible for the Metzler precondition.
pub(crate) fn hurwitz_negated_inverse(m: &DenseMatrix) -> Option<DenseMatrix> {
    let inv = m.inverse().ok()?;
    if inv.max_entry() <= SIGN_TOLERANCE {
        Some(inv.scale(-1.0))
    } else {
        None
    }
}

/// Hurwitz test for a Metzler matrix: nonsingular with `A⁻¹ ⪯ 0`.
pub fn is_metzler_hurwitz(a: &DenseMatrix) -> Result<bool, StabilityError> {
    require_square(a)?;
    if let Some((row, col)) = a.first_negative_off_diagonal(SIGN_TOLERANCE) {
        return Err(StabilityError::NotMetzler { row, col });
    }
    Ok(hurwitz_negated_inverse(a).is_some())
}

/// Schur test for a nonnegative matrix: `I - D` nonsingular with
/// `(I - D)⁻¹ ⪰ 0`.
pub fn is_schur_nonneg(d: &DenseMatrix) -> Result<bool, StabilityError> {
    require_square(d)?;
    if let Some((row, col)) = d.first_negative(SIGN_TOLERANCE) {
        return Err(StabilityError::NotNonnegative { row, col });
    }
    let i_minus_d = DenseMatrix::identity(d.rows()).sub(d)?;
    Ok(match i_minus_d.inverse() {
        Ok(inv) => inv.first_negative(SIGN_TOLERANCE).is_none(),
        Err(_) => false,
    })
}

/// The block matrix `[[A, B], [C, D - I]]`.
pub fn block_matrix(spec: &SystemSpec) -> Result<DenseMatrix, LinalgError> {
    let d_minus_i = spec.d.sub(&DenseMatrix::identity(spec.m()))?;
    DenseMatrix::block(&spec.a, &spec.b, &spec.c, &d_minus_i)
}

/// Solves `[[A, B], [C, D - I]] [p; q] = -xi` and splits the result.
pub fn block_witness(
    spec: &SystemSpec,
    xi: &DenseVector,
) -> Result<(DenseVector, DenseVector), LinalgError> {
    let sol = block_matrix(spec)?.solve(&xi.scale(-1.0))?;
    Ok(sol.split_at(spec.n()))
}

/// Runs every stability hypothesis with `xi` all ones.
pub fn check_joint_condition(spec: &SystemSpec) -> StabilityReport {
    check_joint_condition_with(spec, &DenseVector::filled(spec.n() + spec.m(), 1.0))
}

pub fn check_joint_condition_with(spec: &SystemSpec, xi: &DenseVector) -> StabilityReport {
    let mut diagnostics = Vec::new();

    let a_is_metzler = match spec.a.first_negative_off_diagonal(SIGN_TOLERANCE) {
        None if spec.a.is_square() => true,
        None => {
            diagnostics.push("A not square".to_string());
            false
        }
        Some((row, col)) => {
            diagnostics.push(format!("A not Metzler at ({row}, {col})"));
            false
        }
    };
    let mut bcd_nonnegative = true;
    for (name, m) in [("B", &spec.b), ("C", &spec.c), ("D", &spec.d)] {
        if let Some((row, col)) = m.first_negative(SIGN_TOLERANCE) {
            diagnostics.push(format!("{name} not nonnegative at ({row}, {col})"));
            bcd_nonnegative = false;
        }
    }
    let d_is_schur = match is_schur_nonneg(&spec.d) {
        Ok(true) => true,
        Ok(false) => {
            diagnostics.push("D not Schur".to_string());
            false
        }
        Err(e) => {
            diagnostics.push(format!("D not Schur: {e}"));
            false
        }
    };

    let mut joint_condition_holds = false;
    let mut witness_p = None;
    let mut witness_q = None;
    if xi.dim() != spec.n() + spec.m() || !all_greater(xi, 0.0) {
        diagnostics.push(format!(
            "xi must be strictly positive with {} entries",
            spec.n() + spec.m()
        ));
    } else {
        match block_witness(spec, xi) {
            Ok((p, q)) => {
                if all_greater(&p, STRICT_POSITIVITY) && all_greater(&q, STRICT_POSITIVITY) {
                    joint_condition_holds = a_is_metzler && bcd_nonnegative;
                    witness_p = Some(p);
                    witness_q = Some(q);
                } else {
                    diagnostics
                        .push("s(A + B(I-D)^-1 C) < 0 fails: block witness not positive".into());
                }
            }
            Err(e) => diagnostics.push(format!("s(A + B(I-D)^-1 C) < 0 fails: {e}")),
        }
    }
    if !joint_condition_holds {
        witness_p = None;
        witness_q = None;
    }

    StabilityReport {
        a_is_metzler,
        bcd_nonnegative,
        d_is_schur,
        joint_condition_holds,
        witness_p,
        witness_q,
        diagnostics,
    }
}

/// Largest `alpha = k·step` such that `A + alpha·I` is still Hurwitz.
pub fn alpha_max(a: &DenseMatrix, step: f64) -> Result<f64, StabilityError> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(StabilityError::InvalidStep(step));
    }
    if !is_metzler_hurwitz(a)? {
        return Err(StabilityError::NotStable);
    }
    let mut k: u64 = 0;
    loop {
        let shifted = a.shift_diagonal((k + 1) as f64 * step)?;
        if hurwitz_negated_inverse(&shifted).is_none() {
            return Ok(k as f64 * step);
        }
        k += 1;
    }
}

fn require_square(m: &DenseMatrix) -> Result<(), StabilityError> {
    if m.is_square() {
        Ok(())
    } else {
        Err(LinalgError::NotSquare {
            rows: m.rows(),
            cols: m.cols(),
        }
        .into())
    }
}
