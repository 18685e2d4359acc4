//! Problem description for a coupled differential-difference system
//!
//! ```text
//! x'(t) = A x(t) + B y(t - h1(t)) + w(t)
//! y(t)  = C x(t) + D y(t - h2(t)) + d(t)
//! ```
//!
//! with `0 ⪯ w ⪯ omega_bar`, `0 ⪯ d ⪯ d_bar`, delays in `[0, h_M]`, and
//! initial data bounded by `psi_bar` (state at `t = 0`) and `phi_bar`
//! (history of `y` on `[-h_M, 0)`). The initial time is always 0.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::linalg::{DenseMatrix, DenseVector};

/// Entries at or above `-SIGN_TOLERANCE` count as nonnegative.
pub const SIGN_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    #[serde(rename = "A")]
    pub a: DenseMatrix,
    #[serde(rename = "B")]
    pub b: DenseMatrix,
    #[serde(rename = "C")]
    pub c: DenseMatrix,
    #[serde(rename = "D")]
    pub d: DenseMatrix,
    /// Upper bound on both delays.
    #[serde(rename = "h_M")]
    pub h_max: f64,
    pub omega_bar: DenseVector,
    pub d_bar: DenseVector,
    pub psi_bar: DenseVector,
    pub phi_bar: DenseVector,
}

impl SystemSpec {
    /// Dimension of `x`.
    pub fn n(&self) -> usize {
        self.a.rows()
    }

    /// Dimension of `y`.
    pub fn m(&self) -> usize {
        self.d.rows()
    }

    /// Replaces sign round-off in `(-SIGN_TOLERANCE, 0)` by exact zeros in
    /// every quantity that must be nonnegative.
    pub fn clamp_roundoff(&mut self) {
        fn clamp(v: &mut f64) {
            if *v < 0.0 && *v > -SIGN_TOLERANCE {
                *v = 0.0;
            }
        }
        for m in [&mut self.b, &mut self.c, &mut self.d] {
            for i in 0..m.rows() {
                for j in 0..m.cols() {
                    clamp(&mut m[(i, j)]);
                }
            }
        }
        let n = self.a.rows();
        for i in 0..n {
            for j in 0..self.a.cols() {
                if i != j {
                    clamp(&mut self.a[(i, j)]);
                }
            }
        }
        for v in [
            &mut self.omega_bar,
            &mut self.d_bar,
            &mut self.psi_bar,
            &mut self.phi_bar,
        ] {
            for i in 0..v.dim() {
                clamp(&mut v[i]);
            }
        }
        clamp(&mut self.h_max);
    }

    /// Same system with the initial-data bounds replaced.
    pub fn with_initial_bounds(&self, psi_bar: DenseVector, phi_bar: DenseVector) -> Self {
        Self {
            psi_bar,
            phi_bar,
            ..self.clone()
        }
    }

    /// Same system with the disturbance bounds replaced.
    pub fn with_disturbance_bounds(&self, omega_bar: DenseVector, d_bar: DenseVector) -> Self {
        Self {
            omega_bar,
            d_bar,
            ..self.clone()
        }
    }
}

/// One violated structural requirement.
#[derive(Debug, Clone, PartialEq)]
pub enum Finding {
    NotSquare {
        name: &'static str,
        rows: usize,
        cols: usize,
    },
    WrongShape {
        name: &'static str,
        expected: (usize, usize),
        actual: (usize, usize),
    },
    WrongLength {
        name: &'static str,
        expected: usize,
        actual: usize,
    },
    NotMetzler {
        row: usize,
        col: usize,
    },
    MatrixNotNonnegative {
        name: &'static str,
        row: usize,
        col: usize,
    },
    VectorNotNonnegative {
        name: &'static str,
        index: usize,
    },
    NegativeDelayBound,
    NonFiniteDelayBound,
}

impl Finding {
    /// Dimension findings make the system meaningless; the others are
    /// violated sign hypotheses of a well-formed system.
    pub fn is_shape(&self) -> bool {
        matches!(
            self,
            Finding::NotSquare { .. } | Finding::WrongShape { .. } | Finding::WrongLength { .. }
        )
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::NotSquare { name, rows, cols } => {
                write!(f, "{name} must be square, got {rows}x{cols}")
            }
            Finding::WrongShape {
                name,
                expected,
                actual,
            } => write!(
                f,
                "{name} has shape {}x{}, expected {}x{}",
                actual.0, actual.1, expected.0, expected.1
            ),
            Finding::WrongLength {
                name,
                expected,
                actual,
            } => write!(f, "{name} has length {actual}, expected {expected}"),
            Finding::NotMetzler { row, col } => {
                write!(f, "A not Metzler at ({row}, {col})")
            }
            Finding::MatrixNotNonnegative { name, row, col } => {
                write!(f, "{name} not nonnegative at ({row}, {col})")
            }
            Finding::VectorNotNonnegative { name, index } => {
                write!(f, "{name} not nonnegative at index {index}")
            }
            Finding::NegativeDelayBound => write!(f, "h_M must be nonnegative"),
            Finding::NonFiniteDelayBound => write!(f, "h_M must be finite"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.findings.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for finding in &self.findings {
            writeln!(f, "{finding}")?;
        }
        Ok(())
    }
}

/// Lists every structural requirement the system violates. Never fails.
pub fn validate_structure(spec: &SystemSpec) -> ValidationReport {
    let mut findings = Vec::new();
    let n = spec.a.rows();
    let m = spec.d.rows();

    let a_square = spec.a.is_square();
    if !a_square {
        findings.push(Finding::NotSquare {
            name: "A",
            rows: spec.a.rows(),
            cols: spec.a.cols(),
        });
    }
    let d_square = spec.d.is_square();
    if !d_square {
        findings.push(Finding::NotSquare {
            name: "D",
            rows: spec.d.rows(),
            cols: spec.d.cols(),
        });
    }
    for (name, matrix, expected) in [("B", &spec.b, (n, m)), ("C", &spec.c, (m, n))] {
        let actual = (matrix.rows(), matrix.cols());
        if actual != expected {
            findings.push(Finding::WrongShape {
                name,
                expected,
                actual,
            });
        }
    }
    for (name, v, expected) in [
        ("omega_bar", &spec.omega_bar, n),
        ("d_bar", &spec.d_bar, m),
        ("psi_bar", &spec.psi_bar, n),
        ("phi_bar", &spec.phi_bar, m),
    ] {
        if v.dim() != expected {
            findings.push(Finding::WrongLength {
                name,
                expected,
                actual: v.dim(),
            });
        }
    }

    if a_square {
        if let Some((row, col)) = spec.a.first_negative_off_diagonal(SIGN_TOLERANCE) {
            findings.push(Finding::NotMetzler { row, col });
        }
    }
    for (name, matrix) in [("B", &spec.b), ("C", &spec.c), ("D", &spec.d)] {
        if let Some((row, col)) = matrix.first_negative(SIGN_TOLERANCE) {
            findings.push(Finding::MatrixNotNonnegative { name, row, col });
        }
    }
    for (name, v) in [
        ("omega_bar", &spec.omega_bar),
        ("d_bar", &spec.d_bar),
        ("psi_bar", &spec.psi_bar),
        ("phi_bar", &spec.phi_bar),
    ] {
        if let Some(index) = v.iter().position(|&x| x < -SIGN_TOLERANCE) {
            findings.push(Finding::VectorNotNonnegative { name, index });
        }
    }

    if !spec.h_max.is_finite() {
        findings.push(Finding::NonFiniteDelayBound);
    } else if spec.h_max < -SIGN_TOLERANCE {
        findings.push(Finding::NegativeDelayBound);
    }

    ValidationReport { findings }
}

/// The three-state, two-output benchmark system with delay bound 2.
pub fn example_system() -> SystemSpec {
    let m = |rows: &[&[f64]]| DenseMatrix::from_rows(rows).expect("static matrix");
    let v = |e: &[f64]| DenseVector::new(e.to_vec()).expect("static vector");
    SystemSpec {
        a: m(&[&[-2.5, 0.3, 0.0], &[0.5, -2.0, 0.1], &[0.4, 0.6, -3.0]]),
        b: m(&[&[0.2, 0.1], &[0.5, 0.3], &[0.0, 0.4]]),
        c: m(&[&[0.3, 0.4, 0.1], &[0.2, 0.2, 0.0]]),
        d: m(&[&[0.6, 0.3], &[0.1, 0.2]]),
        h_max: 2.0,
        omega_bar: v(&[0.5, 0.3, 0.1]),
        d_bar: v(&[0.3, 0.1]),
        psi_bar: v(&[2.0, 5.0, 3.0]),
        phi_bar: v(&[15.0, 5.0]),
    }
}
