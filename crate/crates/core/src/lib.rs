//! Certified componentwise bounds for positive coupled
//! differential-difference equations
//!
//! ```text
//! x'(t) = A x(t) + B y(t - h1(t)) + w(t)
//! y(t)  = C x(t) + D y(t - h2(t)) + d(t)
//! ```
//!
//! with Metzler `A`, nonnegative `B`, `C`, `D`, Schur `D`, bounded
//! time-varying delays and bounded nonnegative disturbances.
//!
//! The crate computes a geometrically decaying staircase bound on `x` and
//! `y`, the smallest componentwise ultimate bound `(eta, varsigma)`, and the
//! invariant orthotope `[0, eta] × [0, varsigma]`, and checks all of them
//! against a fixed-step delay simulator.
//!
//! ```
//! use cdde_bound::{certificate, model};
//!
//! let spec = model::example_system();
//! let cert = certificate::compute_certificate(&spec, 0.001)?;
//! assert_eq!(cert.t_star, 2.0);
//!
//! let (x_bound, _y_bound) = cert.staircase(5.0)?;
//! assert!(x_bound[0] < cert.eta[0] + cert.p[0]);
//! # Ok::<(), cdde_bound::certificate::CertificateError>(())
//! ```
//!
//! The guide under `book/` walks through the theory behind each module; its
//! code listings are compiled and run as doctests of this crate.

// `!(x > 0.0)` is used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certificate;
pub mod envelope;
pub mod linalg;
pub mod model;
pub mod problem;
pub mod simulator;
pub mod stability;

pub use certificate::{compute_certificate, BoundCertificate, CertificateError};
pub use linalg::{DenseMatrix, DenseVector};
pub use model::SystemSpec;
pub use simulator::{simulate, SimulationScenario, Trajectory};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/positive-systems.md")]
    mod positive_systems {}
    #[doc = include_str!("../../../book/src/envelopes.md")]
    mod envelopes {}
    #[doc = include_str!("../../../book/src/certificates.md")]
    mod certificates {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
