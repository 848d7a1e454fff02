//! Circular densities built from nonnegative trigonometric sums (NNTS):
//! evaluation, exact sampling, maximum-likelihood fits of general and
//! reflective-symmetric models, and tests of reflective symmetry.

// `!(x > 0.0)` is used on purpose so that NaN falls into the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimation;
pub mod gof;
pub mod inference;
pub mod io;
pub mod model;
mod newton;
pub mod parallel;
pub mod report;
pub mod sampling;
pub mod simulation;
pub mod special;

pub use error::{NntsError, Result};
pub use estimation::{fit_general, fit_pair, fit_symmetric, scan_models, FitOptions, FitReport, ModelFamily};
pub use inference::{b2_test_bootstrap, lr_test_asymptotic, lr_test_bootstrap, sk_nnts, TestKind, TestResult};
pub use model::{AngleSample, AngleUnit, ComplexCoefficients, NntsModel, SymmetricNntsModel};
pub use sampling::{CircularModel, KSineModel, RngStream};
