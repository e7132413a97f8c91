//! Periodic orbits of control-affine systems under bang-bang switching.
//!
//! The crate assembles truncated Lie-series vector fields for compositions of
//! segment flows, finds their zeros and the corresponding periodic orbits by
//! shooting, and certifies uniqueness/attractivity through divergence scans
//! and sampled contraction checks. Numeric kernels are generic over the
//! scalar type (see [`scalar::Real`]); series coefficients are exact
//! rationals until a series is bound to concrete fields.

// negated comparisons like `!(tau > 0)` are deliberate: they reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod bchd;
pub mod flow;
pub mod lie;
pub mod linalg;
pub mod models;
pub mod scalar;
pub mod solve;
pub mod verify;

pub use scalar::{r, Real};

/// Concrete double-precision aliases for the common entry points.
pub type Jet64 = lie::Jet<f64>;
pub type Field64 = lie::FieldHandle<f64>;
pub type System64 = models::ControlAffineSystem<f64>;
pub type Schedule64 = flow::SwitchingSchedule<f64>;
pub type Trajectory64 = flow::Trajectory<f64>;
pub type Mat64 = linalg::DMat<f64>;
pub type Report64 = solve::EquilibriumReport<f64>;
pub type Certificate64 = analysis::ContractionCertificate<f64>;
