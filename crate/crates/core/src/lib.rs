//! Graded nilpotent groups, homogeneous distances and spherical factors.

pub mod algebra;
pub mod bch;
pub mod blowup;
pub mod expr;
pub mod factor;
pub mod metrics;
pub mod quadrature;
pub mod rng;
pub mod scalar;
pub mod subgroups;

pub use algebra::{presets, AlgebraError, BracketEntry, Point, StructureConstants, ValidationReport};
pub use scalar::Scalar;

/// Floating-point group used by all numerical modules.
pub type Group = algebra::GradedGroup<f64>;
/// Group with exact rational arithmetic.
pub type ExactGroup = algebra::GradedGroup<num_rational::Rational64>;
pub type GroupPoint = Point<f64>;
