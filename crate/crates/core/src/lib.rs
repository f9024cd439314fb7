//! Dynamic analysis of nonlinear compartmental networks.
//!
//! A model is partitioned into one subsystem per environmental input plus one
//! for the initial stocks. The decomposed system is integrated together with
//! the original one, and diact flows and storages, ecological indices and
//! interaction classifications are computed from the result.
//!
//! Every numerical type is generic over [`Scalar`]; the aliases below fix it to `f64`.

// NaN must fail comparisons such as `!(x > 0)`; kernels index matrices directly.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod diact;
pub mod discrete;
pub mod dsl;
pub mod export;
pub mod fixtures;
pub mod indicators;
pub mod interactions;
pub mod model;
pub mod ode;
pub mod partition;
pub mod scalar;
pub mod solve;
pub mod transient;

pub use diact::{FlowKind, StorageTrack, Variant};
pub use indicators::{Basis, IndicatorError, Stencil};
pub use interactions::{InteractionType, Scale};
pub use model::{CompartmentalModel, Diagnostic, EvalError, ModelError, Severity};
pub use ode::OdeError;
pub use scalar::Scalar;
pub use solve::{solve_aggregate, solve_decomposed, SolveError, StorageSelection, Total};
pub use transient::PathError;

pub type Model = CompartmentalModel<f64>;
pub type IntegrationSpec = ode::IntegrationSpec<f64>;
pub type SolveOptions = solve::SolveOptions<f64>;
pub type DecomposedTrajectory = solve::DecomposedTrajectory<f64>;
pub type Trajectory = ode::Trajectory<f64>;
pub type DiactField = diact::DiactField<f64>;
pub type FlowPath = transient::FlowPath<f64>;
pub type TransientTrace = transient::TransientTrace<f64>;
pub type Thresholds = partition::Thresholds<f64>;
pub type ClassThresholds = interactions::ClassThresholds<f64>;
pub type EffectReport = indicators::EffectReport<f64>;
pub type IndexSeries = indicators::IndexSeries<f64>;
