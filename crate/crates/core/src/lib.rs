//! Extremals, switching structure and second-order optimality tests for
//! driftless control systems `q̇ = u1·X1(q) + u2·X2(q)` in three dimensions
//! with controls in the square `[-1, 1]^2`.
//!
//! The numerical core is generic over the scalar type ([`Real`], implemented
//! for `f32` and `f64`); the aliases below fix it to `f64`. The brute-force
//! minimum-time oracle works in `f64` only.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod extremal;
pub mod fixtures;
pub mod flows;
pub mod geometry;
pub mod ode;
pub mod oracle;
pub mod scalar;
pub mod second_order;

pub use error::{Error, Result};
pub use scalar::Real;

pub type ChartPoint = geometry::ChartPoint<f64>;
pub type TangentVector = geometry::TangentVector<f64>;
pub type Field = geometry::SmoothField<f64>;
pub type System = geometry::SystemPair<f64>;
pub type Control = flows::ControlValue<f64>;
pub type Schedule = flows::ArcSchedule<f64>;
pub type Path = flows::Trajectory<f64>;
pub type Options = flows::FlowOptions<f64>;
pub type Extremal = extremal::ExtremalRun<f64>;
pub type ExtremalState = extremal::ExtremalState<f64>;
pub type Covector = extremal::Covector<f64>;
pub type HFields = second_order::HFieldSet<f64>;
pub type SecondOrder = second_order::SecondOrderReport<f64>;
