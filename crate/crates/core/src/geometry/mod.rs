//! Vector fields on a single global chart, Lie brackets and frame checks.

mod field;
mod frame;
mod poly;

pub use field::{
    ad, lie_bracket, richardson_jacobian, FieldDescriptor, SmoothField, SystemPair, VectorField,
};
pub use frame::{frame_hypotheses, moving_basis_check, CoordBox, FrameReport, DEFAULT_FRAME_THRESHOLD};
pub use poly::{Exponents, PolyField, PolyTable, Polynomial};

pub type ChartPoint<T> = nalgebra::Point3<T>;
pub type TangentVector<T> = nalgebra::Vector3<T>;
