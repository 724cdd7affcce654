use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("region is empty or degenerate: {0}")]
    EmptyRegion(String),
    #[error("invalid polynomial field descriptor: {0}")]
    Descriptor(String),
    #[error("invalid control value ({u1}, {u2}): components must lie in [-1, 1]")]
    InvalidControl { u1: f64, u2: f64 },
    #[error("invalid arc schedule: {0}")]
    InvalidSchedule(String),
    #[error("trajectory left the working box at t = {t}")]
    BlowUp { t: f64 },
    #[error("integrator step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },
    #[error("integrator exceeded {0} steps")]
    TooManySteps(usize),
    #[error("finite-difference step {step} is too small for integrator tolerance {tol}")]
    StepTooSmall { step: f64, tol: f64 },
    #[error("time {t} lies outside the schedule span [0, {end}]")]
    OutOfSpan { t: f64, end: f64 },
    #[error("more than {0} switchings: chattering suspected")]
    ChatteringSuspected(usize),
    #[error("covector norm underflowed at t = {t}")]
    NonzeroViolation { t: f64 },
    #[error("ambiguous feedback: {0}")]
    AmbiguousFeedback(String),
    #[error("covector annihilates the frame (X1, X2, X12)")]
    ZeroCovector,
    #[error("singular control denominator {value:e} below threshold")]
    SingularDenominator { value: f64 },
    #[error("frame (X1, X2, X12) is degenerate at the base point")]
    DegenerateFrame,
    #[error("constraint space has dimension {found}, expected {expected}")]
    RankDeficient { expected: usize, found: usize },
    #[error("extremal lift construction failed: shooting residual {residual:e}")]
    LiftConstructionFailed { residual: f64 },
    #[error("invalid candidate family: {0}")]
    InvalidFamily(String),
    #[error("target ({x}, {y}, {z}) lies outside the working box")]
    TargetOutsideBox { x: f64, y: f64, z: f64 },
    #[error("no candidate reaches the target within the time budget")]
    Unreachable,
    #[error("fixture `{name}` failed validation: {reason}")]
    FixtureInvalid { name: String, reason: String },
    #[error("unknown fixture `{0}`")]
    UnknownFixture(String),
}

pub type Result<T> = std::result::Result<T, Error>;
