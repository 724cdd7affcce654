//! Built-in systems.
//!
//! * `heisenberg`: `X1 = (1, 0, -y/2)`, `X2 = (0, 1, x/2)`. `X12 = ∂z` is
//!   central, so only the first frame hypothesis holds.
//! * `generic`: `X1 = (1, z/2, -y/2)`, `X2 = (-z/2, 1, x/2)`. All five frame
//!   hypotheses hold on the unit box (`min |det| = 9/16`).
//! * `abelian`: `X1 = ∂x`, `X2 = ∂y`.

use nalgebra::Point3;

use crate::error::{Error, Result};
use crate::geometry::{frame_hypotheses, CoordBox, PolyField, Polynomial, SmoothField, SystemPair};
use crate::scalar::Real;

pub const FIXTURE_NAMES: [&str; 3] = ["heisenberg", "generic", "abelian"];

/// Grid resolution used for load-time validation.
pub const VALIDATION_SAMPLES: usize = 9;

fn poly_pair<T: Real>(name: &str, x1: [Polynomial<T>; 3], x2: [Polynomial<T>; 3]) -> SystemPair<T> {
    SystemPair::new(
        name,
        SmoothField::polynomial("X1", PolyField::new(x1)),
        SmoothField::polynomial("X2", PolyField::new(x2)),
    )
}

fn lin<T: Real>(exp: [u32; 3], c: f64) -> Polynomial<T> {
    Polynomial::monomial(exp, T::lit(c))
}

pub fn heisenberg<T: Real>() -> SystemPair<T> {
    poly_pair(
        "heisenberg",
        [Polynomial::constant(T::one()), Polynomial::zero(), lin([0, 1, 0], -0.5)],
        [Polynomial::zero(), Polynomial::constant(T::one()), lin([1, 0, 0], 0.5)],
    )
}

pub fn generic<T: Real>() -> SystemPair<T> {
    poly_pair(
        "generic",
        [Polynomial::constant(T::one()), lin([0, 0, 1], 0.5), lin([0, 1, 0], -0.5)],
        [lin([0, 0, 1], -0.5), Polynomial::constant(T::one()), lin([1, 0, 0], 0.5)],
    )
}

pub fn abelian<T: Real>() -> SystemPair<T> {
    poly_pair(
        "abelian",
        [Polynomial::constant(T::one()), Polynomial::zero(), Polynomial::zero()],
        [Polynomial::zero(), Polynomial::constant(T::one()), Polynomial::zero()],
    )
}

/// Which frame hypotheses a fixture is required to satisfy on the unit box.
fn required_frames(name: &str) -> usize {
    match name {
        "generic" => 5,
        "heisenberg" => 1,
        _ => 0,
    }
}

/// Checks the frame hypotheses a fixture promises.
pub fn validate<T: Real>(system: &SystemPair<T>) -> Result<()> {
    let need = required_frames(&system.name);
    if need == 0 {
        return Ok(());
    }
    let reports = frame_hypotheses(
        system,
        &CoordBox::unit(),
        VALIDATION_SAMPLES,
        T::lit(crate::geometry::DEFAULT_FRAME_THRESHOLD),
    )?;
    for r in reports.iter().take(need) {
        if !r.pass {
            return Err(Error::FixtureInvalid {
                name: system.name.clone(),
                reason: format!(
                    "frame ({}) degenerates: min |det| = {:e} at {:?}",
                    r.labels.join(", "),
                    r.min_abs_det.as_f64(),
                    Point3::new(r.argmin.x.as_f64(), r.argmin.y.as_f64(), r.argmin.z.as_f64())
                ),
            });
        }
    }
    Ok(())
}

/// Looks up and validates a fixture by name.
pub fn by_name<T: Real>(name: &str) -> Result<SystemPair<T>> {
    let sys = match name {
        "heisenberg" => heisenberg(),
        "generic" => generic(),
        "abelian" => abelian(),
        other => return Err(Error::UnknownFixture(other.to_string())),
    };
    validate(&sys)?;
    Ok(sys)
}

/// All fixtures, validated.
pub fn fixtures<T: Real>() -> Result<Vec<SystemPair<T>>> {
    FIXTURE_NAMES.iter().map(|n| by_name(n)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::moving_basis_check;

    #[test]
    fn all_fixtures_load() {
        let list = fixtures::<f64>().unwrap();
        assert_eq!(list.len(), 3);
        assert!(matches!(by_name::<f64>("nope"), Err(Error::UnknownFixture(_))));
    }

    #[test]
    fn heisenberg_frames() {
        let s = heisenberg::<f64>();
        let r = frame_hypotheses(&s, &CoordBox::unit(), 5, 1e-8).unwrap();
        assert!(r[0].pass);
        assert!((r[0].min_abs_det - 1.0).abs() < 1e-14);
        assert!(r[1..].iter().all(|r| !r.pass));
    }

    #[test]
    fn generic_frames() {
        let s = generic::<f64>();
        let r = frame_hypotheses(&s, &CoordBox::unit(), 9, 1e-8).unwrap();
        assert!(r.iter().all(|r| r.pass && r.min_abs_det >= 0.5625 - 1e-12));
    }

    #[test]
    fn abelian_fails_bracket_frame() {
        let s = abelian::<f64>();
        let r = moving_basis_check([&s.x1, &s.x2, &s.x12], &CoordBox::unit(), 3, 1e-8).unwrap();
        assert!(!r.pass);
    }

    #[test]
    fn tampered_fixture_is_invalid() {
        let mut s = generic::<f64>();
        s.name = "generic".into();
        s.xp12 = s.x12.clone();
        assert!(matches!(validate(&s), Err(Error::FixtureInvalid { .. })));
    }
}
