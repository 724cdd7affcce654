use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::SystemPair;
use crate::scalar::Real;

/// Which control is singular.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SingularInput {
    U1,
    U2,
}

/// Singular feedback value with the unclamped value kept for diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SingularControl<T: Real> {
    pub value: T,
    pub raw: T,
    pub clamped: bool,
}

/// Numerator and denominator of the singular feedback `u = −num/den`.
///
/// With the other control fixed at `c`, the single-input system is
/// `q̇ = f + u·g`; for a `u1`-singular arc `f = c·X2`, `g = X1`, so
/// `[f,[f,g]] = −c²·[X2,X12]` and `[g,[f,g]] = −c·[X1,X12]`. The `u2` case
/// is symmetric with `[f,g] = c·X12`.
pub fn singular_terms<T: Real>(
    system: &SystemPair<T>,
    q: &Point3<T>,
    lambda: &Vector3<T>,
    which: SingularInput,
    fixed: T,
) -> (T, T) {
    let a1 = lambda.dot(&system.x1_12.eval(q));
    let a2 = lambda.dot(&system.x2_12.eval(q));
    let c2 = fixed * fixed;
    match which {
        SingularInput::U1 => (-c2 * a2, -fixed * a1),
        SingularInput::U2 => (c2 * a1, fixed * a2),
    }
}

/// Singular feedback at `(q, λ)`, clamped to `[-1, 1]`.
pub fn singular_control<T: Real>(
    system: &SystemPair<T>,
    q: &Point3<T>,
    lambda: &Vector3<T>,
    which: SingularInput,
    fixed: T,
    eps_den: T,
) -> Result<SingularControl<T>> {
    let (num, den) = singular_terms(system, q, lambda, which, fixed);
    if !(den.abs() >= eps_den) {
        return Err(Error::SingularDenominator { value: den.as_f64() });
    }
    let raw = -num / den;
    let value = raw.max(-T::one()).min(T::one());
    Ok(SingularControl { value, raw, clamped: value != raw })
}

/// Feedback used inside the integrator: clamped, and zero when the
/// denominator is degenerate.
pub(crate) fn singular_feedback<T: Real>(
    system: &SystemPair<T>,
    q: &Point3<T>,
    lambda: &Vector3<T>,
    which: SingularInput,
    fixed: T,
) -> T {
    let (num, den) = singular_terms(system, q, lambda, which, fixed);
    let raw = -num / den;
    if raw.is_finite() {
        raw
    } else {
        T::zero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extremal::covector_from_switching;
    use crate::fixtures;

    #[test]
    fn heisenberg_denominator_vanishes() {
        let s = fixtures::heisenberg::<f64>();
        let lam = Vector3::new(0.0, 1.0, 0.0);
        let e = singular_control(&s, &Point3::origin(), &lam, SingularInput::U1, 1.0, 1e-9).unwrap_err();
        assert!(matches!(e, Error::SingularDenominator { .. }));
    }

    #[test]
    fn generic_origin_has_zero_numerator() {
        let s = fixtures::generic::<f64>();
        let q = Point3::origin();
        let lam = covector_from_switching(&s, &q, Vector3::new(0.0, 1.0, 0.0)).unwrap();
        let u = singular_control(&s, &q, &lam.0, SingularInput::U1, 1.0, 1e-9).unwrap();
        assert!(u.value.abs() < 1e-14);
        assert!(!u.clamped);
    }

    #[test]
    fn generic_singular_states_are_admissible() {
        let s = fixtures::generic::<f64>();
        for &(x, y, z) in &[(0.3, -0.2, 0.1), (-0.5, 0.4, -0.3), (0.2, 0.6, 0.5)] {
            let q = Point3::new(x, y, z);
            for c in [1.0, -1.0] {
                let lam = covector_from_switching(&s, &q, Vector3::new(0.0, c, 0.0)).unwrap();
                let u = singular_control(&s, &q, &lam.0, SingularInput::U1, c, 1e-9).unwrap();
                assert!(u.raw.abs() < 1.0, "u1 = {} at {q:?}", u.raw);
                let lam = covector_from_switching(&s, &q, Vector3::new(c, 0.0, 0.0)).unwrap();
                let u = singular_control(&s, &q, &lam.0, SingularInput::U2, c, 1e-9).unwrap();
                assert!(u.raw.abs() < 1.0, "u2 = {} at {q:?}", u.raw);
            }
        }
    }
}
