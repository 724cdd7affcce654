use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix3, Point3, Vector3};
use serde::Serialize;

use super::poly::{PolyField, PolyTable};
use crate::scalar::Real;

/// A smooth vector field on the chart: values and first derivatives.
pub trait VectorField<T: Real>: Send + Sync {
    fn eval(&self, p: &Point3<T>) -> Vector3<T>;
    fn jacobian(&self, p: &Point3<T>) -> Matrix3<T>;
}

/// Central differences with one Richardson extrapolation step:
/// `J ≈ (4·D(h/2) − D(h)) / 3`, fourth-order accurate in `h`.
pub fn richardson_jacobian<T: Real>(
    f: impl Fn(&Point3<T>) -> Vector3<T>,
    p: &Point3<T>,
    h: T,
) -> Matrix3<T> {
    let central = |h: T| {
        let mut j = Matrix3::zeros();
        for axis in 0..3 {
            let mut plus = *p;
            let mut minus = *p;
            plus[axis] += h;
            minus[axis] -= h;
            let col = (f(&plus) - f(&minus)) / (h + h);
            j.set_column(axis, &col);
        }
        j
    };
    let coarse = central(h);
    let fine = central(h / T::lit(2.0));
    (fine * T::lit(4.0) - coarse) / T::lit(3.0)
}

/// Symbolic tag carried by every field.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldDescriptor {
    Polynomial { label: String, table: PolyTable },
    Numeric { label: String },
}

#[derive(Clone)]
enum Repr<T: Real> {
    Poly(Arc<PolyField<T>>),
    Numeric(Arc<dyn VectorField<T>>),
}

/// Vector field handle: polynomial (exact jacobians and brackets) or numeric.
///
/// Cheap to clone; immutable.
#[derive(Clone)]
pub struct SmoothField<T: Real> {
    repr: Repr<T>,
    label: String,
}

impl<T: Real> fmt::Debug for SmoothField<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.repr {
            Repr::Poly(_) => "poly",
            Repr::Numeric(_) => "numeric",
        };
        write!(f, "SmoothField({kind}: {})", self.label)
    }
}

impl<T: Real> SmoothField<T> {
    pub fn polynomial(label: impl Into<String>, field: PolyField<T>) -> Self {
        Self { repr: Repr::Poly(Arc::new(field)), label: label.into() }
    }

    pub fn numeric(label: impl Into<String>, field: Arc<dyn VectorField<T>>) -> Self {
        Self { repr: Repr::Numeric(field), label: label.into() }
    }

    /// Field given by a closure; its jacobian comes from Richardson differences.
    pub fn from_fn(
        label: impl Into<String>,
        f: impl Fn(&Point3<T>) -> Vector3<T> + Send + Sync + 'static,
    ) -> Self {
        Self::numeric(label, Arc::new(FnField { f, step: T::lit(1e-3) }))
    }

    pub fn constant(label: impl Into<String>, v: Vector3<T>) -> Self {
        Self::polynomial(label, PolyField::constant(v))
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn as_polynomial(&self) -> Option<&PolyField<T>> {
        match &self.repr {
            Repr::Poly(p) => Some(p),
            Repr::Numeric(_) => None,
        }
    }

    pub fn descriptor(&self) -> FieldDescriptor {
        match &self.repr {
            Repr::Poly(p) => FieldDescriptor::Polynomial {
                label: self.label.clone(),
                table: p.to_table(),
            },
            Repr::Numeric(_) => FieldDescriptor::Numeric { label: self.label.clone() },
        }
    }

    #[inline]
    pub fn eval(&self, p: &Point3<T>) -> Vector3<T> {
        match &self.repr {
            Repr::Poly(f) => f.eval(p),
            Repr::Numeric(f) => f.eval(p),
        }
    }

    #[inline]
    pub fn jacobian(&self, p: &Point3<T>) -> Matrix3<T> {
        match &self.repr {
            Repr::Poly(f) => f.jacobian(p),
            Repr::Numeric(f) => f.jacobian(p),
        }
    }

    /// `a·self + b·other`; stays polynomial when both inputs are.
    pub fn combine(&self, a: T, other: &Self, b: T) -> Self {
        let label = format!("{}*{} + {}*{}", a.as_f64(), self.label, b.as_f64(), other.label);
        match (&self.repr, &other.repr) {
            (Repr::Poly(p), Repr::Poly(q)) => Self::polynomial(label, p.scale(a).add(&q.scale(b))),
            _ => Self::numeric(
                label,
                Arc::new(Combination { terms: vec![(a, self.clone()), (b, other.clone())] }),
            ),
        }
    }

    pub fn scale(&self, k: T) -> Self {
        match &self.repr {
            Repr::Poly(p) => Self::polynomial(format!("{}*{}", k.as_f64(), self.label), p.scale(k)),
            Repr::Numeric(_) => Self::numeric(
                format!("{}*{}", k.as_f64(), self.label),
                Arc::new(Combination { terms: vec![(k, self.clone())] }),
            ),
        }
    }

    /// Pointwise bracket value `[self, other](p)` without building a field.
    pub fn bracket_at(&self, other: &Self, p: &Point3<T>) -> Vector3<T> {
        other.jacobian(p) * self.eval(p) - self.jacobian(p) * other.eval(p)
    }
}

/// Lie bracket `[X, Y] = DY·X − DX·Y`.
///
/// Exact for polynomial inputs; otherwise the bracket's jacobian is obtained
/// by Richardson differences of its values.
pub fn lie_bracket<T: Real>(x: &SmoothField<T>, y: &SmoothField<T>) -> SmoothField<T> {
    let label = format!("[{},{}]", x.label, y.label);
    match (&x.repr, &y.repr) {
        (Repr::Poly(p), Repr::Poly(q)) => SmoothField::polynomial(label, p.bracket(q)),
        _ => SmoothField::numeric(
            label,
            Arc::new(BracketField { x: x.clone(), y: y.clone(), step: T::lit(1e-4) }),
        ),
    }
}

/// `ad_X`, so that `ad(&x)(&y) == lie_bracket(&x, &y)`.
pub fn ad<T: Real>(x: &SmoothField<T>) -> impl Fn(&SmoothField<T>) -> SmoothField<T> + '_ {
    move |y| lie_bracket(x, y)
}

struct FnField<F, T> {
    f: F,
    step: T,
}

impl<T: Real, F: Fn(&Point3<T>) -> Vector3<T> + Send + Sync> VectorField<T> for FnField<F, T> {
    fn eval(&self, p: &Point3<T>) -> Vector3<T> {
        (self.f)(p)
    }
    fn jacobian(&self, p: &Point3<T>) -> Matrix3<T> {
        richardson_jacobian(&self.f, p, self.step)
    }
}

struct Combination<T: Real> {
    terms: Vec<(T, SmoothField<T>)>,
}

impl<T: Real> VectorField<T> for Combination<T> {
    fn eval(&self, p: &Point3<T>) -> Vector3<T> {
        self.terms.iter().fold(Vector3::zeros(), |acc, (k, f)| acc + f.eval(p) * *k)
    }
    fn jacobian(&self, p: &Point3<T>) -> Matrix3<T> {
        self.terms.iter().fold(Matrix3::zeros(), |acc, (k, f)| acc + f.jacobian(p) * *k)
    }
}

struct BracketField<T: Real> {
    x: SmoothField<T>,
    y: SmoothField<T>,
    step: T,
}

impl<T: Real> VectorField<T> for BracketField<T> {
    fn eval(&self, p: &Point3<T>) -> Vector3<T> {
        self.x.bracket_at(&self.y, p)
    }
    fn jacobian(&self, p: &Point3<T>) -> Matrix3<T> {
        richardson_jacobian(|q| self.eval(q), p, self.step)
    }
}

/// The two controlled fields together with the brackets used throughout:
/// `X12 = [X1, X2]`, `X± = X1 ± X2`, `X±12 = [X±, X12]`, and the second
/// brackets `[X1, X12]`, `[X2, X12]` needed for singular controls.
#[derive(Clone, Debug)]
pub struct SystemPair<T: Real> {
    pub name: String,
    pub x1: SmoothField<T>,
    pub x2: SmoothField<T>,
    pub x12: SmoothField<T>,
    pub xplus: SmoothField<T>,
    pub xminus: SmoothField<T>,
    pub xp12: SmoothField<T>,
    pub xm12: SmoothField<T>,
    pub x1_12: SmoothField<T>,
    pub x2_12: SmoothField<T>,
}

impl<T: Real> SystemPair<T> {
    pub fn new(name: impl Into<String>, x1: SmoothField<T>, x2: SmoothField<T>) -> Self {
        let x1 = x1.with_label("X1");
        let x2 = x2.with_label("X2");
        let one = T::one();
        let x12 = lie_bracket(&x1, &x2).with_label("X12");
        let xplus = x1.combine(one, &x2, one).with_label("X+");
        let xminus = x1.combine(one, &x2, -one).with_label("X-");
        let xp12 = lie_bracket(&xplus, &x12).with_label("X+12");
        let xm12 = lie_bracket(&xminus, &x12).with_label("X-12");
        let x1_12 = lie_bracket(&x1, &x12).with_label("[X1,X12]");
        let x2_12 = lie_bracket(&x2, &x12).with_label("[X2,X12]");
        Self { name: name.into(), x1, x2, x12, xplus, xminus, xp12, xm12, x1_12, x2_12 }
    }

    /// `X(u)(q) = u1·X1(q) + u2·X2(q)`.
    #[inline]
    pub fn velocity(&self, u1: T, u2: T, q: &Point3<T>) -> Vector3<T> {
        self.x1.eval(q) * u1 + self.x2.eval(q) * u2
    }

    #[inline]
    pub fn velocity_jacobian(&self, u1: T, u2: T, q: &Point3<T>) -> Matrix3<T> {
        self.x1.jacobian(q) * u1 + self.x2.jacobian(q) * u2
    }

    /// The field `X(u)` as a handle.
    pub fn control_field(&self, u1: T, u2: T) -> SmoothField<T> {
        self.x1
            .combine(u1, &self.x2, u2)
            .with_label(format!("X({},{})", u1.as_f64(), u2.as_f64()))
    }

    /// Rows `X1(q), X2(q), X12(q)`: maps a covector to its switching values.
    pub fn frame_matrix(&self, q: &Point3<T>) -> Matrix3<T> {
        let mut m = Matrix3::zeros();
        m.set_row(0, &self.x1.eval(q).transpose());
        m.set_row(1, &self.x2.eval(q).transpose());
        m.set_row(2, &self.x12.eval(q).transpose());
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::poly::Polynomial;

    fn heis() -> SystemPair<f64> {
        let x1 = PolyField::new([
            Polynomial::constant(1.0),
            Polynomial::zero(),
            Polynomial::monomial([0, 1, 0], -0.5),
        ]);
        let x2 = PolyField::new([
            Polynomial::zero(),
            Polynomial::constant(1.0),
            Polynomial::monomial([1, 0, 0], 0.5),
        ]);
        SystemPair::new("heisenberg", SmoothField::polynomial("X1", x1), SmoothField::polynomial("X2", x2))
    }

    #[test]
    fn bracket_of_constants_vanishes() {
        let a = SmoothField::constant("a", Vector3::new(1.0, 2.0, 3.0));
        let b = SmoothField::constant("b", Vector3::new(-1.0, 0.5, 0.0));
        assert!(lie_bracket(&a, &b).as_polynomial().unwrap().is_zero());
        assert!(ad(&a)(&b).as_polynomial().unwrap().is_zero());
    }

    #[test]
    fn self_bracket_vanishes() {
        let s = heis();
        assert!(lie_bracket(&s.x1, &s.x1).as_polynomial().unwrap().is_zero());
        assert!(ad(&s.xplus)(&s.xplus).as_polynomial().unwrap().is_zero());
    }

    #[test]
    fn heisenberg_brackets() {
        let s = heis();
        for p in [Point3::origin(), Point3::new(0.3, -0.7, 0.2)] {
            assert_eq!(s.x12.eval(&p), Vector3::new(0.0, 0.0, 1.0));
            assert_eq!(ad(&s.x1)(&s.x2).eval(&p), Vector3::new(0.0, 0.0, 1.0));
            assert!(s.xp12.eval(&p).norm() == 0.0);
            assert!(s.xm12.eval(&p).norm() == 0.0);
        }
        // [X+, X-] = -2 X12
        let b = lie_bracket(&s.xplus, &s.xminus);
        assert_eq!(b.eval(&Point3::new(0.1, 0.2, 0.3)), Vector3::new(0.0, 0.0, -2.0));
    }

    #[test]
    fn numeric_bracket_matches_polynomial_bracket() {
        let s = heis();
        let x1 = s.x1.clone();
        let numeric_x1 = SmoothField::from_fn("x1fn", move |p| x1.eval(p));
        let b = lie_bracket(&numeric_x1, &s.x2);
        let p = Point3::new(0.2, 0.1, -0.3);
        assert!((b.eval(&p) - s.x12.eval(&p)).norm() < 1e-9);
        assert!(b.jacobian(&p).norm() < 1e-6);
    }

    #[test]
    fn frame_matrix_rows() {
        let s = heis();
        let p = Point3::new(0.4, -0.2, 0.0);
        let m = s.frame_matrix(&p);
        assert!((m.determinant() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn generic_over_f32() {
        let x1 = PolyField::<f32>::new([
            Polynomial::constant(1.0),
            Polynomial::zero(),
            Polynomial::monomial([0, 1, 0], -0.5),
        ]);
        let x2 = PolyField::<f32>::new([
            Polynomial::zero(),
            Polynomial::constant(1.0),
            Polynomial::monomial([1, 0, 0], 0.5),
        ]);
        let s = SystemPair::new("h32", SmoothField::polynomial("X1", x1), SmoothField::polynomial("X2", x2));
        assert_eq!(s.x12.eval(&Point3::new(0.5f32, 0.5, 0.5)), Vector3::new(0.0, 0.0, 1.0));
    }
}
