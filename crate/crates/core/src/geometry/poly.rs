//! Polynomial vector fields on the coordinate chart.
//!
//! A polynomial is a sorted list of `(exponents, coefficient)` terms in the
//! chart coordinates `(x, y, z)`. Brackets of polynomial fields stay
//! polynomial, so they are computed exactly.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub type Exponents = [u32; 3];

/// Scalar polynomial in `(x, y, z)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial<T> {
    terms: Vec<(Exponents, T)>,
}

impl<T: Real> Polynomial<T> {
    pub fn zero() -> Self {
        Self { terms: Vec::new() }
    }

    pub fn constant(c: T) -> Self {
        Self::monomial([0, 0, 0], c)
    }

    pub fn monomial(exp: Exponents, c: T) -> Self {
        Self::from_terms([(exp, c)])
    }

    /// Builds a polynomial, merging repeated monomials and dropping zeros.
    pub fn from_terms(terms: impl IntoIterator<Item = (Exponents, T)>) -> Self {
        let mut map: BTreeMap<Exponents, T> = BTreeMap::new();
        for (e, c) in terms {
            let slot = map.entry(e).or_insert_with(T::zero);
            *slot += c;
        }
        Self {
            terms: map.into_iter().filter(|(_, c)| *c != T::zero()).collect(),
        }
    }

    pub fn terms(&self) -> &[(Exponents, T)] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms
            .iter()
            .map(|(e, _)| e[0] + e[1] + e[2])
            .max()
            .unwrap_or(0)
    }

    pub fn eval(&self, p: &Point3<T>) -> T {
        let mut acc = T::zero();
        for (e, c) in &self.terms {
            acc += *c * pow(p.x, e[0]) * pow(p.y, e[1]) * pow(p.z, e[2]);
        }
        acc
    }

    pub fn derivative(&self, axis: usize) -> Self {
        Self::from_terms(self.terms.iter().filter(|(e, _)| e[axis] > 0).map(|(e, c)| {
            let mut d = *e;
            d[axis] -= 1;
            (d, *c * T::from_u32(e[axis]).unwrap())
        }))
    }

    pub fn scale(&self, k: T) -> Self {
        Self::from_terms(self.terms.iter().map(|(e, c)| (*e, *c * k)))
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::from_terms(self.terms.iter().chain(other.terms.iter()).copied())
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-T::one()))
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Vec::with_capacity(self.terms.len() * other.terms.len());
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                out.push(([ea[0] + eb[0], ea[1] + eb[1], ea[2] + eb[2]], *ca * *cb));
            }
        }
        Self::from_terms(out)
    }
}

#[inline]
fn pow<T: Real>(base: T, e: u32) -> T {
    match e {
        0 => T::one(),
        1 => base,
        2 => base * base,
        _ => base.powi(e as i32),
    }
}

/// Vector field whose three components are polynomials, with its jacobian
/// polynomials cached at construction.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyField<T> {
    comps: [Polynomial<T>; 3],
    jac: [[Polynomial<T>; 3]; 3],
}

impl<T: Real> PolyField<T> {
    pub fn new(comps: [Polynomial<T>; 3]) -> Self {
        let jac = std::array::from_fn(|i| std::array::from_fn(|j| comps[i].derivative(j)));
        Self { comps, jac }
    }

    pub fn zero() -> Self {
        Self::new([Polynomial::zero(), Polynomial::zero(), Polynomial::zero()])
    }

    pub fn constant(v: Vector3<T>) -> Self {
        Self::new([
            Polynomial::constant(v.x),
            Polynomial::constant(v.y),
            Polynomial::constant(v.z),
        ])
    }

    pub fn components(&self) -> &[Polynomial<T>; 3] {
        &self.comps
    }

    pub fn is_zero(&self) -> bool {
        self.comps.iter().all(Polynomial::is_zero)
    }

    pub fn eval(&self, p: &Point3<T>) -> Vector3<T> {
        Vector3::new(self.comps[0].eval(p), self.comps[1].eval(p), self.comps[2].eval(p))
    }

    pub fn jacobian(&self, p: &Point3<T>) -> Matrix3<T> {
        Matrix3::from_fn(|i, j| self.jac[i][j].eval(p))
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::new(std::array::from_fn(|i| self.comps[i].add(&other.comps[i])))
    }

    pub fn scale(&self, k: T) -> Self {
        Self::new(std::array::from_fn(|i| self.comps[i].scale(k)))
    }

    /// Exact Lie bracket `[self, other] = D(other)·self − D(self)·other`.
    pub fn bracket(&self, other: &Self) -> Self {
        let comps = std::array::from_fn(|k| {
            let mut acc = Polynomial::zero();
            for j in 0..3 {
                acc = acc
                    .add(&self.comps[j].mul(&other.jac[k][j]))
                    .sub(&other.comps[j].mul(&self.jac[k][j]));
            }
            acc
        });
        Self::new(comps)
    }

    pub fn to_table(&self) -> PolyTable {
        let conv = |p: &Polynomial<T>| {
            p.terms()
                .iter()
                .map(|(e, c)| (format!("{},{},{}", e[0], e[1], e[2]), c.as_f64()))
                .collect::<BTreeMap<_, _>>()
        };
        PolyTable {
            x: conv(&self.comps[0]),
            y: conv(&self.comps[1]),
            z: conv(&self.comps[2]),
        }
    }

    pub fn from_table(table: &PolyTable) -> Result<Self> {
        let conv = |name: &str, m: &BTreeMap<String, f64>| -> Result<Polynomial<T>> {
            let mut terms = Vec::with_capacity(m.len());
            for (key, c) in m {
                if !c.is_finite() {
                    return Err(Error::Descriptor(format!("{name}[{key}]: non-finite coefficient")));
                }
                terms.push((parse_exponents(key).map_err(|e| {
                    Error::Descriptor(format!("{name}[{key}]: {e}"))
                })?, T::lit(*c)));
            }
            Ok(Polynomial::from_terms(terms))
        };
        Ok(Self::new([conv("x", &table.x)?, conv("y", &table.y)?, conv("z", &table.z)?]))
    }
}

fn parse_exponents(key: &str) -> std::result::Result<Exponents, String> {
    let parts: Vec<&str> = key.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err("expected three comma-separated exponents".into());
    }
    let mut e = [0u32; 3];
    for (slot, part) in e.iter_mut().zip(parts) {
        *slot = part
            .parse()
            .map_err(|_| format!("`{part}` is not a nonnegative integer exponent"))?;
    }
    Ok(e)
}

/// JSON form of a polynomial field: for each component, a map from the
/// exponent triple `"a,b,c"` (powers of x, y, z) to its coefficient.
///
/// ```json
/// {"x": {"0,0,0": 1.0}, "y": {}, "z": {"0,1,0": -0.5}}
/// ```
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyTable {
    #[serde(default)]
    pub x: BTreeMap<String, f64>,
    #[serde(default)]
    pub y: BTreeMap<String, f64>,
    #[serde(default)]
    pub z: BTreeMap<String, f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn heis() -> (PolyField<f64>, PolyField<f64>) {
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
        (x1, x2)
    }

    #[test]
    fn heisenberg_bracket_is_vertical_unit() {
        let (x1, x2) = heis();
        let b = x1.bracket(&x2);
        assert_eq!(b, PolyField::constant(Vector3::new(0.0, 0.0, 1.0)));
    }

    #[test]
    fn derivative_and_product() {
        // (x^2 y + 3z) * (y) -> x^2 y^2 + 3yz ; d/dy -> 2x^2 y + 3z
        let p = Polynomial::from_terms([([2, 1, 0], 1.0), ([0, 0, 1], 3.0)]);
        let q = Polynomial::monomial([0, 1, 0], 1.0);
        let pq = p.mul(&q);
        let d = pq.derivative(1);
        let pt = Point3::new(1.5, -0.5, 2.0);
        assert!((d.eval(&pt) - (2.0 * 2.25 * -0.5 + 3.0 * 2.0_f64)).abs() < 1e-14);
        assert_eq!(pq.degree(), 4);
    }

    #[test]
    fn cancellation_drops_terms() {
        let p = Polynomial::from_terms([([1, 0, 0], 2.0), ([1, 0, 0], -2.0)]);
        assert!(p.is_zero());
    }

    #[test]
    fn table_roundtrip() {
        let (x1, _) = heis();
        let t = x1.to_table();
        assert_eq!(t.z.get("0,1,0"), Some(&-0.5));
        let back = PolyField::<f64>::from_table(&t).unwrap();
        assert_eq!(back, x1);
    }

    #[test]
    fn malformed_exponent_key_is_rejected() {
        let mut t = PolyTable::default();
        t.x.insert("1,2".into(), 1.0);
        assert!(matches!(PolyField::<f64>::from_table(&t), Err(Error::Descriptor(_))));
        let mut t = PolyTable::default();
        t.y.insert("a,0,0".into(), 1.0);
        assert!(PolyField::<f64>::from_table(&t).is_err());
    }
}
