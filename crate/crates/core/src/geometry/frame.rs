use nalgebra::{Matrix3, Point3};
use serde::Serialize;

use super::field::{SmoothField, SystemPair};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Axis-aligned coordinate box standing in for the working neighborhood.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CoordBox<T: Real> {
    pub lo: Point3<T>,
    pub hi: Point3<T>,
}

impl<T: Real> CoordBox<T> {
    pub fn new(lo: Point3<T>, hi: Point3<T>) -> Self {
        Self { lo, hi }
    }

    /// The cube `[-r, r]^3`.
    pub fn cube(r: T) -> Self {
        Self::new(Point3::new(-r, -r, -r), Point3::new(r, r, r))
    }

    pub fn unit() -> Self {
        Self::cube(T::one())
    }

    pub fn is_degenerate(&self) -> bool {
        (0..3).any(|i| !(self.lo[i] < self.hi[i]))
    }

    pub fn contains(&self, p: &Point3<T>) -> bool {
        (0..3).all(|i| p[i] >= self.lo[i] && p[i] <= self.hi[i])
    }
}

pub const DEFAULT_FRAME_THRESHOLD: f64 = 1e-8;

#[derive(Clone, Debug, Serialize)]
pub struct FrameReport<T: Real> {
    pub labels: [String; 3],
    pub min_abs_det: T,
    pub argmin: Point3<T>,
    pub threshold: T,
    pub pass: bool,
}

/// Samples `|det[f0 f1 f2]|` on a `samples^3` grid over `region` and
/// passes iff the minimum exceeds `threshold`.
pub fn moving_basis_check<T: Real>(
    fields: [&SmoothField<T>; 3],
    region: &CoordBox<T>,
    samples: usize,
    threshold: T,
) -> Result<FrameReport<T>> {
    if region.is_degenerate() {
        return Err(Error::EmptyRegion(format!(
            "lo = {:?}, hi = {:?}",
            region.lo.map(|v| v.as_f64()),
            region.hi.map(|v| v.as_f64())
        )));
    }
    if samples == 0 {
        return Err(Error::EmptyRegion("zero samples".into()));
    }
    let coord = |axis: usize, k: usize| -> T {
        if samples == 1 {
            (region.lo[axis] + region.hi[axis]) / T::lit(2.0)
        } else {
            let s = T::from_usize(k).unwrap() / T::from_usize(samples - 1).unwrap();
            region.lo[axis] + (region.hi[axis] - region.lo[axis]) * s
        }
    };
    let mut min_abs_det = T::max_value().unwrap();
    let mut argmin = region.lo;
    for i in 0..samples {
        for j in 0..samples {
            for k in 0..samples {
                let p = Point3::new(coord(0, i), coord(1, j), coord(2, k));
                let m = Matrix3::from_columns(&[fields[0].eval(&p), fields[1].eval(&p), fields[2].eval(&p)]);
                let d = m.determinant().abs();
                if d < min_abs_det {
                    min_abs_det = d;
                    argmin = p;
                }
            }
        }
    }
    Ok(FrameReport {
        labels: [0, 1, 2].map(|i| fields[i].label().to_string()),
        min_abs_det,
        argmin,
        threshold,
        pass: min_abs_det > threshold,
    })
}

/// The five frame hypotheses of the local arc bound, in order:
/// `(X1,X2,X12)`, `(X1,X12,X+12)`, `(X1,X12,X-12)`, `(X2,X12,X+12)`, `(X2,X12,X-12)`.
pub fn frame_hypotheses<T: Real>(
    system: &SystemPair<T>,
    region: &CoordBox<T>,
    samples: usize,
    threshold: T,
) -> Result<Vec<FrameReport<T>>> {
    let s = system;
    [
        [&s.x1, &s.x2, &s.x12],
        [&s.x1, &s.x12, &s.xp12],
        [&s.x1, &s.x12, &s.xm12],
        [&s.x2, &s.x12, &s.xp12],
        [&s.x2, &s.x12, &s.xm12],
    ]
    .into_iter()
    .map(|triple| moving_basis_check(triple, region, samples, threshold))
    .collect()
}
