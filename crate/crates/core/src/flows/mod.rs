//! Trajectories of `q̇ = u1·X1(q) + u2·X2(q)` under piecewise-constant
//! controls, flow maps `P(s, t)` and transport of vector fields along them.

mod schedule;
mod transport;

pub use schedule::{Arc, ArcSchedule, ControlValue, Piece};
pub use transport::{
    transport_field_vector, transported_field, transported_field_from, transported_field_leading_order,
    TransportMode,
};

use std::fmt::Write as _;

use nalgebra::{Point3, Vector3};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{CoordBox, SystemPair};
use crate::ode::{DenseStep, Dopri5};
use crate::scalar::Real;

/// Integrator settings plus the working box `Ω` and the finite-difference
/// step used for jacobians of transported fields.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FlowOptions<T: Real> {
    pub integrator: Dopri5<T>,
    pub bounds: CoordBox<T>,
    pub fd_step: T,
}

impl<T: Real> Default for FlowOptions<T> {
    fn default() -> Self {
        Self { integrator: Dopri5::default(), bounds: CoordBox::cube(T::lit(10.0)), fd_step: T::lit(1e-4) }
    }
}

impl<T: Real> FlowOptions<T> {
    pub fn with_tolerance(tol: T) -> Self {
        Self { integrator: Dopri5::with_tolerance(tol), ..Self::default() }
    }

    pub(crate) fn check_inside(&self, t: T, q: &Point3<T>) -> Result<()> {
        if !(q.x.is_finite() && q.y.is_finite() && q.z.is_finite()) || !self.bounds.contains(q) {
            return Err(Error::BlowUp { t: t.as_f64() });
        }
        Ok(())
    }
}

/// Stretch of a trajectory with one control value.
#[derive(Clone, Debug)]
pub struct TrajectorySegment<T: Real> {
    pub control: ControlValue<T>,
    pub steps: Vec<DenseStep<T, 3>>,
}

/// Dense trajectory; each segment keeps the integrator's accepted steps and
/// their quartic continuous extension.
#[derive(Clone, Debug)]
pub struct Trajectory<T: Real> {
    pub t_start: T,
    pub t_end: T,
    pub q_start: Point3<T>,
    pub segments: Vec<TrajectorySegment<T>>,
}

impl<T: Real> Trajectory<T> {
    pub fn endpoint(&self) -> Point3<T> {
        self.segments
            .iter()
            .rev()
            .find_map(|s| s.steps.last())
            .map_or(self.q_start, |s| Point3::from(s.y1()))
    }

    /// Interpolated state at `t` (clamped to the trajectory span).
    pub fn state_at(&self, t: T) -> Point3<T> {
        let (lo, hi) = if self.t_start <= self.t_end {
            (self.t_start, self.t_end)
        } else {
            (self.t_end, self.t_start)
        };
        let t = t.max(lo).min(hi);
        for seg in &self.segments {
            for s in &seg.steps {
                if s.contains(t) {
                    return Point3::from(s.eval(t));
                }
            }
        }
        self.endpoint()
    }

    /// Control active at `t`.
    pub fn control_at(&self, t: T) -> Option<ControlValue<T>> {
        self.segments
            .iter()
            .find(|seg| seg.steps.iter().any(|s| s.contains(t)))
            .map(|seg| seg.control)
    }

    /// Grid rows `(t, q, u)`: the initial point and every accepted step end.
    pub fn rows(&self) -> Vec<(T, Point3<T>, ControlValue<T>)> {
        let mut out = Vec::new();
        if let Some(first) = self.segments.first() {
            out.push((self.t_start, self.q_start, first.control));
        }
        for seg in &self.segments {
            for s in &seg.steps {
                out.push((s.t1(), Point3::from(s.y1()), seg.control));
            }
        }
        out
    }

    /// CSV with columns `t,x,y,z,u1,u2`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,x,y,z,u1,u2\n");
        for (t, q, u) in self.rows() {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                t.as_f64(),
                q.x.as_f64(),
                q.y.as_f64(),
                q.z.as_f64(),
                u.u1.as_f64(),
                u.u2.as_f64()
            );
        }
        s
    }

    /// Largest gap at step midpoints between the interpolant and an
    /// independent half step from the step's initial state.
    pub fn midpoint_residual(&self, system: &SystemPair<T>, integrator: &Dopri5<T>) -> T {
        let mut worst = T::zero();
        for seg in &self.segments {
            let f = velocity_rhs(system, seg.control);
            for s in &seg.steps {
                let half = s.h * T::lit(0.5);
                let direct = integrator.single_step(&f, s.t0, &s.y0(), half).y1();
                worst = worst.max((s.eval(s.t0 + half) - direct).norm());
            }
        }
        worst
    }
}

pub(crate) fn velocity_rhs<'a, T: Real>(
    system: &'a SystemPair<T>,
    u: ControlValue<T>,
) -> impl Fn(T, &Vector3<T>) -> Vector3<T> + 'a {
    move |_t, y| system.velocity(u.u1, u.u2, &Point3::from(*y))
}

fn integrate_pieces<T: Real>(
    system: &SystemPair<T>,
    pieces: &[Piece<T>],
    q0: Point3<T>,
    t0: T,
    t1: T,
    opts: &FlowOptions<T>,
) -> Result<Trajectory<T>> {
    opts.check_inside(t0, &q0)?;
    let mut q = q0;
    let mut segments = Vec::with_capacity(pieces.len());
    for p in pieces {
        let steps = opts.integrator.integrate(velocity_rhs(system, p.control), p.from, q.coords, p.to)?;
        for s in &steps {
            opts.check_inside(s.t1(), &Point3::from(s.y1()))?;
        }
        if let Some(last) = steps.last() {
            q = Point3::from(last.y1());
        }
        segments.push(TrajectorySegment { control: p.control, steps });
    }
    Ok(Trajectory { t_start: t0, t_end: t1, q_start: q0, segments })
}

/// Solves the control system arc by arc over the whole schedule, restarting
/// the integrator exactly at every switching time.
pub fn integrate_flow<T: Real>(
    system: &SystemPair<T>,
    schedule: &ArcSchedule<T>,
    q0: Point3<T>,
    opts: &FlowOptions<T>,
) -> Result<Trajectory<T>> {
    let end = schedule.total_duration();
    integrate_pieces(system, &schedule.pieces(T::zero(), end)?, q0, T::zero(), end, opts)
}

/// Trajectory from `(s, q)` to time `t`, either direction.
pub fn flow_segment<T: Real>(
    system: &SystemPair<T>,
    schedule: &ArcSchedule<T>,
    s: T,
    t: T,
    q: Point3<T>,
    opts: &FlowOptions<T>,
) -> Result<Trajectory<T>> {
    integrate_pieces(system, &schedule.pieces(s, t)?, q, s, t, opts)
}

/// `P(s, t)(q)`: the state at time `t` of the trajectory through `q` at
/// time `s`. `t < s` runs the dynamics backwards.
pub fn flow_map<T: Real>(
    system: &SystemPair<T>,
    schedule: &ArcSchedule<T>,
    s: T,
    t: T,
    q: Point3<T>,
    opts: &FlowOptions<T>,
) -> Result<Point3<T>> {
    opts.check_inside(s, &q)?;
    let mut y = q.coords;
    for p in schedule.pieces(s, t)? {
        y = opts.integrator.endpoint(velocity_rhs(system, p.control), p.from, y, p.to)?;
        opts.check_inside(p.to, &Point3::from(y))?;
    }
    Ok(Point3::from(y))
}

/// Endpoint of a concatenation of constant-control arcs without building a
/// schedule. Zero durations are skipped.
pub fn concatenation_endpoint<T: Real>(
    system: &SystemPair<T>,
    arcs: &[(ControlValue<T>, T)],
    q0: Point3<T>,
    opts: &FlowOptions<T>,
) -> Result<Point3<T>> {
    let mut y = q0.coords;
    let mut t = T::zero();
    for &(u, d) in arcs {
        if d > T::zero() {
            y = opts.integrator.endpoint(velocity_rhs(system, u), t, y, t + d)?;
            t += d;
            opts.check_inside(t, &Point3::from(y))?;
        }
    }
    Ok(Point3::from(y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn heis() -> SystemPair<f64> {
        fixtures::heisenberg()
    }

    fn one(u1: f64, u2: f64, d: f64) -> ArcSchedule<f64> {
        ArcSchedule::from_pairs([(ControlValue::new(u1, u2).unwrap(), d)]).unwrap()
    }

    #[test]
    fn straight_lines_from_origin() {
        let s = heis();
        let o = FlowOptions::default();
        let tr = integrate_flow(&s, &one(1.0, 0.0, 1.0), Point3::origin(), &o).unwrap();
        assert!((tr.endpoint() - Point3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
        let tr = integrate_flow(&s, &one(1.0, 1.0, 0.7), Point3::origin(), &o).unwrap();
        assert!((tr.endpoint() - Point3::new(0.7, 0.7, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn two_arc_closed_form() {
        let s = heis();
        let sched = ArcSchedule::from_pairs([
            (ControlValue::new(1.0, 0.0).unwrap(), 1.0),
            (ControlValue::new(0.0, 1.0).unwrap(), 1.0),
        ])
        .unwrap();
        let tr = integrate_flow(&s, &sched, Point3::origin(), &FlowOptions::default()).unwrap();
        assert!((tr.endpoint() - Point3::new(1.0, 1.0, 0.5)).norm() < 1e-10);
        assert!(tr.midpoint_residual(&s, &Dopri5::default()) < 1e-10);
        let mid = tr.state_at(1.5);
        assert!((mid - Point3::new(1.0, 0.5, 0.25)).norm() < 1e-10);
        assert_eq!(tr.control_at(1.5).unwrap().u2, 1.0);
    }

    #[test]
    fn flow_map_identity_inverse_and_diagonal() {
        let s = heis();
        let o = FlowOptions::default();
        let sched = one(1.0, 1.0, 1.0);
        let q = Point3::new(0.1, -0.2, 0.3);
        assert_eq!(flow_map(&s, &sched, 0.4, 0.4, q, &o).unwrap(), q);
        let p = flow_map(&s, &sched, 0.0, 0.5, Point3::origin(), &o).unwrap();
        assert!((p - Point3::new(0.5, 0.5, 0.0)).norm() < 1e-12);
        let sched = ArcSchedule::from_pairs([
            (ControlValue::bang(1, -1), 0.3),
            (ControlValue::bang(-1, -1), 0.2),
        ])
        .unwrap();
        let fwd = flow_map(&s, &sched, 0.1, 0.45, q, &o).unwrap();
        let back = flow_map(&s, &sched, 0.45, 0.1, fwd, &o).unwrap();
        assert!((back - q).norm() < 1e-8);
    }

    #[test]
    fn leaving_the_box_is_blow_up() {
        let s = heis();
        let o = FlowOptions { bounds: CoordBox::cube(0.5), ..FlowOptions::default() };
        let err = integrate_flow(&s, &one(1.0, 0.0, 1.0), Point3::origin(), &o).unwrap_err();
        assert!(matches!(err, Error::BlowUp { .. }));
    }

    #[test]
    fn csv_has_header_and_rows() {
        let s = heis();
        let tr = integrate_flow(&s, &one(1.0, -1.0, 0.2), Point3::origin(), &FlowOptions::default()).unwrap();
        let csv = tr.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,x,y,z,u1,u2"));
        assert!(lines.next().unwrap().starts_with("0,0,0,0,1,-1"));
    }
}
