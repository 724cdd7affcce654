use nalgebra::{Matrix3, Point3, SVector, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use super::{flow_map, ArcSchedule, ControlValue, FlowOptions, Piece};
use crate::error::{Error, Result};
use crate::geometry::{lie_bracket, richardson_jacobian, SmoothField, SystemPair, VectorField};
use crate::ode::Dopri5;
use crate::scalar::Real;

/// How transported fields are built.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportMode {
    /// Variational transport with finite-difference jacobians.
    #[default]
    Numeric,
    /// Truncated expansion `Y + Σ d_k [V_k, Y]`.
    LeadingOrder,
}

/// The vector `w` at `q(τ̄)` with `⟨λ(τ̄), w⟩ = ⟨λ(t), Y(q(t))⟩` for every
/// adjoint solution: `Y(q(t))` carried back to `τ̄` by `v̇ = J_{X(u)}(q)·v`.
pub fn transport_field_vector<T: Real>(
    system: &SystemPair<T>,
    schedule: &ArcSchedule<T>,
    q0: Point3<T>,
    tau: T,
    t: T,
    y: &SmoothField<T>,
    opts: &FlowOptions<T>,
) -> Result<Vector3<T>> {
    let q_tau = flow_map(system, schedule, T::zero(), tau, q0, opts)?;
    let q_t = flow_map(system, schedule, tau, t, q_tau, opts)?;
    let mut state = Vector6::zeros();
    state.fixed_rows_mut::<3>(0).copy_from(&q_t.coords);
    state.fixed_rows_mut::<3>(3).copy_from(&y.eval(&q_t));
    for p in schedule.pieces(t, tau)? {
        let u = p.control;
        let f = |_s: T, z: &Vector6<T>| {
            let q = Point3::new(z[0], z[1], z[2]);
            let v = Vector3::new(z[3], z[4], z[5]);
            let dq = system.velocity(u.u1, u.u2, &q);
            let dv = system.velocity_jacobian(u.u1, u.u2, &q) * v;
            Vector6::new(dq.x, dq.y, dq.z, dv.x, dv.y, dv.z)
        };
        state = opts.integrator.endpoint(f, p.from, state, p.to)?;
        opts.check_inside(p.to, &Point3::new(state[0], state[1], state[2]))?;
    }
    Ok(Vector3::new(state[3], state[4], state[5]))
}

/// The push-forward of `Y` from time `t` to time `τ̄` as a field on a
/// neighborhood of `q(τ̄)`.
///
/// A query point `p` is flowed with the step sequence recorded at `q(τ̄)`
/// together with the variational matrix `Φ = ∂q(t)/∂p`, and the value is
/// `Φ⁻¹·Y(q(t))`. Reusing one step sequence makes the field a smooth
/// function of `p`, so its Richardson jacobian (step `opts.fd_step`) is
/// not polluted by step-selection noise.
pub fn transported_field<T: Real>(
    system: &SystemPair<T>,
    schedule: &ArcSchedule<T>,
    q0: Point3<T>,
    tau: T,
    t: T,
    y: &SmoothField<T>,
    opts: &FlowOptions<T>,
) -> Result<SmoothField<T>> {
    schedule.pieces(tau, t)?;
    let q_tau = flow_map(system, schedule, T::zero(), tau, q0, opts)?;
    transported_field_from(system, schedule, tau, q_tau, t, y, opts)
}

/// As [`transported_field`], with the base point `q(τ̄)` given directly.
pub fn transported_field_from<T: Real>(
    system: &SystemPair<T>,
    schedule: &ArcSchedule<T>,
    tau: T,
    q_tau: Point3<T>,
    t: T,
    y: &SmoothField<T>,
    opts: &FlowOptions<T>,
) -> Result<SmoothField<T>> {
    let tol = opts.integrator.atol.max(opts.integrator.rtol);
    if !(opts.fd_step > tol * T::lit(10.0)) {
        return Err(Error::StepTooSmall { step: opts.fd_step.as_f64(), tol: tol.as_f64() });
    }
    let pieces = schedule.pieces(tau, t)?;
    if pieces.is_empty() {
        return Ok(y.clone());
    }
    let mut grids = Vec::with_capacity(pieces.len());
    let mut state = variational_start(&q_tau);
    for p in &pieces {
        let f = variational_rhs(system, p.control);
        let steps = opts.integrator.integrate(&f, p.from, state, p.to)?;
        for s in &steps {
            let e = s.y1();
            opts.check_inside(s.t1(), &Point3::new(e[0], e[1], e[2]))?;
        }
        state = steps.last().map_or(state, |s| s.y1());
        grids.push((*p, steps.iter().map(|s| s.h).collect::<Vec<_>>()));
    }
    let label = format!("P({},{})*{}", tau.as_f64(), t.as_f64(), y.label());
    let field = TransportedField {
        system: system.clone(),
        grids,
        y: y.clone(),
        integrator: opts.integrator,
        fd_step: opts.fd_step,
    };
    Ok(SmoothField::numeric(label, std::sync::Arc::new(field)))
}

/// First-order expansion `Y + Σ_k d_k·[V_k, Y]` over the pieces from `τ̄`
/// to `t`, with `d_k` the signed piece durations and `V_k = X(u_k)`.
pub fn transported_field_leading_order<T: Real>(
    system: &SystemPair<T>,
    schedule: &ArcSchedule<T>,
    tau: T,
    t: T,
    y: &SmoothField<T>,
) -> Result<SmoothField<T>> {
    let mut out = y.clone();
    for p in schedule.pieces(tau, t)? {
        let v = system.control_field(p.control.u1, p.control.u2);
        out = out.combine(T::one(), &lie_bracket(&v, y), p.signed_duration());
    }
    Ok(out.with_label(format!("P1({},{})*{}", tau.as_f64(), t.as_f64(), y.label())))
}

type State12<T> = SVector<T, 12>;

fn variational_start<T: Real>(q: &Point3<T>) -> State12<T> {
    let mut s = State12::zeros();
    s.fixed_rows_mut::<3>(0).copy_from(&q.coords);
    s[3] = T::one();
    s[7] = T::one();
    s[11] = T::one();
    s
}

fn split<T: Real>(s: &State12<T>) -> (Point3<T>, Matrix3<T>) {
    let q = Point3::new(s[0], s[1], s[2]);
    let phi = Matrix3::from_column_slice(&s.as_slice()[3..12]);
    (q, phi)
}

fn variational_rhs<'a, T: Real>(
    system: &'a SystemPair<T>,
    u: ControlValue<T>,
) -> impl Fn(T, &State12<T>) -> State12<T> + 'a {
    move |_t, s| {
        let (q, phi) = split(s);
        let dq = system.velocity(u.u1, u.u2, &q);
        let dphi = system.velocity_jacobian(u.u1, u.u2, &q) * phi;
        let mut out = State12::zeros();
        out.fixed_rows_mut::<3>(0).copy_from(&dq);
        out.as_mut_slice()[3..12].copy_from_slice(dphi.as_slice());
        out
    }
}

struct TransportedField<T: Real> {
    system: SystemPair<T>,
    grids: Vec<(Piece<T>, Vec<T>)>,
    y: SmoothField<T>,
    integrator: Dopri5<T>,
    fd_step: T,
}

impl<T: Real> VectorField<T> for TransportedField<T> {
    fn eval(&self, p: &Point3<T>) -> Vector3<T> {
        let mut state = variational_start(p);
        for (piece, hs) in &self.grids {
            let f = variational_rhs(&self.system, piece.control);
            state = self.integrator.replay(&f, piece.from, state, hs);
        }
        let (q, phi) = split(&state);
        let target = self.y.eval(&q);
        phi.lu().solve(&target).unwrap_or_else(|| Vector3::repeat(T::lit(f64::NAN)))
    }

    fn jacobian(&self, p: &Point3<T>) -> Matrix3<T> {
        richardson_jacobian(|q| self.eval(q), p, self.fd_step)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn heis() -> SystemPair<f64> {
        fixtures::heisenberg()
    }

    fn single(u: ControlValue<f64>, d: f64) -> ArcSchedule<f64> {
        ArcSchedule::from_pairs([(u, d)]).unwrap()
    }

    #[test]
    fn heisenberg_single_arc_transport_is_exact_first_order() {
        let s = heis();
        let o = FlowOptions::default();
        let t = 0.3;
        let sched = single(ControlValue::bang(1, 1), t);
        let w = transport_field_vector(&s, &sched, Point3::origin(), 0.0, t, &s.x2, &o).unwrap();
        let expect = s.x2.eval(&Point3::origin()) + s.x12.eval(&Point3::origin()) * t;
        assert!((w - expect).norm() < 1e-8);
        let field = transported_field(&s, &sched, Point3::origin(), 0.0, t, &s.x2, &o).unwrap();
        assert!((field.eval(&Point3::origin()) - expect).norm() < 1e-8);
    }

    #[test]
    fn identity_transport() {
        let s = heis();
        let o = FlowOptions::default();
        let sched = single(ControlValue::bang(1, -1), 0.5);
        let q0 = Point3::new(0.1, 0.2, -0.1);
        let w = transport_field_vector(&s, &sched, q0, 0.2, 0.2, &s.x1, &o).unwrap();
        let q = flow_map(&s, &sched, 0.0, 0.2, q0, &o).unwrap();
        assert!((w - s.x1.eval(&q)).norm() < 1e-14);
        let f = transported_field(&s, &sched, q0, 0.2, 0.2, &s.x1, &o).unwrap();
        assert_eq!(f.label(), "X1");
    }

    #[test]
    fn commuting_system_transport_is_trivial() {
        let s = fixtures::abelian();
        let o = FlowOptions::default();
        let sched = ArcSchedule::from_pairs([
            (ControlValue::bang(1, 1), 0.4),
            (ControlValue::bang(-1, 1), 0.3),
        ])
        .unwrap();
        let w = transport_field_vector(&s, &sched, Point3::origin(), 0.1, 0.7, &s.x2, &o).unwrap();
        assert!((w - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-14);
        let f = transported_field(&s, &sched, Point3::origin(), 0.7, 0.0, &s.x1, &o).unwrap();
        let p = Point3::new(0.3, 0.3, 0.3);
        assert!((f.eval(&p) - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-14);
        assert!(f.jacobian(&p).norm() < 1e-10);
    }

    #[test]
    fn bracket_of_transported_field_near_minus_two_x12() {
        let s = heis();
        let o = FlowOptions::default();
        let t = 0.05;
        let sched = single(ControlValue::bang(1, 1), t);
        let h = transported_field(&s, &sched, Point3::origin(), 0.0, t, &s.xminus, &o).unwrap();
        let b = s.xplus.bracket_at(&h, &Point3::origin());
        assert!((b - Vector3::new(0.0, 0.0, -2.0)).norm() < 1e-6);
    }

    #[test]
    fn step_too_small_is_rejected() {
        let s = heis();
        let o = FlowOptions { fd_step: 1e-12, ..FlowOptions::default() };
        let sched = single(ControlValue::bang(1, 1), 0.1);
        let err = transported_field(&s, &sched, Point3::origin(), 0.0, 0.1, &s.x1, &o).unwrap_err();
        assert!(matches!(err, Error::StepTooSmall { .. }));
    }

    #[test]
    fn leading_order_on_heisenberg_matches_numeric() {
        let s = heis();
        let o = FlowOptions::default();
        let sched = ArcSchedule::from_pairs([
            (ControlValue::bang(1, -1), 0.1),
            (ControlValue::bang(-1, -1), 0.1),
            (ControlValue::bang(-1, 1), 0.1),
        ])
        .unwrap();
        let q0 = Point3::new(0.05, -0.02, 0.01);
        let lo = transported_field_leading_order(&s, &sched, 0.3, 0.0, &s.x1).unwrap();
        let nu = transported_field(&s, &sched, q0, 0.3, 0.0, &s.x1, &o).unwrap();
        let q = flow_map(&s, &sched, 0.0, 0.3, q0, &o).unwrap();
        assert!((lo.eval(&q) - nu.eval(&q)).norm() < 1e-8);
        assert!(lo.as_polynomial().is_some());
    }
}
