//! Pontryagin extremals: the state–covector system with maximality
//! feedback, switching functions, arc decomposition and regime analysis.

mod pattern;
mod singular;

pub use pattern::{
    classify_regime, detect_pattern, detect_pattern_in, PatternMatch, Regime, RegimeReport,
    NEGATIVE_CYCLE, POSITIVE_CYCLE,
};
pub use singular::{singular_control, singular_terms, SingularControl, SingularInput};

use std::fmt::Write as _;

use nalgebra::{Point3, Vector3, Vector6};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flows::{ArcSchedule, ControlValue, FlowOptions, Trajectory, TrajectorySegment};
use crate::geometry::{CoordBox, SmoothField, SystemPair};
use crate::ode::{DenseStep, Dopri5, Stepper};
use crate::scalar::Real;
use singular::singular_feedback;

/// Cotangent vector in dual chart coordinates; never zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Covector<T: Real>(pub Vector3<T>);

impl<T: Real> Covector<T> {
    pub fn new(v: Vector3<T>) -> Result<Self> {
        if v.iter().all(|c| *c == T::zero()) || !v.iter().all(|c| c.is_finite()) {
            return Err(Error::ZeroCovector);
        }
        Ok(Self(v))
    }

    pub fn pair(&self, v: &Vector3<T>) -> T {
        self.0.dot(v)
    }
}

/// Point of the cotangent bundle `(q, λ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExtremalState<T: Real> {
    pub q: Point3<T>,
    pub lambda: Covector<T>,
}

impl<T: Real> ExtremalState<T> {
    pub fn new(q: Point3<T>, lambda: Vector3<T>) -> Result<Self> {
        Ok(Self { q, lambda: Covector::new(lambda)? })
    }

    /// `(φ1, φ2, φ12)`.
    pub fn switching(&self, system: &SystemPair<T>) -> Vector3<T> {
        switching_values(system, &self.q, &self.lambda.0)
    }

    /// `H(λ, u) = ⟨λ, u1·X1 + u2·X2⟩`.
    pub fn hamiltonian(&self, system: &SystemPair<T>, u: ControlValue<T>) -> T {
        self.lambda.pair(&system.velocity(u.u1, u.u2, &self.q))
    }

    fn pack(&self) -> Vector6<T> {
        pack(&self.q, &self.lambda.0)
    }
}

pub fn switching_values<T: Real>(system: &SystemPair<T>, q: &Point3<T>, lambda: &Vector3<T>) -> Vector3<T> {
    system.frame_matrix(q) * lambda
}

/// The covector at `q` whose switching values are `(φ1, φ2, φ12)`.
pub fn covector_from_switching<T: Real>(
    system: &SystemPair<T>,
    q: &Point3<T>,
    phi: Vector3<T>,
) -> Result<Covector<T>> {
    let m = system.frame_matrix(q);
    let lam = m.lu().solve(&phi).ok_or(Error::DegenerateFrame)?;
    if !lam.iter().all(|c| c.is_finite()) {
        return Err(Error::DegenerateFrame);
    }
    Covector::new(lam)
}

/// Rescales `λ0` by a positive factor so that `max(|φ1|, |φ2|, |φ12|) = 1`
/// at `q0`.
pub fn normalize_initial<T: Real>(
    lambda0: &Covector<T>,
    q0: &Point3<T>,
    system: &SystemPair<T>,
) -> Result<Covector<T>> {
    let phi = switching_values(system, q0, &lambda0.0);
    let m = phi.amax();
    if !(m > T::zero()) || !m.is_finite() {
        return Err(Error::ZeroCovector);
    }
    Covector::new(lambda0.0 / m)
}

fn pack<T: Real>(q: &Point3<T>, lambda: &Vector3<T>) -> Vector6<T> {
    Vector6::new(q.x, q.y, q.z, lambda.x, lambda.y, lambda.z)
}

fn unpack<T: Real>(z: &Vector6<T>) -> (Point3<T>, Vector3<T>) {
    (Point3::new(z[0], z[1], z[2]), Vector3::new(z[3], z[4], z[5]))
}

/// Coupled right-hand side `q̇ = X(u)(q)`, `λ̇ = −J_{X(u)}(q)ᵀ·λ`.
pub fn hamiltonian_rhs<T: Real>(system: &SystemPair<T>, u1: T, u2: T, z: &Vector6<T>) -> Vector6<T> {
    let (q, lam) = unpack(z);
    let dq = system.velocity(u1, u2, &q);
    let dl = -(system.velocity_jacobian(u1, u2, &q).transpose() * lam);
    Vector6::new(dq.x, dq.y, dq.z, dl.x, dl.y, dl.z)
}

/// Arc type.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "type")]
pub enum ArcKind {
    Bang { u1: i8, u2: i8 },
    /// `φ1 ≡ 0` with `u2` fixed.
    U1Singular { u2: i8 },
    /// `φ2 ≡ 0` with `u1` fixed.
    U2Singular { u1: i8 },
}

impl ArcKind {
    pub fn is_bang(&self) -> bool {
        matches!(self, ArcKind::Bang { .. })
    }

    fn control<T: Real>(&self, system: &SystemPair<T>, z: &Vector6<T>) -> (T, T) {
        let (q, lam) = unpack(z);
        let c = |s: i8| T::lit(f64::from(s));
        match *self {
            ArcKind::Bang { u1, u2 } => (c(u1), c(u2)),
            ArcKind::U1Singular { u2 } => {
                let v = singular_feedback(system, &q, &lam, SingularInput::U1, c(u2));
                (v.max(-T::one()).min(T::one()), c(u2))
            }
            ArcKind::U2Singular { u1 } => {
                let v = singular_feedback(system, &q, &lam, SingularInput::U2, c(u1));
                (c(u1), v.max(-T::one()).min(T::one()))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ArcRecord<T: Real> {
    pub kind: ArcKind,
    pub t_start: T,
    pub t_end: T,
    /// Control at the start of the arc (constant on bang arcs).
    pub control: ControlValue<T>,
}

impl<T: Real> ArcRecord<T> {
    pub fn duration(&self) -> T {
        self.t_end - self.t_start
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ArcDecomposition<T: Real> {
    pub arcs: Vec<ArcRecord<T>>,
    pub switching_times: Vec<T>,
}

impl<T: Real> ArcDecomposition<T> {
    pub fn len(&self) -> usize {
        self.arcs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arcs.is_empty()
    }

    pub fn is_bang_bang(&self) -> bool {
        self.arcs.iter().all(|a| a.kind.is_bang())
    }

    /// Bang vertices in order; `None` if a singular arc is present.
    pub fn bang_sequence(&self) -> Option<Vec<(i8, i8)>> {
        self.arcs
            .iter()
            .map(|a| match a.kind {
                ArcKind::Bang { u1, u2 } => Some((u1, u2)),
                _ => None,
            })
            .collect()
    }

    pub fn durations(&self) -> Vec<T> {
        self.arcs.iter().map(|a| a.duration()).collect()
    }

    /// Number of switchings of `u1` and of `u2` between consecutive bang arcs.
    pub fn switch_counts(&self) -> (usize, usize) {
        let mut c = (0, 0);
        for w in self.arcs.windows(2) {
            let (a, b) = (w[0].control.signs(), w[1].control.signs());
            if let (ArcKind::Bang { .. }, ArcKind::Bang { .. }) = (w[0].kind, w[1].kind) {
                c.0 += usize::from(a.0 != b.0);
                c.1 += usize::from(a.1 != b.1);
            }
        }
        c
    }

    /// Bang-bang decomposition as a schedule.
    pub fn to_schedule(&self) -> Result<ArcSchedule<T>> {
        ArcSchedule::from_pairs(self.arcs.iter().map(|a| (a.control, a.duration())))
    }
}

/// Sampled switching functions with their located zeros.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SwitchingTraces<T: Real> {
    pub t: Vec<T>,
    pub phi1: Vec<T>,
    pub phi2: Vec<T>,
    pub phi12: Vec<T>,
    /// Zero-crossing times of `φ1`, `φ2`, `φ12`.
    pub zeros: [Vec<T>; 3],
    /// Whether the function vanishes on a whole (singular) arc.
    pub identically_zero: [bool; 3],
}

impl<T: Real> SwitchingTraces<T> {
    pub fn series(&self, k: usize) -> &[T] {
        match k {
            0 => &self.phi1,
            1 => &self.phi2,
            _ => &self.phi12,
        }
    }

    pub fn min_abs(&self, k: usize) -> T {
        self.series(k).iter().fold(T::lit(f64::INFINITY), |m, v| m.min(v.abs()))
    }

    /// True when the function crosses zero, vanishes on an arc, or comes
    /// within `eps` of zero at a sample.
    pub fn has_zero(&self, k: usize, eps: T) -> bool {
        !self.zeros[k].is_empty() || self.identically_zero[k] || self.min_abs(k) <= eps
    }
}

/// Settings for extremal integration.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ExtremalOptions<T: Real> {
    pub integrator: Dopri5<T>,
    pub bounds: CoordBox<T>,
    /// Band in which a switching function counts as zero.
    pub eps_zero: T,
    /// Time accuracy of located switchings.
    pub event_tol: T,
    pub max_switch: usize,
    /// Threshold on the singular-control denominator.
    pub eps_den: T,
    /// `|φ12|` below which a crossing of `φ1` or `φ2` enters a singular arc.
    pub singular_entry: T,
    /// Leave a singular arc after this long (it is otherwise followed until
    /// the feedback saturates).
    pub singular_exit: Option<T>,
    /// Sign of the freed control when leaving a singular arc by timeout.
    pub singular_exit_sign: i8,
    /// Smallest admissible `‖λ‖`.
    pub lambda_floor: T,
}

impl<T: Real> Default for ExtremalOptions<T> {
    fn default() -> Self {
        Self {
            integrator: Dopri5 { h_max: T::lit(0.05), ..Dopri5::default() },
            bounds: CoordBox::cube(T::lit(10.0)),
            eps_zero: T::lit(1e-9),
            event_tol: T::lit(1e-10),
            max_switch: 64,
            eps_den: T::lit(1e-9),
            singular_entry: T::lit(1e-7),
            singular_exit: None,
            singular_exit_sign: 1,
            lambda_floor: T::lit(1e-12),
        }
    }
}

impl<T: Real> ExtremalOptions<T> {
    pub fn flow_options(&self) -> FlowOptions<T> {
        FlowOptions { integrator: self.integrator, bounds: self.bounds, ..FlowOptions::default() }
    }
}

/// One row of the extremal grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExtremalSample<T: Real> {
    pub t: T,
    pub q: Point3<T>,
    pub lambda: Vector3<T>,
    pub u: ControlValue<T>,
    pub phi: Vector3<T>,
}

#[derive(Clone, Debug)]
pub struct ExtremalSegment<T: Real> {
    pub kind: ArcKind,
    pub steps: Vec<DenseStep<T, 6>>,
}

/// Output of [`integrate_extremal`].
#[derive(Clone, Debug)]
pub struct ExtremalRun<T: Real> {
    pub initial: ExtremalState<T>,
    pub horizon: T,
    pub segments: Vec<ExtremalSegment<T>>,
    pub samples: Vec<ExtremalSample<T>>,
    pub traces: SwitchingTraces<T>,
    pub arcs: ArcDecomposition<T>,
}

impl<T: Real> ExtremalRun<T> {
    pub fn final_state(&self) -> ExtremalState<T> {
        let s = self.samples.last().expect("at least the initial sample");
        ExtremalState { q: s.q, lambda: Covector(s.lambda) }
    }

    /// Interpolated `(q, λ)` at `t`, or `None` outside `[0, horizon]`.
    pub fn state_at(&self, t: T) -> Option<ExtremalState<T>> {
        if t == T::zero() {
            return Some(self.initial);
        }
        self.segments.iter().flat_map(|s| s.steps.iter()).find(|s| s.contains(t)).map(|s| {
            let (q, lam) = unpack(&s.eval(t));
            ExtremalState { q, lambda: Covector(lam) }
        })
    }

    /// Control at `t`, following the arc active there.
    pub fn control_at(&self, system: &SystemPair<T>, t: T) -> Option<ControlValue<T>> {
        let seg = self.segments.iter().find(|s| s.steps.iter().any(|st| st.contains(t)))?;
        let st = self.state_at(t)?;
        let (u1, u2) = seg.kind.control(system, &st.pack());
        Some(ControlValue { u1, u2 })
    }

    /// State trajectory, one flow segment per arc (singular segments carry
    /// the control at the arc start).
    pub fn trajectory(&self) -> Trajectory<T> {
        let segments = self
            .segments
            .iter()
            .zip(&self.arcs.arcs)
            .map(|(seg, arc)| TrajectorySegment {
                control: arc.control,
                steps: seg.steps.iter().map(DenseStep::project::<3>).collect(),
            })
            .collect();
        Trajectory { t_start: T::zero(), t_end: self.horizon, q_start: self.initial.q, segments }
    }

    /// CSV with columns `t,x,y,z,l1,l2,l3,u1,u2,phi1,phi2,phi12`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,x,y,z,l1,l2,l3,u1,u2,phi1,phi2,phi12\n");
        for r in &self.samples {
            let vals = [
                r.t, r.q.x, r.q.y, r.q.z, r.lambda.x, r.lambda.y, r.lambda.z, r.u.u1, r.u.u2, r.phi.x,
                r.phi.y, r.phi.z,
            ];
            let line: Vec<String> = vals.iter().map(|v| v.as_f64().to_string()).collect();
            let _ = writeln!(s, "{}", line.join(","));
        }
        s
    }
}

enum Event {
    /// Crossing of `φ1` (0) or `φ2` (1), possibly both.
    Switch { which: [bool; 2] },
    Saturation { sign: i8 },
    Timeout,
}

/// Bisection for the first sign change of `g` on the step, with `g(t0) ≥ 0`
/// and `g(t1) < 0`.
fn bisect<T: Real>(step: &DenseStep<T, 6>, g: impl Fn(&Vector6<T>) -> T, tol: T) -> T {
    let (mut a, mut b) = (step.t0, step.t1());
    if g(&step.y0()) <= T::zero() {
        return a;
    }
    while (b - a).abs() > tol {
        let m = (a + b) / T::lit(2.0);
        if g(&step.eval(m)) >= T::zero() {
            a = m;
        } else {
            b = m;
        }
    }
    (a + b) / T::lit(2.0)
}

fn initial_kind<T: Real>(
    system: &SystemPair<T>,
    x0: &ExtremalState<T>,
    opts: &ExtremalOptions<T>,
) -> Result<ArcKind> {
    let phi = x0.switching(system);
    let eps = opts.eps_zero;
    let (z1, z2) = (phi.x.abs() <= eps, phi.y.abs() <= eps);
    if z1 && z2 {
        return Err(Error::AmbiguousFeedback(format!(
            "phi1 = {:e} and phi2 = {:e} both vanish at t = 0",
            phi.x.as_f64(),
            phi.y.as_f64()
        )));
    }
    if z1 {
        let s2 = phi.y.sign_i8();
        if phi.z.abs() <= eps {
            singular_control(system, &x0.q, &x0.lambda.0, SingularInput::U1, T::lit(f64::from(s2)), opts.eps_den)?;
            return Ok(ArcKind::U1Singular { u2: s2 });
        }
        // φ̇1 = −u2·φ12
        return Ok(ArcKind::Bang { u1: (-(T::lit(f64::from(s2)) * phi.z)).sign_i8(), u2: s2 });
    }
    if z2 {
        let s1 = phi.x.sign_i8();
        if phi.z.abs() <= eps {
            singular_control(system, &x0.q, &x0.lambda.0, SingularInput::U2, T::lit(f64::from(s1)), opts.eps_den)?;
            return Ok(ArcKind::U2Singular { u1: s1 });
        }
        // φ̇2 = u1·φ12
        return Ok(ArcKind::Bang { u1: s1, u2: (T::lit(f64::from(s1)) * phi.z).sign_i8() });
    }
    Ok(ArcKind::Bang { u1: phi.x.sign_i8(), u2: phi.y.sign_i8() })
}

fn control_value<T: Real>(kind: ArcKind, system: &SystemPair<T>, z: &Vector6<T>) -> ControlValue<T> {
    let (u1, u2) = kind.control(system, z);
    ControlValue { u1, u2 }
}

/// Integrates the extremal from `x0` over `[0, horizon]` with the maximality
/// feedback `u_i = sign(φ_i)`, switching at located zeros of `φ1`, `φ2` and
/// following singular arcs with the singular feedback.
pub fn integrate_extremal<T: Real>(
    system: &SystemPair<T>,
    x0: ExtremalState<T>,
    horizon: T,
    opts: &ExtremalOptions<T>,
) -> Result<ExtremalRun<T>> {
    if !(horizon > T::zero()) {
        return Err(Error::InvalidSchedule(format!("horizon {} must be positive", horizon.as_f64())));
    }
    let mut kind = initial_kind(system, &x0, opts)?;
    let z0 = x0.pack();
    let mut stepper = Stepper::new(opts.integrator, T::zero(), z0);
    let mut segments = vec![ExtremalSegment { kind, steps: Vec::new() }];
    let mut arcs = vec![ArcRecord {
        kind,
        t_start: T::zero(),
        t_end: T::zero(),
        control: control_value(kind, system, &z0),
    }];
    let sample = |t: T, z: &Vector6<T>, kind: ArcKind| {
        let (q, lam) = unpack(z);
        ExtremalSample { t, q, lambda: lam, u: control_value(kind, system, z), phi: switching_values(system, &q, &lam) }
    };
    let mut samples = vec![sample(T::zero(), &z0, kind)];
    let mut switching_times = Vec::new();
    let mut zeros: [Vec<T>; 3] = Default::default();
    let mut identically_zero = [false; 3];
    if !kind.is_bang() {
        identically_zero[if matches!(kind, ArcKind::U1Singular { .. }) { 0 } else { 1 }] = true;
        identically_zero[2] = true;
    }

    while stepper.t != horizon {
        let f = |_t: T, z: &Vector6<T>| {
            let (u1, u2) = kind.control(system, z);
            hamiltonian_rhs(system, u1, u2, z)
        };
        let step = stepper.advance(&f, horizon)?;
        let z1 = step.y1();
        let (q1, lam1) = unpack(&z1);
        if !(q1.coords.iter().all(|c| c.is_finite())) || !opts.bounds.contains(&q1) {
            return Err(Error::BlowUp { t: step.t1().as_f64() });
        }
        if !(lam1.norm() > opts.lambda_floor) {
            return Err(Error::NonzeroViolation { t: step.t1().as_f64() });
        }

        let phi_of = |z: &Vector6<T>| {
            let (q, lam) = unpack(z);
            switching_values(system, &q, &lam)
        };
        let mut event: Option<(T, Event)> = None;
        match kind {
            ArcKind::Bang { u1, u2 } => {
                let signs = [T::lit(f64::from(u1)), T::lit(f64::from(u2))];
                let end = phi_of(&z1);
                let mut times = [None, None];
                for i in 0..2 {
                    if signs[i] * end[i] < T::zero() {
                        times[i] = Some(bisect(&step, |z| signs[i] * phi_of(z)[i], opts.event_tol));
                    }
                }
                let te = match (times[0], times[1]) {
                    (Some(a), Some(b)) => Some(a.min(b)),
                    (a, b) => a.or(b),
                };
                if let Some(te) = te {
                    let which = [0, 1].map(|i| times[i].is_some_and(|ti| (ti - te).abs() <= opts.event_tol * T::lit(10.0)));
                    event = Some((te, Event::Switch { which }));
                }
            }
            ArcKind::U1Singular { u2: c } | ArcKind::U2Singular { u1: c } => {
                let (k_fixed, input) = match kind {
                    ArcKind::U1Singular { .. } => (1usize, SingularInput::U1),
                    _ => (0usize, SingularInput::U2),
                };
                let cf = T::lit(f64::from(c));
                let raw = |z: &Vector6<T>| {
                    let (q, lam) = unpack(z);
                    singular_feedback(system, &q, &lam, input, cf)
                };
                let arc_start = arcs.last().unwrap().t_start;
                let mut cands: Vec<(T, Event)> = Vec::new();
                if cf * phi_of(&z1)[k_fixed] < T::zero() {
                    cands.push((bisect(&step, |z| cf * phi_of(z)[k_fixed], opts.event_tol), Event::Switch {
                        which: [k_fixed == 0, k_fixed == 1],
                    }));
                }
                let r1 = raw(&z1);
                if r1.abs() > T::one() {
                    let te = bisect(&step, |z| T::one() - raw(z).abs(), opts.event_tol);
                    cands.push((te, Event::Saturation { sign: r1.sign_i8() }));
                }
                if let Some(d) = opts.singular_exit {
                    if step.t1() >= arc_start + d {
                        cands.push(((arc_start + d).max(step.t0), Event::Timeout));
                    }
                }
                event = cands.into_iter().min_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            }
        }

        let Some((te, ev)) = event else {
            samples.push(sample(step.t1(), &z1, kind));
            segments.last_mut().unwrap().steps.push(step);
            continue;
        };

        // Re-step exactly to the event time.
        let ze = if te == step.t0 {
            step.y0()
        } else {
            let s = opts.integrator.single_step(&f, step.t0, &step.y0(), te - step.t0);
            let ze = s.y1();
            segments.last_mut().unwrap().steps.push(s);
            ze
        };
        samples.push(sample(te, &ze, kind));
        let (qe, le) = unpack(&ze);
        let phi_e = switching_values(system, &qe, &le);

        let next = match (kind, ev) {
            (ArcKind::Bang { u1, u2 }, Event::Switch { which }) => {
                if which[0] && which[1] {
                    ArcKind::Bang { u1: -u1, u2: -u2 }
                } else if phi_e.z.abs() <= opts.singular_entry
                    && singular_entry_ok(system, &qe, &le, which, [u1, u2], opts)
                {
                    if which[0] {
                        ArcKind::U1Singular { u2 }
                    } else {
                        ArcKind::U2Singular { u1 }
                    }
                } else if which[0] {
                    ArcKind::Bang { u1: -u1, u2 }
                } else {
                    ArcKind::Bang { u1, u2: -u2 }
                }
            }
            (ArcKind::U1Singular { u2 }, Event::Switch { .. }) => {
                return Err(Error::AmbiguousFeedback(format!(
                    "phi2 vanishes at t = {} on a u1-singular arc (u2 = {u2})",
                    te.as_f64()
                )))
            }
            (ArcKind::U2Singular { u1 }, Event::Switch { .. }) => {
                return Err(Error::AmbiguousFeedback(format!(
                    "phi1 vanishes at t = {} on a u2-singular arc (u1 = {u1})",
                    te.as_f64()
                )))
            }
            (ArcKind::U1Singular { u2 }, Event::Saturation { sign }) => ArcKind::Bang { u1: sign, u2 },
            (ArcKind::U2Singular { u1 }, Event::Saturation { sign }) => ArcKind::Bang { u1, u2: sign },
            (ArcKind::U1Singular { u2 }, Event::Timeout) => ArcKind::Bang { u1: opts.singular_exit_sign, u2 },
            (ArcKind::U2Singular { u1 }, Event::Timeout) => ArcKind::Bang { u1, u2: opts.singular_exit_sign },
            _ => kind,
        };
        match next {
            ArcKind::Bang { u1, u2 } => {
                if let ArcKind::Bang { u1: a, u2: b } = kind {
                    if a != u1 {
                        zeros[0].push(te);
                    }
                    if b != u2 {
                        zeros[1].push(te);
                    }
                }
            }
            ArcKind::U1Singular { .. } => {
                identically_zero[0] = true;
                identically_zero[2] = true;
                zeros[0].push(te);
            }
            ArcKind::U2Singular { .. } => {
                identically_zero[1] = true;
                identically_zero[2] = true;
                zeros[1].push(te);
            }
        }
        switching_times.push(te);
        if switching_times.len() > opts.max_switch {
            return Err(Error::ChatteringSuspected(opts.max_switch));
        }
        arcs.last_mut().unwrap().t_end = te;
        kind = next;
        arcs.push(ArcRecord { kind, t_start: te, t_end: te, control: control_value(kind, system, &ze) });
        segments.push(ExtremalSegment { kind, steps: Vec::new() });
        samples.push(sample(te, &ze, kind));
        stepper.reset(te, ze);
    }
    arcs.last_mut().unwrap().t_end = horizon;

    // Drop arcs of zero length left by an event landing on the horizon.
    let mut keep: Vec<bool> = arcs.iter().map(|a| a.t_end > a.t_start).collect();
    if keep.iter().all(|k| !k) {
        keep[0] = true;
    }
    let mut it = keep.iter();
    segments.retain(|_| *it.next().unwrap());
    let mut it = keep.iter();
    arcs.retain(|_| *it.next().unwrap());
    switching_times.retain(|t| *t < horizon);

    zeros[2] = phi12_zeros(system, &segments, opts.event_tol);
    let traces = SwitchingTraces {
        t: samples.iter().map(|s| s.t).collect(),
        phi1: samples.iter().map(|s| s.phi.x).collect(),
        phi2: samples.iter().map(|s| s.phi.y).collect(),
        phi12: samples.iter().map(|s| s.phi.z).collect(),
        zeros,
        identically_zero,
    };
    Ok(ExtremalRun {
        initial: x0,
        horizon,
        segments,
        samples,
        traces,
        arcs: ArcDecomposition { arcs, switching_times },
    })
}

fn singular_entry_ok<T: Real>(
    system: &SystemPair<T>,
    q: &Point3<T>,
    lam: &Vector3<T>,
    which: [bool; 2],
    signs: [i8; 2],
    opts: &ExtremalOptions<T>,
) -> bool {
    let (input, fixed) = if which[0] {
        (SingularInput::U1, signs[1])
    } else {
        (SingularInput::U2, signs[0])
    };
    singular_control(system, q, lam, input, T::lit(f64::from(fixed)), opts.eps_den)
        .is_ok_and(|u| !u.clamped)
}

fn phi12_zeros<T: Real>(system: &SystemPair<T>, segments: &[ExtremalSegment<T>], tol: T) -> Vec<T> {
    let phi12 = |z: &Vector6<T>| {
        let (q, lam) = unpack(z);
        lam.dot(&system.x12.eval(&q))
    };
    let mut out = Vec::new();
    for st in segments.iter().flat_map(|s| s.steps.iter()) {
        let (a, b) = (phi12(&st.y0()), phi12(&st.y1()));
        if a != T::zero() && a * b < T::zero() {
            let s = a.signum();
            out.push(bisect(st, |z| s * phi12(z), tol));
        }
    }
    out
}

/// Largest `|d/dt⟨λ, Y(q)⟩ − ⟨λ, [X(u), Y](q)⟩|` over step midpoints, the
/// derivative taken by Richardson-extrapolated central differences of the
/// dense output.
pub fn switching_derivative_check<T: Real>(run: &ExtremalRun<T>, system: &SystemPair<T>, y: &SmoothField<T>) -> T {
    let pairing = |z: &Vector6<T>| {
        let (q, lam) = unpack(z);
        lam.dot(&y.eval(&q))
    };
    let mut worst = T::zero();
    for seg in &run.segments {
        for st in &seg.steps {
            if st.h.abs() < T::lit(1e-6) {
                continue;
            }
            let tm = st.t0 + st.h * T::lit(0.5);
            let d = |dt: T| (pairing(&st.eval(tm + dt)) - pairing(&st.eval(tm - dt))) / (dt + dt);
            let dt = st.h * T::lit(0.05);
            let deriv = (d(dt / T::lit(2.0)) * T::lit(4.0) - d(dt)) / T::lit(3.0);
            let z = st.eval(tm);
            let (q, lam) = unpack(&z);
            let (u1, u2) = seg.kind.control(system, &z);
            let xu = system.control_field(u1, u2);
            let bracket = lam.dot(&xu.bracket_at(y, &q));
            worst = worst.max((deriv - bracket).abs());
        }
    }
    worst
}

/// `(q, λ)` carried along a fixed schedule from time `s` to time `t`.
pub fn propagate_lift<T: Real>(
    system: &SystemPair<T>,
    schedule: &ArcSchedule<T>,
    s: T,
    state: &ExtremalState<T>,
    t: T,
    opts: &FlowOptions<T>,
) -> Result<ExtremalState<T>> {
    let mut z = state.pack();
    for p in schedule.pieces(s, t)? {
        let u = p.control;
        z = opts.integrator.endpoint(|_t, z: &Vector6<T>| hamiltonian_rhs(system, u.u1, u.u2, z), p.from, z, p.to)?;
        let (q, _) = unpack(&z);
        opts.check_inside(p.to, &q)?;
    }
    let (q, lam) = unpack(&z);
    ExtremalState::new(q, lam)
}
