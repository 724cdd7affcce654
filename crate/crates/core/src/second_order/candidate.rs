use nalgebra::{DMatrix, Matrix3, Point3, Vector3};
use serde::Serialize;

use super::{
    assemble_q, build_h_fields, quadratic_form_matrix, signature_alternate, SecondOrderOptions,
    SecondOrderReport, Signature, Verdict,
};
use crate::error::{Error, Result};
use crate::extremal::{covector_from_switching, propagate_lift, switching_values, Covector, ExtremalState, NEGATIVE_CYCLE};
use crate::flows::{flow_map, ArcSchedule, ControlValue, FlowOptions, TransportMode};
use crate::geometry::SystemPair;
use crate::scalar::Real;

/// Limit of `Q` in the coordinates `(α3, α4, α5)`.
pub const LIMIT_MATRIX: [[f64; 3]; 3] = [[-4.0, 0.0, 2.0], [0.0, 0.0, 2.0], [2.0, 2.0, 0.0]];

/// Schedule following a vertex cycle from its first entry.
pub fn pattern_schedule<T: Real>(cycle: &[(i8, i8); 4], durations: &[T]) -> Result<ArcSchedule<T>> {
    ArcSchedule::from_pairs(durations.iter().enumerate().map(|(k, &d)| {
        let (a, b) = cycle[k % 4];
        (ControlValue::bang(a, b), d)
    }))
}

/// Six arcs of length `t1` in the `φ12 < 0` pattern, starting at `(1, −1)`.
pub fn negative_pattern_schedule<T: Real>(t1: T) -> Result<ArcSchedule<T>> {
    pattern_schedule(&NEGATIVE_CYCLE, &[t1; 6])
}

/// Settings for the six-arc pipeline.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CandidateOptions<T: Real> {
    pub flow: FlowOptions<T>,
    pub second: SecondOrderOptions<T>,
    pub mode: TransportMode,
    /// Largest accepted arc length.
    pub t_max: T,
    /// `τ̄` is the start of this arc (a `u1` switch).
    pub tau_arc: usize,
    pub q0: Point3<T>,
    /// Value imposed on `φ12(τ̄)`.
    pub phi12_bar: T,
    /// Largest accepted shooting residual.
    pub lift_tol: T,
}

impl<T: Real> Default for CandidateOptions<T> {
    fn default() -> Self {
        Self {
            flow: FlowOptions::default(),
            second: SecondOrderOptions::default(),
            mode: TransportMode::Numeric,
            t_max: T::lit(0.5),
            tau_arc: 3,
            q0: Point3::origin(),
            phi12_bar: -T::one(),
            lift_tol: T::lit(1e-8),
        }
    }
}

/// Extremal lift of a bang-bang candidate built by shooting on `φ2(τ̄)`.
#[derive(Clone, Debug, Serialize)]
pub struct SixArcLift<T: Real> {
    pub tau_bar: T,
    pub q_bar: Point3<T>,
    pub lambda_bar: Covector<T>,
    pub phi2_bar: T,
    /// `|φ2|` at the matched `u2` switch.
    pub residual: T,
    /// `|φ_i(τ_k)|` for every control switching at every `τ_k`.
    pub switching_residuals: Vec<T>,
}

impl<T: Real> SixArcLift<T> {
    pub fn state(&self) -> ExtremalState<T> {
        ExtremalState { q: self.q_bar, lambda: self.lambda_bar }
    }
}

/// Pins `φ1(τ̄) = 0`, `φ12(τ̄) = phi12_bar` and solves for `φ2(τ̄)` so that
/// `φ2` vanishes at the `u2` switch nearest after `τ̄` (before it if there
/// is none). The residual is affine in `φ2(τ̄)`, so secant steps converge
/// in one iteration up to round-off.
pub fn six_arc_lift<T: Real>(
    system: &SystemPair<T>,
    schedule: &ArcSchedule<T>,
    opts: &CandidateOptions<T>,
) -> Result<SixArcLift<T>> {
    let starts = schedule.arc_starts();
    let arcs = schedule.arcs();
    if opts.tau_arc == 0 || opts.tau_arc >= arcs.len() {
        return Err(Error::InvalidSchedule(format!("tau arc {} is not an interior arc", opts.tau_arc)));
    }
    let tau = starts[opts.tau_arc];
    let switches = |k: usize| -> (bool, bool) {
        let (a, b) = (arcs[k - 1].control.signs(), arcs[k].control.signs());
        (a.0 != b.0, a.1 != b.1)
    };
    if !switches(opts.tau_arc).0 {
        return Err(Error::InvalidSchedule("u1 does not switch at the chosen reference time".into()));
    }
    let u2_after = (opts.tau_arc + 1..arcs.len()).find(|&k| switches(k).1);
    let u2_before = (1..opts.tau_arc).rev().find(|&k| switches(k).1);
    let Some(k_match) = u2_after.or(u2_before) else {
        return Err(Error::InvalidSchedule("u2 never switches".into()));
    };
    let t_match = starts[k_match];
    let q_bar = flow_map(system, schedule, T::zero(), tau, opts.q0, &opts.flow)?;

    let residual = |p: T| -> Result<T> {
        let lam = covector_from_switching(system, &q_bar, Vector3::new(T::zero(), p, opts.phi12_bar))?;
        let st = propagate_lift(system, schedule, tau, &ExtremalState { q: q_bar, lambda: lam }, t_match, &opts.flow)?;
        Ok(st.switching(system).y)
    };
    let guess = arcs[opts.tau_arc].duration;
    let (mut p0, mut p1) = (guess, guess * T::lit(2.0));
    let (mut r0, mut r1) = (residual(p0)?, residual(p1)?);
    for _ in 0..8 {
        if r1 == r0 {
            break;
        }
        let p2 = p1 - r1 * (p1 - p0) / (r1 - r0);
        (p0, r0) = (p1, r1);
        p1 = p2;
        r1 = residual(p1)?;
        if r1.abs() <= T::lit(1e-15) {
            break;
        }
    }
    if !(r1.abs() <= opts.lift_tol) {
        return Err(Error::LiftConstructionFailed { residual: r1.abs().as_f64() });
    }
    let lambda_bar = covector_from_switching(system, &q_bar, Vector3::new(T::zero(), p1, opts.phi12_bar))?;
    let base = ExtremalState { q: q_bar, lambda: lambda_bar };
    let mut switching_residuals = Vec::new();
    for (k, start) in starts.iter().enumerate().take(arcs.len()).skip(1) {
        let (s1, s2) = switches(k);
        let st = propagate_lift(system, schedule, tau, &base, *start, &opts.flow)?;
        let phi = switching_values(system, &st.q, &st.lambda.0);
        if s1 {
            switching_residuals.push(phi.x.abs());
        }
        if s2 {
            switching_residuals.push(phi.y.abs());
        }
    }
    Ok(SixArcLift { tau_bar: tau, q_bar, lambda_bar, phi2_bar: p1, residual: r1.abs(), switching_residuals })
}

#[derive(Clone, Debug, Serialize)]
pub struct SixArcReport<T: Real> {
    pub t1: T,
    pub lift: SixArcLift<T>,
    pub report: SecondOrderReport<T>,
    pub verdict: Verdict,
    /// `(dim H, signature)` from the projection kernel.
    pub alternate: (usize, Signature),
}

/// Candidate → lift → `h_i` → `Q` on `H` → verdict, for six equal arcs in the
/// negative pattern.
pub fn six_arc_rejection<T: Real>(system: &SystemPair<T>, t1: T, opts: &CandidateOptions<T>) -> Result<SixArcReport<T>> {
    if t1 > opts.t_max {
        return Err(Error::InvalidSchedule(format!(
            "arc length {} exceeds t_max = {}",
            t1.as_f64(),
            opts.t_max.as_f64()
        )));
    }
    let schedule = negative_pattern_schedule(t1)?;
    let lift = six_arc_lift(system, &schedule, opts)?;
    let hset = build_h_fields(system, &schedule, lift.tau_bar, &lift.state(), opts.mode, &opts.flow)?;
    let report = assemble_q(&hset, &opts.second)?;
    let alternate = signature_alternate(&hset, &opts.second);
    Ok(SixArcReport { t1, verdict: report.verdict, lift, report, alternate })
}

#[derive(Clone, Debug, Serialize)]
pub struct LimitMatrixReport<T: Real> {
    pub t1: T,
    /// `Q` in the coordinates `(α3, α4, α5)`.
    pub q_reduced: [[T; 3]; 3],
    /// Largest entrywise deviation from [`LIMIT_MATRIX`].
    pub deviation: T,
    pub det: T,
    pub eigenvalues: [T; 3],
    pub report: SecondOrderReport<T>,
}

/// Expresses `Q` in `(α3, α4, α5)` after eliminating `α0, α1, α2` with
/// `Σα_i = 0` and the `X+`, `X−` components of `Σα_i h_i(q(τ̄)) = 0`.
pub fn limit_matrix_comparison<T: Real>(
    system: &SystemPair<T>,
    t1: T,
    opts: &CandidateOptions<T>,
) -> Result<LimitMatrixReport<T>> {
    let rej = six_arc_rejection(system, t1, opts)?;
    let report = rej.report;
    let q = rej.lift.q_bar;
    let frame = Matrix3::from_columns(&[system.xplus.eval(&q), system.xminus.eval(&q), system.x12.eval(&q)]);
    let inv = frame.try_inverse().ok_or(Error::DegenerateFrame)?;
    let coords: Vec<Vector3<T>> = report.h_values.iter().map(|h| inv * Vector3::new(h[0], h[1], h[2])).collect();
    let row = |r: usize, c: usize| if r == 0 { T::one() } else { coords[c][r - 1] };
    let left = Matrix3::from_fn(&row);
    let right = Matrix3::from_fn(|r, c| row(r, c + 3));
    let g = -(left.try_inverse().ok_or(Error::RankDeficient { expected: 3, found: 2 })? * right);
    let mut embed = DMatrix::zeros(6, 3);
    embed.view_mut((0, 0), (3, 3)).copy_from(&g);
    embed.view_mut((3, 0), (3, 3)).fill_with_identity();
    let s = quadratic_form_matrix(&report.sigma_matrix());
    let qp = embed.transpose() * s * embed;
    let qp = Matrix3::from_fn(|i, j| (qp[(i, j)] + qp[(j, i)]) * T::lit(0.5));
    let mut deviation = T::zero();
    for i in 0..3 {
        for j in 0..3 {
            deviation = deviation.max((qp[(i, j)] - T::lit(LIMIT_MATRIX[i][j])).abs());
        }
    }
    let mut eig: Vec<T> = qp.symmetric_eigen().eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(LimitMatrixReport {
        t1,
        q_reduced: [0, 1, 2].map(|i| [0, 1, 2].map(|j| qp[(i, j)])),
        deviation,
        det: qp.determinant(),
        eigenvalues: [eig[0], eig[1], eig[2]],
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn heisenberg_h_values_match_hand_derivation() {
        let s = fixtures::heisenberg::<f64>();
        let t = 0.1;
        let opts = CandidateOptions::default();
        let sched = negative_pattern_schedule(t).unwrap();
        let lift = six_arc_lift(&s, &sched, &opts).unwrap();
        assert!((lift.phi2_bar - t).abs() < 1e-10);
        assert!(lift.switching_residuals.iter().all(|r| *r < 1e-9));
        let h = build_h_fields(&s, &sched, lift.tau_bar, &lift.state(), TransportMode::Numeric, &opts.flow).unwrap();
        let q = lift.q_bar;
        let (xp, xm, x12) = (s.xplus.eval(&q), s.xminus.eval(&q), s.x12.eval(&q));
        let expect = [xm - x12 * 2.0 * t, -xp - x12 * 2.0 * t, -xm, xp, xm - x12 * 2.0 * t, -xp - x12 * 2.0 * t];
        for (v, e) in h.values.iter().zip(&expect) {
            assert!((v - e).norm() < 1e-8, "{v:?} vs {e:?}");
        }
    }

    #[test]
    fn limit_matrix_on_heisenberg() {
        let s = fixtures::heisenberg::<f64>();
        let r = limit_matrix_comparison(&s, 0.1, &CandidateOptions::default()).unwrap();
        assert!(r.deviation < 1e-6, "{:?}", r.q_reduced);
        assert!((r.det - 16.0).abs() < 1e-4);
    }

    #[test]
    fn heisenberg_candidate_is_rejected() {
        let s = fixtures::heisenberg::<f64>();
        let r = six_arc_rejection(&s, 0.1, &CandidateOptions::default()).unwrap();
        assert_eq!(r.verdict, Verdict::RejectedNotOptimal);
        assert_eq!((r.report.dim_h, r.report.lift_uniqueness.rank), (3, 2));
        assert_eq!((r.report.signature.positive, r.report.signature.negative), (1, 2));
        assert_eq!(r.alternate.1, r.report.signature);
        assert!((r.report.max_eigenvalue() - 2.0 / 3f64.sqrt()).abs() < 1e-8);
    }

    #[test]
    fn zero_length_is_rejected() {
        let s = fixtures::heisenberg::<f64>();
        assert!(matches!(
            six_arc_rejection(&s, 0.0, &CandidateOptions::default()),
            Err(Error::InvalidSchedule(_))
        ));
        assert!(six_arc_rejection(&s, 0.9, &CandidateOptions::default()).is_err());
    }
}

