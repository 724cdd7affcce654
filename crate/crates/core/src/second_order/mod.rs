//! Second-order test for bang-bang candidates: transported control fields
//! `h_i`, the quadratic form `Q(α) = Σ_{i<j} α_i α_j ⟨λ, [h_i, h_j]⟩` on
//! the constraint space `H`, and its signature.

mod candidate;

pub use candidate::{
    limit_matrix_comparison, negative_pattern_schedule, pattern_schedule, six_arc_lift,
    six_arc_rejection, CandidateOptions, LimitMatrixReport, SixArcLift, SixArcReport, LIMIT_MATRIX,
};

use nalgebra::{DMatrix, DVector, Matrix3, Point3, Vector3};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::extremal::{Covector, ExtremalState};
use crate::flows::{transported_field_from, transported_field_leading_order, ArcSchedule, FlowOptions, TransportMode};
use crate::geometry::{SmoothField, SystemPair};
use crate::scalar::Real;

/// Transported control fields `h_0, …, h_K` near `q(τ̄)`.
#[derive(Clone, Debug)]
pub struct HFieldSet<T: Real> {
    pub tau_bar: T,
    pub q_bar: Point3<T>,
    pub lambda_bar: Covector<T>,
    pub fields: Vec<SmoothField<T>>,
    /// `h_i(q(τ̄))`.
    pub values: Vec<Vector3<T>>,
    /// Jacobians of `h_i` at `q(τ̄)`, cached for the brackets.
    pub jacobians: Vec<Matrix3<T>>,
}

impl<T: Real> HFieldSet<T> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    /// `σ_ij = ⟨λ(τ̄), [h_i, h_j](q(τ̄))⟩` for all `i, j`.
    pub fn sigma(&self) -> DMatrix<T> {
        let n = self.len();
        let lam = &self.lambda_bar.0;
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                return T::zero();
            }
            let b = self.jacobians[j] * self.values[i] - self.jacobians[i] * self.values[j];
            lam.dot(&b)
        })
    }

    /// Direct recomputation of one bracket pairing from the fields.
    pub fn sigma_entry(&self, i: usize, j: usize) -> T {
        self.lambda_bar.pair(&self.fields[i].bracket_at(&self.fields[j], &self.q_bar))
    }
}

/// Builds `h_i = P(τ̄, τ_i)_* X(u_i)` for every arc of a bang-bang schedule.
///
/// `X(u_i)` is invariant under its own flow, so each field is transported
/// from the end of arc `i` nearest to `τ̄`; arcs adjacent to `τ̄` give their
/// own generator exactly.
pub fn build_h_fields<T: Real>(
    system: &SystemPair<T>,
    schedule: &ArcSchedule<T>,
    tau_bar: T,
    lift: &ExtremalState<T>,
    mode: TransportMode,
    opts: &FlowOptions<T>,
) -> Result<HFieldSet<T>> {
    schedule.check_in_span(tau_bar)?;
    let starts = schedule.arc_starts();
    let mut fields = Vec::with_capacity(schedule.len());
    for (arc, &a0) in schedule.arcs().iter().zip(&starts) {
        let a1 = a0 + arc.duration;
        let from = if a0 >= tau_bar {
            a0
        } else if a1 <= tau_bar {
            a1
        } else {
            tau_bar
        };
        let x = system.control_field(arc.control.u1, arc.control.u2);
        let h = match mode {
            TransportMode::Numeric => transported_field_from(system, schedule, tau_bar, lift.q, from, &x, opts)?,
            TransportMode::LeadingOrder => transported_field_leading_order(system, schedule, tau_bar, from, &x)?,
        };
        fields.push(h.with_label(format!("h{}", fields.len())));
    }
    let values = fields.iter().map(|f| f.eval(&lift.q)).collect();
    let jacobians = fields.iter().map(|f| f.jacobian(&lift.q)).collect();
    Ok(HFieldSet { tau_bar, q_bar: lift.q, lambda_bar: lift.lambda, fields, values, jacobians })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Uniqueness {
    Unique,
    NonUnique,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LiftUniqueness<T: Real> {
    pub verdict: Uniqueness,
    pub rank: usize,
    pub singular_values: Vec<T>,
    /// Smallest kept over largest discarded singular value (infinite when
    /// nothing is discarded).
    pub gap: T,
}

/// Numerical rank of `span{h_{i+1}(q(τ̄)) − h_i(q(τ̄))}`; the lift is unique
/// (up to scaling) iff the rank is 2.
pub fn check_lift_uniqueness<T: Real>(hset: &HFieldSet<T>, rank_tol: T) -> LiftUniqueness<T> {
    let k = hset.len().saturating_sub(1);
    if k == 0 {
        return LiftUniqueness {
            verdict: Uniqueness::NonUnique,
            rank: 0,
            singular_values: vec![],
            gap: T::lit(f64::INFINITY),
        };
    }
    let d = DMatrix::from_fn(3, k, |r, c| hset.values[c + 1][r] - hset.values[c][r]);
    let (rank, sv, gap) = numerical_rank(&d, rank_tol);
    LiftUniqueness {
        verdict: if rank == 2 { Uniqueness::Unique } else { Uniqueness::NonUnique },
        rank,
        singular_values: sv,
        gap,
    }
}

/// Rank with relative cutoff, sorted singular values and the gap.
fn numerical_rank<T: Real>(m: &DMatrix<T>, rel_tol: T) -> (usize, Vec<T>, T) {
    let mut sv: Vec<T> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let smax = sv.first().copied().unwrap_or_else(T::zero);
    if smax == T::zero() {
        return (0, sv, T::lit(f64::INFINITY));
    }
    let rank = sv.iter().filter(|s| **s > rel_tol * smax).count();
    let gap = if rank == 0 || rank == sv.len() {
        T::lit(f64::INFINITY)
    } else {
        sv[rank - 1] / sv[rank].max(T::lit(f64::MIN_POSITIVE))
    };
    (rank, sv, gap)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    RejectedNotOptimal,
    Inconclusive,
}

/// Settings for [`assemble_q`].
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SecondOrderOptions<T: Real> {
    /// Singular values below `rank_tol·σ_max` count as zero.
    pub rank_tol: T,
    /// Eigenvalues above `eig_rel·‖Q‖` count as positive.
    pub eig_rel: T,
}

impl<T: Real> Default for SecondOrderOptions<T> {
    fn default() -> Self {
        Self { rank_tol: T::lit(1e-7), eig_rel: T::lit(1e-6) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Signature {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct SecondOrderReport<T: Real> {
    pub tau_bar: T,
    pub q_bar: [T; 3],
    pub lambda_bar: [T; 3],
    pub h_values: Vec<[T; 3]>,
    /// Full antisymmetric table `σ_ij`.
    pub sigma: Vec<Vec<T>>,
    /// Orthonormal basis of `H`, one vector per entry.
    pub h_basis: Vec<Vec<T>>,
    pub dim_h: usize,
    pub constraint_singular_values: Vec<T>,
    pub q_restricted: Vec<Vec<T>>,
    pub eigenvalues: Vec<T>,
    pub eig_threshold: T,
    pub signature: Signature,
    pub verdict: Verdict,
    pub lift_uniqueness: LiftUniqueness<T>,
}

impl<T: Real> SecondOrderReport<T> {
    pub fn max_eigenvalue(&self) -> T {
        self.eigenvalues.iter().copied().fold(T::lit(f64::NEG_INFINITY), T::max)
    }

    pub fn sigma_matrix(&self) -> DMatrix<T> {
        let n = self.sigma.len();
        DMatrix::from_fn(n, n, |i, j| self.sigma[i][j])
    }

    pub fn basis_matrix(&self) -> DMatrix<T> {
        let n = self.sigma.len();
        DMatrix::from_fn(n, self.dim_h, |i, j| self.h_basis[j][i])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Symmetric matrix `S` with `Q(α) = αᵀ S α`: `S_ij = S_ji = σ_ij / 2` for `i < j`.
pub fn quadratic_form_matrix<T: Real>(sigma: &DMatrix<T>) -> DMatrix<T> {
    let n = sigma.nrows();
    DMatrix::from_fn(n, n, |i, j| match i.cmp(&j) {
        std::cmp::Ordering::Less => sigma[(i, j)] / T::lit(2.0),
        std::cmp::Ordering::Greater => sigma[(j, i)] / T::lit(2.0),
        std::cmp::Ordering::Equal => T::zero(),
    })
}

/// `Q(α) = Σ_{i<j} α_i α_j σ_ij` from the raw table.
pub fn q_value<T: Real>(sigma: &DMatrix<T>, alpha: &DVector<T>) -> T {
    let n = sigma.nrows();
    let mut acc = T::zero();
    for i in 0..n {
        for j in i + 1..n {
            acc += alpha[i] * alpha[j] * sigma[(i, j)];
        }
    }
    acc
}

/// Constraint matrix of `H`: rows `(1, …, 1)` and the three components of
/// `Σ α_i h_i(q(τ̄))`.
pub fn constraint_matrix<T: Real>(hset: &HFieldSet<T>) -> DMatrix<T> {
    let n = hset.len();
    DMatrix::from_fn(4, n, |r, c| if r == 0 { T::one() } else { hset.values[c][r - 1] })
}

/// Orthonormal kernel basis from the SVD of the zero-padded square matrix.
pub fn kernel_svd<T: Real>(a: &DMatrix<T>, rel_tol: T) -> (DMatrix<T>, Vec<T>) {
    let n = a.ncols();
    let rows = a.nrows().max(n);
    let mut padded = DMatrix::zeros(rows, n);
    padded.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let smax = svd.singular_values.max();
    let mut sv: Vec<T> = svd.singular_values.iter().copied().collect();
    let cols: Vec<DVector<T>> = (0..n)
        .filter(|&k| !(svd.singular_values[k] > rel_tol * smax) || smax == T::zero())
        .map(|k| v_t.row(k).transpose())
        .collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let basis = if cols.is_empty() { DMatrix::zeros(n, 0) } else { DMatrix::from_columns(&cols) };
    (basis, sv)
}

/// Orthonormal kernel basis by projecting the standard basis onto the
/// orthogonal complement of the row space (Gram–Schmidt, twice).
pub fn kernel_projection<T: Real>(a: &DMatrix<T>, rel_tol: T) -> DMatrix<T> {
    let n = a.ncols();
    // Orthonormal basis of the row space.
    let mut row_basis: Vec<DVector<T>> = Vec::new();
    let scale = a.norm().max(T::lit(f64::MIN_POSITIVE));
    for r in 0..a.nrows() {
        let mut v = a.row(r).transpose();
        for _ in 0..2 {
            for b in &row_basis {
                let c = b.dot(&v);
                v -= b * c;
            }
        }
        let nv = v.norm();
        if nv > rel_tol * scale {
            row_basis.push(v / nv);
        }
    }
    let mut ker: Vec<DVector<T>> = Vec::new();
    for k in 0..n {
        let mut v = DVector::zeros(n);
        v[k] = T::one();
        for _ in 0..2 {
            for b in row_basis.iter().chain(ker.iter()) {
                let c = b.dot(&v);
                v -= b * c;
            }
        }
        let nv = v.norm();
        if nv > T::lit(1e-6) {
            ker.push(v / nv);
        }
        if row_basis.len() + ker.len() == n {
            break;
        }
    }
    if ker.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&ker)
    }
}

/// Restriction `BᵀSB`, symmetrized, with its eigenvalues in ascending order.
pub fn restricted_form<T: Real>(s: &DMatrix<T>, basis: &DMatrix<T>) -> (DMatrix<T>, Vec<T>) {
    let q = basis.transpose() * s * basis;
    let q = (&q + q.transpose()) * T::lit(0.5);
    if q.nrows() == 0 {
        return (q, vec![]);
    }
    let mut eig: Vec<T> = q.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
    (q, eig)
}

fn signature_of<T: Real>(eig: &[T], thr: T) -> Signature {
    Signature {
        positive: eig.iter().filter(|e| **e > thr).count(),
        negative: eig.iter().filter(|e| **e < -thr).count(),
        zero: eig.iter().filter(|e| e.abs() <= thr).count(),
    }
}

/// Assembles `Q` on `H` and decides the verdict.
///
/// `H` is the kernel of `α ↦ (Σα_i, Σα_i h_i(q(τ̄)))`; its dimension must
/// equal `K − rank W`, with `W` spanned by the differences `h_{i+1} − h_i`,
/// otherwise `RankDeficient` is returned.
pub fn assemble_q<T: Real>(hset: &HFieldSet<T>, opts: &SecondOrderOptions<T>) -> Result<SecondOrderReport<T>> {
    let n = hset.len();
    if n == 0 {
        return Err(Error::InvalidSchedule("no arcs".into()));
    }
    let lift = check_lift_uniqueness(hset, opts.rank_tol);
    let a = constraint_matrix(hset);
    let (basis, csv) = kernel_svd(&a, opts.rank_tol);
    let expected = n - 1 - lift.rank;
    if basis.ncols() != expected {
        return Err(Error::RankDeficient { expected, found: basis.ncols() });
    }
    let sigma = hset.sigma();
    let s = quadratic_form_matrix(&sigma);
    let (q, eig) = restricted_form(&s, &basis);
    let norm = eig.iter().fold(T::zero(), |m, e| m.max(e.abs()));
    let thr = opts.eig_rel * norm;
    let signature = signature_of(&eig, thr);
    let verdict = if signature.positive > 0 { Verdict::RejectedNotOptimal } else { Verdict::Inconclusive };
    let rows = |m: &DMatrix<T>| (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
    Ok(SecondOrderReport {
        tau_bar: hset.tau_bar,
        q_bar: [hset.q_bar.x, hset.q_bar.y, hset.q_bar.z],
        lambda_bar: [hset.lambda_bar.0.x, hset.lambda_bar.0.y, hset.lambda_bar.0.z],
        h_values: hset.values.iter().map(|v| [v.x, v.y, v.z]).collect(),
        sigma: rows(&sigma),
        h_basis: (0..basis.ncols()).map(|j| basis.column(j).iter().copied().collect()).collect(),
        dim_h: basis.ncols(),
        constraint_singular_values: csv,
        q_restricted: rows(&q),
        eigenvalues: eig,
        eig_threshold: thr,
        signature,
        verdict,
        lift_uniqueness: lift,
    })
}

/// Signature of `Q` on `H` computed with the projection kernel instead of
/// the SVD kernel.
pub fn signature_alternate<T: Real>(hset: &HFieldSet<T>, opts: &SecondOrderOptions<T>) -> (usize, Signature) {
    let basis = kernel_projection(&constraint_matrix(hset), opts.rank_tol);
    let s = quadratic_form_matrix(&hset.sigma());
    let (_, eig) = restricted_form(&s, &basis);
    let norm = eig.iter().fold(T::zero(), |m, e| m.max(e.abs()));
    (basis.ncols(), signature_of(&eig, opts.eig_rel * norm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::flows::ControlValue;

    fn two_arc_set() -> HFieldSet<f64> {
        let s = fixtures::heisenberg::<f64>();
        let sched = ArcSchedule::from_pairs([
            (ControlValue::bang(1, 1), 0.2),
            (ControlValue::bang(1, -1), 0.2),
        ])
        .unwrap();
        let lift = ExtremalState::new(Point3::new(0.2, 0.2, 0.0), Vector3::new(0.3, 0.0, 1.0)).unwrap();
        build_h_fields(&s, &sched, 0.2, &lift, TransportMode::Numeric, &FlowOptions::default()).unwrap()
    }

    #[test]
    fn two_arcs_give_trivial_h() {
        let hs = two_arc_set();
        assert_eq!(hs.fields[0].label(), "h0");
        assert!((hs.values[0] - Vector3::new(1.0, 1.0, 0.0)).norm() < 1e-14);
        let r = assemble_q(&hs, &SecondOrderOptions::default()).unwrap();
        assert_eq!(r.dim_h, 0);
        assert_eq!(r.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn lift_uniqueness_ranks() {
        let mut hs = two_arc_set();
        let v = hs.values[0];
        hs.values = vec![v, v, v];
        let u = check_lift_uniqueness(&hs, 1e-7);
        assert_eq!((u.rank, u.verdict), (0, Uniqueness::NonUnique));
        hs.values = vec![Vector3::x(), Vector3::y(), Vector3::x()];
        let u = check_lift_uniqueness(&hs, 1e-7);
        assert_eq!((u.rank, u.verdict), (1, Uniqueness::NonUnique));
        hs.values = vec![Vector3::x(), Vector3::y(), Vector3::z()];
        assert_eq!(check_lift_uniqueness(&hs, 1e-7).verdict, Uniqueness::Unique);
    }

    #[test]
    fn kernels_agree() {
        let a = DMatrix::from_row_slice(2, 4, &[1.0, 1.0, 1.0, 1.0, 0.0, 1.0, 2.0, 3.0]);
        let (k1, _) = kernel_svd(&a, 1e-9);
        let k2 = kernel_projection(&a, 1e-9);
        assert_eq!((k1.ncols(), k2.ncols()), (2, 2));
        assert!((&a * &k1).norm() < 1e-12 && (&a * &k2).norm() < 1e-12);
        // same subspace: projectors coincide
        let p1 = &k1 * k1.transpose();
        let p2 = &k2 * k2.transpose();
        assert!((p1 - p2).norm() < 1e-12);
    }

    #[test]
    fn q_matrix_matches_raw_sum() {
        let sigma = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, -2.0, -1.0, 0.0, 3.0, 2.0, -3.0, 0.0]);
        let s = quadratic_form_matrix(&sigma);
        let a = DVector::from_vec(vec![0.5_f64, -1.0, 2.0]);
        assert!(((a.transpose() * &s * &a)[0] - q_value(&sigma, &a)).abs() < 1e-14);
    }
}
