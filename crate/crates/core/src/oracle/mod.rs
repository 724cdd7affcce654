//! Brute-force minimum-time search over arc schedules.

mod nelder_mead;

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector, Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use nelder_mead::{nelder_mead, Minimum};

use crate::error::{Error, Result};
use crate::extremal::{propagate_lift, switching_values, ArcKind, ExtremalState};
use crate::flows::{concatenation_endpoint, ArcSchedule, ControlValue, FlowOptions};
use crate::geometry::{SmoothField, SystemPair};
use crate::ode::Dopri5;

/// Search space: arc alphabet, arc budget and time budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateFamily {
    pub max_arcs: usize,
    /// Also allow arcs with one control at ±1 and the other a free constant.
    pub singular: bool,
    /// Bound on the total duration.
    pub t_max: f64,
}

impl CandidateFamily {
    pub fn bang(max_arcs: usize, t_max: f64) -> Self {
        Self { max_arcs, singular: false, t_max }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_arcs == 0 {
            return Err(Error::InvalidFamily("max_arcs must be at least 1".into()));
        }
        if !(self.t_max.is_finite() && self.t_max > 0.0) {
            return Err(Error::InvalidFamily(format!("t_max must be positive and finite, got {}", self.t_max)));
        }
        Ok(())
    }

    /// Arc types in enumeration order.
    pub fn alphabet(&self) -> Vec<ArcKind> {
        let mut out = vec![
            ArcKind::Bang { u1: -1, u2: -1 },
            ArcKind::Bang { u1: -1, u2: 1 },
            ArcKind::Bang { u1: 1, u2: -1 },
            ArcKind::Bang { u1: 1, u2: 1 },
        ];
        if self.singular {
            out.extend([
                ArcKind::U1Singular { u2: -1 },
                ArcKind::U1Singular { u2: 1 },
                ArcKind::U2Singular { u1: -1 },
                ArcKind::U2Singular { u1: 1 },
            ]);
        }
        out
    }

    /// All sequences of exactly `n` arcs with distinct consecutive types,
    /// in lexicographic order of the alphabet.
    pub fn sequences(&self, n: usize) -> Vec<Vec<ArcKind>> {
        let alpha = self.alphabet();
        let mut out: Vec<Vec<ArcKind>> = vec![vec![]];
        for _ in 0..n {
            let mut next = Vec::with_capacity(out.len() * alpha.len());
            for s in &out {
                for a in alpha.iter().filter(|a| s.last() != Some(*a)) {
                    let mut t = s.clone();
                    t.push(*a);
                    next.push(t);
                }
            }
            out = next;
        }
        out
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleOptions {
    /// Endpoint tolerance in chart units.
    pub eps_hit: f64,
    /// Multi-starts per sequence.
    pub starts: usize,
    /// Starts carried through the tightened penalty levels.
    pub refine: usize,
    /// Penalty weights, one simplex run per level.
    pub penalties: Vec<f64>,
    /// Simplex evaluation budget per level and per parameter.
    pub evals_per_param: usize,
    /// A sequence is dropped when its first-level penalized optimum exceeds
    /// the best time known so far by this relative margin.
    pub prune_margin: f64,
    pub seed: u64,
    pub flow: FlowOptions<f64>,
}

impl Default for OracleOptions {
    fn default() -> Self {
        let mut integrator = Dopri5::with_tolerance(1e-12);
        integrator.h_max = 0.5;
        Self {
            eps_hit: 1e-6,
            starts: 8,
            refine: 3,
            penalties: vec![1e4, 1e6, 1e8],
            evals_per_param: 100,
            prune_margin: 0.05,
            seed: 0,
            flow: FlowOptions { integrator, ..FlowOptions::default() },
        }
    }
}

/// Best schedule found within one arc budget.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BudgetBest {
    pub time: f64,
    pub sequence: Vec<ArcKind>,
    pub durations: Vec<f64>,
    pub controls: Vec<[f64; 2]>,
    pub endpoint_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleResult {
    pub target: [f64; 3],
    pub q0: [f64; 3],
    /// Minimal time using at most `n` arcs, for every budget `n` at which
    /// the target was hit.
    pub best_time: BTreeMap<usize, f64>,
    pub per_budget: BTreeMap<usize, BudgetBest>,
    /// Overall best with negligible arcs removed and equal neighbours merged.
    pub best_schedule: ArcSchedule<f64>,
    pub arc_count: usize,
    pub endpoint_error: f64,
    pub sequences_examined: usize,
    pub sequences_pruned: usize,
    pub evaluations: usize,
}

impl OracleResult {
    pub fn best(&self, n: usize) -> Option<f64> {
        self.best_time.range(..=n).next_back().map(|(_, t)| *t)
    }
}

const VERTICES: [(i8, i8); 4] = [(-1, -1), (-1, 1), (1, -1), (1, 1)];

fn vertex_index(u1: i8, u2: i8) -> usize {
    usize::from(u1 > 0) * 2 + usize::from(u2 > 0)
}

/// Arcs shorter than this are dropped from reported schedules.
const NEGLIGIBLE_ARC: f64 = 1e-9;

struct Problem<'a> {
    system: &'a SystemPair<f64>,
    /// `u1·X1 + u2·X2` for the four vertices, indexed by `vertex_index`.
    vertices: [SmoothField<f64>; 4],
    q0: Point3<f64>,
    target: Point3<f64>,
    t_max: f64,
    flow: &'a FlowOptions<f64>,
}

impl<'a> Problem<'a> {
    fn arcs(seq: &[ArcKind], p: &[f64]) -> Vec<(ControlValue<f64>, f64)> {
        let mut extra = seq.len();
        seq.iter()
            .zip(p)
            .map(|(k, s)| {
                let d = s * s;
                let u = match *k {
                    ArcKind::Bang { u1, u2 } => ControlValue::bang(u1, u2),
                    ArcKind::U1Singular { u2 } => {
                        extra += 1;
                        ControlValue { u1: p[extra - 1].sin(), u2: f64::from(u2) }
                    }
                    ArcKind::U2Singular { u1 } => {
                        extra += 1;
                        ControlValue { u1: f64::from(u1), u2: p[extra - 1].sin() }
                    }
                };
                (u, d)
            })
            .collect()
    }

    fn new(
        system: &'a SystemPair<f64>,
        q0: Point3<f64>,
        target: Point3<f64>,
        t_max: f64,
        flow: &'a FlowOptions<f64>,
    ) -> Self {
        let vertices = std::array::from_fn(|i| {
            let (a, b) = VERTICES[i];
            system.x1.combine(f64::from(a), &system.x2, f64::from(b))
        });
        Self { system, vertices, q0, target, t_max, flow }
    }

    fn endpoint(&self, seq: &[ArcKind], p: &[f64]) -> Result<Point3<f64>> {
        let mut y = self.q0.coords;
        let mut t = 0.0;
        for (k, (u, d)) in seq.iter().zip(Self::arcs(seq, p)) {
            if !d.is_finite() {
                return Err(Error::InvalidSchedule("non-finite duration".into()));
            }
            if d <= 1e-15 * (1.0 + t) {
                continue;
            }
            y = match *k {
                ArcKind::Bang { u1, u2 } => {
                    let field = &self.vertices[vertex_index(u1, u2)];
                    self.flow.integrator.endpoint(|_t, y: &Vector3<f64>| field.eval(&Point3::from(*y)), t, y, t + d)?
                }
                _ => self.flow.integrator.endpoint(
                    |_t, y: &Vector3<f64>| self.system.velocity(u.u1, u.u2, &Point3::from(*y)),
                    t,
                    y,
                    t + d,
                )?,
            };
            t += d;
            self.flow.check_inside(t, &Point3::from(y))?;
        }
        Ok(Point3::from(y))
    }

    fn residual(&self, seq: &[ArcKind], p: &[f64]) -> Option<Vector3<f64>> {
        let t = Self::time(seq, p);
        if !(t <= 2.0 * self.t_max) {
            return None;
        }
        self.endpoint(seq, p).ok().map(|q| q - self.target)
    }

    fn time(seq: &[ArcKind], p: &[f64]) -> f64 {
        p[..seq.len()].iter().map(|s| s * s).sum()
    }

    fn penalized(&self, seq: &[ArcKind], p: &[f64], w: f64) -> f64 {
        let t = Self::time(seq, p);
        let excess = (t - self.t_max).max(0.0).powi(2);
        if !t.is_finite() {
            return f64::INFINITY;
        }
        if t > 2.0 * self.t_max {
            // far outside the budget: skip the flow, keep the value large
            return t + w * (excess + 1.0);
        }
        match self.residual(seq, p) {
            Some(r) => t + w * (r.norm_squared() + excess),
            None => f64::INFINITY,
        }
    }

    /// Minimum-norm Gauss–Newton steps onto the endpoint constraint.
    fn project(&self, seq: &[ArcKind], mut p: Vec<f64>, eps: f64, evals: &mut usize) -> (Vec<f64>, f64) {
        let h = 1e-7;
        let mut r = match self.residual(seq, &p) {
            Some(r) => r,
            None => return (p, f64::INFINITY),
        };
        *evals += 1;
        for _ in 0..30 {
            if r.norm() <= 0.1 * eps {
                break;
            }
            let m = p.len();
            let mut jac = DMatrix::zeros(3, m);
            for j in 0..m {
                let (mut a, mut b) = (p.clone(), p.clone());
                a[j] += h;
                b[j] -= h;
                let (Some(ra), Some(rb)) = (self.residual(seq, &a), self.residual(seq, &b)) else {
                    return (p, r.norm());
                };
                jac.set_column(j, &((ra - rb) / (2.0 * h)));
            }
            *evals += 2 * m;
            let Ok(step) = jac.svd(true, true).solve(&DVector::from_column_slice(r.as_slice()), 1e-12) else {
                break;
            };
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, d)| a - d).collect();
            *evals += 1;
            match self.residual(seq, &trial) {
                Some(rt) if rt.norm() < r.norm() => {
                    p = trial;
                    r = rt;
                }
                _ => break,
            }
        }
        (p, r.norm())
    }
}

struct SequenceResult {
    params: Vec<f64>,
    time: f64,
    error: f64,
}

struct SequenceOutcome {
    result: Option<SequenceResult>,
    pruned: bool,
    evals: usize,
}

fn singular_count(seq: &[ArcKind]) -> usize {
    seq.iter().filter(|k| !matches!(k, ArcKind::Bang { .. })).count()
}

fn sequence_seed(seed: u64, n: usize, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((n as u64) << 40) ^ index as u64
}

#[allow(clippy::too_many_arguments)]
fn optimize_sequence(
    prob: &Problem,
    seq: &[ArcKind],
    warm: &[Vec<f64>],
    scale: f64,
    bound: f64,
    opts: &OracleOptions,
    rng_seed: u64,
) -> SequenceOutcome {
    let n = seq.len();
    let m = n + singular_count(seq);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut seeds: Vec<Vec<f64>> = warm.iter().take(opts.starts).cloned().collect();
    if seeds.len() < opts.starts {
        let mut p = vec![(scale / n as f64).sqrt(); n];
        p.resize(m, 0.0);
        seeds.push(p);
    }
    while seeds.len() < opts.starts {
        let total = scale * rng.gen_range(0.5..2.0);
        let w: Vec<f64> = (0..n).map(|_| -rng.gen::<f64>().max(1e-12).ln()).collect();
        let sum: f64 = w.iter().sum();
        let mut p: Vec<f64> = w.iter().map(|v| (total * v / sum).sqrt()).collect();
        p.extend((0..m - n).map(|_| rng.gen_range(-1.5..1.5)));
        seeds.push(p);
    }

    let budget = opts.evals_per_param * m;
    let mut evals = 0;
    let mut level: Vec<Minimum> = seeds
        .iter()
        .map(|x0| {
            let r = nelder_mead(|p| prob.penalized(seq, p, opts.penalties[0]), x0, 0.3, budget, 1e-8, 1e-6);
            evals += r.evals;
            r
        })
        .collect();
    level.sort_by(|a, b| a.f.total_cmp(&b.f));
    if level[0].f > bound * (1.0 + opts.prune_margin) {
        return SequenceOutcome { result: None, pruned: true, evals };
    }
    level.truncate(opts.refine.max(1));
    let mut step = 0.05;
    for &w in &opts.penalties[1..] {
        for r in level.iter_mut() {
            let next = nelder_mead(|p| prob.penalized(seq, p, w), &r.x, step, budget, 1e-12, 1e-10);
            evals += next.evals;
            *r = next;
        }
        step *= 0.2;
    }
    let mut best: Option<SequenceResult> = None;
    for r in level {
        let (params, error) = prob.project(seq, r.x, opts.eps_hit, &mut evals);
        let time = Problem::time(seq, &params);
        if error <= opts.eps_hit && time <= prob.t_max * (1.0 + 1e-12) && best.as_ref().is_none_or(|b| time < b.time) {
            best = Some(SequenceResult { params, time, error });
        }
    }
    SequenceOutcome { result: best, pruned: false, evals }
}

fn kind_key(k: &ArcKind) -> (u8, i8, i8) {
    match *k {
        ArcKind::Bang { u1, u2 } => (0, u1, u2),
        ArcKind::U1Singular { u2 } => (1, 0, u2),
        ArcKind::U2Singular { u1 } => (2, u1, 0),
    }
}

fn seq_key(seq: &[ArcKind]) -> Vec<(u8, i8, i8)> {
    seq.iter().map(kind_key).collect()
}

fn budget_entry(seq: &[ArcKind], r: &SequenceResult) -> BudgetBest {
    let arcs = Problem::arcs(seq, &r.params);
    BudgetBest {
        time: r.time,
        sequence: seq.to_vec(),
        durations: arcs.iter().map(|a| a.1).collect(),
        controls: arcs.iter().map(|a| [a.0.u1, a.0.u2]).collect(),
        endpoint_error: r.error,
    }
}

fn cleaned_schedule(b: &BudgetBest) -> Result<ArcSchedule<f64>> {
    let mut pairs: Vec<(ControlValue<f64>, f64)> = Vec::new();
    for (c, &d) in b.controls.iter().zip(&b.durations) {
        if d <= NEGLIGIBLE_ARC {
            continue;
        }
        let u = ControlValue::new(c[0], c[1])?;
        match pairs.last_mut() {
            Some(last) if last.0 == u => last.1 += d,
            _ => pairs.push((u, d)),
        }
    }
    ArcSchedule::from_pairs(pairs)
}

/// Minimal time to reach `target` from `q0` with at most `n` arcs, for every
/// `n` up to `family.max_arcs`.
///
/// Each layer enumerates all sequences of exactly `n` arc types. Durations
/// are parametrized as squares, free controls as sines. Every sequence gets
/// `starts` simplex runs on a penalized objective: warm starts from its
/// one-shorter prefix and suffix when those hit the target, one equal split,
/// and random splits from a generator seeded per sequence. The best `refine`
/// runs are continued through the remaining penalty levels and projected
/// onto the endpoint constraint. Results are bit-identical for a fixed seed.
pub fn min_time_to_target(
    system: &SystemPair<f64>,
    q0: Point3<f64>,
    target: Point3<f64>,
    family: &CandidateFamily,
    opts: &OracleOptions,
) -> Result<OracleResult> {
    family.validate()?;
    if !opts.flow.bounds.contains(&target) {
        return Err(Error::TargetOutsideBox { x: target.x, y: target.y, z: target.z });
    }
    if opts.starts == 0 || opts.penalties.is_empty() {
        return Err(Error::InvalidFamily("need at least one start and one penalty level".into()));
    }
    let prob = Problem::new(system, q0, target, family.t_max, &opts.flow);
    let delta = target - q0;
    let spread = delta.amax();
    let default_scale = spread.max(spread.sqrt()).min(family.t_max).max(1e-3);

    let mut best_time = BTreeMap::new();
    let mut per_budget: BTreeMap<usize, BudgetBest> = BTreeMap::new();
    let mut previous: HashMap<Vec<ArcKind>, Vec<f64>> = HashMap::new();
    let mut current: Option<BudgetBest> = None;
    let (mut examined, mut pruned, mut evaluations) = (0, 0, 0);

    for n in 1..=family.max_arcs {
        let seqs = family.sequences(n);
        let bound = current.as_ref().map_or(f64::INFINITY, |b| b.time);
        let scale = if bound.is_finite() { bound } else { default_scale };
        let outcomes: Vec<SequenceOutcome> = seqs
            .par_iter()
            .enumerate()
            .map(|(i, seq)| {
                let warm = warm_starts(seq, &previous, scale);
                optimize_sequence(&prob, seq, &warm, scale, bound, opts, sequence_seed(opts.seed, n, i))
            })
            .collect();

        let mut layer: HashMap<Vec<ArcKind>, Vec<f64>> = HashMap::new();
        let mut layer_best: Option<(usize, f64)> = None;
        for (i, o) in outcomes.iter().enumerate() {
            examined += 1;
            evaluations += o.evals;
            pruned += usize::from(o.pruned);
            if let Some(r) = &o.result {
                layer.insert(seqs[i].clone(), r.params.clone());
                let better = match layer_best {
                    None => true,
                    Some((j, t)) => r.time < t || (r.time == t && seq_key(&seqs[i]) < seq_key(&seqs[j])),
                };
                if better {
                    layer_best = Some((i, r.time));
                }
            }
        }
        if let Some((i, t)) = layer_best {
            if current.as_ref().is_none_or(|b| t < b.time) {
                current = Some(budget_entry(&seqs[i], outcomes[i].result.as_ref().unwrap()));
            }
        }
        if let Some(b) = &current {
            best_time.insert(n, b.time);
            per_budget.insert(n, b.clone());
        }
        previous = layer;
    }

    let best = current.ok_or(Error::Unreachable)?;
    let best_schedule = cleaned_schedule(&best)?;
    Ok(OracleResult {
        target: [target.x, target.y, target.z],
        q0: [q0.x, q0.y, q0.z],
        best_time,
        arc_count: best_schedule.len(),
        endpoint_error: best.endpoint_error,
        best_schedule,
        per_budget,
        sequences_examined: examined,
        sequences_pruned: pruned,
        evaluations,
    })
}

fn warm_starts(seq: &[ArcKind], previous: &HashMap<Vec<ArcKind>, Vec<f64>>, scale: f64) -> Vec<Vec<f64>> {
    let n = seq.len();
    if n < 2 {
        return vec![];
    }
    let small = (0.02 * scale).sqrt();
    let mut out = Vec::new();
    // parameters are durations first, then free controls in arc order
    let split = |p: &[f64], k: usize| (p[..k].to_vec(), p[k..].to_vec());
    if let Some(p) = previous.get(&seq[..n - 1]) {
        let (mut d, mut c) = split(p, n - 1);
        d.push(small);
        if !matches!(seq[n - 1], ArcKind::Bang { .. }) {
            c.push(0.0);
        }
        d.extend(c);
        out.push(d);
    }
    if let Some(p) = previous.get(&seq[1..]) {
        let (d, c) = split(p, n - 1);
        let mut q = vec![small];
        q.extend(d);
        if !matches!(seq[0], ArcKind::Bang { .. }) {
            q.push(0.0);
        }
        q.extend(c);
        out.push(q);
    }
    out
}

/// One row of [`bound_verification`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundRow {
    pub target: [f64; 3],
    pub best_time: BTreeMap<usize, f64>,
    pub best5: Option<f64>,
    pub best6: Option<f64>,
    pub arc_count: usize,
    pub violation: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundSummary {
    pub tol_rel: f64,
    pub rows: Vec<BoundRow>,
    pub violations: usize,
    pub results: Vec<OracleResult>,
}

impl BoundSummary {
    pub fn to_csv(&self) -> String {
        let n = self.rows.iter().flat_map(|r| r.best_time.keys().copied()).max().unwrap_or(0);
        let mut out = String::from("x,y,z");
        for k in 1..=n {
            out.push_str(&format!(",best{k}"));
        }
        out.push_str(",arc_count,violation\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{}", r.target[0], r.target[1], r.target[2]));
            for k in 1..=n {
                match r.best_time.get(&k) {
                    Some(t) => out.push_str(&format!(",{t}")),
                    None => out.push(','),
                }
            }
            out.push_str(&format!(",{},{}\n", r.arc_count, r.violation));
        }
        out
    }
}

/// Runs the oracle on every target and flags those where six arcs beat five
/// by more than `tol_rel`. Unreachable targets are skipped.
pub fn bound_verification(
    system: &SystemPair<f64>,
    q0: Point3<f64>,
    targets: &[Point3<f64>],
    family: &CandidateFamily,
    opts: &OracleOptions,
    tol_rel: f64,
) -> Result<BoundSummary> {
    let mut fam = family.clone();
    fam.max_arcs = fam.max_arcs.max(6);
    let mut rows = Vec::new();
    let mut results = Vec::new();
    for target in targets {
        let res = match min_time_to_target(system, q0, *target, &fam, opts) {
            Ok(r) => r,
            Err(Error::Unreachable) => continue,
            Err(e) => return Err(e),
        };
        let (b5, b6) = (res.best(5), res.best(6));
        let violation = match (b5, b6) {
            (Some(a), Some(b)) => b < a * (1.0 - tol_rel),
            (None, Some(_)) => true,
            _ => false,
        };
        rows.push(BoundRow {
            target: res.target,
            best_time: res.best_time.clone(),
            best5: b5,
            best6: b6,
            arc_count: res.arc_count,
            violation,
        });
        results.push(res);
    }
    let violations = rows.iter().filter(|r| r.violation).count();
    Ok(BoundSummary { tol_rel, rows, violations, results })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SharpnessRow {
    pub target: [f64; 3],
    pub best4: Option<f64>,
    pub best5: Option<f64>,
    /// `(best4 − best5) / best5`.
    pub gap_rel: Option<f64>,
    pub sharp: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SharpnessSummary {
    pub margin: f64,
    pub rows: Vec<SharpnessRow>,
    pub found: bool,
}

/// Reads off, for each oracle result, whether five arcs beat four by more
/// than `margin` relative to the five-arc time.
pub fn sharpness_from(results: &[OracleResult], margin: f64) -> SharpnessSummary {
    let rows: Vec<SharpnessRow> = results
        .iter()
        .map(|r| {
            let (b4, b5) = (r.best(4), r.best(5));
            let gap_rel = match (b4, b5) {
                (Some(a), Some(b)) => Some((a - b) / b),
                _ => None,
            };
            let sharp = match (b4, b5) {
                (Some(a), Some(b)) => a - b > margin * b,
                (None, Some(_)) => true,
                _ => false,
            };
            SharpnessRow { target: r.target, best4: b4, best5: b5, gap_rel, sharp }
        })
        .collect();
    let found = rows.iter().any(|r| r.sharp);
    SharpnessSummary { margin, rows, found }
}

/// Searches `targets` for one where five arcs are strictly faster than four.
pub fn sharpness_search(
    system: &SystemPair<f64>,
    q0: Point3<f64>,
    targets: &[Point3<f64>],
    family: &CandidateFamily,
    opts: &OracleOptions,
    margin: f64,
) -> Result<SharpnessSummary> {
    let mut fam = family.clone();
    fam.max_arcs = fam.max_arcs.max(5);
    let mut results = Vec::new();
    for target in targets {
        match min_time_to_target(system, q0, *target, &fam, opts) {
            Ok(r) => results.push(r),
            Err(Error::Unreachable) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(sharpness_from(&results, margin))
}

/// Endpoints of random bang schedules with `arcs` arcs and total duration
/// in `[0.6, 1]·horizon`, so each has minimal time at most `horizon`.
pub fn reachable_targets(
    system: &SystemPair<f64>,
    q0: Point3<f64>,
    count: usize,
    arcs: usize,
    horizon: f64,
    seed: u64,
    flow: &FlowOptions<f64>,
) -> Result<Vec<Point3<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let total = horizon * rng.gen_range(0.6..1.0);
        let w: Vec<f64> = (0..arcs.max(1)).map(|_| rng.gen_range(0.1..1.0)).collect();
        let sum: f64 = w.iter().sum();
        let mut last = None;
        let mut pairs = Vec::with_capacity(w.len());
        for wi in &w {
            let v = loop {
                let v = VERTICES[rng.gen_range(0..4)];
                if Some(v) != last {
                    break v;
                }
            };
            last = Some(v);
            pairs.push((ControlValue::bang(v.0, v.1), total * wi / sum));
        }
        out.push(concatenation_endpoint(system, &pairs, q0, flow)?);
    }
    Ok(out)
}

/// Outcome of [`pmp_consistency`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PmpCheck {
    /// Smallest singular value of the switching conditions on `λ(0)`.
    pub residual: f64,
    pub lambda0: [f64; 3],
    /// Smallest `u_i·φ_i` over arc midpoints; nonnegative when the controls
    /// maximize the Hamiltonian.
    pub min_margin: f64,
    pub maximality_holds: bool,
}

/// Looks for a covector lift of a bang-bang schedule: `λ(0)` is the unit
/// vector that best annihilates every switching function at its switching
/// times (the adjoint flow is linear in `λ(0)`). The maximality condition is
/// then checked at arc midpoints. Returns `None` for schedules with interior
/// control values or without any switching.
pub fn pmp_consistency(
    system: &SystemPair<f64>,
    schedule: &ArcSchedule<f64>,
    q0: Point3<f64>,
    flow: &FlowOptions<f64>,
) -> Result<Option<PmpCheck>> {
    let arcs = schedule.arcs();
    if arcs.len() < 2 || !arcs.iter().all(|a| a.control.is_bang()) {
        return Ok(None);
    }
    let starts = schedule.arc_starts();
    let propagate = |t: f64| -> Result<(Point3<f64>, nalgebra::Matrix3<f64>)> {
        let mut psi = nalgebra::Matrix3::zeros();
        let mut q = q0;
        for j in 0..3 {
            let st = propagate_lift(system, schedule, 0.0, &ExtremalState::new(q0, Vector3::ith(j, 1.0))?, t, flow)?;
            psi.set_column(j, &st.lambda.0);
            q = st.q;
        }
        Ok((q, psi))
    };
    let mut rows: Vec<nalgebra::RowVector3<f64>> = Vec::new();
    for k in 1..arcs.len() {
        let (a, b) = (arcs[k - 1].control.signs(), arcs[k].control.signs());
        let (q, psi) = propagate(starts[k])?;
        let frame = system.frame_matrix(&q) * psi;
        if a.0 != b.0 {
            rows.push(frame.row(0).into_owned());
        }
        if a.1 != b.1 {
            rows.push(frame.row(1).into_owned());
        }
    }
    while rows.len() < 3 {
        rows.push(nalgebra::RowVector3::zeros());
    }
    let a = DMatrix::from_fn(rows.len(), 3, |i, j| rows[i][j]);
    let svd = a.svd(false, true);
    let (k, residual) = svd
        .singular_values
        .iter()
        .copied()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .unwrap();
    let v_t = svd.v_t.unwrap();
    let mut lam = Vector3::new(v_t[(k, 0)], v_t[(k, 1)], v_t[(k, 2)]);
    let mut margins = Vec::with_capacity(arcs.len());
    for (i, arc) in arcs.iter().enumerate() {
        let (q, psi) = propagate(starts[i] + arc.duration / 2.0)?;
        let phi = switching_values(system, &q, &(psi * lam));
        margins.push(arc.control.u1 * phi.x);
        margins.push(arc.control.u2 * phi.y);
    }
    let mut min_margin = margins.iter().copied().fold(f64::INFINITY, f64::min);
    let flipped = margins.iter().map(|m| -m).fold(f64::INFINITY, f64::min);
    if flipped > min_margin {
        lam = -lam;
        min_margin = flipped;
    }
    Ok(Some(PmpCheck {
        residual,
        lambda0: [lam.x, lam.y, lam.z],
        min_margin,
        maximality_holds: min_margin >= -1e-9,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn quick() -> OracleOptions {
        OracleOptions { starts: 4, refine: 2, ..OracleOptions::default() }
    }

    #[test]
    fn sequence_counts() {
        let f = CandidateFamily::bang(6, 1.0);
        let counts: Vec<usize> = (1..=6).map(|n| f.sequences(n).len()).collect();
        assert_eq!(counts, vec![4, 12, 36, 108, 324, 972]);
        assert!(f.sequences(3).iter().all(|s| s.windows(2).all(|w| w[0] != w[1])));
        let g = CandidateFamily { singular: true, ..f };
        assert_eq!(g.sequences(2).len(), 56);
    }

    #[test]
    fn family_validation() {
        assert!(CandidateFamily::bang(0, 1.0).validate().is_err());
        assert!(CandidateFamily::bang(3, -1.0).validate().is_err());
        assert!(CandidateFamily::bang(3, 1.0).validate().is_ok());
    }

    #[test]
    fn diagonal_target_in_one_arc() {
        let s = fixtures::heisenberg();
        let r = min_time_to_target(&s, Point3::origin(), Point3::new(1.0, 1.0, 0.0), &CandidateFamily::bang(2, 3.0), &quick())
            .unwrap();
        assert!((r.best_time[&1] - 1.0).abs() < 1e-6);
        assert_eq!(r.arc_count, 1);
        assert!(r.endpoint_error <= 1e-6);
    }

    #[test]
    fn unreachable_within_budget() {
        let s = fixtures::heisenberg();
        let r = min_time_to_target(&s, Point3::origin(), Point3::new(1.0, 0.0, 0.0), &CandidateFamily::bang(2, 0.5), &quick());
        assert_eq!(r.unwrap_err(), Error::Unreachable);
    }

    #[test]
    fn target_outside_box() {
        let s = fixtures::heisenberg();
        let r = min_time_to_target(&s, Point3::origin(), Point3::new(20.0, 0.0, 0.0), &CandidateFamily::bang(1, 50.0), &quick());
        assert!(matches!(r, Err(Error::TargetOutsideBox { .. })));
    }

    #[test]
    fn lift_of_a_square_loop() {
        let s = fixtures::heisenberg();
        let sched = ArcSchedule::from_pairs(
            [(1, -1), (-1, -1), (-1, 1), (1, 1)].map(|(a, b)| (ControlValue::bang(a, b), 0.1)),
        )
        .unwrap();
        let c = pmp_consistency(&s, &sched, Point3::origin(), &FlowOptions::default()).unwrap().unwrap();
        assert!(c.residual < 1e-10);
        assert!(c.maximality_holds, "{c:?}");
    }
}
