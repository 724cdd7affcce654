use serde::Serialize;

use super::{ArcDecomposition, ArcKind, SwitchingTraces};
use crate::scalar::Real;

/// Vertex cycle followed by bang-bang extremals with `φ12 < 0`.
pub const NEGATIVE_CYCLE: [(i8, i8); 4] = [(1, -1), (-1, -1), (-1, 1), (1, 1)];
/// Mirror cycle for `φ12 > 0`.
pub const POSITIVE_CYCLE: [(i8, i8); 4] = [(-1, -1), (1, -1), (1, 1), (-1, 1)];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum PatternMatch {
    MatchesNegativePattern,
    MatchesPositivePattern,
    SingleInputLike,
    Other,
}

fn follows(cycle: &[(i8, i8); 4], seq: &[(i8, i8)]) -> bool {
    seq.windows(2).all(|w| {
        cycle
            .iter()
            .position(|&v| v == w[0])
            .is_some_and(|k| cycle[(k + 1) % 4] == w[1])
    })
}

/// Classifies a sequence of bang vertices.
pub fn detect_pattern_in(seq: &[(i8, i8)]) -> PatternMatch {
    if seq.windows(2).any(|w| w[0].0 != w[1].0 && w[0].1 != w[1].1) {
        return PatternMatch::Other;
    }
    let u1_switches = seq.windows(2).any(|w| w[0].0 != w[1].0);
    let u2_switches = seq.windows(2).any(|w| w[0].1 != w[1].1);
    if !(u1_switches && u2_switches) {
        return PatternMatch::SingleInputLike;
    }
    if follows(&NEGATIVE_CYCLE, seq) {
        PatternMatch::MatchesNegativePattern
    } else if follows(&POSITIVE_CYCLE, seq) {
        PatternMatch::MatchesPositivePattern
    } else {
        PatternMatch::Other
    }
}

/// Pattern of a bang-bang decomposition; decompositions containing a
/// singular arc are `Other` unless only one control is ever free.
pub fn detect_pattern<T: Real>(arcs: &ArcDecomposition<T>) -> PatternMatch {
    let mut seq = Vec::with_capacity(arcs.arcs.len());
    let mut singular_u1 = false;
    let mut singular_u2 = false;
    for a in &arcs.arcs {
        match a.kind {
            ArcKind::Bang { u1, u2 } => seq.push((u1, u2)),
            ArcKind::U1Singular { .. } => singular_u1 = true,
            ArcKind::U2Singular { .. } => singular_u2 = true,
        }
    }
    if singular_u1 || singular_u2 {
        let u1_switches = seq.windows(2).any(|w| w[0].0 != w[1].0) || singular_u1;
        let u2_switches = seq.windows(2).any(|w| w[0].1 != w[1].1) || singular_u2;
        return if u1_switches && u2_switches {
            PatternMatch::Other
        } else {
            PatternMatch::SingleInputLike
        };
    }
    detect_pattern_in(&seq)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Regime {
    SingleInputReduction,
    BothVanishCase,
    Phi12Nonvanishing,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegimeReport {
    pub regime: Regime,
    /// Predicted maximal number of arcs.
    pub predicted_arcs: usize,
    /// In the both-vanish case, whether the remaining switching function
    /// stays away from zero as the argument asserts.
    pub assertion_holds: bool,
    pub detail: String,
}

/// Regime analysis of the local arc bound.
///
/// A singular arc puts the trace in the single-input regime. Otherwise the
/// both-vanish test runs first: a trace in which `φ1` and `φ12` both vanish
/// at isolated times is reported as such even when `φ2` is bounded away
/// from zero.
pub fn classify_regime<T: Real>(traces: &SwitchingTraces<T>, eps_zero: T) -> RegimeReport {
    if traces.identically_zero[0] || traces.identically_zero[1] {
        return RegimeReport {
            regime: Regime::SingleInputReduction,
            predicted_arcs: 3,
            assertion_holds: true,
            detail: "singular arc present; bang-singular-bang expected".into(),
        };
    }
    let vanishes = |k: usize| traces.has_zero(k, eps_zero);
    let (z1, z2, z12) = (vanishes(0), vanishes(1), vanishes(2));
    if z12 && (z1 || z2) {
        let other = if z1 { 1 } else { 0 };
        let both = z1 && z2;
        let min_other = traces.min_abs(other);
        let holds = !both && min_other > eps_zero;
        return RegimeReport {
            regime: Regime::BothVanishCase,
            predicted_arcs: 5,
            assertion_holds: holds,
            detail: if both {
                "phi1, phi2 and phi12 all vanish".into()
            } else {
                format!("phi{} and phi12 vanish; min |phi{}| = {:e}", 2 - other, other + 1, min_other.as_f64())
            },
        };
    }
    if !z1 || !z2 {
        let free = if !z1 { 1 } else { 2 };
        return RegimeReport {
            regime: Regime::SingleInputReduction,
            predicted_arcs: 3,
            assertion_holds: true,
            detail: format!("phi{free} has no zero; at most bang-bang-bang or bang-singular-bang"),
        };
    }
    RegimeReport {
        regime: Regime::Phi12Nonvanishing,
        predicted_arcs: 5,
        assertion_holds: true,
        detail: "phi12 keeps its sign; bang-bang with at most 5 arcs".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patterns() {
        let neg = [(1, -1), (-1, -1), (-1, 1), (1, 1), (1, -1), (-1, -1)];
        assert_eq!(detect_pattern_in(&neg), PatternMatch::MatchesNegativePattern);
        let pos = [(-1, -1), (1, -1), (1, 1), (-1, 1), (-1, -1), (1, -1)];
        assert_eq!(detect_pattern_in(&pos), PatternMatch::MatchesPositivePattern);
        assert_eq!(detect_pattern_in(&[(1, 1)]), PatternMatch::SingleInputLike);
        assert_eq!(detect_pattern_in(&[(1, 1), (-1, 1), (1, 1)]), PatternMatch::SingleInputLike);
        assert_eq!(detect_pattern_in(&[(1, 1), (-1, -1)]), PatternMatch::Other);
        // starting phase is irrelevant
        assert_eq!(detect_pattern_in(&neg[2..]), PatternMatch::MatchesNegativePattern);
        // a reversal mid-sequence breaks the cycle
        assert_eq!(detect_pattern_in(&[(1, -1), (-1, -1), (1, -1), (1, 1)]), PatternMatch::Other);
    }
}
