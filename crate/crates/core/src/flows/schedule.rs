use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Control value `u = (u1, u2)` in the square `[-1, 1]^2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ControlValue<T: Real> {
    pub u1: T,
    pub u2: T,
}

impl<T: Real> ControlValue<T> {
    pub fn new(u1: T, u2: T) -> Result<Self> {
        let one = T::one();
        if !(u1.abs() <= one && u2.abs() <= one) {
            return Err(Error::InvalidControl { u1: u1.as_f64(), u2: u2.as_f64() });
        }
        Ok(Self { u1, u2 })
    }

    /// Vertex of the control square.
    pub fn bang(s1: i8, s2: i8) -> Self {
        Self { u1: T::lit(f64::from(s1.signum())), u2: T::lit(f64::from(s2.signum())) }
    }

    pub fn is_bang(&self) -> bool {
        self.u1.abs() == T::one() && self.u2.abs() == T::one()
    }

    pub fn signs(&self) -> (i8, i8) {
        (self.u1.sign_i8(), self.u2.sign_i8())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Arc<T: Real> {
    pub control: ControlValue<T>,
    pub duration: T,
}

/// Piecewise-constant control starting at time zero.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ArcSchedule<T: Real> {
    arcs: Vec<Arc<T>>,
}

/// Maximal time interval traversed with one control value; `from > to`
/// for backward traversal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Piece<T: Real> {
    pub control: ControlValue<T>,
    pub from: T,
    pub to: T,
}

impl<T: Real> Piece<T> {
    pub fn signed_duration(&self) -> T {
        self.to - self.from
    }
}

impl<T: Real> ArcSchedule<T> {
    pub fn new(arcs: Vec<Arc<T>>) -> Result<Self> {
        if arcs.is_empty() {
            return Err(Error::InvalidSchedule("no arcs".into()));
        }
        for (i, a) in arcs.iter().enumerate() {
            if !(a.duration > T::zero()) || !a.duration.is_finite() {
                return Err(Error::InvalidSchedule(format!(
                    "arc {i} has non-positive duration {}",
                    a.duration.as_f64()
                )));
            }
            ControlValue::new(a.control.u1, a.control.u2)?;
        }
        for (i, w) in arcs.windows(2).enumerate() {
            if w[0].control == w[1].control {
                return Err(Error::InvalidSchedule(format!(
                    "arcs {i} and {} share the same control value",
                    i + 1
                )));
            }
        }
        Ok(Self { arcs })
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (ControlValue<T>, T)>) -> Result<Self> {
        Self::new(pairs.into_iter().map(|(control, duration)| Arc { control, duration }).collect())
    }

    pub fn arcs(&self) -> &[Arc<T>] {
        &self.arcs
    }

    pub fn len(&self) -> usize {
        self.arcs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arcs.is_empty()
    }

    pub fn total_duration(&self) -> T {
        self.arcs.iter().fold(T::zero(), |acc, a| acc + a.duration)
    }

    /// Start time of every arc (the first is zero).
    pub fn arc_starts(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.arcs.len());
        let mut t = T::zero();
        for a in &self.arcs {
            out.push(t);
            t += a.duration;
        }
        out
    }

    /// Interior switching times `τ_1 < … < τ_K`.
    pub fn switching_times(&self) -> Vec<T> {
        self.arc_starts().into_iter().skip(1).collect()
    }

    pub fn arc_lengths(&self) -> Vec<T> {
        self.arcs.iter().map(|a| a.duration).collect()
    }

    pub fn check_in_span(&self, t: T) -> Result<()> {
        let end = self.total_duration();
        let slack = T::lit(1e-12) * (T::one() + end);
        if t < -slack || t > end + slack || !t.is_finite() {
            return Err(Error::OutOfSpan { t: t.as_f64(), end: end.as_f64() });
        }
        Ok(())
    }

    /// Pieces covering the time interval from `s` to `t` in travel order.
    pub fn pieces(&self, s: T, t: T) -> Result<Vec<Piece<T>>> {
        self.check_in_span(s)?;
        self.check_in_span(t)?;
        let starts = self.arc_starts();
        let (lo, hi) = if s <= t { (s, t) } else { (t, s) };
        let mut out = Vec::new();
        for (a, &a0) in self.arcs.iter().zip(&starts) {
            let a1 = a0 + a.duration;
            let from = a0.max(lo);
            let to = a1.min(hi);
            if to > from {
                out.push(Piece { control: a.control, from, to });
            }
        }
        if s > t {
            out.reverse();
            for p in &mut out {
                std::mem::swap(&mut p.from, &mut p.to);
            }
        }
        Ok(out)
    }

    /// Index of the arc active at `t` (right-continuous; the last arc owns
    /// the final time).
    pub fn arc_index_at(&self, t: T) -> usize {
        let starts = self.arc_starts();
        starts.iter().rposition(|&a0| a0 <= t).unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sched() -> ArcSchedule<f64> {
        ArcSchedule::from_pairs([
            (ControlValue::bang(1, -1), 0.5),
            (ControlValue::bang(-1, -1), 0.25),
            (ControlValue::bang(-1, 1), 1.0),
        ])
        .unwrap()
    }

    #[test]
    fn switching_times_and_lengths() {
        let s = sched();
        assert_eq!(s.switching_times(), vec![0.5, 0.75]);
        assert_eq!(s.total_duration(), 1.75);
        assert_eq!(s.arc_index_at(0.5), 1);
        assert_eq!(s.arc_index_at(1.75), 2);
    }

    #[test]
    fn pieces_forward_and_backward() {
        let s = sched();
        let f = s.pieces(0.25, 1.0).unwrap();
        assert_eq!(f.len(), 3);
        assert_eq!((f[0].from, f[0].to), (0.25, 0.5));
        assert_eq!((f[2].from, f[2].to), (0.75, 1.0));
        let b = s.pieces(1.0, 0.25).unwrap();
        assert_eq!(b.len(), 3);
        assert_eq!((b[0].from, b[0].to), (1.0, 0.75));
        assert_eq!(b[0].control, ControlValue::bang(-1, 1));
        assert!(s.pieces(0.5, 0.5).unwrap().is_empty());
        assert!(s.pieces(0.0, 2.0).is_err());
    }

    #[test]
    fn invalid_schedules() {
        assert!(ArcSchedule::<f64>::new(vec![]).is_err());
        assert!(ArcSchedule::from_pairs([(ControlValue::bang(1, 1), 0.0)]).is_err());
        assert!(ArcSchedule::from_pairs([
            (ControlValue::bang(1, 1), 0.1),
            (ControlValue::bang(1, 1), 0.1)
        ])
        .is_err());
        assert!(ControlValue::new(1.5, 0.0).is_err());
        assert!(!ControlValue::new(1.0, 0.0).unwrap().is_bang());
    }
}
