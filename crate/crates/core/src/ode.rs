//! Dormand–Prince 5(4) integrator with dense output.
//!
//! Steps are signed, so the same code integrates forward and backward in
//! time. Accepted step sizes can be replayed on a perturbed initial value
//! ([`Dopri5::replay`]), which keeps the discrete flow a smooth function of
//! the initial point; finite differences of replayed flows are free of the
//! noise adaptive step selection would introduce.

use nalgebra::SVector;

use crate::error::{Error, Result};
use crate::scalar::Real;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// One accepted step with its continuous extension.
#[derive(Clone, Debug)]
pub struct DenseStep<T: Real, const N: usize> {
    pub t0: T,
    /// Signed step size.
    pub h: T,
    cont: [SVector<T, N>; 5],
}

impl<T: Real, const N: usize> DenseStep<T, N> {
    pub fn t1(&self) -> T {
        self.t0 + self.h
    }

    pub fn y0(&self) -> SVector<T, N> {
        self.cont[0]
    }

    pub fn y1(&self) -> SVector<T, N> {
        self.cont[0] + self.cont[1]
    }

    /// Dense output at `t`, which should lie between `t0` and `t1`.
    pub fn eval(&self, t: T) -> SVector<T, N> {
        let theta = (t - self.t0) / self.h;
        let theta1 = T::one() - theta;
        let c = &self.cont;
        c[0] + (c[1] + (c[2] + (c[3] + c[4] * theta1) * theta) * theta1) * theta
    }

    /// The same step restricted to the first `M` components.
    pub fn project<const M: usize>(&self) -> DenseStep<T, M> {
        DenseStep { t0: self.t0, h: self.h, cont: self.cont.map(|c| c.fixed_rows::<M>(0).into_owned()) }
    }

    pub fn contains(&self, t: T) -> bool {
        let (a, b) = if self.h >= T::zero() { (self.t0, self.t1()) } else { (self.t1(), self.t0) };
        t >= a && t <= b
    }
}

/// Integrator settings.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct Dopri5<T: Real> {
    pub atol: T,
    pub rtol: T,
    /// Upper bound on `|h|`.
    pub h_max: T,
    pub h_min: T,
    pub max_steps: usize,
}

impl<T: Real> Default for Dopri5<T> {
    fn default() -> Self {
        Self {
            atol: T::lit(1e-10),
            rtol: T::lit(1e-10),
            h_max: T::lit(0.1),
            h_min: T::lit(1e-14),
            max_steps: 200_000,
        }
    }
}

struct Attempt<T: Real, const N: usize> {
    y1: SVector<T, N>,
    k7: SVector<T, N>,
    err: T,
    step: DenseStep<T, N>,
}

impl<T: Real> Dopri5<T> {
    pub fn with_tolerance(tol: T) -> Self {
        Self { atol: tol, rtol: tol, ..Self::default() }
    }

    fn attempt<const N: usize, F>(
        &self,
        f: &F,
        t: T,
        y: &SVector<T, N>,
        k1: &SVector<T, N>,
        h: T,
    ) -> Attempt<T, N>
    where
        F: Fn(T, &SVector<T, N>) -> SVector<T, N>,
    {
        let c = T::lit;
        let k2 = f(t + h * c(C2), &(y + k1 * (h * c(A21))));
        let k3 = f(t + h * c(C3), &(y + (k1 * c(A31) + k2 * c(A32)) * h));
        let k4 = f(t + h * c(C4), &(y + (k1 * c(A41) + k2 * c(A42) + k3 * c(A43)) * h));
        let k5 = f(
            t + h * c(C5),
            &(y + (k1 * c(A51) + k2 * c(A52) + k3 * c(A53) + k4 * c(A54)) * h),
        );
        let k6 = f(
            t + h,
            &(y + (k1 * c(A61) + k2 * c(A62) + k3 * c(A63) + k4 * c(A64) + k5 * c(A65)) * h),
        );
        let y1 = y + (k1 * c(A71) + k3 * c(A73) + k4 * c(A74) + k5 * c(A75) + k6 * c(A76)) * h;
        let k7 = f(t + h, &y1);
        let err_vec =
            (k1 * c(E1) + k3 * c(E3) + k4 * c(E4) + k5 * c(E5) + k6 * c(E6) + k7 * c(E7)) * h;
        let mut acc = T::zero();
        for i in 0..N {
            let sc = self.atol + self.rtol * y[i].abs().max(y1[i].abs());
            let r = err_vec[i] / sc;
            acc += r * r;
        }
        let err = (acc / T::from_usize(N.max(1)).unwrap()).sqrt();
        let ydiff = y1 - y;
        let bspl = k1 * h - ydiff;
        let cont = [
            *y,
            ydiff,
            bspl,
            ydiff - k7 * h - bspl,
            (k1 * c(D1) + k3 * c(D3) + k4 * c(D4) + k5 * c(D5) + k6 * c(D6) + k7 * c(D7)) * h,
        ];
        Attempt { y1, k7, err, step: DenseStep { t0: t, h, cont } }
    }

    /// Adaptive integration from `t0` to `t1` (either direction).
    pub fn integrate<const N: usize, F>(
        &self,
        f: F,
        t0: T,
        y0: SVector<T, N>,
        t1: T,
    ) -> Result<Vec<DenseStep<T, N>>>
    where
        F: Fn(T, &SVector<T, N>) -> SVector<T, N>,
    {
        let mut stepper = Stepper::new(*self, t0, y0);
        let mut steps = Vec::new();
        while stepper.t != t1 {
            steps.push(stepper.advance(&f, t1)?);
        }
        Ok(steps)
    }

    /// Endpoint only; no dense output is kept.
    pub fn endpoint<const N: usize, F>(&self, f: F, t0: T, y0: SVector<T, N>, t1: T) -> Result<SVector<T, N>>
    where
        F: Fn(T, &SVector<T, N>) -> SVector<T, N>,
    {
        let mut stepper = Stepper::new(*self, t0, y0);
        while stepper.t != t1 {
            stepper.advance(&f, t1)?;
        }
        Ok(stepper.y)
    }

    /// Single step of size `h` without error control.
    pub fn single_step<const N: usize, F>(&self, f: &F, t: T, y: &SVector<T, N>, h: T) -> DenseStep<T, N>
    where
        F: Fn(T, &SVector<T, N>) -> SVector<T, N>,
    {
        let k1 = f(t, y);
        self.attempt(f, t, y, &k1, h).step
    }

    /// Fixed-step integration with the given signed step sizes.
    pub fn replay<const N: usize, F>(&self, f: &F, t0: T, y0: SVector<T, N>, steps: &[T]) -> SVector<T, N>
    where
        F: Fn(T, &SVector<T, N>) -> SVector<T, N>,
    {
        let mut t = t0;
        let mut y = y0;
        for &h in steps {
            let k1 = f(t, &y);
            y = self.attempt(f, t, &y, &k1, h).y1;
            t += h;
        }
        y
    }
}

/// Incremental adaptive stepper; each call to [`Stepper::advance`] returns
/// one accepted step.
pub struct Stepper<T: Real, const N: usize> {
    opts: Dopri5<T>,
    pub t: T,
    pub y: SVector<T, N>,
    h_next: Option<T>,
    k1: Option<SVector<T, N>>,
    steps_taken: usize,
}

impl<T: Real, const N: usize> Stepper<T, N> {
    pub fn new(opts: Dopri5<T>, t: T, y: SVector<T, N>) -> Self {
        Self { opts, t, y, h_next: None, k1: None, steps_taken: 0 }
    }

    /// Moves to a new state (after an event), keeping the step-size memory.
    pub fn reset(&mut self, t: T, y: SVector<T, N>) {
        self.t = t;
        self.y = y;
        self.k1 = None;
    }

    pub fn advance<F>(&mut self, f: &F, t_end: T) -> Result<DenseStep<T, N>>
    where
        F: Fn(T, &SVector<T, N>) -> SVector<T, N>,
    {
        let span = t_end - self.t;
        let dir = if span >= T::zero() { T::one() } else { -T::one() };
        let remaining = span.abs();
        let mut h_abs = self.h_next.unwrap_or(remaining).min(self.opts.h_max).min(remaining);
        let k1 = match self.k1.take() {
            Some(k) => k,
            None => f(self.t, &self.y),
        };
        loop {
            self.steps_taken += 1;
            if self.steps_taken > self.opts.max_steps {
                return Err(Error::TooManySteps(self.opts.max_steps));
            }
            let last = h_abs * T::lit(1.01) >= remaining;
            let h = if last { span } else { h_abs * dir };
            let a = self.opts.attempt(f, self.t, &self.y, &k1, h);
            if !a.err.is_finite() {
                h_abs *= T::lit(0.1);
            } else if a.err <= T::one() {
                let fac = if a.err == T::zero() {
                    T::lit(10.0)
                } else {
                    (T::lit(0.9) * a.err.powf(T::lit(-0.2))).min(T::lit(10.0)).max(T::lit(0.2))
                };
                self.h_next = Some((h_abs * fac).min(self.opts.h_max));
                self.t = if last { t_end } else { self.t + h };
                self.y = a.y1;
                self.k1 = Some(a.k7);
                return Ok(a.step);
            } else {
                let fac = (T::lit(0.9) * a.err.powf(T::lit(-0.2))).max(T::lit(0.2));
                h_abs *= fac;
            }
            if h_abs < self.opts.h_min {
                return Err(Error::StepSizeUnderflow { t: self.t.as_f64() });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector2;

    #[test]
    fn harmonic_oscillator_forward_and_back() {
        let f = |_t: f64, y: &Vector2<f64>| Vector2::new(y[1], -y[0]);
        let ig = Dopri5::default();
        let y1 = ig.endpoint(f, 0.0, Vector2::new(1.0, 0.0), 2.0).unwrap();
        assert!((y1[0] - 2f64.cos()).abs() < 1e-9);
        assert!((y1[1] + 2f64.sin()).abs() < 1e-9);
        let back = ig.endpoint(f, 2.0, y1, 0.0).unwrap();
        assert!((back - Vector2::new(1.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn dense_output_tracks_solution() {
        let f = |_t: f64, y: &Vector2<f64>| Vector2::new(y[1], -y[0]);
        let steps = Dopri5::default().integrate(f, 0.0, Vector2::new(1.0, 0.0), 3.0).unwrap();
        for s in &steps {
            let tm = s.t0 + 0.5 * s.h;
            assert!((s.eval(tm)[0] - tm.cos()).abs() < 1e-8);
        }
        assert_eq!(steps.last().unwrap().t1(), 3.0);
    }

    #[test]
    fn quadratic_solution_is_exact_in_one_step() {
        // y' = (1, t): y = (t, t^2/2); fifth order integrates it exactly.
        let f = |t: f64, _y: &Vector2<f64>| Vector2::new(1.0, t);
        let opts = Dopri5 { h_max: 10.0, ..Dopri5::default() };
        let steps = opts.integrate(f, 0.0, Vector2::zeros(), 1.0).unwrap();
        assert_eq!(steps.len(), 1);
        assert!((steps[0].y1()[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn replay_reproduces_adaptive_endpoint() {
        let f = |_t: f64, y: &Vector2<f64>| Vector2::new(y[1], -y[0] * (1.0 + y[0] * y[0]));
        let ig = Dopri5::default();
        let steps = ig.integrate(f, 0.0, Vector2::new(0.5, 0.0), 1.5).unwrap();
        let hs: Vec<f64> = steps.iter().map(|s| s.h).collect();
        let y = ig.replay(&f, 0.0, Vector2::new(0.5, 0.0), &hs);
        assert!((y - steps.last().unwrap().y1()).norm() < 1e-14);
    }
}
