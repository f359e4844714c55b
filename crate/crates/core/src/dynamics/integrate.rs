//! Adaptive Dormand-Prince 5(4) integration for continuous, possibly
//! non-Lipschitz, right-hand sides.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Frame, InputSignal, Trajectory, VectorField};
use crate::nonsmooth::norm;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            h_init: 1e-4,
            h_min: 1e-12,
            h_max: 0.1,
            max_steps: 20_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverOptionsError {
    #[error("tolerances must be positive (rel_tol = {0}, abs_tol = {1})")]
    Tolerance(f64, f64),
    #[error("step bounds must satisfy 0 < h_min <= h_init <= h_max (got {0}, {1}, {2})")]
    StepBounds(f64, f64, f64),
    #[error("max_steps must be positive")]
    MaxSteps,
}

impl SolverOptions {
    pub fn validate(&self) -> Result<(), SolverOptionsError> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(SolverOptionsError::Tolerance(self.rel_tol, self.abs_tol));
        }
        if !(self.h_min > 0.0 && self.h_min <= self.h_init && self.h_init <= self.h_max) {
            return Err(SolverOptionsError::StepBounds(self.h_min, self.h_init, self.h_max));
        }
        if self.max_steps == 0 {
            return Err(SolverOptionsError::MaxSteps);
        }
        Ok(())
    }

    pub fn with_tolerances(mut self, rel_tol: f64, abs_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self.abs_tol = abs_tol;
        self
    }

    pub fn with_h_max(mut self, h_max: f64) -> Self {
        self.h_max = h_max;
        self.h_init = self.h_init.min(h_max);
        self.h_min = self.h_min.min(self.h_init);
        self
    }

    /// Steps of exactly `h`, accepted unconditionally. Used for convergence studies.
    pub fn fixed_step(h: f64) -> Self {
        Self {
            rel_tol: f64::INFINITY,
            abs_tol: f64::INFINITY,
            h_init: h,
            h_min: h,
            h_max: h,
            max_steps: usize::MAX,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum FailureReason {
    StepUnderflow { t: f64, h: f64 },
    MaxSteps { t: f64 },
    NonFinite { t: f64 },
    InvalidOptions(String),
}

/// Integration stopped early; carries everything accepted up to that point.
#[derive(Debug, Clone, Error)]
#[error("integration failed: {reason:?} after {} accepted steps", partial.len())]
pub struct IntegrationFailure {
    pub reason: FailureReason,
    pub partial: Box<Trajectory>,
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// fifth-order minus embedded fourth-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;
/// Per-step change is limited to this fraction of the current state norm (plus `abs_tol`).
const MAX_RELATIVE_CHANGE: f64 = 0.5;

struct Stepper<'a, F: ?Sized> {
    field: &'a F,
    input: &'a InputSignal,
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    u: Vec<f64>,
}

impl<F: VectorField + ?Sized> Stepper<'_, F> {
    fn rhs(&mut self, stage: usize, t: f64) {
        self.input.eval_into(t, &mut self.u);
        let (tmp, u) = (&self.tmp, &self.u);
        self.field.eval(t, tmp, u, &mut self.k[stage]);
    }

    /// Fills `y_new` and `err`; `k[0]` must hold `f(t, y)`.
    #[allow(clippy::needless_range_loop)]
    fn step(&mut self, t: f64, y: &[f64], h: f64, y_new: &mut [f64], err: &mut [f64]) {
        let d = y.len();
        for s in 1..7 {
            for i in 0..d {
                let mut acc = 0.0;
                for (j, a) in A[s][..s].iter().enumerate() {
                    acc += a * self.k[j][i];
                }
                self.tmp[i] = y[i] + h * acc;
            }
            if s == 6 {
                y_new.copy_from_slice(&self.tmp);
            }
            self.rhs(s, t + C[s] * h);
        }
        for i in 0..d {
            err[i] = h * (0..7).map(|j| E[j] * self.k[j][i]).sum::<f64>();
        }
    }
}

/// Integrates `field` from `state0` over `t_span` with accepted steps recorded.
///
/// The step is further capped by [`VectorField::max_step`] and limited so
/// that one step never changes the state by more than half its norm plus
/// `abs_tol`, which keeps the sublinear terms from overshooting the origin.
pub fn integrate<F: VectorField + ?Sized>(
    field: &F,
    state0: &[f64],
    input: &InputSignal,
    t_span: (f64, f64),
    opts: &SolverOptions,
) -> Result<Trajectory, IntegrationFailure> {
    integrate_with_stops(field, state0, input, t_span, opts, &[])
}

/// [`integrate`], additionally shortening steps so that every time in
/// `stops` (increasing, inside `t_span`) is an accepted step.
pub fn integrate_with_stops<F: VectorField + ?Sized>(
    field: &F,
    state0: &[f64],
    input: &InputSignal,
    t_span: (f64, f64),
    opts: &SolverOptions,
    stops: &[f64],
) -> Result<Trajectory, IntegrationFailure> {
    assert!(stops.windows(2).all(|w| w[0] < w[1]), "stops must increase");
    let d = field.dim();
    assert_eq!(state0.len(), d, "initial state has the wrong dimension");
    let (t0, t1) = t_span;
    let mut traj = Trajectory::new(d, input.dim(), Frame::Original);
    let fail = |reason, traj: Trajectory| IntegrationFailure {
        reason,
        partial: Box::new(traj),
    };
    if let Err(e) = opts.validate() {
        return Err(fail(FailureReason::InvalidOptions(e.to_string()), traj));
    }
    assert!(t1 > t0, "t_span must be increasing");

    let h_max = field.max_step().map_or(opts.h_max, |m| m.min(opts.h_max));
    let h_min = opts.h_min.min(h_max);
    let fixed = opts.h_min >= opts.h_max;

    let mut st = Stepper {
        field,
        input,
        k: std::array::from_fn(|_| vec![0.0; d]),
        tmp: state0.to_vec(),
        u: vec![0.0; input.dim()],
    };
    let mut y = state0.to_vec();
    let mut y_new = vec![0.0; d];
    let mut err = vec![0.0; d];
    let mut t = t0;
    st.rhs(0, t);
    traj.push(t, &y, &st.u);

    let mut h = opts.h_init.clamp(h_min, h_max);
    let mut steps = 0usize;
    let span = t1 - t0;
    let mut next_stop = 0usize;

    while t < t1 {
        if steps >= opts.max_steps {
            return Err(fail(FailureReason::MaxSteps { t }, traj));
        }
        steps += 1;
        while next_stop < stops.len() && stops[next_stop] <= t {
            next_stop += 1;
        }
        let target = if next_stop < stops.len() && stops[next_stop] < t1 {
            stops[next_stop]
        } else {
            t1
        };
        let remaining = target - t;
        let last = h >= remaining || remaining - h < 1e-12 * span;
        let h_try = if last { remaining } else { h };

        st.step(t, &y, h_try, &mut y_new, &mut err);

        let y_norm = norm(&y);
        let dy: f64 = y.iter().zip(&y_new).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let finite = y_new.iter().all(|v| v.is_finite()) && err.iter().all(|v| v.is_finite());

        if fixed {
            if !finite {
                return Err(fail(FailureReason::NonFinite { t }, traj));
            }
            t = if last { target } else { t + h_try };
            y.copy_from_slice(&y_new);
            st.k.swap(0, 6);
            st.input.eval_into(t, &mut st.u);
            traj.push(t, &y, &st.u);
            continue;
        }

        let tol = opts.abs_tol.max(opts.rel_tol * y_norm.max(norm(&y_new)));
        let ratio = if finite { norm(&err) / tol } else { f64::INFINITY };
        let change_limit = MAX_RELATIVE_CHANGE * y_norm + opts.abs_tol;

        if ratio <= 1.0 && dy <= change_limit {
            t = if last { target } else { t + h_try };
            y.copy_from_slice(&y_new);
            st.k.swap(0, 6);
            // k[0] is f(t, y) by the FSAL property; record the input at the new time
            st.input.eval_into(t, &mut st.u);
            traj.push(t, &y, &st.u);
            let factor = if ratio == 0.0 {
                MAX_FACTOR
            } else {
                (SAFETY * ratio.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
            };
            let proposal = (h_try * factor).clamp(h_min, h_max);
            // a step shortened to land on a stop says little about the natural step size
            h = if h_try < h { proposal.max(h) } else { proposal };
        } else {
            let mut factor = if ratio > 1.0 {
                (SAFETY * ratio.powf(-0.2)).clamp(MIN_FACTOR, 1.0)
            } else {
                1.0
            };
            if dy > change_limit {
                factor = factor.min((SAFETY * change_limit / dy).max(0.1));
            }
            let h_next = h_try * factor;
            if h_next < h_min {
                if !finite {
                    return Err(fail(FailureReason::NonFinite { t }, traj));
                }
                return Err(fail(FailureReason::StepUnderflow { t, h: h_next }, traj));
            }
            h = h_next;
        }
    }
    Ok(traj)
}
