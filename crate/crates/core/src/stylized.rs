//! The scalar two-time-scale example
//!
//! ```text
//! x'     = -[z]^r1 - [z]^r2 + u1
//! eps z' = -[z - x - u1]^q1 - [z - x - u2]^q2 + u1 u2
//! ```
//!
//! with quasi-steady state `h(x) = x`, and helpers for running it.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    error_dynamics_field, integrate_with_stops, Frame, original_field, settling_time, InputSignal, IntegrationFailure,
    SingularlyPerturbed, SolverOptions, SpDims, Trajectory,
};
use crate::certify::{calibrate_interconnection_bounds, BoxRegion, ClassKFn, FxTCertificate, InterconnectionBounds, QuadraticForm};
use crate::nonsmooth::{signed_power_unchecked as sp, ParamError};

pub const DEFAULT_EPS: f64 = 0.01;
/// Settling-time bound reported for the example at `eps = 0.01`.
pub const REPORTED_SETTLING_BOUND: f64 = 18.15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StylizedSystem {
    r1: f64,
    r2: f64,
    q1: f64,
    q2: f64,
}

impl Default for StylizedSystem {
    fn default() -> Self {
        Self {
            r1: 2.0 / 5.0,
            r2: 6.0 / 5.0,
            q1: 1.0 / 3.0,
            q2: 9.0 / 7.0,
        }
    }
}

impl StylizedSystem {
    /// Requires `0 < q1 <= r1 < 1 < r2 <= q2`.
    pub fn new(r1: f64, r2: f64, q1: f64, q2: f64) -> Result<Self, ParamError> {
        if !(q1 > 0.0 && q1 <= r1) {
            return Err(ParamError::OutOfRange {
                name: "q1",
                range: "(0, r1]",
                value: q1,
            });
        }
        if !(r1 < 1.0) {
            return Err(ParamError::OutOfRange {
                name: "r1",
                range: "[q1, 1)",
                value: r1,
            });
        }
        if !(r2 > 1.0) {
            return Err(ParamError::OutOfRange {
                name: "r2",
                range: "(1, q2]",
                value: r2,
            });
        }
        if !(q2 >= r2 && q2.is_finite()) {
            return Err(ParamError::OutOfRange {
                name: "q2",
                range: "[r2, inf)",
                value: q2,
            });
        }
        Ok(Self { r1, r2, q1, q2 })
    }

    pub fn r1(&self) -> f64 {
        self.r1
    }
    pub fn r2(&self) -> f64 {
        self.r2
    }
    pub fn q1(&self) -> f64 {
        self.q1
    }
    pub fn q2(&self) -> f64 {
        self.q2
    }

    /// `((r1 + 1) / 2, (r2 + 1) / 2)`, the reduced-system decay exponents for `V = x^2`.
    pub fn r_tilde(&self) -> (f64, f64) {
        ((self.r1 + 1.0) / 2.0, (self.r2 + 1.0) / 2.0)
    }

    /// `((q1 + 1) / 2, (q2 + 1) / 2)`, the boundary-layer decay exponents for `W = y^2`.
    pub fn q_tilde(&self) -> (f64, f64) {
        ((self.q1 + 1.0) / 2.0, (self.q2 + 1.0) / 2.0)
    }

    /// Boundary-layer decay gains `(2^-q1 - 2^(-1-q2), 2^(-1-q2))`.
    pub fn kappa(&self) -> (f64, f64) {
        let k2 = 2f64.powf(-1.0 - self.q2);
        (2f64.powf(-self.q1) - k2, k2)
    }

    /// `kappa1 s^(q1+1) + kappa2 s^(q2+1)`.
    pub fn varrho_b(&self, s: f64) -> f64 {
        let (k1, k2) = self.kappa();
        k1 * s.powf(self.q1 + 1.0) + k2 * s.powf(self.q2 + 1.0)
    }

    /// Inverse of [`Self::varrho_b`] on `[0, inf)` by bisection.
    pub fn varrho_b_inv(&self, v: f64) -> f64 {
        if v <= 0.0 {
            return 0.0;
        }
        let mut hi = 1.0;
        while self.varrho_b(hi) < v {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.varrho_b(mid) < v {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= f64::EPSILON * hi {
                break;
            }
        }
        hi
    }

    /// The region `|y| > max(varrho_b^-1(2^q2 |u|^4), 2|u|)` where the
    /// boundary-layer decay estimate is claimed.
    pub fn boundary_layer_region(&self, y: f64, u: &[f64]) -> bool {
        let un = crate::nonsmooth::norm(u);
        let threshold = self.varrho_b_inv(2f64.powf(self.q2) * un.powi(4)).max(2.0 * un);
        y.abs() > threshold
    }
}

impl SingularlyPerturbed for StylizedSystem {
    fn dims(&self) -> SpDims {
        SpDims { n: 1, m: 1, p: 2 }
    }

    fn f(&self, _x: &[f64], z: &[f64], u: &[f64], out: &mut [f64]) {
        out[0] = -sp(z[0], self.r1) - sp(z[0], self.r2) + u[0];
    }

    fn g(&self, x: &[f64], z: &[f64], u: &[f64], out: &mut [f64]) {
        let w = z[0] - x[0];
        out[0] = -sp(w - u[0], self.q1) - sp(w - u[1], self.q2) + u[0] * u[1];
    }

    fn h(&self, x: &[f64], out: &mut [f64]) {
        out[0] = x[0];
    }

    fn jac_h(&self, _x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, 1.0)
    }

    fn jac_h_mul(&self, _x: &[f64], v: &[f64], out: &mut [f64]) {
        out[0] = v[0];
    }

    fn equilibrium(&self) -> Vec<f64> {
        vec![0.0]
    }
}

/// `V(x) = x^2` with `k1 = k2 = 1`, exponents `r_tilde` and `rho_R(s) = s^2`.
pub fn reduced_certificate(sys: &StylizedSystem) -> FxTCertificate {
    let (a1, a2) = sys.r_tilde();
    FxTCertificate {
        function: Arc::new(QuadraticForm::identity(1)),
        sandwich_offset: 0,
        alpha_lo: ClassKFn::power(1.0, 2.0),
        alpha_hi: ClassKFn::power(1.0, 2.0),
        k1: 1.0,
        k2: 1.0,
        a1,
        a2,
        rho: ClassKFn::power(1.0, 2.0),
    }
}

/// `W(x, y) = y^2` with gains [`StylizedSystem::kappa`], exponents `q_tilde`
/// and no input gain. The decay only holds on
/// [`StylizedSystem::boundary_layer_region`].
pub fn boundary_layer_certificate(sys: &StylizedSystem) -> FxTCertificate {
    let (b1, b2) = sys.q_tilde();
    let (k1, k2) = sys.kappa();
    FxTCertificate {
        function: Arc::new(QuadraticForm::tail(1, 1)),
        sandwich_offset: 1,
        alpha_lo: ClassKFn::power(1.0, 2.0),
        alpha_hi: ClassKFn::power(1.0, 2.0),
        k1,
        k2,
        a1: b1,
        a2: b2,
        rho: ClassKFn::zero(),
    }
}

/// Constant of the superlinear difference bound for exponent `r2`.
pub fn difference_constant(sys: &StylizedSystem) -> f64 {
    1.0 + 1f64.max((sys.r2 - 1.0) * 2f64.powf(sys.r2 - 2.0))
}

/// Closed-form interconnection bounds, valid for `0 < c < 2^(2-r1) + 4K`:
///
/// ```text
/// nu1 = c,            omega1 = (2^(2-r1) + 4K)^(1+sigma1) c^-sigma1,  rho1 = 0
/// nu2 = 2 + 2^r2,     omega2 = 5 + 2^(r2+1),                         rho2(s) = s^2
/// ```
///
/// with `sigma1 = max(1/r1, r2)`.
pub fn analytic_bounds(sys: &StylizedSystem, c: f64) -> Result<InterconnectionBounds, ParamError> {
    let big_c = 2f64.powf(2.0 - sys.r1) + 4.0 * difference_constant(sys);
    if !(c > 0.0 && c < big_c) {
        return Err(ParamError::OutOfRange {
            name: "c",
            range: "(0, 2^(2-r1) + 4K)",
            value: c,
        });
    }
    let sigma1 = (1.0 / sys.r1).max(sys.r2);
    Ok(InterconnectionBounds {
        nu1: c,
        nu2: 2.0 + 2f64.powf(sys.r2),
        omega1: big_c.powf(1.0 + sigma1) * c.powf(-sigma1),
        omega2: 5.0 + 2f64.powf(sys.r2 + 1.0),
        rho1: ClassKFn::zero(),
        rho2: ClassKFn::power(1.0, 2.0),
    })
}

/// Half-width of the `(x, y)` box the calibrated bounds are fitted on.
pub const CALIBRATION_STATE_RADIUS: f64 = 10.0;
/// Half-width of the input box the calibrated bounds are fitted on.
pub const CALIBRATION_INPUT_RADIUS: f64 = 3.0;
pub const CALIBRATION_MARGIN: f64 = 1.25;
pub const CALIBRATION_SAMPLES: usize = 200_000;
pub const CALIBRATION_SEED: u64 = 0x5eed_ca1b;

pub fn calibration_regions() -> (BoxRegion, BoxRegion) {
    (
        BoxRegion::cube(2, CALIBRATION_STATE_RADIUS),
        BoxRegion::cube(2, CALIBRATION_INPUT_RADIUS),
    )
}

/// Interconnection bounds with `nu1 = k_min / 4`, the closed-form `nu2` and
/// gains, and `omega1`, `omega2` fitted to sampled suprema on the
/// calibration box times [`CALIBRATION_MARGIN`].
///
/// The closed-form `omega` values hold globally but are far from tight on
/// bounded boxes; the fitted ones are only claimed on the calibration box.
pub fn calibrated_bounds(sys: &StylizedSystem) -> InterconnectionBounds {
    calibrated_bounds_with_seed(sys, CALIBRATION_SEED)
}

/// [`calibrated_bounds`] with a different sampling seed.
pub fn calibrated_bounds_with_seed(sys: &StylizedSystem, seed: u64) -> InterconnectionBounds {
    let v = reduced_certificate(sys);
    let w = boundary_layer_certificate(sys);
    let (state, input) = calibration_regions();
    calibrate_interconnection_bounds(
        sys,
        &v,
        &w,
        0.25 * v.k_min(),
        2.0 + 2f64.powf(sys.r2),
        ClassKFn::zero(),
        ClassKFn::power(1.0, 2.0),
        &state,
        &input,
        CALIBRATION_SAMPLES,
        CALIBRATION_MARGIN,
        seed,
    )
}

/// `u1 = e^(sin t)`, `u2 = sin(19 ln(t + 1)) - 0.21`.
pub fn disturbance() -> InputSignal {
    let bound = (1f64.exp().powi(2) + 1.21f64.powi(2)).sqrt();
    InputSignal::new(2, bound, |t, out| {
        out[0] = t.sin().exp();
        out[1] = (19.0 * (t + 1.0).ln()).sin() - 0.21;
    })
}

/// Twelve error-coordinate initial states `(x0, y0)`: norms 1, 10, 100, 1000
/// in the directions at angles 0, 2pi/3 and 4pi/3.
pub fn default_initial_conditions() -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(12);
    for r in [1.0, 10.0, 100.0, 1000.0] {
        for k in 0..3 {
            let a = 2.0 * std::f64::consts::PI * k as f64 / 3.0;
            out.push([r * a.cos(), r * a.sin()]);
        }
    }
    out
}

/// Solver options used for the example runs.
///
/// The sublinear fast terms make steps near the origin very short; these
/// tolerances keep a 40-unit run at `eps = 0.01` within a few seconds.
pub fn default_solver_options() -> SolverOptions {
    SolverOptions {
        rel_tol: 1e-6,
        abs_tol: 1e-6,
        h_init: 1e-6,
        h_min: 1e-14,
        h_max: 0.1,
        max_steps: 50_000_000,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StylizedFrame {
    /// integrate `(x, z)`
    Original,
    /// integrate `(x, y)`
    Error,
}

/// Integrates from the error-coordinate initial state `s0 = (x0, y0)`.
///
/// The returned trajectory is in the frame that was integrated.
pub fn simulate(
    sys: &StylizedSystem,
    eps: f64,
    s0: [f64; 2],
    input: &InputSignal,
    horizon: f64,
    frame: StylizedFrame,
    opts: &SolverOptions,
) -> Result<Trajectory, IntegrationFailure> {
    simulate_with_stops(sys, eps, s0, input, horizon, frame, opts, &[])
}

/// [`simulate`] with every time in `stops` forced onto the output grid.
#[allow(clippy::too_many_arguments)]
pub fn simulate_with_stops(
    sys: &StylizedSystem,
    eps: f64,
    s0: [f64; 2],
    input: &InputSignal,
    horizon: f64,
    frame: StylizedFrame,
    opts: &SolverOptions,
    stops: &[f64],
) -> Result<Trajectory, IntegrationFailure> {
    let span = (0.0, horizon);
    match frame {
        StylizedFrame::Error => integrate_with_stops(&error_dynamics_field(sys, eps), &s0, input, span, opts, stops)
            .map(|t| t.with_frame(Frame::Error)),
        StylizedFrame::Original => {
            integrate_with_stops(&original_field(sys, eps), &[s0[0], s0[1] + s0[0]], input, span, opts, stops)
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub s0: [f64; 2],
    pub steps: usize,
    pub settling_time: Option<f64>,
    /// sup of `|s(t)|` over the whole run
    pub sup_norm: f64,
    /// sup of `|s(t)|` over `t >= tail_start`
    pub tail_sup_norm: f64,
}

pub fn summarize(traj: &Trajectory, s0: [f64; 2], settle_radius: f64, tail_start: f64) -> RunSummary {
    let norms = traj.norms();
    let tail_sup_norm = traj
        .times()
        .iter()
        .zip(&norms)
        .filter(|(t, _)| **t >= tail_start)
        .map(|(_, n)| *n)
        .fold(0.0, f64::max);
    RunSummary {
        s0,
        steps: traj.len(),
        settling_time: settling_time(traj, settle_radius),
        sup_norm: norms.iter().copied().fold(0.0, f64::max),
        tail_sup_norm,
    }
}

/// Runs every initial state in parallel in error coordinates.
pub fn simulate_ensemble(
    sys: &StylizedSystem,
    eps: f64,
    ics: &[[f64; 2]],
    input: &InputSignal,
    horizon: f64,
    opts: &SolverOptions,
) -> Vec<Result<Trajectory, IntegrationFailure>> {
    ics.par_iter()
        .map(|&s0| simulate(sys, eps, s0, input, horizon, StylizedFrame::Error, opts))
        .collect()
}
