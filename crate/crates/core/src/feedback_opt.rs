//! Fixed-time feedback optimization of a two-dimensional plant with a
//! slowly rotating quadratic cost.
//!
//! The closed loop is
//!
//! ```text
//! z'    = -F_{2/5,-2/7}(z - 2 xhat)
//! xhat' = -eps F_{xi1,xi2}(Phat(xhat, z, t))
//! ```
//!
//! with `Phat = Q z / 2 + Q xhat + 2 b` and `Q`, `b` driven by sinusoids of
//! frequency proportional to `eps * eps0`.

use std::io::{self, Write};
use std::sync::Arc;

use nalgebra::{DMatrix, Matrix2, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certify::{ClassKFn, FxTCertificate, QuadraticForm};
use crate::dynamics::{
    integrate_with_stops, FnField, InputSignal, IntegrationFailure, SingularlyPerturbed, SolverOptions, SpDims,
    VectorField,
};
use crate::nonsmooth::{fxt_drift_into, norm, FxTDriftParams, ParamError};

/// Gain of the bundled plant's steady-state map `h(xhat) = 2 xhat`.
pub const PLANT_GAIN: f64 = 2.0;
pub const DEFAULT_EPS: f64 = 0.05;
pub const DEFAULT_HORIZON: f64 = 2000.0;
/// Fraction of the horizon, counted from the end, used for tracking metrics.
pub const POST_SETTLING_FRACTION: f64 = 0.5;

#[derive(Debug, Error)]
pub enum FeedbackOptError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("controller exponents ({xi1}, {xi2}) leave the window xi1 < {xi1_max}, xi2 > {xi2_min}")]
    ExponentWindow {
        xi1: f64,
        xi2: f64,
        xi1_max: f64,
        xi2_min: f64,
    },
    #[error("cost matrix is not positive definite (smallest eigenvalue {0})")]
    NotPositiveDefinite(f64),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error(transparent)]
    Integration(#[from] IntegrationFailure),
}

/// `Q(t) = Q0 + diag(d1, d2)`, `b(t) = b0 + (d3, 0)` with
/// `d_i = a_i sin(w_i eps eps0 t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticCostModel {
    pub q0: [[f64; 2]; 2],
    pub b0: [f64; 2],
    pub amplitudes: [f64; 3],
    pub frequencies: [f64; 3],
}

impl Default for QuadraticCostModel {
    fn default() -> Self {
        Self {
            q0: [[3.0, 2.0], [2.0, 5.0]],
            b0: [2.0, 1.0],
            amplitudes: [0.8, 1.8, 0.66],
            frequencies: [2.2, 1.7, 1.9],
        }
    }
}

fn sym_eigenvalues(q: &Matrix2<f64>) -> (f64, f64) {
    let e = q.symmetric_eigenvalues();
    (e.min(), e.max())
}

impl QuadraticCostModel {
    /// Rejects an asymmetric `Q0` and any model whose `Q(t)` can fail to be
    /// positive definite for some `t`.
    pub fn validate(&self) -> Result<(), FeedbackOptError> {
        if self.q0[0][1] != self.q0[1][0] {
            return Err(FeedbackOptError::InvalidScenario("Q0 must be symmetric".into()));
        }
        let finite = self.q0.iter().flatten().chain(&self.b0).chain(&self.amplitudes).chain(&self.frequencies);
        if !finite.into_iter().all(|v| v.is_finite()) {
            return Err(FeedbackOptError::InvalidScenario("model entries must be finite".into()));
        }
        let (lo, _) = self.eigenvalue_range(1.0);
        if !(lo > 0.0) {
            return Err(FeedbackOptError::NotPositiveDefinite(lo));
        }
        Ok(())
    }

    fn d(&self, t: f64, eps: f64, eps0: f64) -> [f64; 3] {
        let w = eps * eps0 * t;
        std::array::from_fn(|i| self.amplitudes[i] * (self.frequencies[i] * w).sin())
    }

    pub fn cost_matrices(&self, t: f64, eps: f64, eps0: f64) -> (Matrix2<f64>, Vector2<f64>) {
        let [d1, d2, d3] = self.d(t, eps, eps0);
        let q = Matrix2::new(self.q0[0][0] + d1, self.q0[0][1], self.q0[1][0], self.q0[1][1] + d2);
        let b = Vector2::new(self.b0[0] + d3, self.b0[1]);
        (q, b)
    }

    /// `phi = -Q^{-1} b` by a direct 2x2 solve.
    pub fn optimizer(&self, t: f64, eps: f64, eps0: f64) -> Result<Vector2<f64>, FeedbackOptError> {
        let (q, b) = self.cost_matrices(t, eps, eps0);
        let det = q[(0, 0)] * q[(1, 1)] - q[(0, 1)] * q[(1, 0)];
        if !(det > 0.0 && q[(0, 0)] > 0.0) {
            return Err(FeedbackOptError::NotPositiveDefinite(sym_eigenvalues(&q).0));
        }
        Ok(Vector2::new(
            -(q[(1, 1)] * b[0] - q[(0, 1)] * b[1]) / det,
            -(q[(0, 0)] * b[1] - q[(1, 0)] * b[0]) / det,
        ))
    }

    /// `Phi(xhat) = xhat' Q xhat + 2 b' xhat`, the cost on the steady-state manifold.
    pub fn cost(&self, x_hat: &Vector2<f64>, t: f64, eps: f64, eps0: f64) -> f64 {
        let (q, b) = self.cost_matrices(t, eps, eps0);
        x_hat.dot(&(q * x_hat)) + 2.0 * b.dot(x_hat)
    }

    pub fn grad_phi(&self, x_hat: &Vector2<f64>, t: f64, eps: f64, eps0: f64) -> Vector2<f64> {
        let (q, b) = self.cost_matrices(t, eps, eps0);
        2.0 * q * x_hat + 2.0 * b
    }

    /// `Phat = Q z / 2 + Q xhat + 2 b`, the gradient estimate built from the measured plant output.
    pub fn phat(&self, x_hat: &Vector2<f64>, z: &Vector2<f64>, t: f64, eps: f64, eps0: f64) -> Vector2<f64> {
        let (q, b) = self.cost_matrices(t, eps, eps0);
        0.5 * q * z + q * x_hat + 2.0 * b
    }

    /// Extreme eigenvalues of `Q(t)` over all `t`, scaling the sinusoid
    /// amplitudes by `reach` (0 for a static cost). The extremes of a symmetric
    /// matrix family affine in `(d1, d2)` sit at the corners of the box.
    pub fn eigenvalue_range(&self, reach: f64) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for s1 in [-1.0, 1.0] {
            for s2 in [-1.0, 1.0] {
                let q = Matrix2::new(
                    self.q0[0][0] + s1 * reach * self.amplitudes[0].abs(),
                    self.q0[0][1],
                    self.q0[1][0],
                    self.q0[1][1] + s2 * reach * self.amplitudes[1].abs(),
                );
                let (a, b) = sym_eigenvalues(&q);
                lo = lo.min(a);
                hi = hi.max(b);
            }
        }
        (lo, hi)
    }

    /// `kappa = 2 min_t lambda_min(Q)`, `L = 2 max_t lambda_max(Q)` and
    /// `ell = max_t lambda_max(Q) / 2`.
    pub fn derived_constants(&self, eps0: f64) -> CostConstants {
        let reach = if eps0 == 0.0 { 0.0 } else { 1.0 };
        let (lo, hi) = self.eigenvalue_range(reach);
        CostConstants {
            lambda_min: lo,
            lambda_max: hi,
            kappa: 2.0 * lo,
            big_l: 2.0 * hi,
            ell: 0.5 * hi,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostConstants {
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// strong convexity of `Phi`
    pub kappa: f64,
    /// smoothness of `Phi`
    #[serde(rename = "L")]
    pub big_l: f64,
    /// Lipschitz constant of `Phat` in `z`
    pub ell: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackOptSystem {
    pub cost: QuadraticCostModel,
    pub plant: FxTDriftParams,
    pub controller: FxTDriftParams,
    pub eps: f64,
    pub eps0: f64,
}

/// Decay exponents `(b1, b2)` of `W = |y|^2` along `y' = -F_{xi1,xi2}(y)`.
pub fn plant_decay_exponents(plant: FxTDriftParams) -> (f64, f64) {
    (1.0 - 0.5 * plant.xi1(), 1.0 - 0.5 * plant.xi2())
}

/// Largest admissible `xi1` and smallest admissible `xi2` for the controller.
pub fn controller_window(plant: FxTDriftParams) -> (f64, f64) {
    let (b1, b2) = plant_decay_exponents(plant);
    ((2.0 - 2.0 * b1).min(1.0), 2.0 - 2.0 * b2)
}

impl FeedbackOptSystem {
    pub fn new(
        cost: QuadraticCostModel,
        plant: FxTDriftParams,
        controller: FxTDriftParams,
        eps: f64,
        eps0: f64,
    ) -> Result<Self, FeedbackOptError> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(ParamError::OutOfRange {
                name: "eps",
                range: "(0, inf)",
                value: eps,
            }
            .into());
        }
        if !(eps0 >= 0.0 && eps0.is_finite()) {
            return Err(ParamError::OutOfRange {
                name: "eps0",
                range: "[0, inf)",
                value: eps0,
            }
            .into());
        }
        cost.validate()?;
        let (xi1_max, xi2_min) = controller_window(plant);
        if !(controller.xi1() < xi1_max && controller.xi2() > xi2_min) {
            return Err(FeedbackOptError::ExponentWindow {
                xi1: controller.xi1(),
                xi2: controller.xi2(),
                xi1_max,
                xi2_min,
            });
        }
        Ok(Self {
            cost,
            plant,
            controller,
            eps,
            eps0,
        })
    }

    /// The bundled example: plant `F_{2/5,-2/7}`, controller `F_{1/3,-1/5}`.
    pub fn bundled(eps: f64, eps0: f64) -> Result<Self, FeedbackOptError> {
        Self::new(
            QuadraticCostModel::default(),
            FxTDriftParams::new(0.4, -2.0 / 7.0)?,
            FxTDriftParams::new(1.0 / 3.0, -0.2)?,
            eps,
            eps0,
        )
    }

    pub fn optimizer(&self, t: f64) -> Result<Vector2<f64>, FeedbackOptError> {
        self.cost.optimizer(t, self.eps, self.eps0)
    }

    pub fn constants(&self) -> CostConstants {
        self.cost.derived_constants(self.eps0)
    }

    /// Right-hand side of the closed loop in time `t`, state `(xhat, z)`.
    pub fn eval(&self, t: f64, s: &[f64], out: &mut [f64]) {
        let x_hat = Vector2::new(s[0], s[1]);
        let z = Vector2::new(s[2], s[3]);
        let p = self.cost.phat(&x_hat, &z, t, self.eps, self.eps0);
        let mut fx = [0.0; 2];
        fxt_drift_into(p.as_slice(), self.controller, &mut fx);
        let e = [z[0] - PLANT_GAIN * x_hat[0], z[1] - PLANT_GAIN * x_hat[1]];
        let mut fz = [0.0; 2];
        fxt_drift_into(&e, self.plant, &mut fz);
        out[0] = -self.eps * fx[0];
        out[1] = -self.eps * fx[1];
        out[2] = -fz[0];
        out[3] = -fz[1];
    }

    /// The cost frozen at time `t`, in the slow time `tau = eps t` and the
    /// shifted coordinate `x = xhat - phi`.
    pub fn frozen_form(&self, t: f64) -> Result<FrozenLoop, FeedbackOptError> {
        let (q, b) = self.cost.cost_matrices(t, self.eps, self.eps0);
        Ok(FrozenLoop {
            q,
            b,
            phi: self.optimizer(t)?,
            plant: self.plant,
            controller: self.controller,
        })
    }
}

pub fn closed_loop_field(sys: &FeedbackOptSystem) -> impl VectorField + '_ {
    FnField::new(4, move |t, s: &[f64], _u: &[f64], out: &mut [f64]| sys.eval(t, s, out))
}

/// Static-cost loop as a two-time-scale system:
/// `dx/dtau = -F(Phat(x + phi, z))`, `eps dz/dtau = -F(z - 2(x + phi))`.
#[derive(Debug, Clone, Copy)]
pub struct FrozenLoop {
    q: Matrix2<f64>,
    b: Vector2<f64>,
    phi: Vector2<f64>,
    plant: FxTDriftParams,
    controller: FxTDriftParams,
}

impl FrozenLoop {
    pub fn optimizer(&self) -> Vector2<f64> {
        self.phi
    }

    /// `V = |x|^2` for the reduced flow `-F(2 Q x)`, with
    /// `k_i = kappa^(2 - xi_i) / L` and `a_i = 1 - xi_i / 2`.
    pub fn reduced_certificate(&self) -> FxTCertificate {
        let (lo, hi) = sym_eigenvalues(&self.q);
        let (kappa, big_l) = (2.0 * lo, 2.0 * hi);
        let (xi1, xi2) = (self.controller.xi1(), self.controller.xi2());
        FxTCertificate {
            function: Arc::new(QuadraticForm::identity(2)),
            sandwich_offset: 0,
            alpha_lo: ClassKFn::power(1.0, 2.0),
            alpha_hi: ClassKFn::power(1.0, 2.0),
            k1: kappa.powf(2.0 - xi1) / big_l,
            k2: kappa.powf(2.0 - xi2) / big_l,
            a1: 1.0 - 0.5 * xi1,
            a2: 1.0 - 0.5 * xi2,
            rho: ClassKFn::zero(),
        }
    }

    /// `W = |y|^2` for the plant's boundary layer `y' = -F(y)`, which decays
    /// as `-2 W^b1 - 2 W^b2` exactly.
    pub fn boundary_layer_certificate(&self) -> FxTCertificate {
        let (b1, b2) = plant_decay_exponents(self.plant);
        FxTCertificate {
            function: Arc::new(QuadraticForm::tail(2, 2)),
            sandwich_offset: 2,
            alpha_lo: ClassKFn::power(1.0, 2.0),
            alpha_hi: ClassKFn::power(1.0, 2.0),
            k1: 2.0,
            k2: 2.0,
            a1: b1,
            a2: b2,
            rho: ClassKFn::zero(),
        }
    }
}

impl SingularlyPerturbed for FrozenLoop {
    fn dims(&self) -> SpDims {
        SpDims { n: 2, m: 2, p: 0 }
    }

    fn f(&self, x: &[f64], z: &[f64], _u: &[f64], out: &mut [f64]) {
        let x_hat = Vector2::new(x[0], x[1]) + self.phi;
        let p = 0.5 * self.q * Vector2::new(z[0], z[1]) + self.q * x_hat + 2.0 * self.b;
        fxt_drift_into(p.as_slice(), self.controller, out);
        out.iter_mut().for_each(|o| *o = -*o);
    }

    fn g(&self, x: &[f64], z: &[f64], _u: &[f64], out: &mut [f64]) {
        let e = [
            z[0] - PLANT_GAIN * (x[0] + self.phi[0]),
            z[1] - PLANT_GAIN * (x[1] + self.phi[1]),
        ];
        fxt_drift_into(&e, self.plant, out);
        out.iter_mut().for_each(|o| *o = -*o);
    }

    fn h(&self, x: &[f64], out: &mut [f64]) {
        out[0] = PLANT_GAIN * (x[0] + self.phi[0]);
        out[1] = PLANT_GAIN * (x[1] + self.phi[1]);
    }

    fn jac_h(&self, _x: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(2, 2) * PLANT_GAIN
    }

    fn jac_h_mul(&self, _x: &[f64], v: &[f64], out: &mut [f64]) {
        out[0] = PLANT_GAIN * v[0];
        out[1] = PLANT_GAIN * v[1];
    }

    fn equilibrium(&self) -> Vec<f64> {
        vec![PLANT_GAIN * self.phi[0], PLANT_GAIN * self.phi[1]]
    }
}

/// Closed-loop samples on a uniform output grid.
#[derive(Debug, Clone, Serialize)]
pub struct TrackingRecord {
    pub eps: f64,
    pub eps0: f64,
    pub times: Vec<f64>,
    pub x_hat: Vec<[f64; 2]>,
    pub z: Vec<[f64; 2]>,
    pub optimizer: Vec<[f64; 2]>,
    /// `|xhat(t) - phi(t)|`
    pub tracking_error: Vec<f64>,
    /// `|z(t) - h(xhat(t))|`
    pub plant_error: Vec<f64>,
    /// accepted integrator steps
    pub steps: usize,
}

impl TrackingRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Mean tracking error over `t >= (1 - fraction) * t_end`.
    pub fn post_settling_mean(&self, fraction: f64) -> f64 {
        let t_end = self.times.last().copied().unwrap_or(0.0);
        let start = (1.0 - fraction) * t_end;
        let (sum, n) = self
            .times
            .iter()
            .zip(&self.tracking_error)
            .filter(|(t, _)| **t >= start)
            .fold((0.0, 0usize), |(s, n), (_, e)| (s + e, n + 1));
        sum / n.max(1) as f64
    }

    pub fn final_tracking_error(&self) -> f64 {
        self.tracking_error.last().copied().unwrap_or(f64::NAN)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,tau,xhat1,xhat2,z1,z2,opt1,opt2,track_err,plant_err")?;
        for i in 0..self.len() {
            let t = self.times[i];
            let row = [
                t,
                self.eps * t,
                self.x_hat[i][0],
                self.x_hat[i][1],
                self.z[i][0],
                self.z[i][1],
                self.optimizer[i][0],
                self.optimizer[i][1],
                self.tracking_error[i],
                self.plant_error[i],
            ];
            let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackingOptions {
    pub horizon: f64,
    /// spacing of the recorded samples
    pub sample_dt: f64,
    pub solver: SolverOptions,
}

impl Default for TrackingOptions {
    fn default() -> Self {
        Self {
            horizon: DEFAULT_HORIZON,
            sample_dt: 0.5,
            solver: default_solver_options(),
        }
    }
}

pub fn default_solver_options() -> SolverOptions {
    SolverOptions {
        rel_tol: 1e-8,
        abs_tol: 1e-10,
        h_init: 1e-4,
        h_min: 1e-14,
        h_max: 1.0,
        max_steps: 50_000_000,
    }
}

/// Initial conditions `(xhat0, z0)` used when none are given.
pub fn default_initial_conditions() -> Vec<([f64; 2], [f64; 2])> {
    vec![
        ([2.0, -2.0], [0.0, 0.0]),
        ([-3.0, 1.5], [1.0, -1.0]),
        ([0.5, 3.0], [-2.0, 4.0]),
        ([-1.0, -2.5], [3.0, 3.0]),
    ]
}

pub fn run_tracking_scenario(
    sys: &FeedbackOptSystem,
    x_hat0: [f64; 2],
    z0: [f64; 2],
    opts: &TrackingOptions,
) -> Result<TrackingRecord, FeedbackOptError> {
    if !(opts.horizon > 0.0 && opts.horizon.is_finite()) {
        return Err(FeedbackOptError::InvalidScenario(format!("horizon must be positive, got {}", opts.horizon)));
    }
    if !(opts.sample_dt > 0.0 && opts.sample_dt <= opts.horizon) {
        return Err(FeedbackOptError::InvalidScenario(format!(
            "sample spacing must lie in (0, horizon], got {}",
            opts.sample_dt
        )));
    }
    let n = (opts.horizon / opts.sample_dt).round() as usize;
    let stops: Vec<f64> = (1..n).map(|i| i as f64 * opts.sample_dt).filter(|t| *t < opts.horizon).collect();
    let field = closed_loop_field(sys);
    let s0 = [x_hat0[0], x_hat0[1], z0[0], z0[1]];
    let traj = integrate_with_stops(&field, &s0, &InputSignal::zero(0), (0.0, opts.horizon), &opts.solver, &stops)?;

    let mut rec = TrackingRecord {
        eps: sys.eps,
        eps0: sys.eps0,
        times: Vec::with_capacity(n + 1),
        x_hat: Vec::with_capacity(n + 1),
        z: Vec::with_capacity(n + 1),
        optimizer: Vec::with_capacity(n + 1),
        tracking_error: Vec::with_capacity(n + 1),
        plant_error: Vec::with_capacity(n + 1),
        steps: traj.len() - 1,
    };
    let mut next = 0usize;
    for (i, &t) in traj.times().iter().enumerate() {
        let on_grid = i == 0 || i + 1 == traj.len() || (next < stops.len() && t == stops[next]);
        if !on_grid {
            continue;
        }
        if i > 0 && next < stops.len() && t == stops[next] {
            next += 1;
        }
        let s = traj.state(i);
        let phi = sys.optimizer(t)?;
        rec.times.push(t);
        rec.x_hat.push([s[0], s[1]]);
        rec.z.push([s[2], s[3]]);
        rec.optimizer.push([phi[0], phi[1]]);
        rec.tracking_error.push(norm(&[s[0] - phi[0], s[1] - phi[1]]));
        rec.plant_error.push(norm(&[s[2] - PLANT_GAIN * s[0], s[3] - PLANT_GAIN * s[1]]));
    }
    Ok(rec)
}

/// Runs every initial condition for every `eps0`, in parallel.
pub fn run_tracking_grid(
    eps: f64,
    eps0s: &[f64],
    ics: &[([f64; 2], [f64; 2])],
    opts: &TrackingOptions,
) -> Result<Vec<TrackingRecord>, FeedbackOptError> {
    let jobs: Vec<_> = eps0s.iter().flat_map(|&e0| ics.iter().map(move |&ic| (e0, ic))).collect();
    jobs.par_iter()
        .map(|&(eps0, (x0, z0))| {
            let sys = FeedbackOptSystem::bundled(eps, eps0)?;
            run_tracking_scenario(&sys, x0, z0, opts)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{equilibrium_residual, quasi_steady_residual};
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn static_cost_matrices() {
        let m = QuadraticCostModel::default();
        for t in [0.0, 1.0, 1e3] {
            let (q, b) = m.cost_matrices(t, 0.05, 0.0);
            assert_eq!(q, Matrix2::new(3.0, 2.0, 2.0, 5.0));
            assert_eq!(b, Vector2::new(2.0, 1.0));
        }
        let (q, b) = m.cost_matrices(0.0, 0.05, 5.0);
        assert_eq!(q, Matrix2::new(3.0, 2.0, 2.0, 5.0));
        assert_eq!(b, Vector2::new(2.0, 1.0));
    }

    #[test]
    fn sine_peak() {
        let m = QuadraticCostModel::default();
        let t = std::f64::consts::PI / (2.0 * 2.2 * 0.25);
        let (q, _) = m.cost_matrices(t, 0.05, 5.0);
        assert!(close(q[(0, 0)], 3.8, 1e-12));
    }

    #[test]
    fn static_optimizer() {
        let m = QuadraticCostModel::default();
        let phi = m.optimizer(0.0, 0.05, 0.0).unwrap();
        assert!(close(phi[0], -8.0 / 11.0, 1e-15));
        assert!(close(phi[1], 1.0 / 11.0, 1e-15));
        let lu = Matrix2::new(3.0, 2.0, 2.0, 5.0).lu().solve(&Vector2::new(-2.0, -1.0)).unwrap();
        assert!((phi - lu).norm() < 1e-14);

        let zero_b = QuadraticCostModel {
            b0: [0.0, 0.0],
            amplitudes: [0.8, 1.8, 0.0],
            ..Default::default()
        };
        assert_eq!(zero_b.optimizer(3.0, 0.05, 5.0).unwrap(), Vector2::zeros());
    }

    #[test]
    fn phat_examples() {
        let m = QuadraticCostModel::default();
        let phi = m.optimizer(0.0, 0.05, 0.0).unwrap();
        assert!(m.phat(&phi, &(2.0 * phi), 0.0, 0.05, 0.0).norm() < 1e-14);
        assert_eq!(m.phat(&Vector2::zeros(), &Vector2::zeros(), 0.0, 0.05, 0.0), Vector2::new(4.0, 2.0));
        assert!(m.grad_phi(&phi, 0.0, 0.05, 0.0).norm() < 1e-14);
    }

    #[test]
    fn grad_matches_finite_differences() {
        let m = QuadraticCostModel::default();
        let h = 1e-5;
        for (x, t) in [([0.3, -1.2], 7.0), ([2.0, 0.5], 101.0), ([-4.0, 3.0], 13.5)] {
            let x = Vector2::new(x[0], x[1]);
            let g = m.grad_phi(&x, t, 0.05, 5.0);
            for i in 0..2 {
                let mut e = Vector2::zeros();
                e[i] = h;
                let fd = (m.cost(&(x + e), t, 0.05, 5.0) - m.cost(&(x - e), t, 0.05, 5.0)) / (2.0 * h);
                assert!((fd - g[i]).abs() <= 1e-6 * g[i].abs().max(1.0));
            }
        }
    }

    #[test]
    fn derived_constants_static() {
        let c = QuadraticCostModel::default().derived_constants(0.0);
        let s5 = 5f64.sqrt();
        assert!(close(c.lambda_min, 4.0 - s5, 1e-12));
        assert!(close(c.lambda_max, 4.0 + s5, 1e-12));
        assert!(close(c.kappa, 2.0 * (4.0 - s5), 1e-12));
        assert!(close(c.big_l, 2.0 * (4.0 + s5), 1e-12));
        assert!(close(c.ell, 0.5 * (4.0 + s5), 1e-12));
        // worst corner (3.8, 6.8): (10.6 + sqrt(9 + 16)) / 2
        let c = QuadraticCostModel::default().derived_constants(5.0);
        assert!(close(c.lambda_max, 7.8, 1e-12));
    }

    #[test]
    fn cost_stays_positive_definite() {
        let m = QuadraticCostModel::default();
        for eps0 in [0.0, 0.2, 5.0] {
            let lo = m.derived_constants(eps0).lambda_min;
            for i in 0..10_000 {
                let t = i as f64 * 0.37;
                let (q, _) = m.cost_matrices(t, 0.05, eps0);
                let (a, _) = sym_eigenvalues(&q);
                assert!(a > 0.0 && a >= lo - 1e-12);
                assert!(q[(0, 0)] * q[(1, 1)] - q[(0, 1)] * q[(1, 0)] > 0.0);
            }
        }
        let bad = QuadraticCostModel {
            amplitudes: [3.5, 0.0, 0.0],
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(FeedbackOptError::NotPositiveDefinite(_))));
    }

    #[test]
    fn exponent_window() {
        let plant = FxTDriftParams::new(0.4, -2.0 / 7.0).unwrap();
        let (b1, b2) = plant_decay_exponents(plant);
        assert!(close(b1, 0.8, 1e-15));
        assert!(close(b2, 8.0 / 7.0, 1e-15));
        let (hi, lo) = controller_window(plant);
        assert!(close(hi, 0.4, 1e-15));
        assert!(close(lo, -2.0 / 7.0, 1e-15));
        assert!(FeedbackOptSystem::bundled(0.05, 0.0).is_ok());
        let m = QuadraticCostModel::default();
        for (xi1, xi2) in [(0.5, -0.2), (1.0 / 3.0, -0.3)] {
            let c = FxTDriftParams::new(xi1, xi2).unwrap();
            assert!(matches!(
                FeedbackOptSystem::new(m, plant, c, 0.05, 0.0),
                Err(FeedbackOptError::ExponentWindow { .. })
            ));
        }
        assert!(FeedbackOptSystem::bundled(0.0, 0.0).is_err());
        assert!(FeedbackOptSystem::bundled(0.05, -1.0).is_err());
    }

    #[test]
    fn closed_loop_examples() {
        let sys = FeedbackOptSystem::bundled(0.05, 0.0).unwrap();
        let phi = sys.optimizer(0.0).unwrap();
        let mut out = [0.0; 4];
        sys.eval(0.0, &[phi[0], phi[1], 2.0 * phi[0], 2.0 * phi[1]], &mut out);
        // round-off in Phat is amplified by |p|^(2/3) near zero
        assert!(out.iter().all(|v| v.abs() < 1e-9), "{out:?}");

        sys.eval(0.0, &[1.0, -1.0, 2.0, -2.0], &mut out);
        assert_eq!(&out[2..], &[0.0, 0.0]);
        assert!(out[0] != 0.0 || out[1] != 0.0);

        sys.eval(0.0, &[1.0, -1.0, 3.0, -2.0], &mut out);
        assert!(close(out[2], -2.0, 1e-15) && out[3] == 0.0);
    }

    #[test]
    fn frozen_form_is_consistent() {
        let sys = FeedbackOptSystem::bundled(0.05, 0.2).unwrap();
        let fl = sys.frozen_form(123.0).unwrap();
        let xs: Vec<Vec<f64>> = vec![vec![0.0, 0.0], vec![1.0, -2.0], vec![-3.0, 0.5]];
        assert!(quasi_steady_residual(&fl, &xs) < 1e-14);
        assert!(equilibrium_residual(&fl) < 1e-9);

        // dx/dtau = (1/eps) dxhat/dt at the same point
        let t = 123.0;
        let (xh, z) = ([0.4, -0.7], [1.5, 2.0]);
        let mut full = [0.0; 4];
        sys.eval(t, &[xh[0], xh[1], z[0], z[1]], &mut full);
        let phi = fl.optimizer();
        let mut f = [0.0; 2];
        fl.f(&[xh[0] - phi[0], xh[1] - phi[1]], &z, &[], &mut f);
        assert!(close(f[0], full[0] / sys.eps, 1e-13) && close(f[1], full[1] / sys.eps, 1e-13));
        let mut g = [0.0; 2];
        fl.g(&[xh[0] - phi[0], xh[1] - phi[1]], &z, &[], &mut g);
        assert!(close(g[0], full[2], 1e-13) && close(g[1], full[3], 1e-13));
    }

    #[test]
    fn frozen_certificates_hold() {
        use crate::certify::{check_boundary_layer_certificate, check_fxt_certificate, BoxRegion, DEFAULT_CHECK_TOL};
        use crate::dynamics::reduced_field;
        for (eps0, t) in [(0.0, 0.0), (5.0, 17.0)] {
            let fl = FeedbackOptSystem::bundled(0.05, eps0).unwrap().frozen_form(t).unwrap();
            let v = fl.reduced_certificate();
            v.validate().unwrap();
            let x = BoxRegion::cube(2, 10.0);
            let u = BoxRegion::cube(0, 0.0);
            let r = check_fxt_certificate(&v, &reduced_field(&fl), &x, &u, 4000, DEFAULT_CHECK_TOL, 3);
            assert!(r.passed(), "{}", r.to_json());
            let w = fl.boundary_layer_certificate();
            let r = check_boundary_layer_certificate(&w, &fl, &x, &x, &u, &|_: &[f64], _: &[f64], _: &[f64]| true, 4000, DEFAULT_CHECK_TOL, 3);
            assert!(r.passed(), "{}", r.to_json());
            assert!(r.tight > 0);
        }
    }

    #[test]
    fn equilibrium_start_stays_put() {
        let sys = FeedbackOptSystem::bundled(0.05, 0.0).unwrap();
        let phi = sys.optimizer(0.0).unwrap();
        let opts = TrackingOptions {
            horizon: 20.0,
            ..Default::default()
        };
        let rec = run_tracking_scenario(&sys, [phi[0], phi[1]], [2.0 * phi[0], 2.0 * phi[1]], &opts).unwrap();
        assert_eq!(rec.len(), 41);
        let worst = rec.tracking_error.iter().chain(&rec.plant_error).fold(0.0f64, |a, b| a.max(*b));
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn record_layout_and_csv() {
        let sys = FeedbackOptSystem::bundled(0.05, 5.0).unwrap();
        let opts = TrackingOptions {
            horizon: 10.0,
            sample_dt: 1.0,
            ..Default::default()
        };
        let rec = run_tracking_scenario(&sys, [1.0, 1.0], [0.0, 0.0], &opts).unwrap();
        assert_eq!(rec.times, (0..=10).map(f64::from).collect::<Vec<_>>());
        assert!(rec.tracking_error.iter().chain(&rec.plant_error).all(|e| *e >= 0.0));
        let mut buf = Vec::new();
        rec.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,tau,xhat1,xhat2,z1,z2,opt1,opt2,track_err,plant_err");
        let last: Vec<f64> = text.lines().last().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(last.len(), 10);
        assert_eq!(last[0], 10.0);
        assert!(close(last[1], 0.5, 1e-15));
        assert!(run_tracking_scenario(&sys, [1.0, 1.0], [0.0, 0.0], &TrackingOptions { horizon: 0.0, ..opts }).is_err());
    }

    proptest! {
        #[test]
        fn phat_on_manifold_is_the_gradient(
            x1 in -100f64..100.0, x2 in -100f64..100.0, t in 0f64..1e4, eps0 in 0f64..10.0,
        ) {
            let m = QuadraticCostModel::default();
            let x = Vector2::new(x1, x2);
            let d = m.phat(&x, &(PLANT_GAIN * x), t, 0.05, eps0) - m.grad_phi(&x, t, 0.05, eps0);
            let scale = 1.0 + m.grad_phi(&x, t, 0.05, eps0).norm();
            prop_assert!(d.norm() <= 1e-12 * scale);
        }

        #[test]
        fn phat_is_lipschitz_in_z(
            x in proptest::array::uniform2(-50f64..50.0),
            z in proptest::array::uniform2(-50f64..50.0),
            w in proptest::array::uniform2(-50f64..50.0),
            t in 0f64..1e4,
        ) {
            let m = QuadraticCostModel::default();
            let ell = m.derived_constants(5.0).ell;
            let (x, z, w) = (Vector2::from(x), Vector2::from(z), Vector2::from(w));
            let lhs = (m.phat(&x, &z, t, 0.05, 5.0) - m.phat(&x, &w, t, 0.05, 5.0)).norm();
            prop_assert!(lhs <= ell * (z - w).norm() * (1.0 + 1e-12) + 1e-12);
        }

        #[test]
        fn optimizer_solves_the_normal_equations(t in 0f64..1e5, eps0 in 0f64..10.0) {
            let m = QuadraticCostModel::default();
            let (q, b) = m.cost_matrices(t, 0.05, eps0);
            let phi = m.optimizer(t, 0.05, eps0).unwrap();
            prop_assert!((q * phi + b).norm() < 1e-12);
        }
    }
}
