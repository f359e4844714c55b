//! Singularly perturbed systems `x' = f(x, z, u)`, `eps z' = g(x, z, u)`,
//! their reduced and boundary-layer decompositions, and the error
//! coordinates `y = z - h(x)`.

use std::sync::Arc;

use nalgebra::DMatrix;
use smallvec::SmallVec;

mod integrate;
mod trajectory;

pub use integrate::{integrate, integrate_with_stops, FailureReason, IntegrationFailure, SolverOptions, SolverOptionsError};
pub use trajectory::{settling_time, Frame, Trajectory};

/// Stack buffer for the small state vectors used here.
pub(crate) type Buf = SmallVec<[f64; 8]>;

pub(crate) fn buf(len: usize) -> Buf {
    SmallVec::from_elem(0.0, len)
}

/// A time-varying vector field with an exogenous input.
pub trait VectorField: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64, state: &[f64], u: &[f64], out: &mut [f64]);

    /// Upper bound on the integration step imposed by the field itself.
    fn max_step(&self) -> Option<f64> {
        None
    }
}

/// Vector field built from a closure.
pub struct FnField<F> {
    dim: usize,
    max_step: Option<f64>,
    f: F,
}

impl<F> FnField<F>
where
    F: Fn(f64, &[f64], &[f64], &mut [f64]) + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, max_step: None, f }
    }

    pub fn with_max_step(mut self, h: f64) -> Self {
        self.max_step = Some(h);
        self
    }
}

impl<F> VectorField for FnField<F>
where
    F: Fn(f64, &[f64], &[f64], &mut [f64]) + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, t: f64, state: &[f64], u: &[f64], out: &mut [f64]) {
        (self.f)(t, state, u, out)
    }

    fn max_step(&self) -> Option<f64> {
        self.max_step
    }
}

type SignalFn = dyn Fn(f64, &mut [f64]) + Send + Sync;

/// An input signal `t -> u(t)` together with a bound on its sup norm.
#[derive(Clone)]
pub struct InputSignal {
    dim: usize,
    sup_norm_bound: f64,
    f: Arc<SignalFn>,
}

impl std::fmt::Debug for InputSignal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("InputSignal")
            .field("dim", &self.dim)
            .field("sup_norm_bound", &self.sup_norm_bound)
            .finish_non_exhaustive()
    }
}

impl InputSignal {
    pub fn new(dim: usize, sup_norm_bound: f64, f: impl Fn(f64, &mut [f64]) + Send + Sync + 'static) -> Self {
        Self {
            dim,
            sup_norm_bound,
            f: Arc::new(f),
        }
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(dim, 0.0, |_, out| out.iter_mut().for_each(|o| *o = 0.0))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sup_norm_bound(&self) -> f64 {
        self.sup_norm_bound
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        (self.f)(t, out)
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpDims {
    /// slow state
    pub n: usize,
    /// fast state
    pub m: usize,
    /// input
    pub p: usize,
}

/// A two-time-scale system with a quasi-steady-state map `h`.
///
/// `g(x, h(x), 0) = 0` must hold for every `x`, and `(0, equilibrium())`
/// must be an equilibrium of the undisturbed system.
pub trait SingularlyPerturbed: Sync {
    fn dims(&self) -> SpDims;
    fn f(&self, x: &[f64], z: &[f64], u: &[f64], out: &mut [f64]);
    fn g(&self, x: &[f64], z: &[f64], u: &[f64], out: &mut [f64]);
    fn h(&self, x: &[f64], out: &mut [f64]);
    /// Jacobian of `h`, an `m x n` matrix.
    fn jac_h(&self, x: &[f64]) -> DMatrix<f64>;

    /// `J_h(x) v`. Override when the Jacobian has structure worth exploiting.
    fn jac_h_mul(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        let j = self.jac_h(x);
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..v.len()).map(|k| j[(i, k)] * v[k]).sum();
        }
    }

    /// The fast-state component `z*` of the equilibrium pair `(0, z*)`.
    fn equilibrium(&self) -> Vec<f64>;
}

/// `(x, u) -> f(x, h(x), u)`.
pub struct ReducedField<'a, S: ?Sized> {
    sys: &'a S,
}

pub fn reduced_field<S: SingularlyPerturbed + ?Sized>(sys: &S) -> ReducedField<'_, S> {
    ReducedField { sys }
}

impl<S: SingularlyPerturbed + ?Sized> VectorField for ReducedField<'_, S> {
    fn dim(&self) -> usize {
        self.sys.dims().n
    }

    fn eval(&self, _t: f64, x: &[f64], u: &[f64], out: &mut [f64]) {
        let mut hx = buf(self.sys.dims().m);
        self.sys.h(x, &mut hx);
        self.sys.f(x, &hx, u, out);
    }
}

/// `(y, u) -> g(x_frozen, y + h(x_frozen), u)`, in the stretched time `t / eps`.
pub struct BoundaryLayerField<'a, S: ?Sized> {
    sys: &'a S,
    x_frozen: Vec<f64>,
    h_frozen: Vec<f64>,
}

pub fn boundary_layer_field<'a, S: SingularlyPerturbed + ?Sized>(sys: &'a S, x_frozen: &[f64]) -> BoundaryLayerField<'a, S> {
    let mut h_frozen = vec![0.0; sys.dims().m];
    sys.h(x_frozen, &mut h_frozen);
    BoundaryLayerField {
        sys,
        x_frozen: x_frozen.to_vec(),
        h_frozen,
    }
}

impl<S: SingularlyPerturbed + ?Sized> VectorField for BoundaryLayerField<'_, S> {
    fn dim(&self) -> usize {
        self.sys.dims().m
    }

    fn eval(&self, _t: f64, y: &[f64], u: &[f64], out: &mut [f64]) {
        let z: Buf = y.iter().zip(&self.h_frozen).map(|(a, b)| a + b).collect();
        self.sys.g(&self.x_frozen, &z, u, out);
    }
}

/// The full system in the original `(x, z)` coordinates.
pub struct OriginalField<'a, S: ?Sized> {
    sys: &'a S,
    eps: f64,
}

pub fn original_field<S: SingularlyPerturbed + ?Sized>(sys: &S, eps: f64) -> OriginalField<'_, S> {
    assert!(eps > 0.0, "eps must be positive");
    OriginalField { sys, eps }
}

impl<S: SingularlyPerturbed + ?Sized> VectorField for OriginalField<'_, S> {
    fn dim(&self) -> usize {
        let d = self.sys.dims();
        d.n + d.m
    }

    fn eval(&self, _t: f64, s: &[f64], u: &[f64], out: &mut [f64]) {
        let n = self.sys.dims().n;
        let (x, z) = s.split_at(n);
        let (dx, dz) = out.split_at_mut(n);
        self.sys.f(x, z, u, dx);
        self.sys.g(x, z, u, dz);
        dz.iter_mut().for_each(|v| *v /= self.eps);
    }

    fn max_step(&self) -> Option<f64> {
        Some(0.5 * self.eps)
    }
}

/// The full system in the error coordinates `(x, y)`, `y = z - h(x)`.
pub struct ErrorDynamicsField<'a, S: ?Sized> {
    sys: &'a S,
    eps: f64,
}

pub fn error_dynamics_field<S: SingularlyPerturbed + ?Sized>(sys: &S, eps: f64) -> ErrorDynamicsField<'_, S> {
    assert!(eps > 0.0, "eps must be positive");
    ErrorDynamicsField { sys, eps }
}

impl<S: SingularlyPerturbed + ?Sized> VectorField for ErrorDynamicsField<'_, S> {
    fn dim(&self) -> usize {
        let d = self.sys.dims();
        d.n + d.m
    }

    fn eval(&self, _t: f64, s: &[f64], u: &[f64], out: &mut [f64]) {
        let d = self.sys.dims();
        let (x, y) = s.split_at(d.n);
        let mut z = buf(d.m);
        self.sys.h(x, &mut z);
        for (zi, yi) in z.iter_mut().zip(y) {
            *zi += yi;
        }
        let (dx, dy) = out.split_at_mut(d.n);
        self.sys.f(x, &z, u, dx);
        self.sys.g(x, &z, u, dy);
        let mut jf = buf(d.m);
        self.sys.jac_h_mul(x, dx, &mut jf);
        for (v, j) in dy.iter_mut().zip(&jf) {
            *v = *v / self.eps - j;
        }
    }

    fn max_step(&self) -> Option<f64> {
        Some(0.5 * self.eps)
    }
}

/// `(x, z) -> (x, z - h(x))`.
pub fn to_error_coords<S: SingularlyPerturbed + ?Sized>(sys: &S, x: &[f64], z: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut y = vec![0.0; sys.dims().m];
    sys.h(x, &mut y);
    for (yi, zi) in y.iter_mut().zip(z) {
        *yi = zi - *yi;
    }
    (x.to_vec(), y)
}

/// `(x, y) -> (x, y + h(x))`.
pub fn from_error_coords<S: SingularlyPerturbed + ?Sized>(sys: &S, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut z = vec![0.0; sys.dims().m];
    sys.h(x, &mut z);
    for (zi, yi) in z.iter_mut().zip(y) {
        *zi += yi;
    }
    (x.to_vec(), z)
}

/// Maps an `(x, z)` trajectory into error coordinates.
pub fn trajectory_to_error_coords<S: SingularlyPerturbed + ?Sized>(sys: &S, traj: &Trajectory) -> Trajectory {
    let n = sys.dims().n;
    traj.map_states(Frame::Error, |s| {
        let (x, y) = to_error_coords(sys, &s[..n], &s[n..]);
        x.into_iter().chain(y).collect()
    })
}

/// Largest `|g(x, h(x), 0)| / (1 + |x|)` over the given points.
pub fn quasi_steady_residual<S: SingularlyPerturbed + ?Sized>(sys: &S, xs: &[Vec<f64>]) -> f64 {
    let d = sys.dims();
    let u = vec![0.0; d.p];
    let mut hx = vec![0.0; d.m];
    let mut gx = vec![0.0; d.m];
    xs.iter()
        .map(|x| {
            sys.h(x, &mut hx);
            sys.g(x, &hx, &u, &mut gx);
            crate::nonsmooth::norm(&gx) / (1.0 + crate::nonsmooth::norm(x))
        })
        .fold(0.0, f64::max)
}

/// `max(|f(0, z*, 0)|, |g(0, z*, 0)|)`.
pub fn equilibrium_residual<S: SingularlyPerturbed + ?Sized>(sys: &S) -> f64 {
    let d = sys.dims();
    let x = vec![0.0; d.n];
    let z = sys.equilibrium();
    let u = vec![0.0; d.p];
    let mut fx = vec![0.0; d.n];
    let mut gz = vec![0.0; d.m];
    sys.f(&x, &z, &u, &mut fx);
    sys.g(&x, &z, &u, &mut gz);
    crate::nonsmooth::norm(&fx).max(crate::nonsmooth::norm(&gz))
}
