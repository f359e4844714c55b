//! Lyapunov certificates and sampling-based checks of their decay
//! conditions, the interconnection bounds between the slow and fast
//! subsystems, and the composite construction built on top of them.

use std::fmt;
use std::sync::Arc;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::nonsmooth::{abs_pow, norm, ParamError};

mod checks;
mod composite;
mod envelope;
mod sampling;

pub use checks::{
    check_boundary_layer_certificate, check_fxt_certificate, check_gradient, check_interconnection_bounds,
    check_sandwich, CheckReport, Condition, Restriction, Violation, DEFAULT_CHECK_TOL,
};
pub use composite::{
    build_composite, calibrate_interconnection_bounds, composite_derivative, composite_value, implication_form_gain,
    interconnection_terms, nu, omega, settling_time_bound, v_tilde, w_tilde, chi_tilde_inverse, CompositeCertificate,
    CompositeDerivative, CompositeOptions, InterconnectionBounds,
};
pub use envelope::{estimate_gkl_envelope, BetaRow, GklEnvelope};
pub use sampling::{sample_points, BoxRegion};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CertifyError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("invalid comparison function {label}: {reason}")]
    InvalidClassK { label: String, reason: String },
    #[error("invalid region: {0}")]
    InvalidRegion(String),
    #[error("interconnection condition violated: need nu1 < k_min / 2 or nu2 < 0, got nu1 = {nu1}, k_min / 2 = {half_k}, nu2 = {nu2}")]
    InterconnectionCondition { nu1: f64, half_k: f64, nu2: f64 },
    #[error("no weight on the grid gives a positive decay margin")]
    NoFeasibleWeight,
    #[error("bisection bracket exceeded {0:e} while inverting")]
    BracketOverflow(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ClassKTag {
    /// identically zero, used for absent input gains
    Zero,
    ClassK,
    ClassKInfinity,
}

/// A comparison function `[0, inf) -> [0, inf)`.
#[derive(Clone)]
pub struct ClassKFn {
    tag: ClassKTag,
    label: String,
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for ClassKFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ClassKFn({:?}, {})", self.tag, self.label)
    }
}

impl Serialize for ClassKFn {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.label)
    }
}

impl ClassKFn {
    pub fn new(tag: ClassKTag, label: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            tag,
            label: label.into(),
            f: Arc::new(f),
        }
    }

    pub fn zero() -> Self {
        Self::new(ClassKTag::Zero, "0", |_| 0.0)
    }

    /// `c s^p`.
    pub fn power(c: f64, p: f64) -> Self {
        Self::new(ClassKTag::ClassKInfinity, format!("{c} s^{p}"), move |s| c * abs_pow(s, p))
    }

    /// `sum c_i s^p_i`.
    pub fn poly(terms: &[(f64, f64)]) -> Self {
        let terms = terms.to_vec();
        let label = terms.iter().map(|(c, p)| format!("{c} s^{p}")).collect::<Vec<_>>().join(" + ");
        Self::new(ClassKTag::ClassKInfinity, label, move |s| {
            terms.iter().map(|&(c, p)| c * abs_pow(s, p)).sum()
        })
    }

    pub fn eval(&self, s: f64) -> f64 {
        (self.f)(s)
    }

    pub fn tag(&self) -> ClassKTag {
        self.tag
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_zero(&self) -> bool {
        self.tag == ClassKTag::Zero
    }

    /// Checks `f(0) = 0`, strict increase on a logarithmic grid over
    /// `[1e-6, 1e6]`, and growth `f(1e6) > 10 f(1)` for class-K-infinity.
    pub fn validate(&self) -> Result<(), CertifyError> {
        let fail = |reason: String| {
            Err(CertifyError::InvalidClassK {
                label: self.label.clone(),
                reason,
            })
        };
        let f0 = self.eval(0.0);
        if f0 != 0.0 {
            return fail(format!("value at zero is {f0}"));
        }
        if self.tag == ClassKTag::Zero {
            for i in 0..=48 {
                let s = 10f64.powf(-6.0 + 0.25 * i as f64);
                if self.eval(s) != 0.0 {
                    return fail(format!("tagged zero but f({s:e}) = {}", self.eval(s)));
                }
            }
            return Ok(());
        }
        let mut prev = f0;
        for i in 0..=48 {
            let s = 10f64.powf(-6.0 + 0.25 * i as f64);
            let v = self.eval(s);
            if !(v > prev) || !v.is_finite() {
                return fail(format!("not strictly increasing at s = {s:e}"));
            }
            prev = v;
        }
        if self.tag == ClassKTag::ClassKInfinity && !(self.eval(1e6) > 10.0 * self.eval(1.0)) {
            return fail("does not grow like a class-K-infinity function".into());
        }
        Ok(())
    }
}

/// A differentiable scalar function with an analytic gradient.
pub trait ScalarField: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, s: &[f64]) -> f64;
    fn gradient(&self, s: &[f64], out: &mut [f64]);
}

/// `sum w_i s_i^2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadraticForm {
    weights: Vec<f64>,
}

impl QuadraticForm {
    pub fn new(weights: Vec<f64>) -> Self {
        Self { weights }
    }

    /// `|s|^2` on `R^n`.
    pub fn identity(n: usize) -> Self {
        Self::new(vec![1.0; n])
    }

    /// `|y|^2` as a function of `(x, y)` with `x` in `R^n`, `y` in `R^m`.
    pub fn tail(n: usize, m: usize) -> Self {
        let mut w = vec![0.0; n];
        w.extend(std::iter::repeat_n(1.0, m));
        Self::new(w)
    }
}

impl ScalarField for QuadraticForm {
    fn dim(&self) -> usize {
        self.weights.len()
    }

    fn value(&self, s: &[f64]) -> f64 {
        self.weights.iter().zip(s).map(|(w, v)| w * v * v).sum()
    }

    fn gradient(&self, s: &[f64], out: &mut [f64]) {
        for ((o, w), v) in out.iter_mut().zip(&self.weights).zip(s) {
            *o = 2.0 * w * v;
        }
    }
}

/// A fixed-time ISS Lyapunov function together with its comparison bounds
///
/// ```text
/// alpha_lo(|s_tail|) <= V(s) <= alpha_hi(|s_tail|)
/// dV/ds F(s, u) <= -k1 V^a1 - k2 V^a2 + rho(|u|)
/// ```
///
/// where `s_tail` is `s` without its first `sandwich_offset` components
/// (zero for a slow certificate `V(x)`, `n` for a fast one `W(x, y)`).
#[derive(Clone)]
pub struct FxTCertificate {
    pub function: Arc<dyn ScalarField>,
    pub sandwich_offset: usize,
    pub alpha_lo: ClassKFn,
    pub alpha_hi: ClassKFn,
    pub k1: f64,
    pub k2: f64,
    pub a1: f64,
    pub a2: f64,
    pub rho: ClassKFn,
}

impl fmt::Debug for FxTCertificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FxTCertificate")
            .field("dim", &self.function.dim())
            .field("sandwich_offset", &self.sandwich_offset)
            .field("alpha_lo", &self.alpha_lo)
            .field("alpha_hi", &self.alpha_hi)
            .field("k", &(self.k1, self.k2))
            .field("a", &(self.a1, self.a2))
            .field("rho", &self.rho)
            .finish()
    }
}

impl FxTCertificate {
    pub fn validate(&self) -> Result<(), CertifyError> {
        if !(self.k1 > 0.0) {
            return Err(ParamError::OutOfRange {
                name: "k1",
                range: "(0, inf)",
                value: self.k1,
            }
            .into());
        }
        if !(self.k2 > 0.0) {
            return Err(ParamError::OutOfRange {
                name: "k2",
                range: "(0, inf)",
                value: self.k2,
            }
            .into());
        }
        if !(self.a1 > 0.0 && self.a1 < 1.0) {
            return Err(ParamError::OutOfRange {
                name: "a1",
                range: "(0, 1)",
                value: self.a1,
            }
            .into());
        }
        if !(self.a2 > 1.0 && self.a2.is_finite()) {
            return Err(ParamError::OutOfRange {
                name: "a2",
                range: "(1, inf)",
                value: self.a2,
            }
            .into());
        }
        if self.sandwich_offset >= self.function.dim() {
            return Err(ParamError::DimensionMismatch(self.sandwich_offset, self.function.dim()).into());
        }
        self.alpha_lo.validate()?;
        self.alpha_hi.validate()?;
        self.rho.validate()
    }

    pub fn value(&self, s: &[f64]) -> f64 {
        self.function.value(s)
    }

    /// `-k1 V^a1 - k2 V^a2 + rho(u_norm)`.
    pub fn decay_bound(&self, v: f64, u_norm: f64) -> f64 {
        -self.k1 * abs_pow(v, self.a1) - self.k2 * abs_pow(v, self.a2) + self.rho.eval(u_norm)
    }

    pub fn k_min(&self) -> f64 {
        self.k1.min(self.k2)
    }

    /// Norm of the components the sandwich bound is stated in.
    pub fn sandwich_norm(&self, s: &[f64]) -> f64 {
        norm(&s[self.sandwich_offset..])
    }
}
