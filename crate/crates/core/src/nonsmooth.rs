//! Signed powers, the fixed-time drift field, and executable checks for the
//! auxiliary inequalities used throughout the stability analysis.
//!
//! Every `*_check` function evaluates both sides of one inequality at a single
//! point and reports the outcome as a [`LemmaCheckResult`]. The checks are
//! pure and cheap, so the [`suite`] submodule can hammer them with random
//! samples.

use serde::Serialize;
use thiserror::Error;

pub mod suite;

/// Relative tolerance used by every inequality check.
pub const LEMMA_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("exponent must be positive, got {0}")]
    NonPositiveExponent(f64),
    #[error("{name} must lie in {range}, got {value}")]
    OutOfRange {
        name: &'static str,
        range: &'static str,
        value: f64,
    },
    #[error("vector arguments have mismatched lengths {0} and {1}")]
    DimensionMismatch(usize, usize),
    #[error("empty input")]
    Empty,
}

fn ensure(cond: bool, name: &'static str, range: &'static str, value: f64) -> Result<(), ParamError> {
    if cond {
        Ok(())
    } else {
        Err(ParamError::OutOfRange { name, range, value })
    }
}

/// `a^p` for `a >= 0`, with `0^p = 0` for every `p` so that the non-Lipschitz
/// origin never produces `NaN` or infinities.
#[inline]
pub fn abs_pow(a: f64, p: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a.powf(p)
    }
}

/// `⌈x⌋^q = |x|^q sgn(x)`.
pub fn signed_power(x: f64, q: f64) -> Result<f64, ParamError> {
    if !(q > 0.0) {
        return Err(ParamError::NonPositiveExponent(q));
    }
    Ok(signed_power_unchecked(x, q))
}

/// [`signed_power`] without the exponent check, for hot loops whose exponents
/// were validated at construction.
#[inline]
pub fn signed_power_unchecked(x: f64, q: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else if x > 0.0 {
        x.powf(q)
    } else {
        -(-x).powf(q)
    }
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `x / |x|^e`, defined as zero at the origin.
pub fn normalized_power(x: &[f64], e: f64) -> Vec<f64> {
    let n = norm(x);
    if n == 0.0 {
        return vec![0.0; x.len()];
    }
    let s = n.powf(-e);
    x.iter().map(|v| v * s).collect()
}

/// Exponents of the fixed-time drift `F(x) = x/|x|^xi1 + x/|x|^xi2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct FxTDriftParams {
    xi1: f64,
    xi2: f64,
}

impl FxTDriftParams {
    pub fn new(xi1: f64, xi2: f64) -> Result<Self, ParamError> {
        ensure(xi1 > 0.0 && xi1 < 1.0, "xi1", "(0, 1)", xi1)?;
        ensure(xi2 < 0.0, "xi2", "(-inf, 0)", xi2)?;
        Ok(Self { xi1, xi2 })
    }

    pub fn xi1(&self) -> f64 {
        self.xi1
    }

    pub fn xi2(&self) -> f64 {
        self.xi2
    }
}

/// Fixed-time drift `x(|x|^-xi1 + |x|^-xi2)`, continuous at the origin.
pub fn fxt_drift(x: &[f64], params: FxTDriftParams) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    fxt_drift_into(x, params, &mut out);
    out
}

pub fn fxt_drift_into(x: &[f64], params: FxTDriftParams, out: &mut [f64]) {
    let n = norm(x);
    if n == 0.0 {
        out.iter_mut().for_each(|o| *o = 0.0);
        return;
    }
    let s = n.powf(-params.xi1) + n.powf(-params.xi2);
    for (o, v) in out.iter_mut().zip(x) {
        *o = v * s;
    }
}

/// Direction of an inequality `lhs ? rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    LessEq,
    GreaterEq,
}

/// Both sides of one inequality evaluated at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LemmaCheckResult {
    pub lhs: f64,
    pub rhs: f64,
    pub relation: Relation,
    pub holds: bool,
    /// Signed margin in the direction of the inequality; negative means violated.
    pub slack: f64,
}

impl LemmaCheckResult {
    pub fn new(lhs: f64, rhs: f64, relation: Relation) -> Self {
        let slack = match relation {
            Relation::LessEq => rhs - lhs,
            Relation::GreaterEq => lhs - rhs,
        };
        let tol = LEMMA_REL_TOL * 1f64.max(lhs.abs()).max(rhs.abs());
        Self {
            lhs,
            rhs,
            relation,
            holds: slack >= -tol,
            slack,
        }
    }

    pub fn le(lhs: f64, rhs: f64) -> Self {
        Self::new(lhs, rhs, Relation::LessEq)
    }

    /// Slack divided by the scale used for the tolerance.
    pub fn relative_slack(&self) -> f64 {
        self.slack / 1f64.max(self.lhs.abs()).max(self.rhs.abs())
    }
}

/// `x^p1 y^p2 <= c x^(p1+p2) + c^(-p1/p2) y^(p1+p2)`.
pub fn lemma1_check(x: f64, y: f64, p1: f64, p2: f64, c: f64) -> Result<LemmaCheckResult, ParamError> {
    lemma6_check(x, y, p1, p2, 1.0, c)
}

/// `|x/|x|^xi1 - y/|y|^xi1| <= 2^xi1 |x-y|^(1-xi1)`.
pub fn lemma2a_check(x: &[f64], y: &[f64], xi1: f64) -> Result<LemmaCheckResult, ParamError> {
    ensure(xi1 > 0.0 && xi1 < 1.0, "xi1", "(0, 1)", xi1)?;
    if x.len() != y.len() {
        return Err(ParamError::DimensionMismatch(x.len(), y.len()));
    }
    let px = normalized_power(x, xi1);
    let py = normalized_power(y, xi1);
    let lhs = distance(&px, &py);
    let rhs = 2f64.powf(xi1) * abs_pow(distance(x, y), 1.0 - xi1);
    Ok(LemmaCheckResult::le(lhs, rhs))
}

/// Constant `K = 1 + max(1, -xi2 2^(-xi2-1))` of the superlinear difference bound.
pub fn lemma2b_constant(xi2: f64) -> f64 {
    1.0 + 1f64.max(-xi2 * 2f64.powf(-xi2 - 1.0))
}

/// `|x/|x|^xi2 - y/|y|^xi2| <= K |y-x| (|x|^-xi2 + |y-x|^-xi2)`.
///
/// When either argument is zero the inequality is evaluated with the same
/// `K`; since `K >= 1` it then holds with room to spare.
pub fn lemma2b_check(x: &[f64], y: &[f64], xi2: f64) -> Result<LemmaCheckResult, ParamError> {
    ensure(xi2 < 0.0, "xi2", "(-inf, 0)", xi2)?;
    if x.len() != y.len() {
        return Err(ParamError::DimensionMismatch(x.len(), y.len()));
    }
    let k = lemma2b_constant(xi2);
    let px = normalized_power(x, xi2);
    let py = normalized_power(y, xi2);
    let lhs = distance(&px, &py);
    let d = distance(x, y);
    let rhs = k * d * (abs_pow(norm(x), -xi2) + abs_pow(d, -xi2));
    Ok(LemmaCheckResult::le(lhs, rhs))
}

/// Power of a sum versus the sum of powers, with the `n^(p-1)` factor when `p > 1`.
pub fn jensen_sum_check(s: &[f64], p: f64) -> Result<LemmaCheckResult, ParamError> {
    if s.is_empty() {
        return Err(ParamError::Empty);
    }
    if !(p > 0.0) {
        return Err(ParamError::NonPositiveExponent(p));
    }
    for &v in s {
        ensure(v >= 0.0, "s_i", "[0, inf)", v)?;
    }
    let lhs = abs_pow(s.iter().sum::<f64>(), p);
    let sum_pow: f64 = s.iter().map(|&v| abs_pow(v, p)).sum();
    let rhs = if p <= 1.0 {
        sum_pow
    } else {
        (s.len() as f64).powf(p - 1.0) * sum_pow
    };
    Ok(LemmaCheckResult::le(lhs, rhs))
}

/// `x^p <= x^p_lo + x^p_hi` for `p_lo <= p <= p_hi`.
pub fn sandwich_check(x: f64, p: f64, p_lo: f64, p_hi: f64) -> Result<LemmaCheckResult, ParamError> {
    ensure(x >= 0.0, "x", "[0, inf)", x)?;
    ensure(p_lo <= p, "p", "[p_lo, p_hi]", p)?;
    ensure(p <= p_hi, "p", "[p_lo, p_hi]", p)?;
    if x == 0.0 {
        // 0^p with a non-positive exponent is not a finite number.
        ensure(p_lo > 0.0, "p_lo", "(0, inf) when x = 0", p_lo)?;
        return Ok(LemmaCheckResult::le(0.0, 0.0));
    }
    Ok(LemmaCheckResult::le(x.powf(p), x.powf(p_lo) + x.powf(p_hi)))
}

/// `x ⌈x+u⌋^alpha >= 2^-alpha |x|^(alpha+1)` on the region `|x| > 2|u|`.
///
/// Returns `Ok(None)` outside that region: the inequality makes no claim there.
pub fn shifted_power_check(x: f64, u: f64, alpha: f64) -> Result<Option<LemmaCheckResult>, ParamError> {
    if !(alpha > 0.0) {
        return Err(ParamError::NonPositiveExponent(alpha));
    }
    if !(x.abs() > 2.0 * u.abs()) {
        return Ok(None);
    }
    let lhs = x * signed_power_unchecked(x + u, alpha);
    let rhs = 2f64.powf(-alpha) * x.abs().powf(alpha + 1.0);
    Ok(Some(LemmaCheckResult::new(lhs, rhs, Relation::GreaterEq)))
}

/// `delta x^p1 y^p2 <= c x^(p1+p2) + delta^(1+p1/p2) c^(-p1/p2) y^(p1+p2)`.
pub fn lemma6_check(
    x: f64,
    y: f64,
    p1: f64,
    p2: f64,
    delta: f64,
    c: f64,
) -> Result<LemmaCheckResult, ParamError> {
    ensure(x >= 0.0, "x", "[0, inf)", x)?;
    ensure(y >= 0.0, "y", "[0, inf)", y)?;
    ensure(p1 > 0.0, "p1", "(0, inf)", p1)?;
    ensure(p2 > 0.0, "p2", "(0, inf)", p2)?;
    ensure(delta > 0.0, "delta", "(0, inf)", delta)?;
    ensure(c > 0.0, "c", "(0, inf)", c)?;
    let lhs = delta * abs_pow(x, p1) * abs_pow(y, p2);
    let ratio = p1 / p2;
    let rhs = c * abs_pow(x, p1 + p2) + delta.powf(1.0 + ratio) * c.powf(-ratio) * abs_pow(y, p1 + p2);
    Ok(LemmaCheckResult::le(lhs, rhs))
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}
