use rayon::prelude::*;
use serde::Serialize;

use super::sampling::{sample_points, BoxRegion};
use super::{CertifyError, ClassKFn, ClassKTag, FxTCertificate};
use crate::dynamics::{buf, error_dynamics_field, SingularlyPerturbed, VectorField};
use crate::nonsmooth::{abs_pow, norm, ParamError};

/// Constants of the interconnection inequalities
///
/// ```text
/// I1 <= nu1 V~^2 + omega1 W~^2 + rho1(|u|)
/// I2 <= nu2 V~^2 + omega2 W~^2 + rho2(|u|)
/// ```
#[derive(Debug, Clone, Serialize)]
pub struct InterconnectionBounds {
    pub nu1: f64,
    pub nu2: f64,
    pub omega1: f64,
    pub omega2: f64,
    pub rho1: ClassKFn,
    pub rho2: ClassKFn,
}

impl InterconnectionBounds {
    /// `nu1 < k_min / 2` or `nu2 < 0`.
    pub fn check_weight_condition(&self, k_min: f64) -> Result<(), CertifyError> {
        if self.nu1 < 0.5 * k_min || self.nu2 < 0.0 {
            Ok(())
        } else {
            Err(CertifyError::InterconnectionCondition {
                nu1: self.nu1,
                half_k: 0.5 * k_min,
                nu2: self.nu2,
            })
        }
    }

    pub fn with_omega2_scaled(&self, factor: f64) -> Self {
        Self {
            omega2: self.omega2 * factor,
            ..self.clone()
        }
    }
}

/// `V^(a1/2) + V^(a2/2)`.
pub fn v_tilde(cert: &FxTCertificate, v: f64) -> f64 {
    abs_pow(v, 0.5 * cert.a1) + abs_pow(v, 0.5 * cert.a2)
}

/// `W^(b1/2) + W^(b2/2)`.
pub fn w_tilde(cert: &FxTCertificate, w: f64) -> f64 {
    v_tilde(cert, w)
}

/// `(I1, I2)` at `(x, y, u)`:
///
/// ```text
/// I1 = dV/dx (f(x, y + h(x), u) - f(x, h(x), u))
/// I2 = (dW/dx - dW/dy dh/dx) f(x, y + h(x), u)
/// ```
pub fn interconnection_terms<S: SingularlyPerturbed + ?Sized>(
    sys: &S,
    v_cert: &FxTCertificate,
    w_cert: &FxTCertificate,
    x: &[f64],
    y: &[f64],
    u: &[f64],
) -> (f64, f64) {
    let d = sys.dims();
    let mut hx = buf(d.m);
    sys.h(x, &mut hx);
    let z: crate::dynamics::Buf = hx.iter().zip(y).map(|(a, b)| a + b).collect();
    let mut f_full = buf(d.n);
    let mut f_red = buf(d.n);
    sys.f(x, &z, u, &mut f_full);
    sys.f(x, &hx, u, &mut f_red);
    let mut gv = buf(d.n);
    v_cert.function.gradient(x, &mut gv);
    let i1 = gv.iter().zip(f_full.iter().zip(&f_red)).map(|(g, (a, b))| g * (a - b)).sum();

    let s: crate::dynamics::Buf = x.iter().chain(y).copied().collect();
    let mut gw = buf(d.n + d.m);
    w_cert.function.gradient(&s, &mut gw);
    let (gx, gy) = gw.split_at(d.n);
    // dW/dy dh/dx f = dW/dy (J_h f)
    let mut jf = buf(d.m);
    sys.jac_h_mul(x, &f_full, &mut jf);
    let i2 = gx.iter().zip(&f_full).map(|(a, b)| a * b).sum::<f64>() - gy.iter().zip(&jf).map(|(a, b)| a * b).sum::<f64>();
    (i1, i2)
}

/// `nu(zeta) = zeta (k_min / 2 - nu1) - (1 - zeta) nu2`.
pub fn nu(bounds: &InterconnectionBounds, k_min: f64, zeta: f64) -> f64 {
    zeta * (0.5 * k_min - bounds.nu1) - (1.0 - zeta) * bounds.nu2
}

/// `omega_eps(zeta) = (1 - zeta) kappa_min / (2 eps) - zeta omega1 - (1 - zeta) omega2`.
pub fn omega(bounds: &InterconnectionBounds, kappa_min: f64, zeta: f64, eps: f64) -> f64 {
    (1.0 - zeta) * kappa_min / (2.0 * eps) - zeta * bounds.omega1 - (1.0 - zeta) * bounds.omega2
}

/// `1 / (k1 (1 - a1)) + 1 / (k2 (a2 - 1))`.
pub fn settling_time_bound(k1: f64, a1: f64, k2: f64, a2: f64) -> Result<f64, CertifyError> {
    if !(k1 > 0.0) {
        return Err(ParamError::OutOfRange {
            name: "k1",
            range: "(0, inf)",
            value: k1,
        }
        .into());
    }
    if !(k2 > 0.0) {
        return Err(ParamError::OutOfRange {
            name: "k2",
            range: "(0, inf)",
            value: k2,
        }
        .into());
    }
    if !(a1 > 0.0 && a1 < 1.0) {
        return Err(ParamError::OutOfRange {
            name: "a1",
            range: "(0, 1)",
            value: a1,
        }
        .into());
    }
    if !(a2 > 1.0) {
        return Err(ParamError::OutOfRange {
            name: "a2",
            range: "(1, inf)",
            value: a2,
        }
        .into());
    }
    Ok(1.0 / (k1 * (1.0 - a1)) + 1.0 / (k2 * (a2 - 1.0)))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CompositeOptions {
    pub zeta_resolution: f64,
    /// reported as `eps_star` when every `eps > 0` works
    pub eps_cap: f64,
}

impl Default for CompositeOptions {
    fn default() -> Self {
        Self {
            zeta_resolution: 1e-3,
            eps_cap: 1.0,
        }
    }
}

/// Weight, time-scale threshold and decay constants of
/// `Psi = zeta V + (1 - zeta) W`, which for `eps < eps_star` satisfies
///
/// ```text
/// dPsi/dt <= -k1_eff Psi^gamma1 - k2_eff Psi^gamma2 + rho_eps(|u|)
/// ```
#[derive(Debug, Clone, Serialize)]
pub struct CompositeCertificate {
    pub zeta_star: f64,
    pub nu_star: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub eps_star: f64,
    /// `omega_eps(zeta_star) > nu_star` for every `eps`; `eps_star` is the cap
    pub eps_unbounded: bool,
    pub k1_eff: f64,
    pub k2_eff: f64,
    pub t_bound: f64,
    pub k_min: f64,
    pub kappa_min: f64,
    pub bounds: InterconnectionBounds,
    pub rho_r: ClassKFn,
    pub rho_b: ClassKFn,
}

impl CompositeCertificate {
    pub fn nu_at(&self, zeta: f64) -> f64 {
        nu(&self.bounds, self.k_min, zeta)
    }

    pub fn omega_at(&self, zeta: f64, eps: f64) -> f64 {
        omega(&self.bounds, self.kappa_min, zeta, eps)
    }

    /// `zeta (rho_R + rho1) + (1 - zeta) (rho_B / eps + rho2)` at `zeta_star`.
    pub fn input_gain(&self, s: f64, eps: f64) -> f64 {
        let z = self.zeta_star;
        z * (self.rho_r.eval(s) + self.bounds.rho1.eval(s)) + (1.0 - z) * (self.rho_b.eval(s) / eps + self.bounds.rho2.eval(s))
    }

    /// The `eps`-independent gain `zeta (rho_R + rho1) + (1 - zeta) rho2`,
    /// valid when the fast dynamics take no input.
    pub fn uniform_input_gain(&self, s: f64) -> f64 {
        let z = self.zeta_star;
        z * (self.rho_r.eval(s) + self.bounds.rho1.eval(s)) + (1.0 - z) * self.bounds.rho2.eval(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }
}

/// Picks the grid weight maximizing `nu`, then the largest `eps` with
/// `omega_eps > nu`, the extremal exponents `gamma1 = max(a1, b1)`,
/// `gamma2 = min(a2, b2)`, and the resulting settling-time bound.
pub fn build_composite(
    v_cert: &FxTCertificate,
    w_cert: &FxTCertificate,
    bounds: &InterconnectionBounds,
    opts: &CompositeOptions,
) -> Result<CompositeCertificate, CertifyError> {
    v_cert.validate()?;
    w_cert.validate()?;
    let k_min = v_cert.k_min();
    let kappa_min = w_cert.k_min();
    bounds.check_weight_condition(k_min)?;
    if !(opts.zeta_resolution > 0.0 && opts.zeta_resolution < 0.5) {
        return Err(ParamError::OutOfRange {
            name: "zeta_resolution",
            range: "(0, 0.5)",
            value: opts.zeta_resolution,
        }
        .into());
    }
    let steps = (1.0 / opts.zeta_resolution).round() as usize;
    let mut best: Option<(f64, f64)> = None;
    for i in 1..steps {
        let zeta = i as f64 / steps as f64;
        let v = nu(bounds, k_min, zeta);
        if v > 0.0 && best.is_none_or(|(_, b)| v > b) {
            best = Some((zeta, v));
        }
    }
    let (zeta_star, nu_star) = best.ok_or(CertifyError::NoFeasibleWeight)?;
    let denom = nu_star + zeta_star * bounds.omega1 + (1.0 - zeta_star) * bounds.omega2;
    let (eps_star, eps_unbounded) = if denom > 0.0 {
        ((1.0 - zeta_star) * kappa_min / (2.0 * denom), false)
    } else {
        (opts.eps_cap, true)
    };
    let gamma1 = v_cert.a1.max(w_cert.a1);
    let gamma2 = v_cert.a2.min(w_cert.a2);
    let k1_eff = 0.5 * nu_star;
    let k2_eff = 0.5 * nu_star * 2f64.powf(1.0 - gamma2);
    let t_bound = settling_time_bound(k1_eff, gamma1, k2_eff, gamma2)?;
    Ok(CompositeCertificate {
        zeta_star,
        nu_star,
        gamma1,
        gamma2,
        eps_star,
        eps_unbounded,
        k1_eff,
        k2_eff,
        t_bound,
        k_min,
        kappa_min,
        bounds: bounds.clone(),
        rho_r: v_cert.rho.clone(),
        rho_b: w_cert.rho.clone(),
    })
}

/// `zeta V(x) + (1 - zeta) W(x, y)`.
pub fn composite_value(v_cert: &FxTCertificate, w_cert: &FxTCertificate, zeta: f64, x: &[f64], y: &[f64]) -> f64 {
    let s: crate::dynamics::Buf = x.iter().chain(y).copied().collect();
    zeta * v_cert.value(x) + (1.0 - zeta) * w_cert.value(&s)
}

/// Three evaluations of `dPsi/dt` along the error dynamics at one point.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CompositeDerivative {
    /// `grad Psi . F`
    pub direct: f64,
    /// `zeta (dV/dx f_red + I1) + (1 - zeta) (dW/dy g / eps + I2)`
    pub expansion: f64,
    /// the expansion with both subsystem derivatives replaced by their decay bounds
    pub assumption_bound: f64,
    /// central difference of `Psi` along the flow
    pub finite_difference: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn composite_derivative<S: SingularlyPerturbed + ?Sized>(
    sys: &S,
    v_cert: &FxTCertificate,
    w_cert: &FxTCertificate,
    zeta: f64,
    eps: f64,
    x: &[f64],
    y: &[f64],
    u: &[f64],
) -> CompositeDerivative {
    let d = sys.dims();
    let s: Vec<f64> = x.iter().chain(y).copied().collect();
    let field = error_dynamics_field(sys, eps);
    let mut flow = vec![0.0; d.n + d.m];
    field.eval(0.0, &s, u, &mut flow);

    let mut gv = vec![0.0; d.n];
    v_cert.function.gradient(x, &mut gv);
    let mut gw = vec![0.0; d.n + d.m];
    w_cert.function.gradient(&s, &mut gw);
    let direct = zeta * gv.iter().zip(&flow).map(|(a, b)| a * b).sum::<f64>()
        + (1.0 - zeta) * gw.iter().zip(&flow).map(|(a, b)| a * b).sum::<f64>();

    let mut hx = vec![0.0; d.m];
    sys.h(x, &mut hx);
    let z: Vec<f64> = hx.iter().zip(y).map(|(a, b)| a + b).collect();
    let mut f_red = vec![0.0; d.n];
    sys.f(x, &hx, u, &mut f_red);
    let mut g = vec![0.0; d.m];
    sys.g(x, &z, u, &mut g);
    let v_red: f64 = gv.iter().zip(&f_red).map(|(a, b)| a * b).sum();
    let w_bl: f64 = gw[d.n..].iter().zip(&g).map(|(a, b)| a * b).sum();
    let (i1, i2) = interconnection_terms(sys, v_cert, w_cert, x, y, u);
    let expansion = zeta * (v_red + i1) + (1.0 - zeta) * (w_bl / eps + i2);

    let un = norm(u);
    let assumption_bound = zeta * (v_cert.decay_bound(v_cert.value(x), un) + i1)
        + (1.0 - zeta) * (w_cert.decay_bound(w_cert.value(&s), un) / eps + i2);

    let speed = norm(&flow);
    let finite_difference = if speed == 0.0 {
        0.0
    } else {
        let delta = 1e-6 * norm(&s).max(1e-3) / speed;
        let psi = |sign: f64| {
            let p: Vec<f64> = s.iter().zip(&flow).map(|(a, b)| a + sign * delta * b).collect();
            composite_value(v_cert, w_cert, zeta, &p[..d.n], &p[d.n..])
        };
        (psi(1.0) - psi(-1.0)) / (2.0 * delta)
    };
    CompositeDerivative {
        direct,
        expansion,
        assumption_bound,
        finite_difference,
    }
}

/// Multiplies the sampled suprema of `(I_i - nu_i V~^2 - rho_i(|u|)) / W~^2`
/// by `margin` to get `omega1`, `omega2` for prescribed `nu1`, `nu2`.
#[allow(clippy::too_many_arguments)]
pub fn calibrate_interconnection_bounds<S: SingularlyPerturbed + ?Sized>(
    sys: &S,
    v_cert: &FxTCertificate,
    w_cert: &FxTCertificate,
    nu1: f64,
    nu2: f64,
    rho1: ClassKFn,
    rho2: ClassKFn,
    state_region: &BoxRegion,
    u_region: &BoxRegion,
    n_samples: usize,
    margin: f64,
    seed: u64,
) -> InterconnectionBounds {
    let d = sys.dims();
    let points = sample_points(&state_region.product(u_region), n_samples, seed);
    let (w1, w2) = points
        .par_iter()
        .map(|p| {
            let (x, rest) = p.split_at(d.n);
            let (y, u) = rest.split_at(d.m);
            let wt = w_tilde(w_cert, w_cert.value(&p[..d.n + d.m]));
            if wt < 1e-12 {
                return (0.0, 0.0);
            }
            let (i1, i2) = interconnection_terms(sys, v_cert, w_cert, x, y, u);
            let vt2 = v_tilde(v_cert, v_cert.value(x)).powi(2);
            let un = norm(u);
            let wt2 = wt * wt;
            ((i1 - nu1 * vt2 - rho1.eval(un)) / wt2, (i2 - nu2 * vt2 - rho2.eval(un)) / wt2)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
    InterconnectionBounds {
        nu1,
        nu2,
        omega1: margin * w1,
        omega2: margin * w2,
        rho1,
        rho2,
    }
}

/// Solves `eps_tilde (alpha_lo(r)^a1 + alpha_lo(r)^a2) = v` for `r >= 0`.
pub fn chi_tilde_inverse(cert: &FxTCertificate, eps_tilde: f64, v: f64) -> Result<f64, CertifyError> {
    if v <= 0.0 {
        return Ok(0.0);
    }
    const GUARD: f64 = 1e150;
    if !v.is_finite() {
        return Err(CertifyError::BracketOverflow(GUARD));
    }
    let chi = |r: f64| {
        let a = cert.alpha_lo.eval(r);
        eps_tilde * (abs_pow(a, cert.a1) + abs_pow(a, cert.a2))
    };
    let mut hi = 1.0;
    while chi(hi) < v {
        hi *= 2.0;
        if hi > GUARD {
            return Err(CertifyError::BracketOverflow(GUARD));
        }
    }
    let mut lo = 0.0;
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if chi(mid) < v {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // pick whichever end reproduces v more closely
    Ok(if (chi(lo) - v).abs() < (chi(hi) - v).abs() { lo } else { hi })
}

/// The implication-form gain `chi = chi_tilde^-1 o rho` with
/// `chi_tilde = eps_tilde alpha_lo^a1 + eps_tilde alpha_lo^a2`, so that
/// `|x| > chi(|u|)` implies decay with gains `k_i - eps_tilde`.
///
/// Evaluation returns `NaN` if the inversion bracket overflows.
pub fn implication_form_gain(cert: &FxTCertificate, eps_tilde: f64) -> Result<ClassKFn, CertifyError> {
    if !(eps_tilde > 0.0 && eps_tilde < cert.k_min()) {
        return Err(ParamError::OutOfRange {
            name: "eps_tilde",
            range: "(0, min(k1, k2))",
            value: eps_tilde,
        }
        .into());
    }
    if cert.rho.is_zero() {
        return Ok(ClassKFn::zero());
    }
    let c = cert.clone();
    Ok(ClassKFn::new(
        ClassKTag::ClassK,
        format!("chi_tilde^-1 o ({})", cert.rho.label()),
        move |s| chi_tilde_inverse(&c, eps_tilde, c.rho.eval(s)).unwrap_or(f64::NAN),
    ))
}
