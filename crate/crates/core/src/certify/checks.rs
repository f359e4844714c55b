use rayon::prelude::*;
use serde::Serialize;
use smallvec::{smallvec, SmallVec};

use super::composite::{interconnection_terms, v_tilde, w_tilde, InterconnectionBounds};
use super::sampling::{sample_points, BoxRegion};
use super::{CertifyError, FxTCertificate, ScalarField};
use crate::dynamics::{buf, SingularlyPerturbed, VectorField};
use crate::nonsmooth::norm;

pub const DEFAULT_CHECK_TOL: f64 = 1e-9;
/// Violations beyond this many are counted but not stored.
const MAX_RECORDED: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Condition {
    /// `dV/dx F <= -k1 V^a1 - k2 V^a2 + rho(|u|)`
    Decay,
    SandwichLower,
    SandwichUpper,
    /// `I1 <= nu1 V~^2 + omega1 W~^2 + rho1(|u|)`
    SlowInterconnection,
    /// `I2 <= nu2 V~^2 + omega2 W~^2 + rho2(|u|)`
    FastInterconnection,
    Gradient,
}

#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub index: usize,
    pub condition: Condition,
    pub point: Vec<f64>,
    pub input: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
}

/// Outcome of one sampled check of `lhs <= rhs` conditions.
///
/// A sample is a violation when `lhs - rhs > tolerance * max(1, |lhs|, |rhs|)`
/// and tight when `|lhs - rhs|` is within that margin.
#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub samples_tested: usize,
    /// samples outside the region where the condition is claimed
    pub skipped: usize,
    pub tight: usize,
    pub violation_count: usize,
    /// the first violations by sample index
    pub violations: Vec<Violation>,
    /// largest `(lhs - rhs) / max(1, |lhs|, |rhs|)` over all evaluated conditions
    pub max_violation: f64,
    pub seed: u64,
    pub tolerance: f64,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.violation_count == 0
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone, Copy)]
struct Eval {
    condition: Condition,
    lhs: f64,
    rhs: f64,
}

type Evals = SmallVec<[Eval; 2]>;

fn relative_excess(e: &Eval) -> f64 {
    let scale = 1f64.max(e.lhs.abs()).max(e.rhs.abs());
    let r = (e.lhs - e.rhs) / scale;
    if r.is_nan() {
        f64::INFINITY
    } else {
        r
    }
}

/// Evaluates `f` at every sample in parallel and merges in sample order.
fn run_check<F>(points: &[Vec<f64>], split: usize, seed: u64, tol: f64, f: F) -> CheckReport
where
    F: Fn(&[f64], &[f64]) -> Option<Evals> + Sync,
{
    let outcomes: Vec<Option<Evals>> = points
        .par_iter()
        .map(|p| {
            let (s, u) = p.split_at(split);
            f(s, u)
        })
        .collect();
    let mut report = CheckReport {
        samples_tested: 0,
        skipped: 0,
        tight: 0,
        violation_count: 0,
        violations: Vec::new(),
        max_violation: f64::NEG_INFINITY,
        seed,
        tolerance: tol,
    };
    for (index, outcome) in outcomes.into_iter().enumerate() {
        let Some(evals) = outcome else {
            report.skipped += 1;
            continue;
        };
        report.samples_tested += 1;
        for e in evals {
            let r = relative_excess(&e);
            report.max_violation = report.max_violation.max(r);
            if r > tol {
                report.violation_count += 1;
                if report.violations.len() < MAX_RECORDED {
                    let (s, u) = points[index].split_at(split);
                    report.violations.push(Violation {
                        index,
                        condition: e.condition,
                        point: s.to_vec(),
                        input: u.to_vec(),
                        lhs: e.lhs,
                        rhs: e.rhs,
                    });
                }
            } else if r.abs() <= tol {
                report.tight += 1;
            }
        }
    }
    report
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Samples `(state, u)` in `region x u_region` and checks the decay inequality
/// of `cert` along `field` (evaluated at `t = 0`).
pub fn check_fxt_certificate(
    cert: &FxTCertificate,
    field: &dyn VectorField,
    region: &BoxRegion,
    u_region: &BoxRegion,
    n_samples: usize,
    tol: f64,
    seed: u64,
) -> CheckReport {
    let d = region.dim();
    assert_eq!(field.dim(), d);
    assert_eq!(cert.function.dim(), d);
    let points = sample_points(&region.product(u_region), n_samples, seed);
    run_check(&points, d, seed, tol, |s, u| {
        let mut fv = buf(d);
        let mut grad = buf(d);
        field.eval(0.0, s, u, &mut fv);
        cert.function.gradient(s, &mut grad);
        let v = cert.value(s);
        Some(smallvec![Eval {
            condition: Condition::Decay,
            lhs: dot(&grad, &fv),
            rhs: cert.decay_bound(v, norm(u)),
        }])
    })
}

/// Predicate `(x, y, u) -> bool` selecting the samples a check applies to.
pub type Restriction = dyn Fn(&[f64], &[f64], &[f64]) -> bool + Sync;

/// Checks the decay inequality of a fast certificate `W(x, y)` along the
/// boundary-layer field `g(x, y + h(x), u)`, with `x` frozen at each sample.
/// Samples failing `restriction(x, y, u)` are skipped.
#[allow(clippy::too_many_arguments)]
pub fn check_boundary_layer_certificate<S: SingularlyPerturbed + ?Sized>(
    cert: &FxTCertificate,
    sys: &S,
    x_region: &BoxRegion,
    y_region: &BoxRegion,
    u_region: &BoxRegion,
    restriction: &Restriction,
    n_samples: usize,
    tol: f64,
    seed: u64,
) -> CheckReport {
    let dims = sys.dims();
    assert_eq!(x_region.dim(), dims.n);
    assert_eq!(y_region.dim(), dims.m);
    assert_eq!(u_region.dim(), dims.p);
    assert_eq!(cert.function.dim(), dims.n + dims.m);
    let region = x_region.product(y_region);
    let points = sample_points(&region.product(u_region), n_samples, seed);
    run_check(&points, dims.n + dims.m, seed, tol, |s, u| {
        let (x, y) = s.split_at(dims.n);
        if !restriction(x, y, u) {
            return None;
        }
        let mut z = buf(dims.m);
        sys.h(x, &mut z);
        z.iter_mut().zip(y).for_each(|(a, b)| *a += b);
        let mut g = buf(dims.m);
        sys.g(x, &z, u, &mut g);
        let mut grad = buf(dims.n + dims.m);
        cert.function.gradient(s, &mut grad);
        let w = cert.value(s);
        Some(smallvec![Eval {
            condition: Condition::Decay,
            lhs: dot(&grad[dims.n..], &g),
            rhs: cert.decay_bound(w, norm(u)),
        }])
    })
}

/// Checks both interconnection inequalities on `state_region x u_region`,
/// where `state_region` covers the stacked `(x, y)`.
#[allow(clippy::too_many_arguments)]
pub fn check_interconnection_bounds<S: SingularlyPerturbed + ?Sized>(
    sys: &S,
    v_cert: &FxTCertificate,
    w_cert: &FxTCertificate,
    bounds: &InterconnectionBounds,
    state_region: &BoxRegion,
    u_region: &BoxRegion,
    n_samples: usize,
    tol: f64,
    seed: u64,
) -> Result<CheckReport, CertifyError> {
    bounds.check_weight_condition(v_cert.k_min())?;
    let dims = sys.dims();
    assert_eq!(state_region.dim(), dims.n + dims.m);
    assert_eq!(u_region.dim(), dims.p);
    let points = sample_points(&state_region.product(u_region), n_samples, seed);
    Ok(run_check(&points, dims.n + dims.m, seed, tol, |s, u| {
        let (x, y) = s.split_at(dims.n);
        let (i1, i2) = interconnection_terms(sys, v_cert, w_cert, x, y, u);
        let vt = v_tilde(v_cert, v_cert.value(x));
        let wt = w_tilde(w_cert, w_cert.value(s));
        let un = norm(u);
        Some(smallvec![
            Eval {
                condition: Condition::SlowInterconnection,
                lhs: i1,
                rhs: bounds.nu1 * vt * vt + bounds.omega1 * wt * wt + bounds.rho1.eval(un),
            },
            Eval {
                condition: Condition::FastInterconnection,
                lhs: i2,
                rhs: bounds.nu2 * vt * vt + bounds.omega2 * wt * wt + bounds.rho2.eval(un),
            },
        ])
    }))
}

/// Checks `alpha_lo(|s_tail|) <= V(s) <= alpha_hi(|s_tail|)` on `region`.
pub fn check_sandwich(cert: &FxTCertificate, region: &BoxRegion, n_samples: usize, tol: f64, seed: u64) -> CheckReport {
    let d = region.dim();
    assert_eq!(cert.function.dim(), d);
    let points = sample_points(region, n_samples, seed);
    run_check(&points, d, seed, tol, |s, _| {
        let v = cert.value(s);
        let r = cert.sandwich_norm(s);
        Some(smallvec![
            Eval {
                condition: Condition::SandwichLower,
                lhs: cert.alpha_lo.eval(r),
                rhs: v,
            },
            Eval {
                condition: Condition::SandwichUpper,
                lhs: v,
                rhs: cert.alpha_hi.eval(r),
            },
        ])
    })
}

/// Compares the analytic gradient with central differences,
/// `|g_fd - g| <= rel_tol * max(|g|, 1)`. Points with `|s| < 1e-3` are skipped.
pub fn check_gradient(field: &dyn ScalarField, region: &BoxRegion, n_samples: usize, rel_tol: f64, seed: u64) -> CheckReport {
    let d = region.dim();
    assert_eq!(field.dim(), d);
    let points = sample_points(region, n_samples, seed);
    run_check(&points, d, seed, 0.0, |s, _| {
        if norm(s) < 1e-3 {
            return None;
        }
        let mut g = buf(d);
        field.gradient(s, &mut g);
        let mut p = s.to_vec();
        let mut err2 = 0.0;
        for i in 0..d {
            let h = 1e-6 * s[i].abs().max(1.0);
            p[i] = s[i] + h;
            let fp = field.value(&p);
            p[i] = s[i] - h;
            let fm = field.value(&p);
            p[i] = s[i];
            let fd = (fp - fm) / (2.0 * h);
            err2 += (fd - g[i]).powi(2);
        }
        Some(smallvec![Eval {
            condition: Condition::Gradient,
            lhs: err2.sqrt(),
            rhs: rel_tol * norm(&g).max(1.0),
        }])
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certify::{ClassKFn, QuadraticForm};
    use crate::dynamics::FnField;
    use std::sync::Arc;

    fn quad_cert(k: f64, a1: f64, a2: f64, rho: ClassKFn) -> FxTCertificate {
        FxTCertificate {
            function: Arc::new(QuadraticForm::identity(1)),
            sandwich_offset: 0,
            alpha_lo: ClassKFn::power(1.0, 2.0),
            alpha_hi: ClassKFn::power(1.0, 2.0),
            k1: k,
            k2: k,
            a1,
            a2,
            rho,
        }
    }

    #[test]
    fn static_field_violates_everywhere_but_the_origin() {
        let cert = quad_cert(1.0, 0.5, 1.5, ClassKFn::power(1.0, 2.0));
        let f = FnField::new(1, |_, _, _, out: &mut [f64]| out[0] = 0.0);
        let r = check_fxt_certificate(&cert, &f, &BoxRegion::cube(1, 1.0), &BoxRegion::cube(1, 0.0), 500, 1e-9, 1);
        assert_eq!(r.samples_tested, 500);
        assert_eq!(r.violation_count, 500);
        assert_eq!(r.violations.len(), MAX_RECORDED);
        assert!(r.max_violation > 0.0);
    }

    #[test]
    fn linear_field_per_sample_oracle() {
        // -2x^2 <= -0.1 |x| - 0.1 |x|^3 holds iff 2|x| >= 0.1 + 0.1 x^2, i.e. |x| >= 10 - sqrt(99)
        let cert = quad_cert(0.1, 0.5, 1.5, ClassKFn::zero());
        let f = FnField::new(1, |_, x: &[f64], _, out: &mut [f64]| out[0] = -x[0]);
        let region = BoxRegion::cube(1, 1.0);
        let r = check_fxt_certificate(&cert, &f, &region, &BoxRegion::cube(0, 0.0), 2000, 1e-9, 4);
        let pts = sample_points(&region, 2000, 4);
        let threshold = 10.0 - 99f64.sqrt();
        let expected = pts.iter().filter(|p| p[0] != 0.0 && p[0].abs() < threshold - 1e-9).count();
        assert_eq!(r.violation_count, expected);
        assert!(expected > 0);
    }

    #[test]
    fn report_serializes() {
        let cert = quad_cert(0.1, 0.5, 1.5, ClassKFn::zero());
        let f = FnField::new(1, |_, x: &[f64], _, out: &mut [f64]| out[0] = -x[0]);
        let r = check_fxt_certificate(&cert, &f, &BoxRegion::cube(1, 1.0), &BoxRegion::cube(0, 0.0), 50, 1e-9, 4);
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["samples_tested"], 50);
        assert_eq!(v["seed"], 4);
        assert!(v["violations"].is_array());
    }

    #[test]
    fn quadratic_gradient_and_sandwich() {
        let cert = quad_cert(1.0, 0.5, 1.5, ClassKFn::zero());
        let r = check_gradient(cert.function.as_ref(), &BoxRegion::cube(1, 10.0), 1000, 1e-6, 2);
        assert!(r.passed());
        assert!(r.skipped <= 2);
        let s = check_sandwich(&cert, &BoxRegion::cube(1, 10.0), 1000, 1e-9, 2);
        assert!(s.passed());
        assert_eq!(s.tight, 2000, "quadratic sandwich is tight on both sides");
    }
}
