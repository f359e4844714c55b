use fxtiss::certify::*;
use fxtiss::dynamics::{reduced_field, InputSignal};
use fxtiss::stylized::*;

const N: usize = 10_000;
const SEED: u64 = 2024;

fn boxes() -> (BoxRegion, BoxRegion) {
    (BoxRegion::cube(1, 10.0), BoxRegion::cube(2, 3.0))
}

#[test]
fn reduced_certificate_holds() {
    let sys = StylizedSystem::default();
    let v = reduced_certificate(&sys);
    let (x, u) = boxes();
    let r = check_fxt_certificate(&v, &reduced_field(&sys), &x, &u, N, DEFAULT_CHECK_TOL, SEED);
    assert_eq!(r.samples_tested, N);
    assert!(r.passed(), "{}", r.to_json());
    assert!(check_sandwich(&v, &x, 1000, DEFAULT_CHECK_TOL, SEED).passed());
}

#[test]
fn boundary_layer_certificate_holds_on_its_region() {
    let sys = StylizedSystem::default();
    let w = boundary_layer_certificate(&sys);
    let (x, u) = boxes();
    let restrict = move |_x: &[f64], y: &[f64], u: &[f64]| sys.boundary_layer_region(y[0], u);
    let r = check_boundary_layer_certificate(&w, &sys, &x, &x, &u, &restrict, N, DEFAULT_CHECK_TOL, SEED);
    assert!(r.passed(), "{}", r.to_json());
    assert!(r.skipped > 0 && r.skipped < N);
}

#[test]
fn boundary_layer_certificate_fails_without_restriction() {
    let sys = StylizedSystem::default();
    let w = boundary_layer_certificate(&sys);
    let (x, u) = boxes();
    let r = check_boundary_layer_certificate(&w, &sys, &x, &x, &u, &|_: &[f64], _: &[f64], _: &[f64]| true, N, DEFAULT_CHECK_TOL, SEED);
    assert!(!r.passed());
}

#[test]
fn interconnection_bounds_hold_and_negative_control_fails() {
    let sys = StylizedSystem::default();
    let v = reduced_certificate(&sys);
    let w = boundary_layer_certificate(&sys);
    let (state, input) = calibration_regions();
    let b = calibrated_bounds(&sys);
    let ok = check_interconnection_bounds(&sys, &v, &w, &b, &state, &input, N, DEFAULT_CHECK_TOL, SEED).unwrap();
    assert!(ok.passed(), "{}", ok.to_json());
    let halved = b.with_omega2_scaled(0.5);
    let bad = check_interconnection_bounds(&sys, &v, &w, &halved, &state, &input, N, DEFAULT_CHECK_TOL, SEED).unwrap();
    assert!(bad.violation_count > 0);

    let analytic = analytic_bounds(&sys, 0.25).unwrap();
    let r = check_interconnection_bounds(&sys, &v, &w, &analytic, &state, &input, N, DEFAULT_CHECK_TOL, SEED).unwrap();
    assert!(r.passed(), "{}", r.to_json());
}

#[test]
fn composite_certificate_is_consistent() {
    let sys = StylizedSystem::default();
    let v = reduced_certificate(&sys);
    let w = boundary_layer_certificate(&sys);
    let c = build_composite(&v, &w, &calibrated_bounds(&sys), &CompositeOptions::default()).unwrap();
    assert!(c.eps_star > 0.0 && c.t_bound.is_finite());
    assert!(c.nu_at(c.zeta_star) > 0.0);
    for k in 0..200 {
        let eps = c.eps_star * (1.0 - 1e-9) * (k as f64 + 1.0) / 200.0;
        assert!(c.omega_at(c.zeta_star, eps) > c.nu_star, "eps = {eps}");
    }
    let expected = 1.0 / (c.k1_eff * (1.0 - c.gamma1)) + 1.0 / (c.k2_eff * (c.gamma2 - 1.0));
    assert!((c.t_bound - expected).abs() <= 1e-12 * expected);
    let (r1, r2) = sys.r_tilde();
    let (q1, q2) = sys.q_tilde();
    assert_eq!(c.gamma1, r1.max(q1));
    assert_eq!(c.gamma2, r2.min(q2));
}

#[test]
fn composite_derivative_is_dominated_by_its_bound() {
    let sys = StylizedSystem::default();
    let v = reduced_certificate(&sys);
    let w = boundary_layer_certificate(&sys);
    let c = build_composite(&v, &w, &calibrated_bounds(&sys), &CompositeOptions::default()).unwrap();
    let region = BoxRegion::cube(2, 10.0).product(&BoxRegion::cube(2, 3.0));
    let mut tested = 0;
    for p in sample_points(&region, 20_000, SEED) {
        let (x, y, u) = (&p[..1], &p[1..2], &p[2..]);
        if !sys.boundary_layer_region(y[0], u) || x[0].abs() < 1e-3 {
            continue;
        }
        tested += 1;
        let d = composite_derivative(&sys, &v, &w, c.zeta_star, DEFAULT_EPS, x, y, u);
        let scale = d.direct.abs().max(1.0);
        assert!((d.expansion - d.direct).abs() <= 1e-9 * scale, "{d:?} at {p:?}");
        assert!((d.finite_difference - d.direct).abs() <= 1e-5 * scale, "{d:?} at {p:?}");
        assert!(d.assumption_bound >= d.finite_difference - 1e-5 * scale, "{d:?} at {p:?}");
        if tested == 1000 {
            break;
        }
    }
    assert_eq!(tested, 1000);
}

#[test]
fn undisturbed_run_settles_and_stays() {
    let sys = StylizedSystem::default();
    let tr = simulate(
        &sys,
        DEFAULT_EPS,
        [10.0, 0.0],
        &InputSignal::zero(2),
        6.0,
        StylizedFrame::Error,
        &default_solver_options(),
    )
    .unwrap();
    let summary = summarize(&tr, [10.0, 0.0], 1e-2, 5.0);
    assert!(summary.settling_time.unwrap() < REPORTED_SETTLING_BOUND);
    assert!(summary.tail_sup_norm < 1e-2);
}

#[test]
fn interconnection_terms_at_unit_point() {
    let sys = StylizedSystem::default();
    let v = reduced_certificate(&sys);
    let w = boundary_layer_certificate(&sys);
    let (i1, i2) = interconnection_terms(&sys, &v, &w, &[1.0], &[1.0], &[0.0, 0.0]);
    assert!((i1 - -3.233_809_241_533_928_5).abs() < 1e-12, "{i1}");
    assert!((i2 - 7.233_809_241_533_928_5).abs() < 1e-12, "{i2}");
    assert_eq!(interconnection_terms(&sys, &v, &w, &[1.0], &[0.0], &[0.0, 0.0]), (0.0, 0.0));
    let (i1, _) = interconnection_terms(&sys, &v, &w, &[-4.0], &[0.0], &[1.5, -2.0]);
    assert_eq!(i1, 0.0);
}
