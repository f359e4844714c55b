use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use fxtiss::certify::{
    build_composite, check_boundary_layer_certificate, check_fxt_certificate, check_interconnection_bounds,
    composite_value, BoxRegion, CompositeOptions, DEFAULT_CHECK_TOL,
};
use fxtiss::dynamics::{integrate, reduced_field, trajectory_to_error_coords, FnField, InputSignal, SolverOptions};
use fxtiss::feedback_opt::{self, FeedbackOptSystem, QuadraticCostModel, TrackingOptions, PLANT_GAIN};
use fxtiss::nonsmooth::signed_power_unchecked;
use fxtiss::nonsmooth::suite::run_all;
use fxtiss::stylized::{self, StylizedFrame, StylizedSystem, REPORTED_SETTLING_BOUND};
use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 2024;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, format!("runtime {:.1} s exceeds {limit_s} s", elapsed.as_secs_f64()))
}

fn lemma_suites() -> Outcome {
    let start = Instant::now();
    let reports = run_all(SEED, 100_000);
    let elapsed = start.elapsed();
    ensure(reports.len() == 7, format!("expected 7 lemma reports, got {}", reports.len()))?;
    for r in &reports {
        ensure(r.samples == 100_000, format!("{}: {} samples", r.label, r.samples))?;
        ensure(r.passed(), format!("{}: {} violations", r.label, r.violations.len()))?;
    }
    within(elapsed, 30.0)?;
    let tested: usize = reports.iter().map(|r| r.samples - r.not_applicable).sum();
    Ok(format!("7 suites, {tested} applicable samples, 0 violations, {:.1} s", elapsed.as_secs_f64()))
}

fn undisturbed_settling() -> Outcome {
    let sys = StylizedSystem::default();
    let ics = stylized::default_initial_conditions();
    let mut norms: Vec<f64> = ics.iter().map(|s| s[0].hypot(s[1])).collect();
    norms.sort_by(f64::total_cmp);
    norms.dedup_by(|a, b| (*a - *b).abs() < 1e-9 * *b);
    let expected = [1.0, 10.0, 100.0, 1000.0];
    ensure(
        ics.len() == 12 && norms.len() == 4 && norms.iter().zip(expected).all(|(a, b)| (a - b).abs() < 1e-9 * b),
        format!("initial condition norms {norms:?}"),
    )?;
    let start = Instant::now();
    let runs = stylized::simulate_ensemble(
        &sys,
        stylized::DEFAULT_EPS,
        &ics,
        &InputSignal::zero(2),
        20.0,
        &stylized::default_solver_options(),
    );
    let elapsed = start.elapsed();
    let mut worst: f64 = 0.0;
    for (s0, run) in ics.iter().zip(runs) {
        let tr = run.map_err(|e| format!("{s0:?}: {e}"))?;
        let s = stylized::summarize(&tr, *s0, 1e-2, REPORTED_SETTLING_BOUND);
        let t = s.settling_time.ok_or(format!("{s0:?} never settles"))?;
        ensure(t <= REPORTED_SETTLING_BOUND, format!("{s0:?} settles at {t}"))?;
        worst = worst.max(t);
    }
    within(elapsed, 60.0)?;
    Ok(format!("latest settling {worst:.3} <= {REPORTED_SETTLING_BOUND}, {:.1} s", elapsed.as_secs_f64()))
}

fn disturbed_ultimate_bound() -> Outcome {
    let sys = StylizedSystem::default();
    let ics = stylized::default_initial_conditions();
    let runs = stylized::simulate_ensemble(
        &sys,
        stylized::DEFAULT_EPS,
        &ics,
        &stylized::disturbance(),
        40.0,
        &stylized::default_solver_options(),
    );
    let mut tails = Vec::new();
    for (s0, run) in ics.iter().zip(runs) {
        let tr = run.map_err(|e| format!("{s0:?}: {e}"))?;
        ensure(tr.t_end() == 40.0, format!("{s0:?} stopped at {}", tr.t_end()))?;
        let s = stylized::summarize(&tr, *s0, 1e-2, REPORTED_SETTLING_BOUND);
        ensure(s.sup_norm.is_finite(), format!("{s0:?} unbounded"))?;
        tails.push(s.tail_sup_norm);
    }
    let max = tails.iter().copied().fold(0.0, f64::max);
    let min = tails.iter().copied().fold(f64::INFINITY, f64::min);
    ensure(max <= 1.1 * min, format!("tail radii range over [{min}, {max}]"))?;
    Ok(format!("tail radius in [{min:.5}, {max:.5}] for t >= {REPORTED_SETTLING_BOUND}"))
}

fn certificate_checks() -> Outcome {
    let sys = StylizedSystem::default();
    let v = stylized::reduced_certificate(&sys);
    let w = stylized::boundary_layer_certificate(&sys);
    ensure(v.k1 == 1.0 && v.k2 == 1.0, "reduced gains")?;
    ensure((v.a1 - 0.7).abs() < 1e-15 && (v.a2 - 1.1).abs() < 1e-15, "reduced exponents")?;
    ensure(v.rho.eval(3.0) == 9.0, "reduced input gain")?;
    let n = 10_000;
    let x = BoxRegion::cube(1, 10.0);
    let u = BoxRegion::cube(2, 3.0);
    let r = check_fxt_certificate(&v, &reduced_field(&sys), &x, &u, n, DEFAULT_CHECK_TOL, SEED);
    ensure(r.samples_tested == n && r.passed(), format!("reduced: {}", r.to_json()))?;
    let restrict = move |_: &[f64], y: &[f64], u: &[f64]| sys.boundary_layer_region(y[0], u);
    let b = check_boundary_layer_certificate(&w, &sys, &x, &x, &u, &restrict, 6 * n, DEFAULT_CHECK_TOL, SEED);
    ensure(b.samples_tested >= n && b.passed(), format!("boundary layer: {}", b.to_json()))?;

    let state = BoxRegion::cube(2, 10.0);
    let bounds = stylized::calibrated_bounds(&sys);
    let ok = check_interconnection_bounds(&sys, &v, &w, &bounds, &state, &u, n, DEFAULT_CHECK_TOL, SEED)
        .map_err(|e| e.to_string())?;
    ensure(ok.passed(), format!("interconnection: {}", ok.to_json()))?;
    let halved = bounds.with_omega2_scaled(0.5);
    let bad = check_interconnection_bounds(&sys, &v, &w, &halved, &state, &u, n, DEFAULT_CHECK_TOL, SEED)
        .map_err(|e| e.to_string())?;
    ensure(bad.violation_count > 0, "negative control found no violations")?;
    let analytic = stylized::analytic_bounds(&sys, 0.25).map_err(|e| e.to_string())?.with_omega2_scaled(0.5);
    let info = check_interconnection_bounds(&sys, &v, &w, &analytic, &state, &u, n, DEFAULT_CHECK_TOL, SEED)
        .map_err(|e| e.to_string())?;
    Ok(format!(
        "reduced 0/{n}, boundary layer 0/{} ({} outside region), omega2 halved {} violations (analytic bounds halved: {})",
        b.samples_tested, b.skipped, bad.violation_count, info.violation_count
    ))
}

fn composite_pipeline() -> Outcome {
    let sys = StylizedSystem::default();
    let v = stylized::reduced_certificate(&sys);
    let w = stylized::boundary_layer_certificate(&sys);
    let c = build_composite(&v, &w, &stylized::calibrated_bounds(&sys), &CompositeOptions::default())
        .map_err(|e| e.to_string())?;
    ensure(c.eps_star > 0.0 && c.eps_star.is_finite() && c.t_bound.is_finite(), "eps* or T_bound not finite")?;
    let eps = c.eps_star / 2.0;
    let opts = stylized::default_solver_options();
    let mut worst = f64::NEG_INFINITY;
    for s0 in [[1.0, 0.0], [-2.0, 3.0], [5.0, -5.0], [0.5, 8.0], [-9.0, 1.0]] {
        let tr = stylized::simulate(&sys, eps, s0, &InputSignal::zero(2), 0.02, StylizedFrame::Error, &opts)
            .map_err(|e| format!("{s0:?}: {e}"))?;
        let psi: Vec<f64> = tr.states().map(|s| composite_value(&v, &w, c.zeta_star, &s[..1], &s[1..])).collect();
        for (i, pair) in psi.windows(2).enumerate() {
            let rel = (pair[1] - pair[0]) / pair[0];
            ensure(rel <= 1e-6, format!("{s0:?}: Psi grows by {rel:e} at t = {}", tr.times()[i + 1]))?;
            worst = worst.max(rel);
        }
        ensure(psi[psi.len() - 1] < psi[0], format!("{s0:?}: Psi did not decrease"))?;
    }
    Ok(format!(
        "eps* = {:.4e}, T_bound = {:.3}, zeta* = {}, largest step change of Psi at eps*/2: {worst:.2e}",
        c.eps_star, c.t_bound, c.zeta_star
    ))
}

fn twin_frames() -> Outcome {
    let sys = StylizedSystem::default();
    let opts = stylized::default_solver_options();
    let grid: Vec<f64> = (1..5000).map(|i| i as f64 * 1e-3).collect();
    let zero = InputSignal::zero(2);
    let mut worst: f64 = 0.0;
    for (x0, z0) in [(1.0, -1.0), (10.0, 10.0), (-10.0, 3.0), (4.0, -7.5), (-2.5, -10.0)] {
        let s0 = [x0, z0 - x0];
        let run = |frame| {
            stylized::simulate_with_stops(&sys, stylized::DEFAULT_EPS, s0, &zero, 5.0, frame, &opts, &grid)
                .map_err(|e| format!("({x0}, {z0}): {e}"))
        };
        let a = run(StylizedFrame::Error)?;
        let b = trajectory_to_error_coords(&sys, &run(StylizedFrame::Original)?);
        let (mut i, mut j, mut shared) = (0, 0, 0);
        while i < a.len() && j < b.len() {
            let (ta, tb) = (a.times()[i], b.times()[j]);
            if ta == tb {
                let (p, q) = (a.state(i), b.state(j));
                worst = worst.max((p[0] - q[0]).hypot(p[1] - q[1]));
                shared += 1;
                i += 1;
                j += 1;
            } else if ta < tb {
                i += 1;
            } else {
                j += 1;
            }
        }
        ensure(shared >= grid.len() + 2, format!("({x0}, {z0}): only {shared} shared samples"))?;
    }
    ensure(worst < 1e-4, format!("sup discrepancy {worst:e}"))?;
    Ok(format!("sup discrepancy {worst:.2e} over 5 runs on a 1e-3 grid"))
}

fn feedopt_static() -> Outcome {
    let start = Instant::now();
    let sys = FeedbackOptSystem::bundled(0.05, 0.0).map_err(|e| e.to_string())?;
    let star = Vector2::new(-8.0 / 11.0, 1.0 / 11.0);
    let phi = sys.optimizer(0.0).map_err(|e| e.to_string())?;
    ensure((phi - star).norm() < 1e-14, format!("optimizer {phi:?}"))?;
    let opts = TrackingOptions::default();
    let mut worst: f64 = 0.0;
    for (x0, z0) in feedback_opt::default_initial_conditions() {
        let rec = feedback_opt::run_tracking_scenario(&sys, x0, z0, &opts).map_err(|e| e.to_string())?;
        let n = rec.len() - 1;
        let (xh, z) = (rec.x_hat[n], rec.z[n]);
        for k in 0..2 {
            let dx = (xh[k] - star[k]).abs();
            let dz = (z[k] - PLANT_GAIN * star[k]).abs();
            ensure(dx <= 1e-3 && dz <= 1e-3, format!("{x0:?}: xhat {xh:?}, z {z:?}"))?;
            worst = worst.max(dx).max(dz);
        }
    }
    let m = QuadraticCostModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut identity: f64 = 0.0;
    for _ in 0..1000 {
        let x = Vector2::new(rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0));
        let g = m.grad_phi(&x, 0.0, 0.05, 0.0);
        let d = (m.phat(&x, &(PLANT_GAIN * x), 0.0, 0.05, 0.0) - g).norm() / (1.0 + g.norm());
        identity = identity.max(d);
    }
    ensure(identity <= 1e-12, format!("manifold identity off by {identity:e}"))?;
    let elapsed = start.elapsed();
    within(elapsed, 60.0)?;
    Ok(format!(
        "worst endpoint deviation {worst:.2e}, manifold identity {identity:.1e}, {:.1} s",
        elapsed.as_secs_f64()
    ))
}

fn feedopt_time_varying() -> Outcome {
    let opts = TrackingOptions::default();
    let mut means = Vec::new();
    for eps0 in [5.0, 0.2, 0.02] {
        let sys = FeedbackOptSystem::bundled(0.05, eps0).map_err(|e| e.to_string())?;
        let ics = feedback_opt::default_initial_conditions();
        let mut total = 0.0;
        for &(x0, z0) in &ics {
            let rec = feedback_opt::run_tracking_scenario(&sys, x0, z0, &opts).map_err(|e| e.to_string())?;
            total += rec.post_settling_mean(feedback_opt::POST_SETTLING_FRACTION);
        }
        means.push(total / ics.len() as f64);
    }
    ensure(means[0] > means[1] && means[1] > means[2], format!("means not decreasing: {means:?}"))?;
    ensure(means[1] * 3.0 <= means[0], format!("ratio {:.2} below 3", means[0] / means[1]))?;
    Ok(format!(
        "post-settling means {:.3e} > {:.3e} > {:.3e}, ratio {:.1}",
        means[0],
        means[1],
        means[2],
        means[0] / means[1]
    ))
}

fn integrator_sanity() -> Outcome {
    let opts = SolverOptions::default();
    let lin = FnField::new(1, |_, x: &[f64], _, out: &mut [f64]| out[0] = -x[0]);
    let tr = integrate(&lin, &[1.0], &InputSignal::zero(0), (0.0, 1.0), &opts).map_err(|e| e.to_string())?;
    let e_lin = (tr.last_state()[0] - (-1f64).exp()).abs();
    ensure(e_lin < 1e-8, format!("linear endpoint error {e_lin:e}"))?;
    let sub = FnField::new(1, |_, x: &[f64], _, out: &mut [f64]| out[0] = -signed_power_unchecked(x[0], 0.5));
    let tr = integrate(&sub, &[1.0], &InputSignal::zero(0), (0.0, 1.0), &opts).map_err(|e| e.to_string())?;
    let e_sub = (tr.last_state()[0] - 0.25).abs();
    ensure(e_sub < 1e-4, format!("sublinear error {e_sub:e}"))?;
    Ok(format!("linear error {e_lin:.1e}, sublinear error {e_sub:.1e}"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("lemma suites", lemma_suites),
        ("undisturbed settling", undisturbed_settling),
        ("disturbed ultimate bound", disturbed_ultimate_bound),
        ("certificate checks", certificate_checks),
        ("composite pipeline", composite_pipeline),
        ("twin frames", twin_frames),
        ("feedopt static cost", feedopt_static),
        ("feedopt time-varying cost", feedopt_time_varying),
        ("integrator sanity", integrator_sanity),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS [{}] {name}: {detail} ({secs:.1} s)", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{}] {name}: {detail} ({secs:.1} s)", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
