use clap::{Args, ValueEnum};
use fxtiss::certify::{
    check_boundary_layer_certificate, check_fxt_certificate, check_interconnection_bounds, BoxRegion, CheckReport,
    DEFAULT_CHECK_TOL,
};
use fxtiss::dynamics::reduced_field;
use fxtiss::feedback_opt::FeedbackOptSystem;
use fxtiss::stylized::{self, boundary_layer_certificate, reduced_certificate};
use serde::Serialize;
use serde_json::json;

use crate::config::{self, BoundsSource, FileConfig, Scenario};
use crate::error::CliError;
use crate::output::Artifacts;
use crate::GlobalArgs;

const DEFAULT_SAMPLES: usize = 10_000;
const DEFAULT_STATE_BOX: [f64; 2] = [-10.0, 10.0];
const DEFAULT_INPUT_BOX: [f64; 2] = [-3.0, 3.0];
const DEFAULT_C: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    Reduced,
    BoundaryLayer,
    Interconnection,
}

impl Check {
    fn name(&self) -> &'static str {
        match self {
            Check::Reduced => "reduced",
            Check::BoundaryLayer => "boundary-layer",
            Check::Interconnection => "interconnection",
        }
    }

    fn parse(s: &str) -> Result<Self, CliError> {
        <Check as ValueEnum>::from_str(s, true).map_err(|e| CliError::Usage(format!("unknown check {s:?}: {e}")))
    }
}

#[derive(Args, Debug)]
pub struct CertifyArgs {
    #[arg(long, value_enum)]
    scenario: Option<Scenario>,
    /// Checks to run (repeatable); defaults to all available for the scenario
    #[arg(long = "check", value_enum)]
    checks: Vec<Check>,
    #[arg(long)]
    n_samples: Option<usize>,
    /// Relative tolerance for counting a sample as violated
    #[arg(long)]
    tol: Option<f64>,
    /// Multiply omega2 of the interconnection bounds (0.5 gives a negative control)
    #[arg(long)]
    omega2_scale: Option<f64>,
    #[arg(long, value_enum)]
    bounds: Option<BoundsSource>,
    /// Young-inequality weight of the analytic bounds
    #[arg(long)]
    c: Option<f64>,
    /// Interval `lo,hi` sampled for every state component
    #[arg(long, allow_hyphen_values = true)]
    state_box: Option<String>,
    /// Interval `lo,hi` sampled for every input component
    #[arg(long, allow_hyphen_values = true)]
    input_box: Option<String>,
    #[arg(long)]
    params: Option<String>,
    /// Cost variation rate used for the frozen feedopt loop
    #[arg(long)]
    eps0: Option<f64>,
    /// Time at which the feedopt cost is frozen
    #[arg(long)]
    t_frozen: Option<f64>,
}

#[derive(Debug, Serialize)]
struct CertifyConfig {
    scenario: Scenario,
    checks: Vec<Check>,
    n_samples: usize,
    tol: f64,
    state_box: [f64; 2],
    input_box: [f64; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    bounds: Option<BoundsSource>,
    #[serde(skip_serializing_if = "Option::is_none")]
    c: Option<f64>,
    omega2_scale: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    t_frozen: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eps0: Option<f64>,
}

fn cube(dim: usize, b: [f64; 2]) -> BoxRegion {
    BoxRegion::new(vec![b[0]; dim], vec![b[1]; dim]).expect("interval validated")
}

pub fn run(global: &GlobalArgs, file: &FileConfig, args: CertifyArgs) -> Result<(), CliError> {
    let scenario = args.scenario.or(file.scenario).unwrap_or(Scenario::Stylized);
    let seed = config::seed(global, file);
    let n = args.n_samples.or(file.n_samples).unwrap_or(DEFAULT_SAMPLES);
    if n == 0 {
        return Err(CliError::Usage("n_samples must be at least 1".into()));
    }
    let tol = args.tol.or(file.tol).unwrap_or(DEFAULT_CHECK_TOL);
    if !(tol >= 0.0 && tol.is_finite()) {
        return Err(CliError::Usage(format!("tol must be nonnegative, got {tol}")));
    }
    let state_box = match &args.state_box {
        Some(s) => config::parse_box(s, "--state-box")?,
        None => config::check_box(file.state_box.unwrap_or(DEFAULT_STATE_BOX), "state_box")?,
    };
    let input_box = match &args.input_box {
        Some(s) => config::parse_box(s, "--input-box")?,
        None => config::check_box(file.input_box.unwrap_or(DEFAULT_INPUT_BOX), "input_box")?,
    };
    let omega2_scale = args.omega2_scale.or(file.omega2_scale).unwrap_or(1.0);
    if !(omega2_scale > 0.0 && omega2_scale.is_finite()) {
        return Err(CliError::Usage(format!("omega2_scale must be positive, got {omega2_scale}")));
    }
    let mut checks = if !args.checks.is_empty() {
        args.checks.clone()
    } else if let Some(names) = &file.checks {
        names.iter().map(|s| Check::parse(s)).collect::<Result<_, _>>()?
    } else {
        Vec::new()
    };
    checks.dedup();

    let mut reports: Vec<(Check, CheckReport)> = Vec::new();
    let mut cfg = CertifyConfig {
        scenario,
        checks: Vec::new(),
        n_samples: n,
        tol,
        state_box,
        input_box,
        bounds: None,
        c: None,
        omega2_scale,
        t_frozen: None,
        eps0: None,
    };

    match scenario {
        Scenario::Stylized | Scenario::Custom => {
            let sys = config::stylized_system(scenario, args.params.as_deref(), file)?;
            if checks.is_empty() {
                checks = vec![Check::Reduced, Check::BoundaryLayer, Check::Interconnection];
            }
            let v = reduced_certificate(&sys);
            let w = boundary_layer_certificate(&sys);
            let x = cube(1, state_box);
            let u = cube(2, input_box);
            for &check in &checks {
                let report = match check {
                    Check::Reduced => check_fxt_certificate(&v, &reduced_field(&sys), &x, &u, n, tol, seed),
                    Check::BoundaryLayer => {
                        let restrict = move |_: &[f64], y: &[f64], u: &[f64]| sys.boundary_layer_region(y[0], u);
                        check_boundary_layer_certificate(&w, &sys, &x, &x, &u, &restrict, n, tol, seed)
                    }
                    Check::Interconnection => {
                        let source = args.bounds.or(file.bounds).unwrap_or(BoundsSource::Calibrated);
                        cfg.bounds = Some(source);
                        let bounds = match source {
                            BoundsSource::Calibrated => stylized::calibrated_bounds(&sys),
                            BoundsSource::Analytic => {
                                let c = args.c.or(file.c).unwrap_or(DEFAULT_C);
                                cfg.c = Some(c);
                                stylized::analytic_bounds(&sys, c).map_err(|e| CliError::Usage(e.to_string()))?
                            }
                        };
                        let bounds = bounds.with_omega2_scaled(omega2_scale);
                        check_interconnection_bounds(&sys, &v, &w, &bounds, &cube(2, state_box), &u, n, tol, seed)
                            .map_err(|e| CliError::Check(e.to_string()))?
                    }
                };
                reports.push((check, report));
            }
        }
        Scenario::Feedopt => {
            if checks.is_empty() {
                checks = vec![Check::Reduced, Check::BoundaryLayer];
            }
            if checks.contains(&Check::Interconnection) {
                return Err(CliError::Usage("the interconnection check needs stylized bounds; the feedopt scenario offers reduced and boundary-layer".into()));
            }
            let eps0 = args.eps0.or(file.eps0).unwrap_or(0.0);
            let t = args.t_frozen.unwrap_or(0.0);
            cfg.eps0 = Some(eps0);
            cfg.t_frozen = Some(t);
            let eps = args_eps(file);
            let sys = FeedbackOptSystem::bundled(eps, eps0).map_err(|e| CliError::Usage(e.to_string()))?;
            let fl = sys.frozen_form(t).map_err(|e| CliError::Runtime(e.to_string()))?;
            let x = cube(2, state_box);
            let u = cube(0, input_box);
            for &check in &checks {
                let report = match check {
                    Check::Reduced => {
                        check_fxt_certificate(&fl.reduced_certificate(), &reduced_field(&fl), &x, &u, n, tol, seed)
                    }
                    Check::BoundaryLayer => check_boundary_layer_certificate(
                        &fl.boundary_layer_certificate(),
                        &fl,
                        &x,
                        &x,
                        &u,
                        &|_: &[f64], _: &[f64], _: &[f64]| true,
                        n,
                        tol,
                        seed,
                    ),
                    Check::Interconnection => unreachable!(),
                };
                reports.push((check, report));
            }
        }
    }
    cfg.checks = checks;

    let passed = reports.iter().all(|(_, r)| r.passed());
    for (c, r) in &reports {
        println!(
            "{:<16} samples {:>7}  skipped {:>7}  tight {:>6}  violations {:>6}  max excess {:.3e}  {}",
            c.name(),
            r.samples_tested,
            r.skipped,
            r.tight,
            r.violation_count,
            r.max_violation,
            if r.passed() { "ok" } else { "VIOLATED" }
        );
    }
    let mut out = Artifacts::create(&config::out_dir(global, file))?;
    let doc = json!({
        "scenario": scenario,
        "seed": seed,
        "passed": passed,
        "checks": reports.iter().map(|(c, r)| json!({ "check": c, "report": r })).collect::<Vec<_>>(),
    });
    let path = out.write_json("certify.json", &doc)?;
    out.finish("certify", seed, &cfg)?;
    println!("report: {}", path.display());
    if passed {
        Ok(())
    } else {
        Err(CliError::Check("certificate check reported violations".into()))
    }
}

fn args_eps(file: &FileConfig) -> f64 {
    file.eps.unwrap_or(fxtiss::feedback_opt::DEFAULT_EPS)
}
