use std::io::Write;

use clap::Args;
use fxtiss::dynamics::{InputSignal, SolverOptions, Trajectory};
use fxtiss::feedback_opt::{self, FeedbackOptError, FeedbackOptSystem, TrackingOptions, TrackingRecord};
use fxtiss::stylized::{self, StylizedFrame, StylizedSystem, REPORTED_SETTLING_BOUND};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{self, FileConfig, Scenario, StylizedParams};
use crate::error::CliError;
use crate::output::Artifacts;
use crate::svg::{self, Plot, Series};
use crate::GlobalArgs;

/// `|s(t)|` below which a stylized trajectory counts as settled
pub const SETTLE_RADIUS: f64 = 1e-2;
const DEFAULT_MAX_ROWS: usize = 20_000;

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    scenario: Option<Scenario>,
    #[arg(long)]
    eps: Option<f64>,
    /// Rate of the cost variation (feedopt)
    #[arg(long)]
    eps0: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    /// Apply the bundled disturbance (stylized, custom)
    #[arg(long)]
    disturbed: Option<bool>,
    /// Initial condition, repeatable: `x,y` in error coordinates, or `xhat1,xhat2,z1,z2` for feedopt
    #[arg(long = "ic", allow_hyphen_values = true)]
    ics: Vec<String>,
    /// Exponents `r1,r2,q1,q2` for the custom scenario
    #[arg(long)]
    params: Option<String>,
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    abs_tol: Option<f64>,
    /// Output spacing of the feedopt records
    #[arg(long)]
    sample_dt: Option<f64>,
    /// Thin trajectory CSVs to about this many rows; 0 keeps every accepted step
    #[arg(long)]
    max_rows: Option<usize>,
    /// Logarithmic y axis in the plot
    #[arg(long)]
    log_scale: Option<bool>,
}

#[derive(Debug, Serialize)]
struct SimulateConfig {
    scenario: Scenario,
    eps: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    eps0: Option<f64>,
    horizon: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    disturbed: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    params: Option<StylizedParams>,
    initial_conditions: Vec<Vec<f64>>,
    solver: SolverOptions,
    #[serde(skip_serializing_if = "Option::is_none")]
    sample_dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_rows: Option<usize>,
    log_scale: bool,
}

fn parse_ics(flags: &[String], file: &FileConfig, dim: usize) -> Result<Option<Vec<Vec<f64>>>, CliError> {
    let ics = if !flags.is_empty() {
        Some(flags.iter().map(|s| config::parse_list(s, "--ic")).collect::<Result<Vec<_>, _>>()?)
    } else {
        file.initial_conditions.clone()
    };
    if let Some(ics) = &ics {
        if ics.is_empty() {
            return Err(CliError::Usage("initial_conditions must be nonempty".into()));
        }
        if let Some(bad) = ics.iter().find(|ic| ic.len() != dim || ic.iter().any(|v| !v.is_finite())) {
            return Err(CliError::Usage(format!("initial condition {bad:?} must have {dim} finite entries")));
        }
    }
    Ok(ics)
}

fn solver(args: &SimulateArgs, file: &FileConfig, base: SolverOptions) -> Result<SolverOptions, CliError> {
    let mut o = file.solver.apply(base);
    o.rel_tol = args.rel_tol.unwrap_or(o.rel_tol);
    o.abs_tol = args.abs_tol.unwrap_or(o.abs_tol);
    o.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(o)
}

pub fn run(global: &GlobalArgs, file: &FileConfig, args: SimulateArgs) -> Result<(), CliError> {
    let scenario = args.scenario.or(file.scenario).unwrap_or(Scenario::Stylized);
    let seed = config::seed(global, file);
    let mut out = Artifacts::create(&config::out_dir(global, file))?;
    let (cfg, status) = match scenario {
        Scenario::Stylized | Scenario::Custom => run_stylized(scenario, file, &args, &mut out)?,
        Scenario::Feedopt => run_feedopt(file, &args, &mut out)?,
    };
    out.finish("simulate", seed, &cfg)?;
    status
}

fn thinned(tr: &Trajectory, max_rows: usize) -> Trajectory {
    if max_rows == 0 || tr.len() <= max_rows {
        return tr.clone();
    }
    let stride = tr.len().div_ceil(max_rows);
    let mut t = Trajectory::new(tr.state_dim(), tr.input_dim(), tr.frame());
    for i in (0..tr.len()).step_by(stride) {
        t.push(tr.times()[i], tr.state(i), tr.input(i));
    }
    if !(tr.len() - 1).is_multiple_of(stride) {
        let i = tr.len() - 1;
        t.push(tr.times()[i], tr.state(i), tr.input(i));
    }
    t
}

type Outcome<C> = (C, Result<(), CliError>);

fn run_stylized(
    scenario: Scenario,
    file: &FileConfig,
    args: &SimulateArgs,
    out: &mut Artifacts,
) -> Result<Outcome<SimulateConfig>, CliError> {
    let sys: StylizedSystem = config::stylized_system(scenario, args.params.as_deref(), file)?;
    let eps = config::positive(args.eps.or(file.eps).unwrap_or(stylized::DEFAULT_EPS), "eps")?;
    let disturbed = args.disturbed.or(file.disturbed).unwrap_or(false);
    let horizon = config::positive(
        args.horizon.or(file.horizon).unwrap_or(if disturbed { 40.0 } else { 20.0 }),
        "horizon",
    )?;
    let ics = parse_ics(&args.ics, file, 2)?
        .unwrap_or_else(|| stylized::default_initial_conditions().iter().map(|s| s.to_vec()).collect());
    let opts = solver(args, file, stylized::default_solver_options())?;
    let max_rows = args.max_rows.or(file.max_rows).unwrap_or(DEFAULT_MAX_ROWS);
    let log_scale = args.log_scale.or(file.log_scale).unwrap_or(true);
    let input = if disturbed { stylized::disturbance() } else { InputSignal::zero(2) };

    let results: Vec<_> = ics
        .par_iter()
        .map(|s0| stylized::simulate(&sys, eps, [s0[0], s0[1]], &input, horizon, StylizedFrame::Error, &opts))
        .collect();

    let mut runs = Vec::new();
    let mut series = Vec::new();
    let mut failures = Vec::new();
    for (i, (s0, res)) in ics.iter().zip(results).enumerate() {
        let (tr, err) = match res {
            Ok(tr) => (tr, None),
            Err(f) => (*f.partial.clone(), Some(f.to_string())),
        };
        let name = format!("run_{i:02}.csv");
        let thin = thinned(&tr, max_rows);
        out.write_with(&name, |w| thin.write_csv(w, &["x", "y"], &["u1", "u2"]))?;
        let s = stylized::summarize(&tr, [s0[0], s0[1]], SETTLE_RADIUS, REPORTED_SETTLING_BOUND);
        series.push(Series {
            label: format!("s0 = ({}, {})", s0[0], s0[1]),
            points: tr.times().iter().copied().zip(tr.norms()).collect(),
        });
        if let Some(e) = &err {
            failures.push(format!("run {i}: {e}"));
        }
        runs.push(json!({ "csv": name, "summary": s, "error": err }));
    }

    let tails: Vec<f64> = runs
        .iter()
        .filter_map(|r| r["summary"]["tail_sup_norm"].as_f64())
        .collect();
    let settled_by_bound = runs.iter().all(|r| {
        r["summary"]["settling_time"].as_f64().is_some_and(|t| t <= REPORTED_SETTLING_BOUND)
    });
    let tail_max = tails.iter().copied().fold(0.0, f64::max);
    let tail_min = tails.iter().copied().fold(f64::INFINITY, f64::min);
    let summary = json!({
        "scenario": scenario,
        "eps": eps,
        "disturbed": disturbed,
        "settle_radius": SETTLE_RADIUS,
        "settling_bound": REPORTED_SETTLING_BOUND,
        "all_settled_by_bound": settled_by_bound,
        "ultimate_bound": if horizon > REPORTED_SETTLING_BOUND { json!(tail_max) } else { json!(null) },
        "ultimate_bound_min": if horizon > REPORTED_SETTLING_BOUND { json!(tail_min) } else { json!(null) },
        "runs": runs,
    });
    out.write_json("summary.json", &summary)?;
    let plot = svg::render(
        &Plot {
            title: if disturbed { "|s(t)| with disturbance" } else { "|s(t)| without disturbance" },
            x_label: "t",
            y_label: "|s|",
            log_y: log_scale,
            marker: Some((REPORTED_SETTLING_BOUND, "settling bound")),
        },
        &series,
    );
    out.write_with("norms.svg", |w| w.write_all(plot.as_bytes()))?;

    println!("wrote {} runs to {}", ics.len(), out.dir().display());
    println!("all settled to {SETTLE_RADIUS} by t = {REPORTED_SETTLING_BOUND}: {settled_by_bound}");

    let cfg = SimulateConfig {
        scenario,
        eps,
        eps0: None,
        horizon,
        disturbed: Some(disturbed),
        params: (scenario == Scenario::Custom).then(|| StylizedParams {
            r1: sys.r1(),
            r2: sys.r2(),
            q1: sys.q1(),
            q2: sys.q2(),
        }),
        initial_conditions: ics,
        solver: opts,
        sample_dt: None,
        max_rows: Some(max_rows),
        log_scale,
    };
    let status = if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Runtime(failures.join("; ")))
    };
    Ok((cfg, status))
}

fn run_feedopt(file: &FileConfig, args: &SimulateArgs, out: &mut Artifacts) -> Result<Outcome<SimulateConfig>, CliError> {
    let eps = config::positive(args.eps.or(file.eps).unwrap_or(feedback_opt::DEFAULT_EPS), "eps")?;
    let eps0 = args.eps0.or(file.eps0).unwrap_or(0.0);
    let sys = FeedbackOptSystem::bundled(eps, eps0).map_err(|e| CliError::Usage(e.to_string()))?;
    let horizon = config::positive(args.horizon.or(file.horizon).unwrap_or(feedback_opt::DEFAULT_HORIZON), "horizon")?;
    let sample_dt = args.sample_dt.or(file.sample_dt).unwrap_or(TrackingOptions::default().sample_dt);
    let ics = parse_ics(&args.ics, file, 4)?.unwrap_or_else(|| {
        feedback_opt::default_initial_conditions()
            .iter()
            .map(|(x, z)| vec![x[0], x[1], z[0], z[1]])
            .collect()
    });
    let opts = TrackingOptions {
        horizon,
        sample_dt,
        solver: solver(args, file, feedback_opt::default_solver_options())?,
    };
    let log_scale = args.log_scale.or(file.log_scale).unwrap_or(true);

    let results: Vec<Result<TrackingRecord, FeedbackOptError>> = ics
        .par_iter()
        .map(|ic| feedback_opt::run_tracking_scenario(&sys, [ic[0], ic[1]], [ic[2], ic[3]], &opts))
        .collect();

    let mut runs = Vec::new();
    let mut series = Vec::new();
    let mut failures = Vec::new();
    for (i, (ic, res)) in ics.iter().zip(results).enumerate() {
        match res {
            Ok(rec) => {
                let name = format!("run_{i:02}.csv");
                out.write_with(&name, |w| rec.write_csv(w))?;
                let n = rec.len() - 1;
                runs.push(json!({
                    "csv": name,
                    "initial_condition": ic,
                    "steps": rec.steps,
                    "final_tracking_error": rec.final_tracking_error(),
                    "post_settling_mean_tracking_error": rec.post_settling_mean(feedback_opt::POST_SETTLING_FRACTION),
                    "final_plant_error": rec.plant_error[n],
                    "final_xhat": rec.x_hat[n],
                    "final_z": rec.z[n],
                }));
                series.push(Series {
                    label: format!("ic {i}"),
                    points: rec.times.iter().copied().zip(rec.tracking_error.iter().copied()).collect(),
                });
            }
            Err(FeedbackOptError::InvalidScenario(m)) => return Err(CliError::Usage(m)),
            Err(e) => {
                failures.push(format!("run {i}: {e}"));
                runs.push(json!({ "initial_condition": ic, "error": e.to_string() }));
            }
        }
    }
    let phi0 = sys.optimizer(0.0).map_err(|e| CliError::Runtime(e.to_string()))?;
    let summary = json!({
        "scenario": Scenario::Feedopt,
        "eps": eps,
        "eps0": eps0,
        "optimizer_at_t0": [phi0[0], phi0[1]],
        "constants": sys.constants(),
        "post_settling_fraction": feedback_opt::POST_SETTLING_FRACTION,
        "runs": runs,
    });
    out.write_json("summary.json", &summary)?;
    let plot = svg::render(
        &Plot {
            title: "tracking error |xhat(t) - phi(t)|",
            x_label: "t",
            y_label: "tracking error",
            log_y: log_scale,
            marker: None,
        },
        &series,
    );
    out.write_with("tracking.svg", |w| w.write_all(plot.as_bytes()))?;
    println!("wrote {} runs to {}", ics.len(), out.dir().display());

    let cfg = SimulateConfig {
        scenario: Scenario::Feedopt,
        eps,
        eps0: Some(eps0),
        horizon,
        disturbed: None,
        params: None,
        initial_conditions: ics,
        solver: opts.solver,
        sample_dt: Some(sample_dt),
        max_rows: None,
        log_scale,
    };
    let status = if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Runtime(failures.join("; ")))
    };
    Ok((cfg, status))
}
