use clap::Args;
use fxtiss::certify::{build_composite, CompositeOptions};
use fxtiss::stylized::{self, boundary_layer_certificate, reduced_certificate};
use serde::Serialize;
use serde_json::json;

use crate::config::{self, BoundsSource, FileConfig, Scenario};
use crate::error::CliError;
use crate::output::Artifacts;
use crate::GlobalArgs;

#[derive(Args, Debug)]
pub struct CompositeArgs {
    #[arg(long, value_enum)]
    scenario: Option<Scenario>,
    #[arg(long, value_enum)]
    bounds: Option<BoundsSource>,
    /// Young-inequality weight of the analytic bounds
    #[arg(long)]
    c: Option<f64>,
    /// Override nu1 of the chosen bounds
    #[arg(long, allow_hyphen_values = true)]
    nu1: Option<f64>,
    /// Override nu2 of the chosen bounds
    #[arg(long, allow_hyphen_values = true)]
    nu2: Option<f64>,
    #[arg(long)]
    omega1: Option<f64>,
    #[arg(long)]
    omega2: Option<f64>,
    #[arg(long)]
    omega2_scale: Option<f64>,
    /// Grid spacing of the search over the weight zeta
    #[arg(long)]
    zeta_resolution: Option<f64>,
    /// eps_star reported when every eps > 0 is admissible
    #[arg(long)]
    eps_cap: Option<f64>,
    #[arg(long)]
    params: Option<String>,
}

#[derive(Debug, Serialize)]
struct CompositeConfig {
    scenario: Scenario,
    bounds: BoundsSource,
    #[serde(skip_serializing_if = "Option::is_none")]
    c: Option<f64>,
    nu1: f64,
    nu2: f64,
    omega1: f64,
    omega2: f64,
    zeta_resolution: f64,
    eps_cap: f64,
}

pub fn run(global: &GlobalArgs, file: &FileConfig, args: CompositeArgs) -> Result<(), CliError> {
    let scenario = args.scenario.or(file.scenario).unwrap_or(Scenario::Stylized);
    if scenario == Scenario::Feedopt {
        return Err(CliError::Usage("composite is available for the stylized and custom scenarios".into()));
    }
    let sys = config::stylized_system(scenario, args.params.as_deref(), file)?;
    let seed = config::seed(global, file);
    let source = args.bounds.or(file.bounds).unwrap_or(BoundsSource::Calibrated);
    let c = (source == BoundsSource::Analytic).then(|| args.c.or(file.c).unwrap_or(0.25));
    let mut bounds = match c {
        None => stylized::calibrated_bounds(&sys),
        Some(c) => stylized::analytic_bounds(&sys, c).map_err(|e| CliError::Usage(e.to_string()))?,
    };
    bounds.nu1 = args.nu1.or(file.nu1).unwrap_or(bounds.nu1);
    bounds.nu2 = args.nu2.or(file.nu2).unwrap_or(bounds.nu2);
    bounds.omega1 = args.omega1.or(file.omega1).unwrap_or(bounds.omega1);
    bounds.omega2 = args.omega2.or(file.omega2).unwrap_or(bounds.omega2);
    let scale = args.omega2_scale.or(file.omega2_scale).unwrap_or(1.0);
    let bounds = bounds.with_omega2_scaled(scale);
    let defaults = CompositeOptions::default();
    let opts = CompositeOptions {
        zeta_resolution: args.zeta_resolution.or(file.zeta_resolution).unwrap_or(defaults.zeta_resolution),
        eps_cap: args.eps_cap.or(file.eps_cap).unwrap_or(defaults.eps_cap),
    };
    if !(opts.zeta_resolution > 0.0 && opts.zeta_resolution < 0.5) {
        return Err(CliError::Usage(format!("zeta_resolution must lie in (0, 0.5), got {}", opts.zeta_resolution)));
    }
    config::positive(opts.eps_cap, "eps_cap")?;
    let cfg = CompositeConfig {
        scenario,
        bounds: source,
        c,
        nu1: bounds.nu1,
        nu2: bounds.nu2,
        omega1: bounds.omega1,
        omega2: bounds.omega2,
        zeta_resolution: opts.zeta_resolution,
        eps_cap: opts.eps_cap,
    };

    let v = reduced_certificate(&sys);
    let w = boundary_layer_certificate(&sys);
    let mut out = Artifacts::create(&config::out_dir(global, file))?;
    let result = build_composite(&v, &w, &bounds, &opts);
    let doc = match &result {
        Ok(cert) => json!({ "ok": true, "certificate": cert, "reported_settling_bound": stylized::REPORTED_SETTLING_BOUND }),
        Err(e) => json!({ "ok": false, "error": e.to_string(), "bounds": bounds }),
    };
    let path = out.write_json("composite.json", &doc)?;
    out.finish("composite", seed, &cfg)?;
    match result {
        Ok(cert) => {
            println!("zeta*   = {}", cert.zeta_star);
            println!("nu*     = {}", cert.nu_star);
            println!("eps*    = {:e}", cert.eps_star);
            println!("gamma   = ({}, {})", cert.gamma1, cert.gamma2);
            println!("k_eff   = ({}, {})", cert.k1_eff, cert.k2_eff);
            println!("T_bound = {}", cert.t_bound);
            println!("report: {}", path.display());
            Ok(())
        }
        Err(e) => Err(CliError::Check(format!("composite construction failed: {e}"))),
    }
}
