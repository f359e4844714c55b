use clap::Args;
use fxtiss::nonsmooth::suite::run_all;
use serde::Serialize;
use serde_json::json;

use crate::config::{self, FileConfig};
use crate::error::CliError;
use crate::output::Artifacts;
use crate::GlobalArgs;

const DEFAULT_SAMPLES: usize = 100_000;

#[derive(Args, Debug)]
pub struct LemmaArgs {
    /// Samples per inequality
    #[arg(long)]
    n_samples: Option<usize>,
}

#[derive(Debug, Serialize)]
struct LemmaConfig {
    n_samples: usize,
}

pub fn run(global: &GlobalArgs, file: &FileConfig, args: LemmaArgs) -> Result<(), CliError> {
    let n = args.n_samples.or(file.n_samples).unwrap_or(DEFAULT_SAMPLES);
    if n == 0 {
        return Err(CliError::Usage("n_samples must be at least 1".into()));
    }
    let seed = config::seed(global, file);
    println!("seed {seed}, {n} samples per lemma");
    let reports = run_all(seed, n);
    for r in &reports {
        println!(
            "{:<34} tested {:>8}  n/a {:>7}  violations {:>5}  min slack {:.3e}  {}",
            r.label,
            r.samples - r.not_applicable,
            r.not_applicable,
            r.violations.len(),
            r.min_relative_slack,
            if r.passed() { "ok" } else { "VIOLATED" }
        );
    }
    let passed = reports.iter().all(|r| r.passed());
    let mut out = Artifacts::create(&config::out_dir(global, file))?;
    let path = out.write_json("lemmas.json", &json!({ "seed": seed, "passed": passed, "reports": reports }))?;
    out.finish("lemmas", seed, &LemmaConfig { n_samples: n })?;
    println!("report: {}", path.display());
    println!("rerun with --seed {seed} to reproduce");
    if passed {
        Ok(())
    } else {
        Err(CliError::Check("lemma suite reported violations".into()))
    }
}
