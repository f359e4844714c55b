use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use fxtiss::dynamics::SolverOptions;
use fxtiss::stylized::StylizedSystem;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::GlobalArgs;

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_OUT: &str = "fxtiss-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// the scalar two-time-scale example
    Stylized,
    /// fixed-time feedback optimization
    Feedopt,
    /// the stylized family with user exponents (`params`)
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BoundsSource {
    /// sampled suprema over the calibration box
    Calibrated,
    /// closed-form bounds parametrized by `c`
    Analytic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StylizedParams {
    pub r1: f64,
    pub r2: f64,
    pub q1: f64,
    pub q2: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOverrides {
    pub rel_tol: Option<f64>,
    pub abs_tol: Option<f64>,
    pub h_init: Option<f64>,
    pub h_min: Option<f64>,
    pub h_max: Option<f64>,
    pub max_steps: Option<usize>,
}

impl SolverOverrides {
    pub fn apply(&self, mut o: SolverOptions) -> SolverOptions {
        o.rel_tol = self.rel_tol.unwrap_or(o.rel_tol);
        o.abs_tol = self.abs_tol.unwrap_or(o.abs_tol);
        o.h_init = self.h_init.unwrap_or(o.h_init);
        o.h_min = self.h_min.unwrap_or(o.h_min);
        o.h_max = self.h_max.unwrap_or(o.h_max);
        o.max_steps = self.max_steps.unwrap_or(o.max_steps);
        o
    }
}

/// Contents of a `--config` file. Every entry is optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub scenario: Option<Scenario>,
    pub eps: Option<f64>,
    pub eps0: Option<f64>,
    pub initial_conditions: Option<Vec<Vec<f64>>>,
    pub horizon: Option<f64>,
    #[serde(default)]
    pub solver: SolverOverrides,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub disturbed: Option<bool>,
    pub params: Option<StylizedParams>,
    pub sample_dt: Option<f64>,
    pub max_rows: Option<usize>,
    pub log_scale: Option<bool>,
    pub checks: Option<Vec<String>>,
    pub n_samples: Option<usize>,
    pub tol: Option<f64>,
    pub omega2_scale: Option<f64>,
    pub bounds: Option<BoundsSource>,
    pub c: Option<f64>,
    pub state_box: Option<[f64; 2]>,
    pub input_box: Option<[f64; 2]>,
    pub nu1: Option<f64>,
    pub nu2: Option<f64>,
    pub omega1: Option<f64>,
    pub omega2: Option<f64>,
    pub zeta_resolution: Option<f64>,
    pub eps_cap: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }
}

pub fn seed(global: &GlobalArgs, file: &FileConfig) -> u64 {
    global.seed.or(file.seed).unwrap_or(DEFAULT_SEED)
}

pub fn out_dir(global: &GlobalArgs, file: &FileConfig) -> PathBuf {
    global
        .out
        .clone()
        .or_else(|| file.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

pub fn stylized_system(scenario: Scenario, flag: Option<&str>, file: &FileConfig) -> Result<StylizedSystem, CliError> {
    match scenario {
        Scenario::Stylized => Ok(StylizedSystem::default()),
        Scenario::Custom => {
            let p = match flag {
                Some(s) => {
                    let v = parse_list(s, "--params")?;
                    if v.len() != 4 {
                        return Err(CliError::Usage("--params takes r1,r2,q1,q2".into()));
                    }
                    StylizedParams {
                        r1: v[0],
                        r2: v[1],
                        q1: v[2],
                        q2: v[3],
                    }
                }
                None => file
                    .params
                    .ok_or_else(|| CliError::Usage("the custom scenario needs --params or `params` in the config".into()))?,
            };
            StylizedSystem::new(p.r1, p.r2, p.q1, p.q2).map_err(|e| CliError::Usage(e.to_string()))
        }
        Scenario::Feedopt => Err(CliError::Usage("expected the stylized or custom scenario".into())),
    }
}

pub fn parse_list(s: &str, what: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Usage(format!("{what}: cannot parse {s:?}: {e}")))
}

/// `"lo,hi"` with finite `lo <= hi`.
pub fn parse_box(s: &str, what: &str) -> Result<[f64; 2], CliError> {
    let v = parse_list(s, what)?;
    match v[..] {
        [lo, hi] => check_box([lo, hi], what),
        _ => Err(CliError::Usage(format!("{what}: expected lo,hi, got {s:?}"))),
    }
}

pub fn check_box(b: [f64; 2], what: &str) -> Result<[f64; 2], CliError> {
    if b[0].is_finite() && b[1].is_finite() && b[0] <= b[1] {
        Ok(b)
    } else {
        Err(CliError::Usage(format!("{what}: malformed interval [{}, {}]", b[0], b[1])))
    }
}

pub fn positive(v: f64, what: &str) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Usage(format!("{what} must be positive, got {v}")))
    }
}
