//! Seeded random falsification runs over every inequality check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{
    jensen_sum_check, lemma1_check, lemma2a_check, lemma2b_check, lemma6_check, sandwich_check,
    shifted_power_check, LemmaCheckResult,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Lemma {
    YoungProduct,
    SublinearDifference,
    SuperlinearDifference,
    PowerOfSum,
    PowerSandwich,
    ShiftedPower,
    ScaledYoungProduct,
}

impl Lemma {
    pub const ALL: [Lemma; 7] = [
        Lemma::YoungProduct,
        Lemma::SublinearDifference,
        Lemma::SuperlinearDifference,
        Lemma::PowerOfSum,
        Lemma::PowerSandwich,
        Lemma::ShiftedPower,
        Lemma::ScaledYoungProduct,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Lemma::YoungProduct => "lemma1 (product bound)",
            Lemma::SublinearDifference => "lemma2a (sublinear difference)",
            Lemma::SuperlinearDifference => "lemma2b (superlinear difference)",
            Lemma::PowerOfSum => "lemma3 (power of a sum)",
            Lemma::PowerSandwich => "lemma4 (power sandwich)",
            Lemma::ShiftedPower => "lemma5 (shifted signed power)",
            Lemma::ScaledYoungProduct => "lemma6 (scaled product bound)",
        }
    }

    fn stream(&self) -> u64 {
        *self as u64
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteViolation {
    pub sample: usize,
    pub description: String,
    pub result: LemmaCheckResult,
}

#[derive(Debug, Clone, Serialize)]
pub struct LemmaSuiteReport {
    pub lemma: Lemma,
    pub label: &'static str,
    pub seed: u64,
    pub samples: usize,
    /// Samples outside the region where the inequality makes a claim.
    pub not_applicable: usize,
    pub violations: Vec<SuiteViolation>,
    /// Smallest relative slack seen; values near zero mean the bound was nearly tight.
    pub min_relative_slack: f64,
}

impl LemmaSuiteReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Log-uniform magnitude in `[lo, hi]`.
fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

fn magnitude(rng: &mut ChaCha8Rng) -> f64 {
    if rng.gen_bool(0.03) {
        0.0
    } else {
        log_uniform(rng, 1e-3, 1e3)
    }
}

fn random_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let scale = log_uniform(rng, 1e-3, 1e3);
    let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let n = super::norm(&v).max(1e-300);
    v.into_iter().map(|c| c * scale / n).collect()
}

/// Pairs biased towards the configurations where the difference bounds are tight.
fn vector_pair(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let dim = rng.gen_range(1..=5);
    let x = random_vector(rng, dim);
    let y = match rng.gen_range(0..5) {
        0 => random_vector(rng, dim),
        1 => {
            // nearly antipodal
            let a = log_uniform(rng, 0.5, 2.0);
            x.iter().map(|c| -a * c + 1e-3 * c.abs() * rng.gen_range(-1.0..1.0)).collect()
        }
        2 => {
            // nearly equal
            let eps = log_uniform(rng, 1e-9, 1e-1);
            x.iter().map(|c| c + eps * rng.gen_range(-1.0..1.0) * (1.0 + c.abs())).collect()
        }
        3 => {
            // parallel, different lengths
            let a = log_uniform(rng, 1e-3, 1e3);
            x.iter().map(|c| a * c).collect()
        }
        _ => {
            if rng.gen_bool(0.5) {
                vec![0.0; dim]
            } else {
                random_vector(rng, dim)
            }
        }
    };
    if rng.gen_bool(0.5) {
        (x, y)
    } else {
        (y, x)
    }
}

fn sample_one(lemma: Lemma, rng: &mut ChaCha8Rng) -> (String, Option<LemmaCheckResult>) {
    match lemma {
        Lemma::YoungProduct => {
            let (x, y) = (magnitude(rng), magnitude(rng));
            let (p1, p2) = (rng.gen_range(0.1..3.0), rng.gen_range(0.1..3.0));
            let c = log_uniform(rng, 1e-2, 1e2);
            let r = lemma1_check(x, y, p1, p2, c).expect("sampled within domain");
            (format!("x={x:e} y={y:e} p1={p1} p2={p2} c={c:e}"), Some(r))
        }
        Lemma::SublinearDifference => {
            let (x, y) = vector_pair(rng);
            let xi1 = rng.gen_range(0.01..0.99);
            let r = lemma2a_check(&x, &y, xi1).expect("sampled within domain");
            (format!("x={x:?} y={y:?} xi1={xi1}"), Some(r))
        }
        Lemma::SuperlinearDifference => {
            let (x, y) = vector_pair(rng);
            let xi2 = -rng.gen_range(0.01..3.0);
            let r = lemma2b_check(&x, &y, xi2).expect("sampled within domain");
            (format!("x={x:?} y={y:?} xi2={xi2}"), Some(r))
        }
        Lemma::PowerOfSum => {
            let n = rng.gen_range(1..=6);
            let s: Vec<f64> = (0..n).map(|_| magnitude(rng)).collect();
            let p = if rng.gen_bool(0.5) {
                rng.gen_range(0.05..=1.0)
            } else {
                rng.gen_range(1.0..4.0)
            };
            let r = jensen_sum_check(&s, p).expect("sampled within domain");
            (format!("s={s:?} p={p}"), Some(r))
        }
        Lemma::PowerSandwich => {
            let x = log_uniform(rng, 1e-4, 1e4);
            let mut e = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            e.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let r = sandwich_check(x, e[1], e[0], e[2]).expect("sampled within domain");
            (format!("x={x:e} p={} p_lo={} p_hi={}", e[1], e[0], e[2]), Some(r))
        }
        Lemma::ShiftedPower => {
            let x = log_uniform(rng, 1e-3, 1e3) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            // about 5% of the draws land outside |x| > 2|u|
            let u = x * rng.gen_range(-0.525..0.525);
            let alpha = rng.gen_range(0.05..4.0);
            let r = shifted_power_check(x, u, alpha).expect("sampled within domain");
            (format!("x={x:e} u={u:e} alpha={alpha}"), r)
        }
        Lemma::ScaledYoungProduct => {
            let (x, y) = (magnitude(rng), magnitude(rng));
            let (p1, p2) = (rng.gen_range(0.1..3.0), rng.gen_range(0.1..3.0));
            let delta = log_uniform(rng, 1e-2, 1e2);
            let c = log_uniform(rng, 1e-2, 1e2);
            let r = lemma6_check(x, y, p1, p2, delta, c).expect("sampled within domain");
            (format!("x={x:e} y={y:e} p1={p1} p2={p2} delta={delta:e} c={c:e}"), Some(r))
        }
    }
}

/// Runs `n_samples` random checks of one inequality.
pub fn run_lemma(lemma: Lemma, seed: u64, n_samples: usize) -> LemmaSuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(lemma.stream());
    let mut report = LemmaSuiteReport {
        lemma,
        label: lemma.label(),
        seed,
        samples: n_samples,
        not_applicable: 0,
        violations: Vec::new(),
        min_relative_slack: f64::INFINITY,
    };
    for i in 0..n_samples {
        let (description, result) = sample_one(lemma, &mut rng);
        let Some(result) = result else {
            report.not_applicable += 1;
            continue;
        };
        let rel = result.relative_slack();
        if rel < report.min_relative_slack {
            report.min_relative_slack = rel;
        }
        if !result.holds {
            report.violations.push(SuiteViolation {
                sample: i,
                description,
                result,
            });
        }
    }
    report
}

/// Every inequality, in parallel, each with its own random stream.
pub fn run_all(seed: u64, n_samples: usize) -> Vec<LemmaSuiteReport> {
    use rayon::prelude::*;
    Lemma::ALL
        .par_iter()
        .map(|&l| run_lemma(l, seed, n_samples))
        .collect()
}
