use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CertifyError;

/// An axis-aligned box `[lo_i, hi_i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, CertifyError> {
        if lo.len() != hi.len() {
            return Err(CertifyError::InvalidRegion(format!(
                "bounds have lengths {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        for (i, (a, b)) in lo.iter().zip(&hi).enumerate() {
            if !(a.is_finite() && b.is_finite() && a <= b) {
                return Err(CertifyError::InvalidRegion(format!("component {i}: [{a}, {b}]")));
            }
        }
        Ok(Self { lo, hi })
    }

    /// `[-r, r]^dim`.
    pub fn cube(dim: usize, r: f64) -> Self {
        Self::new(vec![-r; dim], vec![r; dim]).expect("half-width must be finite and nonnegative")
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim() && p.iter().zip(&self.lo).zip(&self.hi).all(|((v, a), b)| a <= v && v <= b)
    }

    /// The product box `self x other`.
    pub fn product(&self, other: &BoxRegion) -> BoxRegion {
        let mut lo = self.lo.clone();
        lo.extend_from_slice(&other.lo);
        let mut hi = self.hi.clone();
        hi.extend_from_slice(&other.hi);
        BoxRegion { lo, hi }
    }

    fn lerp(&self, i: usize, t: f64) -> f64 {
        self.lo[i] + t * (self.hi[i] - self.lo[i])
    }
}

const PRIMES: [u64; 24] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
];
const MAX_CORNER_DIM: usize = 8;

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// `n` points in `region`: its corners (for dimension at most 8), then a
/// randomly shifted Halton sequence, with every tenth point replaced by a
/// uniform draw. Deterministic in `seed`.
pub fn sample_points(region: &BoxRegion, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let d = region.dim();
    assert!(d <= PRIMES.len(), "at most {} dimensions", PRIMES.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..d).map(|_| rng.gen()).collect();
    let mut out = Vec::with_capacity(n);
    if d <= MAX_CORNER_DIM {
        for mask in 0..(1usize << d) {
            if out.len() == n {
                break;
            }
            out.push((0..d).map(|i| if mask >> i & 1 == 1 { region.hi[i] } else { region.lo[i] }).collect());
        }
    }
    let mut k = 1u64;
    while out.len() < n {
        let p: Vec<f64> = if out.len() % 10 == 9 {
            (0..d).map(|i| region.lerp(i, rng.gen())).collect()
        } else {
            let p = (0..d).map(|i| region.lerp(i, (radical_inverse(k, PRIMES[i]) + shift[i]).fract())).collect();
            k += 1;
            p
        };
        out.push(p);
    }
    out
}
