use serde::Serialize;

use crate::dynamics::Trajectory;
use crate::nonsmooth::norm;

#[derive(Debug, Clone, Serialize)]
pub struct BetaRow {
    /// initial norm `|s0|` shared by the trajectories in this row
    pub radius: f64,
    pub trajectories: usize,
    /// `max(|s(t)| - varrho, 0)` maximized over each time bin
    pub values: Vec<f64>,
}

impl BetaRow {
    /// Start of the first bin after which every value is at most `threshold`.
    pub fn vanishes_after(&self, time_grid: &[f64], threshold: f64) -> Option<f64> {
        let mut first = None;
        for (i, v) in self.values.iter().enumerate().rev() {
            if *v <= threshold {
                first = Some(i);
            } else {
                break;
            }
        }
        first.map(|i| time_grid[i])
    }
}

/// Empirical bound `|s(t)| <= beta(|s0|, t) + varrho` from an ensemble.
#[derive(Debug, Clone, Serialize)]
pub struct GklEnvelope {
    pub u_sup: f64,
    pub settle_after: f64,
    pub varrho: f64,
    /// left edges of the time bins; the last bin extends to the end of the runs
    pub time_grid: Vec<f64>,
    pub rows: Vec<BetaRow>,
}

/// `varrho` is the largest `|s(t)|` with `t >= settle_after` over the
/// ensemble; each row of the table is the binned pointwise maximum of
/// `max(|s(t)| - varrho, 0)` over trajectories with the same `|s0|`
/// (relative to within `1e-9`).
pub fn estimate_gkl_envelope(ensemble: &[Trajectory], u_sup: f64, settle_after: f64, time_grid: &[f64]) -> GklEnvelope {
    assert!(!ensemble.is_empty(), "ensemble must be nonempty");
    assert!(!time_grid.is_empty(), "time grid must be nonempty");
    assert!(time_grid.windows(2).all(|w| w[0] < w[1]), "time grid must increase");

    let varrho = ensemble
        .iter()
        .flat_map(|tr| tr.times().iter().zip(tr.states()).filter(|(t, _)| **t >= settle_after).map(|(_, s)| norm(s)))
        .fold(0.0, f64::max);

    let mut rows: Vec<BetaRow> = Vec::new();
    for tr in ensemble {
        let r0 = norm(tr.first_state());
        let idx = match rows.iter().position(|row| (row.radius - r0).abs() <= 1e-9 * r0.max(1.0)) {
            Some(i) => i,
            None => {
                rows.push(BetaRow {
                    radius: r0,
                    trajectories: 0,
                    values: vec![0.0; time_grid.len()],
                });
                rows.len() - 1
            }
        };
        let row = &mut rows[idx];
        row.trajectories += 1;
        for (t, s) in tr.times().iter().zip(tr.states()) {
            if *t < time_grid[0] {
                continue;
            }
            let bin = time_grid.partition_point(|g| g <= t) - 1;
            let excess = (norm(s) - varrho).max(0.0);
            row.values[bin] = row.values[bin].max(excess);
        }
    }
    rows.sort_by(|a, b| a.radius.total_cmp(&b.radius));
    GklEnvelope {
        u_sup,
        settle_after,
        varrho,
        time_grid: time_grid.to_vec(),
        rows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Frame;

    #[test]
    fn zero_trajectory_has_zero_envelope() {
        let mut tr = Trajectory::new(2, 0, Frame::Error);
        for i in 0..10 {
            tr.push(i as f64, &[0.0, 0.0], &[]);
        }
        let env = estimate_gkl_envelope(&[tr], 0.0, 5.0, &[0.0, 2.0, 4.0]);
        assert_eq!(env.varrho, 0.0);
        assert!(env.rows[0].values.iter().all(|v| *v == 0.0));
        assert_eq!(env.rows[0].vanishes_after(&env.time_grid, 0.0), Some(0.0));
    }

    #[test]
    fn rows_group_by_initial_norm() {
        let make = |s0: f64| {
            let mut tr = Trajectory::new(1, 0, Frame::Error);
            for i in 0..=10 {
                tr.push(i as f64, &[s0 * (1.0 - i as f64 / 10.0) + 0.1 * s0.signum()], &[]);
            }
            tr
        };
        let env = estimate_gkl_envelope(&[make(2.0), make(-2.0), make(5.0)], 0.0, 8.0, &[0.0, 5.0]);
        assert_eq!(env.rows.len(), 2);
        assert_eq!(env.rows[0].trajectories, 2);
        assert!((env.varrho - (5.0 * 0.2 + 0.1)).abs() < 1e-12);
        assert!(env.rows[0].values[1] < 1e-12);
        assert_eq!(env.rows[1].vanishes_after(&env.time_grid, 0.0), None);
        assert_eq!(env.rows[1].vanishes_after(&env.time_grid, 2.0), Some(5.0));
    }
}
