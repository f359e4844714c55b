use std::io::{self, Write};

use serde::Serialize;

use crate::nonsmooth::norm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Frame {
    /// `(x, z)`
    Original,
    /// `(x, y)` with `y = z - h(x)`
    Error,
}

/// Accepted steps of one integration run.
///
/// States and inputs are stored row-major in flat buffers.
#[derive(Debug, Clone)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<f64>,
    inputs: Vec<f64>,
    state_dim: usize,
    input_dim: usize,
    frame: Frame,
}

impl Trajectory {
    pub fn new(state_dim: usize, input_dim: usize, frame: Frame) -> Self {
        Self {
            times: Vec::new(),
            states: Vec::new(),
            inputs: Vec::new(),
            state_dim,
            input_dim,
            frame,
        }
    }

    /// Appends one sample. Times must be strictly increasing.
    pub fn push(&mut self, t: f64, state: &[f64], input: &[f64]) {
        assert_eq!(state.len(), self.state_dim);
        assert_eq!(input.len(), self.input_dim);
        if let Some(&last) = self.times.last() {
            assert!(t > last, "trajectory times must increase: {t} after {last}");
        }
        self.times.push(t);
        self.states.extend_from_slice(state);
        self.inputs.extend_from_slice(input);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    /// Relabels the coordinate frame without touching the data.
    pub fn with_frame(mut self, frame: Frame) -> Self {
        self.frame = frame;
        self
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.state_dim..(i + 1) * self.state_dim]
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn states(&self) -> std::slice::ChunksExact<'_, f64> {
        self.states.chunks_exact(self.state_dim.max(1))
    }

    pub fn first_state(&self) -> &[f64] {
        self.state(0)
    }

    pub fn last_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("empty trajectory")
    }

    /// Euclidean norm of every recorded state.
    pub fn norms(&self) -> Vec<f64> {
        self.states().map(norm).collect()
    }

    /// Applies `f` to every state. The output dimension is taken from the first state.
    pub fn map_states(&self, frame: Frame, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Trajectory {
        let mut states = Vec::with_capacity(self.states.len());
        let mut dim = self.state_dim;
        for (i, s) in self.states().enumerate() {
            let v = f(s);
            if i == 0 {
                dim = v.len();
            }
            states.extend(v);
        }
        Trajectory {
            times: self.times.clone(),
            states,
            inputs: self.inputs.clone(),
            state_dim: dim,
            input_dim: self.input_dim,
            frame,
        }
    }

    /// Dense evaluation by monotone piecewise-cubic Hermite interpolation.
    ///
    /// Clamps to the end points outside the recorded time span.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let n = self.len();
        assert!(n > 0, "empty trajectory");
        if n == 1 || t <= self.times[0] {
            return self.state(0).to_vec();
        }
        if t >= self.times[n - 1] {
            return self.state(n - 1).to_vec();
        }
        // index of the interval [t_k, t_{k+1}] containing t
        let k = self.times.partition_point(|&s| s <= t) - 1;
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        (0..self.state_dim)
            .map(|j| {
                let y0 = self.state(k)[j];
                let y1 = self.state(k + 1)[j];
                let d0 = self.pchip_slope(k, j);
                let d1 = self.pchip_slope(k + 1, j);
                h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
            })
            .collect()
    }

    fn secant(&self, k: usize, j: usize) -> f64 {
        (self.state(k + 1)[j] - self.state(k)[j]) / (self.times[k + 1] - self.times[k])
    }

    /// Fritsch-Carlson slope at knot `k` for component `j`.
    fn pchip_slope(&self, k: usize, j: usize) -> f64 {
        let n = self.len();
        if k == 0 {
            return self.secant(0, j);
        }
        if k == n - 1 {
            return self.secant(n - 2, j);
        }
        let (d0, d1) = (self.secant(k - 1, j), self.secant(k, j));
        if d0 == 0.0 || d1 == 0.0 || d0.signum() != d1.signum() {
            return 0.0;
        }
        let h0 = self.times[k] - self.times[k - 1];
        let h1 = self.times[k + 1] - self.times[k];
        let w1 = 2.0 * h1 + h0;
        let w2 = h1 + 2.0 * h0;
        (w1 + w2) / (w1 / d0 + w2 / d1)
    }

    /// CSV with header `t,<state names>,<input names>` and 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W, state_names: &[&str], input_names: &[&str]) -> io::Result<()> {
        assert_eq!(state_names.len(), self.state_dim);
        assert_eq!(input_names.len(), self.input_dim);
        let mut header = vec!["t"];
        header.extend_from_slice(state_names);
        header.extend_from_slice(input_names);
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.len() {
            write!(w, "{:.16e}", self.times[i])?;
            for v in self.state(i).iter().chain(self.input(i)) {
                write!(w, ",{v:.16e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// First recorded time after which every recorded state stays in the ball of
/// the given radius, or `None` if the final state is outside it.
pub fn settling_time(traj: &Trajectory, radius: f64) -> Option<f64> {
    assert!(radius > 0.0, "radius must be positive");
    let mut first_inside = None;
    for (i, s) in traj.states().enumerate().rev() {
        if norm(s) <= radius {
            first_inside = Some(i);
        } else {
            break;
        }
    }
    first_inside.map(|i| traj.times()[i])
}
