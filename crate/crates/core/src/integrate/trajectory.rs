use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{InitialCondition, PhaseState};

/// How a trajectory was produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TrajectoryKind {
    Damped { rtol: f64, atol: f64, max_step: f64 },
    Conservative { step: f64 },
}

/// Densely sampled phase curve. Between nodes the state is a cubic Hermite
/// interpolant built from the stored states and their time derivatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    dof: usize,
    times: Vec<f64>,
    // (q, p) per node, stride 2n
    states: Vec<f64>,
    // (q', p') per node, stride 2n
    rates: Vec<f64>,
    initial: InitialCondition,
    kind: TrajectoryKind,
}

impl Trajectory {
    pub(crate) fn from_parts(
        dof: usize,
        times: Vec<f64>,
        states: Vec<f64>,
        rates: Vec<f64>,
        initial: InitialCondition,
        kind: TrajectoryKind,
    ) -> Self {
        debug_assert_eq!(states.len(), times.len() * 2 * dof);
        debug_assert_eq!(rates.len(), states.len());
        debug_assert!(times.windows(2).all(|w| w[1] > w[0]));
        Self {
            dof,
            times,
            states,
            rates,
            initial,
            kind,
        }
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    /// Number of stored nodes.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn t0(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("trajectory has at least one node")
    }

    pub fn initial_condition(&self) -> &InitialCondition {
        &self.initial
    }

    pub fn kind(&self) -> TrajectoryKind {
        self.kind
    }

    /// Raw `(q, p)` of node `j`.
    pub fn node_slice(&self, j: usize) -> &[f64] {
        let w = 2 * self.dof;
        &self.states[j * w..(j + 1) * w]
    }

    /// Raw `(q', p')` of node `j`.
    pub fn node_rate(&self, j: usize) -> &[f64] {
        let w = 2 * self.dof;
        &self.rates[j * w..(j + 1) * w]
    }

    pub fn node(&self, j: usize) -> PhaseState {
        let s = self.node_slice(j);
        PhaseState {
            q: DVector::from_column_slice(&s[..self.dof]),
            p: DVector::from_column_slice(&s[self.dof..]),
            t: self.times[j],
        }
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t0() && t <= self.t_end()
    }

    pub(crate) fn check_time(&self, t: f64) -> Result<()> {
        if self.contains(t) {
            Ok(())
        } else {
            Err(Error::OutOfRange {
                t,
                lo: self.t0(),
                hi: self.t_end(),
            })
        }
    }

    /// Index `j` of the step `[t_j, t_{j+1}]` containing `t`. The final node
    /// maps to the last step.
    pub fn step_index(&self, t: f64) -> usize {
        let m = self.times.len();
        if m < 2 {
            return 0;
        }
        let j = self.times.partition_point(|&x| x <= t);
        j.saturating_sub(1).min(m - 2)
    }

    /// Hermite interpolant on step `j` at local coordinate `s ∈ [0, 1]`;
    /// writes the state and (optionally) its time derivative.
    pub(crate) fn hermite(&self, j: usize, s: f64, out: &mut [f64], dout: Option<&mut [f64]>) {
        let w = 2 * self.dof;
        if self.times.len() < 2 {
            out.copy_from_slice(self.node_slice(0));
            if let Some(d) = dout {
                d.copy_from_slice(self.node_rate(0));
            }
            return;
        }
        let h = self.times[j + 1] - self.times[j];
        let (y0, y1) = (self.node_slice(j), self.node_slice(j + 1));
        let (f0, f1) = (self.node_rate(j), self.node_rate(j + 1));
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        for i in 0..w {
            out[i] = h00 * y0[i] + h10 * h * f0[i] + h01 * y1[i] + h11 * h * f1[i];
        }
        if let Some(d) = dout {
            let d00 = (6.0 * s2 - 6.0 * s) / h;
            let d10 = 3.0 * s2 - 4.0 * s + 1.0;
            let d01 = (-6.0 * s2 + 6.0 * s) / h;
            let d11 = 3.0 * s2 - 2.0 * s;
            for i in 0..w {
                d[i] = d00 * y0[i] + d10 * f0[i] + d01 * y1[i] + d11 * f1[i];
            }
        }
    }

    /// Local coordinate of `t` on step `j`.
    pub(crate) fn local(&self, j: usize, t: f64) -> f64 {
        if self.times.len() < 2 {
            return 0.0;
        }
        (t - self.times[j]) / (self.times[j + 1] - self.times[j])
    }

    /// Interpolated `(q, p)` at `t`, written into `out` (length `2n`).
    pub fn evaluate_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        self.check_time(t)?;
        let j = self.step_index(t);
        self.hermite(j, self.local(j, t), out, None);
        Ok(())
    }

    /// Interpolated state and its time derivative at `t`.
    pub fn evaluate_with_rate(&self, t: f64, out: &mut [f64], rate: &mut [f64]) -> Result<()> {
        self.check_time(t)?;
        let j = self.step_index(t);
        self.hermite(j, self.local(j, t), out, Some(rate));
        Ok(())
    }

    pub fn evaluate(&self, t: f64) -> Result<PhaseState> {
        let mut buf = vec![0.0; 2 * self.dof];
        self.evaluate_into(t, &mut buf)?;
        Ok(PhaseState {
            q: DVector::from_column_slice(&buf[..self.dof]),
            p: DVector::from_column_slice(&buf[self.dof..]),
            t,
        })
    }

    /// `n` uniformly spaced times covering `[t0, t_end]` inclusive.
    pub fn uniform_times(&self, n: usize) -> Vec<f64> {
        uniform_grid(self.t0(), self.t_end(), n)
    }
}

pub(crate) fn uniform_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n)
            .map(|k| {
                if k == n - 1 {
                    b
                } else {
                    a + (b - a) * (k as f64) / ((n - 1) as f64)
                }
            })
            .collect(),
    }
}
