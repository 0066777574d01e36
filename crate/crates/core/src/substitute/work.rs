use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::integrate::Trajectory;
use crate::model::DampedSystem;

// 4-point Gauss–Legendre on [0, 1]; exact for the degree-6 integrand
// obtained from two cubic Hermite pieces.
const GL_NODES: [f64; 4] = [
    0.069_431_844_202_973_71,
    0.330_009_478_207_571_87,
    0.669_990_521_792_428_1,
    0.930_568_155_797_026_3,
];
const GL_WEIGHTS: [f64; 4] = [
    0.173_927_422_568_726_93,
    0.326_072_577_431_273_07,
    0.326_072_577_431_273_07,
    0.173_927_422_568_726_93,
];

/// Cumulative work `W_i(t) = ∫₀ᵗ (C q')_i q'_i dτ` per coordinate, integrated
/// exactly on the trajectory's dense output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkProfile {
    dof: usize,
    // stride n; value at each trajectory node
    cumulative: Vec<f64>,
}

impl WorkProfile {
    pub fn new(gamma: &Trajectory, sys: &DampedSystem) -> Self {
        let n = gamma.dof();
        let m = gamma.len();
        let mut cumulative = vec![0.0; n * m];
        let mut buf = vec![0.0; 2 * n];
        let mut step = vec![0.0; n];
        for j in 0..m.saturating_sub(1) {
            step_work(gamma, sys, j, 1.0, &mut buf, &mut step);
            for i in 0..n {
                cumulative[(j + 1) * n + i] = cumulative[j * n + i] + step[i];
            }
        }
        Self { dof: n, cumulative }
    }

    /// Per-coordinate work at time `t`.
    pub fn components(&self, gamma: &Trajectory, sys: &DampedSystem, t: f64) -> Result<Vec<f64>> {
        gamma.check_time(t)?;
        let n = self.dof;
        let mut out = self.cumulative[..n].to_vec();
        if gamma.len() < 2 {
            return Ok(out);
        }
        let j = gamma.step_index(t);
        let s = gamma.local(j, t);
        let mut buf = vec![0.0; 2 * n];
        let mut partial = vec![0.0; n];
        step_work(gamma, sys, j, s, &mut buf, &mut partial);
        for i in 0..n {
            out[i] = self.cumulative[j * n + i] + partial[i];
        }
        Ok(out)
    }

    pub fn total(&self, gamma: &Trajectory, sys: &DampedSystem, t: f64) -> Result<f64> {
        Ok(self.components(gamma, sys, t)?.iter().sum())
    }

    /// Cumulative work of coordinate `i` at node `j`.
    pub fn at_node(&self, j: usize, i: usize) -> f64 {
        self.cumulative[j * self.dof + i]
    }
}

// ∫ over the first fraction `s` of step `j`
fn step_work(gamma: &Trajectory, sys: &DampedSystem, j: usize, s: f64, buf: &mut [f64], out: &mut [f64]) {
    let n = gamma.dof();
    out.iter_mut().for_each(|v| *v = 0.0);
    if s <= 0.0 {
        return;
    }
    let h = gamma.times()[j + 1] - gamma.times()[j];
    for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
        gamma.hermite(j, s * x, buf, None);
        let p = &buf[n..];
        for i in 0..n {
            out[i] += w * sys.damping_component(i, p) * p[i];
        }
    }
    for v in out.iter_mut() {
        *v *= s * h;
    }
}

/// `W(t)` for a single query; builds the cumulative profile on the fly.
pub fn work_along(gamma: &Trajectory, sys: &DampedSystem, t: f64) -> Result<f64> {
    WorkProfile::new(gamma, sys).total(gamma, sys, t)
}
