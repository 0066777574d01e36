//! The substituting conservative system of a damped trajectory.
//!
//! Along a phase curve γ of the damped system the damping force
//! `(C q')_i` is, on every interval where `q_i` is monotone, a function of
//! `q_i` alone. Storing it as a table `G_i(q_i)` turns it into a conservative
//! force with potential `∫ G_i dq_i`; the system `q'' = -K q - G(q)` then has γ
//! as a solution, and `Ĥ = ½pᵀp + ½qᵀKq + W` is constant along γ, where `W` is
//! the work done against damping.

mod segment;
mod work;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::{SeparableForce, Trajectory};
use crate::model::DampedSystem;
use crate::par::{map_indexed, Execution};

pub use segment::{
    segment_trajectory, turning_points, MonotoneSegment, Motion, SegmentSpan, TableOptions, MIN_SEGMENT_DURATION,
    TURNING_POINT_TOL,
};
pub use work::{work_along, WorkProfile};

use segment::build_segment;

/// A time interval on which every coordinate stays inside one segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub t_start: f64,
    pub t_end: f64,
    /// Segment index per coordinate.
    pub segments: Vec<usize>,
}

impl Window {
    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubstitutingSystem {
    system: DampedSystem,
    trajectory: Arc<Trajectory>,
    segments: Vec<Vec<MonotoneSegment>>,
    work: WorkProfile,
    windows: Vec<Window>,
}

/// Builds the substituting system with default table sampling.
pub fn build_substituting_system(gamma: &Trajectory, sys: &DampedSystem) -> Result<SubstitutingSystem> {
    SubstitutingSystem::build(
        Arc::new(gamma.clone()),
        sys,
        &TableOptions::default(),
        Execution::Sequential,
    )
}

impl SubstitutingSystem {
    pub fn build(gamma: Arc<Trajectory>, sys: &DampedSystem, opts: &TableOptions, exec: Execution) -> Result<Self> {
        let n = sys.dof();
        if gamma.dof() != n {
            return Err(Error::Dimension {
                what: "trajectory",
                expected: n,
                found: gamma.dof(),
            });
        }
        let work = WorkProfile::new(&gamma, sys);
        let segments: Vec<Vec<MonotoneSegment>> = map_indexed(n, exec, |i| {
            segment_trajectory(&gamma, i)
                .into_iter()
                .map(|span| {
                    let mut seg = build_segment(&gamma, sys, span, opts);
                    let j = gamma.step_index(span.t_start);
                    seg.offset = if gamma.times()[j] == span.t_start {
                        work.at_node(j, i)
                    } else {
                        work.components(&gamma, sys, span.t_start)
                            .expect("segment inside trajectory")[i]
                    };
                    seg
                })
                .collect()
        });
        let windows = build_windows(&segments, gamma.t0(), gamma.t_end());
        Ok(Self {
            system: sys.clone(),
            trajectory: gamma,
            segments,
            work,
            windows,
        })
    }

    pub fn system(&self) -> &DampedSystem {
        &self.system
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.trajectory
    }

    pub fn dof(&self) -> usize {
        self.system.dof()
    }

    pub fn segments(&self, i: usize) -> &[MonotoneSegment] {
        &self.segments[i]
    }

    pub fn windows(&self) -> &[Window] {
        &self.windows
    }

    /// Index of the segment of coordinate `i` that owns time `t`. Segments
    /// are half-open, so a turning point belongs to the following segment;
    /// the final time belongs to the last segment.
    pub fn segment_index_at(&self, i: usize, t: f64) -> Result<usize> {
        self.trajectory.check_time(t)?;
        let segs = &self.segments[i];
        let k = segs.partition_point(|s| s.t_start() <= t);
        Ok(k.saturating_sub(1).min(segs.len() - 1))
    }

    pub fn segment_at(&self, i: usize, t: f64) -> Result<&MonotoneSegment> {
        Ok(&self.segments[i][self.segment_index_at(i, t)?])
    }

    /// Segment selector (one index per coordinate) active at `t`.
    pub fn selector_at(&self, t: f64) -> Result<Vec<usize>> {
        (0..self.dof()).map(|i| self.segment_index_at(i, t)).collect()
    }

    /// Cumulative work `W(t)` done against damping.
    pub fn work(&self, t: f64) -> Result<f64> {
        self.work.total(&self.trajectory, &self.system, t)
    }

    pub fn work_components(&self, t: f64) -> Result<Vec<f64>> {
        self.work.components(&self.trajectory, &self.system, t)
    }

    pub fn mechanical_energy(&self, t: f64) -> Result<f64> {
        let mut buf = vec![0.0; 2 * self.dof()];
        self.trajectory.evaluate_into(t, &mut buf)?;
        let n = self.dof();
        Ok(self.system.energy_of(&buf[..n], &buf[n..]))
    }

    /// `Ĥ(t) = H(γ(t)) + W(t)`.
    pub fn hat_h(&self, t: f64) -> Result<f64> {
        Ok(self.mechanical_energy(t)? + self.work(t)?)
    }

    /// `L̂(t) = ½q'ᵀq' - ½qᵀKq - W(t)`.
    pub fn hat_l(&self, t: f64) -> Result<f64> {
        let n = self.dof();
        let mut buf = vec![0.0; 2 * n];
        self.trajectory.evaluate_into(t, &mut buf)?;
        let kinetic: f64 = 0.5 * buf[n..].iter().map(|v| v * v).sum::<f64>();
        let potential = self.system.energy_of(&buf[..n], &buf[n..]) - kinetic;
        Ok(kinetic - potential - self.work(t)?)
    }

    fn check_selector(&self, selector: &[usize]) -> Result<()> {
        if selector.len() != self.dof() {
            return Err(Error::Dimension {
                what: "segment selector",
                expected: self.dof(),
                found: selector.len(),
            });
        }
        for (i, &k) in selector.iter().enumerate() {
            if k >= self.segments[i].len() {
                return Err(Error::config(format!(
                    "coordinate {i} has {} segments, selector asks for {k}",
                    self.segments[i].len()
                )));
            }
        }
        Ok(())
    }

    /// `G(q)` with each component drawn from the selected segment.
    pub fn g_vector(&self, selector: &[usize], q: &[f64]) -> Result<DVector<f64>> {
        self.check_selector(selector)?;
        Ok(DVector::from_iterator(
            self.dof(),
            (0..self.dof())
                .map(|i| self.segments[i][selector[i]].g(q[i]))
                .collect::<Result<Vec<_>>>()?,
        ))
    }

    /// Sum of segment-local potentials `Σ_i V_i(q_i)`; equals `W(t)` when `q`
    /// is the state at time `t` of the selected segments.
    pub fn potential(&self, selector: &[usize], q: &[f64]) -> Result<f64> {
        self.check_selector(selector)?;
        (0..self.dof())
            .map(|i| self.segments[i][selector[i]].potential(q[i]))
            .sum()
    }

    /// Diagonal of the equivalent stiffness `K̃_ii = G_i(q_i) / q_i`. Entries
    /// with `|q_i| ≤ eps` are undefined and reported as `None`; the default
    /// `eps` is `1e-8` times the coordinate range of the segment.
    pub fn equivalent_stiffness(&self, selector: &[usize], q: &[f64], eps: Option<f64>) -> Result<Vec<Option<f64>>> {
        self.check_selector(selector)?;
        (0..self.dof())
            .map(|i| {
                let seg = &self.segments[i][selector[i]];
                let g = seg.g(q[i])?;
                let eps = eps.unwrap_or_else(|| 1e-8 * (seg.q_end() - seg.q_start()).abs());
                Ok((q[i].abs() > eps).then(|| g / q[i]))
            })
            .collect()
    }

    /// Conservative force field `q ↦ -K q - G(q)` from the selected segments.
    pub fn force_field(&self, selector: &[usize]) -> Result<ConservativeForceField> {
        self.check_selector(selector)?;
        Ok(ConservativeForceField {
            k: self.system.stiffness().clone(),
            pieces: (0..self.dof()).map(|i| self.segments[i][selector[i]].clone()).collect(),
        })
    }
}

fn build_windows(segments: &[Vec<MonotoneSegment>], t0: f64, t_end: f64) -> Vec<Window> {
    let mut bounds: Vec<f64> = segments
        .iter()
        .flat_map(|segs| segs.iter().map(|s| s.t_start()))
        .chain(std::iter::once(t_end))
        .collect();
    bounds.push(t0);
    bounds.sort_by(f64::total_cmp);
    let mut merged: Vec<f64> = Vec::with_capacity(bounds.len());
    for b in bounds {
        match merged.last() {
            Some(&prev) if b - prev <= MIN_SEGMENT_DURATION => {}
            _ => merged.push(b),
        }
    }
    if let Some(last) = merged.last_mut() {
        *last = t_end;
    }
    merged
        .windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            Window {
                t_start: w[0],
                t_end: w[1],
                segments: segments
                    .iter()
                    .map(|segs| {
                        let k = segs.partition_point(|s| s.t_start() <= mid);
                        k.saturating_sub(1)
                    })
                    .collect(),
            }
        })
        .collect()
}

/// Conservative force `-K q - G(q)` with `G_i` taken from one segment per
/// coordinate. Evaluation outside a segment's `q_i` range is an error.
#[derive(Debug, Clone, PartialEq)]
pub struct ConservativeForceField {
    k: DMatrix<f64>,
    pieces: Vec<MonotoneSegment>,
}

impl ConservativeForceField {
    pub fn segments(&self) -> &[MonotoneSegment] {
        &self.pieces
    }

    pub fn evaluate(&self, q: &[f64]) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(self.dof());
        self.force_into(q, out.as_mut_slice())?;
        Ok(out)
    }
}

impl SeparableForce for ConservativeForceField {
    fn dof(&self) -> usize {
        self.k.nrows()
    }

    fn force_into(&self, q: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.dof();
        for i in 0..n {
            let g = self.pieces[i].g(q[i])?;
            out[i] = -(0..n).map(|l| self.k[(i, l)] * q[l]).sum::<f64>() - g;
        }
        Ok(())
    }

    fn jacobian(&self, q: &[f64]) -> Result<DMatrix<f64>> {
        let mut jac = -&self.k;
        for i in 0..self.dof() {
            jac[(i, i)] -= self.pieces[i].g_slope(q[i])?;
        }
        Ok(jac)
    }
}

#[cfg(test)]
mod tests;
