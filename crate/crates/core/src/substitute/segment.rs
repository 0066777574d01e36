use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::Trajectory;
use crate::interp::HermiteTable;
use crate::model::DampedSystem;

/// Turning points closer than this (in time) to a boundary are merged into it.
pub const MIN_SEGMENT_DURATION: f64 = 1e-9;
/// Bisection tolerance for turning-point times.
pub const TURNING_POINT_TOL: f64 = 1e-12;

/// How a coordinate moves on a segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Motion {
    Increasing,
    Decreasing,
    /// `q'_i ≡ 0` on the interval.
    Frozen,
}

impl Motion {
    pub fn direction(self) -> i8 {
        match self {
            Motion::Increasing => 1,
            Motion::Decreasing => -1,
            Motion::Frozen => 0,
        }
    }
}

/// Time interval on which a coordinate is strictly monotone (or frozen).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentSpan {
    pub coord: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub motion: Motion,
}

/// Sampling density of the `G_i(q_i)` tables.
///
/// Near a turning point `q_i` moves quadratically in time, so `G_i(q_i)`
/// behaves like a square root of the distance to the segment end. Uniform
/// sampling in time is far too coarse there; the ends get a geometric
/// sequence of extra samples instead.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableOptions {
    /// Uniform sub-samples inserted inside every trajectory step.
    pub substeps: usize,
    /// Width of the graded zone at each end, in units of the local sample
    /// spacing.
    pub grading_zone: f64,
    /// Samples per halving of the time distance to the end.
    pub grading_per_octave: usize,
    /// Number of halvings covered by the grading.
    pub grading_octaves: usize,
}

impl Default for TableOptions {
    fn default() -> Self {
        Self {
            substeps: 2,
            grading_zone: 16.0,
            grading_per_octave: 8,
            grading_octaves: 24,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Representation {
    Table(Arc<HermiteTable>),
    /// Single point in `q_i`; `G_i` is the constant damping force there.
    Point {
        g: f64,
    },
}

/// A monotone piece of the phase curve for one coordinate, with the damping
/// force restricted to it and re-expressed as a function `G_i(q_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneSegment {
    span: SegmentSpan,
    q_start: f64,
    q_end: f64,
    repr: Representation,
    /// Work `W_i(t_start)` accumulated before the segment.
    pub(crate) offset: f64,
}

impl MonotoneSegment {
    pub fn span(&self) -> SegmentSpan {
        self.span
    }

    pub fn coord(&self) -> usize {
        self.span.coord
    }

    pub fn t_start(&self) -> f64 {
        self.span.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.span.t_end
    }

    pub fn duration(&self) -> f64 {
        self.span.t_end - self.span.t_start
    }

    pub fn motion(&self) -> Motion {
        self.span.motion
    }

    pub fn is_frozen(&self) -> bool {
        matches!(self.repr, Representation::Point { .. })
    }

    pub fn q_start(&self) -> f64 {
        self.q_start
    }

    pub fn q_end(&self) -> f64 {
        self.q_end
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn table(&self) -> Option<&HermiteTable> {
        match &self.repr {
            Representation::Table(t) => Some(t),
            Representation::Point { .. } => None,
        }
    }

    /// Range of `q_i` on which `G_i` is defined. A frozen segment reports the
    /// degenerate interval at its fixed coordinate.
    pub fn domain(&self) -> (f64, f64) {
        match &self.repr {
            Representation::Table(t) => t.domain(),
            Representation::Point { .. } => (self.q_start, self.q_start),
        }
    }

    fn out_of_domain(&self, q: f64) -> Error {
        let (lo, hi) = self.domain();
        Error::OutOfDomain {
            coord: self.coord(),
            value: q,
            lo,
            hi,
        }
    }

    /// `G_i(q)`: the damping force magnitude seen as a function of `q_i`.
    /// Frozen segments accept any `q` and return their constant.
    pub fn g(&self, q: f64) -> Result<f64> {
        match &self.repr {
            Representation::Table(t) => t.eval(q).ok_or_else(|| self.out_of_domain(q)),
            Representation::Point { g } => Ok(*g),
        }
    }

    pub fn g_slope(&self, q: f64) -> Result<f64> {
        match &self.repr {
            Representation::Table(t) => t.derivative(q).ok_or_else(|| self.out_of_domain(q)),
            Representation::Point { .. } => Ok(0.0),
        }
    }

    /// Segment-local potential `W_i(t_start) + ∫_{q_start}^{q} G_i(s) ds`.
    pub fn potential(&self, q: f64) -> Result<f64> {
        match &self.repr {
            Representation::Table(t) => {
                let at = t.integral_from_start(q).ok_or_else(|| self.out_of_domain(q))?;
                let start = t
                    .integral_from_start(self.q_start)
                    .expect("segment start lies in its table");
                Ok(self.offset + at - start)
            }
            Representation::Point { g } => Ok(self.offset + g * (q - self.q_start)),
        }
    }

    /// `∫_from^to G_i(s) ds`, accurate to full relative precision even when
    /// the two points are very close.
    pub fn potential_increment(&self, from: f64, to: f64) -> Result<f64> {
        match &self.repr {
            Representation::Table(t) => t.integral_between(from, to).ok_or_else(|| {
                let bad = if t.contains(from) { to } else { from };
                self.out_of_domain(bad)
            }),
            Representation::Point { g } => Ok(g * (to - from)),
        }
    }

    /// Whether `G_i` can be evaluated at `q` (always true when frozen).
    pub fn accepts(&self, q: f64) -> bool {
        match &self.repr {
            Representation::Table(t) => t.contains(q),
            Representation::Point { .. } => true,
        }
    }

    /// Half-open membership `[t_start, t_end)`.
    pub fn contains_time(&self, t: f64) -> bool {
        t >= self.span.t_start && t < self.span.t_end
    }
}

fn frozen_threshold(gamma: &Trajectory) -> f64 {
    let scale = (0..gamma.len())
        .flat_map(|j| gamma.node_slice(j).iter().copied())
        .fold(1.0f64, |acc, v| acc.max(v.abs()));
    1e-14 * scale
}

fn velocity(gamma: &Trajectory, buf: &mut [f64], j: usize, s: f64, i: usize) -> f64 {
    gamma.hermite(j, s, buf, None);
    buf[gamma.dof() + i]
}

/// Bisection for `q'_i = 0` on step `j` of the dense output.
fn bisect_root(gamma: &Trajectory, j: usize, i: usize, buf: &mut [f64]) -> f64 {
    let t0 = gamma.times()[j];
    let h = gamma.times()[j + 1] - t0;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let f_lo = velocity(gamma, buf, j, lo, i);
    while (hi - lo) * h > TURNING_POINT_TOL {
        let mid = 0.5 * (lo + hi);
        let fm = velocity(gamma, buf, j, mid, i);
        if fm == 0.0 {
            return t0 + mid * h;
        }
        if (fm > 0.0) == (f_lo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    t0 + 0.5 * (lo + hi) * h
}

/// Times in `(t0, t_end)` where `q'_i` changes sign.
pub fn turning_points(gamma: &Trajectory, i: usize) -> Vec<f64> {
    segment_trajectory(gamma, i).iter().skip(1).map(|s| s.t_start).collect()
}

/// Splits `[t0, t_end]` into maximal intervals on which `q_i` is strictly
/// monotone, separated by the roots of `q'_i(t) = 0`. Runs of steps with
/// `q'_i ≡ 0` become frozen spans.
pub fn segment_trajectory(gamma: &Trajectory, i: usize) -> Vec<SegmentSpan> {
    let n = gamma.dof();
    assert!(i < n, "coordinate {i} out of range for {n} degrees of freedom");
    let m = gamma.len();
    let times = gamma.times();
    if m < 2 {
        return vec![SegmentSpan {
            coord: i,
            t_start: gamma.t0(),
            t_end: gamma.t_end(),
            motion: Motion::Frozen,
        }];
    }
    let tiny = frozen_threshold(gamma);
    let mut buf = vec![0.0; 2 * n];
    let v: Vec<f64> = (0..m).map(|j| gamma.node_slice(j)[n + i]).collect();

    let frozen_step: Vec<bool> = (0..m - 1)
        .map(|j| v[j].abs() <= tiny && v[j + 1].abs() <= tiny && velocity(gamma, &mut buf, j, 0.5, i).abs() <= tiny)
        .collect();

    // (start, end, frozen) runs of consecutive steps
    let mut runs: Vec<(usize, usize, bool)> = Vec::new();
    for (j, &fz) in frozen_step.iter().enumerate() {
        match runs.last_mut() {
            Some(run) if run.2 == fz => run.1 = j + 1,
            _ => runs.push((j, j + 1, fz)),
        }
    }

    let mut spans = Vec::new();
    for (a, b, frozen) in runs {
        let (ta, tb) = (times[a], times[b]);
        if frozen {
            spans.push(SegmentSpan {
                coord: i,
                t_start: ta,
                t_end: tb,
                motion: Motion::Frozen,
            });
            continue;
        }
        let mut bounds = vec![ta];
        let sign = |x: f64| {
            if x.abs() <= tiny {
                0
            } else if x > 0.0 {
                1
            } else {
                -1
            }
        };
        for j in a..b {
            let (s0, s1) = (sign(v[j]), sign(v[j + 1]));
            let root = if s0 * s1 < 0 {
                Some(bisect_root(gamma, j, i, &mut buf))
            } else if s1 == 0 && j + 1 < b {
                Some(times[j + 1])
            } else {
                None
            };
            if let Some(r) = root {
                if r - bounds.last().unwrap() > MIN_SEGMENT_DURATION && tb - r > MIN_SEGMENT_DURATION {
                    bounds.push(r);
                }
            }
        }
        bounds.push(tb);
        for w in bounds.windows(2) {
            let qa = gamma.evaluate(w[0]).expect("bound inside trajectory").q[i];
            let qb = gamma.evaluate(w[1]).expect("bound inside trajectory").q[i];
            let motion = if qb > qa {
                Motion::Increasing
            } else if qb < qa {
                Motion::Decreasing
            } else {
                Motion::Frozen
            };
            spans.push(SegmentSpan {
                coord: i,
                t_start: w[0],
                t_end: w[1],
                motion,
            });
        }
    }
    spans
}

/// Sample times for a segment table: the segment ends, every trajectory node
/// inside, uniform sub-samples, and geometric grading toward both ends.
fn table_times(gamma: &Trajectory, span: &SegmentSpan, opts: &TableOptions) -> Vec<f64> {
    let (ta, tb) = (span.t_start, span.t_end);
    let mut base = vec![ta];
    base.extend(gamma.times().iter().copied().filter(|&t| t > ta && t < tb));
    base.push(tb);

    let mut out =
        Vec::with_capacity(base.len() * (opts.substeps + 1) + 2 * opts.grading_per_octave * opts.grading_octaves);
    for w in base.windows(2) {
        let h = w[1] - w[0];
        out.push(w[0]);
        for k in 1..=opts.substeps {
            out.push(w[0] + h * k as f64 / (opts.substeps + 1) as f64);
        }
    }
    out.push(tb);

    if out.len() >= 2 && opts.grading_per_octave > 0 {
        let span_len = tb - ta;
        // local sample spacing from the enclosing trajectory step, not the
        // first sample, which may sit arbitrarily close to the end
        let spacing = |t: f64| {
            let j = gamma.step_index(t);
            (gamma.times()[j + 1] - gamma.times()[j]) / (opts.substeps + 1) as f64
        };
        let zone_a = (opts.grading_zone * spacing(ta)).min(0.5 * span_len);
        let zone_b = (opts.grading_zone * spacing(tb)).min(0.5 * span_len);
        let ratio = 0.5f64.powf(1.0 / opts.grading_per_octave as f64);
        let mut r = 1.0;
        for _ in 0..opts.grading_per_octave * opts.grading_octaves {
            out.push(ta + zone_a * r);
            out.push(tb - zone_b * r);
            r *= ratio;
        }
    }
    out.sort_by(f64::total_cmp);
    out.dedup();
    out.retain(|&t| t >= ta && t <= tb);
    out
}

pub(crate) fn build_segment(
    gamma: &Trajectory,
    sys: &DampedSystem,
    span: SegmentSpan,
    opts: &TableOptions,
) -> MonotoneSegment {
    let n = gamma.dof();
    let i = span.coord;
    let mut buf = vec![0.0; 2 * n];
    let mut acc = vec![0.0; 2 * n];

    let state_at = |t: f64, buf: &mut [f64]| gamma.evaluate_into(t, buf).expect("segment inside trajectory");
    state_at(span.t_start, &mut buf);
    let q_start = buf[i];
    let g_start = sys.damping_component(i, &buf[n..]);
    state_at(span.t_end, &mut buf);
    let q_end = buf[i];

    let point = |g| MonotoneSegment {
        span,
        q_start,
        q_end,
        repr: Representation::Point { g },
        offset: 0.0,
    };
    if span.motion == Motion::Frozen {
        return point(g_start);
    }

    // below 1e-8 of the state scale the exact slope is rounding noise
    let slope_floor = 1e6 * frozen_threshold(gamma);
    let mut rows: Vec<(f64, f64, Option<f64>)> = table_times(gamma, &span, opts)
        .into_iter()
        .map(|t| {
            state_at(t, &mut buf);
            sys.rhs_into(&buf[..n], &buf[n..], &mut acc);
            let (q, p) = (buf[i], buf[n + i]);
            let g = sys.damping_component(i, &buf[n..]);
            // dG/dq = (C q'')_i / q'_i
            let slope = (p.abs() > slope_floor).then(|| sys.damping_component(i, &acc[n..]) / p);
            (q, g, slope)
        })
        .collect();
    if span.motion == Motion::Decreasing {
        rows.reverse();
    }
    // abscissae closer than a few ulps carry only rounding noise
    let min_gap = 1e-15 * rows.iter().fold(1.0f64, |a, r| a.max(r.0.abs()));
    let last = rows.len().saturating_sub(1);
    let mut kept: Vec<(f64, f64, Option<f64>)> = Vec::with_capacity(rows.len());
    for (k, row) in rows.into_iter().enumerate() {
        match kept.last() {
            Some(prev) if row.0 <= prev.0 + min_gap => {
                // the far end of the segment always stays in the table
                if k == last && kept.len() > 1 && row.0 > prev.0 {
                    kept.pop();
                    kept.push(row);
                }
            }
            _ => kept.push(row),
        }
    }
    if kept.len() < 2 {
        return point(g_start);
    }
    let x: Vec<f64> = kept.iter().map(|r| r.0).collect();
    let y: Vec<f64> = kept.iter().map(|r| r.1).collect();
    let m: Vec<Option<f64>> = kept.iter().map(|r| r.2).collect();
    let table = HermiteTable::new(x, y, &m).expect("abscissae filtered to be increasing");
    // keep the exact endpoint values on the table domain
    let (lo, hi) = table.domain();
    let (q_start, q_end) = match span.motion {
        Motion::Increasing => (lo, hi),
        _ => (hi, lo),
    };
    MonotoneSegment {
        span,
        q_start,
        q_end,
        repr: Representation::Table(Arc::new(table)),
        offset: 0.0,
    }
}
