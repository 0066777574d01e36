use serde::{Deserialize, Serialize};

use super::functional::{poisson_bracket, Evaluation, KHat, QuadraticFunctional, Slot, Snapshot, FD_RELATIVE_STEP};
use super::{functional_k, EnsembleField};
use crate::error::{Error, Result};
use crate::par::{map_indexed, Execution};
use crate::verify::{hat_h_drift, Check, ReportEntry};

/// Hamilton's equations in bracket form, `q' = {q, K̂}` and `π' = {π, K̂}`,
/// checked at one time. The left-hand rates come from the damped right-hand
/// side at the node's state, which is exact on the stored curve and needs no
/// time differencing (so boundary times need no special treatment).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HamiltonResidual {
    pub t: f64,
    /// `max |q'_i - {q_i, K̂}|` over admissible nodes.
    pub q_residual: f64,
    /// `max |π'_i - {π_i, K̂}|` over admissible nodes.
    pub pi_residual: f64,
    /// Per node `[q, π]` residuals; `None` where the finite-difference
    /// stencil does not fit inside the node's current segments (next to a
    /// turning point).
    pub per_node: Vec<Option<[f64; 2]>>,
}

impl HamiltonResidual {
    pub fn max(&self) -> f64 {
        self.q_residual.max(self.pi_residual)
    }

    pub fn excluded(&self) -> usize {
        self.per_node.iter().filter(|r| r.is_none()).count()
    }
}

/// Whether every `q_i ± η` of node `k` lies inside the force domain of the
/// segment the node uses at the snapshot time.
pub fn stencil_fits(snap: &Snapshot, k: usize) -> bool {
    let node = snap.field().node(k);
    snap.q(k).iter().enumerate().all(|(i, &x)| {
        let seg = &node.segments(i)[snap.selector(k)[i]];
        let eta = FD_RELATIVE_STEP * x.abs().max(1.0);
        seg.accepts(x - eta) && seg.accepts(x + eta)
    })
}

/// Snapshot at the first grid time where every node's stencil fits, so that
/// derivatives of `K̂` are two-sided everywhere.
pub fn interior_snapshot(field: &EnsembleField) -> Result<Snapshot<'_>> {
    for &t in field.times() {
        let snap = Snapshot::new(field, t)?;
        if (0..field.len()).all(|k| stencil_fits(&snap, k)) {
            return Ok(snap);
        }
    }
    Err(Error::config("no time at which every node is inside its force domain"))
}

pub fn hamilton_residual(field: &EnsembleField, t: f64, exec: Execution) -> Result<HamiltonResidual> {
    let snap = Snapshot::new(field, t)?;
    let n = field.dof();
    let sys = field.system();
    let per_node = map_indexed(field.len(), exec, |k| -> Result<Option<[f64; 2]>> {
        if !stencil_fits(&snap, k) {
            return Ok(None);
        }
        let mut rate = vec![0.0; 2 * n];
        sys.rhs_into(snap.q(k), snap.pi(k), &mut rate);
        let mut worst = [0.0f64; 2];
        for i in 0..n {
            let dq = poisson_bracket(&Evaluation(Slot::q(k, i)), &KHat, &snap, Execution::Sequential)?;
            let dpi = poisson_bracket(&Evaluation(Slot::pi(k, i)), &KHat, &snap, Execution::Sequential)?;
            worst[0] = worst[0].max((rate[i] - dq).abs());
            worst[1] = worst[1].max((rate[n + i] - dpi).abs());
        }
        Ok(Some(worst))
    })
    .into_iter()
    .enumerate()
    .map(|(k, r)| r.map_err(|e| e.at_node(k)))
    .collect::<Result<Vec<_>>>()?;
    let fold = |c: usize| per_node.iter().flatten().fold(0.0f64, |acc, r| acc.max(r[c]));
    Ok(HamiltonResidual {
        t,
        q_residual: fold(0),
        pi_residual: fold(1),
        per_node,
    })
}

/// Action and Euler–Lagrange residual of an ensemble over a time span.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionReport {
    /// `S = Σ_k w_k ∫ L̂(a_k, t) dt`.
    pub action: f64,
    /// `max |q'' + Kq + G(q)|` over nodes, components and sample times,
    /// with `q''` the time derivative of the dense output of `π`.
    pub el_residual: f64,
    pub samples: usize,
}

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

pub fn action_and_el_residual(field: &EnsembleField, t0: f64, t1: f64, samples: usize) -> Result<ActionReport> {
    if t1 <= t0 || t0.is_nan() || t1.is_nan() {
        return Err(Error::config(format!("empty action span [{t0}, {t1}]")));
    }
    if samples < 2 {
        return Err(Error::config("need at least two samples"));
    }
    let n = field.dof();
    let kmat = field.system().stiffness();
    let mut action = 0.0;
    let mut el = 0.0f64;
    for k in 0..field.len() {
        let node = field.node(k);
        let gamma = node.trajectory();
        gamma
            .check_time(t0)
            .and(gamma.check_time(t1))
            .map_err(|e| e.at_node(k))?;

        // Gauss–Legendre on every trajectory step clipped to [t0, t1]
        let mut bounds = vec![t0];
        bounds.extend(gamma.times().iter().copied().filter(|&t| t > t0 && t < t1));
        bounds.push(t1);
        let mut integral = 0.0;
        for w in bounds.windows(2) {
            let h = w[1] - w[0];
            let mut piece = 0.0;
            for (x, wt) in GL_NODES.iter().zip(GL_WEIGHTS) {
                piece += wt * node.hat_l(w[0] + x * h)?;
            }
            integral += piece * h;
        }
        action += field.weight(k) * integral;

        let mut state = vec![0.0; 2 * n];
        let mut rate = vec![0.0; 2 * n];
        for s in 0..samples {
            let t = if s + 1 == samples {
                t1
            } else {
                t0 + (t1 - t0) * s as f64 / (samples - 1) as f64
            };
            gamma.evaluate_with_rate(t, &mut state, &mut rate)?;
            let sel = node.selector_at(t)?;
            let g = node.g_vector(&sel, &state[..n]).map_err(|e| e.at_node(k))?;
            for i in 0..n {
                let kq: f64 = (0..n).map(|l| kmat[(i, l)] * state[l]).sum();
                el = el.max((rate[n + i] + kq + g[i]).abs());
            }
        }
    }
    Ok(ActionReport {
        action,
        el_residual: el,
        samples,
    })
}

/// `max_t |K̂(t) - K̂(t0)| / max(1, |K̂(t0)|)` over the field's time grid.
pub fn delta_k_drift(field: &EnsembleField) -> Result<f64> {
    let times = field.times();
    let k0 = functional_k(field, times[0])?;
    let scale = k0.abs().max(1.0);
    let mut worst = 0.0f64;
    for &t in &times[1..] {
        worst = worst.max((functional_k(field, t)? - k0).abs() / scale);
    }
    Ok(worst)
}

pub fn check_delta_k_conserved(field: &EnsembleField, tol: f64, scenario: &str) -> ReportEntry {
    match delta_k_drift(field) {
        Ok(r) => ReportEntry::new(Check::DeltaKConserved, scenario, r, tol).with_detail(format!(
            "{} nodes, {} times",
            field.len(),
            field.times().len()
        )),
        Err(e) => ReportEntry::failed(Check::DeltaKConserved, scenario, tol, &e),
    }
}

/// Worst per-node `Ĥ` drift.
pub fn check_ensemble_hat_h(field: &EnsembleField, samples: usize, tol: f64, scenario: &str) -> ReportEntry {
    let mut worst = 0.0f64;
    for k in 0..field.len() {
        match hat_h_drift(field.node(k), samples) {
            Ok((_, r)) => worst = worst.max(r),
            Err(e) => return ReportEntry::failed(Check::EnsembleHatH, scenario, tol, &e.at_node(k)),
        }
    }
    ReportEntry::new(Check::EnsembleHatH, scenario, worst, tol)
}

/// Hamilton residual over the field's time grid, skipping node/time pairs
/// next to turning points.
pub fn check_hamilton(field: &EnsembleField, tol: f64, scenario: &str, exec: Execution) -> ReportEntry {
    let mut worst = 0.0f64;
    let mut excluded = 0;
    let mut total = 0;
    for &t in field.times() {
        match hamilton_residual(field, t, exec) {
            Ok(r) => {
                worst = worst.max(r.max());
                excluded += r.excluded();
                total += r.per_node.len();
            }
            Err(e) => return ReportEntry::failed(Check::HamiltonResidual, scenario, tol, &e),
        }
    }
    ReportEntry::new(Check::HamiltonResidual, scenario, worst, tol).with_detail(format!(
        "{excluded} of {total} node-times next to turning points excluded"
    ))
}

pub fn check_euler_lagrange(field: &EnsembleField, samples: usize, tol: f64, scenario: &str) -> ReportEntry {
    match action_and_el_residual(field, field.times()[0], field.t_end(), samples) {
        Ok(r) => ReportEntry::new(Check::EulerLagrange, scenario, r.el_residual, tol)
            .with_detail(format!("S = {:.16e}", r.action)),
        Err(e) => ReportEntry::failed(Check::EulerLagrange, scenario, tol, &e),
    }
}

/// `max |{q_i(a_k), π_j(a_m)} - δ_ij δ_km / w_k|`, together with
/// `{q, q}` and `{π, π}` (which must vanish), over every pair of slots on the
/// same or adjacent nodes (pairs further apart involve no new terms).
pub fn canonical_bracket_residual(snap: &Snapshot, exec: Execution) -> Result<f64> {
    let slots: Vec<Slot> = snap.slots().collect();
    let rows = map_indexed(slots.len(), exec, |a| -> Result<f64> {
        let mut worst = 0.0f64;
        let sa = slots[a];
        for &sb in slots.iter().filter(|sb| sb.node.abs_diff(sa.node) <= 1) {
            let value = poisson_bracket(&Evaluation(sa), &Evaluation(sb), snap, Execution::Sequential)?;
            let expected = match (sa.field, sb.field) {
                (super::FieldKind::Q, super::FieldKind::Pi) if sa.node == sb.node && sa.comp == sb.comp => {
                    1.0 / snap.weight(sa.node)
                }
                (super::FieldKind::Pi, super::FieldKind::Q) if sa.node == sb.node && sa.comp == sb.comp => {
                    -1.0 / snap.weight(sa.node)
                }
                _ => 0.0,
            };
            worst = worst.max((value - expected).abs());
        }
        Ok(worst)
    });
    rows.into_iter().try_fold(0.0f64, |acc, r| Ok(acc.max(r?)))
}

pub fn check_bracket_canonical(field: &EnsembleField, tol: f64, scenario: &str, exec: Execution) -> ReportEntry {
    let result = interior_snapshot(field).and_then(|s| canonical_bracket_residual(&s, exec).map(|r| (r, s.t())));
    match result {
        Ok((r, t)) => ReportEntry::new(Check::BracketCanonical, scenario, r, tol).with_detail(format!("t = {t:e}")),
        Err(e) => ReportEntry::failed(Check::BracketCanonical, scenario, tol, &e),
    }
}

/// `max |{F, G} + {G, F}|` over every pair of `functionals` (including each
/// functional with itself), and `|{K̂, K̂}|`.
pub fn antisymmetry_residual(snap: &Snapshot, functionals: &[QuadraticFunctional], exec: Execution) -> Result<f64> {
    let k_hat = poisson_bracket(&KHat, &KHat, snap, exec)?.abs();
    let rows = map_indexed(functionals.len(), exec, |i| -> Result<f64> {
        let mut worst = 0.0f64;
        for g in &functionals[i..] {
            let fg = poisson_bracket(&functionals[i], g, snap, Execution::Sequential)?;
            let gf = poisson_bracket(g, &functionals[i], snap, Execution::Sequential)?;
            worst = worst.max((fg + gf).abs());
        }
        Ok(worst)
    });
    rows.into_iter().try_fold(k_hat, |acc, r| Ok(acc.max(r?)))
}

pub fn check_bracket_antisymmetry(
    field: &EnsembleField,
    functionals: &[QuadraticFunctional],
    tol: f64,
    scenario: &str,
    exec: Execution,
) -> ReportEntry {
    let result =
        interior_snapshot(field).and_then(|s| antisymmetry_residual(&s, functionals, exec).map(|r| (r, s.t())));
    match result {
        Ok((r, t)) => ReportEntry::new(Check::BracketAntisymmetry, scenario, r, tol)
            .with_detail(format!("{} functionals, all pairs, t = {t:e}", functionals.len())),
        Err(e) => ReportEntry::failed(Check::BracketAntisymmetry, scenario, tol, &e),
    }
}
