//! Numerical checks of the shared-phase-curve construction: the damping
//! force matches the tabulated gradient, conservative re-integration follows
//! the damped curve, `Ĥ` stays constant, and phase volume contracts for the
//! damped flow but not for the substituting one.

use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::{integrate_variational, verlet_tangent_determinants, verlet_walk};
use crate::model::{DampedSystem, InitialCondition};
use crate::substitute::SubstitutingSystem;

/// Every check the suite knows about, in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    GradientMatch,
    PhaseCoincidence,
    GradientPhaseConsistency,
    HatHConstancy,
    EnergyBalance,
    VolumeContraction,
    ConservativeVolume,
    EnsembleHatH,
    DeltaKConserved,
    BracketCanonical,
    BracketAntisymmetry,
    HamiltonResidual,
    EulerLagrange,
}

impl Check {
    pub const ALL: [Check; 13] = [
        Check::GradientMatch,
        Check::PhaseCoincidence,
        Check::GradientPhaseConsistency,
        Check::HatHConstancy,
        Check::EnergyBalance,
        Check::VolumeContraction,
        Check::ConservativeVolume,
        Check::EnsembleHatH,
        Check::DeltaKConserved,
        Check::BracketCanonical,
        Check::BracketAntisymmetry,
        Check::HamiltonResidual,
        Check::EulerLagrange,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Check::GradientMatch => "gradient_match",
            Check::PhaseCoincidence => "phase_coincidence",
            Check::GradientPhaseConsistency => "gradient_phase_consistency",
            Check::HatHConstancy => "hat_h_constancy",
            Check::EnergyBalance => "energy_balance",
            Check::VolumeContraction => "volume_contraction",
            Check::ConservativeVolume => "conservative_volume",
            Check::EnsembleHatH => "ensemble_hat_h",
            Check::DeltaKConserved => "delta_k_conserved",
            Check::BracketCanonical => "bracket_canonical",
            Check::BracketAntisymmetry => "bracket_antisymmetry",
            Check::HamiltonResidual => "hamilton_residual",
            Check::EulerLagrange => "euler_lagrange",
        }
    }

    /// Whether the check needs an ensemble domain.
    pub fn is_ensemble(self) -> bool {
        matches!(
            self,
            Check::EnsembleHatH
                | Check::DeltaKConserved
                | Check::BracketCanonical
                | Check::BracketAntisymmetry
                | Check::HamiltonResidual
                | Check::EulerLagrange
        )
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Check {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Check::ALL
            .into_iter()
            .find(|c| c.id() == s)
            .ok_or_else(|| Error::config(format!("unknown check `{s}`")))
    }
}

/// One row of a [`VerificationReport`]. `passed` is always
/// `residual <= tolerance`; a non-finite residual fails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub check: Check,
    pub scenario: String,
    pub residual: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// Wall-clock seconds. Not serialized: reports must be reproducible.
    #[serde(skip)]
    pub runtime: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl ReportEntry {
    pub fn new(check: Check, scenario: &str, residual: f64, tolerance: f64) -> Self {
        Self {
            check,
            scenario: scenario.to_string(),
            residual,
            tolerance,
            passed: residual <= tolerance,
            runtime: 0.0,
            detail: None,
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }

    /// A check that could not be carried out, e.g. because re-integration
    /// left the tabulated force domain.
    pub fn failed(check: Check, scenario: &str, tolerance: f64, err: &Error) -> Self {
        Self::new(check, scenario, f64::INFINITY, tolerance).with_detail(err.to_string())
    }
}

/// Runs `f`, storing its wall time in the returned entry.
pub fn timed(f: impl FnOnce() -> ReportEntry) -> ReportEntry {
    let start = Instant::now();
    let mut e = f();
    e.runtime = start.elapsed().as_secs_f64();
    e
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VerificationReport {
    pub entries: Vec<ReportEntry>,
}

impl VerificationReport {
    pub fn push(&mut self, e: ReportEntry) {
        self.entries.push(e);
    }

    pub fn extend(&mut self, other: VerificationReport) {
        self.entries.extend(other.entries);
    }

    /// Orders entries by (check, scenario); stable, so entries with equal keys
    /// keep their insertion order.
    pub fn sort(&mut self) {
        self.entries
            .sort_by(|a, b| a.check.cmp(&b.check).then_with(|| a.scenario.cmp(&b.scenario)));
    }

    pub fn all_passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ReportEntry> {
        self.entries.iter().filter(|e| !e.passed)
    }

    /// Fixed-width plain-text table (no timings).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<28} {:<24} {:>24} {:>24}  result",
            "check", "scenario", "residual", "tolerance"
        );
        for e in &self.entries {
            let _ = write!(
                out,
                "{:<28} {:<24} {:>24.16e} {:>24.16e}  {}",
                e.check.id(),
                e.scenario,
                e.residual,
                e.tolerance,
                if e.passed { "pass" } else { "FAIL" }
            );
            if let Some(d) = &e.detail {
                let _ = write!(out, "  ({d})");
            }
            out.push('\n');
        }
        out
    }
}

const OVERSHOOT_SLACK: f64 = 1e-12;

/// `max |G_i(q_i) - (C q')_i|` over `times`, with `G` taken from the segment
/// active at each time (a turning point belongs to the following segment).
/// The momentum half of the identity, `∂Ĥ/∂p = ∂H/∂p = p`, holds by
/// construction and contributes zero.
pub fn gradient_residual(sub: &SubstitutingSystem, times: &[f64]) -> Result<f64> {
    let n = sub.dof();
    let sys = sub.system();
    let mut buf = vec![0.0; 2 * n];
    let mut worst = 0.0f64;
    for &t in times {
        sub.trajectory().evaluate_into(t, &mut buf)?;
        let sel = sub.selector_at(t)?;
        // γ's own state may overshoot a turning point by roundoff
        let q: Vec<f64> = (0..n)
            .map(|i| {
                let (lo, hi) = sub.segments(i)[sel[i]].domain();
                let slack = OVERSHOOT_SLACK * buf[i].abs().max(1.0);
                if buf[i] >= lo - slack && buf[i] <= hi + slack {
                    buf[i].clamp(lo, hi)
                } else {
                    buf[i]
                }
            })
            .collect();
        let g = sub.g_vector(&sel, &q)?;
        for i in 0..n {
            worst = worst.max((g[i] - sys.damping_component(i, &buf[n..])).abs());
        }
    }
    Ok(worst)
}

pub fn check_gradient_match(sub: &SubstitutingSystem, times: &[f64], tol: f64, scenario: &str) -> ReportEntry {
    match gradient_residual(sub, times) {
        Ok(r) => ReportEntry::new(Check::GradientMatch, scenario, r, tol)
            .with_detail(format!("{} sample times", times.len())),
        Err(e) => ReportEntry::failed(Check::GradientMatch, scenario, tol, &e),
    }
}

/// Outcome of re-integrating one window with the conservative field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coincidence {
    pub window: usize,
    /// Max phase-space distance between the Verlet nodes and γ.
    pub residual: f64,
    /// Verlet step actually used.
    pub step: f64,
    /// Distance before the window end at which integration stopped.
    pub stop_margin: f64,
}

/// Integration span inside a window: stop `10 h` short of its end, or at
/// its midpoint when the window is shorter than `20 h`.
fn window_span(t_start: f64, t_end: f64, h: f64) -> (f64, f64) {
    let len = t_end - t_start;
    let margin = (10.0 * h).min(0.5 * len);
    (len - margin, margin)
}

/// Re-integrates the conservative field of window `w` from γ's state at the
/// window start and measures the distance to γ's dense output.
pub fn phase_coincidence(sub: &SubstitutingSystem, w: usize, h: f64) -> Result<Coincidence> {
    let win = sub
        .windows()
        .get(w)
        .ok_or_else(|| Error::config(format!("window {w} out of range")))?;
    let n = sub.dof();
    let field = sub.force_field(&win.segments)?;
    let start = sub.trajectory().evaluate(win.t_start)?;
    let a = InitialCondition::from_parts(start.q.as_slice(), start.p.as_slice())?;
    let (duration, margin) = window_span(win.t_start, win.t_end, h);

    let gamma = sub.trajectory();
    let mut buf = vec![0.0; 2 * n];
    let mut worst = 0.0f64;
    let mut lookup: Result<()> = Ok(());
    let step = verlet_walk(&field, &a, win.t_start, duration, h, |t, q, p, _| {
        if let Err(e) = gamma.evaluate_into(t, &mut buf) {
            lookup = Err(e);
            return;
        }
        let d2: f64 = q.iter().chain(p).zip(&buf).map(|(x, y)| (x - y) * (x - y)).sum();
        worst = worst.max(d2.sqrt());
    })?;
    lookup?;
    Ok(Coincidence {
        window: w,
        residual: worst,
        step,
        stop_margin: margin,
    })
}

/// Phase coincidence over every window; the residual is the worst window.
pub fn check_phase_coincidence(sub: &SubstitutingSystem, h: f64, tol: f64, scenario: &str) -> ReportEntry {
    let mut worst: Option<Coincidence> = None;
    for w in 0..sub.windows().len() {
        match phase_coincidence(sub, w, h) {
            Ok(c) => {
                if worst.is_none_or(|b| c.residual > b.residual) {
                    worst = Some(c);
                }
            }
            Err(e) => {
                return ReportEntry::failed(Check::PhaseCoincidence, scenario, tol, &e)
                    .with_detail(format!("window {w}: {e}"));
            }
        }
    }
    match worst {
        Some(c) => ReportEntry::new(Check::PhaseCoincidence, scenario, c.residual, tol).with_detail(format!(
            "worst window {} of {}, h = {:e}, stopped {:e} before window end",
            c.window,
            sub.windows().len(),
            c.step,
            c.stop_margin
        )),
        None => ReportEntry::new(Check::PhaseCoincidence, scenario, 0.0, tol),
    }
}

/// The gradient and phase checks test one identity at two levels; on every
/// window they must agree on pass/fail. The residual counts disagreements.
pub fn check_gradient_phase_consistency(
    sub: &SubstitutingSystem,
    times: &[f64],
    gradient_tol: f64,
    h: f64,
    phase_tol: f64,
    scenario: &str,
) -> ReportEntry {
    let mut disagreements = Vec::new();
    for (w, win) in sub.windows().iter().enumerate() {
        let inside: Vec<f64> = times
            .iter()
            .copied()
            .filter(|&t| t >= win.t_start && t < win.t_end)
            .collect();
        let outcome = gradient_residual(sub, &inside).and_then(|g| Ok((g, phase_coincidence(sub, w, h)?.residual)));
        match outcome {
            Ok((g, p)) => {
                if (g <= gradient_tol) != (p <= phase_tol) {
                    disagreements.push(format!("window {w}: gradient {g:e}, phase {p:e}"));
                }
            }
            Err(e) => return ReportEntry::failed(Check::GradientPhaseConsistency, scenario, 0.0, &e),
        }
    }
    let e = ReportEntry::new(
        Check::GradientPhaseConsistency,
        scenario,
        disagreements.len() as f64,
        0.0,
    );
    if disagreements.is_empty() {
        e.with_detail(format!("{} windows agree", sub.windows().len()))
    } else {
        e.with_detail(format!("internal inconsistency: {}", disagreements.join("; ")))
    }
}

/// `max_t |Ĥ(t) - Ĥ(t0)|` over `samples` uniform times.
pub fn hat_h_drift(sub: &SubstitutingSystem, samples: usize) -> Result<(f64, f64)> {
    if samples < 2 {
        return Err(Error::config("need at least two samples"));
    }
    let times = sub.trajectory().uniform_times(samples);
    let h0 = sub.hat_h(times[0])?;
    let mut worst = 0.0f64;
    for &t in &times[1..] {
        worst = worst.max((sub.hat_h(t)? - h0).abs());
    }
    Ok((h0, worst))
}

pub fn check_hat_h_constancy(sub: &SubstitutingSystem, samples: usize, tol: f64, scenario: &str) -> ReportEntry {
    match hat_h_drift(sub, samples) {
        Ok((h0, r)) => ReportEntry::new(Check::HatHConstancy, scenario, r, tol)
            .with_detail(format!("Ĥ(0) = {h0:.16e}, {samples} samples")),
        Err(e) => ReportEntry::failed(Check::HatHConstancy, scenario, tol, &e),
    }
}

/// `max |W(t) - (H(0) - H(t))|` over every trajectory node and `samples`
/// uniform times in between.
pub fn energy_balance_residual(sub: &SubstitutingSystem, samples: usize) -> Result<f64> {
    let gamma = sub.trajectory();
    let h0 = sub.mechanical_energy(gamma.t0())?;
    let mut worst = 0.0f64;
    for &t in gamma.times().iter().chain(gamma.uniform_times(samples).iter()) {
        let r = sub.work(t)? - (h0 - sub.mechanical_energy(t)?);
        worst = worst.max(r.abs());
    }
    Ok(worst)
}

pub fn check_energy_balance(sub: &SubstitutingSystem, samples: usize, tol: f64, scenario: &str) -> ReportEntry {
    match energy_balance_residual(sub, samples) {
        Ok(r) => ReportEntry::new(Check::EnergyBalance, scenario, r, tol),
        Err(e) => ReportEntry::failed(Check::EnergyBalance, scenario, tol, &e),
    }
}

/// `max_t |det J(t) - e^{-tr(C) t}| / e^{-tr(C) t}` along the damped flow.
pub fn volume_contraction_residual(sys: &DampedSystem, a: &InitialCondition, t_end: f64, rtol: f64) -> Result<f64> {
    let trace = sys.damping().trace();
    let blocks = integrate_variational(sys, a, t_end, rtol)?;
    Ok(blocks.iter().fold(0.0f64, |acc, b| {
        let expected = (-trace * b.t).exp();
        acc.max((b.determinant() - expected).abs() / expected)
    }))
}

pub fn check_volume_contraction(
    sys: &DampedSystem,
    a: &InitialCondition,
    t_end: f64,
    rtol: f64,
    tol: f64,
    scenario: &str,
) -> ReportEntry {
    match volume_contraction_residual(sys, a, t_end, rtol) {
        Ok(r) => ReportEntry::new(Check::VolumeContraction, scenario, r, tol).with_detail(format!(
            "det J(t_end) expected {:.16e}",
            (-sys.damping().trace() * t_end).exp()
        )),
        Err(e) => ReportEntry::failed(Check::VolumeContraction, scenario, tol, &e),
    }
}

/// `max |det J - 1|` of the Verlet tangent map of the conservative field
/// over window `w`.
pub fn conservative_volume_residual(sub: &SubstitutingSystem, w: usize, h: f64) -> Result<f64> {
    let win = sub
        .windows()
        .get(w)
        .ok_or_else(|| Error::config(format!("window {w} out of range")))?;
    let field = sub.force_field(&win.segments)?;
    let start = sub.trajectory().evaluate(win.t_start)?;
    let a = InitialCondition::from_parts(start.q.as_slice(), start.p.as_slice())?;
    let (duration, _) = window_span(win.t_start, win.t_end, h);
    let dets = verlet_tangent_determinants(&field, &a, win.t_start, duration, h)?;
    Ok(dets.iter().fold(0.0f64, |acc, (_, d)| acc.max((d - 1.0).abs())))
}

pub fn check_conservative_volume(sub: &SubstitutingSystem, w: usize, h: f64, tol: f64, scenario: &str) -> ReportEntry {
    match conservative_volume_residual(sub, w, h) {
        Ok(r) => ReportEntry::new(Check::ConservativeVolume, scenario, r, tol).with_detail(format!("window {w}")),
        Err(e) => ReportEntry::failed(Check::ConservativeVolume, scenario, tol, &e),
    }
}
