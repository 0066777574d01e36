//! Pipelines behind the subcommands. Everything here is computed in memory;
//! the caller writes the returned files in order.

use std::path::PathBuf;
use std::sync::Arc;

use dissipham::ensemble::{
    build_grid, check_bracket_antisymmetry, check_bracket_canonical, check_delta_k_conserved, check_ensemble_hat_h,
    check_euler_lagrange, check_hamilton, evolve_ensemble, functional_k, hamilton_residual, EnsembleField,
    EnsembleOptions, Snapshot,
};
use dissipham::integrate::integrate_damped_with;
use dissipham::par::map_indexed;
use dissipham::substitute::{Motion, TableOptions};
use dissipham::verify::{
    check_conservative_volume, check_energy_balance, check_gradient_match, check_gradient_phase_consistency,
    check_hat_h_constancy, check_phase_coincidence, check_volume_contraction, timed, Check, ReportEntry,
    VerificationReport,
};
use dissipham::{Error, Execution, SubstitutingSystem};

use crate::config::ScenarioConfig;
use crate::functionals::random_quadratics;
use crate::output::{fmt_f64, report_json, Csv};

/// What a subcommand produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Simulate,
    Substitute,
    Verify,
    Ensemble,
    All,
}

impl Stage {
    fn writes_trajectories(self) -> bool {
        matches!(self, Stage::Simulate | Stage::All)
    }

    fn writes_segments(self) -> bool {
        matches!(self, Stage::Substitute | Stage::All)
    }

    fn runs_ensemble(self) -> bool {
        matches!(self, Stage::Verify | Stage::Ensemble | Stage::All)
    }

    fn includes(self, check: Check) -> bool {
        match self {
            Stage::Simulate | Stage::Substitute => false,
            Stage::Verify | Stage::All => true,
            Stage::Ensemble => check.is_ensemble(),
        }
    }
}

/// Settings the command line can override.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub checks: Option<Vec<Check>>,
    pub tolerances: Vec<(Check, f64)>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default)]
pub struct RunOutput {
    /// Relative file name and contents, in write order.
    pub files: Vec<(PathBuf, String)>,
    pub report: Option<VerificationReport>,
    /// Integration or construction failures; the report, if any, is partial.
    pub failures: Vec<String>,
}

impl RunOutput {
    /// 0 when every check passed, 1 when one failed, 3 when a trajectory or
    /// ensemble could not be computed.
    pub fn exit_code(&self) -> i32 {
        if !self.failures.is_empty() {
            3
        } else if self.report.as_ref().is_some_and(|r| !r.all_passed()) {
            1
        } else {
            0
        }
    }
}

pub fn apply_overrides(cfg: &mut ScenarioConfig, o: &Overrides) {
    if let Some(checks) = &o.checks {
        cfg.checks = checks.clone();
    }
    for &(check, tol) in &o.tolerances {
        cfg.tolerances.insert(check, tol);
    }
    if let (Some(seed), Some(d)) = (o.seed, cfg.domain.as_mut()) {
        d.seed = seed;
    }
}

fn execution() -> Execution {
    if Execution::parallel_available() {
        Execution::Parallel
    } else {
        Execution::Sequential
    }
}

fn substitute(cfg: &ScenarioConfig, j: usize) -> Result<SubstitutingSystem, Error> {
    let tr = integrate_damped_with(&cfg.system, &cfg.initial[j], cfg.t_end, &cfg.integrator)?;
    SubstitutingSystem::build(
        Arc::new(tr),
        &cfg.system,
        &TableOptions::default(),
        Execution::Sequential,
    )
}

/// `t, q_1..q_n, p_1..p_n, H, W, hatH` at every trajectory node.
pub fn trajectory_csv(sub: &SubstitutingSystem) -> Result<String, Error> {
    let n = sub.dof();
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("q_{i}")));
    header.extend((1..=n).map(|i| format!("p_{i}")));
    header.extend(["H", "W", "hatH"].map(String::from));
    let mut csv = Csv::new(&header);
    let gamma = sub.trajectory();
    let mut row = Vec::with_capacity(2 * n + 4);
    for (j, &t) in gamma.times().iter().enumerate() {
        row.clear();
        row.push(t);
        row.extend_from_slice(gamma.node_slice(j));
        row.push(sub.mechanical_energy(t)?);
        row.push(sub.work(t)?);
        row.push(sub.hat_h(t)?);
        csv.row(&row);
    }
    Ok(csv.as_str().to_string())
}

/// One row per monotone segment: `coord, segment, motion, t_start, t_end,
/// q_start, q_end, W_start`. Coordinates are numbered from 1.
pub fn segments_csv(sub: &SubstitutingSystem) -> String {
    let mut csv = Csv::new(&[
        "coord", "segment", "motion", "t_start", "t_end", "q_start", "q_end", "W_start",
    ]);
    for i in 0..sub.dof() {
        for (s, seg) in sub.segments(i).iter().enumerate() {
            let motion = match seg.motion() {
                Motion::Increasing => "increasing",
                Motion::Decreasing => "decreasing",
                Motion::Frozen => "frozen",
            };
            csv.mixed_row(
                &[(i + 1).to_string(), s.to_string(), motion.to_string()],
                &[seg.t_start(), seg.t_end(), seg.q_start(), seg.q_end(), seg.offset()],
            );
        }
    }
    csv.as_str().to_string()
}

/// `t, W, W_1..W_n` at every trajectory node.
pub fn work_csv(sub: &SubstitutingSystem) -> Result<String, Error> {
    let n = sub.dof();
    let mut header = vec!["t".to_string(), "W".to_string()];
    header.extend((1..=n).map(|i| format!("W_{i}")));
    let mut csv = Csv::new(&header);
    let mut row = Vec::with_capacity(n + 2);
    for &t in sub.trajectory().times() {
        let parts = sub.work_components(t)?;
        row.clear();
        row.push(t);
        row.push(parts.iter().sum());
        row.extend_from_slice(&parts);
        csv.row(&row);
    }
    Ok(csv.as_str().to_string())
}

fn single_check(cfg: &ScenarioConfig, j: usize, sub: &SubstitutingSystem, check: Check) -> ReportEntry {
    let id = cfg.scenario_id(j);
    let tol = cfg.tolerance(check);
    let h = cfg.verlet_step;
    let times = || sub.trajectory().uniform_times(cfg.samples);
    match check {
        Check::GradientMatch => check_gradient_match(sub, &times(), tol, &id),
        Check::PhaseCoincidence => check_phase_coincidence(sub, h, tol, &id),
        Check::GradientPhaseConsistency => check_gradient_phase_consistency(
            sub,
            &times(),
            cfg.tolerance(Check::GradientMatch),
            h,
            cfg.tolerance(Check::PhaseCoincidence),
            &id,
        ),
        Check::HatHConstancy => check_hat_h_constancy(sub, cfg.samples, tol, &id),
        Check::EnergyBalance => check_energy_balance(sub, cfg.samples, tol, &id),
        Check::VolumeContraction => check_volume_contraction(
            &cfg.system,
            &cfg.initial[j],
            cfg.volume_t_end,
            cfg.integrator.rtol,
            tol,
            &id,
        ),
        Check::ConservativeVolume => {
            let mut worst: Option<ReportEntry> = None;
            for w in 0..sub.windows().len() {
                let e = check_conservative_volume(sub, w, h, tol, &id);
                if worst
                    .as_ref()
                    .is_none_or(|b| e.residual > b.residual || e.residual.is_nan())
                {
                    worst = Some(e);
                }
            }
            worst.unwrap_or_else(|| ReportEntry::new(check, &id, 0.0, tol))
        }
        _ => unreachable!("ensemble check {check} on a single trajectory"),
    }
}

fn ensemble_check(cfg: &ScenarioConfig, field: &EnsembleField, check: Check, exec: Execution) -> ReportEntry {
    let id = cfg.ensemble_id();
    let tol = cfg.tolerance(check);
    let d = cfg.domain.as_ref().expect("ensemble checks need a domain");
    match check {
        Check::EnsembleHatH => check_ensemble_hat_h(field, cfg.samples, tol, &id),
        Check::DeltaKConserved => check_delta_k_conserved(field, tol, &id),
        Check::BracketCanonical => check_bracket_canonical(field, tol, &id, exec),
        Check::BracketAntisymmetry => match Snapshot::new(field, field.times()[0]) {
            Ok(snap) => {
                let fs = random_quadratics(&snap, d.functionals, d.seed);
                check_bracket_antisymmetry(field, &fs, tol, &id, exec)
            }
            Err(e) => ReportEntry::failed(check, &id, tol, &e),
        },
        Check::HamiltonResidual => check_hamilton(field, tol, &id, exec),
        Check::EulerLagrange => check_euler_lagrange(field, cfg.samples, tol, &id),
        _ => unreachable!("single-trajectory check {check} on an ensemble"),
    }
}

/// `t, K, drift` on the field's time grid, with drift relative to `K(0)`.
pub fn khat_csv(field: &EnsembleField) -> Result<String, Error> {
    let mut csv = Csv::new(&["t", "K", "drift"]);
    let k0 = functional_k(field, field.times()[0])?;
    let scale = k0.abs().max(1.0);
    for &t in field.times() {
        let k = functional_k(field, t)?;
        csv.row(&[t, k, (k - k0) / scale]);
    }
    Ok(csv.as_str().to_string())
}

/// `t, q_residual, pi_residual, excluded` of the functional Hamilton
/// equations on the field's time grid.
pub fn hamilton_csv(field: &EnsembleField, exec: Execution) -> Result<String, Error> {
    let mut csv = Csv::new(&["t", "q_residual", "pi_residual", "excluded"]);
    for &t in field.times() {
        let r = hamilton_residual(field, t, exec)?;
        let cells = [t, r.q_residual, r.pi_residual].map(fmt_f64);
        csv.mixed_row(
            &[
                cells[0].clone(),
                cells[1].clone(),
                cells[2].clone(),
                r.excluded().to_string(),
            ],
            &[],
        );
    }
    Ok(csv.as_str().to_string())
}

/// Runs `stage` on a validated scenario.
pub fn run(cfg: &ScenarioConfig, stage: Stage) -> RunOutput {
    let exec = execution();
    let mut out = RunOutput::default();
    let mut report = VerificationReport::default();

    let single: Vec<Check> = cfg
        .checks
        .iter()
        .copied()
        .filter(|c| !c.is_ensemble() && stage.includes(*c))
        .collect();
    let needs_single = stage.writes_trajectories() || stage.writes_segments() || !single.is_empty();

    if needs_single {
        let per_scenario = map_indexed(cfg.initial.len(), exec, |j| {
            let sub = substitute(cfg, j)?;
            let mut files = Vec::new();
            let id = cfg.scenario_id(j);
            if stage.writes_trajectories() {
                files.push((PathBuf::from(format!("{id}_trajectory.csv")), trajectory_csv(&sub)?));
            }
            if stage.writes_segments() {
                files.push((PathBuf::from(format!("{id}_segments.csv")), segments_csv(&sub)));
                files.push((PathBuf::from(format!("{id}_work.csv")), work_csv(&sub)?));
            }
            let entries = map_indexed(single.len(), exec, |c| timed(|| single_check(cfg, j, &sub, single[c])));
            Ok::<_, Error>((files, entries))
        });
        for (j, result) in per_scenario.into_iter().enumerate() {
            match result {
                Ok((files, entries)) => {
                    out.files.extend(files);
                    report.entries.extend(entries);
                }
                Err(e) => {
                    let id = cfg.scenario_id(j);
                    out.failures.push(format!("{id}: {e}"));
                    for &c in &single {
                        report.push(ReportEntry::failed(c, &id, cfg.tolerance(c), &e));
                    }
                }
            }
        }
    }

    let ensemble: Vec<Check> = cfg
        .checks
        .iter()
        .copied()
        .filter(|c| c.is_ensemble() && stage.includes(*c))
        .collect();
    if let (Some(d), true) = (&cfg.domain, stage.runs_ensemble()) {
        let id = cfg.ensemble_id();
        let opts = EnsembleOptions {
            integrator: cfg.integrator,
            samples: d.samples,
            execution: exec,
            ..EnsembleOptions::default()
        };
        let field = build_grid(&d.spec).and_then(|grid| evolve_ensemble(&cfg.system, &grid, d.t_end, &opts));
        match field {
            Ok(field) => {
                if matches!(stage, Stage::Ensemble | Stage::All) {
                    match khat_csv(&field).and_then(|k| Ok((k, hamilton_csv(&field, exec)?))) {
                        Ok((k, h)) => {
                            out.files.push((PathBuf::from(format!("{id}_khat.csv")), k));
                            out.files.push((PathBuf::from(format!("{id}_hamilton.csv")), h));
                        }
                        Err(e) => out.failures.push(format!("{id}: {e}")),
                    }
                }
                report.entries.extend(map_indexed(ensemble.len(), exec, |c| {
                    timed(|| ensemble_check(cfg, &field, ensemble[c], exec))
                }));
            }
            Err(e) => {
                out.failures.push(format!("{id}: {e}"));
                for &c in &ensemble {
                    report.push(ReportEntry::failed(c, &id, cfg.tolerance(c), &e));
                }
            }
        }
    }

    if matches!(stage, Stage::Verify | Stage::Ensemble | Stage::All) {
        report.sort();
        out.files.push((PathBuf::from("report.json"), report_json(&report)));
        out.files.push((PathBuf::from("report.txt"), report.to_text()));
        out.report = Some(report);
    }
    out
}
