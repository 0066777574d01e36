//! Scenario files. The format is TOML; see `scenarios/` for examples.
//!
//! ```toml
//! name = "damped1dof"
//! t_end = 60.0
//!
//! [system]
//! n = 1
//! c = [0.2]          # row-major n×n, flat or as a list of rows
//! k = [1.0]
//!
//! [initial]          # or [[initial]] for several initial conditions
//! q = [1.0]
//! p = [0.0]
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use dissipham::ensemble::{DomainSpec, EnsembleOptions};
use dissipham::integrate::DampedOptions;
use dissipham::verify::Check;
use dissipham::{DampedSystem, InitialCondition};
use nalgebra::DMatrix;
use serde::Deserialize;

/// A validation failure with the path of the offending field.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    name: String,
    t_end: f64,
    system: RawSystem,
    initial: OneOrMany<RawInitial>,
    #[serde(default)]
    integrator: RawIntegrator,
    #[serde(default)]
    verify: RawVerify,
    #[serde(default)]
    tolerances: BTreeMap<String, f64>,
    domain: Option<RawDomain>,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawMatrix {
    Flat(Vec<f64>),
    Rows(Vec<Vec<f64>>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    n: usize,
    c: RawMatrix,
    k: RawMatrix,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    q: Vec<f64>,
    p: Vec<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIntegrator {
    rtol: Option<f64>,
    atol: Option<f64>,
    steps_per_period: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVerify {
    checks: Option<Vec<String>>,
    samples: Option<usize>,
    verlet_step: Option<f64>,
    volume_t_end: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
    nodes: Vec<usize>,
    t_end: Option<f64>,
    samples: Option<usize>,
    functionals: Option<usize>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
}

/// Ensemble part of a scenario.
#[derive(Debug, Clone)]
pub struct DomainConfig {
    pub spec: DomainSpec,
    pub t_end: f64,
    pub samples: usize,
    /// Number of random quadratic functionals for the antisymmetry check.
    pub functionals: usize,
    pub seed: u64,
}

/// A validated scenario.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub name: String,
    pub system: DampedSystem,
    pub initial: Vec<InitialCondition>,
    pub t_end: f64,
    pub integrator: DampedOptions,
    pub checks: Vec<Check>,
    pub tolerances: BTreeMap<Check, f64>,
    /// Uniform sample count for time-sampled checks.
    pub samples: usize,
    pub verlet_step: f64,
    pub volume_t_end: f64,
    pub domain: Option<DomainConfig>,
    pub output_dir: Option<PathBuf>,
}

pub fn default_tolerance(check: Check) -> f64 {
    match check {
        Check::GradientMatch => 1e-8,
        Check::PhaseCoincidence => 1e-6,
        Check::GradientPhaseConsistency => 0.0,
        Check::HatHConstancy => 1e-8,
        Check::EnergyBalance => 1e-9,
        Check::VolumeContraction => 1e-7,
        Check::ConservativeVolume => 1e-6,
        Check::EnsembleHatH => 1e-8,
        Check::DeltaKConserved => 1e-8,
        Check::BracketCanonical => 1e-9,
        Check::BracketAntisymmetry => 1e-12,
        Check::HamiltonResidual => 1e-5,
        Check::EulerLagrange => 1e-6,
    }
}

pub fn load(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new(path.display().to_string(), format!("cannot read: {e}")))?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let at = match e.span() {
            Some(span) => {
                let line = text[..span.start].matches('\n').count() + 1;
                format!("line {line}")
            }
            None => "config".to_string(),
        };
        ConfigError::new(at, e.message().trim_end())
    })?;
    raw.validate()
}

fn positive(path: &str, x: f64) -> Result<f64, ConfigError> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(ConfigError::new(path, format!("must be positive and finite (got {x})")))
    }
}

fn matrix(path: &str, raw: &RawMatrix, n: usize) -> Result<DMatrix<f64>, ConfigError> {
    let flat = match raw {
        RawMatrix::Flat(v) => {
            if v.len() != n * n {
                return Err(ConfigError::new(
                    path,
                    format!("expected {} entries (n = {n}, row-major), found {}", n * n, v.len()),
                ));
            }
            v.clone()
        }
        RawMatrix::Rows(rows) => {
            if rows.len() != n {
                return Err(ConfigError::new(
                    path,
                    format!("expected {n} rows, found {}", rows.len()),
                ));
            }
            for (r, row) in rows.iter().enumerate() {
                if row.len() != n {
                    return Err(ConfigError::new(
                        format!("{path}[{r}]"),
                        format!("row has {} entries, expected {n}", row.len()),
                    ));
                }
            }
            rows.concat()
        }
    };
    if let Some(j) = flat.iter().position(|x| !x.is_finite()) {
        return Err(ConfigError::new(path, format!("entry {j} is not finite")));
    }
    Ok(DMatrix::from_row_slice(n, n, &flat))
}

pub fn parse_check(path: &str, id: &str) -> Result<Check, ConfigError> {
    id.trim().parse().map_err(|_| {
        let known: Vec<&str> = Check::ALL.iter().map(|c| c.id()).collect();
        ConfigError::new(path, format!("unknown check '{id}' (known: {})", known.join(", ")))
    })
}

impl RawConfig {
    fn validate(self) -> Result<ScenarioConfig, ConfigError> {
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            return Err(ConfigError::new("name", "must be nonempty and use only [A-Za-z0-9_-]"));
        }
        let t_end = positive("t_end", self.t_end)?;

        let n = self.system.n;
        if n == 0 {
            return Err(ConfigError::new("system.n", "must be at least 1"));
        }
        let c = matrix("system.c", &self.system.c, n)?;
        let k = matrix("system.k", &self.system.k, n)?;
        let system = DampedSystem::physical(c, k).map_err(|e| ConfigError::new("system.k", e.to_string()))?;

        let initial = match self.initial {
            OneOrMany::One(a) => vec![a],
            OneOrMany::Many(v) => v,
        };
        if initial.is_empty() {
            return Err(ConfigError::new(
                "initial",
                "at least one initial condition is required",
            ));
        }
        let initial = initial
            .iter()
            .enumerate()
            .map(|(j, a)| {
                for (field, v) in [("q", &a.q), ("p", &a.p)] {
                    if v.len() != n {
                        return Err(ConfigError::new(
                            format!("initial[{j}].{field}"),
                            format!("expected {n} entries, found {}", v.len()),
                        ));
                    }
                }
                InitialCondition::from_parts(&a.q, &a.p)
                    .map_err(|e| ConfigError::new(format!("initial[{j}]"), e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;

        let mut integrator = DampedOptions::default();
        if let Some(x) = self.integrator.rtol {
            integrator.rtol = positive("integrator.rtol", x)?;
        }
        if let Some(x) = self.integrator.atol {
            integrator.atol = positive("integrator.atol", x)?;
        }
        if let Some(x) = self.integrator.steps_per_period {
            integrator.steps_per_period = positive("integrator.steps_per_period", x)?;
        }

        let domain = self.domain.map(|d| -> Result<DomainConfig, ConfigError> {
            if d.lower.len() != 2 * n {
                return Err(ConfigError::new(
                    "domain.lower",
                    format!("expected 2n = {} entries, found {}", 2 * n, d.lower.len()),
                ));
            }
            let spec =
                DomainSpec::new(d.lower, d.upper, d.nodes).map_err(|e| ConfigError::new("domain", e.to_string()))?;
            let count = spec.node_count();
            if count > dissipham::ensemble::MAX_NODES {
                return Err(ConfigError::new(
                    "domain.nodes",
                    format!("{count} nodes exceed the limit of {}", dissipham::ensemble::MAX_NODES),
                ));
            }
            let samples = d.samples.unwrap_or(EnsembleOptions::default().samples);
            if samples < 2 {
                return Err(ConfigError::new("domain.samples", "must be at least 2"));
            }
            Ok(DomainConfig {
                spec,
                t_end: match d.t_end {
                    Some(x) => positive("domain.t_end", x)?,
                    None => t_end,
                },
                samples,
                functionals: d.functionals.unwrap_or(100),
                seed: d.seed.unwrap_or(0),
            })
        });
        let domain = domain.transpose()?;

        let checks = match &self.verify.checks {
            Some(ids) => ids
                .iter()
                .enumerate()
                .map(|(j, id)| parse_check(&format!("verify.checks[{j}]"), id))
                .collect::<Result<Vec<_>, _>>()?,
            None => Check::ALL
                .into_iter()
                .filter(|c| domain.is_some() || !c.is_ensemble())
                .collect(),
        };
        if domain.is_none() {
            if let Some(c) = checks.iter().find(|c| c.is_ensemble()) {
                return Err(ConfigError::new(
                    "verify.checks",
                    format!("check '{c}' needs a [domain] section"),
                ));
            }
        }

        let mut tolerances: BTreeMap<Check, f64> = Check::ALL.into_iter().map(|c| (c, default_tolerance(c))).collect();
        for (id, value) in &self.tolerances {
            let path = format!("tolerances.{id}");
            let check = parse_check(&path, id)?;
            if !(*value >= 0.0 && value.is_finite()) {
                return Err(ConfigError::new(
                    path,
                    format!("must be non-negative and finite (got {value})"),
                ));
            }
            tolerances.insert(check, *value);
        }

        let samples = self.verify.samples.unwrap_or(6001);
        if samples < 2 {
            return Err(ConfigError::new("verify.samples", "must be at least 2"));
        }
        let verlet_step = match self.verify.verlet_step {
            Some(h) => positive("verify.verlet_step", h)?,
            None => dissipham::integrate::default_verlet_step(&system),
        };
        let volume_t_end = match self.verify.volume_t_end {
            Some(x) => positive("verify.volume_t_end", x)?,
            None => t_end,
        };

        Ok(ScenarioConfig {
            name: self.name,
            system,
            initial,
            t_end,
            integrator,
            checks,
            tolerances,
            samples,
            verlet_step,
            volume_t_end,
            domain,
            output_dir: self.output.dir,
        })
    }
}

impl ScenarioConfig {
    /// Scenario id of initial condition `j`: the name alone when there is
    /// only one.
    pub fn scenario_id(&self, j: usize) -> String {
        if self.initial.len() == 1 {
            self.name.clone()
        } else {
            format!("{}_{j}", self.name)
        }
    }

    pub fn ensemble_id(&self) -> String {
        format!("{}_ensemble", self.name)
    }

    pub fn tolerance(&self, check: Check) -> f64 {
        self.tolerances[&check]
    }
}
