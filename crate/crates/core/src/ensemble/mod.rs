//! Ensembles of initial conditions. Each node `a_k` of a quadrature grid over
//! a domain `D` of initial conditions is evolved on its own phase curve with
//! its own substituting system; integrals over `D` become weighted sums over
//! nodes. On top of that live functionals of the fields `q(a, t)`, `π(a, t)`,
//! their functional derivatives and the Poisson bracket.

mod dynamics;
mod functional;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::{integrate_damped_with, uniform_grid, DampedOptions};
use crate::model::{DampedSystem, InitialCondition};
use crate::par::{map_indexed, Execution};
use crate::substitute::{SubstitutingSystem, TableOptions};

pub use dynamics::{
    action_and_el_residual, antisymmetry_residual, canonical_bracket_residual, check_bracket_antisymmetry,
    check_bracket_canonical, check_delta_k_conserved, check_ensemble_hat_h, check_euler_lagrange, check_hamilton,
    delta_k_drift, hamilton_residual, interior_snapshot, stencil_fits, ActionReport, HamiltonResidual,
};
pub use functional::{
    functional_derivative, poisson_bracket, DiscreteFunctional, Evaluation, FieldKind, KHat, LinearCombination,
    QuadraticFunctional, Slot, Snapshot, FD_RELATIVE_STEP,
};

/// Largest grid the ensemble layer accepts.
pub const MAX_NODES: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureRule {
    /// Tensor-product midpoint rule: positive weights, no nodes on the
    /// boundary, second order.
    #[default]
    Midpoint,
}

/// Box of initial conditions: one interval per phase coordinate, `q` axes
/// first, then `p` axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    lower: Vec<f64>,
    upper: Vec<f64>,
    nodes: Vec<usize>,
    rule: QuadratureRule,
}

impl DomainSpec {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, nodes: Vec<usize>) -> Result<Self> {
        let m = lower.len();
        if m == 0 || !m.is_multiple_of(2) {
            return Err(Error::config(format!(
                "domain needs an even, nonzero number of axes (got {m})"
            )));
        }
        if upper.len() != m {
            return Err(Error::Dimension {
                what: "domain upper bounds",
                expected: m,
                found: upper.len(),
            });
        }
        if nodes.len() != m {
            return Err(Error::Dimension {
                what: "domain node counts",
                expected: m,
                found: nodes.len(),
            });
        }
        for axis in 0..m {
            let (lo, hi) = (lower[axis], upper[axis]);
            if !(lo.is_finite() && hi.is_finite()) {
                return Err(Error::config(format!("domain axis {axis} has a non-finite bound")));
            }
            if hi <= lo {
                return Err(Error::config(format!(
                    "domain axis {axis} is degenerate: [{lo}, {hi}] has zero volume"
                )));
            }
            if nodes[axis] == 0 {
                return Err(Error::config(format!("domain axis {axis} needs at least one node")));
            }
        }
        Ok(Self {
            lower,
            upper,
            nodes,
            rule: QuadratureRule::Midpoint,
        })
    }

    pub fn dof(&self) -> usize {
        self.lower.len() / 2
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn rule(&self) -> QuadratureRule {
        self.rule
    }

    pub fn volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(lo, hi)| hi - lo).product()
    }

    /// Total node count, saturating on overflow.
    pub fn node_count(&self) -> usize {
        self.nodes.iter().fold(1usize, |acc, &k| acc.saturating_mul(k))
    }

    /// The same box with every per-axis node count multiplied by `factor`.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        Self::new(
            self.lower.clone(),
            self.upper.clone(),
            self.nodes.iter().map(|k| k * factor).collect(),
        )
    }
}

/// Nodes `a_k ∈ R^{2n}` with positive weights summing to the domain volume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureGrid {
    dof: usize,
    // stride 2n
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureGrid {
    /// A grid from explicit nodes and weights.
    pub fn from_parts(dof: usize, nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::config("quadrature grid is empty"));
        }
        if nodes.len() != 2 * dof * weights.len() {
            return Err(Error::Dimension {
                what: "grid nodes",
                expected: 2 * dof * weights.len(),
                found: nodes.len(),
            });
        }
        if weights.len() > MAX_NODES {
            return Err(Error::config(format!(
                "grid has {} nodes, the limit is {MAX_NODES}",
                weights.len()
            )));
        }
        if let Some(k) = weights.iter().position(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::config(format!("weight {k} is not positive")));
        }
        Ok(Self { dof, nodes, weights })
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, k: usize) -> &[f64] {
        let w = 2 * self.dof;
        &self.nodes[k * w..(k + 1) * w]
    }

    pub fn weight(&self, k: usize) -> f64 {
        self.weights[k]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn initial_condition(&self, k: usize) -> InitialCondition {
        let a = self.node(k);
        InitialCondition::from_parts(&a[..self.dof], &a[self.dof..]).expect("grid node has 2n coordinates")
    }

    /// The grid with every weight multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::from_parts(
            self.dof,
            self.nodes.clone(),
            self.weights.iter().map(|w| w * factor).collect(),
        )
    }
}

/// Tensor-product midpoint rule on `spec`. Nodes are ordered with the first
/// axis varying slowest.
pub fn build_grid(spec: &DomainSpec) -> Result<QuadratureGrid> {
    let total = spec.node_count();
    if total > MAX_NODES {
        return Err(Error::config(format!(
            "domain grid has {total} nodes, the limit is {MAX_NODES}"
        )));
    }
    let m = spec.lower.len();
    let spacing: Vec<f64> = (0..m)
        .map(|a| (spec.upper[a] - spec.lower[a]) / spec.nodes[a] as f64)
        .collect();
    let weight: f64 = spacing.iter().product();
    let mut nodes = Vec::with_capacity(total * m);
    let mut index = vec![0usize; m];
    for _ in 0..total {
        for a in 0..m {
            nodes.push(spec.lower[a] + (index[a] as f64 + 0.5) * spacing[a]);
        }
        for a in (0..m).rev() {
            index[a] += 1;
            if index[a] < spec.nodes[a] {
                break;
            }
            index[a] = 0;
        }
    }
    QuadratureGrid::from_parts(spec.dof(), nodes, vec![weight; total])
}

/// Settings for [`evolve_ensemble`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleOptions {
    pub integrator: DampedOptions,
    pub tables: TableOptions,
    /// Number of uniformly spaced times in the field's time grid.
    pub samples: usize,
    pub execution: Execution,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        Self {
            integrator: DampedOptions::default(),
            tables: TableOptions::default(),
            samples: 601,
            execution: Execution::default(),
        }
    }
}

/// The fields `q(a_k, t)`, `π(a_k, t)` of an evolved ensemble. Each node
/// carries its damped trajectory (so `π = q'` holds by construction) and the
/// substituting system built along it.
#[derive(Debug, Clone)]
pub struct EnsembleField {
    system: DampedSystem,
    grid: QuadratureGrid,
    times: Vec<f64>,
    nodes: Vec<Arc<SubstitutingSystem>>,
}

impl EnsembleField {
    pub fn system(&self) -> &DampedSystem {
        &self.system
    }

    pub fn grid(&self) -> &QuadratureGrid {
        &self.grid
    }

    pub fn dof(&self) -> usize {
        self.system.dof()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Common time grid of the field.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("time grid is nonempty")
    }

    pub fn node(&self, k: usize) -> &SubstitutingSystem {
        &self.nodes[k]
    }

    pub fn weight(&self, k: usize) -> f64 {
        self.grid.weight(k)
    }

    /// `(q(a_k, t), π(a_k, t))` as one slice of length `2n`.
    pub fn state(&self, k: usize, t: f64) -> Result<Vec<f64>> {
        let mut buf = vec![0.0; 2 * self.dof()];
        self.nodes[k].trajectory().evaluate_into(t, &mut buf)?;
        Ok(buf)
    }

    /// The same field under a re-weighted grid (same nodes).
    pub fn with_grid(&self, grid: QuadratureGrid) -> Result<Self> {
        if grid.len() != self.grid.len() || grid.dof() != self.grid.dof() {
            return Err(Error::config("replacement grid must have the same nodes"));
        }
        Ok(Self { grid, ..self.clone() })
    }
}

/// Evolves every grid node on its own phase curve up to `t_end` and builds
/// its substituting system. Nodes run concurrently under
/// [`Execution::Parallel`]; the result does not depend on the execution mode.
pub fn evolve_ensemble(
    sys: &DampedSystem,
    grid: &QuadratureGrid,
    t_end: f64,
    opts: &EnsembleOptions,
) -> Result<EnsembleField> {
    if grid.is_empty() {
        return Err(Error::config("quadrature grid is empty"));
    }
    if grid.dof() != sys.dof() {
        return Err(Error::Dimension {
            what: "grid",
            expected: sys.dof(),
            found: grid.dof(),
        });
    }
    if opts.samples < 2 {
        return Err(Error::config("ensemble time grid needs at least two samples"));
    }
    let built = map_indexed(grid.len(), opts.execution, |k| {
        let a = grid.initial_condition(k);
        integrate_damped_with(sys, &a, t_end, &opts.integrator)
            .and_then(|tr| SubstitutingSystem::build(Arc::new(tr), sys, &opts.tables, Execution::Sequential))
            .map(Arc::new)
            .map_err(|e| e.at_node(k))
    });
    let nodes = built.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(EnsembleField {
        system: sys.clone(),
        grid: grid.clone(),
        times: uniform_grid(0.0, t_end, opts.samples),
        nodes,
    })
}

/// `K̂(t) = Σ_k w_k Ĥ(a_k, t)`, summed in node order.
pub fn functional_k(field: &EnsembleField, t: f64) -> Result<f64> {
    let mut acc = 0.0;
    for k in 0..field.len() {
        acc += field.weight(k) * field.node(k).hat_h(t)?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests;
