use serde::{Deserialize, Serialize};

use super::EnsembleField;
use crate::error::{Error, Result};
use crate::par::{map_indexed, Execution};

/// Relative finite-difference step for functional derivatives.
pub const FD_RELATIVE_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Q,
    Pi,
}

/// One field value: component `comp` of `q` or `π` at node `node`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Slot {
    pub field: FieldKind,
    pub node: usize,
    pub comp: usize,
}

impl Slot {
    pub fn q(node: usize, comp: usize) -> Self {
        Self {
            field: FieldKind::Q,
            node,
            comp,
        }
    }

    pub fn pi(node: usize, comp: usize) -> Self {
        Self {
            field: FieldKind::Pi,
            node,
            comp,
        }
    }
}

/// Field values `q(a_k, t)`, `π(a_k, t)` of an ensemble frozen at one time,
/// together with the segment selection each node uses at that time.
/// Functionals are evaluated on snapshots; derivatives perturb single slots.
#[derive(Debug, Clone)]
pub struct Snapshot<'a> {
    field: &'a EnsembleField,
    t: f64,
    q: Vec<f64>,
    pi: Vec<f64>,
    selectors: Vec<Vec<usize>>,
}

impl<'a> Snapshot<'a> {
    pub fn new(field: &'a EnsembleField, t: f64) -> Result<Self> {
        let n = field.dof();
        let mut q = Vec::with_capacity(field.len() * n);
        let mut pi = Vec::with_capacity(field.len() * n);
        let mut selectors = Vec::with_capacity(field.len());
        for k in 0..field.len() {
            let s = field.state(k, t).map_err(|e| e.at_node(k))?;
            q.extend_from_slice(&s[..n]);
            pi.extend_from_slice(&s[n..]);
            selectors.push(field.node(k).selector_at(t).map_err(|e| e.at_node(k))?);
        }
        Ok(Self {
            field,
            t,
            q,
            pi,
            selectors,
        })
    }

    pub fn field(&self) -> &'a EnsembleField {
        self.field
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn len(&self) -> usize {
        self.field.len()
    }

    pub fn is_empty(&self) -> bool {
        self.field.is_empty()
    }

    pub fn dof(&self) -> usize {
        self.field.dof()
    }

    pub fn weight(&self, k: usize) -> f64 {
        self.field.weight(k)
    }

    pub fn q(&self, k: usize) -> &[f64] {
        let n = self.dof();
        &self.q[k * n..(k + 1) * n]
    }

    pub fn pi(&self, k: usize) -> &[f64] {
        let n = self.dof();
        &self.pi[k * n..(k + 1) * n]
    }

    pub fn selector(&self, k: usize) -> &[usize] {
        &self.selectors[k]
    }

    pub fn slots(&self) -> impl Iterator<Item = Slot> + '_ {
        let n = self.dof();
        (0..self.len()).flat_map(move |k| (0..n).flat_map(move |i| [Slot::q(k, i), Slot::pi(k, i)]))
    }

    fn check(&self, slot: Slot) -> Result<()> {
        if slot.node >= self.len() || slot.comp >= self.dof() {
            return Err(Error::config(format!(
                "slot {slot:?} outside a field of {} nodes × {} components",
                self.len(),
                self.dof()
            )));
        }
        Ok(())
    }

    pub fn value(&self, slot: Slot) -> f64 {
        let idx = slot.node * self.dof() + slot.comp;
        match slot.field {
            FieldKind::Q => self.q[idx],
            FieldKind::Pi => self.pi[idx],
        }
    }

    /// Copy with one slot replaced.
    pub fn with_value(&self, slot: Slot, v: f64) -> Self {
        let mut out = self.clone();
        let idx = slot.node * self.dof() + slot.comp;
        match slot.field {
            FieldKind::Q => out.q[idx] = v,
            FieldKind::Pi => out.pi[idx] = v,
        }
        out
    }
}

/// A scalar functional of the ensemble fields at a fixed time.
pub trait DiscreteFunctional: Sync {
    fn evaluate(&self, snap: &Snapshot) -> Result<f64>;

    /// Whether the functional can change when `slot` changes. Derivatives
    /// with respect to other slots are exactly zero.
    fn depends_on(&self, snap: &Snapshot, slot: Slot) -> bool;

    /// `F(u with slot = to) - F(u with slot = from)`. Implementations should
    /// form this without subtracting two full evaluations, whose rounding
    /// error would swamp a finite-difference quotient; the default does
    /// exactly that subtraction.
    fn difference(&self, snap: &Snapshot, slot: Slot, from: f64, to: f64) -> Result<f64> {
        Ok(self.evaluate(&snap.with_value(slot, to))? - self.evaluate(&snap.with_value(slot, from))?)
    }
}

/// `δF/δu(a_k)`: central difference in the slot with step
/// `η = 1e-6·max(1, |u|)`, divided by the node weight so that
/// `δu(a_m)/δu(a_k) = δ_km / w_k` holds exactly.
pub fn functional_derivative<F: DiscreteFunctional + ?Sized>(f: &F, snap: &Snapshot, slot: Slot) -> Result<f64> {
    snap.check(slot)?;
    if !f.depends_on(snap, slot) {
        return Ok(0.0);
    }
    let x = snap.value(slot);
    let eta = FD_RELATIVE_STEP * x.abs().max(1.0);
    let (up, down) = (x + eta, x - eta);
    // divide by the representable step, not 2η
    Ok(f.difference(snap, slot, down, up)? / (up - down) / snap.weight(slot.node))
}

/// `{F, G} = Σ_k w_k Σ_i (δF/δq_i δG/δπ_i - δG/δq_i δF/δπ_i)` at node `a_k`.
/// Per-node terms may be computed concurrently; the outer sum always runs in
/// node order, so the result is independent of the execution mode.
pub fn poisson_bracket<F, G>(f: &F, g: &G, snap: &Snapshot, exec: Execution) -> Result<f64>
where
    F: DiscreteFunctional + ?Sized,
    G: DiscreteFunctional + ?Sized,
{
    let n = snap.dof();
    let terms = map_indexed(snap.len(), exec, |k| -> Result<f64> {
        let mut acc = 0.0;
        for i in 0..n {
            let fq = functional_derivative(f, snap, Slot::q(k, i))?;
            let fp = functional_derivative(f, snap, Slot::pi(k, i))?;
            if fq == 0.0 && fp == 0.0 {
                // the term vanishes exactly whatever G's derivatives are
                continue;
            }
            let gq = functional_derivative(g, snap, Slot::q(k, i))?;
            let gp = functional_derivative(g, snap, Slot::pi(k, i))?;
            acc += fq * gp - gq * fp;
        }
        Ok(acc)
    });
    let mut total = 0.0;
    for (k, term) in terms.into_iter().enumerate() {
        total += snap.weight(k) * term.map_err(|e| e.at_node(k))?;
    }
    Ok(total)
}

/// The field value in one slot: `F[u] = u(a_k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation(pub Slot);

impl DiscreteFunctional for Evaluation {
    fn evaluate(&self, snap: &Snapshot) -> Result<f64> {
        snap.check(self.0)?;
        Ok(snap.value(self.0))
    }

    fn depends_on(&self, _: &Snapshot, slot: Slot) -> bool {
        slot == self.0
    }

    fn difference(&self, _: &Snapshot, slot: Slot, from: f64, to: f64) -> Result<f64> {
        Ok(if slot == self.0 { to - from } else { 0.0 })
    }
}

/// `F = Σ b_s u_s + Σ c_st u_s u_t` over arbitrary slots.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QuadraticFunctional {
    pub linear: Vec<(Slot, f64)>,
    pub quadratic: Vec<(Slot, Slot, f64)>,
}

impl DiscreteFunctional for QuadraticFunctional {
    fn evaluate(&self, snap: &Snapshot) -> Result<f64> {
        let mut acc = 0.0;
        for &(s, b) in &self.linear {
            snap.check(s)?;
            acc += b * snap.value(s);
        }
        for &(s, t, c) in &self.quadratic {
            snap.check(s)?;
            snap.check(t)?;
            acc += c * snap.value(s) * snap.value(t);
        }
        Ok(acc)
    }

    fn depends_on(&self, _: &Snapshot, slot: Slot) -> bool {
        self.linear.iter().any(|&(s, _)| s == slot) || self.quadratic.iter().any(|&(s, t, _)| s == slot || t == slot)
    }

    fn difference(&self, snap: &Snapshot, slot: Slot, from: f64, to: f64) -> Result<f64> {
        let d = to - from;
        let mut acc = 0.0;
        for &(s, b) in &self.linear {
            if s == slot {
                acc += b * d;
            }
        }
        for &(s, t, c) in &self.quadratic {
            acc += match (s == slot, t == slot) {
                (true, true) => c * d * (from + to),
                (true, false) => c * d * snap.value(t),
                (false, true) => c * snap.value(s) * d,
                (false, false) => 0.0,
            };
        }
        Ok(acc)
    }
}

/// `Σ α_j F_j`.
#[derive(Clone, Default)]
pub struct LinearCombination<'f> {
    pub terms: Vec<(f64, &'f dyn DiscreteFunctional)>,
}

impl<'f> LinearCombination<'f> {
    pub fn new(terms: Vec<(f64, &'f dyn DiscreteFunctional)>) -> Self {
        Self { terms }
    }
}

impl DiscreteFunctional for LinearCombination<'_> {
    fn evaluate(&self, snap: &Snapshot) -> Result<f64> {
        self.terms.iter().map(|(a, f)| Ok(a * f.evaluate(snap)?)).sum()
    }

    fn depends_on(&self, snap: &Snapshot, slot: Slot) -> bool {
        self.terms.iter().any(|(_, f)| f.depends_on(snap, slot))
    }

    fn difference(&self, snap: &Snapshot, slot: Slot, from: f64, to: f64) -> Result<f64> {
        let mut acc = 0.0;
        for (a, f) in &self.terms {
            if f.depends_on(snap, slot) {
                acc += a * f.difference(snap, slot, from, to)?;
            }
        }
        Ok(acc)
    }
}

/// The ensemble Hamiltonian as a functional of the fields:
/// `K̂ = Σ_k w_k [½πᵀπ + ½qᵀKq + V_k(q)]`, where `V_k` is node `k`'s
/// segment potential at the snapshot time. On the actual fields it equals
/// `Σ_k w_k Ĥ(a_k, t)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KHat;

impl DiscreteFunctional for KHat {
    fn evaluate(&self, snap: &Snapshot) -> Result<f64> {
        let sys = snap.field().system();
        let mut acc = 0.0;
        for k in 0..snap.len() {
            let node = snap.field().node(k);
            let energy = sys.energy_of(snap.q(k), snap.pi(k)) + node.potential(snap.selector(k), snap.q(k))?;
            acc += snap.weight(k) * energy;
        }
        Ok(acc)
    }

    fn depends_on(&self, _: &Snapshot, _: Slot) -> bool {
        true
    }

    fn difference(&self, snap: &Snapshot, slot: Slot, from: f64, to: f64) -> Result<f64> {
        let (k, i) = (slot.node, slot.comp);
        let d = to - from;
        let local = match slot.field {
            FieldKind::Pi => 0.5 * d * (from + to),
            FieldKind::Q => {
                let kmat = snap.field().system().stiffness();
                let q = snap.q(k);
                let coupling: f64 = (0..snap.dof())
                    .filter(|&l| l != i)
                    .map(|l| (kmat[(i, l)] + kmat[(l, i)]) * q[l])
                    .sum();
                let seg = &snap.field().node(k).segments(i)[snap.selector(k)[i]];
                0.5 * d * (kmat[(i, i)] * (from + to) + coupling) + seg.potential_increment(from, to)?
            }
        };
        Ok(snap.weight(k) * local)
    }
}
