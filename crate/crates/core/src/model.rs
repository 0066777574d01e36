//! Damped linear mechanical systems `q'' + C q' + K q = 0` with unit masses,
//! their first-order phase-space form and energy bookkeeping.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-12;

/// Damping and stiffness matrices of an `n` degree-of-freedom system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DampedSystem {
    c: DMatrix<f64>,
    k: DMatrix<f64>,
}

impl DampedSystem {
    /// Builds a system without physical validation; only shapes and
    /// finiteness are checked.
    pub fn new(c: DMatrix<f64>, k: DMatrix<f64>) -> Result<Self> {
        let n = k.nrows();
        if n == 0 {
            return Err(Error::config("system must have at least one degree of freedom"));
        }
        if k.ncols() != n {
            return Err(Error::Dimension {
                what: "stiffness columns",
                expected: n,
                found: k.ncols(),
            });
        }
        if c.nrows() != n || c.ncols() != n {
            return Err(Error::Dimension {
                what: "damping matrix",
                expected: n,
                found: if c.nrows() != n { c.nrows() } else { c.ncols() },
            });
        }
        if !c.iter().chain(k.iter()).all(|x| x.is_finite()) {
            return Err(Error::config("damping and stiffness entries must be finite"));
        }
        Ok(Self { c, k })
    }

    /// Like [`DampedSystem::new`], but also requires `K` symmetric positive
    /// semi-definite.
    pub fn physical(c: DMatrix<f64>, k: DMatrix<f64>) -> Result<Self> {
        let sys = Self::new(c, k)?;
        let scale = sys.k.amax().max(1.0);
        let asym = (&sys.k - sys.k.transpose()).amax();
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::config(format!(
                "stiffness matrix is not symmetric (max asymmetry {asym:e})"
            )));
        }
        let min_eig = sys.k.clone().symmetric_eigenvalues().min();
        if min_eig < -SYMMETRY_TOL * scale {
            return Err(Error::config(format!(
                "stiffness matrix is not positive semi-definite (eigenvalue {min_eig:e})"
            )));
        }
        Ok(sys)
    }

    /// Uncoupled system with diagonal damping and stiffness.
    pub fn diagonal(c: &[f64], k: &[f64]) -> Result<Self> {
        if c.len() != k.len() {
            return Err(Error::Dimension {
                what: "diagonal damping",
                expected: k.len(),
                found: c.len(),
            });
        }
        Self::physical(
            DMatrix::from_diagonal(&DVector::from_column_slice(c)),
            DMatrix::from_diagonal(&DVector::from_column_slice(k)),
        )
    }

    pub fn dof(&self) -> usize {
        self.k.nrows()
    }

    pub fn damping(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn stiffness(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn is_undamped(&self) -> bool {
        self.c.iter().all(|&x| x == 0.0)
    }

    /// The `2n × 2n` matrix `A` of the first-order flow `x' = A x`, `x = (q, p)`.
    pub fn flow_matrix(&self) -> DMatrix<f64> {
        let n = self.dof();
        let mut a = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            a[(i, n + i)] = 1.0;
        }
        a.view_mut((n, 0), (n, n)).copy_from(&(-&self.k));
        a.view_mut((n, n), (n, n)).copy_from(&(-&self.c));
        a
    }

    /// Largest eigenvalue modulus of the flow matrix; the fastest rate in the
    /// damped dynamics.
    pub fn spectral_radius(&self) -> f64 {
        self.flow_matrix()
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// Shortest undamped period `2π / sqrt(λ_max(K))`, or `None` when `K = 0`.
    pub fn shortest_period(&self) -> Option<f64> {
        let sym = (&self.k + self.k.transpose()) * 0.5;
        let lmax = sym.symmetric_eigenvalues().max();
        (lmax > 0.0).then(|| std::f64::consts::TAU / lmax.sqrt())
    }

    fn check_state(&self, s: &PhaseState) -> Result<()> {
        let n = self.dof();
        if s.q.len() != n {
            return Err(Error::Dimension {
                what: "state coordinates",
                expected: n,
                found: s.q.len(),
            });
        }
        if s.p.len() != n {
            return Err(Error::Dimension {
                what: "state momenta",
                expected: n,
                found: s.p.len(),
            });
        }
        Ok(())
    }

    /// Right-hand side `(q', p') = (p, -K q - C p)`.
    pub fn damped_rhs(&self, s: &PhaseState) -> Result<DVector<f64>> {
        self.check_state(s)?;
        let n = self.dof();
        let mut out = DVector::zeros(2 * n);
        self.rhs_into(s.q.as_slice(), s.p.as_slice(), out.as_mut_slice());
        Ok(out)
    }

    /// Allocation-free right-hand side used by the integrators.
    pub(crate) fn rhs_into(&self, q: &[f64], p: &[f64], out: &mut [f64]) {
        let n = self.dof();
        out[..n].copy_from_slice(p);
        for i in 0..n {
            let mut acc = 0.0;
            for l in 0..n {
                acc += self.k[(i, l)] * q[l] + self.c[(i, l)] * p[l];
            }
            out[n + i] = -acc;
        }
    }

    /// `½ pᵀp + ½ qᵀK q`.
    pub fn mechanical_energy(&self, s: &PhaseState) -> Result<f64> {
        self.check_state(s)?;
        Ok(self.energy_of(s.q.as_slice(), s.p.as_slice()))
    }

    pub(crate) fn energy_of(&self, q: &[f64], p: &[f64]) -> f64 {
        let n = self.dof();
        let kinetic: f64 = p.iter().map(|x| x * x).sum::<f64>() * 0.5;
        let mut potential = 0.0;
        for i in 0..n {
            for l in 0..n {
                potential += q[i] * self.k[(i, l)] * q[l];
            }
        }
        kinetic + 0.5 * potential
    }

    /// `q'ᵀ C q'`, the rate at which the damping force removes energy.
    pub fn dissipated_power(&self, s: &PhaseState) -> Result<f64> {
        self.check_state(s)?;
        Ok(self.power_of(s.p.as_slice()))
    }

    pub(crate) fn power_of(&self, p: &[f64]) -> f64 {
        let n = self.dof();
        let mut acc = 0.0;
        for i in 0..n {
            for l in 0..n {
                acc += p[i] * self.c[(i, l)] * p[l];
            }
        }
        acc
    }

    /// Damping force magnitude `(C q')_i`, i.e. the negative of the
    /// generalized damping force on coordinate `i`.
    pub(crate) fn damping_component(&self, i: usize, p: &[f64]) -> f64 {
        (0..self.dof()).map(|l| self.c[(i, l)] * p[l]).sum()
    }
}

/// Point `(q, p)` of phase space at time `t`. Momenta equal velocities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub q: DVector<f64>,
    pub p: DVector<f64>,
    pub t: f64,
}

impl PhaseState {
    pub fn new(q: DVector<f64>, p: DVector<f64>, t: f64) -> Result<Self> {
        if q.len() != p.len() {
            return Err(Error::Dimension {
                what: "phase state",
                expected: q.len(),
                found: p.len(),
            });
        }
        if !t.is_finite() || !q.iter().chain(p.iter()).all(|x| x.is_finite()) {
            return Err(Error::config("phase state entries must be finite"));
        }
        Ok(Self { q, p, t })
    }

    pub fn from_slices(q: &[f64], p: &[f64], t: f64) -> Result<Self> {
        Self::new(DVector::from_column_slice(q), DVector::from_column_slice(p), t)
    }

    pub fn dof(&self) -> usize {
        self.q.len()
    }

    /// Euclidean distance between two states in `(q, p)` space.
    pub fn distance(&self, other: &PhaseState) -> f64 {
        ((&self.q - &other.q).norm_squared() + (&self.p - &other.p).norm_squared()).sqrt()
    }
}

/// Initial condition `a = (q₀, q'₀)`; also the label of an ensemble particle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialCondition {
    a: DVector<f64>,
}

impl InitialCondition {
    pub fn new(a: DVector<f64>) -> Result<Self> {
        if !a.len().is_multiple_of(2) || a.is_empty() {
            return Err(Error::config(format!(
                "initial condition must have even, non-zero length (found {})",
                a.len()
            )));
        }
        if !a.iter().all(|x| x.is_finite()) {
            return Err(Error::config("initial condition entries must be finite"));
        }
        Ok(Self { a })
    }

    pub fn from_parts(q0: &[f64], p0: &[f64]) -> Result<Self> {
        if q0.len() != p0.len() {
            return Err(Error::Dimension {
                what: "initial velocities",
                expected: q0.len(),
                found: p0.len(),
            });
        }
        Self::new(DVector::from_iterator(
            q0.len() * 2,
            q0.iter().chain(p0.iter()).copied(),
        ))
    }

    pub fn dof(&self) -> usize {
        self.a.len() / 2
    }

    pub fn q0(&self) -> &[f64] {
        &self.a.as_slice()[..self.dof()]
    }

    pub fn p0(&self) -> &[f64] {
        &self.a.as_slice()[self.dof()..]
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.a
    }

    pub fn state(&self, t: f64) -> PhaseState {
        PhaseState {
            q: DVector::from_column_slice(self.q0()),
            p: DVector::from_column_slice(self.p0()),
            t,
        }
    }

    pub(crate) fn check_dof(&self, n: usize) -> Result<()> {
        if self.dof() != n {
            return Err(Error::Dimension {
                what: "initial condition",
                expected: 2 * n,
                found: self.a.len(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn state(q: &[f64], p: &[f64]) -> PhaseState {
        PhaseState::from_slices(q, p, 0.0).unwrap()
    }

    #[test]
    fn rhs_undamped_spring_at_turning_point() {
        let sys = DampedSystem::diagonal(&[0.0], &[1.0]).unwrap();
        let f = sys.damped_rhs(&state(&[1.0], &[0.0])).unwrap();
        assert_eq!(f.as_slice(), &[0.0, -1.0]);
    }

    #[test]
    fn rhs_damped_direct_substitution() {
        let sys = DampedSystem::diagonal(&[0.2], &[1.0]).unwrap();
        let f = sys.damped_rhs(&state(&[0.0], &[1.0])).unwrap();
        assert_eq!(f.as_slice(), &[1.0, -0.2]);
    }

    #[test]
    fn rhs_zero_velocity_kills_damping() {
        let sys = DampedSystem::diagonal(&[0.1, 0.3], &[1.0, 1.0]).unwrap();
        let f = sys.damped_rhs(&state(&[1.0, 2.0], &[0.0, 0.0])).unwrap();
        assert_eq!(f.as_slice(), &[0.0, 0.0, -1.0, -2.0]);
    }

    #[test]
    fn rhs_rejects_mismatched_state() {
        let sys = DampedSystem::diagonal(&[0.1, 0.3], &[1.0, 1.0]).unwrap();
        let err = sys.damped_rhs(&state(&[1.0], &[0.0])).unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }));
    }

    #[test]
    fn energy_examples() {
        let one = DampedSystem::diagonal(&[0.0], &[1.0]).unwrap();
        assert_eq!(one.mechanical_energy(&state(&[0.0], &[0.0])).unwrap(), 0.0);
        assert_eq!(one.mechanical_energy(&state(&[1.0], &[0.0])).unwrap(), 0.5);
        let two = DampedSystem::diagonal(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_eq!(two.mechanical_energy(&state(&[1.0, 1.0], &[1.0, 0.0])).unwrap(), 1.5);
    }

    #[test]
    fn dissipated_power_examples() {
        let free = DampedSystem::diagonal(&[0.0], &[1.0]).unwrap();
        assert_eq!(free.dissipated_power(&state(&[3.0], &[7.0])).unwrap(), 0.0);
        let one = DampedSystem::diagonal(&[0.2], &[1.0]).unwrap();
        assert!((one.dissipated_power(&state(&[0.0], &[2.0])).unwrap() - 0.8).abs() < 1e-15);
        let two = DampedSystem::diagonal(&[0.1, 0.3], &[1.0, 1.0]).unwrap();
        assert!((two.dissipated_power(&state(&[0.0, 0.0], &[1.0, 1.0])).unwrap() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn physical_flag_rejects_asymmetric_stiffness() {
        let c = DMatrix::zeros(2, 2);
        let k = dmatrix![1.0, 0.5; 0.0, 1.0];
        assert!(DampedSystem::physical(c.clone(), k.clone()).is_err());
        // still constructible for pathological tests
        assert!(DampedSystem::new(c, k).is_ok());
    }

    #[test]
    fn physical_flag_rejects_indefinite_stiffness() {
        let k = dmatrix![1.0, 2.0; 2.0, 1.0];
        assert!(DampedSystem::physical(DMatrix::zeros(2, 2), k).is_err());
    }

    #[test]
    fn rejects_non_finite_and_bad_shapes() {
        assert!(DampedSystem::new(dmatrix![f64::NAN], dmatrix![1.0]).is_err());
        assert!(DampedSystem::new(DMatrix::zeros(1, 2), dmatrix![1.0]).is_err());
        assert!(DampedSystem::new(DMatrix::zeros(0, 0), DMatrix::zeros(0, 0)).is_err());
    }

    #[test]
    fn flow_matrix_trace_is_minus_trace_c() {
        let sys = DampedSystem::physical(dmatrix![0.1, 0.05; 0.05, 0.3], dmatrix![2.0, -1.0; -1.0, 2.0]).unwrap();
        assert!((sys.flow_matrix().trace() + 0.4).abs() < 1e-15);
        let period = sys.shortest_period().unwrap();
        assert!((period - std::f64::consts::TAU / 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn initial_condition_layout() {
        let a = InitialCondition::from_parts(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert_eq!(a.q0(), &[1.0, 2.0]);
        assert_eq!(a.p0(), &[3.0, 4.0]);
        assert!(InitialCondition::new(DVector::from_element(3, 0.0)).is_err());
    }
}
