use nalgebra::DMatrix;

use super::{check_horizon, determinant, Trajectory, TrajectoryKind};
use crate::error::{Error, Result};
use crate::model::InitialCondition;

/// A position-only force `F(q)` of a separable Hamiltonian `½pᵀp + V(q)`.
pub trait SeparableForce: Sync {
    fn dof(&self) -> usize;

    fn force_into(&self, q: &[f64], out: &mut [f64]) -> Result<()>;

    /// `∂F/∂q`, an `n × n` matrix.
    fn jacobian(&self, q: &[f64]) -> Result<DMatrix<f64>>;
}

/// `F(q) = -K q`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearForce {
    k: DMatrix<f64>,
}

impl LinearForce {
    pub fn new(k: DMatrix<f64>) -> Self {
        Self { k }
    }

    pub fn zero(n: usize) -> Self {
        Self {
            k: DMatrix::zeros(n, n),
        }
    }
}

impl SeparableForce for LinearForce {
    fn dof(&self) -> usize {
        self.k.nrows()
    }

    fn force_into(&self, q: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.dof();
        for (i, f) in out.iter_mut().enumerate().take(n) {
            *f = -(0..n).map(|l| self.k[(i, l)] * q[l]).sum::<f64>();
        }
        Ok(())
    }

    fn jacobian(&self, _q: &[f64]) -> Result<DMatrix<f64>> {
        Ok(-&self.k)
    }
}

fn step_plan(duration: f64, h: f64) -> Result<(usize, f64)> {
    check_horizon(duration)?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::config(format!("Verlet step must be positive (got {h})")));
    }
    let steps = ((duration / h) - 1e-9).ceil().max(1.0) as usize;
    Ok((steps, duration / steps as f64))
}

/// Velocity-Verlet trajectory over `[0, t_end]`.
pub fn integrate_conservative<F: SeparableForce + ?Sized>(
    force: &F,
    a: &InitialCondition,
    t_end: f64,
    h: f64,
) -> Result<Trajectory> {
    integrate_conservative_from(force, a, 0.0, t_end, h)
}

/// Velocity-Verlet trajectory over `[t0, t0 + duration]` starting from `a`.
/// The step is shrunk so an integer number of steps lands on the end time.
pub fn integrate_conservative_from<F: SeparableForce + ?Sized>(
    force: &F,
    a: &InitialCondition,
    t0: f64,
    duration: f64,
    h: f64,
) -> Result<Trajectory> {
    let n = force.dof();
    let (steps, _) = step_plan(duration, h)?;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity((steps + 1) * 2 * n);
    let mut rates = Vec::with_capacity((steps + 1) * 2 * n);
    let h = verlet_walk(force, a, t0, duration, h, |t, q, p, f| {
        times.push(t);
        states.extend_from_slice(q);
        states.extend_from_slice(p);
        rates.extend_from_slice(p);
        rates.extend_from_slice(f);
    })?;
    Ok(Trajectory::from_parts(
        n,
        times,
        states,
        rates,
        a.clone(),
        TrajectoryKind::Conservative { step: h },
    ))
}

/// Velocity Verlet without storage: `visit(t, q, p, F(q))` is called at the
/// start and after every step. Returns the step actually used.
pub fn verlet_walk<F, V>(force: &F, a: &InitialCondition, t0: f64, duration: f64, h: f64, mut visit: V) -> Result<f64>
where
    F: SeparableForce + ?Sized,
    V: FnMut(f64, &[f64], &[f64], &[f64]),
{
    let n = force.dof();
    a.check_dof(n)?;
    let (steps, h) = step_plan(duration, h)?;
    let mut q = a.q0().to_vec();
    let mut p = a.p0().to_vec();
    let mut f = vec![0.0; n];
    force.force_into(&q, &mut f)?;
    visit(t0, &q, &p, &f);
    for j in 1..=steps {
        for i in 0..n {
            p[i] += 0.5 * h * f[i];
            q[i] += h * p[i];
        }
        force.force_into(&q, &mut f)?;
        for i in 0..n {
            p[i] += 0.5 * h * f[i];
        }
        let t = if j == steps { t0 + duration } else { t0 + j as f64 * h };
        visit(t, &q, &p, &f);
    }
    Ok(h)
}

/// Tangent map of one Verlet step from `(q, p)`: the product of the two
/// momentum kicks and the drift, each a shear.
pub fn verlet_step_tangent<F: SeparableForce + ?Sized>(
    force: &F,
    q: &[f64],
    p: &[f64],
    h: f64,
) -> Result<DMatrix<f64>> {
    let n = force.dof();
    let mut f = vec![0.0; n];
    force.force_into(q, &mut f)?;
    let jac0 = force.jacobian(q)?;
    let q1: Vec<f64> = (0..n).map(|i| q[i] + h * (p[i] + 0.5 * h * f[i])).collect();
    let jac1 = force.jacobian(&q1)?;
    Ok(kick(&jac1, h) * drift(n, h) * kick(&jac0, h))
}

fn kick(jac: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
    let n = jac.nrows();
    let mut m = DMatrix::identity(2 * n, 2 * n);
    m.view_mut((n, 0), (n, n)).copy_from(&(jac * (0.5 * h)));
    m
}

fn drift(n: usize, h: f64) -> DMatrix<f64> {
    let mut m = DMatrix::identity(2 * n, 2 * n);
    for i in 0..n {
        m[(i, n + i)] = h;
    }
    m
}

/// Propagates the Verlet tangent map along the discrete trajectory and
/// returns `(t, det J)` after every step.
pub fn verlet_tangent_determinants<F: SeparableForce + ?Sized>(
    force: &F,
    a: &InitialCondition,
    t0: f64,
    duration: f64,
    h: f64,
) -> Result<Vec<(f64, f64)>> {
    let n = force.dof();
    a.check_dof(n)?;
    let (steps, h) = step_plan(duration, h)?;
    let mut q = a.q0().to_vec();
    let mut p = a.p0().to_vec();
    let mut f = vec![0.0; n];
    force.force_into(&q, &mut f)?;
    let mut jac = DMatrix::identity(2 * n, 2 * n);
    let mut dets = Vec::with_capacity(steps + 1);
    dets.push((t0, 1.0));
    let mut dfdq = force.jacobian(&q)?;
    for j in 1..=steps {
        let k0 = kick(&dfdq, h);
        for i in 0..n {
            p[i] += 0.5 * h * f[i];
            q[i] += h * p[i];
        }
        force.force_into(&q, &mut f)?;
        for i in 0..n {
            p[i] += 0.5 * h * f[i];
        }
        dfdq = force.jacobian(&q)?;
        jac = kick(&dfdq, h) * drift(n, h) * k0 * jac;
        dets.push((t0 + j as f64 * h, determinant(&jac)));
    }
    Ok(dets)
}
