use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{check_horizon, determinant, dopri5, DampedOptions, RkOptions};
use crate::error::Result;
use crate::model::{DampedSystem, InitialCondition};

/// Jacobian `∂x(t)/∂x(0)` of the flow map at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentBlock {
    pub t: f64,
    pub jacobian: DMatrix<f64>,
}

impl TangentBlock {
    pub fn determinant(&self) -> f64 {
        determinant(&self.jacobian)
    }
}

/// Integrates the flow together with its variational equation `J' = A J`,
/// `J(0) = I`, and returns `J` at every accepted node.
pub fn integrate_variational(
    sys: &DampedSystem,
    a: &InitialCondition,
    t_end: f64,
    rtol: f64,
) -> Result<Vec<TangentBlock>> {
    integrate_variational_with(sys, a, t_end, &DampedOptions::with_tolerances(rtol, rtol * 1e-2))
}

pub fn integrate_variational_with(
    sys: &DampedSystem,
    a: &InitialCondition,
    t_end: f64,
    opts: &DampedOptions,
) -> Result<Vec<TangentBlock>> {
    check_horizon(t_end)?;
    opts.validate()?;
    let n = sys.dof();
    a.check_dof(n)?;
    let w = 2 * n;
    let flow = sys.flow_matrix();

    // state layout: x (2n) followed by J column-major (4n²)
    let mut y0 = a.as_vector().as_slice().to_vec();
    y0.extend(DMatrix::<f64>::identity(w, w).iter().copied());

    let rhs = |_: f64, y: &[f64], dy: &mut [f64]| {
        sys.rhs_into(&y[..n], &y[n..w], &mut dy[..w]);
        for col in 0..w {
            let src = &y[w + col * w..w + (col + 1) * w];
            for row in 0..w {
                let mut acc = 0.0;
                for l in 0..w {
                    acc += flow[(row, l)] * src[l];
                }
                dy[w + col * w + row] = acc;
            }
        }
    };
    let rk = RkOptions {
        rtol: opts.rtol,
        atol: opts.atol,
        max_step: opts.max_step(sys, t_end),
    };
    let out = dopri5(rhs, 0.0, &y0, t_end, &rk)?;
    let stride = y0.len();
    Ok(out
        .times
        .iter()
        .enumerate()
        .map(|(j, &t)| TangentBlock {
            t,
            jacobian: DMatrix::from_column_slice(w, w, &out.states[j * stride + w..(j + 1) * stride]),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn final_det(sys: &DampedSystem, t_end: f64) -> f64 {
        let n = sys.dof();
        let a = InitialCondition::from_parts(&vec![1.0; n], &vec![0.0; n]).unwrap();
        let blocks = integrate_variational(sys, &a, t_end, 1e-10).unwrap();
        assert_eq!(blocks[0].jacobian, DMatrix::identity(2 * n, 2 * n));
        blocks.last().unwrap().determinant()
    }

    #[test]
    fn undamped_flow_preserves_volume() {
        let sys = DampedSystem::diagonal(&[0.0], &[1.0]).unwrap();
        let a = InitialCondition::from_parts(&[1.0], &[0.0]).unwrap();
        for b in integrate_variational(&sys, &a, 20.0, 1e-10).unwrap() {
            assert!((b.determinant() - 1.0).abs() < 1e-9, "t = {}", b.t);
        }
    }

    #[test]
    fn single_dof_contraction_matches_trace_formula() {
        let sys = DampedSystem::diagonal(&[0.2], &[1.0]).unwrap();
        let det = final_det(&sys, 5.0);
        assert!((det - (-1f64).exp()).abs() < 1e-8, "det {det}");
    }

    #[test]
    fn coupled_contraction_matches_trace_formula() {
        let sys = DampedSystem::physical(dmatrix![0.15, 0.05; 0.05, 0.25], dmatrix![2.0, -1.0; -1.0, 2.0]).unwrap();
        let det = final_det(&sys, 10.0);
        let exact = (-4f64).exp();
        assert!(((det - exact) / exact).abs() < 1e-7, "det {det}");
    }
}
