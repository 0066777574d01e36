//! Dormand–Prince 5(4) embedded pair with step-size control.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// difference between the 5th and 4th order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const MAX_STEPS: usize = 50_000_000;

#[derive(Debug, Clone, Copy)]
pub(crate) struct RkOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
}

/// Accepted nodes of an integration, stored flat with stride `dim`.
#[derive(Debug, Clone)]
pub(crate) struct RkOutput {
    pub times: Vec<f64>,
    pub states: Vec<f64>,
    pub rates: Vec<f64>,
}

fn error_norm(y0: &[f64], y1: &[f64], err: &[f64], opts: &RkOptions) -> f64 {
    let sum: f64 = y0
        .iter()
        .zip(y1)
        .zip(err)
        .map(|((a, b), e)| {
            let sk = opts.atol + opts.rtol * a.abs().max(b.abs());
            (e / sk).powi(2)
        })
        .sum();
    (sum / y0.len() as f64).sqrt()
}

fn rms_scaled(v: &[f64], y: &[f64], opts: &RkOptions) -> f64 {
    let sum: f64 = v
        .iter()
        .zip(y)
        .map(|(x, yi)| (x / (opts.atol + opts.rtol * yi.abs())).powi(2))
        .sum();
    (sum / v.len() as f64).sqrt()
}

fn initial_step<F>(f: &mut F, t0: f64, y0: &[f64], f0: &[f64], span: f64, opts: &RkOptions) -> f64
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let d0 = rms_scaled(y0, y0, opts);
    let d1 = rms_scaled(f0, y0, opts);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, d)| y + h0 * d).collect();
    let mut f1 = vec![0.0; y0.len()];
    f(t0 + h0, &y1, &mut f1);
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = rms_scaled(&diff, y0, opts) / h0;
    let dmax = d1.max(d2);
    let h1 = if dmax <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / dmax).powf(0.2)
    };
    (100.0 * h0).min(h1).min(opts.max_step).min(span)
}

/// Integrates `y' = f(t, y)` from `t0` to `t_end`, keeping every accepted node
/// together with the derivative there (for Hermite dense output).
pub(crate) fn dopri5<F>(mut f: F, t0: f64, y0: &[f64], t_end: f64, opts: &RkOptions) -> Result<RkOutput>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let dim = y0.len();
    let span = t_end - t0;
    let mut out = RkOutput {
        times: vec![t0],
        states: y0.to_vec(),
        rates: vec![0.0; dim],
    };
    let mut k1 = vec![0.0; dim];
    f(t0, y0, &mut k1);
    out.rates.copy_from_slice(&k1);

    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];
    let mut k5 = vec![0.0; dim];
    let mut k6 = vec![0.0; dim];
    let mut k7 = vec![0.0; dim];
    let mut stage = vec![0.0; dim];
    let mut y_new = vec![0.0; dim];
    let mut err = vec![0.0; dim];

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut h = initial_step(&mut f, t0, y0, &k1, span, opts);
    let mut rejected_last = false;

    for _ in 0..MAX_STEPS {
        let remaining = t_end - t;
        if remaining <= 1e-14 * t_end.abs().max(1.0) {
            return Ok(out);
        }
        // avoid a sliver step at the end
        if h >= remaining || remaining - h < 1e-3 * h {
            h = remaining;
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(Error::Integration {
                t,
                reason: format!("step size underflow (h = {h:e})"),
            });
        }

        for i in 0..dim {
            stage[i] = y[i] + h * A21 * k1[i];
        }
        f(t + C2 * h, &stage, &mut k2);
        for i in 0..dim {
            stage[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        f(t + C3 * h, &stage, &mut k3);
        for i in 0..dim {
            stage[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        f(t + C4 * h, &stage, &mut k4);
        for i in 0..dim {
            stage[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        f(t + C5 * h, &stage, &mut k5);
        for i in 0..dim {
            stage[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        f(t + h, &stage, &mut k6);
        for i in 0..dim {
            y_new[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        let t_new = if h == remaining { t_end } else { t + h };
        f(t_new, &y_new, &mut k7);
        for i in 0..dim {
            err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let en = error_norm(&y, &y_new, &err, opts);
        if !en.is_finite() {
            return Err(Error::Integration {
                t,
                reason: "non-finite state encountered".into(),
            });
        }

        if en <= 1.0 {
            t = t_new;
            std::mem::swap(&mut y, &mut y_new);
            std::mem::swap(&mut k1, &mut k7);
            out.times.push(t);
            out.states.extend_from_slice(&y);
            out.rates.extend_from_slice(&k1);
            let mut fac = SAFETY * en.max(1e-10).powf(-0.2);
            fac = fac.clamp(FAC_MIN, FAC_MAX);
            if rejected_last {
                fac = fac.min(1.0);
            }
            rejected_last = false;
            h = (h * fac).min(opts.max_step);
        } else {
            let fac = (SAFETY * en.powf(-0.2)).max(FAC_MIN);
            h *= fac;
            rejected_last = true;
        }
    }
    Err(Error::Integration {
        t,
        reason: format!("exceeded {MAX_STEPS} steps"),
    })
}
