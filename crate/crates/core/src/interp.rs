//! Shape-preserving piecewise cubic Hermite interpolation on a strictly
//! increasing abscissa.
//!
//! Node slopes may be supplied (exact derivative data) or left for the table
//! to estimate with the Fritsch–Butland harmonic mean. On every interval
//! where the data are monotone and both slopes agree with the secant, the
//! Fritsch–Carlson condition `α² + β² ≤ 9` is enforced, so the interpolant
//! cannot overshoot there. Estimated slopes that disagree in sign with an
//! adjacent secant are set to zero.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HermiteTable {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
    // ∫ from x[0] to x[k]
    cumulative: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableError {
    TooFewPoints,
    NotIncreasing(usize),
    NonFinite(usize),
}

impl HermiteTable {
    pub fn new(x: Vec<f64>, y: Vec<f64>, slopes: &[Option<f64>]) -> Result<Self, TableError> {
        let n = x.len();
        if n < 2 || y.len() != n || slopes.len() != n {
            return Err(TableError::TooFewPoints);
        }
        for k in 0..n {
            if !x[k].is_finite() || !y[k].is_finite() {
                return Err(TableError::NonFinite(k));
            }
            if k > 0 && x[k] <= x[k - 1] {
                return Err(TableError::NotIncreasing(k));
            }
        }
        let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / (x[k + 1] - x[k])).collect();
        let h: Vec<f64> = (0..n - 1).map(|k| x[k + 1] - x[k]).collect();

        let estimated: Vec<bool> = slopes.iter().map(|s| s.is_none_or(|v| !v.is_finite())).collect();
        let mut m: Vec<f64> = (0..n)
            .map(|k| match slopes[k] {
                Some(v) if v.is_finite() => v,
                _ => estimate_slope(k, &h, &delta),
            })
            .collect();

        for k in 0..n - 1 {
            let d = delta[k];
            if d == 0.0 {
                if estimated[k] {
                    m[k] = 0.0;
                }
                if estimated[k + 1] {
                    m[k + 1] = 0.0;
                }
                continue;
            }
            if estimated[k] && m[k] * d < 0.0 {
                m[k] = 0.0;
            }
            if estimated[k + 1] && m[k + 1] * d < 0.0 {
                m[k + 1] = 0.0;
            }
            let alpha = m[k] / d;
            let beta = m[k + 1] / d;
            if alpha >= 0.0 && beta >= 0.0 {
                let r = alpha * alpha + beta * beta;
                if r > 9.0 {
                    let tau = 3.0 / r.sqrt();
                    m[k] = tau * alpha * d;
                    m[k + 1] = tau * beta * d;
                }
            }
        }

        let mut cumulative = vec![0.0; n];
        for k in 0..n - 1 {
            cumulative[k + 1] = cumulative[k] + piece_integral(h[k], y[k], y[k + 1], m[k], m[k + 1], 1.0);
        }
        Ok(Self { x, y, m, cumulative })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn abscissae(&self) -> &[f64] {
        &self.x
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }

    pub fn slopes(&self) -> &[f64] {
        &self.m
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], *self.x.last().unwrap())
    }

    pub fn contains(&self, xq: f64) -> bool {
        let (lo, hi) = self.domain();
        xq >= lo && xq <= hi
    }

    fn locate(&self, xq: f64) -> (usize, f64) {
        let k = self
            .x
            .partition_point(|&v| v <= xq)
            .saturating_sub(1)
            .min(self.x.len() - 2);
        let h = self.x[k + 1] - self.x[k];
        (k, (xq - self.x[k]) / h)
    }

    /// Interpolated value, `None` outside the domain.
    pub fn eval(&self, xq: f64) -> Option<f64> {
        if !self.contains(xq) {
            return None;
        }
        let (k, s) = self.locate(xq);
        let h = self.x[k + 1] - self.x[k];
        let s2 = s * s;
        let s3 = s2 * s;
        Some(
            (2.0 * s3 - 3.0 * s2 + 1.0) * self.y[k]
                + (s3 - 2.0 * s2 + s) * h * self.m[k]
                + (-2.0 * s3 + 3.0 * s2) * self.y[k + 1]
                + (s3 - s2) * h * self.m[k + 1],
        )
    }

    pub fn derivative(&self, xq: f64) -> Option<f64> {
        if !self.contains(xq) {
            return None;
        }
        let (k, s) = self.locate(xq);
        let h = self.x[k + 1] - self.x[k];
        let s2 = s * s;
        Some(
            (6.0 * s2 - 6.0 * s) / h * self.y[k]
                + (3.0 * s2 - 4.0 * s + 1.0) * self.m[k]
                + (-6.0 * s2 + 6.0 * s) / h * self.y[k + 1]
                + (3.0 * s2 - 2.0 * s) * self.m[k + 1],
        )
    }

    /// `∫ₓ₀^xq` of the interpolant, `None` outside the domain.
    pub fn integral_from_start(&self, xq: f64) -> Option<f64> {
        if !self.contains(xq) {
            return None;
        }
        let (k, s) = self.locate(xq);
        let h = self.x[k + 1] - self.x[k];
        Some(self.cumulative[k] + piece_integral(h, self.y[k], self.y[k + 1], self.m[k], self.m[k + 1], s))
    }
    /// `∫_a^b` of the interpolant. Unlike differencing
    /// [`integral_from_start`](Self::integral_from_start), short spans keep full
    /// relative accuracy: partial pieces are integrated directly with
    /// two-point Gauss–Legendre, which is exact for cubics.
    pub fn integral_between(&self, a: f64, b: f64) -> Option<f64> {
        if !self.contains(a) || !self.contains(b) {
            return None;
        }
        if a > b {
            return self.integral_between(b, a).map(|v| -v);
        }
        let (ka, _) = self.locate(a);
        let (kb, _) = self.locate(b);
        if ka == kb {
            return Some(self.gauss2(ka, a, b));
        }
        let head = self.gauss2(ka, a, self.x[ka + 1]);
        let middle = self.cumulative[kb] - self.cumulative[ka + 1];
        let tail = self.gauss2(kb, self.x[kb], b);
        Some(head + middle + tail)
    }

    fn piece_value(&self, k: usize, xq: f64) -> f64 {
        let h = self.x[k + 1] - self.x[k];
        let s = (xq - self.x[k]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * self.y[k]
            + (s3 - 2.0 * s2 + s) * h * self.m[k]
            + (-2.0 * s3 + 3.0 * s2) * self.y[k + 1]
            + (s3 - s2) * h * self.m[k + 1]
    }

    fn gauss2(&self, k: usize, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let off = half / 3f64.sqrt();
        half * (self.piece_value(k, mid - off) + self.piece_value(k, mid + off))
    }
}

fn piece_integral(h: f64, y0: f64, y1: f64, m0: f64, m1: f64, s: f64) -> f64 {
    let s2 = s * s;
    let s3 = s2 * s;
    let s4 = s3 * s;
    h * (y0 * (0.5 * s4 - s3 + s)
        + h * m0 * (0.25 * s4 - 2.0 * s3 / 3.0 + 0.5 * s2)
        + y1 * (-0.5 * s4 + s3)
        + h * m1 * (0.25 * s4 - s3 / 3.0))
}

fn estimate_slope(k: usize, h: &[f64], delta: &[f64]) -> f64 {
    let last = delta.len();
    if last == 1 {
        return delta[0];
    }
    if k == 0 {
        return edge_slope(h[0], h[1], delta[0], delta[1]);
    }
    if k == last {
        return edge_slope(h[last - 1], h[last - 2], delta[last - 1], delta[last - 2]);
    }
    let (d0, d1) = (delta[k - 1], delta[k]);
    if d0 * d1 <= 0.0 {
        return 0.0;
    }
    let w1 = 2.0 * h[k] + h[k - 1];
    let w2 = h[k] + 2.0 * h[k - 1];
    (w1 + w2) / (w1 / d0 + w2 / d1)
}

// three-point one-sided estimate with the usual shape guards
fn edge_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if m * d0 <= 0.0 {
        0.0
    } else if d0 * d1 < 0.0 && m.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn estimated(x: Vec<f64>, y: Vec<f64>) -> HermiteTable {
        let n = x.len();
        HermiteTable::new(x, y, &vec![None; n]).unwrap()
    }

    #[test]
    fn reproduces_nodes() {
        let t = estimated(vec![0.0, 1.0, 3.0, 4.0], vec![0.0, 2.0, 2.5, 7.0]);
        for (x, y) in t.abscissae().iter().zip(t.values()) {
            assert_eq!(t.eval(*x).unwrap(), *y);
        }
    }

    #[test]
    fn exact_slopes_reproduce_cubics() {
        let f = |x: f64| x * x * x - 2.0 * x + 1.0;
        let df = |x: f64| 3.0 * x * x - 2.0;
        let x: Vec<f64> = (0..6).map(|k| 0.3 * k as f64 - 0.5).collect();
        let y: Vec<f64> = x.iter().map(|&v| f(v)).collect();
        let m: Vec<Option<f64>> = x.iter().map(|&v| Some(df(v))).collect();
        let t = HermiteTable::new(x, y, &m).unwrap();
        for k in 0..50 {
            let xq = -0.5 + 1.5 * k as f64 / 49.0;
            assert!((t.eval(xq).unwrap() - f(xq)).abs() < 1e-13);
        }
        // ∫ f from -0.5 to 1.0
        let exact = |x: f64| 0.25 * x.powi(4) - x * x + x;
        assert!((t.integral_from_start(1.0).unwrap() - (exact(1.0) - exact(-0.5))).abs() < 1e-13);
    }

    #[test]
    fn short_spans_keep_relative_accuracy() {
        let t = estimated(vec![0.0, 1.0, 2.0], vec![1.0, 3.0, 4.0]);
        let x = 0.7;
        // width of the representable interval, not the nominal 1e-9
        let b = x + 1e-9;
        let d = b - x;
        let slope = (t.eval(x + 1e-6).unwrap() - t.eval(x - 1e-6).unwrap()) / 2e-6;
        let exact = t.eval(x).unwrap() * d + 0.5 * slope * d * d;
        let direct = t.integral_between(x, b).unwrap();
        assert!(((direct - exact) / exact).abs() < 1e-8);
        assert!(t.integral_between(x, 2.5).is_none());
    }

    #[test]
    fn rejects_unordered_abscissae() {
        assert_eq!(
            HermiteTable::new(vec![0.0, 0.0], vec![1.0, 2.0], &[None, None]).unwrap_err(),
            TableError::NotIncreasing(1)
        );
        assert_eq!(
            HermiteTable::new(vec![0.0], vec![1.0], &[None]).unwrap_err(),
            TableError::TooFewPoints
        );
    }

    #[test]
    fn outside_domain_is_none() {
        let t = estimated(vec![0.0, 1.0], vec![0.0, 1.0]);
        assert!(t.eval(1.0 + 1e-12).is_none());
        assert!(t.integral_from_start(-1e-12).is_none());
        assert_eq!(t.domain(), (0.0, 1.0));
    }

    #[test]
    fn step_data_does_not_overshoot() {
        let t = estimated(vec![0.0, 1.0, 2.0, 3.0, 4.0], vec![0.0, 0.0, 1.0, 1.0, 1.0]);
        for k in 0..=400 {
            let v = t.eval(4.0 * k as f64 / 400.0).unwrap();
            assert!((-1e-15..=1.0 + 1e-15).contains(&v));
        }
    }

    proptest! {
        #[test]
        fn monotone_data_gives_monotone_interpolant(
            steps in prop::collection::vec((0.01f64..1.0, 0.0f64..2.0), 2..12)
        ) {
            let mut x = vec![0.0];
            let mut y = vec![0.0];
            for (dx, dy) in &steps {
                x.push(x.last().unwrap() + dx);
                y.push(y.last().unwrap() + dy);
            }
            let t = estimated(x.clone(), y);
            let (lo, hi) = t.domain();
            let mut prev = f64::NEG_INFINITY;
            for k in 0..=500 {
                let v = t.eval((lo + (hi - lo) * k as f64 / 500.0).min(hi)).unwrap();
                prop_assert!(v >= prev - 1e-12);
                prev = v;
            }
        }

        #[test]
        fn integral_derivative_consistency(
            ys in prop::collection::vec(-2.0f64..2.0, 3..8),
        ) {
            let x: Vec<f64> = (0..ys.len()).map(|k| k as f64 * 0.5).collect();
            let t = estimated(x, ys);
            let (lo, hi) = t.domain();
            let xm = 0.5 * (lo + hi) + 0.0137;
            let eps = 1e-5;
            let fd = (t.integral_from_start(xm + eps).unwrap() - t.integral_from_start(xm - eps).unwrap()) / (2.0 * eps);
            prop_assert!((fd - t.eval(xm).unwrap()).abs() < 1e-8);
        }

        #[test]
        fn integral_between_agrees_with_cumulative(
            ys in prop::collection::vec(-2.0f64..2.0, 3..8),
            fa in 0.0f64..1.0,
            fb in 0.0f64..1.0,
        ) {
            let x: Vec<f64> = (0..ys.len()).map(|k| k as f64 * 0.5).collect();
            let t = estimated(x, ys);
            let (lo, hi) = t.domain();
            let a = (lo + fa * (hi - lo)).min(hi);
            let b = (lo + fb * (hi - lo)).min(hi);
            let direct = t.integral_between(a, b).unwrap();
            let cumulative = t.integral_from_start(b).unwrap() - t.integral_from_start(a).unwrap();
            prop_assert!((direct - cumulative).abs() < 1e-13);
            prop_assert_eq!(t.integral_between(b, a).unwrap(), -direct);
        }
    }
}
