//! Natural cubic splines on strictly increasing nodes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    /// Second derivatives at the nodes.
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n < 2 || y.len() != n {
            return Err(Error::Config(format!(
                "spline needs at least two nodes and matching values ({n} nodes, {} values)",
                y.len()
            )));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("spline nodes must be strictly increasing".into()));
        }
        let mut m = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm for the tridiagonal moment system.
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut upper = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for i in 0..k {
                let h0 = x[i + 1] - x[i];
                let h1 = x[i + 2] - x[i + 1];
                diag[i] = 2.0 * (h0 + h1);
                upper[i] = h1;
                rhs[i] = 6.0 * ((y[i + 2] - y[i + 1]) / h1 - (y[i + 1] - y[i]) / h0);
            }
            for i in 1..k {
                let lower = x[i + 1] - x[i];
                let f = lower / diag[i - 1];
                diag[i] -= f * upper[i - 1];
                rhs[i] -= f * rhs[i - 1];
            }
            m[k] = rhs[k - 1] / diag[k - 1];
            for i in (0..k - 1).rev() {
                m[i + 1] = (rhs[i] - upper[i] * m[i + 2]) / diag[i];
            }
        }
        Ok(CubicSpline { x, y, m })
    }

    fn segment(&self, t: f64) -> usize {
        let i = self.x.partition_point(|&v| v <= t);
        i.saturating_sub(1).min(self.x.len() - 2)
    }

    /// Value and first derivative at `t`; linear extrapolation outside the nodes.
    pub fn eval_with_derivative(&self, t: f64) -> (f64, f64) {
        let i = self.segment(t);
        let (x0, x1) = (self.x[i], self.x[i + 1]);
        let h = x1 - x0;
        let (y0, y1) = (self.y[i], self.y[i + 1]);
        let (m0, m1) = (self.m[i], self.m[i + 1]);
        let slope = (y1 - y0) / h - h * (2.0 * m0 + m1) / 6.0;
        if t < x0 {
            return (y0 + slope * (t - x0), slope);
        }
        if t > x1 {
            let end_slope = (y1 - y0) / h + h * (m0 + 2.0 * m1) / 6.0;
            return (y1 + end_slope * (t - x1), end_slope);
        }
        let a = (x1 - t) / h;
        let b = (t - x0) / h;
        let v = a * y0 + b * y1 + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0;
        let d = (y1 - y0) / h + h * (-(3.0 * a * a - 1.0) * m0 + (3.0 * b * b - 1.0) * m1) / 6.0;
        (v, d)
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.eval_with_derivative(t).0
    }

    pub fn nodes(&self) -> &[f64] {
        &self.x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_linear_data_and_converges_on_smooth_data() {
        let x: Vec<f64> = (0..11).map(|i| i as f64 * 0.1).collect();
        let lin = CubicSpline::new(x.clone(), x.iter().map(|v| 2.0 * v - 1.0).collect()).unwrap();
        let (v, d) = lin.eval_with_derivative(0.37);
        assert!((v + 0.26).abs() < 1e-14 && (d - 2.0).abs() < 1e-13);

        let err = |n: usize| {
            let x: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
            let sp = CubicSpline::new(x.clone(), x.iter().map(|v| v.sin()).collect()).unwrap();
            (0..100)
                .map(|k| 0.2 + 0.6 * k as f64 / 99.0)
                .map(|t| (sp.eval(t) - t.sin()).abs())
                .fold(0.0, f64::max)
        };
        assert!(err(40) < err(20) / 10.0);
    }
}
