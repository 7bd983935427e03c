//! Piecewise-cubic interpolation used by tabulated metrics and chart inversion.

use crate::error::{Error, Result};

/// End condition of a cubic spline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EndCondition {
    /// Zero second derivative.
    Natural,
    /// Prescribed first derivative.
    Clamped(f64),
}

/// A C² cubic spline through `(x_i, y_i)`. Derivatives up to the third and
/// the antiderivative are evaluated analytically from the piecewise
/// polynomial.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
    /// Antiderivative from x_0 at each knot.
    cum: Vec<f64>,
}

impl CubicSpline {
    pub fn new(x: Vec<f64>, y: Vec<f64>, left: EndCondition, right: EndCondition) -> Result<Self> {
        let n = x.len();
        if n < 3 || y.len() != n {
            return Err(Error::InvalidParameter(format!(
                "spline needs at least 3 knots with matching values (got {} and {})",
                n,
                y.len()
            )));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) || x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "spline knots must be finite and strictly increasing".into(),
            ));
        }

        // Tridiagonal system for the knot second derivatives.
        let mut sub = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut sup = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        for i in 1..n - 1 {
            let h0 = x[i] - x[i - 1];
            let h1 = x[i + 1] - x[i];
            sub[i] = h0 / 6.0;
            diag[i] = (h0 + h1) / 3.0;
            sup[i] = h1 / 6.0;
            rhs[i] = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
        }
        match left {
            EndCondition::Natural => {
                diag[0] = 1.0;
            }
            EndCondition::Clamped(d) => {
                let h = x[1] - x[0];
                diag[0] = h / 3.0;
                sup[0] = h / 6.0;
                rhs[0] = (y[1] - y[0]) / h - d;
            }
        }
        match right {
            EndCondition::Natural => {
                diag[n - 1] = 1.0;
            }
            EndCondition::Clamped(d) => {
                let h = x[n - 1] - x[n - 2];
                sub[n - 1] = h / 6.0;
                diag[n - 1] = h / 3.0;
                rhs[n - 1] = d - (y[n - 1] - y[n - 2]) / h;
            }
        }
        let m = solve_tridiagonal(&sub, &diag, &sup, &rhs);

        let mut spline = CubicSpline { x, y, m, cum: vec![0.0; n] };
        for i in 1..n {
            let prev = spline.cum[i - 1];
            spline.cum[i] = prev + spline.piece_integral(i - 1, spline.x[i]);
        }
        Ok(spline)
    }

    pub fn x_min(&self) -> f64 {
        self.x[0]
    }

    pub fn x_max(&self) -> f64 {
        *self.x.last().unwrap()
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        (&self.x, &self.y)
    }

    fn piece(&self, t: f64) -> usize {
        let n = self.x.len();
        match self.x.partition_point(|&v| v <= t) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        }
    }

    /// Coefficients of the cubic on piece `i` in powers of `(t - x_i)`.
    fn coefficients(&self, i: usize) -> [f64; 4] {
        let h = self.x[i + 1] - self.x[i];
        let (y0, y1) = (self.y[i], self.y[i + 1]);
        let (m0, m1) = (self.m[i], self.m[i + 1]);
        [
            y0,
            (y1 - y0) / h - h * (2.0 * m0 + m1) / 6.0,
            0.5 * m0,
            (m1 - m0) / (6.0 * h),
        ]
    }

    fn piece_integral(&self, i: usize, t: f64) -> f64 {
        let [a, b, c, d] = self.coefficients(i);
        let u = t - self.x[i];
        u * (a + u * (b / 2.0 + u * (c / 3.0 + u * d / 4.0)))
    }

    /// Value and first three derivatives at `t`.
    pub fn eval_all(&self, t: f64) -> [f64; 4] {
        let i = self.piece(t);
        let [a, b, c, d] = self.coefficients(i);
        let u = t - self.x[i];
        [
            a + u * (b + u * (c + u * d)),
            b + u * (2.0 * c + 3.0 * u * d),
            2.0 * c + 6.0 * u * d,
            6.0 * d,
        ]
    }

    pub fn value(&self, t: f64) -> f64 {
        self.eval_all(t)[0]
    }

    /// Integral from the first knot to `t`.
    pub fn antiderivative(&self, t: f64) -> f64 {
        let i = self.piece(t);
        self.cum[i] + self.piece_integral(i, t)
    }
}

fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = sup[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let denom = diag[i] - sub[i] * c[i - 1];
        c[i] = if i + 1 < n { sup[i] / denom } else { 0.0 };
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / denom;
    }
    let mut out = vec![0.0; n];
    out[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        out[i] = d[i] - c[i] * out[i + 1];
    }
    out
}

/// Cubic Hermite interpolation on `[x0, x1]` with end values and slopes.
pub fn hermite(x0: f64, x1: f64, y0: f64, y1: f64, d0: f64, d1: f64, t: f64) -> f64 {
    let h = x1 - x0;
    let u = (t - x0) / h;
    let u2 = u * u;
    let u3 = u2 * u;
    (2.0 * u3 - 3.0 * u2 + 1.0) * y0
        + (u3 - 2.0 * u2 + u) * h * d0
        + (-2.0 * u3 + 3.0 * u2) * y1
        + (u3 - u2) * h * d1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_cubic_with_clamped_ends() {
        let f = |t: f64| 1.0 + t - 0.5 * t * t + 0.25 * t * t * t;
        let df = |t: f64| 1.0 - t + 0.75 * t * t;
        let x: Vec<f64> = (0..9).map(|k| k as f64 * 0.3).collect();
        let y = x.iter().map(|&t| f(t)).collect();
        let s = CubicSpline::new(x, y, EndCondition::Clamped(df(0.0)), EndCondition::Clamped(df(2.4))).unwrap();
        for t in [0.05, 0.77, 1.3, 2.39] {
            let [v, d1, d2, d3] = s.eval_all(t);
            assert!((v - f(t)).abs() < 1e-12);
            assert!((d1 - df(t)).abs() < 1e-11);
            assert!((d2 - (-1.0 + 1.5 * t)).abs() < 1e-10);
            assert!((d3 - 1.5).abs() < 1e-9);
        }
        let exact = |t: f64| t + t * t / 2.0 - t.powi(3) / 6.0 + t.powi(4) / 16.0;
        assert!((s.antiderivative(1.7) - exact(1.7)).abs() < 1e-12);
    }

    #[test]
    fn natural_spline_has_zero_end_curvature() {
        let x: Vec<f64> = (0..30).map(|k| k as f64 * 0.1).collect();
        let y = x.iter().map(|t| t.sin()).collect();
        let s = CubicSpline::new(x, y, EndCondition::Natural, EndCondition::Natural).unwrap();
        assert!(s.eval_all(0.0)[2].abs() < 1e-14);
        assert!((s.value(1.234) - 1.234f64.sin()).abs() < 1e-5);
    }

    #[test]
    fn rejects_unsorted_knots() {
        let r = CubicSpline::new(vec![0.0, 2.0, 1.0], vec![0.0; 3], EndCondition::Natural, EndCondition::Natural);
        assert!(r.is_err());
    }

    #[test]
    fn hermite_interpolates_endpoints() {
        assert!((hermite(1.0, 2.0, 3.0, 5.0, 0.0, 0.0, 1.0) - 3.0).abs() < 1e-15);
        assert!((hermite(1.0, 2.0, 3.0, 5.0, 0.0, 0.0, 2.0) - 5.0).abs() < 1e-15);
    }
}
