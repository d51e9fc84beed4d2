//! Interpolating cubic splines in second-derivative (moment) form.

use crate::error::{invalid, Result};

/// End conditions of an interpolating cubic spline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Boundary {
    /// Zero second derivative at both ends.
    Natural,
    /// Continuous third derivative at the second and penultimate knots.
    NotAKnot,
    /// Prescribed first derivatives at the ends.
    Clamped { left: f64, right: f64 },
}

#[derive(Debug, Clone)]
pub struct CubicSpline {
    knots: Vec<f64>,
    values: Vec<f64>,
    moments: Vec<f64>,
}

impl CubicSpline {
    pub fn new(knots: &[f64], values: &[f64], boundary: Boundary) -> Result<Self> {
        let n = knots.len();
        if n != values.len() {
            return Err(invalid(format!(
                "spline needs matching knot and value counts, got {} and {}",
                n,
                values.len()
            )));
        }
        if n < 2 {
            return Err(invalid("spline needs at least two knots"));
        }
        if knots.iter().chain(values).any(|v| !v.is_finite()) {
            return Err(invalid("spline knots and values must be finite"));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("spline knots must be strictly increasing"));
        }
        if boundary == Boundary::NotAKnot && n < 4 {
            return Err(invalid("not-a-knot end conditions need at least four knots"));
        }
        let moments = solve_moments(knots, values, boundary);
        Ok(Self { knots: knots.to_vec(), values: values.to_vec(), moments })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn moments(&self) -> &[f64] {
        &self.moments
    }

    fn interval(&self, x: f64) -> usize {
        let last = self.knots.len() - 2;
        let idx = self.knots.partition_point(|&k| k <= x);
        idx.saturating_sub(1).min(last)
    }

    /// Value at `x`; outside the knot range the end cubic is extended.
    pub fn eval(&self, x: f64) -> f64 {
        let i = self.interval(x);
        let (x0, x1) = (self.knots[i], self.knots[i + 1]);
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.moments[i], self.moments[i + 1]);
        let h = x1 - x0;
        let a = x1 - x;
        let b = x - x0;
        (m0 * a * a * a + m1 * b * b * b) / (6.0 * h)
            + (y0 / h - m0 * h / 6.0) * a
            + (y1 / h - m1 * h / 6.0) * b
    }

    /// First, second and third derivatives at `x`.
    pub fn derivatives(&self, x: f64) -> (f64, f64, f64) {
        let i = self.interval(x);
        let (x0, x1) = (self.knots[i], self.knots[i + 1]);
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.moments[i], self.moments[i + 1]);
        let h = x1 - x0;
        let a = x1 - x;
        let b = x - x0;
        let d1 = (-m0 * a * a + m1 * b * b) / (2.0 * h) + (y1 - y0) / h - (m1 - m0) * h / 6.0;
        let d2 = (m0 * a + m1 * b) / h;
        let d3 = (m1 - m0) / h;
        (d1, d2, d3)
    }
}

fn solve_moments(x: &[f64], y: &[f64], boundary: Boundary) -> Vec<f64> {
    let n = x.len() - 1;
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n).map(|i| (y[i + 1] - y[i]) / h[i]).collect();

    // interior rows: h[i-1] M[i-1] + 2 (h[i-1] + h[i]) M[i] + h[i] M[i+1] = 6 (delta[i] - delta[i-1])
    let mut sub = vec![0.0; n + 1];
    let mut diag = vec![0.0; n + 1];
    let mut sup = vec![0.0; n + 1];
    let mut rhs = vec![0.0; n + 1];
    for i in 1..n {
        sub[i] = h[i - 1];
        diag[i] = 2.0 * (h[i - 1] + h[i]);
        sup[i] = h[i];
        rhs[i] = 6.0 * (delta[i] - delta[i - 1]);
    }

    match boundary {
        Boundary::Natural => {
            diag[0] = 1.0;
            diag[n] = 1.0;
            thomas(&sub, &diag, &sup, &rhs)
        }
        Boundary::Clamped { left, right } => {
            diag[0] = 2.0 * h[0];
            sup[0] = h[0];
            rhs[0] = 6.0 * (delta[0] - left);
            sub[n] = h[n - 1];
            diag[n] = 2.0 * h[n - 1];
            rhs[n] = 6.0 * (right - delta[n - 1]);
            thomas(&sub, &diag, &sup, &rhs)
        }
        Boundary::NotAKnot => {
            // eliminate M[0] and M[n] with the third-derivative continuity
            // relations and solve the reduced system on M[1..n]
            let r0 = h[0] / h[1];
            diag[1] = 3.0 * h[0] + 2.0 * h[1] + h[0] * r0;
            sup[1] = h[1] - h[0] * r0;
            let rn = h[n - 1] / h[n - 2];
            sub[n - 1] = h[n - 2] - h[n - 1] * rn;
            diag[n - 1] = 2.0 * h[n - 2] + 3.0 * h[n - 1] + h[n - 1] * rn;
            let inner = thomas(&sub[1..n], &diag[1..n], &sup[1..n], &rhs[1..n]);
            let mut m = vec![0.0; n + 1];
            m[1..n].copy_from_slice(&inner);
            m[0] = m[1] * (1.0 + r0) - m[2] * r0;
            m[n] = m[n - 1] * (1.0 + rn) - m[n - 2] * rn;
            m
        }
    }
}

/// Tridiagonal solve; `sub[0]` and `sup[last]` are ignored.
fn thomas(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
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

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    /// Dense oracle: unknowns are the four cubic coefficients on every
    /// interval; rows impose interpolation, C1 and C2 continuity and the end
    /// conditions. Returns per-interval `[a, b, c, d]` in powers of `x - x_i`.
    fn dense_oracle(x: &[f64], y: &[f64], boundary: Boundary) -> Vec<[f64; 4]> {
        let n = x.len() - 1;
        let size = 4 * n;
        let mut a = DMatrix::<f64>::zeros(size, size);
        let mut r = DVector::<f64>::zeros(size);
        let mut row = 0;
        let h = |i: usize| x[i + 1] - x[i];
        for i in 0..n {
            // p_i(x_i) = y_i, p_i(x_{i+1}) = y_{i+1}
            a[(row, 4 * i)] = 1.0;
            r[row] = y[i];
            row += 1;
            for k in 0..4 {
                a[(row, 4 * i + k)] = h(i).powi(k as i32);
            }
            r[row] = y[i + 1];
            row += 1;
        }
        for i in 0..n - 1 {
            // first and second derivative continuity at x_{i+1}
            for k in 1..4 {
                a[(row, 4 * i + k)] = k as f64 * h(i).powi(k as i32 - 1);
            }
            a[(row, 4 * (i + 1) + 1)] = -1.0;
            row += 1;
            a[(row, 4 * i + 2)] = 2.0;
            a[(row, 4 * i + 3)] = 6.0 * h(i);
            a[(row, 4 * (i + 1) + 2)] = -2.0;
            row += 1;
        }
        match boundary {
            Boundary::Natural => {
                a[(row, 2)] = 2.0;
                row += 1;
                a[(row, 4 * (n - 1) + 2)] = 2.0;
                a[(row, 4 * (n - 1) + 3)] = 6.0 * h(n - 1);
                row += 1;
            }
            Boundary::Clamped { left, right } => {
                a[(row, 1)] = 1.0;
                r[row] = left;
                row += 1;
                let hl = h(n - 1);
                a[(row, 4 * (n - 1) + 1)] = 1.0;
                a[(row, 4 * (n - 1) + 2)] = 2.0 * hl;
                a[(row, 4 * (n - 1) + 3)] = 3.0 * hl * hl;
                r[row] = right;
                row += 1;
            }
            Boundary::NotAKnot => {
                a[(row, 3)] = 1.0;
                a[(row, 4 + 3)] = -1.0;
                row += 1;
                a[(row, 4 * (n - 2) + 3)] = 1.0;
                a[(row, 4 * (n - 1) + 3)] = -1.0;
                row += 1;
            }
        }
        assert_eq!(row, size);
        let sol = a.lu().solve(&r).expect("oracle system is nonsingular");
        (0..n).map(|i| [sol[4 * i], sol[4 * i + 1], sol[4 * i + 2], sol[4 * i + 3]]).collect()
    }

    fn oracle_eval(x: &[f64], coef: &[[f64; 4]], t: f64) -> f64 {
        let i = x.partition_point(|&k| k <= t).saturating_sub(1).min(coef.len() - 1);
        let u = t - x[i];
        let c = coef[i];
        c[0] + u * (c[1] + u * (c[2] + u * c[3]))
    }

    fn knots_and_values() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (4usize..10).prop_flat_map(|n| {
            (prop::collection::vec(0.2f64..1.5, n - 1), prop::collection::vec(-3.0f64..3.0, n)).prop_map(
                |(gaps, ys)| {
                    let mut xs = vec![-1.0];
                    for g in gaps {
                        xs.push(xs.last().unwrap() + g);
                    }
                    (xs, ys)
                },
            )
        })
    }

    proptest! {
        #[test]
        fn agrees_with_dense_oracle((xs, ys) in knots_and_values(), l in -2.0f64..2.0, r in -2.0f64..2.0) {
            for boundary in [Boundary::Natural, Boundary::NotAKnot, Boundary::Clamped { left: l, right: r }] {
                let spline = CubicSpline::new(&xs, &ys, boundary).unwrap();
                let coef = dense_oracle(&xs, &ys, boundary);
                for (k, &xk) in xs.iter().enumerate() {
                    prop_assert!((spline.eval(xk) - ys[k]).abs() < 1e-12);
                }
                let lo = xs[0];
                let hi = *xs.last().unwrap();
                for j in 0..=200 {
                    let t = lo + (hi - lo) * j as f64 / 200.0;
                    let diff = (spline.eval(t) - oracle_eval(&xs, &coef, t)).abs();
                    prop_assert!(diff < 1e-9, "{:?} at {}: {}", boundary, t, diff);
                }
                // third derivative is constant on each interval
                for (i, c) in coef.iter().enumerate() {
                    let mid = 0.5 * (xs[i] + xs[i + 1]);
                    let (_, _, d3) = spline.derivatives(mid);
                    prop_assert!((d3 - 6.0 * c[3]).abs() < 1e-7 * (1.0 + d3.abs()));
                    let near = xs[i] + 1e-3 * (xs[i + 1] - xs[i]);
                    prop_assert!((spline.derivatives(near).2 - d3).abs() < 1e-9 * (1.0 + d3.abs()));
                }
            }
        }
    }

    #[test]
    fn boundary_conditions_hold() {
        let xs = [0.0, 0.7, 1.5, 2.0, 3.1];
        let ys = [1.0, -0.4, 0.3, 2.0, 0.5];
        let nat = CubicSpline::new(&xs, &ys, Boundary::Natural).unwrap();
        assert!(nat.derivatives(0.0).1.abs() < 1e-12);
        assert!(nat.derivatives(3.1).1.abs() < 1e-12);
        let cl = CubicSpline::new(&xs, &ys, Boundary::Clamped { left: 0.0, right: 0.0 }).unwrap();
        assert!(cl.derivatives(0.0).0.abs() < 1e-12);
        assert!(cl.derivatives(3.1).0.abs() < 1e-12);
        let nak = CubicSpline::new(&xs, &ys, Boundary::NotAKnot).unwrap();
        let d3a = nak.derivatives(0.3).2;
        let d3b = nak.derivatives(1.0).2;
        assert!((d3a - d3b).abs() < 1e-10);
    }

    #[test]
    fn constant_data_gives_constant_spline() {
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0];
        let ys = [1.7; 5];
        for boundary in [Boundary::Natural, Boundary::NotAKnot, Boundary::Clamped { left: 0.0, right: 0.0 }] {
            let s = CubicSpline::new(&xs, &ys, boundary).unwrap();
            for j in 0..=40 {
                assert!((s.eval(j as f64 * 0.1) - 1.7).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(CubicSpline::new(&[0.0, 1.0], &[1.0], Boundary::Natural).is_err());
        assert!(CubicSpline::new(&[0.0, 0.0, 1.0], &[1.0; 3], Boundary::Natural).is_err());
        assert!(CubicSpline::new(&[0.0, 1.0, 2.0], &[1.0; 3], Boundary::NotAKnot).is_err());
        assert!(CubicSpline::new(&[0.0, 1.0], &[1.0, f64::NAN], Boundary::Natural).is_err());
    }
}
