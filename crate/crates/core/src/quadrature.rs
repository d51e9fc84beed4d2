//! Composite Gauss-Legendre rules.

use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// `n`-point rule, nodes found by Newton iteration on the three-term
    /// Legendre recurrence.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "a Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Append the rule mapped onto `[a, b]` to `out` as `(node, weight)`.
    pub fn push_mapped(&self, a: f64, b: f64, out: &mut Vec<(f64, f64)>) {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (&t, &w) in self.nodes.iter().zip(&self.weights) {
            out.push((mid + half * t, half * w));
        }
    }

    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes.iter().zip(&self.weights).map(|(&t, &w)| w * f(mid + half * t)).sum::<f64>() * half
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let d = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite rule over consecutive `breaks`, splitting any panel wider than
/// `max_width` into equal sub-panels.
pub fn composite(rule: &GaussLegendre, breaks: &[f64], max_width: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for pair in breaks.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if b <= a {
            continue;
        }
        let pieces = ((b - a) / max_width).ceil().max(1.0) as usize;
        let h = (b - a) / pieces as f64;
        for j in 0..pieces {
            let lo = a + h * j as f64;
            let hi = if j + 1 == pieces { b } else { lo + h };
            rule.push_mapped(lo, hi, &mut out);
        }
    }
    out
}

/// Adaptive integration by panel bisection, accepting a panel once its 10- and
/// 21-point Gauss-Legendre estimates agree.
pub fn adaptive(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let coarse = GaussLegendre::new(10);
    let fine = GaussLegendre::new(21);
    adaptive_rec(f, a, b, tol, &coarse, &fine, 0)
}

fn adaptive_rec(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
    coarse: &GaussLegendre,
    fine: &GaussLegendre,
    depth: usize,
) -> f64 {
    let lo = coarse.integrate(a, b, f);
    let hi = fine.integrate(a, b, f);
    if depth >= 3 && (hi - lo).abs() <= tol || depth >= 40 {
        return hi;
    }
    let mid = 0.5 * (a + b);
    adaptive_rec(f, a, mid, 0.5 * tol, coarse, fine, depth + 1)
        + adaptive_rec(f, mid, b, 0.5 * tol, coarse, fine, depth + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        for n in 1..=20 {
            let rule = GaussLegendre::new(n);
            let wsum: f64 = rule.weights.iter().sum();
            assert!((wsum - 2.0).abs() < 1e-13, "n = {n}");
            // degree 2n - 1 is exact
            let deg = 2 * n - 1;
            let got = rule.integrate(0.0, 1.0, |x| x.powi(deg as i32));
            assert!((got - 1.0 / (deg as f64 + 1.0)).abs() < 1e-13, "n = {n}");
        }
    }

    #[test]
    fn nodes_sorted_and_symmetric() {
        let rule = GaussLegendre::new(7);
        for w in rule.nodes.windows(2) {
            assert!(w[0] < w[1]);
        }
        for i in 0..7 {
            assert_eq!(rule.nodes[i], -rule.nodes[6 - i]);
        }
    }

    #[test]
    fn composite_splits_wide_panels() {
        let rule = GaussLegendre::new(4);
        let pts = composite(&rule, &[0.0, 1.0, 3.0], 0.5);
        assert_eq!(pts.len(), 4 * (2 + 4));
        let total: f64 = pts.iter().map(|&(x, w)| w * x.exp()).sum();
        assert!((total - (3.0_f64.exp() - 1.0)).abs() < 1e-10);
    }

    #[test]
    fn adaptive_handles_peaks() {
        let f = |x: f64| (-(x - 0.3).powi(2) / 1e-2).exp();
        let got = adaptive(&f, -5.0, 5.0, 1e-12);
        let exact = (std::f64::consts::PI * 1e-2).sqrt();
        assert!((got - exact).abs() < 1e-10);
    }
}
