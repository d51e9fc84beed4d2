//! Least-squares fit and the reduction to `(theta_hat, tau_hat, sigma_hat)`
//! plus the scaled covariance `V` of `(theta_hat, tau_hat)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bsfun::{check_alpha, standard_multiplier, IntervalShape};
use crate::dist::DegreesOfFreedom;
use crate::error::{invalid, Error, Result};

/// An estimate of `sigma` obtained outside the regression, with
/// `sigma_hat^2 / sigma^2 ~ chi^2_m / m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalScale {
    pub sigma_hat: f64,
    pub dof: DegreesOfFreedom,
}

/// `Y = X beta + eps`, parameter of interest `theta = a' beta`, prior
/// information `tau = c' beta - t = 0`, confidence level `1 - alpha`.
#[derive(Debug, Clone)]
pub struct RegressionProblem {
    pub x: DMatrix<f64>,
    pub y: Option<DVector<f64>>,
    pub a: DVector<f64>,
    pub c: DVector<f64>,
    pub t: f64,
    pub alpha: f64,
    /// When set, `sigma_hat` and its degrees of freedom come from here rather
    /// than from the residuals (and `n = p` is allowed).
    pub external_scale: Option<ExternalScale>,
}

impl RegressionProblem {
    /// Replicated `2 x 2` factorial with `theta = 2 (beta_1 - beta_12)`, the
    /// effect of factor 1 with factor 2 at its low level, and the prior guess
    /// that the interaction `beta_12` is zero.
    pub fn factorial_example(replicates: usize) -> Self {
        Self {
            x: factorial_2x2(replicates),
            y: None,
            a: DVector::from_vec(vec![0.0, 2.0, 0.0, -2.0]),
            c: DVector::from_vec(vec![0.0, 0.0, 0.0, 1.0]),
            t: 0.0,
            alpha: 0.05,
            external_scale: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimates {
    pub theta_hat: f64,
    /// `c' beta_hat - t`.
    pub tau_hat: f64,
    pub sigma_hat: f64,
}

/// Everything downstream code needs from the regression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub v11: f64,
    pub v12: f64,
    pub v22: f64,
    pub rho: f64,
    pub dof: DegreesOfFreedom,
    pub alpha: f64,
    pub estimates: Option<Estimates>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
}

impl ConfidenceInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

impl Geometry {
    pub fn new(
        v11: f64,
        v12: f64,
        v22: f64,
        dof: DegreesOfFreedom,
        alpha: f64,
        estimates: Option<Estimates>,
    ) -> Result<Self> {
        if !(v11 > 0.0 && v22 > 0.0) {
            return Err(invalid(format!("v11 and v22 must be positive, got {v11}, {v22}")));
        }
        check_alpha(alpha)?;
        dof.validate()?;
        let rho = v12 / (v11 * v22).sqrt();
        if !(rho.abs() <= 1.0 + 1e-12) {
            return Err(invalid(format!("|rho| = {} exceeds 1", rho.abs())));
        }
        if let Some(e) = &estimates {
            if !(e.sigma_hat >= 0.0) || !e.theta_hat.is_finite() || !e.tau_hat.is_finite() {
                return Err(invalid("estimates must be finite with sigma_hat >= 0"));
            }
        }
        Ok(Self { v11, v12, v22, rho: rho.clamp(-1.0, 1.0), dof, alpha, estimates })
    }

    fn require_estimates(&self) -> Result<Estimates> {
        self.estimates.ok_or_else(|| invalid("this geometry was built without a response vector"))
    }

    /// `tau_hat / (sigma_hat sqrt(v22))`.
    pub fn test_statistic(&self) -> Result<f64> {
        let e = self.require_estimates()?;
        if !(e.sigma_hat > 0.0) {
            return Err(invalid("the test statistic needs sigma_hat > 0"));
        }
        Ok(e.tau_hat / (e.sigma_hat * self.v22.sqrt()))
    }
}

/// Coded `2 x 2` factorial design with columns `1, x1, x2, x1 x2`; each
/// replicate lists the cells `(-1,-1), (1,-1), (-1,1), (1,1)` in that order.
pub fn factorial_2x2(replicates: usize) -> DMatrix<f64> {
    let cells = [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)];
    let n = 4 * replicates;
    DMatrix::from_fn(n, 4, |i, j| {
        let (x1, x2) = cells[i % 4];
        match j {
            0 => 1.0,
            1 => x1,
            2 => x2,
            _ => x1 * x2,
        }
    })
}

/// Least-squares fit via Householder QR.
pub fn fit(problem: &RegressionProblem) -> Result<Geometry> {
    let (n, p) = problem.x.shape();
    check_alpha(problem.alpha)?;
    if problem.a.len() != p || problem.c.len() != p {
        return Err(invalid(format!(
            "a and c must have length p = {p}, got {} and {}",
            problem.a.len(),
            problem.c.len()
        )));
    }
    if problem.x.iter().any(|v| !v.is_finite()) {
        return Err(invalid("design matrix has non-finite entries"));
    }
    let aa = problem.a.dot(&problem.a);
    let cc = problem.c.dot(&problem.c);
    let ac = problem.a.dot(&problem.c);
    if aa == 0.0 {
        return Err(invalid("a must be nonzero"));
    }
    if cc == 0.0 || aa * cc - ac * ac <= 1e-12 * aa * cc {
        return Err(invalid("a and c must be linearly independent"));
    }
    if n < p {
        return Err(Error::SingularDesign(format!("n = {n} rows for p = {p} columns")));
    }
    match (&problem.external_scale, n == p) {
        (None, true) => {
            return Err(invalid("n must exceed p unless an external estimate of sigma is supplied"))
        }
        (Some(scale), _) => {
            scale.dof.validate()?;
            if !(scale.sigma_hat >= 0.0) {
                return Err(invalid("external sigma_hat must be nonnegative"));
            }
        }
        _ => {}
    }

    let qr = problem.x.clone().qr();
    let r = qr.r();
    let max_diag = (0..p).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    let scale_ref = max_diag.max(f64::MIN_POSITIVE);
    if let Some(i) = (0..p).find(|&i| r[(i, i)].abs() <= 1e-10 * scale_ref) {
        return Err(Error::SingularDesign(format!(
            "column {i} is (numerically) a combination of earlier columns"
        )));
    }

    // V = [a c]' (X'X)^{-1} [a c] = (R^{-T} a, R^{-T} c) Gram matrix
    let rt = r.transpose();
    let za = rt
        .solve_lower_triangular(&problem.a)
        .ok_or_else(|| Error::SingularDesign("triangular solve failed".into()))?;
    let zc = rt
        .solve_lower_triangular(&problem.c)
        .ok_or_else(|| Error::SingularDesign("triangular solve failed".into()))?;
    let v11 = za.dot(&za);
    let v12 = za.dot(&zc);
    let v22 = zc.dot(&zc);

    let dof = match &problem.external_scale {
        Some(scale) => scale.dof,
        None => DegreesOfFreedom::finite((n - p) as u32)?,
    };

    let estimates = match &problem.y {
        None => None,
        Some(y) => {
            if y.len() != n {
                return Err(invalid(format!("response has {} rows, design has {n}", y.len())));
            }
            let qty = qr.q().transpose() * y;
            let beta = r
                .solve_upper_triangular(&qty)
                .ok_or_else(|| Error::SingularDesign("triangular solve failed".into()))?;
            let sigma_hat = match &problem.external_scale {
                Some(scale) => scale.sigma_hat,
                None => {
                    let resid = y - &problem.x * &beta;
                    (resid.dot(&resid) / (n - p) as f64).sqrt()
                }
            };
            Some(Estimates {
                theta_hat: problem.a.dot(&beta),
                tau_hat: problem.c.dot(&beta) - problem.t,
                sigma_hat,
            })
        }
    };

    Geometry::new(v11, v12, v22, dof, problem.alpha, estimates)
}

/// `[theta_hat +- t_{m,1-alpha/2} sqrt(v11) sigma_hat]`.
pub fn standard_interval(geom: &Geometry) -> Result<ConfidenceInterval> {
    let e = geom.require_estimates()?;
    let t = standard_multiplier(geom.alpha, geom.dof)?;
    let half = t * geom.v11.sqrt() * e.sigma_hat;
    Ok(ConfidenceInterval { lower: e.theta_hat - half, upper: e.theta_hat + half })
}

/// `J(b, s)` evaluated at the observed data.
pub fn realize_interval(geom: &Geometry, bs: &dyn IntervalShape) -> Result<ConfidenceInterval> {
    let e = geom.require_estimates()?;
    if bs.dof() != geom.dof || bs.alpha() != geom.alpha {
        return Err(invalid(format!(
            "interval functions were built for alpha = {}, dof = {} but the data have alpha = {}, dof = {}",
            bs.alpha(),
            bs.dof(),
            geom.alpha,
            geom.dof
        )));
    }
    let x = geom.test_statistic()?;
    let scale = geom.v11.sqrt() * e.sigma_hat;
    let centre = e.theta_hat - scale * bs.b(x);
    let half = scale * bs.s(x.abs());
    Ok(ConfidenceInterval { lower: centre - half, upper: centre + half })
}
