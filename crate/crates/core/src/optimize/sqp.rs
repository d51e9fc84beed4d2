//! Sequential quadratic programming for `min f(z)` subject to `c(z) >= 0`
//! and simple bounds, with a damped BFGS Hessian of the Lagrangian, an L1
//! merit function and a box trust region on the step.

use nalgebra::{DMatrix, DVector};

use super::qp::ElasticQp;
use crate::error::Result;

pub(crate) trait Nlp: Sync {
    fn objective(&self, z: &DVector<f64>) -> Result<(f64, DVector<f64>)>;
    fn constraints(&self, z: &DVector<f64>) -> Result<DVector<f64>>;
    fn constraints_with_jacobian(&self, z: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)>;
}

#[derive(Debug, Clone)]
pub(crate) struct SqpSettings {
    pub max_iterations: usize,
    pub feasibility_tol: f64,
    pub objective_tol: f64,
    pub step_tol: f64,
    pub initial_radius: f64,
    pub max_radius: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct SqpOutcome {
    pub z: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn violation(c: &DVector<f64>) -> (f64, f64) {
    c.iter().fold((0.0, 0.0), |(sum, max), &v| {
        let bad = (-v).max(0.0);
        (sum + bad, f64::max(max, bad))
    })
}

pub(crate) fn minimize(
    nlp: &dyn Nlp,
    z0: DVector<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    settings: &SqpSettings,
) -> Result<SqpOutcome> {
    let n = z0.len();
    let mut z = z0.clone();
    // Work with c + tol/2 >= 0: constraints that are flat and sit at zero up
    // to rounding would otherwise demand huge steps or multipliers.
    let margin = 0.5 * settings.feasibility_tol;
    let constraints = |z: &DVector<f64>| nlp.constraints(z).map(|c| c.add_scalar(margin));
    let constraints_with_jacobian =
        |z: &DVector<f64>| nlp.constraints_with_jacobian(z).map(|(c, j)| (c.add_scalar(margin), j));
    let (mut f, mut g) = nlp.objective(&z)?;
    let (mut c, mut jac) = constraints_with_jacobian(&z)?;
    let mut hess = DMatrix::<f64>::identity(n, n);
    let mut nu = 1.0;
    let mut radius = settings.initial_radius;
    let mut converged = false;
    let mut iterations = 0;

    // best feasible iterate seen, returned if the loop does not converge
    let mut best = (z.clone(), f, violation(&c).1);

    for iter in 1..=settings.max_iterations {
        iterations = iter;
        let lo = DVector::from_fn(n, |i, _| (lower[i] - z[i]).max(-radius));
        let hi = DVector::from_fn(n, |i, _| (upper[i] - z[i]).min(radius));
        let penalty = 1e3 * (1.0 + g.amax());
        let qp = ElasticQp { h: &hess, g: &g, c: &c, jac: &jac, lo: &lo, hi: &hi, penalty }.solve()?;
        let p = qp.step;
        let mu = qp.multipliers;

        let (viol_sum, viol_max) = violation(&c);
        let predicted = g.dot(&p);
        if viol_max <= margin
            && (p.amax() <= settings.step_tol || predicted.abs() <= settings.objective_tol * (1.0 + f.abs()))
        {
            converged = true;
            break;
        }

        nu = f64::max(nu, 1.1 * mu.amax());
        let lin_viol: f64 = (&c + &jac * &p).iter().map(|v| (-v).max(0.0)).sum();
        let slope = predicted - nu * (viol_sum - lin_viol);
        let merit = |fv: f64, cv: &DVector<f64>| fv + nu * violation(cv).0;
        let merit0 = f + nu * viol_sum;

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..20 {
            let trial = &z + step * &p;
            let (ft, _) = nlp.objective(&trial)?;
            let ct = constraints(&trial)?;
            if merit(ft, &ct) <= merit0 + 1e-4 * step * slope.min(0.0) {
                accepted = Some(trial);
                break;
            }
            // second-order correction on the full step
            if step == 1.0 {
                let c_soc = &ct - &jac * &p;
                let soc =
                    ElasticQp { h: &hess, g: &g, c: &c_soc, jac: &jac, lo: &lo, hi: &hi, penalty }.solve();
                if let Ok(soc) = soc {
                    let trial = &z + &soc.step;
                    let (fs, _) = nlp.objective(&trial)?;
                    let cs = constraints(&trial)?;
                    if merit(fs, &cs) <= merit0 + 1e-4 * slope.min(0.0) {
                        accepted = Some(trial);
                        break;
                    }
                }
            }
            step *= 0.5;
        }

        let Some(z_new) = accepted else {
            // no progress along this direction: shrink the region and restart the curvature model
            if p.amax() <= 1e3 * settings.step_tol && viol_max <= margin {
                converged = true;
                break;
            }
            radius = (0.25 * p.amax()).max(settings.step_tol);
            hess = DMatrix::identity(n, n);
            continue;
        };

        let (f_new, g_new) = nlp.objective(&z_new)?;
        let (c_new, jac_new) = constraints_with_jacobian(&z_new)?;

        let s = &z_new - &z;
        let grad_lag = |g: &DVector<f64>, j: &DMatrix<f64>| g - j.transpose() * &mu;
        let mut y = grad_lag(&g_new, &jac_new) - grad_lag(&g, &jac);
        let bs = &hess * &s;
        let sbs = s.dot(&bs);
        let sy = s.dot(&y);
        if sbs > 0.0 {
            if sy < 0.2 * sbs {
                let theta = 0.8 * sbs / (sbs - sy);
                y = theta * &y + (1.0 - theta) * &bs;
            }
            let sy = s.dot(&y);
            if sy > 1e-14 * sbs {
                hess += &y * y.transpose() / sy - &bs * bs.transpose() / sbs;
            }
        }

        let full = s.amax() >= 0.9 * radius;
        if full && step == 1.0 {
            radius = (2.0 * radius).min(settings.max_radius);
        } else if step < 1.0 {
            radius = (s.amax()).max(settings.step_tol);
        }

        z = z_new;
        f = f_new;
        g = g_new;
        c = c_new;
        jac = jac_new;
        let vmax = violation(&c).1;
        if vmax <= margin && (best.2 > settings.feasibility_tol || f < best.1) {
            best = (z.clone(), f, vmax);
        }
    }

    if !converged && violation(&c).1 > margin && best.2 <= margin {
        z = best.0;
        f = best.1;
    }
    Ok(SqpOutcome { z, objective: f, iterations, converged })
}
