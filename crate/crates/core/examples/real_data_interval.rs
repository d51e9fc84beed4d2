//! A single 2 x 2 factorial with an external estimate of sigma: compute the
//! standard 95% interval and the new one for the simple effect of factor 1.

use nalgebra::DVector;
use priorci::bsfun::knots_with_step;
use priorci::optimize::{solve, SolveConfig};
use priorci::regress::{
    factorial_2x2, fit, realize_interval, standard_interval, ExternalScale, RegressionProblem,
};
use priorci::DegreesOfFreedom;

fn main() -> priorci::Result<()> {
    let problem = RegressionProblem {
        x: factorial_2x2(1),
        y: Some(DVector::from_vec(vec![87.2, 88.4, 86.7, 89.2])),
        a: DVector::from_vec(vec![0.0, 2.0, 0.0, -2.0]),
        c: DVector::from_vec(vec![0.0, 0.0, 0.0, 1.0]),
        t: 0.0,
        alpha: 0.05,
        external_scale: Some(ExternalScale { sigma_hat: 0.8, dof: DegreesOfFreedom::Infinite }),
    };
    let geom = fit(&problem)?;
    let est = geom.estimates.expect("response supplied");
    println!("theta_hat = {}, tau_hat = {}, sigma_hat = {}", est.theta_hat, est.tau_hat, est.sigma_hat);
    println!("v11 = {}, v12 = {}, v22 = {}, rho = {:.6}", geom.v11, geom.v12, geom.v22, geom.rho);

    let standard = standard_interval(&geom)?;
    println!("standard interval [{:.5}, {:.5}]", standard.lower, standard.upper);

    let config = SolveConfig::new(0.2, 6.0, knots_with_step(6.0, 0.75)?, geom.rho, geom.dof);
    let report = solve(&config)?;
    let new = realize_interval(&geom, &report.bs)?;
    println!("new interval      [{:.5}, {:.5}]", new.lower, new.upper);
    println!("width ratio {:.4}", new.width() / standard.width());
    Ok(())
}
