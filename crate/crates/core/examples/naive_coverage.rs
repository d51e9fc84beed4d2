//! Coverage of the interval obtained by first testing whether the second
//! coefficient equals its guessed value, then using the selected model.

use priorci::bsfun::NaiveBs;
use priorci::perfeval::{curve, gamma_grid, minimum_coverage, EvalSettings};
use priorci::regress::{fit, RegressionProblem};

fn main() -> priorci::Result<()> {
    let problem = RegressionProblem::factorial_example(20);
    let geom = fit(&problem)?;
    println!("rho = {:.6}, m = {}", geom.rho, geom.dof);

    let naive = NaiveBs::from_test_level(0.05, geom.rho, 0.05, geom.dof)?;
    println!("preliminary test critical value q = {:.6}", naive.q());

    let settings = EvalSettings::default();
    let grid = gamma_grid(8.0, 0.5)?;
    let c = curve(&naive, geom.rho, &grid, &settings)?;
    for (g, cov) in c.gamma_grid.iter().zip(&c.coverage) {
        println!("gamma = {g:4.1}  coverage = {cov:.4}");
    }
    let (g_min, c_min) = minimum_coverage(&naive, geom.rho, 8.0, 0.05, &settings)?;
    println!("minimum coverage {c_min:.4} at gamma = {g_min:.3}");
    Ok(())
}
