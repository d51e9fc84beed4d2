//! Re-solve the factorial problem with finer knot spacing and a larger
//! cutoff to see how much the performance changes.

use priorci::bsfun::even_knots;
use priorci::optimize::{sensitivity_sweep, SolveConfig, Sweep};
use priorci::regress::{fit, RegressionProblem};

fn main() -> priorci::Result<()> {
    let geom = fit(&RegressionProblem::factorial_example(20))?;
    let base = SolveConfig::new(0.2, 6.0, even_knots(6.0, 6)?, geom.rho, geom.dof);

    for (label, sweep) in
        [("knot step", Sweep::KnotStep(vec![1.0, 0.6, 0.5])), ("d", Sweep::Cutoff(vec![4.0, 6.0, 8.0]))]
    {
        let values = match &sweep {
            Sweep::KnotStep(v) | Sweep::Cutoff(v) | Sweep::Lambda(v) => v.clone(),
        };
        for (v, result) in values.iter().zip(sensitivity_sweep(&base, &sweep)?) {
            match result {
                Ok(r) => println!(
                    "{label} = {v}: e^2(0) = {:.4}, gain {:.4}, loss {:.4}, converged {}",
                    r.e_squared_at_zero, r.expected_gain, r.max_potential_loss, r.converged
                ),
                Err(e) => println!("{label} = {v}: failed: {e}"),
            }
        }
    }
    Ok(())
}
