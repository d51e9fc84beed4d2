//! Optimise `b` and `s` for the replicated 2 x 2 factorial and report the
//! expected gain and maximum potential loss.
//!
//! `cargo run --release --example solve_factorial -- [lambda]`

use priorci::bsfun::even_knots;
use priorci::optimize::{solve, SolveConfig};
use priorci::regress::{fit, RegressionProblem};

fn main() -> priorci::Result<()> {
    let lambda: f64 = std::env::args().nth(1).map_or(0.2, |a| a.parse().expect("lambda"));
    let geom = fit(&RegressionProblem::factorial_example(20))?;
    let config = SolveConfig::new(lambda, 6.0, even_knots(6.0, 6)?, geom.rho, geom.dof);
    let report = solve(&config)?;

    println!("lambda = {lambda}");
    println!("b at knots 1..5: {:?}", report.bs.b_values());
    println!("s at knots 0..5: {:?}", report.bs.s_values());
    println!("objective            {:.6}", report.objective_value);
    println!("e^2(0)               {:.4}", report.e_squared_at_zero);
    println!("expected gain        {:.4}", report.expected_gain);
    println!("max potential loss   {:.4}  (gamma = {:.3})", report.max_potential_loss, report.max_loss_gamma);
    println!("gain / loss          {:.4}", report.gain_loss_ratio);
    println!(
        "min coverage (fine)  {:.6}  (gamma = {:.3})",
        report.min_coverage_on_fine_grid, report.min_coverage_gamma
    );
    println!(
        "converged {} after {} iterations, {:.1}s",
        report.converged, report.iterations, report.wall_time_secs
    );
    Ok(())
}
