//! Coverage and squared scaled expected length of an optimised interval over
//! a gamma grid, written as CSV.
//!
//! `cargo run --release --example performance_curves -- [out.csv]`

use std::fs::File;

use priorci::bsfun::even_knots;
use priorci::optimize::{solve, SolveConfig};
use priorci::perfeval::{curve, gamma_grid, EvalSettings};
use priorci::regress::{fit, RegressionProblem};

fn main() -> priorci::Result<()> {
    let geom = fit(&RegressionProblem::factorial_example(20))?;
    let report = solve(&SolveConfig::new(0.2, 6.0, even_knots(6.0, 6)?, geom.rho, geom.dof))?;

    let grid = gamma_grid(10.0, 0.1)?;
    let c = curve(&report.bs, geom.rho, &grid, &EvalSettings::default())?;
    let (g_c, min_c) = c.min_coverage();
    let (g_e, max_e) = c.max_e_squared();
    println!("min coverage {min_c:.6} at gamma = {g_c}");
    println!("max e^2      {max_e:.4} at gamma = {g_e}");
    println!("e^2(0)       {:.4}", c.e_squared[0]);

    match std::env::args().nth(1) {
        Some(path) => {
            let file =
                File::create(&path).map_err(|source| priorci::Error::Io { path: path.clone(), source })?;
            c.write_csv(file).map_err(|source| priorci::Error::Io { path, source })?;
        }
        None => print!("{}", c.to_csv_string()),
    }
    Ok(())
}
