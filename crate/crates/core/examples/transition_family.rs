//! Intervals that move continuously from the one assuming `tau = 0` to the
//! standard interval as the test statistic grows, for large `n - p`.

use std::sync::Arc;

use priorci::bsfun::{IntervalShape, TransitionBs};
use priorci::perfeval::{maximum_e_squared, minimum_coverage, scaled_expected_length, EvalSettings};

fn main() -> priorci::Result<()> {
    let rho = -std::f64::consts::FRAC_1_SQRT_2;
    let settings = EvalSettings::default();
    for width in [1.0, 3.0, 6.0] {
        let g = Arc::new(move |x: f64| (x / width).min(1.0));
        let shape = TransitionBs::new(g, rho, 0.05, Some(width))?;
        let e0 = scaled_expected_length(0.0, &shape, &settings)?;
        let (g_c, min_c) = minimum_coverage(&shape, rho, 12.0, 0.1, &settings)?;
        let (_, max_e2) = maximum_e_squared(&shape, 12.0, 0.1, &settings)?;
        println!(
            "g(x) = min(x/{width}, 1): s(0) = {:.6}, e^2(0) = {:.4}, max e^2 = {max_e2:.4}, min coverage {min_c:.4} at gamma = {g_c:.2}",
            shape.s(0.0),
            e0 * e0,
        );
    }
    Ok(())
}
