//! Cross-check the quadrature formulas against direct simulation of the
//! regression, for an arbitrary (not optimised) member of the family.

use priorci::bsfun::{even_knots, BSFunctions};
use priorci::mcheck::{compare, mc_coverage_conditional, McSettings};
use priorci::perfeval::EvalSettings;
use priorci::DegreesOfFreedom;

fn main() -> priorci::Result<()> {
    let dof = DegreesOfFreedom::Finite(12);
    let knots = even_knots(4.0, 4)?;
    let bs = BSFunctions::build(4.0, &knots, &[-0.6, -0.4, -0.1], &[1.6, 1.8, 2.1, 2.3], 0.05, dof)?;
    let rho = -0.5;
    let mc = McSettings { sample_count: 1_000_000, rng_seed: 42, antithetic: false };

    println!(" gamma  coverage (quad)  coverage (MC +- se)      e (quad)  e (MC +- se)");
    for row in compare(&bs, rho, &[0.0, 1.0, 2.5, 6.0], &mc, &EvalSettings::default())? {
        println!(
            "{:6.2}  {:.6}         {:.6} +- {:.6}   {:.6}  {:.6} +- {:.6}  {}",
            row.gamma,
            row.coverage_quadrature,
            row.coverage_mc.estimate,
            row.coverage_mc.std_error,
            row.length_quadrature,
            row.length_mc.estimate,
            row.length_mc.std_error,
            if row.coverage_pass && row.length_pass { "ok" } else { "MISMATCH" },
        );
    }

    // integrating G out exactly gives a much smaller standard error
    let rb = mc_coverage_conditional(1.0, &bs, rho, &mc)?;
    println!("conditional estimate at gamma = 1: {:.6} +- {:.6}", rb.estimate, rb.std_error);
    Ok(())
}
