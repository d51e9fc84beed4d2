//! Monte Carlo estimates of coverage and scaled expected length, simulated
//! directly from the sampling model rather than from the integral formulas.
//!
//! `(G, H)` is bivariate normal with means `(0, gamma)`, unit variances and
//! correlation `rho`; `W = sqrt(Q / m)` with `Q ~ chi^2_m` independent of
//! both (`W = 1` for infinite degrees of freedom). The interval covers when
//! `W (b(X) - s(|X|)) <= G <= W (b(X) + s(|X|))` with `X = H / W`.
//!
//! Samples are drawn in fixed-size blocks, each from its own ChaCha8 stream,
//! and block sums are combined in block order, so results do not depend on
//! the number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bsfun::IntervalShape;
use crate::dist::{expected_w, psi_sd, DegreesOfFreedom};
use crate::error::{invalid, Result};
use crate::perfeval::{coverage, scaled_expected_length, EvalSettings};

pub const MIN_SAMPLES: usize = 10_000;
const BLOCK: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSettings {
    pub sample_count: usize,
    pub rng_seed: u64,
    /// Pair every draw with its reflection `(G, H - gamma) -> -(G, H - gamma)`.
    pub antithetic: bool,
}

impl Default for McSettings {
    fn default() -> Self {
        Self { sample_count: 1_000_000, rng_seed: 0, antithetic: false }
    }
}

impl McSettings {
    pub fn validate(&self) -> Result<()> {
        if self.sample_count < MIN_SAMPLES {
            return Err(invalid(format!(
                "at least {MIN_SAMPLES} Monte Carlo samples are required, got {}",
                self.sample_count
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

impl McEstimate {
    /// `|estimate - value| <= k` standard errors.
    pub fn agrees_with(&self, value: f64, k: f64) -> bool {
        (self.estimate - value).abs() <= k * self.std_error
    }
}

#[derive(Clone, Copy)]
struct Draw {
    g: f64,
    h: f64,
    w: f64,
}

/// Running mean and sum of squared deviations (Welford, merged with Chan's rule).
#[derive(Default, Clone, Copy)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, v: f64) {
        self.n += 1.0;
        let delta = v - self.mean;
        self.mean += delta / self.n;
        self.m2 += delta * (v - self.mean);
    }

    fn merge(self, other: Self) -> Self {
        let n = self.n + other.n;
        if n == 0.0 {
            return self;
        }
        let delta = other.mean - self.mean;
        Self {
            n,
            mean: self.mean + delta * other.n / n,
            m2: self.m2 + other.m2 + delta * delta * self.n * other.n / n,
        }
    }

    fn finish(self) -> McEstimate {
        let var = self.m2 / (self.n - 1.0);
        McEstimate { estimate: self.mean, std_error: (var / self.n).sqrt() }
    }
}

/// Mean of `f` over draws. With antithetic sampling each unit is the average
/// over a draw and its reflection, so the standard error accounts for the
/// pairing.
fn simulate(
    gamma: f64,
    rho: f64,
    dof: DegreesOfFreedom,
    mc: &McSettings,
    f: impl Fn(Draw) -> f64 + Sync,
) -> Result<McEstimate> {
    mc.validate()?;
    if !(rho.abs() <= 1.0) {
        return Err(invalid(format!("rho must lie in [-1, 1], got {rho}")));
    }
    dof.validate()?;
    let chi = match dof {
        DegreesOfFreedom::Finite(m) => Some(ChiSquared::new(m as f64).map_err(|e| invalid(e.to_string()))?),
        DegreesOfFreedom::Infinite => None,
    };
    let mf = dof.get().map_or(1.0, |m| m as f64);
    let r = (1.0 - rho * rho).max(0.0).sqrt();
    let units = if mc.antithetic { mc.sample_count.div_ceil(2) } else { mc.sample_count };
    let blocks = units.div_ceil(BLOCK);

    let per_block: Vec<Moments> = (0..blocks)
        .into_par_iter()
        .map(|block| {
            let mut rng = ChaCha8Rng::seed_from_u64(mc.rng_seed);
            rng.set_stream(block as u64);
            let count = BLOCK.min(units - block * BLOCK);
            let mut acc = Moments::default();
            for _ in 0..count {
                let z1: f64 = StandardNormal.sample(&mut rng);
                let z2: f64 = StandardNormal.sample(&mut rng);
                let w = chi.as_ref().map_or(1.0, |c| (c.sample(&mut rng) / mf).sqrt());
                let draw = Draw { g: rho * z2 + r * z1, h: gamma + z2, w };
                let value = if mc.antithetic {
                    let mirror = Draw { g: -draw.g, h: gamma - z2, w };
                    0.5 * (f(draw) + f(mirror))
                } else {
                    f(draw)
                };
                acc.push(value);
            }
            acc
        })
        .collect();
    Ok(per_block.into_iter().fold(Moments::default(), Moments::merge).finish())
}

/// Coverage probability of `J(b, s)` at `gamma`, estimated by the fraction
/// of simulated intervals that contain `theta`.
pub fn mc_coverage(gamma: f64, shape: &dyn IntervalShape, rho: f64, mc: &McSettings) -> Result<McEstimate> {
    simulate(gamma, rho, shape.dof(), mc, |d| {
        let x = d.h / d.w;
        let (b, s) = (shape.b(x), shape.s(x.abs()));
        let covered = d.w * (b - s) <= d.g && d.g <= d.w * (b + s);
        if covered {
            1.0
        } else {
            0.0
        }
    })
}

/// Coverage estimated by averaging the conditional coverage probability
/// given `(H, W)`, which integrates `G` out exactly.
pub fn mc_coverage_conditional(
    gamma: f64,
    shape: &dyn IntervalShape,
    rho: f64,
    mc: &McSettings,
) -> Result<McEstimate> {
    let sd = (1.0 - rho * rho).sqrt();
    if !(sd > 0.0) {
        return Err(crate::error::Error::DegenerateCorrelation);
    }
    simulate(gamma, rho, shape.dof(), mc, |d| {
        let x = d.h / d.w;
        let (b, s) = (shape.b(x), shape.s(x.abs()));
        psi_sd(d.w * (b - s), d.w * (b + s), rho * (d.h - gamma), sd)
    })
}

/// `E(s(|H|/W) W) / (t E(W))`.
pub fn mc_scaled_length(gamma: f64, shape: &dyn IntervalShape, mc: &McSettings) -> Result<McEstimate> {
    let scale = shape.s_end() * expected_w(shape.dof());
    let est = simulate(gamma, 0.0, shape.dof(), mc, |d| shape.s((d.h / d.w).abs()) * d.w)?;
    Ok(McEstimate { estimate: est.estimate / scale, std_error: est.std_error / scale })
}

/// Quadrature against simulation at one `gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McComparison {
    pub gamma: f64,
    pub coverage_quadrature: f64,
    pub coverage_mc: McEstimate,
    pub coverage_pass: bool,
    pub length_quadrature: f64,
    pub length_mc: McEstimate,
    pub length_pass: bool,
}

/// Compare at each `gamma`; a comparison passes when the estimates differ
/// by at most three standard errors.
pub fn compare(
    shape: &dyn IntervalShape,
    rho: f64,
    gammas: &[f64],
    mc: &McSettings,
    eval: &EvalSettings,
) -> Result<Vec<McComparison>> {
    gammas
        .iter()
        .map(|&gamma| {
            let cq = coverage(gamma, shape, rho, eval)?;
            let cm = mc_coverage(gamma, shape, rho, mc)?;
            let eq = scaled_expected_length(gamma, shape, eval)?;
            let em = mc_scaled_length(gamma, shape, mc)?;
            Ok(McComparison {
                gamma,
                coverage_quadrature: cq,
                coverage_mc: cm,
                coverage_pass: cm.agrees_with(cq, 3.0),
                length_quadrature: eq,
                length_mc: em,
                length_pass: em.agrees_with(eq, 3.0),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bsfun::{even_knots, BSFunctions, NaiveBs};
    use std::f64::consts::FRAC_1_SQRT_2;

    const M76: DegreesOfFreedom = DegreesOfFreedom::Finite(76);

    fn settings(n: usize, seed: u64) -> McSettings {
        McSettings { sample_count: n, rng_seed: seed, antithetic: false }
    }

    #[test]
    fn standard_interval_has_nominal_coverage() {
        let bs = BSFunctions::standard(6.0, &even_knots(6.0, 6).unwrap(), 0.05, M76).unwrap();
        let est = mc_coverage(1.3, &bs, -0.5, &settings(200_000, 1)).unwrap();
        assert!(est.agrees_with(0.95, 3.0), "{est:?}");
        // binomial standard error
        let binom = (est.estimate * (1.0 - est.estimate) / 200_000.0).sqrt();
        assert!((est.std_error - binom).abs() < 1e-3 * binom);
    }

    #[test]
    fn constant_s_has_unit_length() {
        let bs = BSFunctions::standard(6.0, &even_knots(6.0, 6).unwrap(), 0.05, M76).unwrap();
        let est = mc_scaled_length(0.0, &bs, &settings(100_000, 2)).unwrap();
        assert!(est.agrees_with(1.0, 3.0), "{est:?}");
        let inf = BSFunctions::standard(6.0, &even_knots(6.0, 6).unwrap(), 0.05, DegreesOfFreedom::Infinite)
            .unwrap();
        let est = mc_scaled_length(0.0, &inf, &settings(10_000, 2)).unwrap();
        assert!((est.estimate - 1.0).abs() < 1e-12);
        assert!(est.std_error < 1e-12);
    }

    #[test]
    fn naive_minimum_matches_known_value() {
        let naive = NaiveBs::new(1.991_673, -FRAC_1_SQRT_2, 0.05, M76).unwrap();
        let est = mc_coverage(1.99, &naive, -FRAC_1_SQRT_2, &settings(400_000, 3)).unwrap();
        assert!(est.agrees_with(0.7306, 3.0), "{est:?}");
    }

    #[test]
    fn reproducible_and_thread_independent() {
        let naive = NaiveBs::new(1.991_673, 0.3, 0.05, M76).unwrap();
        let mc = settings(50_000, 9);
        let a = mc_coverage(1.0, &naive, 0.3, &mc).unwrap();
        let b = mc_coverage(1.0, &naive, 0.3, &mc).unwrap();
        assert_eq!(a, b);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c = pool.install(|| mc_coverage(1.0, &naive, 0.3, &mc).unwrap());
        assert_eq!(a, c);
        let other = mc_coverage(1.0, &naive, 0.3, &settings(50_000, 10)).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn conditional_form_has_smaller_variance() {
        let naive = NaiveBs::new(1.991_673, -FRAC_1_SQRT_2, 0.05, M76).unwrap();
        for &g in &[0.0, 2.0, 4.0] {
            let mc = settings(100_000, 4);
            let plain = mc_coverage(g, &naive, -FRAC_1_SQRT_2, &mc).unwrap();
            let cond = mc_coverage_conditional(g, &naive, -FRAC_1_SQRT_2, &mc).unwrap();
            assert!(cond.std_error < plain.std_error, "{g}");
            let joint = (plain.std_error.powi(2) + cond.std_error.powi(2)).sqrt();
            assert!((plain.estimate - cond.estimate).abs() <= 3.0 * joint);
        }
    }

    #[test]
    fn even_in_gamma_statistically() {
        let naive = NaiveBs::new(1.991_673, -0.6, 0.05, M76).unwrap();
        let mc = settings(200_000, 5);
        let a = mc_coverage(1.5, &naive, -0.6, &mc).unwrap();
        let b = mc_coverage(-1.5, &naive, -0.6, &McSettings { rng_seed: 6, ..mc }).unwrap();
        let joint = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
        assert!((a.estimate - b.estimate).abs() <= 3.0 * joint);
    }

    #[test]
    fn antithetic_pairs_are_unbiased() {
        let naive = NaiveBs::new(1.991_673, -0.6, 0.05, M76).unwrap();
        let mc = McSettings { sample_count: 200_000, rng_seed: 7, antithetic: true };
        let est = mc_coverage_conditional(0.0, &naive, -0.6, &mc).unwrap();
        let q = coverage(0.0, &naive, -0.6, &EvalSettings::default()).unwrap();
        assert!(est.agrees_with(q, 3.0), "{est:?} vs {q}");
    }

    #[test]
    fn rejects_small_samples() {
        let naive = NaiveBs::new(1.991_673, -0.6, 0.05, M76).unwrap();
        assert!(mc_coverage(0.0, &naive, -0.6, &settings(9_999, 0)).is_err());
    }
}
