//! Coverage probability `c(gamma; b, s, rho)`, scaled expected length
//! `e(gamma; s)` and the weighted-length criterion, as double integrals over
//! `w` (the law of `W = sigma_hat / sigma`) and `x in [-d, d]`.
//!
//! Only the difference from the standard interval is integrated. Beyond the
//! cutoff `d` the integrands vanish identically, so the `x` range is finite;
//! the `w` range is truncated at extreme quantiles of `W` with a computable
//! bound on the discarded mass. Both ranges use composite Gauss-Legendre
//! panels, with `x` panels aligned to the knots (where the integrands lose
//! smoothness) and `w` panels spaced geometrically.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, gamma_ur};

use crate::bsfun::IntervalShape;
use crate::dist::{expected_w, ln_w_density, normal_pdf, psi_sd, w_tail_quantiles, DegreesOfFreedom};
use crate::error::{invalid, Error, Result};
use crate::quadrature::{composite, GaussLegendre};

/// How the `w` integral is truncated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WTruncation {
    /// The `1e-12` and `1 - 1e-12` quantiles of `W`.
    #[default]
    Auto,
    Fixed {
        lo: f64,
        hi: f64,
    },
}

/// Tail probability on each side used by [`WTruncation::Auto`].
pub const AUTO_W_TAIL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub w_truncation: WTruncation,
    /// Number of geometric panels covering the truncated `w` range.
    pub w_panels: usize,
    /// Largest `w` panel width, further capped at `1.5 / d`: for `x` near
    /// `d`, `phi(w x - gamma)` is a bump of width `1 / d` in `w`.
    pub w_panel_width: f64,
    /// Gauss-Legendre nodes per `w` panel.
    pub w_nodes: usize,
    /// Gauss-Legendre nodes per `x` panel.
    pub x_nodes: usize,
    /// Largest `x` panel width; knot intervals are split to respect it.
    pub x_panel_width: f64,
    pub target_abs_tol: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            w_truncation: WTruncation::Auto,
            w_panels: 8,
            w_panel_width: 0.25,
            w_nodes: 10,
            x_nodes: 10,
            x_panel_width: 0.5,
            target_abs_tol: 1e-6,
        }
    }
}

impl EvalSettings {
    pub fn validate(&self) -> Result<()> {
        if self.w_panels == 0 || self.w_nodes == 0 || self.x_nodes == 0 {
            return Err(invalid("quadrature node and panel counts must be positive"));
        }
        if !(self.x_panel_width > 0.0) || !(self.w_panel_width > 0.0) || !(self.target_abs_tol > 0.0) {
            return Err(invalid("panel widths and target_abs_tol must be positive"));
        }
        if let WTruncation::Fixed { lo, hi } = self.w_truncation {
            if !(lo > 0.0 && hi > lo && hi.is_finite()) {
                return Err(invalid(format!("w truncation needs 0 < lo < hi, got ({lo}, {hi})")));
            }
        }
        Ok(())
    }

    /// Twice the nodes in both directions.
    pub fn doubled(&self) -> Self {
        Self { w_nodes: 2 * self.w_nodes, x_nodes: 2 * self.x_nodes, ..self.clone() }
    }

    /// The `w` range actually integrated, or `None` for infinite degrees of freedom.
    pub fn w_range(&self, dof: DegreesOfFreedom) -> Option<(f64, f64)> {
        let m = dof.get()?;
        Some(match self.w_truncation {
            WTruncation::Auto => w_tail_quantiles(AUTO_W_TAIL, m),
            WTruncation::Fixed { lo, hi } => (lo, hi),
        })
    }

    /// Upper bounds on the error from truncating the `w` integral:
    /// `(coverage bound, scaled-length bound per unit of sup |s - t|/t)`.
    pub fn truncation_bounds(&self, alpha: f64, dof: DegreesOfFreedom) -> (f64, f64) {
        let Some(m) = dof.get() else {
            return (0.0, 0.0);
        };
        let (lo, hi) = self.w_range(dof).expect("finite dof");
        let mf = m as f64;
        // P(W outside) bounds the coverage integrand mass
        let outside = gamma_lr(0.5 * mf, 0.5 * mf * lo * lo) + gamma_ur(0.5 * mf, 0.5 * mf * hi * hi);
        // E(W 1{W outside}) / E(W) = P(chi^2_{m+1} outside (m lo^2, m hi^2))
        let first_moment =
            gamma_lr(0.5 * (mf + 1.0), 0.5 * mf * lo * lo) + gamma_ur(0.5 * (mf + 1.0), 0.5 * mf * hi * hi);
        ((2.0 - alpha) * outside, first_moment)
    }
}

/// Coverage and squared scaled expected length on a `gamma` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceCurve {
    pub gamma_grid: Vec<f64>,
    pub coverage: Vec<f64>,
    pub e_squared: Vec<f64>,
}

impl PerformanceCurve {
    pub fn min_coverage(&self) -> (f64, f64) {
        self.gamma_grid.iter().zip(&self.coverage).fold((f64::NAN, f64::INFINITY), |best, (&g, &c)| {
            if c < best.1 {
                (g, c)
            } else {
                best
            }
        })
    }

    pub fn max_e_squared(&self) -> (f64, f64) {
        self.gamma_grid.iter().zip(&self.e_squared).fold((f64::NAN, f64::NEG_INFINITY), |best, (&g, &e)| {
            if e > best.1 {
                (g, e)
            } else {
                best
            }
        })
    }

    /// CSV with header `gamma,coverage,e_squared`, shortest round-trip decimals.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(b"gamma,coverage,e_squared\n")?;
        for i in 0..self.gamma_grid.len() {
            writeln!(out, "{},{},{}", self.gamma_grid[i], self.coverage[i], self.e_squared[i])?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }
}

/// Precomputed quadrature grid for one interval shape.
///
/// `b` and `s` only enter through their values at the `x` nodes, which are
/// fixed for given knots, so optimizers can reuse the grid and swap in new
/// node values.
#[derive(Debug, Clone)]
pub struct Evaluator {
    pub(crate) alpha: f64,
    pub(crate) t_end: f64,
    pub(crate) expected_w: f64,
    /// `(w, gauss weight * f_W(w))`.
    pub(crate) w_grid: Vec<(f64, f64)>,
    /// `(x, weight)` over `[-d, d]`.
    pub(crate) x_grid: Vec<(f64, f64)>,
    /// `(x, weight)` over `[0, d]`.
    pub(crate) x_half: Vec<(f64, f64)>,
}

/// `b` and `|s|` at the evaluator's `x` nodes.
#[derive(Debug, Clone)]
pub struct NodeValues {
    pub b: Vec<f64>,
    pub s: Vec<f64>,
    /// `s` at the `[0, d]` nodes.
    pub s_half: Vec<f64>,
}

/// Gradient of the coverage with respect to `b` and `s` at the full-grid `x` nodes.
#[derive(Debug, Clone)]
pub struct NodeGradient {
    pub db: Vec<f64>,
    pub ds: Vec<f64>,
}

fn check_rho(rho: f64) -> Result<f64> {
    if !rho.is_finite() || rho.abs() > 1.0 {
        return Err(invalid(format!("rho must lie in [-1, 1], got {rho}")));
    }
    if rho.abs() == 1.0 {
        return Err(Error::DegenerateCorrelation);
    }
    Ok((1.0 - rho * rho).sqrt())
}

impl Evaluator {
    pub fn new(shape: &dyn IntervalShape, settings: &EvalSettings) -> Result<Self> {
        settings.validate()?;
        let dof = shape.dof();
        let d = shape.cutoff();
        let mut breaks: Vec<f64> = shape.breakpoints().into_iter().filter(|&x| x > 0.0 && x < d).collect();
        breaks.insert(0, 0.0);
        breaks.push(d);
        let x_rule = GaussLegendre::new(settings.x_nodes);
        let x_half = composite(&x_rule, &breaks, settings.x_panel_width);
        let mut x_grid: Vec<(f64, f64)> = x_half.iter().rev().map(|&(x, w)| (-x, w)).collect();
        x_grid.extend_from_slice(&x_half);

        let w_grid = match (dof, settings.w_range(dof)) {
            (DegreesOfFreedom::Finite(m), Some((lo, hi))) => {
                let ratio = (hi / lo).powf(1.0 / settings.w_panels as f64);
                let mut edges: Vec<f64> =
                    (0..=settings.w_panels).map(|i| lo * ratio.powi(i as i32)).collect();
                edges[settings.w_panels] = hi;
                let rule = GaussLegendre::new(settings.w_nodes);
                composite(&rule, &edges, settings.w_panel_width.min(1.5 / d))
                    .into_iter()
                    .map(|(w, g)| (w, g * ln_w_density(w, m).exp()))
                    .collect()
            }
            _ => vec![(1.0, 1.0)],
        };

        Ok(Self {
            alpha: shape.alpha(),
            t_end: shape.s_end(),
            expected_w: expected_w(dof),
            w_grid,
            x_grid,
            x_half,
        })
    }

    pub fn node_count(&self) -> (usize, usize) {
        (self.w_grid.len(), self.x_grid.len())
    }

    pub fn x_nodes(&self) -> Vec<f64> {
        self.x_grid.iter().map(|&(x, _)| x).collect()
    }

    pub fn x_half_nodes(&self) -> Vec<f64> {
        self.x_half.iter().map(|&(x, _)| x).collect()
    }

    pub fn node_values(&self, shape: &dyn IntervalShape) -> NodeValues {
        NodeValues {
            b: self.x_grid.iter().map(|&(x, _)| shape.b(x)).collect(),
            s: self.x_grid.iter().map(|&(x, _)| shape.s(x.abs())).collect(),
            s_half: self.x_half.iter().map(|&(x, _)| shape.s(x)).collect(),
        }
    }

    /// Integral of `k-dagger` (the standard interval's conditional coverage)
    /// against the same weights; independent of `b` and `s`.
    pub fn standard_part(&self, gamma: f64, rho: f64) -> Result<f64> {
        let sd = check_rho(rho)?;
        let gamma = gamma.abs();
        let mut total = 0.0;
        for &(w, ww) in &self.w_grid {
            let half = self.t_end * w;
            let mut inner = 0.0;
            for &(x, wx) in &self.x_grid {
                let h = w * x;
                let dens = normal_pdf(h - gamma);
                if dens == 0.0 {
                    continue;
                }
                inner += wx * dens * psi_sd(-half, half, rho * (h - gamma), sd);
            }
            total += ww * w * inner;
        }
        Ok(total)
    }

    /// `c(gamma)`, with the standard part supplied by the caller (see
    /// [`Evaluator::standard_part`]).
    pub fn coverage_from_nodes(
        &self,
        gamma: f64,
        rho: f64,
        nodes: &NodeValues,
        standard_part: f64,
    ) -> Result<f64> {
        let sd = check_rho(rho)?;
        let gamma = gamma.abs();
        let mut total = 0.0;
        for &(w, ww) in &self.w_grid {
            let mut inner = 0.0;
            for (k, &(x, wx)) in self.x_grid.iter().enumerate() {
                let h = w * x;
                let dens = normal_pdf(h - gamma);
                if dens == 0.0 {
                    continue;
                }
                let (b, s) = (nodes.b[k], nodes.s[k]);
                let lo = w * (b - s);
                let hi = w * (b + s);
                let k_val = if lo <= hi { psi_sd(lo, hi, rho * (h - gamma), sd) } else { 0.0 };
                inner += wx * dens * k_val;
            }
            total += ww * w * inner;
        }
        Ok(1.0 - self.alpha + total - standard_part)
    }

    /// Coverage together with its gradient with respect to the node values.
    pub fn coverage_with_gradient(
        &self,
        gamma: f64,
        rho: f64,
        nodes: &NodeValues,
        standard_part: f64,
    ) -> Result<(f64, NodeGradient)> {
        let sd = check_rho(rho)?;
        let gamma = gamma.abs();
        let n = self.x_grid.len();
        let mut db = vec![0.0; n];
        let mut ds = vec![0.0; n];
        let mut total = 0.0;
        for &(w, ww) in &self.w_grid {
            let outer = ww * w;
            let mut inner = 0.0;
            for (k, &(x, wx)) in self.x_grid.iter().enumerate() {
                let h = w * x;
                let dens = normal_pdf(h - gamma);
                if dens == 0.0 {
                    continue;
                }
                let (b, s) = (nodes.b[k], nodes.s[k]);
                let mu = rho * (h - gamma);
                let lo = w * (b - s);
                let hi = w * (b + s);
                let weight = outer * wx * dens;
                if lo <= hi {
                    inner += wx * dens * psi_sd(lo, hi, mu, sd);
                    let f_hi = normal_pdf((hi - mu) / sd) / sd;
                    let f_lo = normal_pdf((lo - mu) / sd) / sd;
                    db[k] += weight * w * (f_hi - f_lo);
                    ds[k] += weight * w * (f_hi + f_lo);
                }
            }
            total += outer * inner;
        }
        Ok((1.0 - self.alpha + total - standard_part, NodeGradient { db, ds }))
    }

    /// `e(gamma; s)` from node values.
    pub fn scaled_length_from_nodes(&self, gamma: f64, nodes: &NodeValues) -> f64 {
        let gamma = gamma.abs();
        let mut total = 0.0;
        for &(w, ww) in &self.w_grid {
            let mut inner = 0.0;
            for (k, &(x, wx)) in self.x_grid.iter().enumerate() {
                let dev = nodes.s[k] - self.t_end;
                if dev != 0.0 {
                    inner += wx * dev * normal_pdf(w * x - gamma);
                }
            }
            total += ww * w * w * inner;
        }
        1.0 + total / (self.t_end * self.expected_w)
    }

    /// Per-node weights `g_k` with `objective = sum_k g_k (s(x_k) - t)` over the
    /// `[0, d]` nodes.
    pub fn objective_weights(&self, lambda: f64) -> Vec<f64> {
        let scale = 2.0 / (self.t_end * self.expected_w);
        self.x_half
            .iter()
            .map(|&(x, wx)| {
                let mut acc = 0.0;
                for &(w, ww) in &self.w_grid {
                    acc += ww * w * w * (lambda + normal_pdf(w * x));
                }
                scale * wx * acc
            })
            .collect()
    }

    pub fn objective_from_nodes(&self, lambda: f64, nodes: &NodeValues) -> f64 {
        self.objective_weights(lambda).iter().zip(&nodes.s_half).map(|(g, s)| g * (s - self.t_end)).sum()
    }
}

/// Coverage probability of `J(b, s)` at `gamma`; even in `gamma`.
pub fn coverage(gamma: f64, shape: &dyn IntervalShape, rho: f64, settings: &EvalSettings) -> Result<f64> {
    check_rho(rho)?;
    let ev = Evaluator::new(shape, settings)?;
    let nodes = ev.node_values(shape);
    let standard = ev.standard_part(gamma, rho)?;
    ev.coverage_from_nodes(gamma, rho, &nodes, standard)
}

/// Expected length of `J(b, s)` over that of the standard interval.
pub fn scaled_expected_length(gamma: f64, shape: &dyn IntervalShape, settings: &EvalSettings) -> Result<f64> {
    let ev = Evaluator::new(shape, settings)?;
    let nodes = ev.node_values(shape);
    Ok(ev.scaled_length_from_nodes(gamma, &nodes))
}

/// The weighted-length criterion for weight `lambda x + H(x)`:
/// `integral (e(gamma; s) - 1) d nu(gamma)`.
pub fn objective(shape: &dyn IntervalShape, lambda: f64, settings: &EvalSettings) -> Result<f64> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(invalid(format!("lambda must be a nonnegative number, got {lambda}")));
    }
    let ev = Evaluator::new(shape, settings)?;
    let nodes = ev.node_values(shape);
    Ok(ev.objective_from_nodes(lambda, &nodes))
}

/// Coverage and `e^2` over `gamma_grid` (nonnegative, increasing).
pub fn curve(
    shape: &dyn IntervalShape,
    rho: f64,
    gamma_grid: &[f64],
    settings: &EvalSettings,
) -> Result<PerformanceCurve> {
    check_rho(rho)?;
    if gamma_grid.iter().any(|g| !(*g >= 0.0) || !g.is_finite()) {
        return Err(invalid("gamma grid must be finite and nonnegative"));
    }
    if gamma_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("gamma grid must be increasing"));
    }
    let ev = Evaluator::new(shape, settings)?;
    let nodes = ev.node_values(shape);
    let rows: Result<Vec<(f64, f64)>> = gamma_grid
        .par_iter()
        .map(|&g| {
            let standard = ev.standard_part(g, rho)?;
            let c = ev.coverage_from_nodes(g, rho, &nodes, standard)?;
            let e = ev.scaled_length_from_nodes(g, &nodes);
            Ok((c, e * e))
        })
        .collect();
    let rows = rows?;
    Ok(PerformanceCurve {
        gamma_grid: gamma_grid.to_vec(),
        coverage: rows.iter().map(|r| r.0).collect(),
        e_squared: rows.iter().map(|r| r.1).collect(),
    })
}

/// `0, step, 2 step, ...` up to and including `max` (within rounding).
pub fn gamma_grid(max: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(max >= 0.0) {
        return Err(invalid("gamma grid needs step > 0 and max >= 0"));
    }
    let count = (max / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|i| i as f64 * step).collect())
}

/// Golden-section refinement of an extremum of `f` bracketed by `[lo, hi]`.
pub(crate) fn golden_min(
    f: impl Fn(f64) -> Result<f64>,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> Result<(f64, f64)> {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - ratio * (hi - lo);
    let mut b = lo + ratio * (hi - lo);
    let mut fa = f(a)?;
    let mut fb = f(b)?;
    while hi - lo > tol {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - ratio * (hi - lo);
            fa = f(a)?;
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + ratio * (hi - lo);
            fb = f(b)?;
        }
    }
    Ok(if fa < fb { (a, fa) } else { (b, fb) })
}

/// Minimum coverage over `gamma >= 0`: grid search, then golden-section
/// refinement around the best grid point. Returns `(gamma, coverage)`.
pub fn minimum_coverage(
    shape: &dyn IntervalShape,
    rho: f64,
    gamma_max: f64,
    step: f64,
    settings: &EvalSettings,
) -> Result<(f64, f64)> {
    let grid = gamma_grid(gamma_max, step)?;
    let c = curve(shape, rho, &grid, settings)?;
    let (g0, c0) = c.min_coverage();
    let ev = Evaluator::new(shape, settings)?;
    let nodes = ev.node_values(shape);
    let eval = |g: f64| -> Result<f64> {
        let standard = ev.standard_part(g, rho)?;
        ev.coverage_from_nodes(g, rho, &nodes, standard)
    };
    let lo = (g0 - step).max(0.0);
    let hi = (g0 + step).min(gamma_max);
    let (g1, c1) = golden_min(eval, lo, hi, 1e-6)?;
    Ok(if c1 < c0 { (g1, c1) } else { (g0, c0) })
}

/// Maximum of `e^2(gamma; s)` over `gamma >= 0`, refined like
/// [`minimum_coverage`]. Returns `(gamma, e^2)`.
pub fn maximum_e_squared(
    shape: &dyn IntervalShape,
    gamma_max: f64,
    step: f64,
    settings: &EvalSettings,
) -> Result<(f64, f64)> {
    let grid = gamma_grid(gamma_max, step)?;
    let ev = Evaluator::new(shape, settings)?;
    let nodes = ev.node_values(shape);
    let e2 = |g: f64| {
        let e = ev.scaled_length_from_nodes(g, &nodes);
        e * e
    };
    let (g0, v0) = grid.iter().map(|&g| (g, e2(g))).fold((0.0, f64::NEG_INFINITY), |best, cur| {
        if cur.1 > best.1 {
            cur
        } else {
            best
        }
    });
    let lo = (g0 - step).max(0.0);
    let hi = (g0 + step).min(gamma_max);
    let (g1, neg) = golden_min(|g| Ok(-e2(g)), lo, hi, 1e-6)?;
    Ok(if -neg > v0 { (g1, -neg) } else { (g0, v0) })
}
