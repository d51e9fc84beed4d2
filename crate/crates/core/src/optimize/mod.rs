//! Choose the knot values of `b` and `s` to minimise the weighted expected
//! length subject to coverage `>= 1 - alpha` on a grid of `gamma` values.
//!
//! Decision variables are `b` at the interior knots and `s` at every knot
//! but `d`. The objective is linear in the `s` values; coverage is smooth in
//! all of them, with exact gradients because the splines are linear in their
//! data. After each solve the coverage is checked on a grid four times finer;
//! any `gamma` found below `1 - alpha` joins the constraint grid and the
//! problem is re-solved from the previous solution.

mod qp;
mod sqp;

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bsfun::{
    check_alpha, knots_with_step, standard_multiplier, BSFunctions, IntervalShape, SEndCondition,
};
use crate::dist::DegreesOfFreedom;
use crate::error::{invalid, Error, Result};
use crate::perfeval::{gamma_grid, maximum_e_squared, EvalSettings, Evaluator, NodeValues};
use sqp::{minimize, Nlp, SqpSettings};

/// Where the optimizer starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// `b = 0`, `s = t`: the standard interval, feasible with objective 0.
    #[default]
    Standard,
    /// The standard start with knot values perturbed by up to `scale * t`.
    Perturbed { seed: u64, scale: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub lambda: f64,
    pub d: f64,
    pub knots: Vec<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub dof: DegreesOfFreedom,
    pub rho: f64,
    /// Spacing of the coverage constraint grid.
    #[serde(default = "default_delta")]
    pub constraint_delta: f64,
    /// Number of grid steps; `None` means enough to reach `d + 6`.
    #[serde(default)]
    pub constraint_count: Option<usize>,
    #[serde(default)]
    pub eval: EvalSettings,
    #[serde(default = "default_feasibility_tol")]
    pub feasibility_tol: f64,
    #[serde(default = "default_objective_tol")]
    pub objective_tol: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default)]
    pub s_end_condition: SEndCondition,
    #[serde(default)]
    pub init: InitMode,
    /// Also run three randomly perturbed starts and keep the best.
    #[serde(default)]
    pub multi_start: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_alpha() -> f64 {
    0.05
}
fn default_delta() -> f64 {
    0.25
}
fn default_feasibility_tol() -> f64 {
    1e-7
}
fn default_objective_tol() -> f64 {
    1e-9
}
fn default_max_iterations() -> usize {
    300
}

/// Passes of "solve, check the fine grid, add violated points".
const MAX_REFINEMENT_ROUNDS: usize = 5;

impl SolveConfig {
    pub fn new(lambda: f64, d: f64, knots: Vec<f64>, rho: f64, dof: DegreesOfFreedom) -> Self {
        Self {
            lambda,
            d,
            knots,
            alpha: default_alpha(),
            dof,
            rho,
            constraint_delta: default_delta(),
            constraint_count: None,
            eval: EvalSettings::default(),
            feasibility_tol: default_feasibility_tol(),
            objective_tol: default_objective_tol(),
            max_iterations: default_max_iterations(),
            s_end_condition: SEndCondition::default(),
            init: InitMode::default(),
            multi_start: false,
            seed: 0,
        }
    }

    /// Number of constraint grid steps actually used.
    pub fn grid_steps(&self) -> usize {
        self.constraint_count
            .unwrap_or_else(|| ((self.d + 6.0) / self.constraint_delta - 1e-9).ceil() as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(invalid(format!("lambda must be nonnegative, got {}", self.lambda)));
        }
        check_alpha(self.alpha)?;
        self.dof.validate()?;
        if !(self.rho.abs() < 1.0) {
            return Err(if self.rho.abs() == 1.0 {
                Error::DegenerateCorrelation
            } else {
                invalid(format!("rho must lie in (-1, 1), got {}", self.rho))
            });
        }
        if !(self.constraint_delta > 0.0) {
            return Err(invalid("constraint_delta must be positive"));
        }
        let reach = self.grid_steps() as f64 * self.constraint_delta;
        if reach < self.d + 4.0 - 1e-12 {
            return Err(invalid(format!(
                "the constraint grid reaches {reach}, it must reach at least d + 4 = {}",
                self.d + 4.0
            )));
        }
        if !(self.feasibility_tol > 0.0 && self.objective_tol > 0.0) || self.max_iterations == 0 {
            return Err(invalid("tolerances and max_iterations must be positive"));
        }
        if let InitMode::Perturbed { scale, .. } = self.init {
            if !(0.0..=1.0).contains(&scale) {
                return Err(invalid("perturbation scale must lie in [0, 1]"));
            }
        }
        self.eval.validate()?;
        // checks the knot layout
        BSFunctions::standard(self.d, &self.knots, self.alpha, self.dof)?;
        Ok(())
    }

    fn template(&self) -> Result<BSFunctions> {
        let t = standard_multiplier(self.alpha, self.dof)?;
        let q = self.knots.len();
        BSFunctions::build_with(
            self.d,
            &self.knots,
            &vec![0.0; q - 2],
            &vec![t; q - 1],
            self.alpha,
            self.dof,
            self.s_end_condition,
        )
    }
}

/// The solution and its performance summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub bs: BSFunctions,
    pub lambda: f64,
    pub rho: f64,
    pub objective_value: f64,
    pub min_coverage_on_constraint_grid: f64,
    pub min_coverage_on_fine_grid: f64,
    pub min_coverage_gamma: f64,
    /// `e^2(0; s)`.
    pub e_squared_at_zero: f64,
    /// `1 - e^2(0; s)`.
    pub expected_gain: f64,
    /// `max_gamma e^2(gamma; s) - 1`.
    pub max_potential_loss: f64,
    pub max_loss_gamma: f64,
    pub gain_loss_ratio: f64,
    /// Any knot value within `1e-6` of its bound.
    pub bounds_active: bool,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time_secs: f64,
}

struct CoverageProblem<'a> {
    ev: &'a Evaluator,
    b_basis: DMatrix<f64>,
    s_basis: DMatrix<f64>,
    s_half_basis: DMatrix<f64>,
    objective_grad: DVector<f64>,
    t: f64,
    nb: usize,
    rho: f64,
    target: f64,
    gammas: Vec<f64>,
    standard_parts: Vec<f64>,
}

impl CoverageProblem<'_> {
    fn nodes(&self, z: &DVector<f64>) -> NodeValues {
        let zb = z.rows(0, self.nb);
        let zs = z.rows(self.nb, z.len() - self.nb).map(|v| v - self.t);
        let b = &self.b_basis * zb;
        let s = (&self.s_basis * &zs).add_scalar(self.t);
        let s_half = (&self.s_half_basis * &zs).add_scalar(self.t);
        NodeValues { b: b.as_slice().to_vec(), s: s.as_slice().to_vec(), s_half: s_half.as_slice().to_vec() }
    }
}

impl Nlp for CoverageProblem<'_> {
    fn objective(&self, z: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let mut f = 0.0;
        for (j, g) in self.objective_grad.iter().enumerate().skip(self.nb) {
            f += g * (z[j] - self.t);
        }
        Ok((f, self.objective_grad.clone()))
    }

    fn constraints(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        let nodes = self.nodes(z);
        let vals: Result<Vec<f64>> = self
            .gammas
            .par_iter()
            .zip(&self.standard_parts)
            .map(|(&g, &sp)| Ok(self.ev.coverage_from_nodes(g, self.rho, &nodes, sp)? - self.target))
            .collect();
        Ok(DVector::from_vec(vals?))
    }

    fn constraints_with_jacobian(&self, z: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let nodes = self.nodes(z);
        let rows: Result<Vec<(f64, Vec<f64>)>> = self
            .gammas
            .par_iter()
            .zip(&self.standard_parts)
            .map(|(&g, &sp)| {
                let (c, grad) = self.ev.coverage_with_gradient(g, self.rho, &nodes, sp)?;
                let db = DVector::from_vec(grad.db);
                let ds = DVector::from_vec(grad.ds);
                let mut row = (self.b_basis.transpose() * db).as_slice().to_vec();
                row.extend_from_slice((self.s_basis.transpose() * ds).as_slice());
                Ok((c - self.target, row))
            })
            .collect();
        let rows = rows?;
        let n = z.len();
        let c = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.0));
        let jac = DMatrix::from_fn(rows.len(), n, |i, j| rows[i].1[j]);
        Ok((c, jac))
    }
}

fn basis_matrix(rows: Vec<Vec<f64>>, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j])
}

fn coverage_values(ev: &Evaluator, nodes: &NodeValues, rho: f64, gammas: &[f64]) -> Result<Vec<f64>> {
    gammas
        .par_iter()
        .map(|&g| {
            let sp = ev.standard_part(g, rho)?;
            ev.coverage_from_nodes(g, rho, nodes, sp)
        })
        .collect()
}

struct Attempt {
    z: DVector<f64>,
    objective: f64,
    iterations: usize,
    converged: bool,
    constraint_min: f64,
}

fn run_from(
    config: &SolveConfig,
    template: &BSFunctions,
    ev: &Evaluator,
    z0: DVector<f64>,
) -> Result<Attempt> {
    let t = template.s_end();
    let nb = template.b_values().len();
    let ns = template.s_values().len();
    let xs = ev.x_nodes();
    let xh = ev.x_half_nodes();
    let b_basis = basis_matrix(template.b_basis(&xs)?, nb);
    let s_basis = basis_matrix(template.s_basis(&xs)?, ns);
    let s_half_basis = basis_matrix(template.s_basis(&xh)?, ns);
    let weights = DVector::from_vec(ev.objective_weights(config.lambda));
    let s_grad = s_half_basis.transpose() * weights;
    let mut objective_grad = DVector::zeros(nb + ns);
    objective_grad.rows_mut(nb, ns).copy_from(&s_grad);

    let steps = config.grid_steps();
    let mut gammas: Vec<f64> = (0..=steps).map(|i| i as f64 * config.constraint_delta).collect();
    let fine_step = config.constraint_delta / 4.0;
    let fine: Vec<f64> = (0..=4 * steps).map(|i| i as f64 * fine_step).collect();

    let lower = DVector::from_fn(nb + ns, |i, _| if i < nb { -2.0 * t } else { 0.0 });
    let upper = DVector::from_element(nb + ns, 2.0 * t);
    let settings = SqpSettings {
        max_iterations: config.max_iterations,
        feasibility_tol: config.feasibility_tol,
        objective_tol: config.objective_tol,
        step_tol: 1e-9,
        initial_radius: 0.25 * t,
        max_radius: t,
    };

    let mut z = z0;
    let mut total_iterations = 0;
    let mut outcome = None;
    for _ in 0..MAX_REFINEMENT_ROUNDS {
        let standard_parts: Result<Vec<f64>> =
            gammas.par_iter().map(|&g| ev.standard_part(g, config.rho)).collect();
        let problem = CoverageProblem {
            ev,
            b_basis: b_basis.clone(),
            s_basis: s_basis.clone(),
            s_half_basis: s_half_basis.clone(),
            objective_grad: objective_grad.clone(),
            t,
            nb,
            rho: config.rho,
            target: 1.0 - config.alpha,
            gammas: gammas.clone(),
            standard_parts: standard_parts?,
        };
        let out = minimize(&problem, z.clone(), &lower, &upper, &settings)?;
        total_iterations += out.iterations;
        z = out.z.clone();

        let nodes = problem.nodes(&z);
        let fine_cov = coverage_values(ev, &nodes, config.rho, &fine)?;
        let floor = 1.0 - config.alpha - config.feasibility_tol;
        let added: Vec<f64> = fine
            .iter()
            .zip(&fine_cov)
            .filter(|(g, c)| **c < floor && !gammas.iter().any(|h| (*h - **g).abs() < 1e-12))
            .map(|(g, _)| *g)
            .collect();
        let done = added.is_empty() || !out.converged;
        outcome = Some((out, problem.constraints(&z)?.min()));
        if done {
            break;
        }
        gammas.extend(added);
        gammas.sort_by(f64::total_cmp);
    }
    let (out, constraint_min) = outcome.expect("at least one round");
    Ok(Attempt {
        z,
        objective: out.objective,
        iterations: total_iterations,
        converged: out.converged,
        constraint_min: constraint_min + 1.0 - config.alpha,
    })
}

fn start_point(config: &SolveConfig, template: &BSFunctions, mode: InitMode) -> DVector<f64> {
    let t = template.s_end();
    let nb = template.b_values().len();
    let ns = template.s_values().len();
    let mut z = DVector::from_fn(nb + ns, |i, _| if i < nb { 0.0 } else { t });
    if let InitMode::Perturbed { seed, scale } = mode {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ config.seed);
        for v in z.iter_mut() {
            *v += scale * t * rng.random_range(-1.0..1.0);
            *v = v.clamp(if *v < 0.0 { -2.0 * t } else { 0.0 }, 2.0 * t);
        }
        for v in z.rows_mut(nb, ns).iter_mut() {
            *v = v.max(0.0);
        }
    }
    z
}

/// Run the computational procedure for one configuration.
pub fn solve(config: &SolveConfig) -> Result<SolveReport> {
    let started = Instant::now();
    config.validate()?;
    let template = config.template()?;
    let ev = Evaluator::new(&template, &config.eval)?;

    let mut modes = vec![config.init];
    if config.multi_start {
        modes.extend((1..=3).map(|k| InitMode::Perturbed { seed: k, scale: 0.2 }));
    }
    let mut best: Option<Attempt> = None;
    for mode in modes {
        let attempt = run_from(config, &template, &ev, start_point(config, &template, mode))?;
        let feasible = attempt.constraint_min >= 1.0 - config.alpha - config.feasibility_tol;
        let better = match &best {
            None => true,
            Some(b) => {
                let b_feasible = b.constraint_min >= 1.0 - config.alpha - config.feasibility_tol;
                (feasible && !b_feasible) || (feasible == b_feasible && attempt.objective < b.objective)
            }
        };
        if better {
            best = Some(attempt);
        }
    }
    let best = best.expect("at least one start");

    let nb = template.b_values().len();
    let z = &best.z;
    let bs = template.with_values(&z.as_slice()[..nb], &z.as_slice()[nb..])?;
    report(config, bs, &best, &ev, started)
}

fn report(
    config: &SolveConfig,
    bs: BSFunctions,
    attempt: &Attempt,
    ev: &Evaluator,
    started: Instant,
) -> Result<SolveReport> {
    let t = bs.s_end();
    let steps = config.grid_steps();
    let gamma_max = steps as f64 * config.constraint_delta;
    let fine_step = config.constraint_delta / 4.0;
    let fine = gamma_grid(gamma_max, fine_step)?;
    let nodes = ev.node_values(&bs);
    let fine_cov = coverage_values(ev, &nodes, config.rho, &fine)?;
    let (min_gamma, min_cov) =
        fine.iter()
            .zip(&fine_cov)
            .fold((0.0, f64::INFINITY), |acc, (&g, &c)| if c < acc.1 { (g, c) } else { acc });
    let e0 = ev.scaled_length_from_nodes(0.0, &nodes);
    let e0_sq = e0 * e0;
    let (max_gamma, max_e2) = maximum_e_squared(&bs, gamma_max, fine_step, &config.eval)?;
    let gain = 1.0 - e0_sq;
    let loss = max_e2 - 1.0;
    let near = |v: f64, bound: f64| (v - bound).abs() < 1e-6;
    let bounds_active = bs.b_values().iter().any(|&b| near(b.abs(), 2.0 * t))
        || bs.s_values().iter().any(|&s| near(s, 0.0) || near(s, 2.0 * t));
    let converged = attempt.converged && bs.validate().is_ok();
    Ok(SolveReport {
        objective_value: ev.objective_from_nodes(config.lambda, &nodes),
        bs,
        lambda: config.lambda,
        rho: config.rho,
        min_coverage_on_constraint_grid: attempt.constraint_min,
        min_coverage_on_fine_grid: min_cov,
        min_coverage_gamma: min_gamma,
        e_squared_at_zero: e0_sq,
        expected_gain: gain,
        max_potential_loss: loss,
        max_loss_gamma: max_gamma,
        gain_loss_ratio: gain / loss,
        bounds_active,
        iterations: attempt.iterations,
        converged,
        wall_time_secs: started.elapsed().as_secs_f64(),
    })
}

/// Which configuration field a sweep varies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sweep {
    Lambda(Vec<f64>),
    /// Cutoffs `d`, keeping the base knot spacing.
    Cutoff(Vec<f64>),
    /// Knot spacings on `[0, d]`.
    KnotStep(Vec<f64>),
}

/// One solve per swept value, in the order given. Failures are returned
/// in place and do not stop the sweep.
pub fn sensitivity_sweep(base: &SolveConfig, sweep: &Sweep) -> Result<Vec<Result<SolveReport>>> {
    let configs: Vec<Result<SolveConfig>> = match sweep {
        Sweep::Lambda(values) if !values.is_empty() => {
            values.iter().map(|&lambda| Ok(SolveConfig { lambda, ..base.clone() })).collect()
        }
        Sweep::Cutoff(values) if !values.is_empty() => {
            let step = base.knots.get(1).copied().unwrap_or(base.d);
            values
                .iter()
                .map(|&d| {
                    Ok(SolveConfig {
                        d,
                        knots: knots_with_step(d, step)?,
                        constraint_count: None,
                        ..base.clone()
                    })
                })
                .collect()
        }
        Sweep::KnotStep(values) if !values.is_empty() => values
            .iter()
            .map(|&step| Ok(SolveConfig { knots: knots_with_step(base.d, step)?, ..base.clone() }))
            .collect(),
        _ => return Err(invalid("a sweep needs at least one value")),
    };
    Ok(configs.into_iter().map(|c| c.and_then(|c| solve(&c))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bsfun::even_knots;
    use crate::perfeval::coverage;

    fn small_config() -> SolveConfig {
        let mut c = SolveConfig::new(0.5, 3.0, even_knots(3.0, 3).unwrap(), -0.6, DegreesOfFreedom::Infinite);
        c.eval.x_nodes = 6;
        c.max_iterations = 100;
        c
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let config = small_config();
        let template = config.template().unwrap();
        let ev = Evaluator::new(&template, &config.eval).unwrap();
        let nb = 2;
        let xs = ev.x_nodes();
        let xh = ev.x_half_nodes();
        let gammas = vec![0.0, 0.8, 2.1];
        let problem = CoverageProblem {
            ev: &ev,
            b_basis: basis_matrix(template.b_basis(&xs).unwrap(), nb),
            s_basis: basis_matrix(template.s_basis(&xs).unwrap(), 3),
            s_half_basis: basis_matrix(template.s_basis(&xh).unwrap(), 3),
            objective_grad: DVector::zeros(5),
            t: template.s_end(),
            nb,
            rho: config.rho,
            target: 0.95,
            standard_parts: gammas.iter().map(|&g| ev.standard_part(g, config.rho).unwrap()).collect(),
            gammas,
        };
        let z = DVector::from_vec(vec![-0.3, 0.2, 1.6, 1.8, 2.1]);
        let (c, jac) = problem.constraints_with_jacobian(&z).unwrap();
        let h = 1e-6;
        for j in 0..5 {
            let mut zp = z.clone();
            zp[j] += h;
            let mut zm = z.clone();
            zm[j] -= h;
            let fd = (problem.constraints(&zp).unwrap() - problem.constraints(&zm).unwrap()) / (2.0 * h);
            for i in 0..3 {
                assert!((fd[i] - jac[(i, j)]).abs() < 1e-7, "({i}, {j}): {} vs {}", fd[i], jac[(i, j)]);
            }
        }
        // the node values reproduce the spline at the quadrature nodes
        let bs = template.with_values(&[-0.3, 0.2], &[1.6, 1.8, 2.1]).unwrap();
        let nodes = problem.nodes(&z);
        for (k, &x) in xs.iter().enumerate() {
            assert!((nodes.b[k] - bs.b(x)).abs() < 1e-12);
            assert!((nodes.s[k] - bs.s(x.abs())).abs() < 1e-12);
        }
        let direct = coverage(0.8, &bs, config.rho, &config.eval).unwrap();
        assert!((c[1] + 0.95 - direct).abs() < 1e-12);
    }

    #[test]
    fn small_solve_improves_and_stays_feasible() {
        let config = small_config();
        let report = solve(&config).unwrap();
        assert!(report.converged, "{report:?}");
        assert!(report.objective_value < 0.0);
        assert!(report.min_coverage_on_fine_grid >= 0.95 - config.feasibility_tol);
        assert!(report.expected_gain > 0.0);
        assert!(!report.bounds_active);
        let again = solve(&config).unwrap();
        assert!((again.objective_value - report.objective_value).abs() < 1e-8);
    }

    #[test]
    fn validation() {
        let mut c = small_config();
        c.constraint_count = Some(4);
        assert!(c.validate().is_err());
        let mut c = small_config();
        c.rho = -1.0;
        assert!(matches!(c.validate(), Err(Error::DegenerateCorrelation)));
        let mut c = small_config();
        c.lambda = -0.1;
        assert!(c.validate().is_err());
        let mut c = small_config();
        c.knots = vec![0.0, 1.0, 2.5];
        assert!(c.validate().is_err());
        assert!(sensitivity_sweep(&small_config(), &Sweep::Lambda(vec![])).is_err());
    }

    #[test]
    fn config_json_round_trip() {
        let c = small_config();
        let text = serde_json::to_string(&c).unwrap();
        let back: SolveConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(c, back);
        let minimal = r#"{"lambda": 0.2, "d": 6, "knots": [0,1,2,3,4,5,6], "dof": 76, "rho": -0.7}"#;
        let parsed: SolveConfig = serde_json::from_str(minimal).unwrap();
        assert_eq!(parsed.grid_steps(), 48);
        assert!(serde_json::from_str::<SolveConfig>(&minimal.replace("\"rho\"", "\"rhoo\"")).is_err());
    }
}
