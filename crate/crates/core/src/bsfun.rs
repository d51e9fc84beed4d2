//! The `(b, s)` function pairs that define an interval
//! `[theta_hat - sqrt(v11) sigma_hat b(x) +- sqrt(v11) sigma_hat s(|x|)]`
//! with `x = tau_hat / (sigma_hat sqrt(v22))`.
//!
//! [`BSFunctions`] is the spline family that is optimized: `b` is odd,
//! both functions are continuous, and beyond the cutoff `d` they equal the
//! standard interval's constants (`b = 0`, `s = t_{m,1-alpha/2}`).
//! [`NaiveBs`] and [`TransitionBs`] are comparison members that are
//! evaluated but never optimized.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dist::{t_quantile, DegreesOfFreedom};
use crate::error::{invalid, Error, Result};
use crate::spline::{Boundary, CubicSpline};

/// Anything of the form `J(b, s)` that the evaluators can integrate.
pub trait IntervalShape: Send + Sync {
    /// Centre offset `b(x)`; odd in `x`.
    fn b(&self, x: f64) -> f64;
    /// Half-width `s(x)` for `x >= 0`.
    fn s(&self, x: f64) -> f64;
    /// `d` such that `b(x) = 0` for `|x| >= d` and `s(x) = s_end()` for `x >= d`.
    fn cutoff(&self) -> f64;
    /// Points of `[0, d]` where `b` or `s` lose smoothness, including `0` and `d`.
    fn breakpoints(&self) -> Vec<f64>;
    fn alpha(&self) -> f64;
    fn dof(&self) -> DegreesOfFreedom;
    /// The standard interval's multiplier `t_{m,1-alpha/2}`.
    fn s_end(&self) -> f64;
}

/// End condition used for the `s` spline at `x = 0` and `x = d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SEndCondition {
    #[default]
    Natural,
    NotAKnot,
}

impl SEndCondition {
    fn boundary(self) -> Boundary {
        match self {
            Self::Natural => Boundary::Natural,
            Self::NotAKnot => Boundary::NotAKnot,
        }
    }

    fn is_natural(&self) -> bool {
        *self == Self::Natural
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// `t_{m,1-alpha/2}` (or `z_{1-alpha/2}` for infinite degrees of freedom).
pub fn standard_multiplier(alpha: f64, dof: DegreesOfFreedom) -> Result<f64> {
    check_alpha(alpha)?;
    t_quantile(1.0 - 0.5 * alpha, dof)
}

/// Evenly spaced knots `0, step, 2 step, ..., d`.
pub fn even_knots(d: f64, count_intervals: usize) -> Result<Vec<f64>> {
    if !(d > 0.0) || count_intervals == 0 {
        return Err(invalid("even knots need d > 0 and at least one interval"));
    }
    let n = count_intervals as f64;
    let mut knots: Vec<f64> = (0..=count_intervals).map(|i| d * i as f64 / n).collect();
    knots[count_intervals] = d;
    Ok(knots)
}

/// Knots `0, step, 2 step, ...` up to `d`; `d / step` must be (close to) an integer.
pub fn knots_with_step(d: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) {
        return Err(invalid(format!("knot step must be positive, got {step}")));
    }
    let count = (d / step).round();
    if count < 1.0 || ((d / step) - count).abs() > 1e-9 * count.max(1.0) {
        return Err(invalid(format!("knot step {step} does not divide d = {d}")));
    }
    even_knots(d, count as usize)
}

/// Serialized form of [`BSFunctions`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BsDocument {
    pub alpha: f64,
    pub dof: DegreesOfFreedom,
    pub d: f64,
    pub knots: Vec<f64>,
    pub b_values: Vec<f64>,
    pub s_values: Vec<f64>,
    #[serde(default, skip_serializing_if = "SEndCondition::is_natural")]
    pub s_end_condition: SEndCondition,
}

/// Spline-parametrized `(b, s)` pair.
///
/// `b_values` holds `b` at the interior knots `x_2 .. x_{q-1}`; `s_values`
/// holds `s` at `x_1 .. x_{q-1}`. The end values `b(0) = b(d) = 0` and
/// `s(d) = t_{m,1-alpha/2}` are pinned. `b` is the clamped spline with zero
/// end slopes through the odd extension of its data on `[-d, d]`, which is
/// exactly odd because the data and end conditions are antisymmetric.
#[derive(Clone)]
pub struct BSFunctions {
    d: f64,
    knots: Vec<f64>,
    b_values: Vec<f64>,
    s_values: Vec<f64>,
    alpha: f64,
    dof: DegreesOfFreedom,
    s_end: f64,
    s_end_condition: SEndCondition,
    b_spline: CubicSpline,
    s_spline: CubicSpline,
}

impl fmt::Debug for BSFunctions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BSFunctions")
            .field("d", &self.d)
            .field("knots", &self.knots)
            .field("b_values", &self.b_values)
            .field("s_values", &self.s_values)
            .field("alpha", &self.alpha)
            .field("dof", &self.dof)
            .finish()
    }
}

impl BSFunctions {
    /// Build the splines from knot data. See the type docs for the layout.
    pub fn build(
        d: f64,
        knots: &[f64],
        b_values: &[f64],
        s_values: &[f64],
        alpha: f64,
        dof: DegreesOfFreedom,
    ) -> Result<Self> {
        Self::build_with(d, knots, b_values, s_values, alpha, dof, SEndCondition::Natural)
    }

    pub fn build_with(
        d: f64,
        knots: &[f64],
        b_values: &[f64],
        s_values: &[f64],
        alpha: f64,
        dof: DegreesOfFreedom,
        s_end_condition: SEndCondition,
    ) -> Result<Self> {
        check_alpha(alpha)?;
        dof.validate()?;
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Validation(format!("cutoff d must be positive, got {d}")));
        }
        let q = knots.len();
        if q < 2 {
            return Err(Error::Validation("at least two knots (0 and d) are required".into()));
        }
        if knots[0] != 0.0 || knots[q - 1] != d {
            return Err(Error::Validation(format!(
                "knots must run from 0 to d = {d}, got {} .. {}",
                knots[0],
                knots[q - 1]
            )));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Validation("knots must be strictly increasing".into()));
        }
        if b_values.len() != q - 2 {
            return Err(Error::Validation(format!(
                "expected {} b values for {q} knots, got {}",
                q - 2,
                b_values.len()
            )));
        }
        if s_values.len() != q - 1 {
            return Err(Error::Validation(format!(
                "expected {} s values for {q} knots, got {}",
                q - 1,
                s_values.len()
            )));
        }
        if b_values.iter().chain(s_values).any(|v| !v.is_finite()) {
            return Err(Error::Validation("b and s values must be finite".into()));
        }
        if let Some(bad) = s_values.iter().find(|&&v| v < 0.0) {
            return Err(Error::Validation(format!("s values must be nonnegative, found {bad}")));
        }
        if s_end_condition == SEndCondition::NotAKnot && q < 4 {
            return Err(Error::Validation("not-a-knot s splines need at least four knots".into()));
        }
        let s_end = standard_multiplier(alpha, dof)?;

        // odd extension of the b data onto [-d, d]
        let mut bx = Vec::with_capacity(2 * q - 1);
        let mut by = Vec::with_capacity(2 * q - 1);
        for i in (1..q).rev() {
            bx.push(-knots[i]);
            by.push(-b_at_knot(b_values, q, i));
        }
        for (i, &k) in knots.iter().enumerate() {
            bx.push(k);
            by.push(b_at_knot(b_values, q, i));
        }
        let b_spline = CubicSpline::new(&bx, &by, Boundary::Clamped { left: 0.0, right: 0.0 })?;

        let mut sy = s_values.to_vec();
        sy.push(s_end);
        let s_spline = CubicSpline::new(knots, &sy, s_end_condition.boundary())?;

        Ok(Self {
            d,
            knots: knots.to_vec(),
            b_values: b_values.to_vec(),
            s_values: s_values.to_vec(),
            alpha,
            dof,
            s_end,
            s_end_condition,
            b_spline,
            s_spline,
        })
    }

    /// The standard interval written as a member of the family:
    /// `b = 0`, `s = t_{m,1-alpha/2}`.
    pub fn standard(d: f64, knots: &[f64], alpha: f64, dof: DegreesOfFreedom) -> Result<Self> {
        let t = standard_multiplier(alpha, dof)?;
        let q = knots.len();
        let b = vec![0.0; q.saturating_sub(2)];
        let s = vec![t; q.saturating_sub(1)];
        Self::build(d, knots, &b, &s, alpha, dof)
    }

    /// Same knots and settings, new knot values.
    pub fn with_values(&self, b_values: &[f64], s_values: &[f64]) -> Result<Self> {
        Self::build_with(self.d, &self.knots, b_values, s_values, self.alpha, self.dof, self.s_end_condition)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn b_values(&self) -> &[f64] {
        &self.b_values
    }

    pub fn s_values(&self) -> &[f64] {
        &self.s_values
    }

    pub fn s_end_condition(&self) -> SEndCondition {
        self.s_end_condition
    }

    /// Minimum of `s` over `n + 1` evenly spaced points of `[0, d]`.
    pub fn min_s_on_grid(&self, n: usize) -> f64 {
        (0..=n).map(|i| self.s(self.d * i as f64 / n as f64)).fold(f64::INFINITY, f64::min)
    }

    /// Check every restriction, including `s >= 0` on a fine grid.
    pub fn validate(&self) -> Result<()> {
        let lowest = self.min_s_on_grid(10_000);
        if lowest < 0.0 {
            return Err(Error::Validation(format!("s dips below zero between knots (minimum {lowest:e})")));
        }
        Ok(())
    }

    pub fn to_document(&self) -> BsDocument {
        BsDocument {
            alpha: self.alpha,
            dof: self.dof,
            d: self.d,
            knots: self.knots.clone(),
            b_values: self.b_values.clone(),
            s_values: self.s_values.clone(),
            s_end_condition: self.s_end_condition,
        }
    }

    pub fn from_document(doc: &BsDocument) -> Result<Self> {
        let bs = Self::build_with(
            doc.d,
            &doc.knots,
            &doc.b_values,
            &doc.s_values,
            doc.alpha,
            doc.dof,
            doc.s_end_condition,
        )?;
        bs.validate()?;
        Ok(bs)
    }

    /// Weights `w` with `b(x) = sum_j w_j b_values[j]` at each of `xs`.
    pub(crate) fn b_basis(&self, xs: &[f64]) -> Result<Vec<Vec<f64>>> {
        let nb = self.b_values.len();
        let flat_s = vec![self.s_end; self.s_values.len()];
        let mut rows = vec![vec![0.0; nb]; xs.len()];
        for j in 0..nb {
            let mut unit = vec![0.0; nb];
            unit[j] = 1.0;
            let e = self.with_values(&unit, &flat_s)?;
            for (r, &x) in rows.iter_mut().zip(xs) {
                r[j] = e.b(x);
            }
        }
        Ok(rows)
    }

    /// Weights `w` with `s(|x|) - s_end = sum_j w_j (s_values[j] - s_end)` at each of `xs`.
    pub(crate) fn s_basis(&self, xs: &[f64]) -> Result<Vec<Vec<f64>>> {
        let ns = self.s_values.len();
        let b = vec![0.0; self.b_values.len()];
        let mut rows = vec![vec![0.0; ns]; xs.len()];
        for j in 0..ns {
            let mut s = vec![self.s_end; ns];
            s[j] = self.s_end + 1.0;
            let e = self.with_values(&b, &s)?;
            for (r, &x) in rows.iter_mut().zip(xs) {
                r[j] = e.s(x.abs()) - self.s_end;
            }
        }
        Ok(rows)
    }
}

fn b_at_knot(b_values: &[f64], q: usize, i: usize) -> f64 {
    if i == 0 || i == q - 1 {
        0.0
    } else {
        b_values[i - 1]
    }
}

impl IntervalShape for BSFunctions {
    fn b(&self, x: f64) -> f64 {
        if x.abs() >= self.d {
            0.0
        } else if x < 0.0 {
            // the spline is odd up to rounding; evaluate on the right half so
            // that oddness is exact
            -self.b_spline.eval(-x)
        } else {
            self.b_spline.eval(x)
        }
    }

    fn s(&self, x: f64) -> f64 {
        let x = x.abs();
        if x >= self.d {
            self.s_end
        } else {
            self.s_spline.eval(x)
        }
    }

    fn cutoff(&self) -> f64 {
        self.d
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.knots.clone()
    }

    fn alpha(&self) -> f64 {
        self.alpha
    }

    fn dof(&self) -> DegreesOfFreedom {
        self.dof
    }

    fn s_end(&self) -> f64 {
        self.s_end
    }
}

impl Serialize for BSFunctions {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_document().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for BSFunctions {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let doc = BsDocument::deserialize(deserializer)?;
        Self::from_document(&doc).map_err(serde::de::Error::custom)
    }
}

/// The interval obtained from a preliminary test of `tau = 0` with critical
/// value `q`: for `|x| <= q`, `b(x) = rho x` and
/// `s(x) = t_{m+1,1-alpha/2} sqrt(1 - rho^2) sqrt((m + x^2) / (m + 1))`;
/// otherwise the standard interval. Both functions jump at `q`.
#[derive(Debug, Clone)]
pub struct NaiveBs {
    q: f64,
    rho: f64,
    alpha: f64,
    m: u32,
    t_m: f64,
    t_m1: f64,
}

impl NaiveBs {
    pub fn new(q: f64, rho: f64, alpha: f64, dof: DegreesOfFreedom) -> Result<Self> {
        let m = match dof {
            DegreesOfFreedom::Infinite => return Err(Error::InfiniteDofUnsupported("naive_bs")),
            DegreesOfFreedom::Finite(m) => m,
        };
        dof.validate()?;
        check_alpha(alpha)?;
        if !(q > 0.0) || !q.is_finite() {
            return Err(invalid(format!("critical value q must be positive, got {q}")));
        }
        if !(rho.abs() <= 1.0) {
            return Err(invalid(format!("rho must lie in [-1, 1], got {rho}")));
        }
        Ok(Self {
            q,
            rho,
            alpha,
            m,
            t_m: t_quantile(1.0 - 0.5 * alpha, dof)?,
            t_m1: t_quantile(1.0 - 0.5 * alpha, DegreesOfFreedom::Finite(m + 1))?,
        })
    }

    /// The naive interval whose preliminary test has level `alpha_test`:
    /// `q = t_{m,1-alpha_test/2}`.
    pub fn from_test_level(alpha_test: f64, rho: f64, alpha: f64, dof: DegreesOfFreedom) -> Result<Self> {
        let q = standard_multiplier(alpha_test, dof)?;
        Self::new(q, rho, alpha, dof)
    }

    pub fn q(&self) -> f64 {
        self.q
    }
}

impl IntervalShape for NaiveBs {
    fn b(&self, x: f64) -> f64 {
        if x.abs() <= self.q {
            self.rho * x
        } else {
            0.0
        }
    }

    fn s(&self, x: f64) -> f64 {
        let x = x.abs();
        if x <= self.q {
            let m = self.m as f64;
            self.t_m1 * (1.0 - self.rho * self.rho).sqrt() * ((m + x * x) / (m + 1.0)).sqrt()
        } else {
            self.t_m
        }
    }

    fn cutoff(&self) -> f64 {
        self.q
    }

    fn breakpoints(&self) -> Vec<f64> {
        vec![0.0, self.q]
    }

    fn alpha(&self) -> f64 {
        self.alpha
    }

    fn dof(&self) -> DegreesOfFreedom {
        DegreesOfFreedom::Finite(self.m)
    }

    fn s_end(&self) -> f64 {
        self.t_m
    }
}

/// Transition function `g: [0, inf) -> [0, 1]`.
pub type TransitionFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Continuous mixture `g I + (1 - g) K` of the standard interval `I` and the
/// interval `K` that assumes `tau = 0`, for large `n - p`:
/// `b(x) = (1 - g(|x|)) rho x`,
/// `s(x) = (g(x) (1 - sqrt(1 - rho^2)) + sqrt(1 - rho^2)) z_{1-alpha/2}`.
///
/// `g` only approaches 1, so evaluation treats it as exactly 1 beyond
/// `support`.
#[derive(Clone)]
pub struct TransitionBs {
    g: TransitionFn,
    rho: f64,
    alpha: f64,
    z: f64,
    support: f64,
}

impl fmt::Debug for TransitionBs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TransitionBs")
            .field("rho", &self.rho)
            .field("alpha", &self.alpha)
            .field("support", &self.support)
            .finish_non_exhaustive()
    }
}

impl TransitionBs {
    /// `support` defaults to the first point of a 0.01-spaced grid (up to 50)
    /// where `1 - g < 1e-12`.
    pub fn new(g: TransitionFn, rho: f64, alpha: f64, support: Option<f64>) -> Result<Self> {
        check_alpha(alpha)?;
        if !(rho.abs() <= 1.0) {
            return Err(invalid(format!("rho must lie in [-1, 1], got {rho}")));
        }
        let support = match support {
            Some(s) if s > 0.0 && s.is_finite() => s,
            Some(s) => return Err(invalid(format!("support must be positive, got {s}"))),
            None => (1..=5000).map(|i| i as f64 * 0.01).find(|&x| 1.0 - g(x) < 1e-12).unwrap_or(50.0),
        };
        let n = 4000;
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=n {
            let x = support * i as f64 / n as f64;
            let v = g(x);
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Validation(format!("g({x}) = {v} lies outside [0, 1]")));
            }
            if v < prev - 1e-15 {
                return Err(Error::Validation(format!("g decreases near x = {x}")));
            }
            prev = v;
        }
        Ok(Self { g, rho, alpha, z: t_quantile(1.0 - 0.5 * alpha, DegreesOfFreedom::Infinite)?, support })
    }

    fn g_at(&self, x: f64) -> f64 {
        if x >= self.support {
            1.0
        } else {
            (self.g)(x)
        }
    }
}

impl IntervalShape for TransitionBs {
    fn b(&self, x: f64) -> f64 {
        (1.0 - self.g_at(x.abs())) * self.rho * x
    }

    fn s(&self, x: f64) -> f64 {
        let r = (1.0 - self.rho * self.rho).sqrt();
        (self.g_at(x.abs()) * (1.0 - r) + r) * self.z
    }

    fn cutoff(&self) -> f64 {
        self.support
    }

    fn breakpoints(&self) -> Vec<f64> {
        let pieces = self.support.ceil().max(1.0) as usize;
        even_knots(self.support, pieces).unwrap_or_else(|_| vec![0.0, self.support])
    }

    fn alpha(&self) -> f64 {
        self.alpha
    }

    fn dof(&self) -> DegreesOfFreedom {
        DegreesOfFreedom::Infinite
    }

    fn s_end(&self) -> f64 {
        self.z
    }
}
