//! Probability kernel: the standard normal, Student t quantiles, the law of
//! `W = sigma_hat / sigma` and the normal slice probability `psi`.
//!
//! `W` is distributed as `sqrt(Q / m)` with `Q ~ chi^2_m`. With infinitely many
//! degrees of freedom `W` is the point mass at 1, which is represented
//! explicitly by [`DegreesOfFreedom::Infinite`] rather than by a large `m`.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};
use std::fmt;

use libm::erfc;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use statrs::function::beta::beta_reg;
use statrs::function::erf::erfc_inv;
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use crate::error::{invalid, Error, Result};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Residual degrees of freedom `m = n - p`, or the limiting infinite case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DegreesOfFreedom {
    Finite(u32),
    Infinite,
}

impl DegreesOfFreedom {
    pub fn finite(m: u32) -> Result<Self> {
        if m == 0 {
            return Err(invalid("degrees of freedom must be at least 1"));
        }
        Ok(Self::Finite(m))
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Self::Infinite)
    }

    /// The finite value, if any.
    pub fn get(&self) -> Option<u32> {
        match *self {
            Self::Finite(m) => Some(m),
            Self::Infinite => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Finite(0) => Err(invalid("degrees of freedom must be at least 1")),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for DegreesOfFreedom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Finite(m) => write!(f, "{m}"),
            Self::Infinite => f.write_str("infinite"),
        }
    }
}

impl std::str::FromStr for DegreesOfFreedom {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("infinite") || s.eq_ignore_ascii_case("inf") {
            return Ok(Self::Infinite);
        }
        let m: u32 = s.parse().map_err(|_| invalid(format!("cannot parse degrees of freedom from {s:?}")))?;
        Self::finite(m)
    }
}

// JSON form: a positive integer, or the string "infinite".
impl Serialize for DegreesOfFreedom {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            Self::Finite(m) => serializer.serialize_u32(m),
            Self::Infinite => serializer.serialize_str("infinite"),
        }
    }
}

impl<'de> Deserialize<'de> for DegreesOfFreedom {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u32),
            Text(String),
        }
        let parsed = match Raw::deserialize(deserializer)? {
            Raw::Int(m) => Self::finite(m),
            Raw::Text(s) => s.parse(),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

/// Standard normal density.
#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal distribution function.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail `1 - Phi(x)`, accurate for large positive `x`.
#[inline]
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x * FRAC_1_SQRT_2)
}

/// Standard normal quantile `z_p`.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid(format!("probability {p} is outside (0, 1)")));
    }
    Ok(normal_quantile_unchecked(p))
}

fn normal_quantile_unchecked(p: f64) -> f64 {
    let mut z = -SQRT_2 * erfc_inv(2.0 * p);
    // Newton polish; p - 1 is exact, 1 - p need not be
    for _ in 0..3 {
        let f = if p > 0.5 { p - 1.0 + normal_sf(z) } else { normal_cdf(z) - p };
        let dens = normal_pdf(z);
        if dens == 0.0 {
            break;
        }
        z -= f / dens;
    }
    z
}

/// `P(x <= Z <= y)` for `Z ~ N(mu, v)`.
pub fn psi(x: f64, y: f64, mu: f64, v: f64) -> Result<f64> {
    if x > y {
        return Err(invalid(format!("psi requires x <= y, got x = {x}, y = {y}")));
    }
    if !(v > 0.0) {
        return Err(invalid(format!("psi requires a positive variance, got {v}")));
    }
    Ok(psi_sd(x, y, mu, v.sqrt()))
}

/// [`psi`] with the standard deviation supplied and no argument checks.
#[inline]
pub(crate) fn psi_sd(x: f64, y: f64, mu: f64, sd: f64) -> f64 {
    let lo = (x - mu) / sd;
    let hi = (y - mu) / sd;
    let p = if lo > 0.0 {
        normal_sf(lo) - normal_sf(hi)
    } else if hi < 0.0 {
        normal_cdf(hi) - normal_cdf(lo)
    } else {
        1.0 - normal_cdf(lo) - normal_sf(hi)
    };
    p.max(0.0)
}

fn ln_t_pdf(t: f64, m: f64) -> f64 {
    ln_gamma(0.5 * (m + 1.0))
        - ln_gamma(0.5 * m)
        - 0.5 * (m * PI).ln()
        - 0.5 * (m + 1.0) * (t * t / m).ln_1p()
}

/// Upper tail `P(T > t)` of Student's t with `m` degrees of freedom, `t >= 0`.
fn t_sf_nonneg(t: f64, m: f64) -> f64 {
    let x = m / (m + t * t);
    0.5 * beta_reg(0.5 * m, 0.5, x)
}

/// Student t distribution function; `Infinite` gives the normal.
pub fn t_cdf(t: f64, dof: DegreesOfFreedom) -> f64 {
    match dof {
        DegreesOfFreedom::Infinite => normal_cdf(t),
        DegreesOfFreedom::Finite(m) => {
            let upper = t_sf_nonneg(t.abs(), m as f64);
            if t >= 0.0 {
                1.0 - upper
            } else {
                upper
            }
        }
    }
}

/// Quantile `t_{m,p}` with `P(T <= t_{m,p}) = p`.
///
/// Newton iteration on the upper tail (regularized incomplete beta), seeded
/// from a Cornish-Fisher corrected normal quantile and safeguarded by a
/// bisection bracket.
pub fn t_quantile(p: f64, dof: DegreesOfFreedom) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid(format!("probability {p} is outside (0, 1)")));
    }
    dof.validate()?;
    let m = match dof {
        DegreesOfFreedom::Infinite => return Ok(normal_quantile_unchecked(p)),
        DegreesOfFreedom::Finite(m) => m as f64,
    };
    if p == 0.5 {
        return Ok(0.0);
    }
    let (tail, sign) = if p > 0.5 { (1.0 - p, 1.0) } else { (p, -1.0) };

    let z = normal_quantile_unchecked(1.0 - tail);
    let mut t = (z + (z * z * z + z) / (4.0 * m)).max(1e-3);
    let mut lo = 0.0_f64;
    let mut hi = t.max(1.0);
    while t_sf_nonneg(hi, m) > tail {
        lo = hi;
        hi *= 2.0;
    }
    if t <= lo || t >= hi {
        t = 0.5 * (lo + hi);
    }
    for _ in 0..200 {
        let f = t_sf_nonneg(t, m) - tail;
        if f > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let dens = ln_t_pdf(t, m).exp();
        let mut next = t + f / dens;
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        let step = (next - t).abs();
        t = next;
        if step <= 1e-15 * t.max(1.0) || hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(sign * t)
}

/// Natural log of the density of `W = sqrt(Q/m)`, `Q ~ chi^2_m`.
pub fn ln_w_density(w: f64, m: u32) -> f64 {
    if w <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let m = m as f64;
    let half = 0.5 * m;
    std::f64::consts::LN_2 + half * half.ln() + (m - 1.0) * w.ln() - half * w * w - ln_gamma(half)
}

/// Density `f_W(w) = 2 (m/2)^(m/2) w^(m-1) exp(-m w^2 / 2) / Gamma(m/2)`.
pub fn w_density(w: f64, dof: DegreesOfFreedom) -> Result<f64> {
    let m = match dof {
        DegreesOfFreedom::Infinite => return Err(Error::InfiniteDofUnsupported("w_density")),
        DegreesOfFreedom::Finite(m) => m,
    };
    dof.validate()?;
    if !(w > 0.0) {
        return Err(invalid(format!("w_density needs w > 0, got {w}")));
    }
    Ok(ln_w_density(w, m).exp())
}

/// `E(W)`; exactly 1 when the degrees of freedom are infinite.
pub fn expected_w(dof: DegreesOfFreedom) -> f64 {
    let m = match dof {
        DegreesOfFreedom::Infinite => return 1.0,
        DegreesOfFreedom::Finite(m) => m as f64,
    };
    if m >= 2000.0 {
        // Gamma((m+1)/2)/Gamma(m/2) sqrt(2/m) expanded in 1/m; the log-gamma
        // difference cancels too many digits here.
        let r = 1.0 / m;
        return 1.0 - r / 4.0 + r * r / 32.0 + 5.0 * r * r * r / 128.0 - 21.0 * r * r * r * r / 2048.0;
    }
    ((2.0 / m).ln() * 0.5 + ln_gamma(0.5 * (m + 1.0)) - ln_gamma(0.5 * m)).exp()
}

/// `P(W <= w)`.
pub fn w_cdf(w: f64, m: u32) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    let m = m as f64;
    gamma_lr(0.5 * m, 0.5 * m * w * w)
}

/// `P(W > w)`, computed without cancellation in the upper tail.
pub fn w_sf(w: f64, m: u32) -> f64 {
    if w <= 0.0 {
        return 1.0;
    }
    let m = m as f64;
    gamma_ur(0.5 * m, 0.5 * m * w * w)
}

/// Lower and upper `W` quantiles at tail probability `tail` on each side.
pub fn w_tail_quantiles(tail: f64, m: u32) -> (f64, f64) {
    // w_cdf increases from 0, w_sf decreases to 0
    let lower = bisect(|w| w_cdf(w, m) < tail, 1.0);
    let upper = bisect(|w| w_sf(w, m) > tail, 2.0);
    (lower, upper)
}

/// Boundary of the half-line `{w > 0 : below(w)}`, where `below` holds on an
/// initial segment `(0, w*)`.
fn bisect(below: impl Fn(f64) -> bool, start: f64) -> f64 {
    let mut lo = 0.0;
    let mut hi = start;
    while below(hi) {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if below(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const M76: DegreesOfFreedom = DegreesOfFreedom::Finite(76);

    #[test]
    fn normal_pdf_values() {
        assert_abs_diff_eq!(normal_pdf(0.0), 0.398_942_280_4, epsilon = 1e-10);
        assert_abs_diff_eq!(normal_pdf(1.0), 0.241_970_724_5, epsilon = 1e-10);
        assert_eq!(normal_pdf(1.7), normal_pdf(-1.7));
    }

    #[test]
    fn normal_cdf_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert_abs_diff_eq!(normal_cdf(1.959_964), 0.975, epsilon = 1e-7);
        let tail = normal_cdf(-8.0);
        assert!(tail < 1e-14 && tail > 0.0);
        assert!(tail < normal_pdf(8.0) / 8.0);
    }

    #[test]
    fn psi_edges() {
        assert_abs_diff_eq!(psi(-40.0, 40.0, 0.0, 1.0).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(psi(-1.959_964, 1.959_964, 0.0, 1.0).unwrap(), 0.95, epsilon = 1e-7);
        assert_eq!(psi(0.3, 0.3, 1.2, 0.5).unwrap(), 0.0);
        assert!(psi(1.0, 0.0, 0.0, 1.0).is_err());
        assert!(psi(0.0, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn t_quantile_values() {
        let q = t_quantile(0.975, M76).unwrap();
        assert!((q - 1.991_673).abs() < 5e-7, "{q}");
        assert_eq!(t_quantile(0.5, M76).unwrap(), 0.0);
        let z = t_quantile(0.975, DegreesOfFreedom::Infinite).unwrap();
        assert_abs_diff_eq!(z, 1.959_963_984_540_054, epsilon = 1e-12);
        assert!(t_quantile(1.0, M76).is_err());
        assert!(t_quantile(0.0, M76).is_err());
    }

    #[test]
    fn t_quantile_closed_forms() {
        // Cauchy and m = 2 have explicit quantiles
        for &p in &[0.6, 0.9, 0.975, 0.999] {
            let cauchy = (PI * (p - 0.5)).tan();
            let t1 = t_quantile(p, DegreesOfFreedom::Finite(1)).unwrap();
            assert!((t1 - cauchy).abs() <= 1e-10 * cauchy.abs(), "{p}: {t1} vs {cauchy}");
            let two = (2.0 * p - 1.0) / (2.0 * p * (1.0 - p)).sqrt();
            let t2 = t_quantile(p, DegreesOfFreedom::Finite(2)).unwrap();
            assert!((t2 - two).abs() <= 1e-10 * two.abs(), "{p}: {t2} vs {two}");
        }
    }

    #[test]
    fn t_quantile_symmetric_and_limit() {
        for &m in &[1u32, 3, 10, 76, 1000] {
            let dof = DegreesOfFreedom::Finite(m);
            for &p in &[0.01, 0.1, 0.3, 0.45] {
                let lo = t_quantile(p, dof).unwrap();
                let hi = t_quantile(1.0 - p, dof).unwrap();
                assert!((lo + hi).abs() < 1e-10 * hi.abs().max(1.0));
                assert!((t_cdf(hi, dof) - (1.0 - p)).abs() < 1e-12);
            }
        }
        let big = t_quantile(0.975, DegreesOfFreedom::Finite(1_000_000)).unwrap();
        let z = t_quantile(0.975, DegreesOfFreedom::Infinite).unwrap();
        assert!((big - z).abs() < 1e-5);
    }

    #[test]
    fn w_density_shape() {
        let m = 76;
        let mode = ((m as f64 - 1.0) / m as f64).sqrt();
        let f = |w: f64| ln_w_density(w, m);
        let h = 1e-5;
        let slope = (f(mode + h) - f(mode - h)) / (2.0 * h);
        assert!(slope.abs() < 1e-6, "{slope}");
        // value of the chi density change of variables computed with scipy
        let got = w_density(0.5, M76).unwrap();
        assert!((got - 3.097_580_067_688_519e-10).abs() < 1e-12 * got, "{got}");
        assert!(got < 1e-9 * w_density(mode, M76).unwrap());
        assert!(w_density(1.0, DegreesOfFreedom::Infinite).is_err());
        assert!(w_density(0.0, M76).is_err());
    }

    #[test]
    fn expected_w_values() {
        assert_eq!(expected_w(DegreesOfFreedom::Infinite), 1.0);
        assert_abs_diff_eq!(expected_w(DegreesOfFreedom::Finite(1)), (2.0 / PI).sqrt(), epsilon = 1e-14);
        let e76 = expected_w(M76);
        assert!((e76 - 0.996_716_025_293_4).abs() < 1e-12, "{e76}");
        let mut prev = 0.0;
        for &m in &[1u32, 2, 5, 76, 500, 1999, 2000, 100_000] {
            let e = expected_w(DegreesOfFreedom::Finite(m));
            assert!(e < 1.0 && e > prev, "m = {m}: {e}");
            prev = e;
        }
        // the series branch agrees with log-gamma where both are accurate
        let m = 2000.0_f64;
        let lg = ((2.0 / m).ln() * 0.5 + ln_gamma(0.5 * (m + 1.0)) - ln_gamma(0.5 * m)).exp();
        assert!((lg - expected_w(DegreesOfFreedom::Finite(2000))).abs() < 1e-11);
    }

    #[test]
    fn w_quantiles_bracket_mass() {
        for &m in &[1u32, 5, 76, 500] {
            let (lo, hi) = w_tail_quantiles(1e-12, m);
            assert!(lo < 1.0 && hi > 1.0);
            assert!((w_cdf(lo, m) - 1e-12).abs() < 1e-14);
            assert!((w_sf(hi, m) - 1e-12).abs() < 1e-14);
        }
    }

    #[test]
    fn dof_json_forms() {
        let s = serde_json::to_string(&M76).unwrap();
        assert_eq!(s, "76");
        let inf: DegreesOfFreedom = serde_json::from_str("\"infinite\"").unwrap();
        assert!(inf.is_infinite());
        assert!(serde_json::from_str::<DegreesOfFreedom>("0").is_err());
    }
}
