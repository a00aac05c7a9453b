//! Slowly varying functions built from a small set of combinators, and their
//! de Bruijn-style conjugates evaluated pointwise.
//!
//! Every combinator is evaluated on the shifted logarithm `log(x + e)` (and
//! `log log(x + e^e)` for the iterated log), so values are finite and positive
//! for all `x >= 1` without special cases near the origin.
//!
//! JSON form is a tagged expression tree:
//!
//! ```text
//! {"kind":"const","c":3.0}
//! {"kind":"logpow","a":-2.0}
//! {"kind":"loglogpow","a":1.0}
//! {"kind":"product","factors":[{...},{...}]}
//! {"kind":"power","base":{...},"p":0.5}
//! ```
//!
//! An optional top-level `"x_min"` (default 1) sets the clamp floor.

use std::collections::HashMap;
use std::f64::consts::{E, LN_2};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Expression tree of a slowly varying function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SvExpr {
    /// The constant `c > 0`.
    Const { c: f64 },
    /// `(log(x + e))^a`.
    LogPow { a: f64 },
    /// `(log log(x + e^e))^a`.
    LogLogPow { a: f64 },
    /// Pointwise product of the factors.
    Product { factors: Vec<SvExpr> },
    /// `base(x)^p`.
    Power { base: Box<SvExpr>, p: f64 },
}

fn default_floor() -> f64 {
    1.0
}

fn is_default_floor(x: &f64) -> bool {
    *x == 1.0
}

/// A positive slowly varying function with a clamp floor `x_min >= 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvFunc {
    #[serde(flatten)]
    expr: SvExpr,
    #[serde(default = "default_floor", skip_serializing_if = "is_default_floor")]
    x_min: f64,
}

/// `ln(ln(e^s + c))`, stable for very large `s`.
fn ln_shifted_log(s: f64, c: f64) -> f64 {
    let inner = if s > 40.0 {
        s + (c * (-s).exp()).ln_1p()
    } else {
        (s.exp() + c).ln()
    };
    inner.ln()
}

impl SvExpr {
    fn validate(&self) -> Result<()> {
        let finite = |v: f64, what: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{what} must be finite")))
            }
        };
        match self {
            SvExpr::Const { c } => {
                finite(*c, "const")?;
                if *c <= 0.0 {
                    return Err(Error::InvalidArgument("const must be positive".into()));
                }
                Ok(())
            }
            SvExpr::LogPow { a } | SvExpr::LogLogPow { a } => finite(*a, "exponent"),
            SvExpr::Product { factors } => factors.iter().try_for_each(|f| f.validate()),
            SvExpr::Power { base, p } => {
                finite(*p, "power")?;
                base.validate()
            }
        }
    }

    fn eval(&self, x: f64) -> f64 {
        match self {
            SvExpr::Const { c } => *c,
            SvExpr::LogPow { a } => (x + E).ln().powf(*a),
            SvExpr::LogLogPow { a } => (x + E.exp()).ln().ln().powf(*a),
            SvExpr::Product { factors } => factors.iter().map(|f| f.eval(x)).product(),
            SvExpr::Power { base, p } => base.eval(x).powf(*p),
        }
    }

    fn ln_eval_log(&self, s: f64) -> f64 {
        match self {
            SvExpr::Const { c } => c.ln(),
            SvExpr::LogPow { a } => a * ln_shifted_log(s, E),
            SvExpr::LogLogPow { a } => {
                // ln(ln(ln(x + e^e)))
                a * ln_shifted_log(s, E.exp()).ln()
            }
            SvExpr::Product { factors } => factors.iter().map(|f| f.ln_eval_log(s)).sum(),
            SvExpr::Power { base, p } => p * base.ln_eval_log(s),
        }
    }
}

impl SvFunc {
    pub fn new(expr: SvExpr) -> Result<Self> {
        Self::with_floor(expr, 1.0)
    }

    pub fn with_floor(expr: SvExpr, x_min: f64) -> Result<Self> {
        expr.validate()?;
        if !(x_min >= 1.0) || !x_min.is_finite() {
            return Err(Error::InvalidArgument("domain floor must be >= 1".into()));
        }
        Ok(Self { expr, x_min })
    }

    pub fn constant(c: f64) -> Result<Self> {
        Self::new(SvExpr::Const { c })
    }

    pub fn log_pow(a: f64) -> Result<Self> {
        Self::new(SvExpr::LogPow { a })
    }

    pub fn log_log_pow(a: f64) -> Result<Self> {
        Self::new(SvExpr::LogLogPow { a })
    }

    /// `c * self`, keeping the floor.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let expr = SvExpr::Product {
            factors: vec![SvExpr::Const { c }, self.expr.clone()],
        };
        Self::with_floor(expr, self.x_min)
    }

    pub fn expr(&self) -> &SvExpr {
        &self.expr
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    /// Pointwise value; arguments below the floor are clamped to it.
    pub fn eval(&self, x: f64) -> f64 {
        self.expr.eval(x.max(self.x_min))
    }

    /// `ln φ(x)` at `x = e^s`, usable far beyond the f64 range of `x`.
    pub fn ln_eval_log(&self, s: f64) -> f64 {
        self.expr.ln_eval_log(s.max(self.x_min.ln()))
    }

    /// `|φ(λx)/φ(x) - 1|`, the Karamata ratio deviation.
    pub fn karamata_deviation(&self, lambda: f64, x: f64) -> f64 {
        let s = x.ln();
        (self.ln_eval_log(s + lambda.ln()) - self.ln_eval_log(s)).exp_m1().abs()
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: SvFunc = serde_json::from_str(s)?;
        Self::with_floor(f.expr, f.x_min)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("SvFunc serializes")
    }
}

/// Octave run length required before `y φ(y)` is declared increasing.
const MONOTONE_RUN: usize = 8;
const MAX_OCTAVES: usize = 4096;
/// Relative accuracy of the conjugate solve on `y φ(y) = x`.
pub const CONJUGATE_REL_TOL: f64 = 1e-10;

/// Pointwise conjugate φ*: `x φ*(x) = y` where `y φ(y) = x`.
#[derive(Debug)]
pub struct ConjugateSv {
    base: SvFunc,
    bracket_growth: f64,
    threshold_ln_y: f64,
    threshold_x: f64,
    cache: RwLock<HashMap<u64, f64>>,
}

impl Clone for ConjugateSv {
    fn clone(&self) -> Self {
        Self {
            base: self.base.clone(),
            bracket_growth: self.bracket_growth,
            threshold_ln_y: self.threshold_ln_y,
            threshold_x: self.threshold_x,
            cache: RwLock::new(self.cache.read().expect("cache lock").clone()),
        }
    }
}

impl ConjugateSv {
    pub fn new(base: SvFunc) -> Result<Self> {
        Self::with_growth(base, 2.0)
    }

    pub fn with_growth(base: SvFunc, bracket_growth: f64) -> Result<Self> {
        if !(bracket_growth > 1.0) {
            return Err(Error::InvalidArgument("bracket growth must exceed 1".into()));
        }
        let ln_h = |s: f64| s + base.ln_eval_log(s);
        let s0 = base.x_min().ln();
        let mut run = 0;
        let mut start = 0;
        let mut prev = ln_h(s0);
        let mut found = None;
        for i in 1..MAX_OCTAVES {
            let cur = ln_h(s0 + i as f64 * LN_2);
            if cur > prev {
                if run == 0 {
                    start = i - 1;
                }
                run += 1;
                if run >= MONOTONE_RUN {
                    found = Some(start);
                    break;
                }
            } else {
                run = 0;
            }
            prev = cur;
        }
        let start = found.ok_or_else(|| {
            Error::InvalidArgument("y*phi(y) never becomes increasing".into())
        })?;
        let threshold_ln_y = s0 + start as f64 * LN_2;
        let threshold_x = ln_h(threshold_ln_y).exp();
        Ok(Self {
            base,
            bracket_growth,
            threshold_ln_y,
            threshold_x,
            cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn base(&self) -> &SvFunc {
        &self.base
    }

    /// Smallest `x` accepted by [`Self::eval`].
    pub fn threshold(&self) -> f64 {
        self.threshold_x
    }

    fn ln_h(&self, s: f64) -> f64 {
        s + self.base.ln_eval_log(s)
    }

    /// `ln y` solving `y φ(y) = x`.
    pub fn solve_ln_inverse(&self, x: f64) -> Result<f64> {
        if !(x >= self.threshold_x) || !x.is_finite() {
            return Err(Error::BelowMonotoneThreshold {
                x,
                threshold: self.threshold_x,
            });
        }
        let target = x.ln();
        let step = self.bracket_growth.ln();
        let mut lo = self.threshold_ln_y;
        let mut hi = lo + step;
        let mut width = step;
        while self.ln_h(hi) < target {
            lo = hi;
            width *= 2.0;
            hi += width;
        }
        // ln h is increasing on the bracket; bisect until the relative residual is met.
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            let v = self.ln_h(mid);
            if (v - target).abs() <= 0.25 * CONJUGATE_REL_TOL {
                return Ok(mid);
            }
            if v < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// φ*(x) = y/x.
    pub fn eval(&self, x: f64) -> Result<f64> {
        let key = x.to_bits();
        if let Some(v) = self.cache.read().expect("cache lock").get(&key) {
            return Ok(*v);
        }
        let ln_y = self.solve_ln_inverse(x)?;
        let v = (ln_y - x.ln()).exp();
        self.cache.write().expect("cache lock").insert(key, v);
        Ok(v)
    }

    /// `x φ*(x)`, the asymptotic inverse of `y φ(y)`.
    pub fn inverse(&self, x: f64) -> Result<f64> {
        Ok(self.solve_ln_inverse(x)?.exp())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn const_is_constant() {
        let f = SvFunc::constant(3.0).unwrap();
        assert_eq!(f.eval(1e6), 3.0);
    }

    #[test]
    fn clamps_below_floor() {
        let f = SvFunc::log_pow(-2.0).unwrap();
        assert_eq!(f.eval(E - E), f.eval(1.0));
        assert_eq!(f.eval(-5.0), f.eval(1.0));
    }

    #[test]
    fn log_pow_matches_high_precision_reference() {
        // x = e^5 - e in f64 (145.69487727411754); log(x + e) to 50 digits is
        // 4.99999999999999990866147780025529832278...
        let x = 5f64.exp() - E;
        #[allow(clippy::excessive_precision)]
        let reference = 4.999_999_999_999_999_908_661_477_8_f64;
        let f = SvFunc::log_pow(1.0).unwrap();
        assert!((f.eval(x) - reference).abs() < 4.0 * f64::EPSILON * 5.0);
    }

    #[test]
    fn log_eval_agrees_with_direct_eval() {
        let f = SvFunc::new(SvExpr::Product {
            factors: vec![
                SvExpr::Const { c: 0.7 },
                SvExpr::LogPow { a: -2.5 },
                SvExpr::Power {
                    base: Box::new(SvExpr::LogLogPow { a: 1.0 }),
                    p: 0.5,
                },
            ],
        })
        .unwrap();
        for x in [1.0, 3.0, 1e3, 1e9, 1e200] {
            let d = f.eval(x);
            let l = f.ln_eval_log(x.ln()).exp();
            assert!((d / l - 1.0).abs() < 1e-12, "x={x}: {d} vs {l}");
        }
    }

    #[test]
    fn json_round_trip() {
        let f = SvFunc::from_json(r#"{"kind":"logpow","a":-2.0}"#).unwrap();
        assert_eq!(f, SvFunc::log_pow(-2.0).unwrap());
        let g = SvFunc::from_json(&f.to_json()).unwrap();
        assert_eq!(f, g);
        assert!(SvFunc::from_json(r#"{"kind":"const","c":-1.0}"#).is_err());
        let h = SvFunc::from_json(r#"{"kind":"const","c":2.0,"x_min":10.0}"#).unwrap();
        assert_eq!(h.x_min(), 10.0);
    }

    #[test]
    fn conjugate_of_constant() {
        let c = ConjugateSv::new(SvFunc::constant(4.0).unwrap()).unwrap();
        for x in [10.0, 1e4, 1e9] {
            assert!((c.eval(x).unwrap() - 0.25).abs() < 1e-9);
        }
    }

    #[test]
    fn conjugate_below_threshold_errors() {
        let c = ConjugateSv::new(SvFunc::log_pow(-2.0).unwrap()).unwrap();
        let t = c.threshold();
        assert!(matches!(
            c.eval(t * 0.5),
            Err(Error::BelowMonotoneThreshold { .. })
        ));
    }

    #[test]
    fn conjugate_log_pow_matches_bisection_oracle() {
        // Independent oracle: plain bisection on y, not on log y.
        let phi = SvFunc::log_pow(-2.0).unwrap();
        let h = |y: f64| y * (y + E).ln().powi(-2);
        let x = 1e8;
        let (mut lo, mut hi) = (10.0f64, 1e15f64);
        for _ in 0..300 {
            let mid = 0.5 * (lo + hi);
            if h(mid) < x {
                lo = mid
            } else {
                hi = mid
            }
        }
        let oracle = 0.5 * (lo + hi) / x;
        let c = ConjugateSv::new(phi).unwrap();
        let got = c.eval(x).unwrap();
        assert!((got / oracle - 1.0).abs() < 1e-9, "{got} vs {oracle}");
        // phi*(x) sits above (log x)^2, approaching it only logarithmically.
        let lead = got / x.ln().powi(2);
        assert!(lead > 1.0 && lead < 2.0, "{lead}");
    }

    #[test]
    fn conjugate_cache_is_bit_stable() {
        let c = ConjugateSv::new(SvFunc::log_pow(-1.5).unwrap()).unwrap();
        let a = c.eval(12345.0).unwrap();
        let b = c.eval(12345.0).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        let d = c.clone().eval(12345.0).unwrap();
        assert_eq!(a.to_bits(), d.to_bits());
    }
}
