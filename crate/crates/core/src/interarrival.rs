//! Inter-arrival laws on the positive integers with a finite stored horizon.
//!
//! Every law carries `f_1..f_N`, the exact residual mass past the horizon,
//! the defect `p_inf` at infinity and, when the family is known, an analytic
//! model of the tail past `N`. Tail, truncated-moment and Laplace queries are
//! served from precomputed compensated prefix/suffix sums.
//!
//! JSON distribution specs:
//!
//! ```text
//! {"family":"regvar","alpha":0.0,"phi":{"kind":"logpow","a":-2.0},"support_min":1,"horizon":100000}
//! {"family":"interleaved","sigma":{...}}
//! {"family":"defective","p_inf":0.3,"base":{...}}
//! {"family":"explicit","pmf":[0.5,0.5]}                  // f_1, f_2, ...
//! {"family":"builtin","name":"d0","horizon":100000}
//! ```
//!
//! `explicit` also accepts `"horizon"` (zero padding) and `"p_inf"`.
//! Built-in names: `d0`, `doney_half`, `ssrw_z2`, `uniform12`, `delta1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{gcd, CompensatedSum};
use crate::sv_func::SvFunc;
use crate::tail::{RegVarTail, TailModel};

/// Tolerance of the mass-conservation identity.
pub const MASS_TOL: f64 = 1e-12;
/// Relative width of the Laplace horizon-correction interval that is accepted.
pub const LAPLACE_TAIL_TOL: f64 = 1e-8;

/// Which builder produced a law.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    RegVar,
    Interleaved,
    Defective,
    Explicit,
}

/// A law on `{1, 2, ...} ∪ {∞}` stored up to a horizon.
#[derive(Clone, Debug)]
pub struct InterArrival {
    family: Family,
    /// `pmf[n] = f_n`, `pmf[0] = 0`.
    pmf: Vec<f64>,
    tail_at_horizon: f64,
    tail_error: f64,
    p_inf: f64,
    alpha: Option<f64>,
    phi: Option<SvFunc>,
    phi_eff: Option<SvFunc>,
    support_min: usize,
    /// `r[n] = P(τ₁ > n)`, including the defect.
    r: Vec<f64>,
    m1: Vec<f64>,
    m2: Vec<f64>,
    tail_model: Option<TailModel>,
}

/// `ν(λ) = 1 - E e^{-λτ₁}` and `ν'(λ)` with their horizon-correction intervals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaplacePair {
    pub lambda: f64,
    pub nu: f64,
    pub nu_prime: f64,
    pub nu_interval: (f64, f64),
    pub nu_prime_interval: (f64, f64),
}

/// Value of `r(x)` possibly read from the analytic continuation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TailValue {
    pub value: f64,
    pub extrapolated: bool,
}

fn prefix(pmf: &[f64], w: impl Fn(usize) -> f64) -> Vec<f64> {
    let mut acc = CompensatedSum::new();
    pmf.iter()
        .enumerate()
        .map(|(n, f)| {
            acc.add(w(n) * f);
            acc.value()
        })
        .collect()
}

impl InterArrival {
    fn assemble(
        family: Family,
        pmf: Vec<f64>,
        tail_at_horizon: f64,
        tail_error: f64,
        p_inf: f64,
        alpha: Option<f64>,
        phi: Option<SvFunc>,
        phi_eff: Option<SvFunc>,
        tail_model: Option<TailModel>,
    ) -> Result<Self> {
        if pmf.len() < 2 {
            return Err(Error::InvalidPmf("empty pmf".into()));
        }
        if let Some(bad) = pmf.iter().position(|f| !(*f >= 0.0) || !f.is_finite()) {
            return Err(Error::InvalidPmf(format!("entry {bad} is negative or not finite")));
        }
        let support_min = pmf
            .iter()
            .position(|f| *f > 0.0)
            .ok_or_else(|| Error::InvalidPmf("no mass inside the horizon".into()))?;
        let n_max = pmf.len() - 1;
        let mut r = vec![0.0; n_max + 1];
        let mut acc = CompensatedSum::new();
        acc.add(p_inf);
        acc.add(tail_at_horizon);
        r[n_max] = acc.value();
        for n in (0..n_max).rev() {
            acc.add(pmf[n + 1]);
            r[n] = acc.value();
        }
        let m1 = prefix(&pmf, |n| n as f64);
        let m2 = prefix(&pmf, |n| (n as f64) * (n as f64));
        Ok(Self {
            family,
            pmf,
            tail_at_horizon,
            tail_error,
            p_inf,
            alpha,
            phi,
            phi_eff,
            support_min,
            r,
            m1,
            m2,
            tail_model,
        })
    }

    /// `f_n = C φ(n) n^{-1-α}` for `n >= support_min`, normalized to a proper law.
    pub fn regvar(alpha: f64, phi: SvFunc, support_min: usize, horizon: usize) -> Result<Self> {
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidArgument(format!("alpha = {alpha} must be >= 0")));
        }
        if support_min < 1 {
            return Err(Error::InvalidArgument("support_min must be >= 1".into()));
        }
        if horizon < 10 * support_min {
            return Err(Error::InvalidArgument(format!(
                "horizon {horizon} must be at least 10 * support_min"
            )));
        }
        let tail = RegVarTail::new(phi.clone(), alpha, horizon)?;
        let mut pmf = vec![0.0; horizon + 1];
        for (n, f) in pmf.iter_mut().enumerate().skip(support_min) {
            let x = n as f64;
            *f = phi.eval(x) * x.powf(-1.0 - alpha);
        }
        let (rest, rest_err) = tail.unnormalized_tail(horizon);
        let mut total: CompensatedSum = pmf.iter().copied().collect();
        total.add(rest);
        let c = 1.0 / total.value();
        for f in pmf.iter_mut() {
            *f *= c;
        }
        let model = TailModel::RegVar(tail.normalized(c));
        let phi_eff = phi.scaled(c)?;
        Self::assemble(
            Family::RegVar,
            pmf,
            c * rest,
            c * rest_err,
            0.0,
            Some(alpha),
            Some(phi),
            Some(phi_eff),
            Some(model),
        )
    }

    /// Same gaps scaled by `1 - p_inf`, with mass `p_inf` at infinity.
    pub fn defective(base: &InterArrival, p_inf: f64) -> Result<Self> {
        if !(p_inf > 0.0 && p_inf < 1.0) {
            return Err(Error::InvalidArgument(format!("p_inf = {p_inf} not in (0, 1)")));
        }
        if base.p_inf > 0.0 {
            return Err(Error::InvalidArgument("base law must be recurrent".into()));
        }
        let keep = 1.0 - p_inf;
        let pmf = base.pmf.iter().map(|f| keep * f).collect();
        let model = base.tail_model.clone().map(|m| TailModel::Scaled {
            base: Box::new(m),
            keep,
        });
        let phi_eff = match &base.phi_eff {
            Some(p) => Some(p.scaled(keep)?),
            None => None,
        };
        Self::assemble(
            Family::Defective,
            pmf,
            keep * base.tail_at_horizon,
            keep * base.tail_error,
            p_inf,
            base.alpha,
            base.phi.clone(),
            phi_eff,
            model,
        )
    }

    /// `τ₁ = 1` or `2σ₁` with probability 1/2 each.
    pub fn interleaved(sigma: &InterArrival) -> Result<Self> {
        if sigma.p_inf > 0.0 || sigma.alpha != Some(0.0) {
            return Err(Error::InvalidArgument(
                "interleaving needs a recurrent alpha = 0 law".into(),
            ));
        }
        let n_sigma = sigma.horizon();
        let mut pmf = vec![0.0; 2 * n_sigma + 1];
        pmf[1] = 0.5;
        for m in 1..=n_sigma {
            pmf[2 * m] += 0.5 * sigma.pmf[m];
        }
        let model = sigma
            .tail_model
            .clone()
            .map(|m| TailModel::Interleaved(Box::new(m)));
        Self::assemble(
            Family::Interleaved,
            pmf,
            0.5 * sigma.tail_at_horizon,
            0.5 * sigma.tail_error,
            0.0,
            None,
            None,
            None,
            model,
        )
    }

    /// A user-supplied finite-support law; `pmf[i]` is `f_{i+1}`.
    ///
    /// The stored horizon is `max(horizon, pmf.len())`. Periodic supports are rejected.
    pub fn explicit(pmf: &[f64], horizon: Option<usize>, p_inf: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&p_inf) {
            return Err(Error::InvalidArgument(format!("p_inf = {p_inf} not in [0, 1)")));
        }
        let n = horizon.unwrap_or(0).max(pmf.len());
        let mut f = vec![0.0; n + 1];
        f[1..=pmf.len()].copy_from_slice(pmf);
        let mut total: CompensatedSum = f.iter().copied().collect();
        total.add(p_inf);
        if (total.value() - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidPmf(format!(
                "total mass {} differs from 1",
                total.value()
            )));
        }
        let g = f
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > 0.0)
            .fold(0, |g, (i, _)| gcd(g, i));
        if g > 1 {
            return Err(Error::Periodic(g));
        }
        Self::assemble(
            Family::Explicit,
            f,
            0.0,
            0.0,
            p_inf,
            None,
            None,
            None,
            None,
        )
    }

    /// Index-0 law `f_n ∝ 1/(n log²(n + e))`.
    pub fn d0(horizon: usize) -> Result<Self> {
        Self::regvar(0.0, SvFunc::log_pow(-2.0)?, 1, horizon)
    }

    /// `f_n ∝ n^{-3/2}`.
    pub fn doney_half(horizon: usize) -> Result<Self> {
        Self::regvar(0.5, SvFunc::constant(1.0)?, 1, horizon)
    }

    /// Asymptotic return-time family of the planar simple random walk, `π/(n log²(n + e))`.
    pub fn ssrw_z2(horizon: usize) -> Result<Self> {
        let phi = SvFunc::log_pow(-2.0)?.scaled(std::f64::consts::PI)?;
        Self::regvar(0.0, phi, 1, horizon)
    }

    pub fn uniform12(horizon: usize) -> Result<Self> {
        Self::explicit(&[0.5, 0.5], Some(horizon), 0.0)
    }

    pub fn delta1(horizon: usize) -> Result<Self> {
        Self::explicit(&[1.0], Some(horizon), 0.0)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn horizon(&self) -> usize {
        self.pmf.len() - 1
    }

    /// `f_0..f_N` with `f_0 = 0`.
    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn f(&self, n: usize) -> Result<f64> {
        self.pmf.get(n).copied().ok_or(Error::HorizonExceeded {
            index: n,
            horizon: self.horizon(),
        })
    }

    /// Finite mass beyond the horizon.
    pub fn tail_at_horizon(&self) -> f64 {
        self.tail_at_horizon
    }

    /// Certified error on [`Self::tail_at_horizon`].
    pub fn tail_error(&self) -> f64 {
        self.tail_error
    }

    pub fn p_inf(&self) -> f64 {
        self.p_inf
    }

    pub fn alpha(&self) -> Option<f64> {
        self.alpha
    }

    /// The slowly varying tag as supplied to the builder.
    pub fn phi(&self) -> Option<&SvFunc> {
        self.phi.as_ref()
    }

    /// `φ` with the normalizing constant folded in, so `f_n = φ_eff(n) n^{-1-α}`.
    pub fn phi_eff(&self) -> Option<&SvFunc> {
        self.phi_eff.as_ref()
    }

    pub fn support_min(&self) -> usize {
        self.support_min
    }

    pub fn is_recurrent(&self) -> bool {
        self.p_inf == 0.0
    }

    /// True when no mass lies strictly between the horizon and infinity.
    pub fn has_finite_support(&self) -> bool {
        self.tail_at_horizon == 0.0 && self.tail_model.is_none()
    }

    /// `r(n) = P(τ₁ > n)`.
    pub fn tail(&self, n: usize) -> Result<f64> {
        self.r.get(n).copied().ok_or(Error::HorizonExceeded {
            index: n,
            horizon: self.horizon(),
        })
    }

    /// `r(0..=N)`.
    pub fn tails(&self) -> &[f64] {
        &self.r
    }

    /// `r(x)` for real `x >= 0`, using the analytic tail past the horizon.
    pub fn tail_extended(&self, x: f64) -> Result<TailValue> {
        let n = self.horizon();
        if x < n as f64 + 1.0 {
            let i = x.max(0.0).floor() as usize;
            return Ok(TailValue {
                value: self.r[i.min(n)],
                extrapolated: false,
            });
        }
        self.tail_extended_log(x.ln())
    }

    /// `r(e^s)` for `e^s` at or past the horizon.
    pub fn tail_extended_log(&self, s: f64) -> Result<TailValue> {
        let n = self.horizon();
        if s <= (n as f64).ln() {
            return self.tail_extended(s.exp());
        }
        match &self.tail_model {
            Some(m) => Ok(TailValue {
                value: self.p_inf + m.tail_log(s),
                extrapolated: true,
            }),
            None if self.tail_at_horizon == 0.0 => Ok(TailValue {
                value: self.p_inf,
                extrapolated: false,
            }),
            None => Err(Error::HorizonExceeded {
                index: s.exp().min(usize::MAX as f64) as usize,
                horizon: n,
            }),
        }
    }

    /// Log-gap `s` with `P(G > e^s | N < G < ∞) = u`, for overflowing samples.
    pub(crate) fn overflow_log_gap(&self, u: f64) -> Option<f64> {
        let m = self.tail_model.as_ref()?;
        let t0 = m.tail_log((self.horizon() as f64).ln());
        Some(m.invert_log(u * t0))
    }

    /// `E[τ₁^j ; τ₁ <= m]` for `j ∈ {1, 2}`.
    pub fn truncated_moment(&self, m: usize, j: u32) -> Result<f64> {
        let table = match j {
            1 => &self.m1,
            2 => &self.m2,
            _ => return Err(Error::InvalidArgument(format!("moment order {j} not in {{1, 2}}"))),
        };
        table.get(m).copied().ok_or(Error::HorizonExceeded {
            index: m,
            horizon: self.horizon(),
        })
    }

    /// `P(τ₁ <= m)`.
    pub fn cdf(&self, m: usize) -> Result<f64> {
        Ok(1.0 - self.tail(m)?)
    }

    /// `E[τ₁ ∧ n] = Σ_{j<n} r(j)`.
    pub fn truncated_mean(&self, n: usize) -> Result<f64> {
        if n > self.horizon() {
            return Err(Error::HorizonExceeded {
                index: n,
                horizon: self.horizon(),
            });
        }
        Ok(self.r[..n].iter().copied().collect::<CompensatedSum>().value())
    }

    /// `E[τ₁]` when finite and certifiable, including the analytic tail.
    pub fn mean(&self) -> Option<f64> {
        if self.p_inf > 0.0 {
            return None;
        }
        let n = self.horizon();
        if self.has_finite_support() {
            return Some(self.m1[n]);
        }
        let (t, _) = self.tail_model.as_ref()?.moment_tail(n, 1)?;
        Some(self.m1[n] + t)
    }

    /// `|Σ f + r_N + p_inf - 1|`.
    pub fn mass_defect(&self) -> f64 {
        let mut s: CompensatedSum = self.pmf.iter().copied().collect();
        s.add(self.tail_at_horizon);
        s.add(self.p_inf);
        (s.value() - 1.0).abs()
    }

    /// Laplace pair with a horizon correction carried as an interval.
    pub fn laplace(&self, lambda: f64) -> Result<LaplacePair> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("lambda = {lambda} must be > 0")));
        }
        let n = self.horizon();
        let mut s0 = CompensatedSum::new();
        let mut s1 = CompensatedSum::new();
        for (j, f) in self.pmf.iter().enumerate().skip(self.support_min) {
            let w = f * (-lambda * j as f64).exp();
            s0.add(w);
            s1.add(j as f64 * w);
        }
        let (t0, t1) = self.laplace_tail(lambda)?;
        let nu_lo = 1.0 - s0.value() - t0.1;
        let nu_hi = 1.0 - s0.value() - t0.0;
        let nup_lo = s1.value() + t1.0;
        let nup_hi = s1.value() + t1.1;
        let nu = 0.5 * (nu_lo + nu_hi);
        let nu_prime = 0.5 * (nup_lo + nup_hi);
        let check = |v: f64, lo: f64, hi: f64| {
            if hi - lo > LAPLACE_TAIL_TOL * v.abs() {
                Err(Error::TailDominates {
                    value: v,
                    correction: hi - lo,
                })
            } else {
                Ok(())
            }
        };
        check(nu, nu_lo, nu_hi)?;
        check(nu_prime, nup_lo, nup_hi)?;
        let _ = n;
        Ok(LaplacePair {
            lambda,
            nu,
            nu_prime,
            nu_interval: (nu_lo, nu_hi),
            nu_prime_interval: (nup_lo, nup_hi),
        })
    }

    /// Intervals for `Σ_{n>N} f_n e^{-λn}` and `Σ_{n>N} n f_n e^{-λn}`.
    fn laplace_tail(&self, lambda: f64) -> Result<((f64, f64), (f64, f64))> {
        let n = self.horizon();
        if self.tail_at_horizon == 0.0 {
            return Ok(((0.0, 0.0), (0.0, 0.0)));
        }
        if let Some(m) = &self.tail_model {
            let (e0, d0) = m.laplace_tail(n, lambda, 0);
            let (e1, d1) = m.laplace_tail(n, lambda, 1);
            return Ok(((e0 - d0, e0 + d0), (e1 - d1, e1 + d1)));
        }
        // Crude bound from the residual mass alone.
        let x = (n + 1) as f64;
        let decay = (-lambda * x).exp();
        let b0 = (self.tail_at_horizon + self.tail_error) * decay;
        if lambda * x < 1.0 {
            return Err(Error::TailDominates {
                value: 0.0,
                correction: f64::INFINITY,
            });
        }
        Ok(((0.0, b0), (0.0, x * b0)))
    }

    #[cfg(test)]
    pub(crate) fn drop_tail_model(&mut self) {
        self.tail_model = None;
    }

    /// Copy with `f_n` shifted by `delta` and nothing renormalized.
    #[doc(hidden)]
    pub fn with_pmf_perturbation(&self, n: usize, delta: f64) -> Self {
        let mut out = self.clone();
        out.pmf[n] += delta;
        out
    }
}

/// Serializable description of an inter-arrival law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum DistSpec {
    RegVar {
        alpha: f64,
        phi: SvFunc,
        #[serde(default = "one")]
        support_min: usize,
        horizon: usize,
    },
    Interleaved {
        sigma: Box<DistSpec>,
    },
    Defective {
        p_inf: f64,
        base: Box<DistSpec>,
    },
    Explicit {
        pmf: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        horizon: Option<usize>,
        #[serde(default, skip_serializing_if = "is_zero")]
        p_inf: f64,
    },
    Builtin {
        name: String,
        horizon: usize,
    },
}

fn one() -> usize {
    1
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

impl DistSpec {
    pub fn build(&self) -> Result<InterArrival> {
        match self {
            DistSpec::RegVar {
                alpha,
                phi,
                support_min,
                horizon,
            } => InterArrival::regvar(*alpha, phi.clone(), *support_min, *horizon),
            DistSpec::Interleaved { sigma } => InterArrival::interleaved(&sigma.build()?),
            DistSpec::Defective { p_inf, base } => InterArrival::defective(&base.build()?, *p_inf),
            DistSpec::Explicit {
                pmf,
                horizon,
                p_inf,
            } => InterArrival::explicit(pmf, *horizon, *p_inf),
            DistSpec::Builtin { name, horizon } => match name.as_str() {
                "d0" => InterArrival::d0(*horizon),
                "doney_half" => InterArrival::doney_half(*horizon),
                "ssrw_z2" => InterArrival::ssrw_z2(*horizon),
                "uniform12" => InterArrival::uniform12(*horizon),
                "delta1" => InterArrival::delta1(*horizon),
                other => Err(Error::Config(format!("unknown built-in distribution '{other}'"))),
            },
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn d0_mass_and_tail() {
        let d = InterArrival::d0(100_000).unwrap();
        assert!(d.mass_defect() < MASS_TOL);
        assert_eq!(d.support_min(), 1);
        assert_relative_eq!(d.tail(100_000).unwrap(), d.tail_at_horizon());
        // r(n) log(n + e) approaches the normalizing constant.
        let c = d.phi_eff().unwrap().eval(1.0) / d.phi().unwrap().eval(1.0);
        let dev = |n: usize| (d.tail(n).unwrap() * (n as f64 + std::f64::consts::E).ln() / c - 1.0).abs();
        assert!(dev(100_000) < dev(1_000));
        assert!(dev(1_000) < dev(10));
    }

    #[test]
    fn regvar_tail_matches_long_direct_sum() {
        // Oracle: explicit summation of the same unnormalized series to 4·10^6.
        let short = InterArrival::d0(1000).unwrap();
        let c = short.pmf()[1] / SvFunc::log_pow(-2.0).unwrap().eval(1.0);
        let phi = SvFunc::log_pow(-2.0).unwrap();
        let mut s = CompensatedSum::new();
        for j in 1001..=4_000_000u64 {
            let x = j as f64;
            s.add(c * phi.eval(x) / x);
        }
        let far = InterArrival::d0(4_000_000).unwrap();
        let c_far = far.pmf()[1] / phi.eval(1.0);
        s.add(far.tail_at_horizon() * c / c_far);
        assert_relative_eq!(short.tail_at_horizon(), s.value(), max_relative = 1e-9);
    }

    #[test]
    fn doney_half_ratio() {
        let d = InterArrival::doney_half(1000).unwrap();
        assert_relative_eq!(d.pmf()[1] / d.pmf()[2], 2f64.powf(1.5), max_relative = 1e-14);
        assert_eq!(d.alpha(), Some(0.5));
    }

    #[test]
    fn support_shift() {
        let d = InterArrival::regvar(0.0, SvFunc::log_pow(-2.0).unwrap(), 5, 100).unwrap();
        assert_eq!(d.support_min(), 5);
        assert!(d.pmf()[..5].iter().all(|f| *f == 0.0));
        assert!(d.mass_defect() < MASS_TOL);
    }

    #[test]
    fn not_normalizable() {
        let e = InterArrival::regvar(0.0, SvFunc::constant(1.0).unwrap(), 1, 100).unwrap_err();
        assert_eq!(e.name(), "NotNormalizable");
    }

    #[test]
    fn defective_geometric() {
        let d = InterArrival::defective(&InterArrival::delta1(10).unwrap(), 0.5).unwrap();
        for n in 1..=10 {
            assert_eq!(d.tail(n).unwrap(), 0.5);
        }
        assert!(d.tail_extended(1e6).unwrap().value >= 0.5);
        let d0 = InterArrival::defective(&InterArrival::d0(1000).unwrap(), 0.3).unwrap();
        assert!(d0.mass_defect() < MASS_TOL);
        assert!(!d0.is_recurrent());
    }

    #[test]
    fn interleaved_structure() {
        let sigma = InterArrival::d0(1000).unwrap();
        let t = InterArrival::interleaved(&sigma).unwrap();
        assert_eq!(t.pmf()[1], 0.5);
        assert_eq!(t.pmf()[3], 0.0);
        assert!(t.pmf().iter().skip(3).step_by(2).all(|f| *f == 0.0));
        assert_eq!(t.horizon(), 2000);
        assert!(t.mass_defect() < MASS_TOL);
        for n in [100usize, 500, 999] {
            let ratio = t.tail(2 * n).unwrap() / sigma.tail(n).unwrap();
            assert_relative_eq!(ratio, 0.5, max_relative = 1e-12);
        }
    }

    #[test]
    fn explicit_validation() {
        assert_eq!(
            InterArrival::explicit(&[0.0, 0.5, 0.0, 0.5], None, 0.0).unwrap_err(),
            Error::Periodic(2)
        );
        assert!(InterArrival::explicit(&[0.5, 0.4], None, 0.0).is_err());
        assert!(InterArrival::explicit(&[-0.5, 1.5], None, 0.0).is_err());
        let d = InterArrival::uniform12(50).unwrap();
        assert_eq!(d.horizon(), 50);
        assert_eq!(d.tail(1).unwrap(), 0.5);
        assert_eq!(d.tail(2).unwrap(), 0.0);
    }

    #[test]
    fn tail_queries() {
        let d = InterArrival::delta1(5).unwrap();
        assert_eq!(d.tail(1).unwrap(), 0.0);
        assert!(matches!(d.tail(6), Err(Error::HorizonExceeded { .. })));
        assert_eq!(d.truncated_moment(3, 2).unwrap(), 1.0);
        assert_eq!(d.mean(), Some(1.0));
    }

    #[test]
    fn truncated_mean_of_d0_tracks_m_phi_m() {
        // Oracle: direct summation of j f_j; ratio to m φ_eff(m) should fall toward 1.
        let d = InterArrival::d0(100_000).unwrap();
        let phi = d.phi_eff().unwrap();
        let dev = |m: usize| {
            let direct: CompensatedSum = (1..=m).map(|j| j as f64 * d.pmf()[j]).collect();
            assert_relative_eq!(direct.value(), d.truncated_moment(m, 1).unwrap(), max_relative = 1e-12);
            (direct.value() / (m as f64 * phi.eval(m as f64)) - 1.0).abs()
        };
        assert!(dev(100_000) < dev(1_000));
    }

    #[test]
    fn laplace_closed_form_delta() {
        let d = InterArrival::delta1(100).unwrap();
        for l in [0.01, 0.5, 3.0] {
            let p = d.laplace(l).unwrap();
            assert_relative_eq!(p.nu, 1.0 - (-l).exp(), max_relative = 1e-14);
            assert_relative_eq!(p.nu_prime, (-l).exp(), max_relative = 1e-14);
        }
    }

    #[test]
    fn laplace_d0_matches_tail_scale() {
        let d = InterArrival::d0(100_000).unwrap();
        let p = d.laplace(1e-4).unwrap();
        let ratio = p.nu / d.tail(10_000).unwrap();
        assert!((0.5..=2.0).contains(&ratio), "{ratio}");
        // Tail correction at λN = 10 is dominated by the analytic model, not the crude bound.
        assert!(p.nu_interval.1 - p.nu_interval.0 < 1e-12);
    }

    #[test]
    fn laplace_without_model_needs_decay() {
        let d = InterArrival::explicit(&[0.5, 0.5], None, 0.0).unwrap();
        assert!(d.laplace(1e-6).is_ok());
        let e = InterArrival::d0(100).unwrap();
        let mut crude = e.clone();
        crude.tail_model = None;
        assert_eq!(crude.laplace(1e-4).unwrap_err().name(), "TailDominates");
    }

    #[test]
    fn spec_round_trip() {
        let j = r#"{"family":"defective","p_inf":0.3,"base":{"family":"regvar","alpha":0.0,"phi":{"kind":"logpow","a":-2.0},"horizon":1000}}"#;
        let s = DistSpec::from_json(j).unwrap();
        let d = s.build().unwrap();
        assert_eq!(d.family(), Family::Defective);
        let back = serde_json::to_string(&s).unwrap();
        assert_eq!(DistSpec::from_json(&back).unwrap(), s);
        let b = DistSpec::from_json(r#"{"family":"builtin","name":"uniform12","horizon":10}"#)
            .unwrap()
            .build()
            .unwrap();
        assert_eq!(b.horizon(), 10);
    }
}
