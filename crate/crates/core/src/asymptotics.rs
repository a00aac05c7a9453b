//! Closed-form predictors for renewal, local-limit and large-deviation
//! asymptotics, plus the explicit Fuk-Nagaev bound.
//!
//! All predictors use the effective slowly varying function `φ` with
//! `P(τ₁ = n) = φ(n) n^{-1-α}`, i.e. with the normalizing constant folded in.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::interarrival::InterArrival;
use crate::numeric::CompensatedSum;
use crate::renewal_exact::RenewalTable;
use crate::sv_func::{ConjugateSv, SvFunc};

/// Renewal regime of an inter-arrival law.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum RegimeTag {
    Transient,
    FiniteMean,
    AlphaOne,
    AlphaIn01,
    AlphaZero,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Regime {
    pub tag: RegimeTag,
    pub alpha: Option<f64>,
    pub mean: Option<f64>,
    pub p_inf: f64,
}

pub fn regime(d: &InterArrival) -> Result<Regime> {
    let p_inf = d.p_inf();
    let alpha = d.alpha();
    let mean = d.mean();
    let tag = if p_inf > 0.0 {
        RegimeTag::Transient
    } else {
        match alpha {
            None if d.has_finite_support() => RegimeTag::FiniteMean,
            None => {
                return Err(Error::RegimeUnknown(
                    "law carries no regular-variation index".into(),
                ))
            }
            Some(a) if a > 1.0 => RegimeTag::FiniteMean,
            Some(a) if a == 1.0 => {
                if mean.is_some() {
                    RegimeTag::FiniteMean
                } else {
                    RegimeTag::AlphaOne
                }
            }
            Some(a) if a > 0.0 => RegimeTag::AlphaIn01,
            Some(_) => RegimeTag::AlphaZero,
        }
    };
    if tag == RegimeTag::FiniteMean && mean.is_none() {
        return Err(Error::RegimeUnknown("finite mean could not be certified".into()));
    }
    Ok(Regime {
        tag,
        alpha,
        mean,
        p_inf,
    })
}

fn phi_eff(d: &InterArrival) -> Result<&SvFunc> {
    d.phi_eff()
        .ok_or_else(|| Error::RegimeUnknown("law carries no slowly varying tag".into()))
}

fn require_alpha_zero(d: &InterArrival) -> Result<()> {
    let r = regime(d)?;
    if r.tag != RegimeTag::AlphaZero {
        return Err(Error::RegimeUnknown(format!(
            "predictor needs the recurrent alpha = 0 regime, got {:?}",
            r.tag
        )));
    }
    Ok(())
}

/// Predicted `u_n` for the law's regime.
pub fn predict_renewal_mass(d: &InterArrival, n: usize) -> Result<f64> {
    let r = regime(d)?;
    let f = d.f(n)?;
    match r.tag {
        RegimeTag::Transient => Ok(f / (r.p_inf * r.p_inf)),
        RegimeTag::FiniteMean => Ok(1.0 / r.mean.expect("checked in regime")),
        RegimeTag::AlphaOne => Ok(1.0 / d.truncated_mean(n)?),
        RegimeTag::AlphaIn01 => {
            let a = r.alpha.expect("tagged");
            let x = n as f64;
            Ok(doney_prefactor(a) * x.powf(a - 1.0) / phi_eff(d)?.eval(x))
        }
        RegimeTag::AlphaZero => {
            let t = d.tail(n)?;
            Ok(f / (t * t))
        }
    }
}

/// `α sin(πα) / π`.
pub fn doney_prefactor(alpha: f64) -> f64 {
    alpha * (std::f64::consts::PI * alpha).sin() / std::f64::consts::PI
}

/// `k f_n (1 - r_n)^k`.
pub fn predict_local_pmf(d: &InterArrival, k: usize, n: usize) -> Result<f64> {
    Ok(ln_predict_local_pmf(d, k, n)?.exp())
}

pub fn ln_predict_local_pmf(d: &InterArrival, k: usize, n: usize) -> Result<f64> {
    require_alpha_zero(d)?;
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    let f = d.f(n)?;
    let r = d.tail(n)?;
    Ok((k as f64).ln() + f.ln() + k as f64 * (-r).ln_1p())
}

/// `k = ⌊1 / sqrt(φ(n) r(n))⌋`, the canonical local-limit step count.
pub fn local_limit_k(d: &InterArrival, n: usize) -> Result<usize> {
    let phi = phi_eff(d)?.eval(n as f64);
    let r = d.tail(n)?;
    Ok(((1.0 / (phi * r).sqrt()).floor() as usize).max(1))
}

/// Limit law `1 - e^{-y}` of `k r(τ_k)`.
pub fn darling_cdf(y: f64) -> f64 {
    if y <= 0.0 {
        0.0
    } else {
        -(-y).exp_m1()
    }
}

/// `k r((n/k) φ*(n/k))` and whether `r` was read past the horizon.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LdRate {
    pub value: f64,
    pub argument: f64,
    pub extrapolated: bool,
}

/// Conjugate of the law's effective `φ`.
pub fn conjugate_for(d: &InterArrival) -> Result<ConjugateSv> {
    ConjugateSv::new(phi_eff(d)?.clone())
}

pub fn ld_rate(d: &InterArrival, n: usize, k: usize) -> Result<LdRate> {
    ld_rate_with(d, &conjugate_for(d)?, n, k)
}

pub fn ld_rate_with(d: &InterArrival, conj: &ConjugateSv, n: usize, k: usize) -> Result<LdRate> {
    require_alpha_zero(d)?;
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    let x = n as f64 / k as f64;
    let arg = x * conj.eval(x)?;
    let t = d.tail_extended(arg)?;
    Ok(LdRate {
        value: k as f64 * t.value,
        argument: arg,
        extrapolated: t.extrapolated,
    })
}

/// Per-step Cramér rate of `{τ_k <= b k}` and its large-`b` asymptote.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RateFunction {
    pub b: f64,
    pub lambda: f64,
    /// `I(b) = sup_λ [-λ b - ln(1 - ν(λ))]`, so `P(τ_k <= bk) = e^{-k I(b) + o(k)}`.
    pub value: f64,
    /// `r(b φ*(b))`.
    pub asymptote: f64,
    pub asymptote_extrapolated: bool,
}

/// Cramér rate at `b`, solving `ν'(λ)/(1 - ν(λ)) = b` on the full law.
pub fn rate_function(d: &InterArrival, b: f64) -> Result<RateFunction> {
    require_alpha_zero(d)?;
    let lo_support = d.support_min() as f64;
    if !(b > lo_support) {
        return Err(Error::TargetOutOfRange {
            target: b,
            lo: lo_support,
            hi: f64::INFINITY,
        });
    }
    let mean = |l: f64| -> Result<f64> {
        let p = d.laplace(l)?;
        Ok(p.nu_prime / (1.0 - p.nu))
    };
    // The tilted mean is infinite at λ = 0 and decreases to support_min.
    let (mut lo, mut hi) = (1.0f64, 1.0f64);
    while mean(hi)? > b {
        hi *= 2.0;
    }
    while mean(lo)? < b {
        lo *= 0.5;
        if lo < 1e-300 {
            return Err(Error::NonMonotoneBracket { lo, hi });
        }
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if mean(mid)? > b {
            lo = mid
        } else {
            hi = mid
        }
        if hi / lo - 1.0 < 1e-13 {
            break;
        }
    }
    let lambda = (lo * hi).sqrt();
    let p = d.laplace(lambda)?;
    let value = -lambda * b - (-p.nu).ln_1p();
    let conj = conjugate_for(d)?;
    let t = d.tail_extended(b * conj.eval(b)?)?;
    Ok(RateFunction {
        b,
        lambda,
        value,
        asymptote: t.value,
        asymptote_extrapolated: t.extrapolated,
    })
}

/// Lower constant `a_M`: `1 - 2M` for `M <= 1/3`, else `(1/2)(1/(4M))^{2M}`.
pub fn extdarling_lower_const(m: f64) -> f64 {
    if m <= 1.0 / 3.0 {
        1.0 - 2.0 * m
    } else {
        0.5 * (1.0 / (4.0 * m)).powf(2.0 * m)
    }
}

/// `c₅ = sup_{j <= m} E[τ₁ | τ₁ <= j] / (j φ(j))`.
pub fn fuk_nagaev_constant(d: &InterArrival, m: usize) -> Result<f64> {
    let phi = phi_eff(d)?;
    let mut c: f64 = 0.0;
    for j in d.support_min()..=m {
        let mass = d.cdf(j)?;
        let cm = d.truncated_moment(j, 1)? / mass;
        c = c.max(cm / (j as f64 * phi.eval(j as f64)));
    }
    Ok(c)
}

/// `min(1, (c₅ e² k m φ(m) / n)^{n/(2m)})`.
pub fn fuk_nagaev_bound(d: &InterArrival, k: usize, m: usize, n: usize) -> Result<f64> {
    fuk_nagaev_bound_with(d, fuk_nagaev_constant(d, m)?, k, m, n)
}

pub fn fuk_nagaev_bound_with(d: &InterArrival, c5: f64, k: usize, m: usize, n: usize) -> Result<f64> {
    if m < 1 || m > n {
        return Err(Error::InvalidArgument(format!("need 1 <= m <= n, got m = {m}, n = {n}")));
    }
    let phi = phi_eff(d)?.eval(m as f64);
    let base = c5 * std::f64::consts::E.powi(2) * k as f64 * m as f64 * phi / n as f64;
    let ln_bound = (n as f64 / (2.0 * m as f64)) * base.ln();
    Ok(ln_bound.min(0.0).exp())
}

/// `((1/⌊εn⌋) Σ_{(1-ε)n < j <= n} f_j, r(n)² u_n)`.
pub fn reverse_avg_pair(d: &InterArrival, u: &RenewalTable, n: usize, eps: f64) -> Result<(f64, f64)> {
    let w = (eps * n as f64).floor() as usize;
    if w < 1 || !(eps < 1.0) {
        return Err(Error::InvalidArgument(format!("eps n = {} must be >= 1", eps * n as f64)));
    }
    let start = ((1.0 - eps) * n as f64).floor() as usize + 1;
    d.f(n)?;
    let s: CompensatedSum = (start..=n).map(|j| d.pmf()[j]).collect();
    let r = d.tail(n)?;
    Ok((s.value() / w as f64, r * r * u.u_at(n)?))
}

/// Karamata ratio test on `U_n` and the `U_n r(n) → 1` comparison along `n = 10^j`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlowVariationReport {
    pub grid: Vec<usize>,
    /// `|U_{2n}/U_n - 1|`.
    pub karamata: Vec<f64>,
    /// `U_n r(n)`.
    pub product: Vec<f64>,
    pub slowly_varying: bool,
    pub product_trend_to_one: bool,
}

/// Deviation ceiling at the last grid point for `U` to be reported slowly varying.
pub const SLOW_VARIATION_FLAG: f64 = 0.25;

pub fn slow_variation_check_u(u: &RenewalTable, d: &InterArrival) -> SlowVariationReport {
    let n_max = u.horizon().min(d.horizon());
    let mut grid = Vec::new();
    let mut n = 10usize;
    while 2 * n <= n_max {
        grid.push(n);
        n *= 10;
    }
    let big_u = u.cumulative();
    let karamata: Vec<f64> = grid.iter().map(|&n| (big_u[2 * n] / big_u[n] - 1.0).abs()).collect();
    let product: Vec<f64> = grid.iter().map(|&n| big_u[n] * d.tails()[n]).collect();
    let nonincreasing = |v: &[f64]| v.windows(2).all(|w| w[1] <= w[0]);
    let slowly_varying =
        !karamata.is_empty() && nonincreasing(&karamata) && *karamata.last().unwrap() < SLOW_VARIATION_FLAG;
    let dev: Vec<f64> = product.iter().map(|p| (p - 1.0).abs()).collect();
    let product_trend_to_one = !dev.is_empty() && nonincreasing(&dev);
    SlowVariationReport {
        grid,
        karamata,
        product,
        slowly_varying,
        product_trend_to_one,
    }
}
